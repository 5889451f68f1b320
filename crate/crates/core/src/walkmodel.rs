//! Coin pairs, lattice states and one-step dynamics on ℤ.
//!
//! A coin pair `(L, R)` drives both walks: the open walk conjugates density
//! blocks, `η_i = R ρ_{i-1} R* + L ρ_{i+1} L*`, and the coined unitary walk
//! moves amplitudes, `ψ'_i = R ψ_{i-1} + L ψ_{i+1}`. `R` moves right.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QwalkError, Result};
use crate::matkernel::{c64, spinor_norm_sqr, Mat2, Spinor, C64, EXACT_TOL};

/// Algebraic properties of a coin pair, computed once at validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoinFlags {
    pub trace_preserving: bool,
    pub unital: bool,
    pub unitary_sum: bool,
    pub left_normal: bool,
    pub right_normal: bool,
    pub pq: bool,
}

/// A validated pair of transition matrices with `L*L + R*R = I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoinPair {
    left: Mat2,
    right: Mat2,
    flags: CoinFlags,
}

/// One nearest-neighbour move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    Left,
    Right,
}

impl Step {
    pub fn offset(self) -> i64 {
        match self {
            Step::Left => -1,
            Step::Right => 1,
        }
    }

    pub fn mirrored(self) -> Step {
        match self {
            Step::Left => Step::Right,
            Step::Right => Step::Left,
        }
    }
}

fn off_pattern_mass(m: &Mat2, diagonal: bool) -> f64 {
    if diagonal {
        m[(0, 1)].norm().max(m[(1, 0)].norm())
    } else {
        m[(0, 0)].norm().max(m[(1, 1)].norm())
    }
}

/// In dimension 2 a PQ-matrix is diagonal or antidiagonal; the pair is PQ
/// when each matrix has one of the two patterns.
pub fn is_pq_pair(left: &Mat2, right: &Mat2) -> bool {
    let pq = |m: &Mat2| off_pattern_mass(m, true) <= EXACT_TOL || off_pattern_mass(m, false) <= EXACT_TOL;
    pq(left) && pq(right)
}

/// Validate a coin pair and compute its flags.
pub fn validate_coin_pair(left: Mat2, right: Mat2) -> Result<CoinPair> {
    CoinPair::new(left, right)
}

impl CoinPair {
    pub fn new(left: Mat2, right: Mat2) -> Result<Self> {
        if !left.is_finite() || !right.is_finite() {
            return Err(QwalkError::InvalidInput("coin entries must be finite".into()));
        }
        let id = Mat2::identity();
        let tp_dev = (left.adjoint() * left + right.adjoint() * right).max_diff(&id);
        if tp_dev >= EXACT_TOL {
            return Err(QwalkError::NotTracePreserving { deviation: tp_dev });
        }
        let unital_dev = (left * left.adjoint() + right * right.adjoint()).max_diff(&id);
        let sum = left + right;
        let flags = CoinFlags {
            trace_preserving: true,
            unital: unital_dev < EXACT_TOL,
            unitary_sum: unitary_deviation(&sum) < EXACT_TOL,
            left_normal: left.is_normal(EXACT_TOL),
            right_normal: right.is_normal(EXACT_TOL),
            pq: is_pq_pair(&left, &right),
        };
        Ok(Self { left, right, flags })
    }

    pub fn left(&self) -> &Mat2 {
        &self.left
    }

    pub fn right(&self) -> &Mat2 {
        &self.right
    }

    pub fn flags(&self) -> CoinFlags {
        self.flags
    }

    pub fn matrix(&self, step: Step) -> &Mat2 {
        match step {
            Step::Left => &self.left,
            Step::Right => &self.right,
        }
    }

    /// The coin `U = L + R`.
    pub fn sum(&self) -> Mat2 {
        self.left + self.right
    }

    /// The pair with `L` and `R` exchanged.
    pub fn swapped(&self) -> CoinPair {
        CoinPair { left: self.right, right: self.left, flags: self.flags }
    }

    pub fn require_unitary_sum(&self) -> Result<()> {
        if self.flags.unitary_sum {
            Ok(())
        } else {
            Err(QwalkError::CoinNotUnitarySum { deviation: unitary_deviation(&self.sum()) })
        }
    }
}

fn unitary_deviation(u: &Mat2) -> f64 {
    (u.adjoint() * *u).max_diff(&Mat2::identity())
}

/// Named coin pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoinPreset {
    /// Rows of the Hadamard matrix: `R` keeps the top row, `L` the bottom.
    Hadamard,
    /// `L = √p I`, `R = √(1-p) X`.
    BitFlip { p: f64 },
    /// `L = [[1,1],[0,1]]/√3`, `R = [[1,0],[-1,1]]/√3`: unital, not normal.
    NonNormal,
    /// `L = diag(1/√2, 1/√3)`, `R = diag(1/√2, √2/√3)`: recurrent from `E11`, transient from `E22`.
    DiagTrichotomy,
}

impl CoinPreset {
    /// Look up a preset by name. `bitflip` needs `p`.
    pub fn parse(name: &str, p: Option<f64>) -> Result<Self> {
        match name {
            "hadamard" => Ok(CoinPreset::Hadamard),
            "bitflip" | "bit-flip" => {
                let p = p.ok_or_else(|| QwalkError::InvalidInput("preset `bitflip` needs a probability p".into()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(QwalkError::InvalidInput(format!("bitflip probability {p} outside [0, 1]")));
                }
                Ok(CoinPreset::BitFlip { p })
            }
            "sec7" | "non-normal" => Ok(CoinPreset::NonNormal),
            "diag-trichotomy" => Ok(CoinPreset::DiagTrichotomy),
            "" => Err(QwalkError::InvalidInput("empty preset name".into())),
            other => Err(QwalkError::InvalidInput(format!("unknown coin preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CoinPreset::Hadamard => "hadamard",
            CoinPreset::BitFlip { .. } => "bitflip",
            CoinPreset::NonNormal => "sec7",
            CoinPreset::DiagTrichotomy => "diag-trichotomy",
        }
    }

    pub fn coin(&self) -> CoinPair {
        let (l, r) = self.matrices();
        CoinPair::new(l, r).expect("preset coins are trace preserving")
    }

    fn matrices(&self) -> (Mat2, Mat2) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match *self {
            CoinPreset::Hadamard => (
                Mat2::from_real([[0.0, 0.0], [h, -h]]),
                Mat2::from_real([[h, h], [0.0, 0.0]]),
            ),
            CoinPreset::BitFlip { p } => (
                Mat2::identity().scale_real(p.sqrt()),
                Mat2::from_real([[0.0, 1.0], [1.0, 0.0]]).scale_real((1.0 - p).sqrt()),
            ),
            CoinPreset::NonNormal => {
                let s = 1.0 / 3f64.sqrt();
                (
                    Mat2::from_real([[s, s], [0.0, s]]),
                    Mat2::from_real([[s, 0.0], [-s, s]]),
                )
            }
            CoinPreset::DiagTrichotomy => (
                Mat2::from_real([[h, 0.0], [0.0, 1.0 / 3f64.sqrt()]]),
                Mat2::from_real([[h, 0.0], [0.0, (2.0f64 / 3.0).sqrt()]]),
            ),
        }
    }
}

impl fmt::Display for CoinPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoinPreset::BitFlip { p } => write!(f, "bitflip(p={p})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Initial internal state: a unit spinor or a density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialState {
    Pure(Spinor),
    Mixed(Mat2),
}

impl InitialState {
    pub fn density(&self) -> Mat2 {
        match self {
            InitialState::Pure(psi) => Mat2::outer(psi),
            InitialState::Mixed(rho) => *rho,
        }
    }

    pub fn spinor(&self) -> Option<Spinor> {
        match self {
            InitialState::Pure(psi) => Some(*psi),
            InitialState::Mixed(_) => None,
        }
    }

    /// Named states: `up`, `down`, `balanced` ((|↑⟩ + i|↓⟩)/√2), `e11`, `e22`, `mixed` (I/2).
    pub fn named(name: &str) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Ok(match name {
            "up" => InitialState::Pure([c64(1.0, 0.0), c64(0.0, 0.0)]),
            "down" => InitialState::Pure([c64(0.0, 0.0), c64(1.0, 0.0)]),
            "balanced" => InitialState::Pure([c64(h, 0.0), c64(0.0, h)]),
            "e11" => InitialState::Mixed(Mat2::from_real([[1.0, 0.0], [0.0, 0.0]])),
            "e22" => InitialState::Mixed(Mat2::from_real([[0.0, 0.0], [0.0, 1.0]])),
            "mixed" => InitialState::Mixed(Mat2::identity().scale_real(0.5)),
            other => return Err(QwalkError::InvalidInput(format!("unknown state `{other}`"))),
        })
    }

    /// Check normalization (unit spinor, or positive density of trace 1).
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialState::Pure(psi) => {
                let n = spinor_norm_sqr(psi);
                if (n - 1.0).abs() > 1e-10 {
                    return Err(QwalkError::InvalidInput(format!("spinor has squared norm {n}, expected 1")));
                }
            }
            InitialState::Mixed(rho) => {
                if !rho.is_hermitian(1e-12) {
                    return Err(QwalkError::NotHermitian { deviation: rho.hermitian_deviation() });
                }
                let t = rho.trace().re;
                if (t - 1.0).abs() > 1e-10 || rho.min_hermitian_eigenvalue() < -1e-12 {
                    return Err(QwalkError::InvalidInput("density must be positive with unit trace".into()));
                }
            }
        }
        Ok(())
    }
}

/// A state on a finite window of ℤ that the walk can advance.
pub trait LatticeState: Sized {
    fn evolve(&self, coin: &CoinPair) -> Result<Self>;
    fn site_probabilities(&self) -> BTreeMap<i64, f64>;
}

/// Block-diagonal open-walk state `Σ ρ_i ⊗ |i⟩⟨i|` on a contiguous window.
///
/// Total trace is 1 for a physical state and may be smaller in taboo
/// (absorbing-origin) evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDensity {
    first_site: i64,
    blocks: Vec<Mat2>,
}

impl LatticeDensity {
    pub fn localized(rho: Mat2, site: i64) -> Self {
        Self { first_site: site, blocks: vec![rho] }
    }

    pub fn from_blocks(first_site: i64, blocks: Vec<Mat2>) -> Self {
        Self { first_site, blocks }
    }

    pub fn first_site(&self) -> i64 {
        self.first_site
    }

    pub fn last_site(&self) -> i64 {
        self.first_site + self.blocks.len() as i64 - 1
    }

    pub fn block(&self, site: i64) -> Mat2 {
        self.index(site).map(|i| self.blocks[i]).unwrap_or_default()
    }

    /// Remove and return the block at `site`.
    pub fn take_block(&mut self, site: i64) -> Mat2 {
        match self.index(site) {
            Some(i) => std::mem::take(&mut self.blocks[i]),
            None => Mat2::zeros(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &Mat2)> + '_ {
        self.blocks.iter().enumerate().map(move |(i, b)| (self.first_site + i as i64, b))
    }

    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace().re).sum()
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_block_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(Mat2::min_hermitian_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    fn index(&self, site: i64) -> Option<usize> {
        let i = site - self.first_site;
        (0..self.blocks.len() as i64).contains(&i).then_some(i as usize)
    }
}

/// One step of the open walk. The window grows by one site on each side.
pub fn oqw_step(state: &LatticeDensity, coin: &CoinPair) -> LatticeDensity {
    let (l, r) = (coin.left(), coin.right());
    let (la, ra) = (l.adjoint(), r.adjoint());
    let mut out = vec![Mat2::zeros(); state.blocks.len() + 2];
    for (i, rho) in state.blocks.iter().enumerate() {
        if *rho == Mat2::zeros() {
            continue;
        }
        out[i] += *l * *rho * la;
        out[i + 2] += *r * *rho * ra;
    }
    LatticeDensity { first_site: state.first_site - 1, blocks: out }
}

impl LatticeState for LatticeDensity {
    fn evolve(&self, coin: &CoinPair) -> Result<Self> {
        Ok(oqw_step(self, coin))
    }

    fn site_probabilities(&self) -> BTreeMap<i64, f64> {
        self.iter().map(|(s, b)| (s, b.trace().re)).collect()
    }
}

/// Coined-walk state: one spinor per site.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    first_site: i64,
    amplitudes: Vec<Spinor>,
}

const ZERO_SPINOR: Spinor = [c64(0.0, 0.0), c64(0.0, 0.0)];

impl SpinorField {
    pub fn localized(psi: Spinor, site: i64) -> Self {
        Self { first_site: site, amplitudes: vec![psi] }
    }

    pub fn first_site(&self) -> i64 {
        self.first_site
    }

    pub fn last_site(&self) -> i64 {
        self.first_site + self.amplitudes.len() as i64 - 1
    }

    pub fn amplitude(&self, site: i64) -> Spinor {
        self.index(site).map(|i| self.amplitudes[i]).unwrap_or(ZERO_SPINOR)
    }

    pub fn take_amplitude(&mut self, site: i64) -> Spinor {
        match self.index(site) {
            Some(i) => std::mem::replace(&mut self.amplitudes[i], ZERO_SPINOR),
            None => ZERO_SPINOR,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &Spinor)> + '_ {
        self.amplitudes.iter().enumerate().map(move |(i, a)| (self.first_site + i as i64, a))
    }

    pub fn total_norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(spinor_norm_sqr).sum()
    }

    fn index(&self, site: i64) -> Option<usize> {
        let i = site - self.first_site;
        (0..self.amplitudes.len() as i64).contains(&i).then_some(i as usize)
    }
}

/// One step of the coined walk, `ψ'_i = R ψ_{i-1} + L ψ_{i+1}`.
pub fn uqw_step(state: &SpinorField, coin: &CoinPair) -> Result<SpinorField> {
    coin.require_unitary_sum()?;
    Ok(uqw_step_unchecked(state, coin))
}

pub(crate) fn uqw_step_unchecked(state: &SpinorField, coin: &CoinPair) -> SpinorField {
    let mut out = vec![ZERO_SPINOR; state.amplitudes.len() + 2];
    for (i, psi) in state.amplitudes.iter().enumerate() {
        if *psi == ZERO_SPINOR {
            continue;
        }
        let l = coin.left().apply(psi);
        let r = coin.right().apply(psi);
        for c in 0..2 {
            out[i][c] += l[c];
            out[i + 2][c] += r[c];
        }
    }
    SpinorField { first_site: state.first_site - 1, amplitudes: out }
}

impl LatticeState for SpinorField {
    fn evolve(&self, coin: &CoinPair) -> Result<Self> {
        uqw_step(self, coin)
    }

    fn site_probabilities(&self) -> BTreeMap<i64, f64> {
        self.iter().map(|(s, a)| (s, spinor_norm_sqr(a))).collect()
    }
}

/// Probability of each site after `n` unmonitored steps.
pub fn site_distribution<S: LatticeState + Clone>(state: &S, n: usize, coin: &CoinPair) -> Result<BTreeMap<i64, f64>> {
    let mut s = state.clone();
    for _ in 0..n {
        s = s.evolve(coin)?;
    }
    Ok(s.site_probabilities())
}

/// One quantum trajectory `(ρ_n, X_n)` of the open walk.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub seed: u64,
    pub stream: u64,
    pub positions: Vec<i64>,
    pub densities: Vec<Mat2>,
    /// First `n ≥ 1` with `X_n = X_0`, if it happened within the horizon.
    pub first_return_step: Option<usize>,
}

/// Generator used for every trajectory: ChaCha8 seeded from `seed` with the
/// given stream, so ensembles are reproducible independent of thread count.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_step(coin: &CoinPair, rho: &Mat2, step: usize, rng: &mut impl Rng) -> Result<(Step, Mat2)> {
    let left = coin.left().conjugate(rho);
    let right = coin.right().conjugate(rho);
    let (pl, pr) = (left.trace().re.max(0.0), right.trace().re.max(0.0));
    if pl < 1e-15 && pr < 1e-15 {
        return Err(QwalkError::DegenerateStep { step });
    }
    let u: f64 = rng.random::<f64>() * (pl + pr);
    let (s, next, p) = if u < pl { (Step::Left, left, pl) } else { (Step::Right, right, pr) };
    Ok((s, next.scale_real(1.0 / p)))
}

fn normalized(rho: Mat2) -> Result<Mat2> {
    let t = rho.trace().re;
    if !(t > 0.0) || rho.min_hermitian_eigenvalue() < -1e-12 * t {
        return Err(QwalkError::InvalidInput("initial density must be positive with nonzero trace".into()));
    }
    Ok(rho.scale_real(1.0 / t))
}

/// Sample one trajectory of length `horizon` from `ρ0 ⊗ |start⟩⟨start|`.
pub fn sample_trajectory(coin: &CoinPair, rho0: Mat2, start: i64, horizon: usize, seed: u64) -> Result<TrajectorySample> {
    sample_trajectory_stream(coin, rho0, start, horizon, seed, 0)
}

pub fn sample_trajectory_stream(
    coin: &CoinPair,
    rho0: Mat2,
    start: i64,
    horizon: usize,
    seed: u64,
    stream: u64,
) -> Result<TrajectorySample> {
    let mut rng = trajectory_rng(seed, stream);
    let mut rho = normalized(rho0)?;
    let mut x = start;
    let mut positions = Vec::with_capacity(horizon + 1);
    let mut densities = Vec::with_capacity(horizon + 1);
    positions.push(x);
    densities.push(rho);
    let mut first_return_step = None;
    for n in 1..=horizon {
        let (s, next) = draw_step(coin, &rho, n, &mut rng)?;
        x += s.offset();
        rho = next;
        positions.push(x);
        densities.push(rho);
        if x == start && first_return_step.is_none() {
            first_return_step = Some(n);
        }
    }
    Ok(TrajectorySample { seed, stream, positions, densities, first_return_step })
}

fn returns_within(coin: &CoinPair, rho0: Mat2, horizon: usize, rng: &mut impl Rng) -> Result<bool> {
    let mut rho = rho0;
    let mut x = 0i64;
    for n in 1..=horizon {
        let (s, next) = draw_step(coin, &rho, n, rng)?;
        x += s.offset();
        if x == 0 {
            return Ok(true);
        }
        rho = next;
    }
    Ok(false)
}

/// Fraction of `trajectories` sampled paths that return to their start
/// within `horizon` steps. Trajectory `i` uses stream `i` of `seed`.
pub fn first_return_frequency(coin: &CoinPair, rho0: Mat2, horizon: usize, trajectories: usize, seed: u64) -> Result<f64> {
    if trajectories == 0 {
        return Err(QwalkError::InvalidInput("need at least one trajectory".into()));
    }
    let rho0 = normalized(rho0)?;
    let hits = (0..trajectories as u64)
        .into_par_iter()
        .map(|i| returns_within(coin, rho0, horizon, &mut trajectory_rng(seed, i)).map(usize::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(hits as f64 / trajectories as f64)
}

/// Random coins and states, for property tests and examples.
pub mod random {
    use super::*;

    fn entry(rng: &mut impl Rng) -> C64 {
        c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn orthonormal_columns(cols: &mut [[C64; 4]; 2]) {
        let norm = |v: &[C64; 4]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let n0 = norm(&cols[0]);
        cols[0].iter_mut().for_each(|z| *z /= n0);
        let proj: C64 = cols[0].iter().zip(cols[1].iter()).map(|(a, b)| a.conj() * b).sum();
        let first = cols[0];
        cols[1].iter_mut().zip(first.iter()).for_each(|(b, a)| *b -= proj * a);
        let n1 = norm(&cols[1]);
        cols[1].iter_mut().for_each(|z| *z /= n1);
    }

    /// A random isometry `[L; R]` (4×2), i.e. a random trace-preserving pair.
    pub fn trace_preserving_pair(rng: &mut impl Rng) -> CoinPair {
        let mut cols = [[c64(0.0, 0.0); 4]; 2];
        for c in cols.iter_mut() {
            for z in c.iter_mut() {
                *z = entry(rng);
            }
        }
        orthonormal_columns(&mut cols);
        let l = Mat2::from_rows([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]);
        let r = Mat2::from_rows([[cols[0][2], cols[1][2]], [cols[0][3], cols[1][3]]]);
        CoinPair::new(l, r).expect("isometry rows give a trace-preserving pair")
    }

    pub fn unitary(rng: &mut impl Rng) -> Mat2 {
        let a = spinor(rng);
        // second column orthogonal to the first, with a random phase
        let phase = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let b = [-a[1].conj() * phase, a[0].conj() * phase];
        Mat2::from_rows([[a[0], b[0]], [a[1], b[1]]])
    }

    /// Split a random unitary coin into its top row (`R`) and bottom row (`L`).
    pub fn unitary_sum_pair(rng: &mut impl Rng) -> CoinPair {
        let c = unitary(rng);
        let zero = c64(0.0, 0.0);
        let r = Mat2::from_rows([[c[(0, 0)], c[(0, 1)]], [zero, zero]]);
        let l = Mat2::from_rows([[zero, zero], [c[(1, 0)], c[(1, 1)]]]);
        CoinPair::new(l, r).expect("row split of a unitary is trace preserving")
    }

    /// `L = U diag(√λ e^{ia}, √μ e^{ib}) U*`, `R = U diag(√(1-λ) e^{ic}, √(1-μ) e^{id}) U*`.
    pub fn normal_pair(rng: &mut impl Rng) -> CoinPair {
        let u = unitary(rng);
        let lambda: f64 = rng.random_range(0.05..0.95);
        let mu: f64 = rng.random_range(0.05..0.95);
        let mut ph = || C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let dl = Mat2::from_diagonal([ph() * lambda.sqrt(), ph() * mu.sqrt()]);
        let dr = Mat2::from_diagonal([ph() * (1.0 - lambda).sqrt(), ph() * (1.0 - mu).sqrt()]);
        CoinPair::new(u * dl * u.adjoint(), u * dr * u.adjoint()).expect("normal pair is trace preserving")
    }

    pub fn spinor(rng: &mut impl Rng) -> Spinor {
        let v = [entry(rng), entry(rng)];
        let n = spinor_norm_sqr(&v).sqrt();
        [v[0] / n, v[1] / n]
    }

    pub fn density(rng: &mut impl Rng) -> Mat2 {
        let a = Mat2::from_rows([[entry(rng), entry(rng)], [entry(rng), entry(rng)]]);
        let rho = a * a.adjoint();
        rho.scale_real(1.0 / rho.trace().re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn down() -> Spinor {
        [c64(0.0, 0.0), c64(1.0, 0.0)]
    }

    #[test]
    fn hadamard_flags() {
        let f = CoinPreset::Hadamard.coin().flags();
        assert!(f.trace_preserving && f.unitary_sum && f.unital);
        assert!(!f.left_normal && !f.right_normal && !f.pq);
    }

    #[test]
    fn bitflip_flags() {
        let f = CoinPreset::BitFlip { p: 0.3 }.coin().flags();
        assert!(f.trace_preserving && f.unital && f.left_normal && f.right_normal && f.pq);
        assert!(!f.unitary_sum);
    }

    #[test]
    fn half_identity_pair_rejected() {
        let h = Mat2::identity().scale_real(0.5);
        assert!(matches!(CoinPair::new(h, h), Err(QwalkError::NotTracePreserving { .. })));
    }

    #[test]
    fn preset_names() {
        assert_eq!(CoinPreset::parse("sec7", None).unwrap(), CoinPreset::NonNormal);
        assert!(CoinPreset::parse("bitflip", None).is_err());
        assert!(CoinPreset::parse("", None).is_err());
        assert!(CoinPreset::parse("nope", None).is_err());
    }

    #[test]
    fn one_open_step_from_origin() {
        let coin = CoinPreset::NonNormal.coin();
        let rho = Mat2::from_real([[0.25, 0.1], [0.1, 0.75]]);
        let s = oqw_step(&LatticeDensity::localized(rho, 0), &coin);
        assert!(s.block(-1).max_diff(&coin.left().conjugate(&rho)) < 1e-15);
        assert!(s.block(1).max_diff(&coin.right().conjugate(&rho)) < 1e-15);
        assert_eq!(s.block(0), Mat2::zeros());
    }

    #[test]
    fn two_open_steps_match_path_products() {
        let coin = CoinPreset::NonNormal.coin();
        let (l, r) = (*coin.left(), *coin.right());
        let rho = Mat2::from_real([[0.6, 0.2], [0.2, 0.4]]);
        let s = oqw_step(&oqw_step(&LatticeDensity::localized(rho, 0), &coin), &coin);
        assert!(s.block(-2).max_diff(&(l * l).conjugate(&rho)) < 1e-15);
        assert!(s.block(2).max_diff(&(r * r).conjugate(&rho)) < 1e-15);
        let mid = (l * r).conjugate(&rho) + (r * l).conjugate(&rho);
        assert!(s.block(0).max_diff(&mid) < 1e-15);
    }

    #[test]
    fn zero_state_stays_zero() {
        let coin = CoinPreset::Hadamard.coin();
        let s = oqw_step(&LatticeDensity::localized(Mat2::zeros(), 0), &coin);
        assert_eq!(s.total_trace(), 0.0);
    }

    #[test]
    fn hadamard_unitary_first_step() {
        let coin = CoinPreset::Hadamard.coin();
        let s = uqw_step(&SpinorField::localized(down(), 0), &coin).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let right = s.amplitude(1);
        let left = s.amplitude(-1);
        assert!((right[0] - c64(h, 0.0)).norm() < 1e-15 && right[1].norm() < 1e-15);
        assert!(left[0].norm() < 1e-15 && (left[1] - c64(-h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn hadamard_unitary_three_steps() {
        let coin = CoinPreset::Hadamard.coin();
        let mut s = SpinorField::localized(down(), 0);
        for _ in 0..3 {
            s = uqw_step(&s, &coin).unwrap();
        }
        let q = 2f64.sqrt() / 4.0;
        let expect = [
            (-3, [0.0, -q]),
            (-1, [q, -2.0 * q]),
            (1, [0.0, q]),
            (3, [q, 0.0]),
        ];
        for (site, [a, b]) in expect {
            let got = s.amplitude(site);
            assert!((got[0] - c64(a, 0.0)).norm() < 1e-15, "site {site}");
            assert!((got[1] - c64(b, 0.0)).norm() < 1e-15, "site {site}");
        }
    }

    #[test]
    fn unitary_step_needs_unitary_sum() {
        let coin = CoinPreset::BitFlip { p: 0.5 }.coin();
        let s = SpinorField::localized(down(), 0);
        assert!(matches!(uqw_step(&s, &coin), Err(QwalkError::CoinNotUnitarySum { .. })));
    }

    #[test]
    fn hadamard_distributions_at_three() {
        let coin = CoinPreset::Hadamard.coin();
        let u = site_distribution(&SpinorField::localized(down(), 0), 3, &coin).unwrap();
        let o = site_distribution(&LatticeDensity::localized(Mat2::outer(&down()), 0), 3, &coin).unwrap();
        for (site, pu, po) in [(-3, 0.125, 0.125), (-1, 0.625, 0.375), (1, 0.125, 0.375), (3, 0.125, 0.125)] {
            assert!((u[&site] - pu).abs() < 1e-14);
            assert!((o[&site] - po).abs() < 1e-14);
        }
        let zero = site_distribution(&SpinorField::localized(down(), 0), 0, &coin).unwrap();
        assert_eq!(zero.into_iter().collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn trajectory_never_returns_with_pure_right_drift() {
        let l = Mat2::zeros();
        let r = Mat2::from_real([[0.0, 1.0], [1.0, 0.0]]);
        let coin = CoinPair::new(l, r).unwrap();
        let t = sample_trajectory(&coin, Mat2::identity().scale_real(0.5), 0, 50, 1).unwrap();
        assert!(t.positions.iter().enumerate().all(|(n, &x)| x == n as i64));
        assert_eq!(t.first_return_step, None);
    }

    #[test]
    fn trajectory_steps_are_unit_and_densities_normalized() {
        let coin = CoinPreset::NonNormal.coin();
        let t = sample_trajectory(&coin, Mat2::identity(), 5, 200, 42).unwrap();
        assert_eq!(t.positions[0], 5);
        assert!(t.positions.windows(2).all(|w| (w[1] - w[0]).abs() == 1));
        assert!(t.densities.iter().all(|d| (d.trace().re - 1.0).abs() < 1e-10));
        let again = sample_trajectory(&coin, Mat2::identity(), 5, 200, 42).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn bitflip_step_frequency() {
        let coin = CoinPreset::BitFlip { p: 0.5 }.coin();
        let e11 = Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]);
        let t = sample_trajectory(&coin, e11, 0, 100_000, 2024).unwrap();
        let lefts = t.positions.windows(2).filter(|w| w[1] < w[0]).count();
        let freq = lefts as f64 / 100_000.0;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn dead_state_is_reported() {
        // a density with no usable weight cannot be normalized
        let l = Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]);
        let r = Mat2::from_real([[0.0, 0.0], [0.0, 1.0]]);
        let coin = CoinPair::new(l, r).unwrap();
        let mut rng = trajectory_rng(0, 0);
        let dead = Mat2::from_real([[1e-17, 0.0], [0.0, 1e-17]]);
        assert!(matches!(draw_step(&coin, &dead, 3, &mut rng), Err(QwalkError::DegenerateStep { step: 3 })));
    }
}
