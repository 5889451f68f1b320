//! Exact first-return probabilities by exhaustive path enumeration.
//!
//! Exponential cost; this is the reference the polynomial-time monitored
//! evolution is checked against. A left step contributes `L`, a right step
//! `R`, and products are taken in chronological order (`B_n ⋯ B_1`).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QwalkError, Result};
use crate::matkernel::{c64, spinor_norm_sqr, Mat2, Spinor, C64};
use crate::walkmodel::{CoinPair, InitialState, Step};

/// Longest path length the enumerator accepts.
pub const MAX_PATH_STEPS: usize = 30;

/// A first-return path of even length, stored as a step bitmask.
///
/// Bit `i` is set when step `i` (0-based, chronological) goes right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FirstReturnPath {
    bits: u32,
    len: u8,
}

impl FirstReturnPath {
    /// Build from explicit ±1 steps, checking the first-return shape.
    pub fn from_steps(steps: &[i8]) -> Result<Self> {
        if steps.is_empty() || steps.len() % 2 == 1 || steps.len() > MAX_PATH_STEPS {
            return Err(QwalkError::InvalidInput(format!("path length {} must be even and in 2..={MAX_PATH_STEPS}", steps.len())));
        }
        let mut bits = 0u32;
        let mut pos = 0i64;
        for (i, &s) in steps.iter().enumerate() {
            match s {
                1 => bits |= 1 << i,
                -1 => {}
                _ => return Err(QwalkError::InvalidInput(format!("step {s} is not ±1"))),
            }
            pos += i64::from(s);
            if pos == 0 && i + 1 < steps.len() {
                return Err(QwalkError::InvalidInput("path revisits the start early".into()));
            }
        }
        if pos != 0 {
            return Err(QwalkError::InvalidInput("path does not end at the start".into()));
        }
        Ok(Self { bits, len: steps.len() as u8 })
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self, i: usize) -> Step {
        if self.bits >> i & 1 == 1 {
            Step::Right
        } else {
            Step::Left
        }
    }

    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        (0..self.len()).map(|i| self.step(i))
    }

    /// The same path with every step reversed.
    pub fn mirrored(&self) -> Self {
        let mask = if self.len == 32 { u32::MAX } else { (1u32 << self.len) - 1 };
        Self { bits: !self.bits & mask, len: self.len }
    }

    /// `B_{s_n} ⋯ B_{s_1}` for this path.
    pub fn product(&self, coin: &CoinPair) -> Mat2 {
        self.steps().fold(Mat2::identity(), |m, s| *coin.matrix(s) * m)
    }
}

/// Number of first-return paths of length `2k`: `C(2k, k) / (2k - 1)`.
pub fn first_return_path_count(k: usize) -> u64 {
    assert!(k >= 1);
    let mut binom: u128 = 1;
    for i in 0..k as u128 {
        binom = binom * (2 * k as u128 - i) / (i + 1);
    }
    (binom / (2 * k as u128 - 1)) as u64
}

fn path_length(k: usize) -> Result<usize> {
    if k == 0 {
        return Err(QwalkError::InvalidInput("k must be at least 1".into()));
    }
    let n = 2 * k;
    if n > MAX_PATH_STEPS {
        return Err(QwalkError::CostGuardExceeded { steps: n, limit: MAX_PATH_STEPS });
    }
    Ok(n)
}

#[derive(Clone, Copy)]
struct Frame<S> {
    depth: usize,
    pos: i64,
    bits: u32,
    state: S,
}

/// Depth-first walk over first-return paths of length `n`, left before right.
fn descend<S: Copy>(n: usize, frame: Frame<S>, stop: usize, advance: &impl Fn(&S, Step) -> S, visit: &mut impl FnMut(Frame<S>)) {
    if frame.depth == stop {
        visit(frame);
        return;
    }
    for s in [Step::Left, Step::Right] {
        let pos = frame.pos + s.offset();
        let depth = frame.depth + 1;
        if (pos == 0 && depth < n) || pos.unsigned_abs() as usize > n - depth {
            continue;
        }
        let bits = if s == Step::Right { frame.bits | 1 << frame.depth } else { frame.bits };
        descend(n, Frame { depth, pos, bits, state: advance(&frame.state, s) }, stop, advance, visit);
    }
}

fn pairwise_sum<T: Copy>(xs: &[T], zero: T, add: &impl Fn(T, T) -> T) -> T {
    match xs.len() {
        0 => zero,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            add(pairwise_sum(a, zero, add), pairwise_sum(b, zero, add))
        }
    }
}

/// Fold a per-path value over every first-return path of length `n`.
///
/// Work is split on path prefixes; values are gathered in enumeration
/// order and reduced by a fixed pairwise tree, so the result does not
/// depend on the thread count.
fn path_sum<S, T>(n: usize, init: S, advance: impl Fn(&S, Step) -> S + Sync, leaf: impl Fn(&S) -> T + Sync, zero: T, add: impl Fn(T, T) -> T + Sync) -> T
where
    S: Copy + Send + Sync,
    T: Copy + Send + Sync,
{
    let split = n.min(10);
    let mut prefixes = Vec::new();
    descend(n, Frame { depth: 0, pos: 0, bits: 0, state: init }, split, &advance, &mut |f| prefixes.push(f));
    let values: Vec<T> = prefixes
        .par_iter()
        .flat_map_iter(|&f| {
            let mut out = Vec::new();
            descend(n, f, n, &advance, &mut |leaf_frame| out.push(leaf(&leaf_frame.state)));
            out
        })
        .collect();
    pairwise_sum(&values, zero, &add)
}

/// All first-return paths of length `2k`, in lexicographic order with left first.
pub fn enumerate_first_return_paths(k: usize) -> Result<Vec<FirstReturnPath>> {
    let n = path_length(k)?;
    let mut paths = Vec::with_capacity(first_return_path_count(k) as usize);
    descend(n, Frame { depth: 0, pos: 0, bits: 0, state: () }, n, &|_, _| (), &mut |f| {
        paths.push(FirstReturnPath { bits: f.bits, len: n as u8 })
    });
    Ok(paths)
}

/// `Σ_paths tr(M ρ M*)` over first-return paths of length `2k`.
pub fn oqw_first_return_term(coin: &CoinPair, rho: &Mat2, k: usize) -> Result<f64> {
    let n = path_length(k)?;
    Ok(path_sum(n, *rho, |r, s| coin.matrix(s).conjugate(r), |r| r.trace().re, 0.0, |a, b| a + b))
}

fn add_spinors(a: Spinor, b: Spinor) -> Spinor {
    [a[0] + b[0], a[1] + b[1]]
}

/// `Σ_paths M ψ` over first-return paths of length `2k`, i.e. `a_{2k} ψ`.
pub fn uqw_first_return_amplitude(coin: &CoinPair, psi: &Spinor, k: usize) -> Result<Spinor> {
    coin.require_unitary_sum()?;
    let n = path_length(k)?;
    let zero = [c64(0.0, 0.0); 2];
    Ok(path_sum(n, *psi, |v, s| coin.matrix(s).apply(v), |v| *v, zero, add_spinors))
}

/// `‖Σ_paths M ψ‖²`: amplitudes are summed before squaring.
pub fn uqw_first_return_term(coin: &CoinPair, psi: &Spinor, k: usize) -> Result<f64> {
    uqw_first_return_amplitude(coin, psi, k).map(|a| spinor_norm_sqr(&a))
}

/// Unitary minus open first-return term at length `2k` for `ρ = |ψ⟩⟨ψ|`.
pub fn interference_term(coin: &CoinPair, psi: &Spinor, k: usize) -> Result<f64> {
    let u = uqw_first_return_term(coin, psi, k)?;
    let o = oqw_first_return_term(coin, &Mat2::outer(psi), k)?;
    Ok(u - o)
}

/// `2 Σ_{C<D} Re⟨Cψ, Dψ⟩` by explicit pairs. Quadratic in the path count.
pub fn pairwise_interference(coin: &CoinPair, psi: &Spinor, k: usize) -> Result<f64> {
    let amps: Vec<Spinor> = enumerate_first_return_paths(k)?.iter().map(|p| p.product(coin).apply(psi)).collect();
    let mut total = 0.0;
    for (i, a) in amps.iter().enumerate() {
        for b in &amps[i + 1..] {
            let inner: C64 = a[0].conj() * b[0] + a[1].conj() * b[1];
            total += 2.0 * inner.re;
        }
    }
    Ok(total)
}

/// Open-walk mass at every site after `n` steps, summed over all `2^n` paths.
///
/// Returned as `(site, probability)` for sites `-n, -n+2, ..., n`. Used as an
/// oracle for lattice evolution; `n` is capped by the same cost guard.
pub fn unrestricted_path_distribution(coin: &CoinPair, rho: &Mat2, n: usize) -> Result<Vec<(i64, f64)>> {
    if n > MAX_PATH_STEPS {
        return Err(QwalkError::CostGuardExceeded { steps: n, limit: MAX_PATH_STEPS });
    }
    let mut mass = vec![0.0; n + 1];
    for bits in 0u64..1 << n {
        let mut m = Mat2::identity();
        let mut rights = 0;
        for i in 0..n {
            let s = if bits >> i & 1 == 1 { Step::Right } else { Step::Left };
            rights += usize::from(s == Step::Right);
            m = *coin.matrix(s) * m;
        }
        mass[rights] += m.conjugate(rho).trace().re;
    }
    Ok(mass.into_iter().enumerate().map(|(r, p)| (2 * r as i64 - n as i64, p)).collect())
}

/// Which quantity a [`ReturnSeries`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    OqwMonitored,
    UqwMonitored,
    UnmonitoredP0,
}

/// Per-step return probabilities; `terms[n]` is the value at step `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnSeries {
    kind: SeriesKind,
    terms: Vec<f64>,
}

/// Slack allowed above 1 for a single term.
pub const TERM_SLACK: f64 = 1e-12;

impl ReturnSeries {
    /// `terms[0]` is step 0 and is ignored by sums; it is stored as 0.
    pub fn new(kind: SeriesKind, mut terms: Vec<f64>) -> Result<Self> {
        if terms.is_empty() {
            terms.push(0.0);
        }
        terms[0] = 0.0;
        for (n, t) in terms.iter_mut().enumerate() {
            if !t.is_finite() || *t < -TERM_SLACK || *t > 1.0 + TERM_SLACK {
                return Err(QwalkError::TermOutOfRange { step: n, value: *t });
            }
            *t = t.clamp(0.0, 1.0);
        }
        Ok(Self { kind, terms })
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    /// Last step held.
    pub fn horizon(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn term(&self, n: usize) -> f64 {
        self.terms.get(n).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> &[f64] {
        &self.terms
    }

    /// Running sums; entry `n` covers steps `1..=n`.
    pub fn cumulative(&self) -> Vec<f64> {
        self.terms
            .iter()
            .scan(0.0, |acc, t| {
                *acc += t;
                Some(*acc)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.terms.iter().sum()
    }

    /// Running `1 - Π_{m≤n} (1 - p(m))`.
    pub fn polya_partial(&self) -> Vec<f64> {
        self.terms
            .iter()
            .scan(1.0, |prod, t| {
                *prod *= 1.0 - t;
                Some(1.0 - *prod)
            })
            .collect()
    }
}

/// One row of the open/unitary comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FirstReturnRow {
    pub steps: usize,
    pub oqw_term: f64,
    pub uqw_term: Option<f64>,
    pub interference: Option<f64>,
    pub oqw_cumulative: f64,
    pub uqw_cumulative: Option<f64>,
    pub interference_cumulative: Option<f64>,
}

/// First-return terms and their running sums for `2k = 2, 4, ..., 2 k_max`.
///
/// Unitary columns are present only for a pure state and a unitary-sum coin.
pub fn cumulative_return(coin: &CoinPair, state: &InitialState, max_k: usize) -> Result<Vec<FirstReturnRow>> {
    if max_k > 0 {
        path_length(max_k)?;
    }
    let rho = state.density();
    let pure = state.spinor().filter(|_| coin.flags().unitary_sum);
    let mut rows = Vec::with_capacity(max_k);
    let (mut co, mut cu, mut ci) = (0.0, 0.0, 0.0);
    for k in 1..=max_k {
        let o = oqw_first_return_term(coin, &rho, k)?;
        co += o;
        let (u, i) = match pure {
            Some(psi) => {
                let u = uqw_first_return_term(coin, &psi, k)?;
                cu += u;
                ci += u - o;
                (Some(u), Some(u - o))
            }
            None => (None, None),
        };
        rows.push(FirstReturnRow {
            steps: 2 * k,
            oqw_term: o,
            uqw_term: u,
            interference: i,
            oqw_cumulative: co,
            uqw_cumulative: pure.map(|_| cu),
            interference_cumulative: pure.map(|_| ci),
        });
    }
    Ok(rows)
}

/// Series view of the open-walk column of [`cumulative_return`].
pub fn oqw_series_from_rows(rows: &[FirstReturnRow]) -> Result<ReturnSeries> {
    let horizon = rows.last().map_or(0, |r| r.steps);
    let mut terms = vec![0.0; horizon + 1];
    for r in rows {
        terms[r.steps] = r.oqw_term;
    }
    ReturnSeries::new(SeriesKind::OqwMonitored, terms)
}
