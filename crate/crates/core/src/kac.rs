//! Open walks on finite graphs: stationary states, first passage and
//! expected return times.
//!
//! A walk has `k` sites with `d`-dimensional internal space and a transition
//! matrix `B` for each directed edge `j → i`; the step is
//! `ρ'_i = Σ_j B ρ_j B*`. Column normalization `Σ_i B*B = I` at every `j`
//! makes it trace preserving.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{QwalkError, Result};
use crate::matkernel::{c64, C64, EXACT_TOL};

/// Block state: one `d × d` matrix per site.
pub type Blocks = Vec<DMatrix<C64>>;

/// Tolerance under which a singular value of `Φ - I` counts as a zero.
pub const UNIT_EIGEN_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub matrix: DMatrix<C64>,
}

/// A validated finite-graph open walk.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteWalkSpec {
    sites: usize,
    dim: usize,
    transitions: Vec<Transition>,
}

/// Check bounds, shapes and column normalization.
pub fn validate_site_walk(sites: usize, dim: usize, transitions: Vec<Transition>) -> Result<SiteWalkSpec> {
    if sites == 0 || dim == 0 {
        return Err(QwalkError::InvalidInput("need at least one site and dimension one".into()));
    }
    let mut seen = std::collections::HashSet::new();
    let mut column = vec![DMatrix::<C64>::zeros(dim, dim); sites];
    for t in &transitions {
        if t.from >= sites || t.to >= sites {
            return Err(QwalkError::InvalidInput(format!("edge {} -> {} outside {sites} sites", t.from, t.to)));
        }
        if t.matrix.shape() != (dim, dim) {
            return Err(QwalkError::InvalidInput(format!("edge {} -> {} matrix is not {dim}x{dim}", t.from, t.to)));
        }
        if !seen.insert((t.from, t.to)) {
            return Err(QwalkError::InvalidInput(format!("edge {} -> {} given twice", t.from, t.to)));
        }
        column[t.from] += t.matrix.adjoint() * &t.matrix;
    }
    let id = DMatrix::<C64>::identity(dim, dim);
    for (j, c) in column.iter().enumerate() {
        let deviation = (c - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if deviation >= EXACT_TOL {
            return Err(QwalkError::ColumnNotNormalized { column: j, deviation });
        }
    }
    Ok(SiteWalkSpec { sites, dim, transitions })
}

fn real_diag(values: &[f64]) -> DMatrix<C64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(values.len(), values.iter().map(|&v| c64(v, 0.0))))
}

#[derive(Deserialize, Serialize)]
struct TransitionJson {
    from: usize,
    to: usize,
    matrix: Vec<[f64; 2]>,
}

#[derive(Deserialize, Serialize)]
struct SpecJson {
    sites: usize,
    dim: usize,
    transitions: Vec<TransitionJson>,
}

impl SiteWalkSpec {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Parse `{sites, dim, transitions: [{from, to, matrix}]}` where `matrix`
    /// is a flat row-major list of `[re, im]` pairs.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SpecJson = serde_json::from_str(text).map_err(|e| QwalkError::InvalidInput(format!("site walk JSON: {e}")))?;
        let d = raw.dim;
        let transitions = raw
            .transitions
            .into_iter()
            .map(|t| {
                if t.matrix.len() != d * d {
                    return Err(QwalkError::InvalidInput(format!("edge {} -> {} needs {} entries", t.from, t.to, d * d)));
                }
                let matrix = DMatrix::from_row_iterator(d, d, t.matrix.iter().map(|[re, im]| c64(*re, *im)));
                Ok(Transition { from: t.from, to: t.to, matrix })
            })
            .collect::<Result<Vec<_>>>()?;
        validate_site_walk(raw.sites, d, transitions)
    }

    pub fn to_json(&self) -> String {
        let raw = SpecJson {
            sites: self.sites,
            dim: self.dim,
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionJson {
                    from: t.from,
                    to: t.to,
                    matrix: (0..self.dim * self.dim).map(|i| t.matrix[(i / self.dim, i % self.dim)]).map(|z| [z.re, z.im]).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("spec serializes")
    }

    /// Two copies of a birth–death walk on `0..=truncation` with diagonal
    /// steps: right moves use `diag(√p11, √p22)`, left moves `diag(√q11, √q22)`
    /// with `q = 1 - p`. The last site steps back with `I`.
    ///
    /// At site 0 the walk moves to 1 with `I`; with `retaining` it instead
    /// stays with `diag(√q)` and moves with `diag(√p)`.
    pub fn barrier(p11: f64, p22: f64, truncation: usize, retaining: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&p11) || !(0.0..=1.0).contains(&p22) {
            return Err(QwalkError::InvalidInput("barrier probabilities must lie in [0, 1]".into()));
        }
        if truncation < 2 {
            return Err(QwalkError::InvalidInput("barrier truncation must be at least 2".into()));
        }
        let right = real_diag(&[p11.sqrt(), p22.sqrt()]);
        let left = real_diag(&[(1.0 - p11).sqrt(), (1.0 - p22).sqrt()]);
        let id = DMatrix::<C64>::identity(2, 2);
        let mut t = Vec::with_capacity(2 * truncation + 1);
        if retaining {
            t.push(Transition { from: 0, to: 0, matrix: left.clone() });
            t.push(Transition { from: 0, to: 1, matrix: right.clone() });
        } else {
            t.push(Transition { from: 0, to: 1, matrix: id.clone() });
        }
        for i in 1..truncation {
            t.push(Transition { from: i, to: i + 1, matrix: right.clone() });
            t.push(Transition { from: i, to: i - 1, matrix: left.clone() });
        }
        t.push(Transition { from: truncation, to: truncation - 1, matrix: id });
        validate_site_walk(truncation + 1, 2, t)
    }

    /// Two sites exchanging their blocks unchanged.
    pub fn two_site_swap(dim: usize) -> Result<Self> {
        let id = DMatrix::<C64>::identity(dim, dim);
        validate_site_walk(2, dim, vec![Transition { from: 0, to: 1, matrix: id.clone() }, Transition { from: 1, to: 0, matrix: id }])
    }

    /// Classical Markov chain as a `d = 1` walk: `probabilities[j][i]` is the
    /// probability of moving from `j` to `i`.
    pub fn classical(probabilities: &[Vec<f64>]) -> Result<Self> {
        let k = probabilities.len();
        let mut t = Vec::new();
        for (j, row) in probabilities.iter().enumerate() {
            if row.len() != k {
                return Err(QwalkError::InvalidInput("transition table must be square".into()));
            }
            for (i, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    return Err(QwalkError::InvalidInput("negative transition probability".into()));
                }
                if p > 0.0 {
                    t.push(Transition { from: j, to: i, matrix: DMatrix::from_element(1, 1, c64(p.sqrt(), 0.0)) });
                }
            }
        }
        validate_site_walk(k, 1, t)
    }

    /// Nearest-neighbour coin walk on a ring of `sites` sites; site `i` moves
    /// to `i-1` with `L` and to `i+1` with `R`.
    pub fn ring(coin: &crate::walkmodel::CoinPair, sites: usize) -> Result<Self> {
        if sites < 3 {
            return Err(QwalkError::InvalidInput("a ring needs at least 3 sites".into()));
        }
        let to_d = |m: &crate::matkernel::Mat2| DMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
        let mut t = Vec::with_capacity(2 * sites);
        for j in 0..sites {
            t.push(Transition { from: j, to: (j + sites - 1) % sites, matrix: to_d(coin.left()) });
            t.push(Transition { from: j, to: (j + 1) % sites, matrix: to_d(coin.right()) });
        }
        validate_site_walk(sites, 2, t)
    }

    pub fn zero_blocks(&self) -> Blocks {
        vec![DMatrix::zeros(self.dim, self.dim); self.sites]
    }

    /// `ρ ⊗ |x⟩⟨x|`.
    pub fn localized(&self, rho: &DMatrix<C64>, x: usize) -> Result<Blocks> {
        self.check_site(x)?;
        if rho.shape() != (self.dim, self.dim) {
            return Err(QwalkError::InvalidInput(format!("density must be {0}x{0}", self.dim)));
        }
        let mut b = self.zero_blocks();
        b[x] = rho.clone();
        Ok(b)
    }

    fn check_site(&self, x: usize) -> Result<()> {
        if x >= self.sites {
            return Err(QwalkError::InvalidInput(format!("site {x} outside 0..{}", self.sites)));
        }
        Ok(())
    }

    /// The `k d² × k d²` matrix of the channel on stacked row-major `vec`s.
    pub fn channel_matrix(&self) -> DMatrix<C64> {
        let d2 = self.dim * self.dim;
        let mut m = DMatrix::zeros(self.sites * d2, self.sites * d2);
        for t in &self.transitions {
            let k = t.matrix.kronecker(&t.matrix.map(|z| z.conj()));
            let mut view = m.view_mut((t.to * d2, t.from * d2), (d2, d2));
            view += k;
        }
        m
    }

    fn stack(&self, blocks: &Blocks) -> nalgebra::DVector<C64> {
        let d = self.dim;
        nalgebra::DVector::from_iterator(self.sites * d * d, blocks.iter().flat_map(|b| (0..d * d).map(move |i| b[(i / d, i % d)])))
    }
}

/// `ρ'_i = Σ_j B ρ_j B*` over all edges `j → i`.
pub fn general_oqw_step(spec: &SiteWalkSpec, blocks: &Blocks) -> Blocks {
    let mut out = spec.zero_blocks();
    for t in &spec.transitions {
        let src = &blocks[t.from];
        if src.iter().all(|z| *z == c64(0.0, 0.0)) {
            continue;
        }
        out[t.to] += &t.matrix * src * t.matrix.adjoint();
    }
    out
}

pub fn total_trace(blocks: &Blocks) -> f64 {
    blocks.iter().map(|b| b.trace().re).sum()
}

fn distance(a: &Blocks, b: &Blocks) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt()
}

/// Number of singular values of `A - I` below [`UNIT_EIGEN_TOL`].
fn unit_multiplicity(a: &DMatrix<C64>) -> usize {
    let n = a.nrows();
    let shifted = a - DMatrix::<C64>::identity(n, n);
    shifted.singular_values().iter().filter(|&&s| s < UNIT_EIGEN_TOL).count()
}

/// Orthonormal basis of the smallest `M`-invariant subspace containing `v`.
fn krylov_basis(m: &DMatrix<C64>, v: nalgebra::DVector<C64>) -> DMatrix<C64> {
    let mut basis: Vec<nalgebra::DVector<C64>> = Vec::new();
    let mut w = v;
    while basis.len() < m.nrows() {
        let scale = w.norm().max(1.0);
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&w);
                w -= q * c;
            }
        }
        let n = w.norm();
        if n < 1e-10 * scale {
            break;
        }
        let q = w / c64(n, 0.0);
        w = m * &q;
        basis.push(q);
    }
    DMatrix::from_columns(&basis)
}

/// A fixed point of the walk, normalized to unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryState {
    pub blocks: Blocks,
    /// `‖Φ(π) - π‖` (Frobenius over all blocks).
    pub residual: f64,
    pub iterations: usize,
    /// Number of independent fixed points of the channel in the space searched.
    pub multiplicity: usize,
    pub unique: bool,
}

impl StationaryState {
    pub fn site_trace(&self, x: usize) -> f64 {
        self.blocks[x].trace().re
    }
}

/// Iterate `π ← (π + Φ(π))/2` from `start` until the residual drops below `tol`.
/// The averaging removes oscillation on periodic graphs.
fn lazy_fixed_point(spec: &SiteWalkSpec, start: Blocks, tol: f64, max_iterations: usize) -> Result<(Blocks, f64, usize)> {
    let mut pi = start;
    let mut residual = f64::INFINITY;
    for it in 0..max_iterations {
        let next = general_oqw_step(spec, &pi);
        residual = distance(&next, &pi);
        if residual < tol {
            return Ok((pi, residual, it));
        }
        pi = pi.iter().zip(&next).map(|(a, b)| (a + b) * c64(0.5, 0.0)).collect();
        let t = total_trace(&pi);
        pi.iter_mut().for_each(|b| *b /= c64(t, 0.0));
    }
    Err(QwalkError::NotConverged { iterations: max_iterations, residual })
}

/// Stationary state reached from the maximally mixed state, with the
/// multiplicity of eigenvalue 1 of the full channel matrix.
pub fn stationary_state(spec: &SiteWalkSpec, tol: f64, max_iterations: usize) -> Result<StationaryState> {
    let mixed = DMatrix::<C64>::identity(spec.dim, spec.dim) / c64((spec.sites * spec.dim) as f64, 0.0);
    let (blocks, residual, iterations) = lazy_fixed_point(spec, vec![mixed; spec.sites], tol, max_iterations)?;
    let multiplicity = unit_multiplicity(&spec.channel_matrix());
    Ok(StationaryState { blocks, residual, iterations, multiplicity, unique: multiplicity == 1 })
}

/// Stationary state inside the invariant subspace generated by `ρ_x ⊗ |x⟩⟨x|`,
/// with the multiplicity of eigenvalue 1 counted in that subspace.
pub fn sector_stationary_state(spec: &SiteWalkSpec, rho_x: &DMatrix<C64>, x: usize, tol: f64, max_iterations: usize) -> Result<StationaryState> {
    let start = spec.localized(rho_x, x)?;
    let m = spec.channel_matrix();
    let q = krylov_basis(&m, spec.stack(&start));
    let restricted = q.adjoint() * &m * &q;
    let multiplicity = unit_multiplicity(&restricted);
    let (blocks, residual, iterations) = lazy_fixed_point(spec, start, tol, max_iterations)?;
    Ok(StationaryState { blocks, residual, iterations, multiplicity, unique: multiplicity == 1 })
}

/// Sums of first-passage blocks up to a horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstPassageAccumulator {
    pub origin: usize,
    pub rho_x: DMatrix<C64>,
    pub horizon: usize,
    /// `sums[j] = Σ_{n≤N} S^n(j)`: mass at `j` at step `n` over paths that
    /// have not returned to the origin before step `n`.
    pub sums: Blocks,
    /// `survival[n]`: trace not yet returned after step `n`.
    pub survival: Vec<f64>,
}

impl FirstPassageAccumulator {
    pub fn tail_mass(&self) -> f64 {
        *self.survival.last().expect("survival starts with step 0")
    }

    pub fn return_probability(&self) -> f64 {
        self.sums[self.origin].trace().re
    }

    /// Accumulated return density at the origin.
    pub fn return_density(&self) -> &DMatrix<C64> {
        &self.sums[self.origin]
    }
}

/// Taboo evolution from `ρ_x ⊗ |x⟩⟨x|`: every step adds all blocks to the
/// running sums, then removes what sits at `x`.
pub fn first_passage_accumulate(spec: &SiteWalkSpec, rho_x: &DMatrix<C64>, x: usize, horizon: usize) -> Result<FirstPassageAccumulator> {
    let mut state = spec.localized(rho_x, x)?;
    let mut sums = spec.zero_blocks();
    let mut survival = Vec::with_capacity(horizon + 1);
    survival.push(total_trace(&state));
    for _ in 0..horizon {
        state = general_oqw_step(spec, &state);
        for (s, b) in sums.iter_mut().zip(&state) {
            *s += b;
        }
        state[x].fill(c64(0.0, 0.0));
        survival.push(total_trace(&state));
    }
    Ok(FirstPassageAccumulator { origin: x, rho_x: rho_x.clone(), horizon, sums, survival })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReturnTimeEstimate {
    /// `Σ_j tr(sums[j])`.
    pub estimate: f64,
    pub tail_mass: f64,
    /// Geometric extrapolation of the expected time still owed by the surviving mass.
    pub tail_bound: f64,
}

/// Default un-returned mass above which a return time is refused.
pub const DEFAULT_TAIL_LIMIT: f64 = 1e-8;

/// `E_R = Σ_j tr(ρ_st(j))` from an accumulator.
pub fn expected_return_time(acc: &FirstPassageAccumulator, tail_limit: f64) -> Result<ReturnTimeEstimate> {
    let tail_mass = acc.tail_mass();
    if !(tail_mass <= tail_limit) {
        return Err(QwalkError::TailTooLarge { tail_mass, limit: tail_limit });
    }
    let estimate: f64 = acc.sums.iter().map(|b| b.trace().re).sum();
    let n = acc.survival.len() - 1;
    let span = (n / 2).clamp(1, 64);
    let tail_bound = if tail_mass == 0.0 || n < span {
        0.0
    } else {
        let earlier = acc.survival[n - span];
        let ratio = if earlier > 0.0 { (tail_mass / earlier).powf(1.0 / span as f64) } else { 0.0 };
        if ratio < 1.0 {
            tail_mass / (1.0 - ratio)
        } else {
            f64::INFINITY
        }
    };
    Ok(ReturnTimeEstimate { estimate, tail_mass, tail_bound })
}

/// Both sides of `E_R(ρ_x) = 1 / tr(π(x))` and their agreement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KacReport {
    pub site: usize,
    pub expected_return_time: f64,
    pub stationary_trace: f64,
    pub inverse_stationary_trace: f64,
    /// `|E_R - 1/tr π(x)| / (1/tr π(x))`.
    pub gap: f64,
    /// `E_R · tr π(x)`.
    pub product: f64,
    pub tail_mass: f64,
    pub tail_bound: f64,
    pub return_probability: f64,
    /// Accumulated return density at `x`, row-major `[re, im]` pairs.
    pub return_density: Vec<[f64; 2]>,
    /// `max |ρ_st(x) - ρ_x|`; zero means the positive-recurrence condition holds.
    pub return_density_deviation: f64,
    pub sector_multiplicity: usize,
    pub full_multiplicity: usize,
    pub stationary_residual: f64,
}

/// Tolerance and iteration budget for the stationary iteration.
pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITERATIONS: usize = 2_000_000;

/// Compute `E_R(ρ_x)` by first passage and `tr π(x)` by stationary
/// iteration, independently.
pub fn kac_identity_check(spec: &SiteWalkSpec, rho_x: &DMatrix<C64>, x: usize, horizon: usize) -> Result<KacReport> {
    let pi = sector_stationary_state(spec, rho_x, x, STATIONARY_TOL, STATIONARY_MAX_ITERATIONS)?;
    if !pi.unique {
        return Err(QwalkError::NonUnique { multiplicity: pi.multiplicity });
    }
    let acc = first_passage_accumulate(spec, rho_x, x, horizon)?;
    let er = expected_return_time(&acc, DEFAULT_TAIL_LIMIT)?;
    let tr = pi.site_trace(x);
    let inv = 1.0 / tr;
    let d = spec.dim();
    let density = acc.return_density();
    let deviation = (density - rho_x).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(KacReport {
        site: x,
        expected_return_time: er.estimate,
        stationary_trace: tr,
        inverse_stationary_trace: inv,
        gap: (er.estimate - inv).abs() / inv,
        product: er.estimate * tr,
        tail_mass: er.tail_mass,
        tail_bound: er.tail_bound,
        return_probability: acc.return_probability(),
        return_density: (0..d * d).map(|i| density[(i / d, i % d)]).map(|z| [z.re, z.im]).collect(),
        return_density_deviation: deviation,
        sector_multiplicity: pi.multiplicity,
        full_multiplicity: unit_multiplicity(&spec.channel_matrix()),
        stationary_residual: pi.residual,
    })
}

/// `E11` in dimension `d`.
pub fn basis_density(dim: usize, index: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(index, index)] = c64(1.0, 0.0);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walkmodel::{oqw_step, CoinPreset, LatticeDensity};

    fn e11() -> DMatrix<C64> {
        basis_density(2, 0)
    }

    /// Mean return time to `x` by solving `h_i = 1 + Σ_{j≠x} P_ij h_j`.
    fn classical_mean_return(p: &[Vec<f64>], x: usize) -> f64 {
        let k = p.len();
        let others: Vec<usize> = (0..k).filter(|&i| i != x).collect();
        let n = others.len();
        let a = DMatrix::<f64>::from_fn(n, n, |r, c| f64::from(u8::from(r == c)) - p[others[r]][others[c]]);
        let h = a.lu().solve(&nalgebra::DVector::from_element(n, 1.0)).unwrap();
        1.0 + others.iter().enumerate().map(|(r, &j)| p[x][j] * h[r]).sum::<f64>()
    }

    #[test]
    fn validation_cases() {
        assert!(SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 60, false).is_ok());
        assert!(SiteWalkSpec::two_site_swap(2).is_ok());
        let two = DMatrix::<C64>::identity(2, 2) * c64(2f64.sqrt(), 0.0);
        let bad = validate_site_walk(2, 2, vec![Transition { from: 0, to: 1, matrix: two }]);
        assert!(matches!(bad, Err(QwalkError::ColumnNotNormalized { column: 0, .. })));
    }

    #[test]
    fn json_round_trip() {
        let spec = SiteWalkSpec::barrier(0.3, 0.2, 5, true).unwrap();
        assert_eq!(SiteWalkSpec::from_json(&spec.to_json()).unwrap(), spec);
        assert!(SiteWalkSpec::from_json("{\"sites\":1,\"dim\":1,\"transitions\":[]}").is_err());
    }

    #[test]
    fn barrier_first_step_moves_mass_unchanged() {
        let spec = SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 10, false).unwrap();
        let rho = DMatrix::from_row_slice(2, 2, &[c64(0.7, 0.0), c64(0.1, 0.2), c64(0.1, -0.2), c64(0.3, 0.0)]);
        let b = general_oqw_step(&spec, &spec.localized(&rho, 0).unwrap());
        assert_eq!(b[1], rho);
        assert!((total_trace(&b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn swap_exchanges_blocks() {
        let spec = SiteWalkSpec::two_site_swap(2).unwrap();
        let b = vec![e11(), basis_density(2, 1)];
        let s = general_oqw_step(&spec, &b);
        assert_eq!(s, vec![basis_density(2, 1), e11()]);
    }

    #[test]
    fn ring_matches_line_walk() {
        let coin = CoinPreset::NonNormal.coin();
        let spec = SiteWalkSpec::ring(&coin, 21).unwrap();
        let rho = crate::matkernel::Mat2::from_real([[0.6, 0.2], [0.2, 0.4]]);
        let mut line = LatticeDensity::localized(rho, 0);
        let mut ring = spec.localized(&DMatrix::from_fn(2, 2, |i, j| rho[(i, j)]), 10).unwrap();
        for _ in 0..8 {
            line = oqw_step(&line, &coin);
            ring = general_oqw_step(&spec, &ring);
        }
        for site in -8..=8i64 {
            let b = line.block(site);
            let r = &ring[(10 + site) as usize];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((b[(i, j)] - r[(i, j)]).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn barrier_stationary_profile() {
        let spec = SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 60, false).unwrap();
        let pi = sector_stationary_state(&spec, &e11(), 0, 1e-13, 1_000_000).unwrap();
        assert!(pi.unique && pi.residual < 1e-9);
        assert!((pi.site_trace(0) - 0.25).abs() < 1e-9);
        for j in 1..20 {
            let expect = 0.75 * 0.5f64.powi(j as i32);
            assert!((pi.site_trace(j) - expect).abs() < 1e-9, "j={j}");
        }
        let retaining = SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 60, true).unwrap();
        let pi = sector_stationary_state(&retaining, &e11(), 0, 1e-13, 1_000_000).unwrap();
        for j in 0..20 {
            assert!((pi.site_trace(j) - 0.5f64.powi(j as i32 + 1)).abs() < 1e-9, "j={j}");
        }
    }

    #[test]
    fn full_space_multiplicity_counts_sectors() {
        // equal p11 and p22: populations and both coherences each carry a fixed point
        let spec = SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 12, false).unwrap();
        let full = stationary_state(&spec, 1e-13, 1_000_000).unwrap();
        assert_eq!(full.multiplicity, 4);
        assert!(!full.unique);
        let skewed = SiteWalkSpec::barrier(1.0 / 3.0, 0.2, 12, false).unwrap();
        assert_eq!(stationary_state(&skewed, 1e-13, 1_000_000).unwrap().multiplicity, 2);
    }

    #[test]
    fn swap_and_cycle_stationary() {
        let swap = SiteWalkSpec::classical(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let pi = stationary_state(&swap, 1e-13, 10_000).unwrap();
        assert!(pi.unique && (pi.site_trace(0) - 0.5).abs() < 1e-12);
        let cycle = SiteWalkSpec::classical(&[vec![0.0, 0.7, 0.3], vec![0.3, 0.0, 0.7], vec![0.7, 0.3, 0.0]]).unwrap();
        let pi = stationary_state(&cycle, 1e-13, 10_000).unwrap();
        for j in 0..3 {
            assert!((pi.site_trace(j) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_first_passage() {
        let spec = SiteWalkSpec::two_site_swap(2).unwrap();
        let acc = first_passage_accumulate(&spec, &e11(), 1, 10).unwrap();
        assert_eq!(acc.return_probability(), 1.0);
        assert_eq!(acc.sums[0].trace().re, 1.0);
        assert_eq!(acc.survival[1], 1.0);
        assert_eq!(acc.survival[2], 0.0);
        assert_eq!(expected_return_time(&acc, 1e-12).unwrap().estimate, 2.0);
        let k = kac_identity_check(&spec, &e11(), 0, 10).unwrap();
        assert!((k.expected_return_time - 2.0).abs() < 1e-15 && (k.inverse_stationary_trace - 2.0).abs() < 1e-12);
    }

    #[test]
    fn barrier_return_times() {
        let spec = SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 60, false).unwrap();
        let k0 = kac_identity_check(&spec, &e11(), 0, 4000).unwrap();
        assert!((k0.expected_return_time - 4.0).abs() < 1e-9);
        assert!(k0.gap < 1e-9 && k0.return_density_deviation < 1e-9);
        let k2 = kac_identity_check(&spec, &e11(), 2, 4000).unwrap();
        assert!((k2.expected_return_time - 16.0 / 3.0).abs() < 1e-8);
        let retaining = SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 60, true).unwrap();
        let r0 = kac_identity_check(&retaining, &e11(), 0, 4000).unwrap();
        let r2 = kac_identity_check(&retaining, &e11(), 2, 4000).unwrap();
        assert!((r0.expected_return_time - 2.0).abs() < 1e-9);
        assert!((r2.expected_return_time - 8.0).abs() < 1e-8);
    }

    #[test]
    fn short_horizon_is_refused() {
        let spec = SiteWalkSpec::barrier(1.0 / 3.0, 1.0 / 3.0, 60, false).unwrap();
        let acc = first_passage_accumulate(&spec, &e11(), 0, 10).unwrap();
        assert!(matches!(expected_return_time(&acc, 1e-8), Err(QwalkError::TailTooLarge { .. })));
    }

    #[test]
    fn birth_death_matches_classical_oracle() {
        let k = 7;
        let mut p = vec![vec![0.0; k]; k];
        for j in 0..k {
            let up = 0.2 + 0.05 * j as f64;
            match j {
                0 => {
                    p[0][0] = 0.5;
                    p[0][1] = 0.5;
                }
                _ if j == k - 1 => {
                    p[j][j - 1] = 0.6;
                    p[j][j] = 0.4;
                }
                _ => {
                    p[j][j + 1] = up;
                    p[j][j - 1] = 1.0 - up;
                }
            }
        }
        let spec = SiteWalkSpec::classical(&p).unwrap();
        let one = DMatrix::from_element(1, 1, c64(1.0, 0.0));
        for x in [0, 3, 6] {
            let report = kac_identity_check(&spec, &one, x, 20_000).unwrap();
            let oracle = classical_mean_return(&p, x);
            assert!((report.expected_return_time - oracle).abs() < 1e-9 * oracle, "x={x}");
            assert!(report.gap < 1e-9);
        }
    }

    #[test]
    fn return_density_is_stationary_after_scaling() {
        let spec = SiteWalkSpec::barrier(0.3, 0.2, 40, false).unwrap();
        let acc = first_passage_accumulate(&spec, &e11(), 1, 6000).unwrap();
        let er = expected_return_time(&acc, 1e-8).unwrap().estimate;
        let scaled: Blocks = acc.sums.iter().map(|b| b / c64(er, 0.0)).collect();
        let next = general_oqw_step(&spec, &scaled);
        assert!(distance(&next, &scaled) < 1e-6);
    }
}
