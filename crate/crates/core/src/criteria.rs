//! Closed-form recurrence verdicts from the spectra of `L*L` and `R*R`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{QwalkError, Result};
use crate::matkernel::{hermitian_eigen, singular_values, Mat2};
use crate::walkmodel::{is_pq_pair, CoinPair};

/// Tolerance for "eigenvalue equals 1/2" and for normality in verdicts.
pub const HALF_TOL: f64 = 1e-10;
/// Coins whose eigenvalues all sit this close to 1/2 (but not within
/// [`HALF_TOL`]) get no sharp verdict.
pub const NEAR_BOUNDARY_BAND: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Recurrent,
    TransientForSomeDensity,
    Inconclusive,
}

/// Rule that produced a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// All eigenvalues of `L*L` and `R*R` equal 1/2.
    EigenHalfForward,
    /// Both matrices normal, some eigenvalue differs from 1/2.
    EigenHalfConverseNormal,
    /// Unital pair with one normal matrix, some eigenvalue differs from 1/2.
    EigenHalfConverseUnital,
    /// Eigenvalues within the near-boundary band of 1/2.
    NearBoundary,
    NoApplicableRule,
}

/// Verdict with the data it was derived from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceVerdict {
    pub verdict: Verdict,
    pub rule: Rule,
    pub note: Option<String>,
    pub eigenvalues: SpectrumPair,
    pub singular_bounds: [f64; 2],
    pub pq: bool,
    /// Exact return probability for the eigenbasis densities, when known.
    pub per_density_return: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumPair {
    #[serde(rename = "LstarL")]
    pub lstar_l: [f64; 2],
    #[serde(rename = "RstarR")]
    pub rstar_r: [f64; 2],
}

/// `1 - √(1 - 4y)`, the classical first-return generating function at `y ≤ 1/4`.
pub fn return_generating_function(y: f64) -> f64 {
    1.0 - (1.0 - 4.0 * y).max(0.0).sqrt()
}

/// `Σ_{r=1}^{K} C(2r, r)/(2r - 1) · yʳ`, summed term by term.
pub fn generating_partial_sum(y: f64, k_max: usize) -> f64 {
    let mut term = 2.0 * y;
    let mut sum = 0.0;
    for r in 1..=k_max {
        sum += term;
        term *= 2.0 * (2 * r - 1) as f64 * y / (r + 1) as f64;
    }
    sum
}

/// `1 - |1 - 2x|`: the return probability of a direction whose step weights are `x` and `1 - x`.
pub fn balanced_return(x: f64) -> f64 {
    1.0 - (1.0 - 2.0 * x).abs()
}

pub fn detect_pq(coin: &CoinPair) -> bool {
    is_pq_pair(coin.left(), coin.right())
}

fn spectra(coin: &CoinPair) -> Result<SpectrumPair> {
    let l = hermitian_eigen(&(coin.left().adjoint() * *coin.left()))?;
    let r = hermitian_eigen(&(coin.right().adjoint() * *coin.right()))?;
    Ok(SpectrumPair { lstar_l: l.values, rstar_r: r.values })
}

/// Lower and upper bounds on the open-walk return probability from the
/// extreme singular values of `L` and `R`.
pub fn singular_value_bounds(coin: &CoinPair) -> (f64, f64) {
    let (lmax, lmin) = singular_values(coin.left());
    let (rmax, rmin) = singular_values(coin.right());
    let y_min = (lmin * rmin).powi(2);
    let y_max = (lmax * rmax).powi(2);
    let lower = return_generating_function(y_min);
    let upper = if y_max <= 0.25 { return_generating_function(y_max).min(1.0) } else { 1.0 };
    (lower, upper)
}

/// Exact return probability for a normal pair:
/// `(1 - |1-2λ|) x₁₁ + (1 - |1-2μ|)(1 - x₁₁)`, with `λ, μ` the eigenvalues
/// of `L*L` and `x₁₁` the weight of `ρ` on the first eigenvector.
pub fn normal_return_probability(coin: &CoinPair, rho: &Mat2) -> Result<f64> {
    let (l, r) = (coin.left(), coin.right());
    if !l.is_normal(HALF_TOL) || !r.is_normal(HALF_TOL) {
        return Err(QwalkError::HypothesisViolated("L and R must both be normal".into()));
    }
    let ll = l.adjoint() * *l;
    let rr = r.adjoint() * *r;
    if (ll * rr - rr * ll).max_abs() > HALF_TOL {
        return Err(QwalkError::HypothesisViolated("L*L and R*R must commute".into()));
    }
    let eig = hermitian_eigen(&ll)?;
    let u = eig.vectors;
    let x11 = (u.adjoint() * *rho * u)[(0, 0)].re / rho.trace().re;
    let [lambda, mu] = eig.values;
    Ok(balanced_return(lambda) * x11 + balanced_return(mu) * (1.0 - x11))
}

fn is_near_half(values: &[f64], tol: f64) -> bool {
    values.iter().all(|v| (v - 0.5).abs() <= tol)
}

fn eigenbasis_returns(coin: &CoinPair) -> Result<BTreeMap<String, f64>> {
    let ll = coin.left().adjoint() * *coin.left();
    let eig = hermitian_eigen(&ll)?;
    let diagonal = ll[(0, 1)].norm() <= 1e-12;
    let mut out = BTreeMap::new();
    for (i, label) in ["E11", "E22"].iter().enumerate() {
        let mut e = Mat2::zeros();
        e[(i, i)] = crate::matkernel::c64(1.0, 0.0);
        let rho = eig.vectors * e * eig.vectors.adjoint();
        let key = if diagonal { (*label).to_string() } else { format!("U {label} U*") };
        out.insert(key, normal_return_probability(coin, &rho)?);
    }
    Ok(out)
}

/// Verdict from the eigenvalues of `L*L` and `R*R`.
///
/// All equal to 1/2 gives recurrence. Otherwise a normal pair (or a
/// unital pair with one normal matrix) is transient for some density.
/// Everything else is inconclusive.
pub fn eigen_half_criterion(coin: &CoinPair) -> Result<RecurrenceVerdict> {
    let eigenvalues = spectra(coin)?;
    let all: Vec<f64> = eigenvalues.lstar_l.iter().chain(&eigenvalues.rstar_r).copied().collect();
    let (lo, hi) = singular_value_bounds(coin);
    let (l, r) = (coin.left(), coin.right());
    let (ln, rn) = (l.is_normal(HALF_TOL), r.is_normal(HALF_TOL));
    let mut note = None;
    let mut per_density_return = None;
    let (verdict, rule) = if is_near_half(&all, HALF_TOL) {
        (Verdict::Recurrent, Rule::EigenHalfForward)
    } else if is_near_half(&all, NEAR_BOUNDARY_BAND) {
        note = Some(format!("eigenvalues within {NEAR_BOUNDARY_BAND:e} of 1/2 but not within {HALF_TOL:e}"));
        (Verdict::Inconclusive, Rule::NearBoundary)
    } else if ln && rn {
        per_density_return = Some(eigenbasis_returns(coin)?);
        (Verdict::TransientForSomeDensity, Rule::EigenHalfConverseNormal)
    } else if coin.flags().unital && (ln || rn) {
        note = Some("remark branch, untested against a reference value".into());
        (Verdict::TransientForSomeDensity, Rule::EigenHalfConverseUnital)
    } else {
        (Verdict::Inconclusive, Rule::NoApplicableRule)
    };
    Ok(RecurrenceVerdict {
        verdict,
        rule,
        note,
        eigenvalues,
        singular_bounds: [lo, hi],
        pq: detect_pq(coin),
        per_density_return,
    })
}
