//! Fourier-space view of the open walk.
//!
//! The channel commutes with translations, so in momentum space it becomes
//! a 4×4 matrix symbol `e^{ik}[L] + e^{-ik}[R]` acting on `vec(ρ)`. The
//! return probability `p₀(n)` is the average of `tr(symbol(k)ⁿ ρ)` over `k`,
//! which the periodic trapezoid rule computes exactly for `M > n` nodes.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QwalkError, Result};
use crate::matkernel::{eigenvalues_4x4, kron, Mat2, Mat4, C64};
use crate::walkmodel::CoinPair;

/// The symbol `k ↦ e^{ik}[L] + e^{-ik}[R]` of a coin pair.
#[derive(Clone, Copy, Debug)]
pub struct ChannelSymbol {
    left: Mat4,
    right: Mat4,
}

impl ChannelSymbol {
    pub fn new(coin: &CoinPair) -> Self {
        Self {
            left: kron(coin.left(), &coin.left().conj()),
            right: kron(coin.right(), &coin.right().conj()),
        }
    }

    pub fn at(&self, k: f64) -> Mat4 {
        self.left * C64::from_polar(1.0, k) + self.right * C64::from_polar(1.0, -k)
    }
}

/// `e^{ik} kron(L, L̄) + e^{-ik} kron(R, R̄)`.
pub fn symbol(coin: &CoinPair, k: f64) -> Mat4 {
    ChannelSymbol::new(coin).at(k)
}

/// Uniform periodic grid `k_m = -π + 2π(m+1)/M`, `m = 0..M`, covering `(-π, π]`.
pub fn periodic_grid(nodes: usize) -> Vec<f64> {
    (0..nodes).map(|m| -PI + 2.0 * PI * (m + 1) as f64 / nodes as f64).collect()
}

fn check_nodes(n: usize, nodes: usize) -> Result<()> {
    if nodes <= n {
        return Err(QwalkError::NodesTooFew { nodes, degree: n });
    }
    Ok(())
}

fn ordered_mean(values: Vec<f64>) -> f64 {
    let len = values.len() as f64;
    values.into_iter().sum::<f64>() / len
}

/// `p₀(n)` as the grid average of `tr(unvec(symbol(k)ⁿ vec ρ))`.
pub fn p0_by_quadrature(coin: &CoinPair, rho: &Mat2, n: usize, nodes: usize) -> Result<f64> {
    check_nodes(n, nodes)?;
    let sym = ChannelSymbol::new(coin);
    let v0 = rho.vec();
    let values: Vec<f64> = periodic_grid(nodes)
        .par_iter()
        .map(|&k| {
            let s = sym.at(k);
            let v = (0..n).fold(v0, |v, _| s.apply(&v));
            Mat2::unvec(&v).trace().re
        })
        .collect();
    Ok(ordered_mean(values))
}

/// `p₀(n)` through the dual symbol `X ↦ e^{ik} L*XL + e^{-ik} R*XR`
/// iterated `n` times on `I`, then paired with `ρ`.
pub fn konno_dual_p0(coin: &CoinPair, rho: &Mat2, n: usize, nodes: usize) -> Result<f64> {
    check_nodes(n, nodes)?;
    let (l, r) = (*coin.left(), *coin.right());
    let (la, ra) = (l.adjoint(), r.adjoint());
    let values: Vec<f64> = periodic_grid(nodes)
        .par_iter()
        .map(|&k| {
            let (ep, em) = (C64::from_polar(1.0, k), C64::from_polar(1.0, -k));
            let y = (0..n).fold(Mat2::identity(), |x, _| (la * x * l) * ep + (ra * x * r) * em);
            (*rho * y).trace().re
        })
        .collect();
    Ok(ordered_mean(values))
}

/// Eigenvalue branches of the symbol over a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub k: Vec<f64>,
    /// `branches[m][j]` is branch `j` at `k[m]`.
    pub branches: Vec<[C64; 4]>,
}

impl SpectralData {
    pub fn spectral_radius(&self) -> f64 {
        self.branches.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in (0..4).filter(|&b| b != a) {
            for c in (0..4).filter(|&c| c != a && c != b) {
                out.push([a, b, c, 6 - a - b - c]);
            }
        }
    }
    out
}

/// Eigenvalues of the symbol at each grid node, with branches continued
/// from node to node by the closest matching. Labels may swap at crossings.
pub fn spectral_curves(coin: &CoinPair, nodes: usize) -> Result<SpectralData> {
    if nodes == 0 {
        return Err(QwalkError::InvalidInput("grid needs at least one node".into()));
    }
    let sym = ChannelSymbol::new(coin);
    let k = periodic_grid(nodes);
    let raw: Vec<[C64; 4]> = k.par_iter().map(|&k| eigenvalues_4x4(&sym.at(k))).collect::<Result<_>>()?;
    let perms = permutations4();
    let mut branches = Vec::with_capacity(nodes);
    let mut prev = raw[0];
    branches.push(prev);
    for eig in &raw[1..] {
        let best = perms
            .iter()
            .min_by(|a, b| {
                let cost = |p: &[usize; 4]| (0..4).map(|j| (eig[p[j]] - prev[j]).norm()).sum::<f64>();
                cost(a).total_cmp(&cost(b))
            })
            .expect("24 permutations");
        prev = [eig[best[0]], eig[best[1]], eig[best[2]], eig[best[3]]];
        branches.push(prev);
    }
    Ok(SpectralData { k, branches })
}

/// Closed-form leading eigenvalue of the symbol for the unital non-normal
/// preset: with `u = cos k`, `ξ = (2u + √(4u²+1))^{1/3}`, `s = ξ - 1/ξ`,
/// the value is `s(s² + 5)/6`.
pub fn non_normal_lambda1(k: f64) -> f64 {
    let u = k.cos();
    let xi = (2.0 * u + (4.0 * u * u + 1.0).sqrt()).cbrt();
    let s = xi - 1.0 / xi;
    s * (s * s + 5.0) / 6.0
}

/// Trapezoid rule with `nodes` intervals for `∫_{-π/2}^{π/2} λ₁(k)ⁿ dk`.
pub fn non_normal_alpha_integral(n: u32, nodes: usize) -> f64 {
    let nodes = nodes.max(1);
    let h = PI / nodes as f64;
    let f = |k: f64| non_normal_lambda1(k).powi(n as i32);
    let inner: f64 = (1..nodes).map(|j| f(-FRAC_PI_2 + j as f64 * h)).sum();
    h * (inner + 0.5 * (f(-FRAC_PI_2) + f(FRAC_PI_2)))
}

/// One row of the `λ₁(k)` against `cos k` comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Lambda1Row {
    pub k: f64,
    pub lambda1: f64,
    pub cos_k: f64,
    pub lambda1_pow: f64,
    pub cos_pow: f64,
}

/// `λ₁(k)`, `cos k` and their `power`-th powers on the periodic grid.
pub fn lambda1_comparison(nodes: usize, power: u32) -> Vec<Lambda1Row> {
    periodic_grid(nodes)
        .into_iter()
        .map(|k| {
            let (l, c) = (non_normal_lambda1(k), k.cos());
            Lambda1Row { k, lambda1: l, cos_k: c, lambda1_pow: l.powi(power as i32), cos_pow: c.powi(power as i32) }
        })
        .collect()
}

/// Fit of the tail decay of `p₀(2n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceDiagnostic {
    pub slope: f64,
    pub diverges_hint: bool,
    pub window: usize,
}

/// Minimum number of nonzero terms for a fit.
pub const MIN_DIAGNOSTIC_TERMS: usize = 20;

/// Least-squares slope of `log p₀(2n)` against `log n` over the trailing
/// `window` nonzero terms (default: the later half, at least 20).
///
/// `even_terms[i]` is `p₀(2(i+1))`. A slope of `-1` or flatter (with 0.05
/// slack) is the signature of a divergent sum; this is a heuristic only.
pub fn divergence_diagnostic(even_terms: &[f64], window: Option<usize>) -> Result<DivergenceDiagnostic> {
    let points: Vec<(f64, f64)> = even_terms
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (((i + 1) as f64).ln(), p.ln()))
        .collect();
    if points.len() < MIN_DIAGNOSTIC_TERMS {
        return Err(QwalkError::InsufficientData { needed: MIN_DIAGNOSTIC_TERMS, got: points.len() });
    }
    let window = window.unwrap_or(points.len() / 2).clamp(MIN_DIAGNOSTIC_TERMS, points.len());
    let tail = &points[points.len() - window..];
    let w = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / w;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / w;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(DivergenceDiagnostic { slope, diverges_hint: slope >= -1.0 + 0.05, window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::c64;
    use crate::monitored::{unmonitored_p0_series, WalkKind};
    use crate::walkmodel::{CoinPreset, InitialState};

    fn binom_half(n: usize, p: f64) -> f64 {
        let m = n / 2;
        let mut b = 1.0;
        for i in 0..m {
            b = b * (n - i) as f64 / (i + 1) as f64;
        }
        b * (p * (1.0 - p)).powi(m as i32)
    }

    #[test]
    fn symbol_at_zero_is_channel_matrix() {
        let coin = CoinPreset::NonNormal.coin();
        let ch = crate::matkernel::channel_matrix(&[*coin.left(), *coin.right()]).unwrap();
        assert!(symbol(&coin, 0.0).max_diff(&ch) < 1e-15);
    }

    #[test]
    fn bitflip_symbol_pattern() {
        let p = 0.3;
        let k = 0.7;
        let s = symbol(&CoinPreset::BitFlip { p }.coin(), k);
        let d = C64::from_polar(p, k);
        let a = C64::from_polar(1.0 - p, -k);
        for i in 0..4 {
            assert!((s[(i, i)] - d).norm() < 1e-15);
            assert!((s[(i, 3 - i)] - a).norm() < 1e-15);
        }
    }

    #[test]
    fn non_normal_symbol_entries() {
        let k = 0.4;
        let s = symbol(&CoinPreset::NonNormal.coin(), k);
        assert!((s[(0, 0)] - c64(2.0 * k.cos() / 3.0, 0.0)).norm() < 1e-15);
        assert!((s[(0, 1)] - C64::from_polar(1.0 / 3.0, k)).norm() < 1e-15);
        assert!((s[(1, 0)] + C64::from_polar(1.0 / 3.0, -k)).norm() < 1e-15);
    }

    #[test]
    fn quadrature_bitflip() {
        let coin = CoinPreset::BitFlip { p: 0.3 }.coin();
        let rho = Mat2::from_real([[0.5, 0.2], [0.2, 0.5]]);
        for n in (2..=20).step_by(2) {
            let q = p0_by_quadrature(&coin, &rho, n, n + 2).unwrap();
            assert!((q - binom_half(n, 0.3)).abs() < 1e-12);
            assert!(p0_by_quadrature(&coin, &rho, n - 1, n + 2).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn quadrature_node_guard() {
        let coin = CoinPreset::Hadamard.coin();
        let r = p0_by_quadrature(&coin, &Mat2::identity().scale_real(0.5), 8, 8);
        assert!(matches!(r, Err(QwalkError::NodesTooFew { nodes: 8, degree: 8 })));
    }

    #[test]
    fn quadrature_matches_lattice_and_dual() {
        for preset in [CoinPreset::Hadamard, CoinPreset::NonNormal] {
            let coin = preset.coin();
            let state = InitialState::named("balanced").unwrap();
            let rho = state.density();
            let lattice = unmonitored_p0_series(&coin, &state, WalkKind::Oqw, 14).unwrap();
            for n in 0..=14 {
                let q = p0_by_quadrature(&coin, &rho, n, n + 2).unwrap();
                let d = konno_dual_p0(&coin, &rho, n, n + 2).unwrap();
                let expect = if n == 0 { 1.0 } else { lattice.term(n) };
                assert!((q - expect).abs() < 1e-11, "{preset} n={n}");
                assert!((d - q).abs() < 1e-11, "{preset} n={n}");
            }
        }
    }

    #[test]
    fn lambda1_special_points() {
        assert!((non_normal_lambda1(0.0) - 1.0).abs() < 1e-14);
        assert!(non_normal_lambda1(FRAC_PI_2).abs() < 1e-15);
        assert!((non_normal_alpha_integral(0, 64) - PI).abs() < 1e-14);
    }

    #[test]
    fn lambda1_is_an_eigenvalue() {
        let coin = CoinPreset::NonNormal.coin();
        let data = spectral_curves(&coin, 512).unwrap();
        for (k, eig) in data.k.iter().zip(&data.branches) {
            let l1 = non_normal_lambda1(*k);
            let cosk = 2.0 * k.cos() / 3.0;
            assert!(eig.iter().any(|z| (z - c64(l1, 0.0)).norm() < 1e-8), "k={k}");
            assert!(eig.iter().any(|z| (z - c64(cosk, 0.0)).norm() < 1e-8), "k={k}");
        }
    }

    #[test]
    fn bitflip_branches() {
        let p = 0.3;
        let data = spectral_curves(&CoinPreset::BitFlip { p }.coin(), 64).unwrap();
        for (k, eig) in data.k.iter().zip(&data.branches) {
            let a = C64::from_polar(p, *k);
            let b = C64::from_polar(1.0 - p, -*k);
            for target in [a + b, a - b] {
                assert_eq!(eig.iter().filter(|z| (**z - target).norm() < 1e-8).count(), 2, "k={k}");
            }
        }
    }

    #[test]
    fn alpha_decreases() {
        let mut prev = f64::INFINITY;
        for n in (2..=40).step_by(2) {
            let a = non_normal_alpha_integral(n, 2048);
            assert!(a > 0.0 && a < prev);
            prev = a;
        }
    }

    #[test]
    fn diagnostic_cases() {
        let half: Vec<f64> = (1..=400).map(|m| binom_half(2 * m, 0.5)).collect();
        let d = divergence_diagnostic(&half, None).unwrap();
        assert!((d.slope + 0.5).abs() < 0.01 && d.diverges_hint);
        let geo: Vec<f64> = (1..=400).map(|m| binom_half(2 * m, 0.3)).collect();
        let d = divergence_diagnostic(&geo, None).unwrap();
        assert!(d.slope < -5.0 && !d.diverges_hint);
        let flat = vec![0.1; 50];
        let d = divergence_diagnostic(&flat, None).unwrap();
        assert!(d.slope.abs() < 1e-12 && d.diverges_hint);
        assert!(matches!(divergence_diagnostic(&flat[..5], None), Err(QwalkError::InsufficientData { .. })));
    }
}
