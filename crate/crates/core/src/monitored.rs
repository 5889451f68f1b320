//! Monitored first returns by taboo evolution, and unmonitored `p₀(n)`.
//!
//! The walk is evolved on the lattice; after each step whatever has
//! arrived at the origin is recorded and removed. What survives at step `n`
//! is exactly the sum over paths that have not yet returned, so the
//! recorded mass equals the first-return path sums at polynomial cost.

use serde::Serialize;

use crate::error::{QwalkError, Result};
use crate::firstreturn::{ReturnSeries, SeriesKind};
use crate::fourier::divergence_diagnostic;
use crate::matkernel::{spinor_norm_sqr, Mat2, Spinor};
use crate::walkmodel::{oqw_step, uqw_step_unchecked, CoinPair, InitialState, LatticeDensity, SpinorField};

/// Which walk a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkKind {
    Oqw,
    Uqw,
}

/// Result of a monitored run up to a horizon `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitoredRun {
    pub kind: WalkKind,
    pub origin: i64,
    pub series: ReturnSeries,
    /// `survival[n]`: mass not yet returned after step `n`.
    pub survival: Vec<f64>,
    /// Open walk only: the block arriving at the origin at each step.
    pub arrivals: Vec<Mat2>,
}

impl MonitoredRun {
    pub fn horizon(&self) -> usize {
        self.series.horizon()
    }

    pub fn cumulative(&self) -> f64 {
        self.series.total()
    }
}

/// `‖a_n ψ‖²` for `n = 1..=horizon`, by projecting out the origin after each step.
pub fn uqw_monitored_series(coin: &CoinPair, psi: &Spinor, origin: i64, horizon: usize) -> Result<MonitoredRun> {
    coin.require_unitary_sum()?;
    let mut field = SpinorField::localized(*psi, origin);
    let mut terms = vec![0.0; horizon + 1];
    let mut survival = vec![spinor_norm_sqr(psi); horizon + 1];
    for n in 1..=horizon {
        field = uqw_step_unchecked(&field, coin);
        terms[n] = spinor_norm_sqr(&field.take_amplitude(origin));
        survival[n] = field.total_norm_sqr();
    }
    Ok(MonitoredRun {
        kind: WalkKind::Uqw,
        origin,
        series: ReturnSeries::new(SeriesKind::UqwMonitored, terms)?,
        survival,
        arrivals: Vec::new(),
    })
}

/// Trace arriving at the origin at each step, with the origin absorbing.
pub fn oqw_monitored_series(coin: &CoinPair, rho: &Mat2, origin: i64, horizon: usize) -> Result<MonitoredRun> {
    let mut state = LatticeDensity::localized(*rho, origin);
    let mut terms = vec![0.0; horizon + 1];
    let mut survival = vec![rho.trace().re; horizon + 1];
    let mut arrivals = vec![Mat2::zeros(); horizon + 1];
    for n in 1..=horizon {
        state = oqw_step(&state, coin);
        let arrived = state.take_block(origin);
        terms[n] = arrived.trace().re;
        arrivals[n] = arrived;
        survival[n] = state.total_trace();
    }
    Ok(MonitoredRun {
        kind: WalkKind::Oqw,
        origin,
        series: ReturnSeries::new(SeriesKind::OqwMonitored, terms)?,
        survival,
        arrivals,
    })
}

/// Probability of being at the start at time `n`, without monitoring.
///
/// The open walk is used for [`WalkKind::Oqw`] (with the density of
/// `state`); the unitary walk needs a pure state and a unitary-sum coin.
pub fn unmonitored_p0_series(coin: &CoinPair, state: &InitialState, walk: WalkKind, horizon: usize) -> Result<ReturnSeries> {
    let mut terms = vec![0.0; horizon + 1];
    match walk {
        WalkKind::Oqw => {
            let mut s = LatticeDensity::localized(state.density(), 0);
            for t in terms.iter_mut().skip(1) {
                s = oqw_step(&s, coin);
                *t = s.block(0).trace().re;
            }
        }
        WalkKind::Uqw => {
            coin.require_unitary_sum()?;
            let psi = state
                .spinor()
                .ok_or_else(|| QwalkError::InvalidInput("the unitary walk needs a pure initial state".into()))?;
            let mut s = SpinorField::localized(psi, 0);
            for t in terms.iter_mut().skip(1) {
                s = uqw_step_unchecked(&s, coin);
                *t = spinor_norm_sqr(&s.amplitude(0));
            }
        }
    }
    ReturnSeries::new(SeriesKind::UnmonitoredP0, terms)
}

/// Truncated Pólya number and divergence heuristic of an unmonitored series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PolyaEstimate {
    pub horizon: usize,
    /// `1 - Π_{n≤N} (1 - p₀(n))`.
    pub partial: f64,
    /// `Σ_{n≤N} p₀(n)`.
    pub partial_sum: f64,
    /// Log-log slope of the even terms; absent when there are too few nonzero terms.
    pub slope: Option<f64>,
    pub diverges_hint: bool,
}

/// Pólya partial product and divergence hint up to step `horizon`.
pub fn polya_number(series: &ReturnSeries, horizon: usize) -> Result<PolyaEstimate> {
    if series.kind() != SeriesKind::UnmonitoredP0 {
        return Err(QwalkError::InvalidInput("the Pólya number needs an unmonitored series".into()));
    }
    let horizon = horizon.min(series.horizon());
    let mut prod = 1.0;
    let mut sum = 0.0;
    for n in 1..=horizon {
        let p = series.term(n);
        if !(0.0..=1.0).contains(&p) {
            return Err(QwalkError::TermOutOfRange { step: n, value: p });
        }
        prod *= 1.0 - p;
        sum += p;
    }
    let even: Vec<f64> = (1..=horizon / 2).map(|m| series.term(2 * m)).collect();
    let (slope, diverges_hint) = match divergence_diagnostic(&even, None) {
        Ok(d) => (Some(d.slope), d.diverges_hint),
        Err(QwalkError::InsufficientData { .. }) => (None, false),
        Err(e) => return Err(e),
    };
    Ok(PolyaEstimate { horizon, partial: 1.0 - prod, partial_sum: sum, slope, diverges_hint })
}
