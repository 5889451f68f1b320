//! Open and coined quantum walks on the integer line.
//!
//! The crate simulates nearest-neighbour open quantum random walks (OQWs)
//! and their unitary (coined) counterparts, and computes site-recurrence
//! quantities in several independent ways:
//!
//! * [`firstreturn`] enumerates first-return paths exactly (exponential cost);
//! * [`monitored`] evolves the walk with the origin made absorbing (polynomial cost);
//! * [`fourier`] works with the Fourier symbol of the channel and quadrature;
//! * [`criteria`] gives closed-form verdicts from the spectra of `L*L`, `R*R`;
//! * [`kac`] handles finite graphs, stationary states and expected return times.

pub mod criteria;
pub mod error;
pub mod firstreturn;
pub mod fourier;
pub mod kac;
pub mod matkernel;
pub mod monitored;
pub mod walkmodel;

#[doc(hidden)]
pub mod cli;

pub use error::{QwalkError, Result};
pub use matkernel::{c64, Mat2, Mat4, Spinor, C64};
pub use walkmodel::{CoinFlags, CoinPair, CoinPreset, LatticeDensity, SpinorField};
