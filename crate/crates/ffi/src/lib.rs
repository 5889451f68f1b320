//! C ABI over `qwalk`.
//!
//! Coins and site walks are opaque handles created by `qw_*_new`-style
//! calls and released with the matching `*_free`. Every call returns a
//! [`QwStatus`]; on failure the message is available through
//! [`qw_last_error_message`] on the same thread. Complex numbers cross the
//! boundary as [`QwComplex`], matrices in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use qwalk::criteria::{eigen_half_criterion, Verdict};
use qwalk::firstreturn::oqw_first_return_term;
use qwalk::fourier::{non_normal_lambda1, p0_by_quadrature};
use qwalk::kac::{kac_identity_check, SiteWalkSpec};
use qwalk::monitored::{oqw_monitored_series, unmonitored_p0_series, uqw_monitored_series, WalkKind};
use qwalk::walkmodel::{site_distribution, InitialState, LatticeDensity, SpinorField};
use qwalk::{c64, CoinPair, CoinPreset, Mat2, QwalkError, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QwComplex {
    pub re: f64,
    pub im: f64,
}

impl From<QwComplex> for C64 {
    fn from(z: QwComplex) -> Self {
        c64(z.re, z.im)
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotTracePreserving = 3,
    NotUnitarySum = 4,
    CostGuard = 5,
    NoConvergence = 6,
    NonUnique = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QwWalk {
    Open = 0,
    Unitary = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QwVerdict {
    Recurrent = 0,
    TransientForSomeDensity = 1,
    Inconclusive = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QwCoinFlags {
    pub trace_preserving: bool,
    pub unital: bool,
    pub unitary_sum: bool,
    pub left_normal: bool,
    pub right_normal: bool,
    pub pq: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QwCriteria {
    pub verdict: QwVerdict,
    /// Eigenvalues of `L*L`, ascending.
    pub lstar_l: [f64; 2],
    /// Eigenvalues of `R*R`, ascending.
    pub rstar_r: [f64; 2],
    pub singular_lower: f64,
    pub singular_upper: f64,
    pub pq: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QwKacReport {
    pub expected_return_time: f64,
    pub stationary_trace: f64,
    pub gap: f64,
    pub product: f64,
    pub tail_mass: f64,
    pub return_probability: f64,
    pub return_density_deviation: f64,
}

/// Opaque coin pair.
pub struct QwCoin {
    inner: CoinPair,
}

/// Opaque finite site walk.
pub struct QwSiteWalk {
    inner: SiteWalkSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &QwalkError) -> QwStatus {
    match err {
        QwalkError::NotTracePreserving { .. } => QwStatus::NotTracePreserving,
        QwalkError::CoinNotUnitarySum { .. } => QwStatus::NotUnitarySum,
        QwalkError::CostGuardExceeded { .. } => QwStatus::CostGuard,
        QwalkError::NoConvergence { .. }
        | QwalkError::NotConverged { .. }
        | QwalkError::TailTooLarge { .. }
        | QwalkError::DegenerateStep { .. } => QwStatus::NoConvergence,
        QwalkError::NonUnique { .. } => QwStatus::NonUnique,
        _ => QwStatus::InvalidArgument,
    }
}

enum Failure {
    Status(QwStatus, String),
    Lib(QwalkError),
}

impl From<QwalkError> for Failure {
    fn from(e: QwalkError) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(QwStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Status(QwStatus::InvalidArgument, msg.into())
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QwStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            QwStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes `len` writable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: non-null output pointers are valid for a write per the API contract.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn coin_ref<'a>(coin: *const QwCoin) -> Result<&'a CoinPair, Failure> {
    // SAFETY: a non-null coin came from `qw_coin_new` or `qw_coin_preset`.
    unsafe { coin.as_ref() }.map(|c| &c.inner).ok_or_else(|| null("coin"))
}

fn mat2(e: &[QwComplex]) -> Mat2 {
    Mat2::from_rows([[e[0].into(), e[1].into()], [e[2].into(), e[3].into()]])
}

/// Two entries give a spinor, four a density.
unsafe fn state(p: *const QwComplex, len: usize) -> Result<InitialState, Failure> {
    let e = unsafe { slice(p, len, "state") }?;
    let s = match len {
        2 => InitialState::Pure([e[0].into(), e[1].into()]),
        4 => InitialState::Mixed(mat2(e)),
        n => return Err(invalid(format!("state needs 2 or 4 entries, got {n}"))),
    };
    s.validate()?;
    Ok(s)
}

fn walk_kind(walk: QwWalk) -> WalkKind {
    match walk {
        QwWalk::Open => WalkKind::Oqw,
        QwWalk::Unitary => WalkKind::Uqw,
    }
}

fn pure(s: &InitialState) -> Result<[C64; 2], Failure> {
    s.spinor().ok_or_else(|| invalid("the unitary walk needs a 2-entry spinor"))
}

fn fill(dst: &mut [f64], src: &[f64]) -> Result<(), Failure> {
    if dst.len() < src.len() {
        return Err(Failure::Status(QwStatus::BufferTooSmall, format!("buffer holds {}, need {}", dst.len(), src.len())));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL;
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qw_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                // SAFETY: buf has at least one writable byte.
                unsafe { *buf = 0 };
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: n + 1 <= len bytes are writable at buf.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Build a coin from row-major `left[4]` and `right[4]`.
///
/// # Safety
/// `left` and `right` point to 4 entries each; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_coin_new(left: *const QwComplex, right: *const QwComplex, out_coin: *mut *mut QwCoin) -> QwStatus {
    guard(|| {
        let l = mat2(unsafe { slice(left, 4, "left") }?);
        let r = mat2(unsafe { slice(right, 4, "right") }?);
        let dst = unsafe { out(out_coin, "out_coin") }?;
        *dst = Box::into_raw(Box::new(QwCoin { inner: CoinPair::new(l, r)? }));
        Ok(())
    })
}

/// Preset by name (`hadamard`, `bitflip`, `sec7`, `diag-trichotomy`).
/// `p` is read only by `bitflip`.
///
/// # Safety
/// `name` is a NUL-terminated string; `out_coin` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_coin_preset(name: *const c_char, p: f64, out_coin: *mut *mut QwCoin) -> QwStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let name = unsafe { CStr::from_ptr(name) }.to_str().map_err(|_| invalid("name is not UTF-8"))?;
        let preset = CoinPreset::parse(name, Some(p))?;
        let dst = unsafe { out(out_coin, "out_coin") }?;
        *dst = Box::into_raw(Box::new(QwCoin { inner: preset.coin() }));
        Ok(())
    })
}

/// # Safety
/// `coin` is null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn qw_coin_free(coin: *mut QwCoin) {
    if !coin.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(coin) });
    }
}

/// # Safety
/// `coin` is a live handle; `out_flags` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_coin_flags(coin: *const QwCoin, out_flags: *mut QwCoinFlags) -> QwStatus {
    guard(|| {
        let f = unsafe { coin_ref(coin) }?.flags();
        *unsafe { out(out_flags, "out_flags") }? = QwCoinFlags {
            trace_preserving: f.trace_preserving,
            unital: f.unital,
            unitary_sum: f.unitary_sum,
            left_normal: f.left_normal,
            right_normal: f.right_normal,
            pq: f.pq,
        };
        Ok(())
    })
}

/// Monitored first-return probabilities at the origin. Writes
/// `horizon + 1` values (`out[0] = 0`).
///
/// # Safety
/// `state` has `state_len` entries; `out` has `out_len` writable slots.
#[no_mangle]
pub unsafe extern "C" fn qw_first_return_series(
    coin: *const QwCoin,
    walk: QwWalk,
    state: *const QwComplex,
    state_len: usize,
    horizon: usize,
    out_terms: *mut f64,
    out_len: usize,
) -> QwStatus {
    guard(|| {
        let coin = unsafe { coin_ref(coin) }?;
        let s = unsafe { self::state(state, state_len) }?;
        let dst = unsafe { slice_mut(out_terms, out_len, "out_terms") }?;
        let run = match walk {
            QwWalk::Open => oqw_monitored_series(coin, &s.density(), 0, horizon)?,
            QwWalk::Unitary => uqw_monitored_series(coin, &pure(&s)?, 0, horizon)?,
        };
        fill(dst, run.series.terms())
    })
}

/// Open-walk first-return probability at step `2k` by path enumeration.
///
/// # Safety
/// `density` has 4 entries; `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_first_return_exact(coin: *const QwCoin, density: *const QwComplex, k: usize, out_value: *mut f64) -> QwStatus {
    guard(|| {
        let coin = unsafe { coin_ref(coin) }?;
        let rho = mat2(unsafe { slice(density, 4, "density") }?);
        InitialState::Mixed(rho).validate()?;
        *unsafe { out(out_value, "out_value") }? = oqw_first_return_term(coin, &rho, k)?;
        Ok(())
    })
}

/// Unmonitored probability of being at the origin, steps `0..=horizon`.
///
/// # Safety
/// As [`qw_first_return_series`].
#[no_mangle]
pub unsafe extern "C" fn qw_unmonitored_p0(
    coin: *const QwCoin,
    walk: QwWalk,
    state: *const QwComplex,
    state_len: usize,
    horizon: usize,
    out_terms: *mut f64,
    out_len: usize,
) -> QwStatus {
    guard(|| {
        let coin = unsafe { coin_ref(coin) }?;
        let s = unsafe { self::state(state, state_len) }?;
        let dst = unsafe { slice_mut(out_terms, out_len, "out_terms") }?;
        let series = unmonitored_p0_series(coin, &s, walk_kind(walk), horizon)?;
        let mut terms = series.terms().to_vec();
        terms[0] = 1.0;
        fill(dst, &terms)
    })
}

/// `p₀(n)` by periodic quadrature of the channel symbol on `nodes` points.
///
/// # Safety
/// `density` has 4 entries; `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_p0_quadrature(coin: *const QwCoin, density: *const QwComplex, n: usize, nodes: usize, out_value: *mut f64) -> QwStatus {
    guard(|| {
        let coin = unsafe { coin_ref(coin) }?;
        let rho = mat2(unsafe { slice(density, 4, "density") }?);
        InitialState::Mixed(rho).validate()?;
        *unsafe { out(out_value, "out_value") }? = p0_by_quadrature(coin, &rho, n, nodes)?;
        Ok(())
    })
}

/// Site distribution after `time` steps from the origin. Writes `2·time + 1`
/// values; index `i` is site `i - time`.
///
/// # Safety
/// As [`qw_first_return_series`].
#[no_mangle]
pub unsafe extern "C" fn qw_site_distribution(
    coin: *const QwCoin,
    walk: QwWalk,
    state: *const QwComplex,
    state_len: usize,
    time: usize,
    out_probs: *mut f64,
    out_len: usize,
) -> QwStatus {
    guard(|| {
        let coin = unsafe { coin_ref(coin) }?;
        let s = unsafe { self::state(state, state_len) }?;
        let dst = unsafe { slice_mut(out_probs, out_len, "out_probs") }?;
        let dist = match walk {
            QwWalk::Open => site_distribution(&LatticeDensity::localized(s.density(), 0), time, coin)?,
            QwWalk::Unitary => site_distribution(&SpinorField::localized(pure(&s)?, 0), time, coin)?,
        };
        let t = time as i64;
        let values: Vec<f64> = (-t..=t).map(|x| dist.get(&x).copied().unwrap_or(0.0)).collect();
        fill(dst, &values)
    })
}

/// Closed-form recurrence verdict.
///
/// # Safety
/// `coin` is a live handle; `out_criteria` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_criteria(coin: *const QwCoin, out_criteria: *mut QwCriteria) -> QwStatus {
    guard(|| {
        let v = eigen_half_criterion(unsafe { coin_ref(coin) }?)?;
        *unsafe { out(out_criteria, "out_criteria") }? = QwCriteria {
            verdict: match v.verdict {
                Verdict::Recurrent => QwVerdict::Recurrent,
                Verdict::TransientForSomeDensity => QwVerdict::TransientForSomeDensity,
                Verdict::Inconclusive => QwVerdict::Inconclusive,
            },
            lstar_l: v.eigenvalues.lstar_l,
            rstar_r: v.eigenvalues.rstar_r,
            singular_lower: v.singular_bounds[0],
            singular_upper: v.singular_bounds[1],
            pq: v.pq,
        };
        Ok(())
    })
}

/// Site walk from JSON `{sites, dim, transitions: [{from, to, matrix}]}`.
///
/// # Safety
/// `json` is NUL-terminated; `out_walk` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_sitewalk_from_json(json: *const c_char, out_walk: *mut *mut QwSiteWalk) -> QwStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let text = unsafe { CStr::from_ptr(json) }.to_str().map_err(|_| invalid("json is not UTF-8"))?;
        let spec = SiteWalkSpec::from_json(text)?;
        *unsafe { out(out_walk, "out_walk") }? = Box::into_raw(Box::new(QwSiteWalk { inner: spec }));
        Ok(())
    })
}

/// Half-line barrier walk truncated at `last_site`.
///
/// # Safety
/// `out_walk` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_sitewalk_barrier(p11: f64, p22: f64, last_site: usize, retaining: bool, out_walk: *mut *mut QwSiteWalk) -> QwStatus {
    guard(|| {
        let spec = SiteWalkSpec::barrier(p11, p22, last_site, retaining)?;
        *unsafe { out(out_walk, "out_walk") }? = Box::into_raw(Box::new(QwSiteWalk { inner: spec }));
        Ok(())
    })
}

/// # Safety
/// `walk` is null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn qw_sitewalk_free(walk: *mut QwSiteWalk) {
    if !walk.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(walk) });
    }
}

/// Expected return time to `x` from `rho_x` (dim × dim, row-major) against
/// the stationary trace at `x`.
///
/// # Safety
/// `rho_x` has `rho_len` entries; `out_report` is writable.
#[no_mangle]
pub unsafe extern "C" fn qw_kac_check(
    walk: *const QwSiteWalk,
    rho_x: *const QwComplex,
    rho_len: usize,
    x: usize,
    horizon: usize,
    out_report: *mut QwKacReport,
) -> QwStatus {
    guard(|| {
        // SAFETY: a non-null walk came from a qw_sitewalk_* constructor.
        let spec = &unsafe { walk.as_ref() }.ok_or_else(|| null("walk"))?.inner;
        let d = spec.dim();
        if rho_len != d * d {
            return Err(invalid(format!("rho_x needs {} entries, got {rho_len}", d * d)));
        }
        let e = unsafe { slice(rho_x, rho_len, "rho_x") }?;
        let rho = DMatrix::from_fn(d, d, |i, j| C64::from(e[i * d + j]));
        let r = kac_identity_check(spec, &rho, x, horizon)?;
        *unsafe { out(out_report, "out_report") }? = QwKacReport {
            expected_return_time: r.expected_return_time,
            stationary_trace: r.stationary_trace,
            gap: r.gap,
            product: r.product,
            tail_mass: r.tail_mass,
            return_probability: r.return_probability,
            return_density_deviation: r.return_density_deviation,
        };
        Ok(())
    })
}

/// Leading symbol eigenvalue of the unital non-normal preset at momentum `k`.
#[no_mangle]
pub extern "C" fn qw_non_normal_lambda1(k: f64) -> f64 {
    non_normal_lambda1(k)
}
