//! C interface to the supermux allocator.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns an `i32`
//! status (`SMX_OK` on success); on failure a description is available from
//! [`smx_last_error`] on the same thread until the next failing call.
//! Panics never unwind into C: they are caught and reported as `SMX_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use supermux::alloc::{allocate, AllocatorOptions, SurrogateModel};
use supermux::surrogate::{alpha_lookup, SurrogateTable};
use supermux::{ChannelStats, Error, MimoShape, Mode, RateEstimator, Scheme};

pub const SMX_OK: i32 = 0;
pub const SMX_ERR_NULL: i32 = -1;
pub const SMX_ERR_INVALID: i32 = -2;
pub const SMX_ERR_DIMENSION: i32 = -3;
pub const SMX_ERR_NONCONVERGENCE: i32 = -4;
pub const SMX_ERR_RESOURCE: i32 = -5;
pub const SMX_ERR_PARSE: i32 = -6;
pub const SMX_ERR_IO: i32 = -7;
pub const SMX_ERR_PANIC: i32 = -99;

pub const SMX_SCHEME_ALG1: i32 = 0;
pub const SMX_SCHEME_ALG2: i32 = 1;
pub const SMX_SCHEME_UO: i32 = 2;
pub const SMX_SCHEME_MO: i32 = 3;
pub const SMX_SCHEME_OM: i32 = 4;

pub const SMX_MODE_OFF: i32 = 0;
pub const SMX_MODE_UNICAST_ONLY: i32 = 1;
pub const SMX_MODE_MULTICAST_ONLY: i32 = 2;
pub const SMX_MODE_SUPERPOSITION: i32 = 3;

/// Ergodic rate estimator for one MIMO shape.
pub struct SmxEstimator(RateEstimator);

/// Channel statistics: per-subchannel user SNRs with uniform subchannel widths.
pub struct SmxStats(ChannelStats);

/// Rates of an allocation.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct SmxRates {
    /// Multicast rate `R₀`.
    pub r0: f64,
    /// `K·R₀ + Σ Rₖ`.
    pub sum_rate: f64,
    /// `μ·R₀ + Σ Rₖ`.
    pub wsr: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::IndexOutOfRange { .. } => SMX_ERR_INVALID,
        Error::Dimension(_) => SMX_ERR_DIMENSION,
        Error::NonConvergence { .. } => SMX_ERR_NONCONVERGENCE,
        Error::ResourceLimit(_) => SMX_ERR_RESOURCE,
        Error::Parse(_) | Error::Json(_) => SMX_ERR_PARSE,
        Error::Io(_) => SMX_ERR_IO,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> i32
where
    F: FnOnce() -> Result<(), (i32, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SMX_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SMX_ERR_PANIC
        }
    }
}

fn lib<T>(r: supermux::Result<T>) -> Result<T, (i32, String)> {
    r.map_err(|e| (code_of(&e), e.to_string()))
}

fn null(what: &str) -> (i32, String) {
    (SMX_ERR_NULL, format!("{what} is null"))
}

fn scheme_of(code: i32) -> Result<Scheme, (i32, String)> {
    Ok(match code {
        SMX_SCHEME_ALG1 => Scheme::Alg1,
        SMX_SCHEME_ALG2 => Scheme::Alg2,
        SMX_SCHEME_UO => Scheme::Uo,
        SMX_SCHEME_MO => Scheme::Mo,
        SMX_SCHEME_OM => Scheme::Om,
        _ => return Err((SMX_ERR_INVALID, format!("unknown scheme code {code}"))),
    })
}

fn mode_code(m: Mode) -> i32 {
    match m {
        Mode::Off => SMX_MODE_OFF,
        Mode::UnicastOnly => SMX_MODE_UNICAST_ONLY,
        Mode::MulticastOnly => SMX_MODE_MULTICAST_ONLY,
        Mode::Superposition => SMX_MODE_SUPERPOSITION,
    }
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn smx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a rate estimator for an `n_t × n_r` channel from `n_samples`
/// Monte-Carlo draws. With `lookup != 0` rates come from a precomputed table
/// (fast, interpolated); otherwise every call averages over the samples.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn smx_estimator_new(
    n_t: u32,
    n_r: u32,
    n_samples: u64,
    seed: u64,
    lookup: i32,
    out: *mut *mut SmxEstimator,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let shape = lib(MimoShape::new(n_t as usize, n_r as usize))?;
        let est = if lookup != 0 {
            lib(RateEstimator::lookup(shape, n_samples as usize, seed))?
        } else {
            lib(RateEstimator::monte_carlo(shape, n_samples as usize, seed))?
        };
        *out = Box::into_raw(Box::new(SmxEstimator(est)));
        Ok(())
    })
}

/// Releases an estimator. Null is ignored.
///
/// # Safety
/// `est` must be null or a handle from [`smx_estimator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smx_estimator_free(est: *mut SmxEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// `Φ(x) = E log₂ det(I + (x/n_T)·HH†)`.
///
/// # Safety
/// `est` must be a live estimator handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smx_phi_capacity(est: *const SmxEstimator, x: f64, out: *mut f64) -> i32 {
    guard(|| {
        let est = est.as_ref().ok_or_else(|| null("estimator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lib(est.0.phi_capacity(x))?;
        Ok(())
    })
}

/// `φ(x)`, the normalised derivative of `Φ` (equal to 1 at `x = 0`).
///
/// # Safety
/// `est` must be a live estimator handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smx_phi_aux(est: *const SmxEstimator, x: f64, out: *mut f64) -> i32 {
    guard(|| {
        let est = est.as_ref().ok_or_else(|| null("estimator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lib(est.0.phi_aux(x))?;
        Ok(())
    })
}

/// Builds channel statistics from `m × k` linear SNRs, row-major with one
/// row per subchannel. Subchannels get equal bandwidth shares.
///
/// # Safety
/// `snr` must point to `m * k` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smx_stats_new(snr: *const f64, m: usize, k: usize, out: *mut *mut SmxStats) -> i32 {
    guard(|| {
        if snr.is_null() {
            return Err(null("snr"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = m
            .checked_mul(k)
            .filter(|&n| n > 0)
            .ok_or_else(|| (SMX_ERR_DIMENSION, format!("invalid dimensions {m} x {k}")))?;
        let flat = std::slice::from_raw_parts(snr, len);
        let rows = flat.chunks(k).map(<[f64]>::to_vec).collect();
        *out = Box::into_raw(Box::new(SmxStats(lib(ChannelStats::with_uniform_eta(rows))?)));
        Ok(())
    })
}

/// Releases channel statistics. Null is ignored.
///
/// # Safety
/// `stats` must be null or a handle from [`smx_stats_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smx_stats_free(stats: *mut SmxStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// Number of subchannels and users of `stats`.
///
/// # Safety
/// `stats` must be a live handle; `m` and `k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smx_stats_dims(stats: *const SmxStats, m: *mut usize, k: *mut usize) -> i32 {
    guard(|| {
        let s = stats.as_ref().ok_or_else(|| null("stats"))?;
        if m.is_null() || k.is_null() {
            return Err(null("output"));
        }
        *m = s.0.n_subchannels();
        *k = s.0.n_users();
        Ok(())
    })
}

/// Reference surrogate slope `α` for an `n_t × n_r` channel. Shapes missing
/// from the reference table are fitted on the fly with `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smx_reference_alpha(n_t: u32, n_r: u32, seed: u64, out: *mut f64) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let shape = lib(MimoShape::new(n_t as usize, n_r as usize))?;
        *out = lib(alpha_lookup(shape, &SurrogateTable::reference(), seed))?;
        Ok(())
    })
}

/// Allocates power budget `p_t` with `scheme` (an `SMX_SCHEME_*` code) for
/// total multicast weight `mu` and surrogate slope `alpha`. Each per-subchannel
/// output is optional (may be null) and otherwise receives `M` values:
/// total power, unicast power and mode (`SMX_MODE_*`). `rates` is optional.
///
/// # Safety
/// Handles must be live; non-null outputs must hold `M` elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn smx_allocate(
    stats: *const SmxStats,
    est: *const SmxEstimator,
    scheme: i32,
    mu: f64,
    p_t: f64,
    alpha: f64,
    p_total_out: *mut f64,
    p1_out: *mut f64,
    mode_out: *mut i32,
    rates: *mut SmxRates,
) -> i32 {
    guard(|| {
        let stats = stats.as_ref().ok_or_else(|| null("stats"))?;
        let est = est.as_ref().ok_or_else(|| null("estimator"))?;
        let scheme = scheme_of(scheme)?;
        let model = lib(SurrogateModel::new(alpha, est.0.shape().n_r))?;
        let sol = lib(allocate(
            scheme,
            &stats.0,
            mu,
            p_t,
            model,
            &est.0,
            &AllocatorOptions::default(),
        ))?;
        let a = &sol.allocation;
        let m = a.p_total.len();
        if !p_total_out.is_null() {
            std::slice::from_raw_parts_mut(p_total_out, m).copy_from_slice(&a.p_total);
        }
        if !p1_out.is_null() {
            std::slice::from_raw_parts_mut(p1_out, m).copy_from_slice(&a.p1);
        }
        if !mode_out.is_null() {
            let modes = std::slice::from_raw_parts_mut(mode_out, m);
            for (dst, &md) in modes.iter_mut().zip(&a.mode) {
                *dst = mode_code(md);
            }
        }
        if let Some(r) = rates.as_mut() {
            *r = SmxRates {
                r0: sol.rates.r0,
                sum_rate: sol.rates.sum_rate,
                wsr: sol.rates.wsr,
            };
        }
        Ok(())
    })
}
