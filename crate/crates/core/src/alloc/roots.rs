//! Safeguarded Newton–Raphson for monotone scalar functions.

use crate::error::{Error, Result};

/// Finds the zero of a monotone `f` inside `[lo, hi]`, where `f(lo)` and
/// `f(hi)` have opposite signs (or one is zero). Newton steps that leave the
/// bracket, or fail to halve it, are replaced by bisection.
pub(crate) fn safeguarded_newton<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    f_tol: f64,
    max_newton: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NonConvergence {
            solver: "newton",
            iterations: 0,
            detail: format!("root not bracketed: f({lo})={f_lo}, f({hi})={f_hi}"),
        });
    }
    let increasing = f_hi > f_lo;
    let mut x = x0.clamp(lo, hi);
    // newton phase, then plain bisection until the bracket collapses
    let max_total = max_newton + 2_000;
    for it in 0..max_total {
        let (fx, dfx) = f(x);
        if fx.abs() <= f_tol {
            return Ok(x);
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) * 4.0 {
            return Ok(0.5 * (lo + hi));
        }
        let newton = x - fx / dfx;
        let use_newton = it < max_newton && dfx != 0.0 && newton.is_finite() && newton > lo && newton < hi;
        x = if use_newton { newton } else { 0.5 * (lo + hi) };
    }
    Err(Error::NonConvergence {
        solver: "newton",
        iterations: max_total,
        detail: format!("bracket [{lo}, {hi}]"),
    })
}
