//! Power allocation over OFDMA subchannels for superposed multicast and
//! unicast layers.
//!
//! Every scheme works on scalar covariances: subchannel `i` receives total
//! power `P⁽ⁱ⁾`, of which `P₁⁽ⁱ⁾` carries the unicast message of the
//! strongest user and `P₀⁽ⁱ⁾ = P⁽ⁱ⁾ − P₁⁽ⁱ⁾` the multicast message.
//!
//! The inner maximisation uses the surrogate `φ̂(x) = (1 + αx)⁻¹` for all root
//! finding; the outer minimisation over the multicast weight vector `μ` uses
//! the exact rate function from a [`RateEstimator`].

mod outer;
mod roots;

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelStats;
use crate::error::{Error, Result};
use crate::rates::{multicast_rates, rate_tuple, RateEstimator, RateResult};

pub use outer::{outer_minimize, project_simplex, OuterResult};
use roots::safeguarded_newton;

/// Transmission mode chosen on one subchannel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Off,
    UnicastOnly,
    MulticastOnly,
    Superposition,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::UnicastOnly, Mode::MulticastOnly, Mode::Superposition, Mode::Off];

    /// Mode implied by a subchannel's total and unicast powers.
    pub fn classify(p_total: f64, p1: f64) -> Mode {
        if p_total <= 0.0 {
            Mode::Off
        } else if p1 <= 0.0 {
            Mode::MulticastOnly
        } else if p1 >= p_total {
            Mode::UnicastOnly
        } else {
            Mode::Superposition
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Off => "off",
            Mode::UnicastOnly => "unicast-only",
            Mode::MulticastOnly => "multicast-only",
            Mode::Superposition => "superposition",
        }
    }
}

/// Resource allocation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Surrogate water-filling with per-subchannel power split.
    Alg1,
    /// Uniform power over subchannels, closed-form split.
    Alg2,
    /// Unicast only.
    Uo,
    /// Multicast only.
    Mo,
    /// Orthogonal multiplexing: a fixed share of subchannels for multicast.
    Om,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Alg1, Scheme::Alg2, Scheme::Uo, Scheme::Mo, Scheme::Om];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Alg1 => "alg1",
            Scheme::Alg2 => "alg2",
            Scheme::Uo => "uo",
            Scheme::Mo => "mo",
            Scheme::Om => "om",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alg1" => Ok(Scheme::Alg1),
            "alg2" => Ok(Scheme::Alg2),
            "uo" => Ok(Scheme::Uo),
            "mo" => Ok(Scheme::Mo),
            "om" => Ok(Scheme::Om),
            other => Err(Error::Parse(format!("unknown scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Surrogate parameters for one antenna shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub alpha: f64,
    pub n_r: usize,
}

impl SurrogateModel {
    pub fn new(alpha: f64, n_r: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        if n_r == 0 {
            return Err(Error::InvalidInput("n_r must be >= 1".into()));
        }
        Ok(Self { alpha, n_r })
    }
}

/// Solver tolerances and iteration budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocatorOptions {
    /// Waterline tolerance relative to the power budget.
    pub tol_power: f64,
    /// Root tolerance on the (scaled) function value.
    pub tol_root: f64,
    pub max_newton_iters: usize,
    pub max_waterline_iters: usize,
    pub max_outer_iters: usize,
    /// Outer step `c`: iteration `t` moves `c·μ/√t` of weight mass.
    pub outer_step: f64,
    /// Share of subchannels given to multicast under orthogonal multiplexing.
    pub om_split: f64,
    /// Largest subchannel count searched exhaustively under orthogonal multiplexing.
    pub om_exhaustive_max: usize,
}

impl Default for AllocatorOptions {
    fn default() -> Self {
        Self {
            tol_power: 1e-6,
            tol_root: 1e-10,
            max_newton_iters: 50,
            max_waterline_iters: 400,
            max_outer_iters: 200,
            outer_step: 0.5,
            om_split: 0.5,
            om_exhaustive_max: 12,
        }
    }
}

impl AllocatorOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_power, self.tol_root, self.outer_step];
        if positive.iter().any(|v| !(*v > 0.0))
            || self.max_newton_iters == 0
            || self.max_waterline_iters == 0
            || self.max_outer_iters == 0
        {
            return Err(Error::InvalidInput("allocator options must be positive".into()));
        }
        if !(self.om_split > 0.0 && self.om_split <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "om_split must lie in (0, 1], got {}",
                self.om_split
            )));
        }
        Ok(())
    }
}

/// Per-subchannel powers, selected unicast users and modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub p_total: Vec<f64>,
    pub p1: Vec<f64>,
    pub p0: Vec<f64>,
    pub selected_user: Vec<Option<usize>>,
    pub mode: Vec<Mode>,
    /// Waterline dual variable (zero when power is fixed per subchannel).
    pub lambda: f64,
    pub mu_vec: Vec<f64>,
}

impl Allocation {
    /// Assembles an allocation from total and unicast powers, deriving modes,
    /// multicast powers and the selected (strongest) users.
    pub fn from_powers(stats: &ChannelStats, p_total: Vec<f64>, p1: Vec<f64>, lambda: f64, mu_vec: Vec<f64>) -> Self {
        let mode: Vec<Mode> = p_total.iter().zip(&p1).map(|(&p, &q)| Mode::classify(p, q)).collect();
        let selected_user = mode
            .iter()
            .enumerate()
            .map(|(i, m)| match m {
                Mode::UnicastOnly | Mode::Superposition => Some(stats.strongest(i)),
                _ => None,
            })
            .collect();
        let p0 = p_total.iter().zip(&p1).map(|(p, q)| p - q).collect();
        Self {
            p_total,
            p1,
            p0,
            selected_user,
            mode,
            lambda,
            mu_vec,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.p_total.iter().sum()
    }
}

/// Which branch of `max{ẑ₀, ẑ₁, 0}` produced a subchannel's power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Zero,
    Multicast,
    Unicast,
}

/// Per-subchannel restriction applied inside the waterline search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Constraint {
    Free,
    MulticastOnly,
    UnicastOnly,
}

/// Result of the subchannel water-filling step.
#[derive(Debug, Clone, PartialEq)]
pub struct Waterline {
    pub lambda: f64,
    pub p_total: Vec<f64>,
    pub branch: Vec<Branch>,
}

fn check_mu_vec(stats: &ChannelStats, mu_vec: &[f64]) -> Result<()> {
    if mu_vec.len() != stats.n_users() {
        return Err(Error::Dimension(format!(
            "mu vector has {} entries for {} users",
            mu_vec.len(),
            stats.n_users()
        )));
    }
    if mu_vec.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::InvalidInput("mu weights must be finite and >= 0".into()));
    }
    Ok(())
}

/// Surrogate multicast utility
/// `û₀(x) = Σₖ μₖσ²ᵢ,ₖ n_R φ̂(σ²ᵢ,ₖ x) − λ ηᵢ⁻¹ ln 2`.
pub fn utility_u0_hat(
    x: f64,
    i: usize,
    mu_vec: &[f64],
    lambda: f64,
    stats: &ChannelStats,
    model: SurrogateModel,
) -> f64 {
    u0_hat_with_slope(x, i, mu_vec, stats, model).0 - lambda * LN_2 / stats.eta()[i]
}

/// Surrogate unicast utility `û₁(x) = σ²ᵢ,π(1) n_R φ̂(σ²ᵢ,π(1) x) − λ ηᵢ⁻¹ ln 2`.
pub fn utility_u1_hat(x: f64, i: usize, lambda: f64, stats: &ChannelStats, model: SurrogateModel) -> f64 {
    let s = stats.snr(i, stats.strongest(i));
    s * model.n_r as f64 / (1.0 + model.alpha * s * x) - lambda * LN_2 / stats.eta()[i]
}

/// `Σₖ μₖσ²ₖ n_R φ̂(σ²ₖ x)` and its derivative in `x`.
fn u0_hat_with_slope(x: f64, i: usize, mu_vec: &[f64], stats: &ChannelStats, model: SurrogateModel) -> (f64, f64) {
    let n_r = model.n_r as f64;
    let mut value = 0.0;
    let mut slope = 0.0;
    for (k, &mu) in mu_vec.iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        let s = stats.snr(i, k);
        let denom = 1.0 + model.alpha * s * x;
        value += mu * s * n_r / denom;
        slope -= mu * s * s * n_r * model.alpha / (denom * denom);
    }
    (value, slope)
}

/// Closed-form zero of `û₁`: `(1/α)(n_R ηᵢ/(λ ln 2) − 1/σ²ᵢ,π(1))`. May be negative.
pub fn z1_closed_form(i: usize, lambda: f64, stats: &ChannelStats, model: SurrogateModel) -> Result<f64> {
    stats.check_subchannel(i)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(z1_unchecked(i, lambda, stats, model))
}

fn z1_unchecked(i: usize, lambda: f64, stats: &ChannelStats, model: SurrogateModel) -> f64 {
    let s = stats.snr(i, stats.strongest(i));
    let level = model.n_r as f64 * stats.eta()[i] / (lambda * LN_2);
    if s <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (level - 1.0 / s) / model.alpha
}

/// Zero of `û₀` on `x > 0`, or 0 when `û₀(0) ≤ 0`.
pub fn z0_root(
    i: usize,
    mu_vec: &[f64],
    lambda: f64,
    stats: &ChannelStats,
    model: SurrogateModel,
    opts: &AllocatorOptions,
) -> Result<f64> {
    let c = lambda * LN_2 / stats.eta()[i];
    let (u_at_zero, _) = u0_hat_with_slope(0.0, i, mu_vec, stats, model);
    if u_at_zero <= c {
        return Ok(0.0);
    }
    // every term is below μₖ n_R/(α x), so the root lies below μ n_R/(α c)
    let mu_sum: f64 = mu_vec.iter().sum();
    let hi = mu_sum * model.n_r as f64 / (model.alpha * c);
    let f = |x: f64| {
        let (v, d) = u0_hat_with_slope(x, i, mu_vec, stats, model);
        (v - c, d)
    };
    safeguarded_newton(f, 0.0, hi, 0.0, opts.tol_root * c, opts.max_newton_iters)
}

fn subchannel_power(
    i: usize,
    mu_vec: &[f64],
    lambda: f64,
    stats: &ChannelStats,
    model: SurrogateModel,
    constraint: Constraint,
    opts: &AllocatorOptions,
) -> Result<(f64, Branch)> {
    let z0 = match constraint {
        Constraint::UnicastOnly => 0.0,
        _ => z0_root(i, mu_vec, lambda, stats, model, opts)?,
    };
    let z1 = match constraint {
        Constraint::MulticastOnly => f64::NEG_INFINITY,
        _ => z1_unchecked(i, lambda, stats, model),
    };
    Ok(if z1 > 0.0 && z1 >= z0 {
        (z1, Branch::Unicast)
    } else if z0 > 0.0 {
        (z0, Branch::Multicast)
    } else {
        (0.0, Branch::Zero)
    })
}

/// Water-filling over subchannels: finds `λ` such that
/// `Σᵢ max{ẑ₀⁽ⁱ⁾(λ), ẑ₁⁽ⁱ⁾(λ), 0} = P_t`.
pub fn solve_waterline(
    stats: &ChannelStats,
    mu_vec: &[f64],
    model: SurrogateModel,
    p_t: f64,
    opts: &AllocatorOptions,
) -> Result<Waterline> {
    let constraints = vec![Constraint::Free; stats.n_subchannels()];
    solve_waterline_constrained(stats, mu_vec, model, p_t, &constraints, opts)
}

pub(crate) fn solve_waterline_constrained(
    stats: &ChannelStats,
    mu_vec: &[f64],
    model: SurrogateModel,
    p_t: f64,
    constraints: &[Constraint],
    opts: &AllocatorOptions,
) -> Result<Waterline> {
    check_mu_vec(stats, mu_vec)?;
    if !(p_t > 0.0) || !p_t.is_finite() {
        return Err(Error::InvalidInput(format!("power budget must be > 0, got {p_t}")));
    }
    let m = stats.n_subchannels();
    let evaluate = |lambda: f64| -> Result<(f64, Vec<f64>, Vec<Branch>)> {
        let mut powers = Vec::with_capacity(m);
        let mut branches = Vec::with_capacity(m);
        for (i, &c) in constraints.iter().enumerate() {
            let (p, b) = subchannel_power(i, mu_vec, lambda, stats, model, c, opts)?;
            powers.push(p);
            branches.push(b);
        }
        Ok((powers.iter().sum(), powers, branches))
    };

    let tol = opts.tol_power * p_t;
    // total power decreases in λ; bracket the budget first
    let mut lo = 1.0;
    let mut hi = 1.0;
    let (mut sum, _, _) = evaluate(1.0)?;
    let mut steps = 0;
    if sum > p_t {
        while sum > p_t {
            lo = hi;
            hi *= 4.0;
            sum = evaluate(hi)?.0;
            steps += 1;
            if steps > opts.max_waterline_iters {
                return Err(waterline_failure(steps, lo, hi, sum, p_t));
            }
        }
    } else {
        while sum < p_t {
            hi = lo;
            lo /= 4.0;
            sum = evaluate(lo)?.0;
            steps += 1;
            if steps > opts.max_waterline_iters || lo < 1e-300 {
                return Err(waterline_failure(steps, lo, hi, sum, p_t));
            }
        }
    }

    let mut best = None;
    for _ in 0..opts.max_waterline_iters {
        let mid = (lo * hi).sqrt();
        let (s, powers, branches) = evaluate(mid)?;
        if (s - p_t).abs() <= 0.5 * tol {
            best = Some((mid, s, powers, branches));
            break;
        }
        if s > p_t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            best = Some((mid, s, powers, branches));
            break;
        }
    }
    let (lambda, sum, mut powers, branch) =
        best.ok_or_else(|| waterline_failure(opts.max_waterline_iters, lo, hi, f64::NAN, p_t))?;
    if !(sum > 0.0) || (sum - p_t).abs() > tol {
        return Err(waterline_failure(opts.max_waterline_iters, lo, hi, sum, p_t));
    }
    // remove the residual within tolerance so the budget is met exactly
    let scale = p_t / sum;
    powers.iter_mut().for_each(|p| *p *= scale);
    Ok(Waterline {
        lambda,
        p_total: powers,
        branch,
    })
}

fn waterline_failure(iterations: usize, lo: f64, hi: f64, sum: f64, p_t: f64) -> Error {
    Error::NonConvergence {
        solver: "waterline",
        iterations,
        detail: format!("lambda bracket [{lo:e}, {hi:e}], power sum {sum} vs budget {p_t}"),
    }
}

/// `ĝ(x) = −1 + Σₖ μₖ (σ⁻²ᵢ,π(1) + αx)/(σ⁻²ᵢ,ₖ + αx)` and its derivative.
pub fn g_hat(x: f64, i: usize, mu_vec: &[f64], stats: &ChannelStats, alpha: f64) -> (f64, f64) {
    let inv_strong = 1.0 / stats.snr(i, stats.strongest(i));
    let mut value = -1.0;
    let mut slope = 0.0;
    for (k, &mu) in mu_vec.iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        let inv_k = 1.0 / stats.snr(i, k);
        let denom = inv_k + alpha * x;
        value += mu * (inv_strong + alpha * x) / denom;
        slope += mu * alpha * (inv_k - inv_strong) / (denom * denom);
    }
    (value, slope)
}

/// `Σₖ μₖσ²ᵢ,ₖ ≥ σ²ᵢ,π(1)`: sending only the multicast is optimal on subchannel `i`.
pub fn multicast_guard(i: usize, mu_vec: &[f64], stats: &ChannelStats) -> bool {
    let weighted: f64 = mu_vec.iter().enumerate().map(|(k, &m)| m * stats.snr(i, k)).sum();
    weighted >= stats.snr(i, stats.strongest(i))
}

/// Zero of `ĝ` on `x > 0`, assuming `ĝ(0) < 0` and `μ > 1`.
pub fn g_hat_root(i: usize, mu_vec: &[f64], stats: &ChannelStats, alpha: f64, opts: &AllocatorOptions) -> Result<f64> {
    let f = |x: f64| g_hat(x, i, mu_vec, stats, alpha);
    let mut hi = 1.0 / (alpha * stats.snr(i, stats.strongest(i)));
    let mut grow = 0;
    while f(hi).0 <= 0.0 {
        hi *= 4.0;
        grow += 1;
        if grow > 200 || !hi.is_finite() {
            return Err(Error::NonConvergence {
                solver: "power split",
                iterations: grow,
                detail: format!("g_hat stays nonpositive up to x = {hi:e}"),
            });
        }
    }
    safeguarded_newton(f, 0.0, hi, 0.0, opts.tol_root, opts.max_newton_iters)
}

/// Splits subchannel power between the layers (multicast power, unicast
/// power, mode), given which waterline branch produced `p_i`.
pub fn split_power(
    i: usize,
    p_i: f64,
    branch: Branch,
    mu_vec: &[f64],
    stats: &ChannelStats,
    alpha: f64,
    opts: &AllocatorOptions,
) -> Result<(f64, f64, Mode)> {
    stats.check_subchannel(i)?;
    check_mu_vec(stats, mu_vec)?;
    if !(p_i >= 0.0) {
        return Err(Error::InvalidInput(format!("subchannel power must be >= 0, got {p_i}")));
    }
    let p1 = if p_i == 0.0 || branch == Branch::Zero {
        0.0
    } else if branch == Branch::Unicast {
        p_i
    } else if multicast_guard(i, mu_vec, stats) {
        0.0
    } else {
        g_hat_root(i, mu_vec, stats, alpha, opts)?.min(p_i)
    };
    let p_i = if branch == Branch::Zero { 0.0 } else { p_i };
    Ok((p_i - p1, p1, Mode::classify(p_i, p1)))
}

/// Runs the waterline and power split for a fixed weight vector.
pub(crate) fn inner_allocation(
    stats: &ChannelStats,
    mu_vec: &[f64],
    model: SurrogateModel,
    p_t: f64,
    constraints: &[Constraint],
    opts: &AllocatorOptions,
) -> Result<Allocation> {
    let wl = solve_waterline_constrained(stats, mu_vec, model, p_t, constraints, opts)?;
    let mut p1 = Vec::with_capacity(stats.n_subchannels());
    for (i, &c) in constraints.iter().enumerate() {
        let q = match c {
            Constraint::MulticastOnly => 0.0,
            Constraint::UnicastOnly => wl.p_total[i],
            Constraint::Free => split_power(i, wl.p_total[i], wl.branch[i], mu_vec, stats, model.alpha, opts)?.1,
        };
        p1.push(q);
    }
    Ok(Allocation::from_powers(
        stats,
        wl.p_total,
        p1,
        wl.lambda,
        mu_vec.to_vec(),
    ))
}

/// Lagrangian value at a power-feasible allocation (the `λ` term vanishes)
/// together with its subgradient in `μ`, the per-user multicast rates.
pub fn lagrangian(
    stats: &ChannelStats,
    alloc: &Allocation,
    mu_vec: &[f64],
    est: &RateEstimator,
) -> (f64, Vec<f64>, f64) {
    let per_user = multicast_rates(stats, &alloc.p_total, &alloc.p1, est);
    let unicast: f64 = (0..stats.n_subchannels())
        .filter(|&i| alloc.p1[i] > 0.0)
        .map(|i| stats.eta()[i] * est.capacity_unchecked(stats.snr(i, stats.strongest(i)) * alloc.p1[i]))
        .sum();
    let value = mu_vec.iter().zip(&per_user).map(|(m, r)| m * r).sum::<f64>() + unicast;
    (value, per_user, unicast)
}

/// Dual function `V(μ)`: the Lagrangian at Algorithm 1's inner allocation for
/// the weight vector `mu_vec`, with the allocation that attains it.
pub fn dual_function(
    stats: &ChannelStats,
    mu_vec: &[f64],
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<(f64, Allocation)> {
    opts.validate()?;
    check_common(stats, est, model, p_t)?;
    check_mu_vec(stats, mu_vec)?;
    let constraints = vec![Constraint::Free; stats.n_subchannels()];
    let alloc = inner_allocation(stats, mu_vec, model, p_t, &constraints, opts)?;
    let (value, _, _) = lagrangian(stats, &alloc, mu_vec, est);
    Ok((value, alloc))
}

/// Outcome of a full allocation: powers, rates and the outer-loop trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub allocation: Allocation,
    pub rates: RateResult,
    /// Smallest Lagrangian value seen by the outer loop (`NaN` without one).
    pub dual_value: f64,
    pub outer_iterations: usize,
}

/// Outer minimisation over `μ` around an inner allocator. Returns the
/// evaluated iterate with the largest weighted sum rate.
fn minimise_over_mu<F>(
    stats: &ChannelStats,
    mu_total: f64,
    est: &RateEstimator,
    opts: &AllocatorOptions,
    mut inner: F,
) -> Result<Solution>
where
    F: FnMut(&[f64]) -> Result<Allocation>,
{
    let mut best: Option<(f64, Allocation)> = None;
    let outer = outer_minimize(
        |mu: &[f64]| {
            let alloc = inner(mu)?;
            let (value, per_user, unicast) = lagrangian(stats, &alloc, mu, est);
            let r0 = per_user.iter().copied().fold(f64::INFINITY, f64::min);
            let wsr = mu_total * r0 + unicast;
            if best.as_ref().is_none_or(|(w, _)| wsr > *w) {
                best = Some((wsr, alloc));
            }
            Ok((value, per_user))
        },
        mu_total,
        stats.n_users(),
        opts,
    )?;
    let (_, allocation) = best.expect("outer loop evaluates at least once");
    let rates = rate_tuple(stats, &allocation, mu_total, est)?;
    Ok(Solution {
        allocation,
        rates,
        dual_value: outer.value,
        outer_iterations: outer.iterations,
    })
}

fn check_common(stats: &ChannelStats, est: &RateEstimator, model: SurrogateModel, p_t: f64) -> Result<()> {
    if est.shape().n_r != model.n_r {
        return Err(Error::InvalidInput(format!(
            "surrogate built for n_R = {} but estimator shape is {}",
            model.n_r,
            est.shape()
        )));
    }
    if !(p_t > 0.0) || !p_t.is_finite() {
        return Err(Error::InvalidInput(format!("power budget must be > 0, got {p_t}")));
    }
    if stats.n_subchannels() == 0 || stats.n_users() == 0 {
        return Err(Error::Dimension(
            "statistics need at least one subchannel and user".into(),
        ));
    }
    Ok(())
}

/// Surrogate water-filling with per-subchannel mode selection and power
/// split, minimised over the multicast weight vector.
pub fn algorithm1(
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<Solution> {
    opts.validate()?;
    check_common(stats, est, model, p_t)?;
    if !(mu_total >= 0.0) {
        return Err(Error::InvalidInput(format!("mu must be >= 0, got {mu_total}")));
    }
    if mu_total <= 1.0 {
        return unicast_only_with_mu(stats, mu_total, p_t, model, est, opts);
    }
    let constraints = vec![Constraint::Free; stats.n_subchannels()];
    minimise_over_mu(stats, mu_total, est, opts, |mu| {
        inner_allocation(stats, mu, model, p_t, &constraints, opts)
    })
}

/// Closed-form unicast power under uniform subchannel power:
/// `[min{(Σₖ(μₖ/μ)σ⁻²ᵢ,ₖ − μσ⁻²ᵢ,π(1))/(α(μ−1)), P}]⁺`.
pub fn alg2_unicast_power(i: usize, mu_vec: &[f64], stats: &ChannelStats, alpha: f64, p_i: f64) -> f64 {
    let mu: f64 = mu_vec.iter().sum();
    let weighted_inv: f64 = mu_vec.iter().enumerate().map(|(k, &m)| m / mu / stats.snr(i, k)).sum();
    let z = (weighted_inv - mu / stats.snr(i, stats.strongest(i))) / (alpha * (mu - 1.0));
    z.min(p_i).max(0.0)
}

/// Uniform power over subchannels with the closed-form split, minimised
/// over the multicast weight vector.
pub fn algorithm2(
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<Solution> {
    opts.validate()?;
    check_common(stats, est, model, p_t)?;
    let m = stats.n_subchannels();
    let p_each = p_t / m as f64;
    if mu_total <= 1.0 {
        let alloc = Allocation::from_powers(stats, vec![p_each; m], vec![p_each; m], 0.0, vec![0.0; stats.n_users()]);
        let rates = rate_tuple(stats, &alloc, mu_total, est)?;
        return Ok(Solution {
            allocation: alloc,
            rates,
            dual_value: f64::NAN,
            outer_iterations: 0,
        });
    }
    minimise_over_mu(stats, mu_total, est, opts, |mu| {
        let p1 = (0..m)
            .map(|i| alg2_unicast_power(i, mu, stats, model.alpha, p_each))
            .collect();
        Ok(Allocation::from_powers(stats, vec![p_each; m], p1, 0.0, mu.to_vec()))
    })
}

fn unicast_only_with_mu(
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<Solution> {
    let k = stats.n_users();
    let constraints = vec![Constraint::UnicastOnly; stats.n_subchannels()];
    let alloc = inner_allocation(stats, &vec![0.0; k], model, p_t, &constraints, opts)?;
    let rates = rate_tuple(stats, &alloc, mu_total, est)?;
    Ok(Solution {
        allocation: alloc,
        rates,
        dual_value: f64::NAN,
        outer_iterations: 0,
    })
}

/// Unicast-only water-filling (`μ = 0`). The reported `wsr` uses `μ = 0`.
pub fn baseline_unicast_only(
    stats: &ChannelStats,
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<Solution> {
    opts.validate()?;
    check_common(stats, est, model, p_t)?;
    unicast_only_with_mu(stats, 0.0, p_t, model, est, opts)
}

/// Multicast-only water-filling, minimised over the weight vector.
pub fn baseline_multicast_only(
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<Solution> {
    opts.validate()?;
    check_common(stats, est, model, p_t)?;
    if !(mu_total >= 0.0) || !mu_total.is_finite() {
        return Err(Error::InvalidInput(format!("mu must be >= 0, got {mu_total}")));
    }
    // the allocation maximises R₀ for any positive weight; μ = 0 only
    // changes the reported weighted sum rate
    let weight = if mu_total > 0.0 { mu_total } else { 1.0 };
    let constraints = vec![Constraint::MulticastOnly; stats.n_subchannels()];
    let mut sol = minimise_over_mu(stats, weight, est, opts, |mu| {
        inner_allocation(stats, mu, model, p_t, &constraints, opts)
    })?;
    if weight != mu_total {
        sol.rates = rate_tuple(stats, &sol.allocation, mu_total, est)?;
    }
    Ok(sol)
}

/// Orthogonal multiplexing: `⌈split·M⌉` subchannels carry only multicast and
/// the rest only unicast. The assignment is searched exhaustively (over
/// classes of identical subchannels) up to `om_exhaustive_max` subchannels,
/// greedily beyond; powers are water-filled jointly.
pub fn baseline_orthogonal(
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<Solution> {
    opts.validate()?;
    check_common(stats, est, model, p_t)?;
    if !(mu_total >= 0.0) || !mu_total.is_finite() {
        return Err(Error::InvalidInput(format!("mu must be >= 0, got {mu_total}")));
    }
    let m = stats.n_subchannels();
    let n_mc = ((opts.om_split * m as f64).ceil() as usize).clamp(1, m);
    let solve = |assign: &[bool]| -> Result<Solution> {
        let constraints: Vec<Constraint> = assign
            .iter()
            .map(|&mc| {
                if mc {
                    Constraint::MulticastOnly
                } else {
                    Constraint::UnicastOnly
                }
            })
            .collect();
        if mu_total == 0.0 {
            // multicast is worthless: its subchannels stay dark, unless there
            // is nothing else, in which case every split scores zero
            let zeros = vec![0.0; stats.n_users()];
            let alloc = if assign.iter().all(|&mc| mc) {
                Allocation::from_powers(stats, vec![p_t / m as f64; m], vec![0.0; m], 0.0, zeros)
            } else {
                inner_allocation(stats, &zeros, model, p_t, &constraints, opts)?
            };
            let rates = rate_tuple(stats, &alloc, mu_total, est)?;
            return Ok(Solution {
                allocation: alloc,
                rates,
                dual_value: f64::NAN,
                outer_iterations: 0,
            });
        }
        minimise_over_mu(stats, mu_total, est, opts, |mu| {
            inner_allocation(stats, mu, model, p_t, &constraints, opts)
        })
    };

    let mut best: Option<Solution> = None;
    let mut consider = |sol: Solution| {
        if best.as_ref().is_none_or(|b| sol.rates.wsr > b.rates.wsr) {
            best = Some(sol);
        }
    };
    if m <= opts.om_exhaustive_max {
        for assign in distinct_assignments(stats, n_mc) {
            consider(solve(&assign)?);
        }
    } else {
        // greedy: start from the subchannels best for the weakest users, then swap
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            let wa = stats.snr(a, stats.weakest(a));
            let wb = stats.snr(b, stats.weakest(b));
            wb.total_cmp(&wa).then(a.cmp(&b))
        });
        let mut assign = vec![false; m];
        for &i in order.iter().take(n_mc) {
            assign[i] = true;
        }
        let mut current = solve(&assign)?;
        loop {
            let mut improved = false;
            'search: for a in 0..m {
                for b in 0..m {
                    if assign[a] && !assign[b] {
                        let mut trial = assign.clone();
                        trial.swap(a, b);
                        let sol = solve(&trial)?;
                        if sol.rates.wsr > current.rates.wsr * (1.0 + 1e-9) {
                            assign = trial;
                            current = sol;
                            improved = true;
                            break 'search;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        consider(current);
    }
    Ok(best.expect("at least one assignment"))
}

/// All multicast/unicast assignments with `n_mc` multicast subchannels, up to
/// permutations among identical subchannels.
fn distinct_assignments(stats: &ChannelStats, n_mc: usize) -> Vec<Vec<bool>> {
    let m = stats.n_subchannels();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..m {
        let same = groups.iter_mut().find(|g| {
            let j = g[0];
            stats.eta()[j] == stats.eta()[i] && stats.snr_matrix()[j] == stats.snr_matrix()[i]
        });
        match same {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; groups.len()];
    fn rec(g: usize, left: usize, groups: &[Vec<usize>], counts: &mut Vec<usize>, out: &mut Vec<Vec<bool>>, m: usize) {
        if g == groups.len() {
            if left == 0 {
                let mut assign = vec![false; m];
                for (grp, &c) in groups.iter().zip(counts.iter()) {
                    for &i in grp.iter().take(c) {
                        assign[i] = true;
                    }
                }
                out.push(assign);
            }
            return;
        }
        for c in 0..=groups[g].len().min(left) {
            counts[g] = c;
            rec(g + 1, left - c, groups, counts, out, m);
        }
        counts[g] = 0;
    }
    rec(0, n_mc, &groups, &mut counts, &mut out, m);
    out
}

/// Dispatches to the allocator for `scheme`.
pub fn allocate(
    scheme: Scheme,
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<Solution> {
    match scheme {
        Scheme::Alg1 => algorithm1(stats, mu_total, p_t, model, est, opts),
        Scheme::Alg2 => algorithm2(stats, mu_total, p_t, model, est, opts),
        Scheme::Uo => {
            let mut sol = baseline_unicast_only(stats, p_t, model, est, opts)?;
            sol.rates = rate_tuple(stats, &sol.allocation, mu_total, est)?;
            Ok(sol)
        }
        Scheme::Mo => baseline_multicast_only(stats, mu_total, p_t, model, est, opts),
        Scheme::Om => baseline_orthogonal(stats, mu_total, p_t, model, est, opts),
    }
}

/// Structural checks an allocation produced by `scheme` must pass. Returns
/// one message per violation; empty means the allocation is consistent.
///
/// Checked: dimensions, nonnegative finite powers, `P₀ + P₁ = P`, total power
/// within `tol·P_t` of the budget, modes matching the powers, the unicast
/// layer going to the strongest user, and scheme-specific mode restrictions.
/// For Algorithm 1 a subchannel may carry only the multicast exactly when the
/// multicast guard holds, unless it is a pure unicast subchannel.
pub fn invariant_violations(
    scheme: Scheme,
    stats: &ChannelStats,
    alloc: &Allocation,
    p_t: f64,
    tol: f64,
) -> Vec<String> {
    let m = stats.n_subchannels();
    let mut out = Vec::new();
    let lens = [
        alloc.p_total.len(),
        alloc.p1.len(),
        alloc.p0.len(),
        alloc.selected_user.len(),
        alloc.mode.len(),
    ];
    if lens.iter().any(|&l| l != m) {
        out.push(format!("allocation lengths {lens:?} do not match {m} subchannels"));
        return out;
    }
    let total = alloc.total_power();
    if (total - p_t).abs() > tol * p_t {
        out.push(format!("total power {total} differs from budget {p_t}"));
    }
    let slack = tol * p_t;
    for i in 0..m {
        let (p, p1, p0) = (alloc.p_total[i], alloc.p1[i], alloc.p0[i]);
        if !p.is_finite() || !p1.is_finite() || !p0.is_finite() || p < 0.0 || p1 < 0.0 || p0 < -slack {
            out.push(format!("subchannel {i}: invalid powers P={p} P1={p1} P0={p0}"));
            continue;
        }
        if p1 > p + slack || (p0 + p1 - p).abs() > slack {
            out.push(format!("subchannel {i}: split P0={p0} + P1={p1} does not give P={p}"));
        }
        let mode = alloc.mode[i];
        if mode != Mode::classify(p, p1) {
            out.push(format!(
                "subchannel {i}: mode {} inconsistent with P={p} P1={p1}",
                mode.as_str()
            ));
        }
        let expect_user = (p1 > 0.0).then(|| stats.strongest(i));
        if alloc.selected_user[i] != expect_user {
            out.push(format!(
                "subchannel {i}: selected user {:?}, expected {expect_user:?}",
                alloc.selected_user[i]
            ));
        }
        let allowed = match scheme {
            Scheme::Uo => matches!(mode, Mode::UnicastOnly | Mode::Off),
            Scheme::Mo => matches!(mode, Mode::MulticastOnly | Mode::Off),
            Scheme::Om => mode != Mode::Superposition,
            Scheme::Alg1 | Scheme::Alg2 => true,
        };
        if !allowed {
            out.push(format!(
                "subchannel {i}: mode {} not allowed for {scheme}",
                mode.as_str()
            ));
        }
        if scheme == Scheme::Alg1 && alloc.mu_vec.len() == stats.n_users() {
            let guard = multicast_guard(i, &alloc.mu_vec, stats);
            if (mode == Mode::Superposition && guard) || (mode == Mode::MulticastOnly && !guard) {
                out.push(format!(
                    "subchannel {i}: mode {} contradicts the multicast guard ({guard})",
                    mode.as_str()
                ));
            }
        }
    }
    out
}
