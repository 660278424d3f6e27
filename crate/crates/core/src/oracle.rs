//! Independent reference solvers: exhaustive power search, a direct
//! projected-gradient solver over diagonal covariances, and high-power
//! slope (degrees-of-freedom) fits.

use std::f64::consts::LN_2;

use nalgebra::Cholesky;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{allocate, project_simplex, Allocation, AllocatorOptions, Scheme, SurrogateModel};
use crate::channel::{ChannelStats, MimoShape};
use crate::error::{Error, Result};
use crate::linalg::{identity_plus_weighted, ln_det_hpd, random_channel, CMatrix};
use crate::rates::{rate_tuple, RateEstimator};
use crate::rng::{keyed_rng, stream};

/// Largest number of grid cells the exhaustive search will visit.
pub const MAX_GRID_CELLS: usize = 5_000_000;

/// Decision variables at the best point an oracle found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OraclePoint {
    /// Scalar covariances: per-subchannel total and unicast powers.
    Powers {
        p_total: Vec<f64>,
        p1: Vec<f64>,
        /// Unicast receiver per subchannel (irrelevant where `p1 = 0`).
        unicast_user: Vec<usize>,
    },
    /// Diagonal covariances on one subchannel: `q0` for the multicast and
    /// `q_users[r]` for the user of strength rank `r`.
    Covariances { q0: Vec<f64>, q_users: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_wsr: f64,
    pub best_point: OraclePoint,
    /// Weight vector at which the min over `μ` is attained.
    pub mu_vec: Vec<f64>,
    pub evaluations: usize,
    pub trace: String,
}

#[derive(Clone)]
struct PowerPoint {
    split: Vec<f64>,
    frac: Vec<f64>,
    users: Vec<usize>,
}

fn powers_of(p_t: f64, pt: &PowerPoint) -> (Vec<f64>, Vec<f64>) {
    let p_total: Vec<f64> = pt.split.iter().map(|s| s * p_t).collect();
    let p1 = p_total.iter().zip(&pt.frac).map(|(p, f)| p * f).collect();
    (p_total, p1)
}

/// `μ·minₖ R₀,ₖ + Σ unicast` and the binding user.
fn scalar_objective(
    stats: &ChannelStats,
    mu_total: f64,
    p_total: &[f64],
    p1: &[f64],
    users: &[usize],
    est: &RateEstimator,
) -> (f64, usize) {
    let mut r0 = f64::INFINITY;
    let mut weakest = 0;
    for k in 0..stats.n_users() {
        let r: f64 = (0..stats.n_subchannels())
            .map(|i| {
                let s = stats.snr(i, k);
                stats.eta()[i] * est.difference_unchecked(s * p_total[i], s * p1[i])
            })
            .sum();
        if r < r0 {
            r0 = r;
            weakest = k;
        }
    }
    let unicast: f64 = (0..stats.n_subchannels())
        .map(|i| stats.eta()[i] * est.capacity_unchecked(stats.snr(i, users[i]) * p1[i]))
        .sum();
    (mu_total * r0 + unicast, weakest)
}

const RANDOM_DIRECTIONS: usize = 64;
const REFINED_CELLS: usize = 8;

/// Pattern search on the continuous coordinates around one grid cell.
fn refine(
    start: &PowerPoint,
    start_val: f64,
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    resolution: usize,
    est: &RateEstimator,
) -> (PowerPoint, f64, usize) {
    let m = start.frac.len();
    let mut best = start.clone();
    let mut best_val = start_val;
    let mut evaluations = 0;
    // The max-min objective has ridges where two multicast rates tie; the
    // ascent cone there rarely contains a lattice direction, so the lattice
    // {-1, 0, 1}^n is augmented with fixed pseudo-random directions.
    let n_coords = m + usize::from(m == 2);
    let mut directions: Vec<Vec<f64>> = (1..3usize.pow(n_coords as u32))
        .map(|code| {
            (0..n_coords)
                .map(|c| (code / 3usize.pow(c as u32) % 3) as f64 - 1.0)
                .collect()
        })
        .collect();
    let mut rng = keyed_rng(0, stream::START, u64::MAX);
    for _ in 0..RANDOM_DIRECTIONS {
        let d: Vec<f64> = (0..n_coords).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let norm = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm > 0.0 {
            directions.push(d.into_iter().map(|v| v / norm).collect());
        }
    }
    let mut h = 1.0 / resolution as f64;
    while h > 1e-7 {
        let mut improved = false;
        for d in &directions {
            let mut trial = best.clone();
            for (i, f) in trial.frac.iter_mut().enumerate() {
                *f = (*f + d[i] * h).clamp(0.0, 1.0);
            }
            if m == 2 {
                let s = (trial.split[0] + d[m] * h).clamp(0.0, 1.0);
                trial.split = vec![s, 1.0 - s];
            }
            let (p, q) = powers_of(p_t, &trial);
            let v = scalar_objective(stats, mu_total, &p, &q, &trial.users, est).0;
            evaluations += 1;
            if v > best_val + 1e-13 {
                best_val = v;
                best = trial;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (best, best_val, evaluations)
}

/// Exhaustive search of the weighted sum rate over scalar covariances.
///
/// Visits every subchannel power split on a `resolution` grid, every
/// unicast fraction on the same grid and every choice of unicast receiver,
/// then refines the best cell by pattern search. The min over the weight
/// simplex is taken exactly (it sits at a vertex for fixed powers).
pub fn brute_force_wsr(
    stats: &ChannelStats,
    mu_total: f64,
    p_t: f64,
    resolution: usize,
    est: &RateEstimator,
) -> Result<OracleResult> {
    let m = stats.n_subchannels();
    let k = stats.n_users();
    if m > 2 || k > 3 {
        return Err(Error::InvalidInput(format!(
            "brute force supports M <= 2 and K <= 3, got M = {m}, K = {k}"
        )));
    }
    if resolution < 8 {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be >= 8, got {resolution}"
        )));
    }
    if !(p_t > 0.0) || !(mu_total >= 0.0) {
        return Err(Error::InvalidInput("need p_t > 0 and mu >= 0".into()));
    }
    let steps = resolution + 1;
    let cells = steps
        .checked_pow((2 * m - 1) as u32)
        .and_then(|c| c.checked_mul(k.pow(m as u32)))
        .unwrap_or(usize::MAX);
    if cells > MAX_GRID_CELLS {
        return Err(Error::ResourceLimit(format!(
            "brute-force grid has {cells} cells (limit {MAX_GRID_CELLS})"
        )));
    }

    let user_choices: Vec<Vec<usize>> = if m == 1 {
        (0..k).map(|u| vec![u]).collect()
    } else {
        (0..k).flat_map(|a| (0..k).map(move |b| vec![a, b])).collect()
    };
    let splits: Vec<Vec<f64>> = if m == 1 {
        vec![vec![1.0]]
    } else {
        (0..steps)
            .map(|j| {
                let s = j as f64 / resolution as f64;
                vec![s, 1.0 - s]
            })
            .collect()
    };
    let fracs: Vec<f64> = (0..steps).map(|j| j as f64 / resolution as f64).collect();

    let mut candidates = Vec::with_capacity(cells);
    for users in &user_choices {
        for split in &splits {
            for idx in 0..steps.pow(m as u32) {
                let frac: Vec<f64> = (0..m).map(|i| fracs[(idx / steps.pow(i as u32)) % steps]).collect();
                candidates.push(PowerPoint {
                    split: split.clone(),
                    frac,
                    users: users.clone(),
                });
            }
        }
    }
    let values: Vec<f64> = candidates
        .par_iter()
        .map(|pt| {
            let (p, q) = powers_of(p_t, pt);
            scalar_objective(stats, mu_total, &p, &q, &pt.users, est).0
        })
        .collect();
    let mut evaluations = values.len();
    // Refine the best few cells of every unicast-user assignment: where the
    // coarse grid has no unicast power the assignment is arbitrary, a small
    // unicast layer only shows up below the grid spacing, and the objective
    // has several local maxima along its ridges.
    let per_choice = candidates.len() / user_choices.len();
    let mut best: Option<(PowerPoint, f64)> = None;
    for (chunk, vals) in candidates.chunks(per_choice).zip(values.chunks(per_choice)) {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        for &j in idx.iter().take(REFINED_CELLS) {
            let (point, val, n) = refine(&chunk[j], vals[j], stats, mu_total, p_t, resolution, est);
            evaluations += n;
            if best.as_ref().is_none_or(|(_, b)| val > *b) {
                best = Some((point, val));
            }
        }
    }
    let (best, best_val) = best.expect("at least one user choice");

    let (p_total, p1) = powers_of(p_t, &best);
    let (_, weakest) = scalar_objective(stats, mu_total, &p_total, &p1, &best.users, est);
    let mut mu_vec = vec![0.0; k];
    mu_vec[weakest] = mu_total;
    Ok(OracleResult {
        best_wsr: best_val,
        best_point: OraclePoint::Powers {
            p_total,
            p1,
            unicast_user: best.users,
        },
        mu_vec,
        evaluations,
        trace: format!("grid resolution {resolution}, {cells} cells, pattern refinement to 1e-7"),
    })
}

/// Settings for [`direct_covariance_solver`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectOptions {
    /// Base channel draws; each is expanded by all cyclic column shifts.
    pub n_samples: usize,
    pub seed: u64,
    pub random_starts: usize,
    pub max_iters: usize,
    /// Relative objective change below which an ascent stops.
    pub tol: f64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
            random_starts: 5,
            max_iters: 400,
            tol: 1e-11,
        }
    }
}

/// Channel draws closed under cyclic column shifts, so that expectations
/// are exactly invariant to relabelling transmit antennas in a cycle.
pub struct ChannelBank {
    shape: MimoShape,
    samples: Vec<CMatrix>,
}

impl ChannelBank {
    pub fn new(shape: MimoShape, n_samples: usize, seed: u64) -> Self {
        let mut samples = Vec::with_capacity(n_samples * shape.n_t);
        for s in 0..n_samples {
            let mut rng = keyed_rng(seed, stream::CHANNEL, s as u64);
            let h = random_channel(&mut rng, shape.n_r, shape.n_t);
            for shift in 0..shape.n_t {
                samples.push(CMatrix::from_fn(shape.n_r, shape.n_t, |r, c| {
                    h[(r, (c + shift) % shape.n_t)]
                }));
            }
        }
        Self { shape, samples }
    }

    pub fn shape(&self) -> MimoShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `E[log₂ det(I + σ²·H·diag(q)·H†)]` and its gradient in `q`.
    pub fn capacity_with_gradient(&self, sigma2: f64, q: &[f64]) -> (f64, Vec<f64>) {
        let per: Vec<(f64, Vec<f64>)> = self.samples.par_iter().map(|h| ld_grad(h, sigma2, q)).collect();
        let n = self.samples.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; q.len()];
        for (v, g) in per {
            value += v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (value / n, grad.into_iter().map(|g| g / n).collect())
    }
}

/// Per-realisation `log₂ det(I + σ²HQH†)` and `∂/∂q_j = σ² h_j†(I + σ²HQH†)⁻¹h_j / ln 2`.
fn ld_grad(h: &CMatrix, sigma2: f64, q: &[f64]) -> (f64, Vec<f64>) {
    let scaled: Vec<f64> = q.iter().map(|v| v * sigma2).collect();
    let m = identity_plus_weighted(h, &scaled);
    let value = ln_det_hpd(&m).unwrap_or(0.0) / LN_2;
    let solved = match Cholesky::new(m) {
        Some(c) => c.solve(h),
        None => h.clone(),
    };
    let grad = (0..h.ncols())
        .map(|j| {
            let d: f64 = h
                .column(j)
                .iter()
                .zip(solved.column(j).iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum();
            sigma2 * d / LN_2
        })
        .collect();
    (value, grad)
}

/// Inner objective on one subchannel with general diagonal covariances,
/// laid out as `[q0, q_π(1), …, q_π(K)]`, each of length `n_T`.
fn covariance_objective(
    bank: &ChannelBank,
    snr: &[f64],
    order: &[usize],
    mu_vec: &[f64],
    x: &[f64],
) -> (f64, Vec<f64>) {
    let n_t = bank.shape.n_t;
    let k = snr.len();
    let q0 = &x[..n_t];
    let block = |r: usize| &x[(r + 1) * n_t..(r + 2) * n_t];
    // cumulative[r] = Σ_{j ≤ r} q_π(j); cumulative[K−1] = all unicast layers
    let mut cumulative: Vec<Vec<f64>> = Vec::with_capacity(k);
    for r in 0..k {
        let layer = match cumulative.last() {
            Some(prev) => block(r).iter().zip(prev).map(|(a, b)| a + b).collect(),
            None => block(r).to_vec(),
        };
        cumulative.push(layer);
    }
    let total_unicast = &cumulative[k - 1];
    let with_mc: Vec<f64> = q0.iter().zip(total_unicast).map(|(a, b)| a + b).collect();

    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for (user, &mu) in mu_vec.iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        let (v_all, g_all) = bank.capacity_with_gradient(snr[user], &with_mc);
        let (v_uc, g_uc) = bank.capacity_with_gradient(snr[user], total_unicast);
        value += mu * (v_all - v_uc);
        for j in 0..n_t {
            grad[j] += mu * g_all[j];
            for r in 0..k {
                grad[(r + 1) * n_t + j] += mu * (g_all[j] - g_uc[j]);
            }
        }
    }
    for r in 0..k {
        let user = order[r];
        let (v_hi, g_hi) = bank.capacity_with_gradient(snr[user], &cumulative[r]);
        value += v_hi;
        for s in 0..=r {
            for j in 0..n_t {
                grad[(s + 1) * n_t + j] += g_hi[j];
            }
        }
        if r > 0 {
            let (v_lo, g_lo) = bank.capacity_with_gradient(snr[user], &cumulative[r - 1]);
            value -= v_lo;
            for s in 0..r {
                for j in 0..n_t {
                    grad[(s + 1) * n_t + j] -= g_lo[j];
                }
            }
        }
    }
    (value, grad)
}

/// Projected-gradient ascent of the weighted sum rate over all nonnegative
/// diagonal covariances `{Q₀, Q₁, …, Q_K}` on one subchannel with total
/// trace `p_t`, from the structured start (isotropic multicast plus
/// isotropic unicast to the strongest user) and several random starts.
pub fn direct_covariance_solver(
    stats: &ChannelStats,
    mu_vec: &[f64],
    p_t: f64,
    shape: MimoShape,
    opts: &DirectOptions,
) -> Result<OracleResult> {
    let k = stats.n_users();
    if stats.n_subchannels() != 1 || k > 3 || shape.n_t > 4 {
        return Err(Error::InvalidInput(format!(
            "direct solver supports M = 1, K <= 3, n_T <= 4 (got M = {}, K = {k}, {shape})",
            stats.n_subchannels()
        )));
    }
    if mu_vec.len() != k || mu_vec.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::Dimension(format!("mu vector must have {k} nonnegative entries")));
    }
    if !(p_t > 0.0) || opts.n_samples == 0 {
        return Err(Error::InvalidInput("need p_t > 0 and n_samples >= 1".into()));
    }
    let bank = ChannelBank::new(shape, opts.n_samples, opts.seed);
    let snr: Vec<f64> = (0..k).map(|u| stats.snr(0, u)).collect();
    let order = stats.ordering(0).to_vec();
    let n_t = shape.n_t;
    let dim = (k + 1) * n_t;

    let mut starts = Vec::with_capacity(opts.random_starts + 1);
    let mut structured = vec![0.0; dim];
    for j in 0..n_t {
        structured[j] = 0.5 * p_t / n_t as f64;
        structured[n_t + j] = 0.5 * p_t / n_t as f64;
    }
    starts.push(structured);
    for s in 0..opts.random_starts {
        let mut rng = keyed_rng(opts.seed, stream::START, s as u64);
        let raw: Vec<f64> = (0..dim).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = raw.iter().sum();
        starts.push(raw.iter().map(|v| v * p_t / total).collect());
    }

    let mut evaluations = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut failures = 0;
    for start in starts {
        let mut x = start;
        let (mut fx, mut g) = covariance_objective(&bank, &snr, &order, mu_vec, &x);
        evaluations += 1;
        if !fx.is_finite() {
            failures += 1;
            continue;
        }
        let mut step = p_t / (g.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-300);
        for _ in 0..opts.max_iters {
            let mut accepted = false;
            for _ in 0..60 {
                let moved: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                let y = project_simplex(&moved, p_t);
                let ascent: f64 = g
                    .iter()
                    .zip(y.iter().zip(&x))
                    .map(|(gi, (yi, xi))| gi * (yi - xi))
                    .sum();
                let (fy, gy) = covariance_objective(&bank, &snr, &order, mu_vec, &y);
                evaluations += 1;
                if fy.is_finite() && fy >= fx + 1e-4 * ascent && ascent >= 0.0 {
                    let gain = fy - fx;
                    x = y;
                    fx = fy;
                    g = gy;
                    accepted = gain > opts.tol * (1.0 + fx.abs());
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if best.as_ref().is_none_or(|(v, _)| fx > *v) {
            best = Some((fx, x));
        }
    }
    let (value, x) = best.ok_or_else(|| Error::NonConvergence {
        solver: "direct covariance",
        iterations: evaluations,
        detail: format!("all {failures} starts produced non-finite objectives"),
    })?;
    let q0 = x[..n_t].to_vec();
    let q_users = (0..k).map(|r| x[(r + 1) * n_t..(r + 2) * n_t].to_vec()).collect();
    Ok(OracleResult {
        best_wsr: value,
        best_point: OraclePoint::Covariances { q0, q_users },
        mu_vec: mu_vec.to_vec(),
        evaluations,
        trace: format!(
            "{} starts, bank of {} draws x {} shifts",
            opts.random_starts + 1,
            opts.n_samples,
            n_t
        ),
    })
}

/// Transmission pattern whose high-power slope is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DofScenario {
    /// Whatever the allocator for this scheme returns at each power.
    Scheme { scheme: Scheme },
    /// Uniform power; the first `M − m_prime` subchannels carry only the
    /// multicast, the remaining `m_prime` superpose a unicast with a fixed
    /// share `unicast_fraction` of the subchannel power.
    FixedSuperposition { m_prime: usize, unicast_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofResult {
    /// Sum rate per doubling of power (bits/s/Hz per log₂ P).
    pub slope: f64,
    pub power_db: Vec<f64>,
    pub sum_rate: Vec<f64>,
}

/// Least-squares slope of the sum rate (`μ = K`) against `log₂ P_t`.
pub fn dof_slope(
    scenario: DofScenario,
    stats: &ChannelStats,
    power_db: &[f64],
    model: SurrogateModel,
    est: &RateEstimator,
    opts: &AllocatorOptions,
) -> Result<DofResult> {
    let lo = power_db.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = power_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if power_db.len() < 2 || !(hi - lo >= 20.0) {
        return Err(Error::InvalidInput("power grid must span at least 20 dB".into()));
    }
    let k = stats.n_users() as f64;
    let m = stats.n_subchannels();
    let mut rates = Vec::with_capacity(power_db.len());
    for &db in power_db {
        let p_t = 10f64.powf(db / 10.0);
        let r = match scenario {
            DofScenario::Scheme { scheme } => allocate(scheme, stats, k, p_t, model, est, opts)?.rates.sum_rate,
            DofScenario::FixedSuperposition {
                m_prime,
                unicast_fraction,
            } => {
                if m_prime > m || !(0.0..=1.0).contains(&unicast_fraction) {
                    return Err(Error::InvalidInput(format!(
                        "m_prime {m_prime} must be <= M = {m} and fraction in [0, 1]"
                    )));
                }
                let p = p_t / m as f64;
                let p1 = (0..m)
                    .map(|i| if i >= m - m_prime { unicast_fraction * p } else { 0.0 })
                    .collect();
                let alloc = Allocation::from_powers(
                    stats,
                    vec![p; m],
                    p1,
                    0.0,
                    vec![k / stats.n_users() as f64; stats.n_users()],
                );
                rate_tuple(stats, &alloc, k, est)?.sum_rate
            }
        };
        rates.push(r);
    }
    let xs: Vec<f64> = power_db.iter().map(|db| db / 10.0 * 10f64.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = rates.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&rates).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(DofResult {
        slope: sxy / sxx,
        power_db: power_db.to_vec(),
        sum_rate: rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gradient_matches_finite_differences() {
        let bank = ChannelBank::new(MimoShape::new(3, 2).unwrap(), 200, 4);
        let q = [0.7, 0.2, 1.1];
        let (_, g) = bank.capacity_with_gradient(2.0, &q);
        for j in 0..3 {
            let h = 1e-6;
            let mut up = q;
            let mut dn = q;
            up[j] += h;
            dn[j] -= h;
            let fd = (bank.capacity_with_gradient(2.0, &up).0 - bank.capacity_with_gradient(2.0, &dn).0) / (2.0 * h);
            assert_abs_diff_eq!(g[j], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let bank = ChannelBank::new(MimoShape::new(2, 2).unwrap(), 100, 9);
        let snr = [3.0, 1.0, 0.5];
        let order = [0, 1, 2];
        let mu = [0.5, 1.0, 1.5];
        let x = [0.4, 0.3, 0.2, 0.5, 0.1, 0.05, 0.3, 0.15];
        let (_, g) = covariance_objective(&bank, &snr, &order, &mu, &x);
        for j in 0..x.len() {
            let h = 1e-6;
            let mut up = x;
            let mut dn = x;
            up[j] += h;
            dn[j] -= h;
            let fd = (covariance_objective(&bank, &snr, &order, &mu, &up).0
                - covariance_objective(&bank, &snr, &order, &mu, &dn).0)
                / (2.0 * h);
            assert_abs_diff_eq!(g[j], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn brute_force_single_user_unicast() {
        let stats = ChannelStats::with_uniform_eta(vec![vec![2.0]]).unwrap();
        let est = RateEstimator::lookup(MimoShape::new(1, 1).unwrap(), 5_000, 1).unwrap();
        let r = brute_force_wsr(&stats, 0.0, 3.0, 8, &est).unwrap();
        assert_abs_diff_eq!(r.best_wsr, est.phi_capacity(6.0).unwrap(), epsilon = 1e-12);
        match r.best_point {
            OraclePoint::Powers { p1, .. } => assert_abs_diff_eq!(p1[0], 3.0, epsilon = 1e-12),
            _ => panic!("expected powers"),
        }
    }

    #[test]
    fn brute_force_rejects_large_problems() {
        let stats = ChannelStats::with_uniform_eta(vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let est = RateEstimator::lookup(MimoShape::new(1, 1).unwrap(), 1_000, 1).unwrap();
        assert!(brute_force_wsr(&stats, 1.0, 1.0, 8, &est).is_err());
        let ok = ChannelStats::with_uniform_eta(vec![vec![1.0, 2.0]]).unwrap();
        assert!(brute_force_wsr(&ok, 1.0, 1.0, 4, &est).is_err());
    }

    #[test]
    fn bank_is_closed_under_cyclic_shifts() {
        let bank = ChannelBank::new(MimoShape::new(3, 2).unwrap(), 50, 2);
        assert_eq!(bank.len(), 150);
        let (_, g) = bank.capacity_with_gradient(1.5, &[0.4, 0.4, 0.4]);
        assert_abs_diff_eq!(g[0], g[1], epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], g[2], epsilon = 1e-12);
    }
}
