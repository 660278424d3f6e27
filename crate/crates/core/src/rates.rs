//! Ergodic rate functions of an i.i.d. Rayleigh MIMO channel.
//!
//! `Φ(x) = E[log₂ det(I + (x/n_T)·H·H†)]` and
//! `φ(x) = (1/n_R)·Σₘ E[(x + n_T/dₘ)⁻¹]` with `dₘ` the eigenvalues of `H·H†`.
//!
//! A [`RateEstimator`] draws one bank of Wishart eigenvalues per shape and
//! evaluates every expectation on that bank, so all differences of `Φ` use
//! common random numbers. Optionally it answers from a precomputed lookup
//! table instead, interpolating linearly in `ln(1 + x)`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::Allocation;
use crate::channel::{ChannelStats, MimoShape};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, random_channel, small_gram};
use crate::rng::{keyed_rng, stream};

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const ACCEPTANCE_SAMPLES: usize = 100_000;

pub const TABLE_POINTS: usize = 256;
pub const TABLE_X_MIN: f64 = 1e-3;
pub const TABLE_X_MAX: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    MonteCarlo,
    LookupTable,
}

/// Sampled `(x, Φ(x), φ(x))` on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    pub shape: MimoShape,
    pub n_samples: usize,
    pub seed: u64,
    xs: Vec<f64>,
    /// `ln(1 + x)` for each grid point.
    us: Vec<f64>,
    capacity: Vec<f64>,
    aux: Vec<f64>,
}

impl LookupTable {
    pub fn new(
        shape: MimoShape,
        n_samples: usize,
        seed: u64,
        xs: Vec<f64>,
        capacity: Vec<f64>,
        aux: Vec<f64>,
    ) -> Result<Self> {
        if xs.len() < 2 || xs.len() != capacity.len() || xs.len() != aux.len() {
            return Err(Error::Dimension("lookup table columns differ in length".into()));
        }
        if xs[0] <= 0.0 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "lookup grid must be positive and strictly increasing".into(),
            ));
        }
        if capacity.windows(2).any(|w| w[1] < w[0]) || capacity[0] < 0.0 {
            return Err(Error::InvalidInput("tabulated capacity must be nondecreasing".into()));
        }
        let us = xs.iter().map(|x| x.ln_1p()).collect();
        Ok(Self {
            shape,
            n_samples,
            seed,
            xs,
            us,
            capacity,
            aux,
        })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    fn interpolate(&self, values: &[f64], at_zero: f64, x: f64) -> f64 {
        let u = x.ln_1p();
        let n = self.us.len();
        if u <= self.us[0] {
            let t = u / self.us[0];
            return at_zero + t * (values[0] - at_zero);
        }
        let j = if u >= self.us[n - 1] {
            n - 2
        } else {
            self.us.partition_point(|&v| v <= u) - 1
        };
        let t = (u - self.us[j]) / (self.us[j + 1] - self.us[j]);
        values[j] + t * (values[j + 1] - values[j])
    }

    pub fn capacity(&self, x: f64) -> f64 {
        self.interpolate(&self.capacity, 0.0, x).max(0.0)
    }

    pub fn aux(&self, x: f64) -> f64 {
        self.interpolate(&self.aux, 1.0, x).clamp(0.0, 1.0)
    }

    /// Flat text file: a `#` header carrying shape, sample count and seed,
    /// then one `x Φ(x) φ(x)` row per grid point.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# supermux rate table");
        let _ = writeln!(out, "# shape {}", self.shape);
        let _ = writeln!(out, "# samples {}", self.n_samples);
        let _ = writeln!(out, "# seed {}", self.seed);
        let _ = writeln!(out, "# columns x phi_capacity phi_aux");
        for j in 0..self.xs.len() {
            let _ = writeln!(
                out,
                "{:.17e} {:.17e} {:.17e}",
                self.xs[j], self.capacity[j], self.aux[j]
            );
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut shape = None;
        let mut n_samples = 0usize;
        let mut seed = 0u64;
        let (mut xs, mut cap, mut aux) = (Vec::new(), Vec::new(), Vec::new());
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let mut it = h.split_whitespace();
                match (it.next(), it.next()) {
                    (Some("shape"), Some(v)) => shape = Some(v.parse::<MimoShape>()?),
                    (Some("samples"), Some(v)) => {
                        n_samples = v.parse().map_err(|_| Error::Parse(format!("bad samples {v:?}")))?
                    }
                    (Some("seed"), Some(v)) => seed = v.parse().map_err(|_| Error::Parse(format!("bad seed {v:?}")))?,
                    _ => {}
                }
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns, got {}", vals.len())));
            }
            xs.push(vals[0]);
            cap.push(vals[1]);
            aux.push(vals[2]);
        }
        let shape = shape.ok_or_else(|| Error::Parse("missing '# shape' header".into()))?;
        Self::new(shape, n_samples, seed, xs, cap, aux)
    }
}

/// Monte-Carlo or table-backed evaluator of `Φ` and `φ` for one antenna shape.
/// Cheap to clone; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct RateEstimator {
    shape: MimoShape,
    n_samples: usize,
    seed: u64,
    mode: EstimatorMode,
    /// `dₘ / n_T` for every sample, `shape.dims()` values per sample.
    bank: Option<Arc<Vec<f64>>>,
    table: Option<Arc<LookupTable>>,
}

impl RateEstimator {
    /// Draws `n_samples` channel realisations and stores their scaled eigenvalues.
    pub fn monte_carlo(shape: MimoShape, n_samples: usize, seed: u64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be >= 1".into()));
        }
        let bank = eigenvalue_bank(shape, n_samples, seed);
        Ok(Self {
            shape,
            n_samples,
            seed,
            mode: EstimatorMode::MonteCarlo,
            bank: Some(Arc::new(bank)),
            table: None,
        })
    }

    /// Monte-Carlo estimator that answers from a freshly tabulated grid.
    pub fn lookup(shape: MimoShape, n_samples: usize, seed: u64) -> Result<Self> {
        Self::monte_carlo(shape, n_samples, seed)?.into_lookup()
    }

    /// Tabulates this estimator on the default log-spaced grid and switches
    /// to lookup mode.
    pub fn into_lookup(self) -> Result<Self> {
        let table = self.tabulate(&default_grid())?;
        Ok(Self {
            mode: EstimatorMode::LookupTable,
            table: Some(Arc::new(table)),
            ..self
        })
    }

    /// Lookup-only estimator from a persisted table.
    pub fn from_table(table: LookupTable) -> Self {
        Self {
            shape: table.shape,
            n_samples: table.n_samples,
            seed: table.seed,
            mode: EstimatorMode::LookupTable,
            bank: None,
            table: Some(Arc::new(table)),
        }
    }

    pub fn shape(&self) -> MimoShape {
        self.shape
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn table(&self) -> Option<&LookupTable> {
        self.table.as_deref()
    }

    /// Per-sample scaled eigenvalues `dₘ/n_T`, if this estimator holds a bank.
    pub fn eigenvalue_bank(&self) -> Option<&[f64]> {
        self.bank.as_deref().map(|v| v.as_slice())
    }

    pub fn tabulate(&self, xs: &[f64]) -> Result<LookupTable> {
        let capacity = xs.iter().map(|&x| self.phi_capacity(x)).collect::<Result<Vec<_>>>()?;
        let aux = xs.iter().map(|&x| self.phi_aux(x)).collect::<Result<Vec<_>>>()?;
        LookupTable::new(self.shape, self.n_samples, self.seed, xs.to_vec(), capacity, aux)
    }

    fn check_x(x: f64) -> Result<()> {
        if !(x >= 0.0) || x.is_nan() {
            return Err(Error::InvalidInput(format!("rate argument must be >= 0, got {x}")));
        }
        Ok(())
    }

    /// `Φ(x)` in bits/s/Hz.
    pub fn phi_capacity(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.capacity_unchecked(x))
    }

    pub(crate) fn capacity_unchecked(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        match (self.mode, &self.table, &self.bank) {
            (EstimatorMode::LookupTable, Some(t), _) => t.capacity(x),
            (_, _, Some(bank)) => {
                let s: f64 = bank.iter().map(|&d| (x * d).ln_1p()).sum();
                s / (self.n_samples as f64 * std::f64::consts::LN_2)
            }
            _ => unreachable!("estimator without bank or table"),
        }
    }

    /// `Φ(hi) − Φ(lo)` evaluated per sample on the shared bank.
    pub fn phi_difference(&self, hi: f64, lo: f64) -> Result<f64> {
        Self::check_x(lo)?;
        if hi < lo {
            return Err(Error::InvalidInput(format!(
                "phi_difference needs hi >= lo ({hi} < {lo})"
            )));
        }
        Ok(self.difference_unchecked(hi, lo))
    }

    pub(crate) fn difference_unchecked(&self, hi: f64, lo: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match (self.mode, &self.table, &self.bank) {
            (EstimatorMode::LookupTable, Some(t), _) => (t.capacity(hi) - t.capacity(lo)).max(0.0),
            (_, _, Some(bank)) => {
                let s: f64 = bank.iter().map(|&d| (hi * d).ln_1p() - (lo * d).ln_1p()).sum();
                (s / (self.n_samples as f64 * std::f64::consts::LN_2)).max(0.0)
            }
            _ => unreachable!("estimator without bank or table"),
        }
    }

    /// `φ(x)`, dimensionless; `φ(0) = 1` up to Monte-Carlo error.
    pub fn phi_aux(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(match (self.mode, &self.table, &self.bank) {
            (EstimatorMode::LookupTable, Some(t), _) => t.aux(x),
            (_, _, Some(bank)) => {
                // 1/(x + n_T/d) = (d/n_T)/(1 + x·d/n_T); zero eigenvalues drop out
                let s: f64 = bank.iter().map(|&d| d / (1.0 + x * d)).sum();
                s / (self.n_samples as f64 * self.shape.n_r as f64)
            }
            _ => unreachable!("estimator without bank or table"),
        })
    }

    /// Standard error of the `φ(x)` estimate over the sample bank.
    pub fn phi_aux_std_error(&self, x: f64) -> Option<f64> {
        let bank = self.bank.as_ref()?;
        let dims = self.shape.dims();
        let n_r = self.shape.n_r as f64;
        let per: Vec<f64> = bank
            .chunks(dims)
            .map(|c| c.iter().map(|&d| d / (1.0 + x * d)).sum::<f64>() / n_r)
            .collect();
        Some(std_error(&per))
    }
}

pub(crate) fn std_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n < 2.0 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// 256 log-spaced points over `[1e-3, 1e8]`.
pub fn default_grid() -> Vec<f64> {
    let (a, b) = (TABLE_X_MIN.ln(), TABLE_X_MAX.ln());
    (0..TABLE_POINTS)
        .map(|j| (a + (b - a) * j as f64 / (TABLE_POINTS - 1) as f64).exp())
        .collect()
}

fn eigenvalue_bank(shape: MimoShape, n_samples: usize, seed: u64) -> Vec<f64> {
    let dims = shape.dims();
    let inv_nt = 1.0 / shape.n_t as f64;
    let per_sample: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = keyed_rng(seed, stream::CHANNEL, s as u64);
            let h = random_channel(&mut rng, shape.n_r, shape.n_t);
            let g = small_gram(&h);
            hermitian_eigenvalues(&g)
                .into_iter()
                .take(dims)
                .map(|d| d * inv_nt)
                .collect()
        })
        .collect();
    per_sample.into_iter().flatten().collect()
}

/// Multicast, unicast and aggregate rates of an allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// Multicast rate `R₀`, the minimum of `multicast_per_user`.
    pub r0: f64,
    /// Unicast rate of every user.
    pub r_k: Vec<f64>,
    /// Rate at which each user could decode the multicast layer.
    pub multicast_per_user: Vec<f64>,
    /// `K·R₀ + Σ Rₖ`.
    pub sum_rate: f64,
    /// `μ·R₀ + Σ Rₖ`.
    pub wsr: f64,
}

/// `Φ(σ²ᵢ,ₖ·P) − Φ(σ²ᵢ,ₖ·P₁)`: multicast rate decodable by user `k` on subchannel `i`.
pub fn multicast_rate_term(
    stats: &ChannelStats,
    i: usize,
    k: usize,
    p_total: f64,
    p1: f64,
    est: &RateEstimator,
) -> Result<f64> {
    stats.check_subchannel(i)?;
    stats.check_user(k)?;
    if !(p1 >= 0.0) || p1 > p_total {
        return Err(Error::InvalidInput(format!(
            "unicast power {p1} must lie in [0, {p_total}]"
        )));
    }
    let s = stats.snr(i, k);
    est.phi_difference(s * p_total, s * p1)
}

/// `Φ(σ²ᵢ,π⁽ⁱ⁾(1)·P₁)`: unicast rate of the strongest user on subchannel `i`.
pub fn unicast_rate_term(stats: &ChannelStats, i: usize, p1: f64, est: &RateEstimator) -> Result<f64> {
    stats.check_subchannel(i)?;
    if !(p1 >= 0.0) {
        return Err(Error::InvalidInput(format!("unicast power must be >= 0, got {p1}")));
    }
    est.phi_capacity(stats.snr(i, stats.strongest(i)) * p1)
}

/// Per-user multicast decode rates `Σᵢ ηᵢ·(Φ(σ²P) − Φ(σ²P₁))` for powers that
/// are already validated.
pub(crate) fn multicast_rates(stats: &ChannelStats, p_total: &[f64], p1: &[f64], est: &RateEstimator) -> Vec<f64> {
    (0..stats.n_users())
        .map(|k| {
            (0..stats.n_subchannels())
                .map(|i| {
                    let s = stats.snr(i, k);
                    stats.eta()[i] * est.difference_unchecked(s * p_total[i], s * p1[i])
                })
                .sum()
        })
        .collect()
}

/// Evaluates the rate tuple of an allocation. `mu_total` weights the
/// multicast rate in `wsr`; `sum_rate` always uses `μ = K`.
pub fn rate_tuple(stats: &ChannelStats, alloc: &Allocation, mu_total: f64, est: &RateEstimator) -> Result<RateResult> {
    let m = stats.n_subchannels();
    if alloc.p_total.len() != m || alloc.p1.len() != m || alloc.selected_user.len() != m {
        return Err(Error::Dimension(format!(
            "allocation has {} subchannels, statistics have {m}",
            alloc.p_total.len()
        )));
    }
    for i in 0..m {
        if !(alloc.p1[i] >= 0.0) || alloc.p1[i] > alloc.p_total[i] {
            return Err(Error::InvalidInput(format!(
                "subchannel {i}: unicast power {} outside [0, {}]",
                alloc.p1[i], alloc.p_total[i]
            )));
        }
        if let Some(u) = alloc.selected_user[i] {
            stats.check_user(u)?;
        }
    }
    let per_user = multicast_rates(stats, &alloc.p_total, &alloc.p1, est);
    let r0 = per_user.iter().copied().fold(f64::INFINITY, f64::min);
    let mut r_k = vec![0.0; stats.n_users()];
    for i in 0..m {
        if let Some(u) = alloc.selected_user[i] {
            r_k[u] += stats.eta()[i] * est.capacity_unchecked(stats.snr(i, u) * alloc.p1[i]);
        }
    }
    let unicast: f64 = r_k.iter().sum();
    Ok(RateResult {
        r0,
        sum_rate: stats.n_users() as f64 * r0 + unicast,
        wsr: mu_total * r0 + unicast,
        r_k,
        multicast_per_user: per_user,
    })
}

/// Writes a table file to disk.
pub fn save_table(table: &LookupTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_text())?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<LookupTable> {
    LookupTable::parse_text(&std::fs::read_to_string(path)?)
}
