//! Multi-drop system-level sweeps and their summaries.
//!
//! A sweep draws `n_drops` network drops, keeps the first `K` measured users
//! of each drop for every requested user count (so all counts and schemes
//! share drops), runs every scheme and aggregates sum rates, per-user
//! spectral efficiencies and Algorithm 1 mode fractions. Drops run on the
//! rayon pool; every random quantity is keyed by `(seed, drop index)`, and
//! results are collected in drop order, so output files do not depend on the
//! thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alloc::{allocate, invariant_violations, Allocation, AllocatorOptions, Mode, Scheme, SurrogateModel};
use crate::channel::{ChannelStats, MimoShape};
use crate::error::{Error, Result};
use crate::oracle::{dof_slope, DofScenario};
use crate::rates::{RateEstimator, DEFAULT_SAMPLES};
use crate::rng::{keyed_rng, stream};
use crate::surrogate::{alpha_lookup, SurrogateTable};
use crate::sysim::{drop_to_channel_stats, generate_drop, NetworkScenario};

/// Minimum sample count accepted by [`percentile`].
pub const MIN_PERCENTILE_SAMPLES: usize = 20;

/// Relative power tolerance used when checking allocations.
pub const POWER_TOLERANCE: f64 = 1e-6;

/// Network scenario given inline or as a path to a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Path(PathBuf),
    Inline(NetworkScenario),
}

impl Default for ScenarioRef {
    fn default() -> Self {
        ScenarioRef::Inline(NetworkScenario::default())
    }
}

impl ScenarioRef {
    /// Resolves the scenario; relative paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<NetworkScenario> {
        match self {
            ScenarioRef::Inline(s) => {
                s.validate()?;
                Ok(s.clone())
            }
            ScenarioRef::Path(p) => {
                let full = match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                NetworkScenario::load(&full)
            }
        }
    }
}

/// How the total multicast weight is chosen for a drop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuPolicy {
    /// `μ = K`: the unweighted sum rate `K·R₀ + Σ Rₖ`.
    #[default]
    Users,
    Fixed(f64),
}

impl MuPolicy {
    pub fn mu(&self, k: usize) -> f64 {
        match *self {
            MuPolicy::Users => k as f64,
            MuPolicy::Fixed(m) => m,
        }
    }
}

/// Settings of a degrees-of-freedom sweep on a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DofConfig {
    pub shapes: Vec<String>,
    pub k_users: usize,
    pub n_subchannels: usize,
    /// Transmit powers (dB) the slope is fitted over.
    pub power_db: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// Extra fixed-superposition scenarios.
    pub superposition: Vec<SuperpositionCase>,
    /// Monte-Carlo samples of the rate estimator (direct evaluation, no table).
    pub n_samples: usize,
    /// Channel SNRs of the instance are drawn log-uniformly in this dB range.
    pub snr_db_range: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperpositionCase {
    pub m_prime: usize,
    pub unicast_fraction: f64,
}

impl Default for DofConfig {
    fn default() -> Self {
        Self {
            shapes: vec!["2x2".into()],
            k_users: 3,
            n_subchannels: 2,
            power_db: vec![30.0, 40.0, 50.0, 60.0],
            schemes: vec![Scheme::Mo, Scheme::Uo],
            superposition: vec![SuperpositionCase {
                m_prime: 1,
                unicast_fraction: 0.5,
            }],
            n_samples: 4000,
            snr_db_range: [0.0, 5.0],
        }
    }
}

/// Sweep configuration, normally read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioRef,
    pub user_counts: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub n_drops: usize,
    pub mu_policy: MuPolicy,
    /// MIMO shapes written as `"n_Txn_R"`, e.g. `"8x4"`.
    pub shapes: Vec<String>,
    pub seed: u64,
    /// Monte-Carlo samples behind each shape's lookup table.
    pub n_samples: usize,
    /// Total transmit power. Channel SNRs already include the 46 dBm budget,
    /// so the default is 1.
    pub power: f64,
    /// Optional fitted surrogate table; the built-in reference table otherwise.
    pub alpha_table: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Writes one drop CSV per drop under `drops/`.
    pub export_drops: bool,
    pub dof: Option<DofConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioRef::default(),
            user_counts: vec![10, 20, 30],
            schemes: Scheme::ALL.to_vec(),
            n_drops: 200,
            mu_policy: MuPolicy::Users,
            shapes: vec!["8x4".into()],
            seed: 1,
            n_samples: DEFAULT_SAMPLES,
            power: 1.0,
            alpha_table: None,
            output: None,
            export_drops: false,
            dof: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_drops == 0 {
            return Err(Error::InvalidInput("n_drops must be >= 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidInput("at least one scheme is required".into()));
        }
        if self.user_counts.is_empty() || self.user_counts.contains(&0) {
            return Err(Error::InvalidInput("user counts must be nonempty and positive".into()));
        }
        if self.shapes.is_empty() {
            return Err(Error::InvalidInput("at least one MIMO shape is required".into()));
        }
        self.parsed_shapes()?;
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::InvalidInput(format!("power must be > 0, got {}", self.power)));
        }
        if let MuPolicy::Fixed(m) = self.mu_policy {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::InvalidInput(format!("fixed mu must be >= 0, got {m}")));
            }
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn parsed_shapes(&self) -> Result<Vec<MimoShape>> {
        parse_shapes(&self.shapes)
    }

    /// User counts, sorted and deduplicated.
    pub fn sorted_user_counts(&self) -> Vec<usize> {
        let mut ks = self.user_counts.clone();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

fn parse_shapes(shapes: &[String]) -> Result<Vec<MimoShape>> {
    shapes.iter().map(|s| s.parse()).collect()
}

/// Empirical CDF as `(value, P[X ≤ value])` steps, one per distinct value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub points: Vec<(f64, f64)>,
}

impl Cdf {
    /// `P[X ≤ x]`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.points.partition_point(|&(v, _)| v <= x);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].1
        }
    }
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("samples must be finite".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Empirical CDF of `samples`.
pub fn cdf_stats(samples: &[f64]) -> Result<Cdf> {
    let v = sorted_finite(samples)?;
    let n = v.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (j, &x) in v.iter().enumerate() {
        let f = (j + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => points.push((x, f)),
        }
    }
    Ok(Cdf { points })
}

/// `p`-quantile (`p` in `[0, 1]`) by linear interpolation between order
/// statistics at rank `(n + 1)·p`, clamped to the sample range.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "percentile level must lie in [0, 1], got {p}"
        )));
    }
    if samples.len() < MIN_PERCENTILE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_PERCENTILE_SAMPLES} samples for a percentile, got {}",
            samples.len()
        )));
    }
    let v = sorted_finite(samples)?;
    let n = v.len();
    let h = ((n + 1) as f64 * p - 1.0).clamp(0.0, (n - 1) as f64);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Fraction of (drop, subchannel) pairs in each mode; sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeFractions {
    pub unicast_only: f64,
    pub multicast_only: f64,
    pub superposition: f64,
    pub off: f64,
}

impl ModeFractions {
    pub fn get(&self, mode: Mode) -> f64 {
        match mode {
            Mode::UnicastOnly => self.unicast_only,
            Mode::MulticastOnly => self.multicast_only,
            Mode::Superposition => self.superposition,
            Mode::Off => self.off,
        }
    }
}

/// Counts subchannel modes over all allocations. Returns all zeros when no
/// subchannel is seen.
pub fn mode_fractions<'a, I>(allocations: I) -> ModeFractions
where
    I: IntoIterator<Item = &'a Allocation>,
{
    let mut counts = [0usize; 4];
    for a in allocations {
        for m in &a.mode {
            counts[Mode::ALL.iter().position(|x| x == m).expect("mode listed")] += 1;
        }
    }
    mode_fractions_from_counts(counts)
}

fn mode_fractions_from_counts(counts: [usize; 4]) -> ModeFractions {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return ModeFractions::default();
    }
    let f = |c: usize| c as f64 / total as f64;
    ModeFractions {
        unicast_only: f(counts[0]),
        multicast_only: f(counts[1]),
        superposition: f(counts[2]),
        off: f(counts[3]),
    }
}

/// Samples collected for one (shape, K, scheme) cell of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub shape: MimoShape,
    pub k_users: usize,
    pub scheme: Scheme,
    /// One `K·R₀ + Σ Rₖ` per successful drop.
    pub sum_rates: Vec<f64>,
    /// `R₀ + Rₖ` of every measured user in every successful drop.
    pub user_se: Vec<f64>,
}

impl Series {
    pub fn mean_sum_rate(&self) -> f64 {
        mean(&self.sum_rates)
    }

    pub fn p5_user_se(&self) -> Result<f64> {
        percentile(&self.user_se, 0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub shape: MimoShape,
    pub k_users: usize,
    pub fractions: ModeFractions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofRow {
    pub scheme: String,
    pub shape: MimoShape,
    pub slope: f64,
}

/// Reproducibility record written next to the CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub seed: u64,
    /// SHA-256 of the canonical TOML form of the configuration.
    pub config_hash: String,
    pub n_drops: usize,
    pub failed_drops: Vec<DropFailure>,
    pub invariant_violations: Vec<String>,
    /// `α` used per shape.
    pub alphas: BTreeMap<String, f64>,
    pub runtime_s: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropFailure {
    pub drop_index: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub series: Vec<Series>,
    pub modes: Vec<ModeRow>,
    pub dof: Vec<DofRow>,
    pub manifest: Manifest,
}

impl ExperimentResult {
    pub fn series(&self, shape: MimoShape, k: usize, scheme: Scheme) -> Option<&Series> {
        self.series
            .iter()
            .find(|s| s.shape == shape && s.k_users == k && s.scheme == scheme)
    }

    pub fn modes(&self, shape: MimoShape, k: usize) -> Option<&ModeFractions> {
        self.modes
            .iter()
            .find(|m| m.shape == shape && m.k_users == k)
            .map(|m| &m.fractions)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// SHA-256 (hex) of the configuration's canonical TOML text.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(config.to_toml()?.as_bytes())))
}

/// Per-shape context shared by all drops.
struct ShapeContext {
    shape: MimoShape,
    est: RateEstimator,
    model: SurrogateModel,
}

/// What one drop contributes, indexed `[shape][k][scheme]`.
struct DropOutcome {
    cells: Vec<Vec<Vec<CellSample>>>,
    mode_counts: Vec<Vec<[usize; 4]>>,
    violations: Vec<String>,
}

struct CellSample {
    sum_rate: f64,
    user_se: Vec<f64>,
}

fn surrogate_table(config: &ExperimentConfig, base_dir: Option<&Path>) -> Result<SurrogateTable> {
    match &config.alpha_table {
        None => Ok(SurrogateTable::reference()),
        Some(p) => {
            let full = match base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.clone(),
            };
            SurrogateTable::load(&full)
        }
    }
}

fn shape_contexts(
    shapes: &[MimoShape],
    table: &SurrogateTable,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ShapeContext>> {
    shapes
        .iter()
        .map(|&shape| {
            let alpha = alpha_lookup(shape, table, seed)?;
            Ok(ShapeContext {
                shape,
                est: RateEstimator::lookup(shape, n_samples, seed)?,
                model: SurrogateModel::new(alpha, shape.n_r)?,
            })
        })
        .collect()
}

fn run_drop(
    config: &ExperimentConfig,
    scenario: &NetworkScenario,
    contexts: &[ShapeContext],
    ks: &[usize],
    drop_index: u64,
    opts: &AllocatorOptions,
) -> Result<(crate::sysim::Drop, DropOutcome)> {
    let k_max = *ks.last().expect("validated nonempty");
    let drop = generate_drop(scenario, k_max, config.seed, drop_index)?;
    let stats_per_k: Vec<ChannelStats> = ks
        .iter()
        .map(|&k| drop_to_channel_stats(&drop, scenario, k))
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(contexts.len());
    let mut mode_counts = Vec::with_capacity(contexts.len());
    let mut violations = Vec::new();
    for ctx in contexts {
        let mut per_k = Vec::with_capacity(ks.len());
        let mut counts_k = Vec::with_capacity(ks.len());
        for (&k, stats) in ks.iter().zip(&stats_per_k) {
            let mu = config.mu_policy.mu(k);
            let mut per_scheme = Vec::with_capacity(config.schemes.len());
            let mut counts = [0usize; 4];
            for &scheme in &config.schemes {
                let sol = allocate(scheme, stats, mu, config.power, ctx.model, &ctx.est, opts)?;
                for v in invariant_violations(scheme, stats, &sol.allocation, config.power, POWER_TOLERANCE) {
                    violations.push(format!("drop {drop_index}, {} K={k} {scheme}: {v}", ctx.shape));
                }
                if scheme == Scheme::Alg1 {
                    for m in &sol.allocation.mode {
                        counts[Mode::ALL.iter().position(|x| x == m).expect("mode listed")] += 1;
                    }
                }
                let r = &sol.rates;
                per_scheme.push(CellSample {
                    sum_rate: r.sum_rate,
                    user_se: r.r_k.iter().map(|rk| r.r0 + rk).collect(),
                });
            }
            per_k.push(per_scheme);
            counts_k.push(counts);
        }
        cells.push(per_k);
        mode_counts.push(counts_k);
    }
    Ok((
        drop,
        DropOutcome {
            cells,
            mode_counts,
            violations,
        },
    ))
}

type SeriesSamples = (Vec<f64>, Vec<f64>);

/// Runs the sweep. `base_dir` resolves relative scenario and table paths.
/// Nothing is written to disk; see [`write_outputs`].
pub fn run_experiment(
    config: &ExperimentConfig,
    base_dir: Option<&Path>,
) -> Result<(ExperimentResult, Vec<crate::sysim::Drop>)> {
    let started = Instant::now();
    config.validate()?;
    let scenario = config.scenario.resolve(base_dir)?;
    let shapes = config.parsed_shapes()?;
    let ks = config.sorted_user_counts();
    let table = surrogate_table(config, base_dir)?;
    let contexts = shape_contexts(&shapes, &table, config.n_samples, config.seed)?;
    let opts = AllocatorOptions::default();

    let outcomes: Vec<Result<(crate::sysim::Drop, DropOutcome)>> = (0..config.n_drops as u64)
        .into_par_iter()
        .map(|d| run_drop(config, &scenario, &contexts, &ks, d, &opts))
        .collect();

    let n_schemes = config.schemes.len();
    // samples[shape][k][scheme] = (sum rates, per-user SE)
    let mut samples: Vec<Vec<Vec<SeriesSamples>>> =
        vec![vec![vec![(Vec::new(), Vec::new()); n_schemes]; ks.len()]; shapes.len()];
    let mut counts = vec![vec![[0usize; 4]; ks.len()]; shapes.len()];
    let mut failed = Vec::new();
    let mut violations = Vec::new();
    let mut drops = Vec::new();
    for (d, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Err(e) => failed.push(DropFailure {
                drop_index: d as u64,
                error: e.to_string(),
            }),
            Ok((drop, o)) => {
                for (s, per_k) in o.cells.into_iter().enumerate() {
                    for (ki, per_scheme) in per_k.into_iter().enumerate() {
                        for (j, cell) in per_scheme.into_iter().enumerate() {
                            samples[s][ki][j].0.push(cell.sum_rate);
                            samples[s][ki][j].1.extend(cell.user_se);
                        }
                        for (c, add) in counts[s][ki].iter_mut().zip(o.mode_counts[s][ki]) {
                            *c += add;
                        }
                    }
                }
                violations.extend(o.violations);
                if config.export_drops {
                    drops.push(drop);
                }
            }
        }
    }

    let mut series = Vec::new();
    let mut modes = Vec::new();
    for (s, ctx) in contexts.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            for (j, &scheme) in config.schemes.iter().enumerate() {
                let (sum_rates, user_se) = std::mem::take(&mut samples[s][ki][j]);
                series.push(Series {
                    shape: ctx.shape,
                    k_users: k,
                    scheme,
                    sum_rates,
                    user_se,
                });
            }
            if config.schemes.contains(&Scheme::Alg1) {
                modes.push(ModeRow {
                    shape: ctx.shape,
                    k_users: k,
                    fractions: mode_fractions_from_counts(counts[s][ki]),
                });
            }
        }
    }

    let dof = match &config.dof {
        Some(d) => dof_experiment(d, &table, config.seed)?,
        None => Vec::new(),
    };

    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_hash: config_hash(config)?,
        n_drops: config.n_drops,
        failed_drops: failed,
        invariant_violations: violations,
        alphas: contexts.iter().map(|c| (c.shape.to_string(), c.model.alpha)).collect(),
        runtime_s: started.elapsed().as_secs_f64(),
        files: Vec::new(),
    };
    Ok((
        ExperimentResult {
            series,
            modes,
            dof,
            manifest,
        },
        drops,
    ))
}

/// Synthetic `M × K` instance for DoF sweeps: SNRs log-uniform in `range_db`.
pub fn dof_instance(k: usize, m: usize, range_db: [f64; 2], seed: u64) -> Result<ChannelStats> {
    if !(range_db[0] <= range_db[1]) {
        return Err(Error::InvalidInput(format!("invalid SNR range {range_db:?}")));
    }
    let mut rng = keyed_rng(seed, stream::INSTANCE, 0);
    let rows = (0..m)
        .map(|_| {
            (0..k)
                .map(|_| 10f64.powf(rng.random_range(range_db[0]..=range_db[1]) / 10.0))
                .collect()
        })
        .collect();
    ChannelStats::with_uniform_eta(rows)
}

/// Label used in `dof.csv` for a fixed-superposition scenario.
pub fn superposition_label(case: &SuperpositionCase) -> String {
    format!("sc-m{}-f{}", case.m_prime, case.unicast_fraction)
}

/// Slope of every configured scheme and superposition case on every shape.
pub fn dof_experiment(config: &DofConfig, table: &SurrogateTable, seed: u64) -> Result<Vec<DofRow>> {
    if config.k_users == 0 || config.n_subchannels == 0 || config.n_samples == 0 {
        return Err(Error::InvalidInput(
            "DoF sweep needs users, subchannels and samples".into(),
        ));
    }
    let stats = dof_instance(config.k_users, config.n_subchannels, config.snr_db_range, seed)?;
    let opts = AllocatorOptions::default();
    let mut rows = Vec::new();
    for shape in parse_shapes(&config.shapes)? {
        let est = RateEstimator::monte_carlo(shape, config.n_samples, seed)?;
        let model = SurrogateModel::new(alpha_lookup(shape, table, seed)?, shape.n_r)?;
        let mut cases: Vec<(String, DofScenario)> = config
            .schemes
            .iter()
            .map(|&s| (s.to_string(), DofScenario::Scheme { scheme: s }))
            .collect();
        cases.extend(config.superposition.iter().map(|c| {
            (
                superposition_label(c),
                DofScenario::FixedSuperposition {
                    m_prime: c.m_prime,
                    unicast_fraction: c.unicast_fraction,
                },
            )
        }));
        for (label, scenario) in cases {
            let r = dof_slope(scenario, &stats, &config.power_db, model, &est, &opts)?;
            rows.push(DofRow {
                scheme: label,
                shape,
                slope: r.slope,
            });
        }
    }
    Ok(rows)
}

fn csv_text<F>(header: &[&str], fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let run = || -> csv::Result<Vec<u8>> {
        w.write_record(header)?;
        fill(&mut w)?;
        w.into_inner().map_err(|e| e.into_error().into())
    };
    let bytes = run().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// `cdf.csv`: every sum-rate sample, sorted, per scheme and user count.
pub fn cdf_csv(series: &[&Series]) -> Result<String> {
    csv_text(&["scheme", "k_users", "sum_rate_bps_hz"], |w| {
        for s in series {
            let mut v = s.sum_rates.clone();
            v.sort_by(f64::total_cmp);
            for x in v {
                w.write_record([s.scheme.to_string(), s.k_users.to_string(), x.to_string()])?;
            }
        }
        Ok(())
    })
}

/// `percentile.csv`: 5th-percentile user spectral efficiency.
pub fn percentile_csv(series: &[&Series]) -> Result<String> {
    let mut rows = Vec::new();
    for s in series {
        rows.push([s.scheme.to_string(), s.k_users.to_string(), s.p5_user_se()?.to_string()]);
    }
    csv_text(&["scheme", "k_users", "p5_se"], |w| {
        for r in rows {
            w.write_record(r)?;
        }
        Ok(())
    })
}

/// `modes.csv`: Algorithm 1 mode fractions per user count.
pub fn modes_csv(rows: &[&ModeRow]) -> Result<String> {
    csv_text(&["k_users", "mode", "fraction"], |w| {
        for r in rows {
            for m in Mode::ALL {
                w.write_record([
                    r.k_users.to_string(),
                    m.as_str().to_string(),
                    r.fractions.get(m).to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

/// `dof.csv`: fitted high-power slopes.
pub fn dof_csv(rows: &[DofRow]) -> Result<String> {
    csv_text(&["scheme", "shape", "slope"], |w| {
        for r in rows {
            w.write_record([r.scheme.clone(), r.shape.to_string(), r.slope.to_string()])?;
        }
        Ok(())
    })
}

/// Writes the CSV files, optional drop exports and `manifest.json` under
/// `out`. With several shapes each shape's CSVs go to `out/<shape>/`.
/// Returns the manifest as written.
pub fn write_outputs(result: &ExperimentResult, drops: &[crate::sysim::Drop], out: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut shapes: Vec<MimoShape> = result.series.iter().map(|s| s.shape).collect();
    shapes.dedup();
    let nested = shapes.len() > 1;
    for shape in &shapes {
        let rel = if nested {
            PathBuf::from(shape.to_string())
        } else {
            PathBuf::new()
        };
        std::fs::create_dir_all(out.join(&rel))?;
        let series: Vec<&Series> = result.series.iter().filter(|s| s.shape == *shape).collect();
        let modes: Vec<&ModeRow> = result.modes.iter().filter(|m| m.shape == *shape).collect();
        let mut put = |name: &str, text: String| -> Result<()> {
            let p = rel.join(name);
            std::fs::write(out.join(&p), text)?;
            files.push(p.to_string_lossy().into_owned());
            Ok(())
        };
        put("cdf.csv", cdf_csv(&series)?)?;
        put("percentile.csv", percentile_csv(&series)?)?;
        if !modes.is_empty() {
            put("modes.csv", modes_csv(&modes)?)?;
        }
    }
    if !result.dof.is_empty() {
        std::fs::write(out.join("dof.csv"), dof_csv(&result.dof)?)?;
        files.push("dof.csv".into());
    }
    if !drops.is_empty() {
        std::fs::create_dir_all(out.join("drops"))?;
        for d in drops {
            let name = format!("drops/drop_{:05}.csv", d.drop_index);
            std::fs::write(out.join(&name), d.to_csv()?)?;
            files.push(name);
        }
    }
    let mut manifest = result.manifest.clone();
    manifest.files = files;
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Plain-text summary: mean sum rate, gain of Algorithm 1 and 5th-percentile
/// SE per scheme, then mode fractions and DoF slopes.
pub fn summary(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let mut keys: Vec<(MimoShape, usize)> = result.series.iter().map(|s| (s.shape, s.k_users)).collect();
    keys.dedup();
    for (shape, k) in keys {
        let _ = writeln!(out, "{shape}, K = {k}");
        let alg1 = result.series(shape, k, Scheme::Alg1).map(Series::mean_sum_rate);
        for s in result.series.iter().filter(|s| s.shape == shape && s.k_users == k) {
            let m = s.mean_sum_rate();
            let gain = alg1.map_or(String::new(), |a| format!("  alg1 gain {:+.1}%", 100.0 * (a / m - 1.0)));
            let p5 = s.p5_user_se().map_or("n/a".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(out, "  {:<5} mean {m:>9.3}  p5 SE {p5:>8}{gain}", s.scheme.to_string());
        }
        if let Some(f) = result.modes(shape, k) {
            let _ = writeln!(
                out,
                "  alg1 modes: superposition {:.3}, unicast-only {:.3}, multicast-only {:.3}, off {:.3}",
                f.superposition, f.unicast_only, f.multicast_only, f.off
            );
        }
    }
    for r in &result.dof {
        let _ = writeln!(out, "DoF {} {}: {:.3}", r.scheme, r.shape, r.slope);
    }
    let m = &result.manifest;
    let _ = writeln!(
        out,
        "{} drops, {} failed, {} invariant violations, {:.1} s",
        m.n_drops,
        m.failed_drops.len(),
        m.invariant_violations.len(),
        m.runtime_s
    );
    out
}
