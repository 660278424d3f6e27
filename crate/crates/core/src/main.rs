use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use supermux::alloc::{allocate, invariant_violations, AllocatorOptions, Scheme, Solution, SurrogateModel};
use supermux::experiment::{
    config_hash, dof_experiment, run_experiment, summary, write_outputs, DofConfig, ExperimentConfig, POWER_TOLERANCE,
};
use supermux::oracle::{brute_force_wsr, direct_covariance_solver, DirectOptions, OracleResult};
use supermux::surrogate::{alpha_lookup, FitGrid, SurrogateTable, REFERENCE_ALPHAS};
use supermux::{ChannelStats, Error, MimoShape, RateEstimator, Result};

/// Exit status when an allocation or output fails its consistency checks.
const EXIT_INVARIANT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "supermux",
    version,
    about = "Multicast/unicast superposition allocation and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Input file (format depends on the subcommand).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; overrides any seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the surrogate slope α per MIMO shape and write a table.
    FitAlpha(Common),
    /// Allocate power on a channel-statistics file (`--config`) and print JSON.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// Total multicast weight μ (defaults to the number of users).
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        power: f64,
        #[arg(long, default_value = "alg1")]
        scheme: Scheme,
        /// Surrogate table file; the built-in reference table otherwise.
        #[arg(long)]
        alpha_table: Option<PathBuf>,
        #[arg(long, default_value = "8x4")]
        shape: MimoShape,
        /// Monte-Carlo samples behind the rate lookup table.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Solve a small instance by brute force or direct covariance search.
    Oracle(Common),
    /// Fit high-power sum-rate slopes.
    Dof(Common),
    /// Run a multi-drop system-level sweep.
    Simulate(Common),
    /// Summarise and check the outputs of a finished sweep.
    Report(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::FitAlpha(c) => fit_alpha(&c),
        Command::Allocate {
            common,
            mu,
            power,
            scheme,
            alpha_table,
            shape,
            samples,
        } => allocate_cmd(&common, mu, power, scheme, alpha_table.as_deref(), shape, samples),
        Command::Oracle(c) => oracle_cmd(&c),
        Command::Dof(c) => dof_cmd(&c),
        Command::Simulate(c) => simulate(&c),
        Command::Report(c) => report(&c),
    };
    match outcome {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in violations.iter().take(20) {
                eprintln!("invariant violated: {v}");
            }
            if violations.len() > 20 {
                eprintln!("... {} more", violations.len() - 20);
            }
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Subcommands return the invariant violations they found.
type Outcome = Result<Vec<String>>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn require_config(c: &Common) -> Result<&Path> {
    c.config
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("--config is required".into()))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => stdout(&format!("{text}\n"))?,
    }
    Ok(())
}

/// Writes to stdout, treating a closed pipe as success.
fn stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FitConfig {
    shapes: Vec<String>,
    n_samples: usize,
    grid: FitGrid,
    seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            shapes: REFERENCE_ALPHAS.iter().map(|r| format!("{}x{}", r.0, r.1)).collect(),
            n_samples: 100_000,
            grid: FitGrid::default(),
            seed: 0,
        }
    }
}

fn fit_alpha(c: &Common) -> Outcome {
    let mut cfg: FitConfig = match &c.config {
        Some(p) => parse_toml(&read(p)?)?,
        None => FitConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let shapes: Vec<MimoShape> = cfg.shapes.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let table = SurrogateTable::fit(&shapes, cfg.n_samples, cfg.seed, &cfg.grid)?;
    let reference = SurrogateTable::reference();
    for (shape, e) in table.iter() {
        match reference.get(shape) {
            Some(r) => eprintln!(
                "{shape:>6}: alpha {:.4} (reference {:.3}, {:+.2}%), mse {:.3e}",
                e.alpha,
                r.alpha,
                100.0 * (e.alpha / r.alpha - 1.0),
                e.mse
            ),
            None => eprintln!("{shape:>6}: alpha {:.4}, mse {:.3e}", e.alpha, e.mse),
        }
    }
    emit(c.out.as_deref(), &table.to_text())?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct AllocateReport<'a> {
    scheme: Scheme,
    shape: MimoShape,
    alpha: f64,
    mu: f64,
    power: f64,
    #[serde(flatten)]
    solution: &'a Solution,
    violations: &'a [String],
}

fn allocate_cmd(
    c: &Common,
    mu: Option<f64>,
    power: f64,
    scheme: Scheme,
    alpha_table: Option<&Path>,
    shape: MimoShape,
    samples: usize,
) -> Outcome {
    let stats = ChannelStats::parse_text(&read(require_config(c)?)?, supermux::channel::DEFAULT_TIE_EPSILON)?;
    let seed = c.seed.unwrap_or(0);
    let table = match alpha_table {
        Some(p) => SurrogateTable::load(p)?,
        None => SurrogateTable::reference(),
    };
    let alpha = alpha_lookup(shape, &table, seed)?;
    let model = SurrogateModel::new(alpha, shape.n_r)?;
    let est = RateEstimator::lookup(shape, samples, seed)?;
    let mu = mu.unwrap_or(stats.n_users() as f64);
    let sol = allocate(scheme, &stats, mu, power, model, &est, &AllocatorOptions::default())?;
    let violations = invariant_violations(scheme, &stats, &sol.allocation, power, POWER_TOLERANCE);
    let report = AllocateReport {
        scheme,
        shape,
        alpha,
        mu,
        power,
        solution: &sol,
        violations: &violations,
    };
    emit(c.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    Ok(violations)
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
enum OracleMethod {
    #[default]
    Brute,
    Direct,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleConfig {
    /// Linear SNRs, one row per subchannel.
    snr: Vec<Vec<f64>>,
    #[serde(default)]
    method: OracleMethod,
    #[serde(default = "default_shape")]
    shape: String,
    /// Total multicast weight (brute force); defaults to the user count.
    mu: Option<f64>,
    /// Per-user weights (direct solver); defaults to `μ/K` each.
    mu_vec: Option<Vec<f64>>,
    #[serde(default = "one")]
    power: f64,
    #[serde(default = "default_resolution")]
    resolution: usize,
    #[serde(default = "default_oracle_samples")]
    n_samples: usize,
    seed: Option<u64>,
}

fn default_shape() -> String {
    "2x2".into()
}
fn one() -> f64 {
    1.0
}
fn default_resolution() -> usize {
    16
}
fn default_oracle_samples() -> usize {
    10_000
}

fn oracle_cmd(c: &Common) -> Outcome {
    let cfg: OracleConfig = parse_toml(&read(require_config(c)?)?)?;
    let seed = c.seed.or(cfg.seed).unwrap_or(0);
    let stats = ChannelStats::with_uniform_eta(cfg.snr)?;
    let shape: MimoShape = cfg.shape.parse()?;
    let k = stats.n_users();
    let mu = cfg.mu.unwrap_or(k as f64);
    let result: OracleResult = match cfg.method {
        OracleMethod::Brute => {
            let est = RateEstimator::lookup(shape, cfg.n_samples, seed)?;
            brute_force_wsr(&stats, mu, cfg.power, cfg.resolution, &est)?
        }
        OracleMethod::Direct => {
            let mu_vec = cfg.mu_vec.unwrap_or_else(|| vec![mu / k as f64; k]);
            let opts = DirectOptions {
                n_samples: cfg.n_samples,
                seed,
                ..DirectOptions::default()
            };
            direct_covariance_solver(&stats, &mu_vec, cfg.power, shape, &opts)?
        }
    };
    emit(c.out.as_deref(), &serde_json::to_string_pretty(&result)?)?;
    Ok(Vec::new())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DofFile {
    #[serde(default)]
    seed: u64,
    alpha_table: Option<PathBuf>,
    #[serde(flatten)]
    dof: DofConfig,
}

fn dof_cmd(c: &Common) -> Outcome {
    let file: DofFile = match &c.config {
        Some(p) => parse_toml(&read(p)?)?,
        None => DofFile::default(),
    };
    let table = match &file.alpha_table {
        Some(p) => SurrogateTable::load(p)?,
        None => SurrogateTable::reference(),
    };
    let rows = dof_experiment(&file.dof, &table, c.seed.unwrap_or(file.seed))?;
    for r in &rows {
        eprintln!("{} {}: slope {:.3}", r.scheme, r.shape, r.slope);
    }
    let csv = supermux::experiment::dof_csv(&rows)?;
    match &c.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("dof.csv"), csv)?;
        }
        None => stdout(&csv)?,
    }
    Ok(Vec::new())
}

fn load_experiment(c: &Common) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let path = require_config(c)?;
    let mut cfg = ExperimentConfig::from_toml(&read(path)?)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let base = path.parent().map(Path::to_path_buf);
    Ok((cfg, base))
}

fn output_dir(c: &Common, cfg: &ExperimentConfig, base: Option<&Path>) -> Result<PathBuf> {
    if let Some(o) = &c.out {
        return Ok(o.clone());
    }
    match (&cfg.output, base) {
        (Some(o), Some(b)) if o.is_relative() => Ok(b.join(o)),
        (Some(o), _) => Ok(o.clone()),
        (None, _) => Err(Error::InvalidInput(
            "no output directory: pass --out or set `output`".into(),
        )),
    }
}

fn simulate(c: &Common) -> Outcome {
    let (cfg, base) = load_experiment(c)?;
    let out = output_dir(c, &cfg, base.as_deref())?;
    let (result, drops) = run_experiment(&cfg, base.as_deref())?;
    write_outputs(&result, &drops, &out)?;
    eprint!("{}", summary(&result));
    Ok(result.manifest.invariant_violations)
}

#[derive(Deserialize)]
struct CdfRow {
    scheme: Scheme,
    k_users: usize,
    sum_rate_bps_hz: f64,
}

#[derive(Deserialize)]
struct ModeCsvRow {
    k_users: usize,
    #[allow(dead_code)]
    mode: String,
    fraction: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Checks a result directory against its configuration and prints mean sum
/// rates and gains. Violations: manifest hash or seed mismatch, unsorted CDF
/// samples, mode fractions not summing to one, recorded allocation violations.
fn report(c: &Common) -> Outcome {
    let (cfg, base) = load_experiment(c)?;
    let dir = match (&cfg.output, base.as_deref()) {
        (Some(o), Some(b)) if o.is_relative() => b.join(o),
        (Some(o), _) => o.clone(),
        (None, _) => {
            return Err(Error::InvalidInput(
                "config has no `output` directory to report on".into(),
            ))
        }
    };
    let manifest: supermux::experiment::Manifest = serde_json::from_str(&read(&dir.join("manifest.json"))?)?;
    let mut violations = manifest.invariant_violations.clone();
    if manifest.config_hash != config_hash(&cfg)? {
        violations.push("manifest was produced by a different configuration".into());
    }
    let mut text = String::new();
    let csv_dirs: Vec<PathBuf> = if cfg.shapes.len() > 1 {
        cfg.shapes.iter().map(|s| dir.join(s)).collect()
    } else {
        vec![dir.clone()]
    };
    for (shape, d) in cfg.shapes.iter().zip(&csv_dirs) {
        let rows: Vec<CdfRow> = read_csv(&d.join("cdf.csv"))?;
        let mut groups: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
        for r in &rows {
            groups
                .entry((r.k_users, r.scheme.to_string()))
                .or_default()
                .push(r.sum_rate_bps_hz);
        }
        for ((k, scheme), v) in &groups {
            if v.windows(2).any(|w| w[1] < w[0]) {
                violations.push(format!("{shape} K={k} {scheme}: CDF samples not sorted"));
            }
        }
        let modes_path = d.join("modes.csv");
        if modes_path.exists() {
            let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
            for r in read_csv::<ModeCsvRow>(&modes_path)? {
                *sums.entry(r.k_users).or_default() += r.fraction;
            }
            for (k, s) in sums {
                if (s - 1.0).abs() > 1e-9 {
                    violations.push(format!("{shape} K={k}: mode fractions sum to {s}"));
                }
            }
        }
        let ks: Vec<usize> = {
            let mut v: Vec<usize> = groups.keys().map(|(k, _)| *k).collect();
            v.dedup();
            v
        };
        for k in ks {
            text.push_str(&format!("{shape}, K = {k}\n"));
            let mean_of = |s: &str| {
                groups
                    .get(&(k, s.to_string()))
                    .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            };
            let alg1 = mean_of("alg1");
            for scheme in &cfg.schemes {
                if let Some(m) = mean_of(&scheme.to_string()) {
                    let gain = alg1.map_or(String::new(), |a| format!("  alg1 gain {:+.1}%", 100.0 * (a / m - 1.0)));
                    text.push_str(&format!("  {:<5} mean {m:>9.3}{gain}\n", scheme.to_string()));
                }
            }
        }
    }
    text.push_str(&format!(
        "{} drops, {} failed, seed {}, runtime {:.1} s\n",
        manifest.n_drops,
        manifest.failed_drops.len(),
        manifest.seed,
        manifest.runtime_s
    ));
    match &c.out {
        Some(p) => emit(Some(p), &text)?,
        None => stdout(&text)?,
    }
    Ok(violations)
}
