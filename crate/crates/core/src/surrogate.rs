//! Surrogate `φ̂(x) = (1 + αx)⁻¹` for the auxiliary rate function and the
//! per-shape fit of `α`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::channel::MimoShape;
use crate::error::{Error, Result};
use crate::rates::{RateEstimator, DEFAULT_SAMPLES};

/// Published `(n_T, n_R, α, MSE)` reference values.
pub const REFERENCE_ALPHAS: [(usize, usize, f64, f64); 30] = [
    (1, 1, 1.306, 0.0058),
    (1, 2, 2.284, 0.0021),
    (1, 4, 4.267, 5.39e-4),
    (1, 8, 8.251, 1.00e-4),
    (1, 16, 16.212, 1.56e-5),
    (2, 1, 1.144, 0.0021),
    (2, 2, 1.402, 0.0063),
    (2, 4, 2.316, 0.0023),
    (2, 8, 4.281, 5.85e-4),
    (2, 16, 8.253, 1.08e-4),
    (4, 1, 1.069, 6.36e-4),
    (4, 2, 1.160, 0.0024),
    (4, 4, 1.435, 0.0058),
    (4, 8, 2.324, 0.0024),
    (4, 16, 4.281, 5.60e-4),
    (8, 1, 1.034, 1.95e-4),
    (8, 2, 1.071, 6.46e-4),
    (8, 4, 1.164, 0.0024),
    (8, 8, 1.443, 0.0055),
    (8, 16, 2.326, 0.0023),
    (16, 1, 1.017, 4.38e-5),
    (16, 2, 1.034, 1.78e-4),
    (16, 4, 1.072, 6.61e-4),
    (16, 8, 1.165, 0.0024),
    (16, 16, 1.445, 0.0055),
    (32, 1, 1.008, 1.24e-5),
    (32, 2, 1.017, 4.46e-5),
    (32, 4, 1.034, 1.73e-4),
    (32, 8, 1.073, 6.77e-4),
    (32, 16, 1.166, 0.0024),
];

/// `(1 + αx)⁻¹`.
pub fn surrogate_phi(x: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidInput(format!("x must be >= 0, got {x}")));
    }
    Ok(1.0 / (1.0 + alpha * x))
}

/// Uniform fit grid of `points` values on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self {
            lo: 0.1,
            hi: 100.0,
            points: 1000,
        }
    }
}

impl FitGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|j| self.lo + step * j as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.points == 0 || !(self.lo > 0.0) || !(self.hi <= 100.0) || !(self.lo <= self.hi) {
            return Err(Error::InvalidInput(format!(
                "fit grid must be nonempty inside (0, 100], got {}",
                self.descriptor()
            )));
        }
        Ok(())
    }

    /// `uniform:lo:hi:points`.
    pub fn descriptor(&self) -> String {
        format!("uniform:{}:{}:{}", self.lo, self.hi, self.points)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("bad grid descriptor {s:?}"));
        if parts.len() != 4 || parts[0] != "uniform" {
            return Err(bad());
        }
        Ok(Self {
            lo: parts[1].parse().map_err(|_| bad())?,
            hi: parts[2].parse().map_err(|_| bad())?,
            points: parts[3].parse().map_err(|_| bad())?,
        })
    }
}

/// Outcome of one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    pub mse: f64,
}

fn mse(phi: &[f64], xs: &[f64], alpha: f64) -> f64 {
    phi.iter()
        .zip(xs)
        .map(|(p, x)| (p - 1.0 / (1.0 + alpha * x)).powi(2))
        .sum::<f64>()
        / xs.len() as f64
}

/// First and second derivative of the MSE objective in `α`.
fn mse_derivatives(phi: &[f64], xs: &[f64], alpha: f64) -> (f64, f64) {
    let (mut d1, mut d2) = (0.0, 0.0);
    for (p, x) in phi.iter().zip(xs) {
        let s = 1.0 / (1.0 + alpha * x);
        let r = p - s;
        // ∂s/∂α = −x s², ∂²s/∂α² = 2x² s³
        let ds = -x * s * s;
        let dds = 2.0 * x * x * s * s * s;
        d1 += -2.0 * r * ds;
        d2 += 2.0 * (ds * ds - r * dds);
    }
    let n = xs.len() as f64;
    (d1 / n, d2 / n)
}

/// Fits `α` for the estimator's shape by minimising the mean squared
/// error between `φ` and `φ̂` over `grid`.
pub fn fit_alpha(est: &RateEstimator, grid: &FitGrid) -> Result<AlphaFit> {
    grid.validate()?;
    let shape = est.shape();
    let xs = grid.values();
    let phi = xs.par_iter().map(|&x| est.phi_aux(x)).collect::<Result<Vec<f64>>>()?;

    let ratio = (shape.n_r as f64 / shape.n_t as f64).max(1.0);
    let (mut a, mut b) = (0.5, 2.0 * shape.n_r as f64 * ratio);
    let inv_gold = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_gold * (b - a);
    let mut d = a + inv_gold * (b - a);
    let (mut fc, mut fd) = (mse(&phi, &xs, c), mse(&phi, &xs, d));
    while b - a > 1e-7 * (1.0 + a) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_gold * (b - a);
            fc = mse(&phi, &xs, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_gold * (b - a);
            fd = mse(&phi, &xs, d);
        }
    }
    let mut alpha = 0.5 * (a + b);
    // Newton polish, kept only while it improves the objective
    for _ in 0..8 {
        let (g, h) = mse_derivatives(&phi, &xs, alpha);
        if !(h > 0.0) {
            break;
        }
        let next = alpha - g / h;
        if !(next > 0.0) || mse(&phi, &xs, next) > mse(&phi, &xs, alpha) {
            break;
        }
        alpha = next;
    }
    Ok(AlphaFit {
        alpha,
        mse: mse(&phi, &xs, alpha),
    })
}

/// One table row.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEntry {
    pub alpha: f64,
    pub mse: f64,
    pub grid: String,
    /// Seed of the fit, `None` for reference values.
    pub seed: Option<u64>,
}

/// Fitted `α` per antenna shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurrogateTable {
    entries: BTreeMap<(usize, usize), SurrogateEntry>,
}

impl SurrogateTable {
    /// The 30 reference shapes with their published values.
    pub fn reference() -> Self {
        let grid = FitGrid::default().descriptor();
        let entries = REFERENCE_ALPHAS
            .iter()
            .map(|&(t, r, alpha, mse)| {
                let e = SurrogateEntry {
                    alpha,
                    mse,
                    grid: grid.clone(),
                    seed: None,
                };
                ((t, r), e)
            })
            .collect();
        Self { entries }
    }

    pub fn insert(&mut self, shape: MimoShape, entry: SurrogateEntry) -> Result<()> {
        if !(entry.alpha > 0.0) || !(entry.mse >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "table entry for {shape} needs alpha > 0 and mse >= 0"
            )));
        }
        self.entries.insert((shape.n_t, shape.n_r), entry);
        Ok(())
    }

    pub fn get(&self, shape: MimoShape) -> Option<&SurrogateEntry> {
        self.entries.get(&(shape.n_t, shape.n_r))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MimoShape, &SurrogateEntry)> {
        self.entries.iter().map(|(&(n_t, n_r), e)| (MimoShape { n_t, n_r }, e))
    }

    /// Fits every shape in `shapes` with a fresh Monte-Carlo bank.
    pub fn fit(shapes: &[MimoShape], n_samples: usize, seed: u64, grid: &FitGrid) -> Result<Self> {
        let mut table = Self::default();
        for &shape in shapes {
            let est = RateEstimator::monte_carlo(shape, n_samples, seed)?;
            let f = fit_alpha(&est, grid)?;
            table.insert(
                shape,
                SurrogateEntry {
                    alpha: f.alpha,
                    mse: f.mse,
                    grid: grid.descriptor(),
                    seed: Some(seed),
                },
            )?;
        }
        Ok(table)
    }

    /// Lines of `n_t n_r alpha mse grid seed`; `seed` is `-` for reference rows.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# n_t n_r alpha mse grid seed\n");
        for (s, e) in self.iter() {
            let seed = e.seed.map_or_else(|| "-".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{} {} {} {} {} {}", s.n_t, s.n_r, e.alpha, e.mse, e.grid, seed);
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut table = Self::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", ln + 1));
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let n_t = f[0].parse().map_err(|_| bad("bad n_t"))?;
            let n_r = f[1].parse().map_err(|_| bad("bad n_r"))?;
            let entry = SurrogateEntry {
                alpha: f[2].parse().map_err(|_| bad("bad alpha"))?,
                mse: f[3].parse().map_err(|_| bad("bad mse"))?,
                grid: f[4].to_string(),
                seed: if f[5] == "-" {
                    None
                } else {
                    Some(f[5].parse().map_err(|_| bad("bad seed"))?)
                },
            };
            table.insert(MimoShape::new(n_t, n_r)?, entry)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }
}

/// Stored `α` for `shape`, or a fresh fit on the default grid when absent.
pub fn alpha_lookup(shape: MimoShape, table: &SurrogateTable, seed: u64) -> Result<f64> {
    if let Some(e) = table.get(shape) {
        return Ok(e.alpha);
    }
    let est = RateEstimator::monte_carlo(shape, DEFAULT_SAMPLES, seed)?;
    Ok(fit_alpha(&est, &FitGrid::default())?.alpha)
}
