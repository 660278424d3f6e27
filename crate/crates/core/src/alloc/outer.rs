//! Projected subgradient descent over the scaled simplex
//! `{μ ≥ 0, Σμₖ = μ_total}`.

use crate::error::{Error, Result};

use super::AllocatorOptions;

/// Best point visited by [`outer_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct OuterResult {
    pub mu: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Euclidean projection of `v` onto `{x ≥ 0, Σx = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - total) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Minimises a convex function over the scaled simplex given an oracle that
/// returns its value and a subgradient. Starts from the uniform point and
/// moves `c·μ_total/√t` along the normalised projected subgradient.
pub fn outer_minimize<F>(mut oracle: F, mu_total: f64, n_users: usize, opts: &AllocatorOptions) -> Result<OuterResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if n_users == 0 || !(mu_total > 0.0) || !mu_total.is_finite() {
        return Err(Error::InvalidInput(format!(
            "outer loop needs users and mu > 0 (K = {n_users}, mu = {mu_total})"
        )));
    }
    let mut mu = vec![mu_total / n_users as f64; n_users];
    let mut best = OuterResult {
        mu: mu.clone(),
        value: f64::INFINITY,
        iterations: 0,
    };
    let budget = if n_users == 1 { 1 } else { opts.max_outer_iters };
    for t in 1..=budget {
        let (value, grad) = oracle(&mu)?;
        if grad.len() != n_users || !value.is_finite() {
            return Err(Error::NonConvergence {
                solver: "outer subgradient",
                iterations: t,
                detail: format!("oracle returned value {value} with {} gradient entries", grad.len()),
            });
        }
        best.iterations = t;
        if value < best.value {
            best.value = value;
            best.mu = mu.clone();
        }
        let mean = grad.iter().sum::<f64>() / n_users as f64;
        let dir: Vec<f64> = grad.iter().map(|g| g - mean).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm <= 1e-14 * (1.0 + mean.abs()) {
            break;
        }
        let step = opts.outer_step * mu_total / (t as f64).sqrt();
        let moved: Vec<f64> = mu.iter().zip(&dir).map(|(m, d)| m - step * d / norm).collect();
        mu = project_simplex(&moved, mu_total);
    }
    Ok(best)
}
