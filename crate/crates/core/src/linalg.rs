//! Small dense complex linear algebra on top of `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::rng::complex_normal;

pub type CMatrix = DMatrix<Complex64>;

/// `n_r × n_t` matrix with i.i.d. `CN(0, 1)` entries.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, n_r: usize, n_t: usize) -> CMatrix {
    // column-major fill keeps the draw order fixed for a given shape
    CMatrix::from_fn(n_r, n_t, |_, _| complex_normal(rng))
}

/// Gram matrix of the smaller dimension: `H·H†` when `n_r ≤ n_t`, else `H†·H`.
/// Both share the same nonzero eigenvalues.
pub fn small_gram(h: &CMatrix) -> CMatrix {
    if h.nrows() <= h.ncols() {
        h * h.adjoint()
    } else {
        h.adjoint() * h
    }
}

/// Eigenvalues of a Hermitian matrix, clamped at zero, sorted descending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().map(|&v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Natural-log determinant of a Hermitian positive-definite matrix.
pub fn ln_det_hpd(m: &CMatrix) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// `I + Σ_j w_j · h_j h_j†` for the columns `h_j` of `h` (a diagonal input
/// covariance `diag(w)` pushed through the channel).
pub fn identity_plus_weighted(h: &CMatrix, weights: &[f64]) -> CMatrix {
    let n_r = h.nrows();
    let mut m = CMatrix::identity(n_r, n_r);
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let col = h.column(j);
        for c in 0..n_r {
            let hc = col[c].conj() * w;
            for r in 0..n_r {
                m[(r, c)] += col[r] * hc;
            }
        }
    }
    m
}
