//! Least-squares projection of the dependent variable onto the
//! augmentation design, the one-step update, and the sandwich variance.

use nalgebra::{DMatrix, DVector};

use crate::error::EstError;

/// Relative singular-value cutoff for rank-deficient designs.
const SV_TOL: f64 = 1e-10;

/// Per-response least-squares fits of y on [1 | design].
///
/// The intercept is fitted (centering the response) but excluded from
/// predictions. Rank-deficient designs get the minimum-norm solution with
/// small singular directions zeroed.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// Per response component: [intercept, coefficient per design column].
    pub coefs: Vec<DVector<f64>>,
    /// Singular directions below tolerance, zeroed in every response.
    pub dropped_directions: usize,
    /// Predictions, intercept excluded: n x responses.
    pub preds: DMatrix<f64>,
}

pub fn project(y: &DMatrix<f64>, design: &DMatrix<f64>) -> Result<RegressionFit, EstError> {
    let n = design.nrows();
    let p = design.ncols();
    if y.nrows() != n {
        return Err(EstError::Domain("design and response row counts differ".into()));
    }
    let mut x = DMatrix::zeros(n, p + 1);
    x.column_mut(0).fill(1.0);
    x.view_mut((0, 1), (n, p)).copy_from(design);
    let svd = x.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.max();
    let tol = SV_TOL * smax;
    let mut inv = svd.singular_values.clone();
    let mut dropped = 0;
    for v in inv.iter_mut() {
        if *v > tol {
            *v = 1.0 / *v;
        } else {
            *v = 0.0;
            dropped += 1;
        }
    }
    let mut coefs = Vec::with_capacity(y.ncols());
    let mut preds = DMatrix::zeros(n, y.ncols());
    for r in 0..y.ncols() {
        let yr = y.column(r);
        let mut z = u.transpose() * yr;
        z.component_mul_assign(&inv);
        let coef = vt.transpose() * z;
        let pred = design * coef.rows(1, p);
        preds.set_column(r, &pred);
        coefs.push(coef);
    }
    Ok(RegressionFit {
        coefs,
        dropped_directions: dropped,
        preds,
    })
}

fn inv_spd(v: &DMatrix<f64>) -> Result<DMatrix<f64>, EstError> {
    v.clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .or_else(|| v.clone().try_inverse())
        .ok_or_else(|| EstError::Degenerate("singular normalizer V".into()))
}

/// One-step update: beta_init - V^{-1} (mean prediction).
pub fn one_step(beta_init: &DVector<f64>, v: &DMatrix<f64>, mean_pred: &DVector<f64>) -> Result<DVector<f64>, EstError> {
    Ok(beta_init - inv_spd(v)? * mean_pred)
}

/// Sandwich covariance V^{-1} [sum_i r_i r_i^T] V^{-1} / n^2 from the
/// residual matrix (n x responses).
pub fn variance(v: &DMatrix<f64>, resid: &DMatrix<f64>) -> Result<DMatrix<f64>, EstError> {
    let n = resid.nrows() as f64;
    let vinv = inv_spd(v)?;
    let meat = resid.transpose() * resid;
    Ok(&vinv * meat * &vinv / (n * n))
}
