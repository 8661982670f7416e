//! Maximum likelihood for the proportional-odds model on fully observed
//! outcomes, optionally adjusted for baseline covariates through
//! `logit pr(Cat <= j | A, X) = alpha_j + beta_A + gamma' X`.
//!
//! Newton iteration on the multinomial log likelihood with analytic
//! gradient and observed Hessian; standard errors come from the inverse
//! observed information at the solution. Without covariates the data enter
//! only through (arm, cat) cell counts, so the fit costs the same for ten
//! subjects or a million.

use super::{ModelParams, expit_raw, logit};
use crate::error::EstError;
use nalgebra::{DMatrix, DVector};

const MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 10;
const GRAD_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const SEPARATION_BOUND: f64 = 30.0;
const BOUNDARY_START: f64 = 15.0;

/// Maximum-likelihood fit with observed-information standard errors.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub params: ModelParams,
    /// Baseline-covariate coefficients; empty for the unadjusted fit.
    pub gamma: Vec<f64>,
    pub se_alpha: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub se_gamma: Vec<f64>,
    /// Covariance of beta from the inverse observed information.
    pub cov_beta: DMatrix<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub boundary_start: bool,
}

struct Item {
    arm: usize,
    cat: usize,
    x: Vec<f64>,
    w: f64,
}

/// Unadjusted fit from (arm, cat) pairs.
pub fn fit_mle(pairs: &[(usize, usize)], n_cats: usize, n_arms: usize) -> Result<MleFit, EstError> {
    // Aggregate to cells; the likelihood only sees (arm, cat).
    let mut w = vec![0.0f64; n_cats * n_arms];
    for &(arm, cat) in pairs {
        if arm >= n_arms || cat < 1 || cat > n_cats {
            return Err(EstError::Domain(format!("record (arm {arm}, cat {cat}) out of range")));
        }
        w[arm * n_cats + cat - 1] += 1.0;
    }
    let items: Vec<Item> = (0..n_arms)
        .flat_map(|arm| {
            (1..=n_cats).map(move |cat| (arm, cat))
        })
        .filter(|&(arm, cat)| w[arm * n_cats + cat - 1] > 0.0)
        .map(|(arm, cat)| Item {
            arm,
            cat,
            x: Vec::new(),
            w: w[arm * n_cats + cat - 1],
        })
        .collect();
    fit_items(&items, n_cats, n_arms, 0)
}

/// Covariate-adjusted fit from (arm, cat, x) records.
pub fn fit_mle_adjusted(
    records: &[(usize, usize, Vec<f64>)],
    n_cats: usize,
    n_arms: usize,
) -> Result<MleFit, EstError> {
    let p = records.first().map(|r| r.2.len()).unwrap_or(0);
    let mut items = Vec::with_capacity(records.len());
    for (arm, cat, x) in records {
        if *arm >= n_arms || *cat < 1 || *cat > n_cats {
            return Err(EstError::Domain(format!("record (arm {arm}, cat {cat}) out of range")));
        }
        if x.len() != p || x.iter().any(|v| !v.is_finite()) {
            return Err(EstError::Domain("covariates must be finite with a common dimension".into()));
        }
        items.push(Item {
            arm: *arm,
            cat: *cat,
            x: x.clone(),
            w: 1.0,
        });
    }
    fit_items(&items, n_cats, n_arms, p)
}

/// Log likelihood, gradient, and observed Hessian at theta = (alpha, beta, gamma).
/// Returns None when some observed category has nonpositive probability, which
/// the line search treats as a rejected step.
fn loglik_terms(
    items: &[Item],
    theta: &DVector<f64>,
    c1: usize,
    k1: usize,
    p: usize,
    with_derivs: bool,
) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
    let t = c1 + k1 + p;
    let mut ll = 0.0;
    let mut grad = DVector::zeros(t);
    let mut hess = DMatrix::zeros(t, t);
    for item in items {
        let shift = if item.arm >= 1 { theta[c1 + item.arm - 1] } else { 0.0 }
            + (0..p).map(|i| theta[c1 + k1 + i] * item.x[i]).sum::<f64>();
        let k = item.cat;
        let (p_hi, q_hi) = if k <= c1 {
            let v = expit_raw(theta[k - 1] + shift);
            (v, v * (1.0 - v))
        } else {
            (1.0, 0.0)
        };
        let (p_lo, q_lo) = if k >= 2 {
            let v = expit_raw(theta[k - 2] + shift);
            (v, v * (1.0 - v))
        } else {
            (0.0, 0.0)
        };
        let d = p_hi - p_lo;
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        ll += item.w * d.ln();
        if !with_derivs {
            continue;
        }
        // Directions of the two active linear predictors in theta space:
        // (index, coefficient) pairs shared except for the intercept slot.
        let mut dir_common: Vec<(usize, f64)> = Vec::with_capacity(1 + p);
        if item.arm >= 1 {
            dir_common.push((c1 + item.arm - 1, 1.0));
        }
        for i in 0..p {
            dir_common.push((c1 + k1 + i, item.x[i]));
        }
        let dir = |level: usize| -> Vec<(usize, f64)> {
            let mut v = vec![(level - 1, 1.0)];
            v.extend_from_slice(&dir_common);
            v
        };
        let mut add_grad = |dirs: &[(usize, f64)], g: f64| {
            for &(i, ci) in dirs {
                grad[i] += g * ci;
            }
        };
        let mut add_hess = |d1: &[(usize, f64)], d2: &[(usize, f64)], h: f64| {
            for &(i, ci) in d1 {
                for &(jj, cj) in d2 {
                    hess[(i, jj)] += h * ci * cj;
                }
            }
        };
        let d2inv = 1.0 / (d * d);
        if k <= c1 {
            let dh = dir(k);
            add_grad(&dh, item.w * q_hi / d);
            let h_hh = item.w * (q_hi * (1.0 - 2.0 * p_hi) * d - q_hi * q_hi) * d2inv;
            add_hess(&dh, &dh, h_hh);
            if k >= 2 {
                let dl = dir(k - 1);
                let h_x = item.w * q_hi * q_lo * d2inv;
                add_hess(&dh, &dl, h_x);
                add_hess(&dl, &dh, h_x);
            }
        }
        if k >= 2 {
            let dl = dir(k - 1);
            add_grad(&dl, -item.w * q_lo / d);
            let h_ll = item.w * (-q_lo * (1.0 - 2.0 * p_lo) * d - q_lo * q_lo) * d2inv;
            add_hess(&dl, &dl, h_ll);
        }
    }
    Some((ll, grad, hess))
}

fn fit_items(items: &[Item], n_cats: usize, n_arms: usize, p: usize) -> Result<MleFit, EstError> {
    if n_cats < 2 || n_arms < 2 {
        return Err(EstError::Domain("need at least 2 categories and 2 arms".into()));
    }
    if items.is_empty() {
        return Err(EstError::Degenerate("no records to fit".into()));
    }
    let c1 = n_cats - 1;
    let k1 = n_arms - 1;
    let t = c1 + k1 + p;
    for arm in 0..n_arms {
        if !items.iter().any(|it| it.arm == arm && it.w > 0.0) {
            return Err(EstError::Degenerate(format!("arm {arm} has no records")));
        }
    }

    // Pooled cumulative-proportion start for the intercepts.
    let total: f64 = items.iter().map(|i| i.w).sum();
    let mut theta = DVector::zeros(t);
    let mut boundary_start = false;
    let mut cum = 0.0;
    for j in 1..n_cats {
        cum += items.iter().filter(|i| i.cat == j).map(|i| i.w).sum::<f64>();
        theta[j - 1] = match logit(cum / total) {
            Ok(a) => a,
            Err(_) => {
                boundary_start = true;
                if cum <= 0.0 { -BOUNDARY_START } else { BOUNDARY_START }
            }
        };
    }

    let (mut ll, mut grad, mut hess) = loglik_terms(items, &theta, c1, k1, p, true)
        .ok_or_else(|| EstError::Degenerate("starting values give an empty category".into()))?;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if grad.amax() < GRAD_TOL {
            break;
        }
        if iterations > MAX_ITER {
            return Err(EstError::NonConvergence {
                iterations: MAX_ITER,
                residual: grad.amax(),
            });
        }
        let neg_h = -&hess;
        let delta = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => neg_h
                .lu()
                .solve(&grad)
                .ok_or_else(|| EstError::Degenerate("singular observed information".into()))?,
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for halving in 0..=MAX_HALVINGS {
            let trial = &theta + &delta * lambda;
            match loglik_terms(items, &trial, c1, k1, p, true) {
                Some((ll_t, g_t, h_t)) if ll_t > ll || halving == MAX_HALVINGS => {
                    accepted = Some((trial, ll_t, g_t, h_t));
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        let (trial, ll_t, g_t, h_t) = accepted.ok_or_else(|| EstError::NonConvergence {
            iterations,
            residual: grad.amax(),
        })?;
        for b in 0..k1 {
            if trial[c1 + b].abs() > SEPARATION_BOUND {
                return Err(EstError::Separation);
            }
        }
        for j in 0..c1 {
            for arm in 0..n_arms {
                let b = if arm == 0 { 0.0 } else { trial[c1 + arm - 1] };
                if (trial[j] + b).abs() > SEPARATION_BOUND {
                    return Err(EstError::Separation);
                }
            }
        }
        let step = lambda * delta.amax();
        theta = trial;
        ll = ll_t;
        grad = g_t;
        hess = h_t;
        if step < STEP_TOL {
            break;
        }
    }

    let cov = (-&hess)
        .try_inverse()
        .ok_or_else(|| EstError::Degenerate("singular observed information at the solution".into()))?;
    let se = |i: usize| cov[(i, i)].max(0.0).sqrt();
    let mut cov_beta = DMatrix::zeros(k1, k1);
    for a in 0..k1 {
        for b in 0..k1 {
            cov_beta[(a, b)] = cov[(c1 + a, c1 + b)];
        }
    }
    Ok(MleFit {
        params: ModelParams {
            alpha: (0..c1).map(|j| theta[j]).collect(),
            beta: (0..k1).map(|b| theta[c1 + b]).collect(),
        },
        gamma: (0..p).map(|i| theta[c1 + k1 + i]).collect(),
        se_alpha: (0..c1).map(se).collect(),
        se_beta: (0..k1).map(|b| se(c1 + b)).collect(),
        se_gamma: (0..p).map(|i| se(c1 + k1 + i)).collect(),
        cov_beta,
        loglik: ll,
        iterations,
        boundary_start,
    })
}
