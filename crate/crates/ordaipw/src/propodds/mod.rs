//! Proportional-odds model for an ordinal outcome under randomization.
//!
//! With outcome categories 1..=c ordered best to worst and arm indicators
//! coded against arm 0, the model puts
//!
//! ```text
//! logit pr(Cat <= j | A = a) = alpha_j + beta_a,   j = 1..c-1,  beta_0 = 0,
//! ```
//!
//! so `exp(beta_a)` is the cumulative odds ratio of arm `a` versus arm 0,
//! constant across j; values above 1 favor the treated arm.
//!
//! This module owns the probability algebra of that model: the cumulative
//! probability table, the working-independence estimating function, the
//! efficient score for beta with the intercepts profiled out, the
//! information-like matrix V, and the maximum-likelihood and
//! working-independence solvers on fully observed data.

mod mle;
mod score;
#[cfg(test)]
pub(crate) mod testutil;
mod working;

pub use mle::{MleFit, fit_mle, fit_mle_adjusted};
pub use score::{ScoreBlocks, efficient_score_m, efficient_score_m_general, estfun_m, score_blocks, v_matrix, v_matrix_schur};
pub use working::{WiFit, solve_full_working_independence, solve_weighted_wi};

use crate::error::EstError;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Smallest admissible p̄_j before the efficient score is declared degenerate.
pub(crate) const PBAR_FLOOR: f64 = 1e-12;

/// Inverse logit, clamped into the open unit interval so downstream logs
/// and ratios never meet an exact 0 or 1.
#[inline]
pub(crate) fn expit_raw(x: f64) -> f64 {
    let v = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Inverse logit. Errors on non-finite input; the value lies strictly
/// inside (0, 1) even for arguments far outside the representable range of
/// `exp`.
pub fn expit(x: f64) -> Result<f64, EstError> {
    if !x.is_finite() {
        return Err(EstError::Domain(format!("expit of non-finite {x}")));
    }
    Ok(expit_raw(x))
}

/// Log odds of `p`. Errors unless `p` lies strictly inside (0, 1).
pub fn logit(p: f64) -> Result<f64, EstError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EstError::Domain(format!("logit of {p} outside (0, 1)")));
    }
    Ok((p / (1.0 - p)).ln())
}

/// Model parameters: intercepts `alpha` (length c-1) and arm effects
/// `beta` (length K-1, arm 0 is the reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ModelParams {
    pub fn n_cats(&self) -> usize {
        self.alpha.len() + 1
    }

    pub fn n_arms(&self) -> usize {
        self.beta.len() + 1
    }

    /// Linear predictor `alpha_j + beta_arm` with `j` zero-based.
    #[inline]
    pub fn linpred(&self, j: usize, arm: usize) -> f64 {
        let b = if arm == 0 { 0.0 } else { self.beta[arm - 1] };
        self.alpha[j] + b
    }
}

/// Cumulative probability table of the model at fixed parameters and
/// randomization probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeProbs {
    /// `p[(j, a)] = pr(Cat <= j+1 | A = a)`, a `(c-1) x K` matrix.
    pub p: DMatrix<f64>,
    /// Bernoulli variances `q[(j, a)] = p[(j, a)] (1 - p[(j, a)])`.
    pub q: DMatrix<f64>,
    /// `pbar_j = sum_a pi_a q[(j, a)]`.
    pub pbar: Vec<f64>,
    /// Randomization probabilities, summing to 1.
    pub pi: Vec<f64>,
}

impl CumulativeProbs {
    /// Number of cumulative levels, c - 1.
    pub fn levels(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_arms(&self) -> usize {
        self.p.ncols()
    }

    pub(crate) fn min_pbar(&self) -> f64 {
        self.pbar.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Build the cumulative probability table, validating the parameters.
pub fn cumulative_probs(params: &ModelParams, pi: &[f64]) -> Result<CumulativeProbs, EstError> {
    let c1 = params.alpha.len();
    let k = params.n_arms();
    if c1 == 0 {
        return Err(EstError::Domain("need at least one intercept".into()));
    }
    if params.alpha.iter().any(|a| !a.is_finite()) || params.beta.iter().any(|b| !b.is_finite()) {
        return Err(EstError::Domain("non-finite model parameters".into()));
    }
    if params.alpha.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EstError::Domain(format!(
            "intercepts must be strictly ascending, got {:?}",
            params.alpha
        )));
    }
    if pi.len() != k {
        return Err(EstError::Domain(format!(
            "{} randomization probabilities for {} arms",
            pi.len(),
            k
        )));
    }
    if pi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(EstError::Domain("randomization probabilities must lie in (0, 1)".into()));
    }
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(EstError::Domain(format!(
            "randomization probabilities sum to {s}, expected 1"
        )));
    }
    let mut p = DMatrix::zeros(c1, k);
    let mut q = DMatrix::zeros(c1, k);
    let mut pbar = vec![0.0; c1];
    for j in 0..c1 {
        for a in 0..k {
            let pj = expit_raw(params.linpred(j, a));
            p[(j, a)] = pj;
            q[(j, a)] = pj * (1.0 - pj);
            pbar[j] += pi[a] * q[(j, a)];
        }
    }
    Ok(CumulativeProbs {
        p,
        q,
        pbar,
        pi: pi.to_vec(),
    })
}

/// `pr(Cat = cat | A = arm)` from the cumulative table.
pub fn category_prob(probs: &CumulativeProbs, arm: usize, cat: usize) -> f64 {
    let c1 = probs.levels();
    assert!(cat >= 1 && cat <= c1 + 1, "cat {cat} out of range");
    let hi = if cat == c1 + 1 { 1.0 } else { probs.p[(cat - 1, arm)] };
    let lo = if cat == 1 { 0.0 } else { probs.p[(cat - 2, arm)] };
    hi - lo
}
