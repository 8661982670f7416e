//! Weighted Newton solver for the stacked working-independence equations.
//!
//! Solves `sum_i w_i M(F_i; alpha, beta) = 0` over records reduced to
//! (arm, cat, weight) triples. With unit weights this is the
//! working-independence estimator on fully observed data; with weights
//! `delta_i / Khat(U_i-, A_i)` it is the inverse-probability-weighted
//! complete-case estimator used as the first step of the augmented
//! estimator.
//!
//! Records contribute to the equations and their derivative only through
//! the (arm, cat) cell, so the solver aggregates weights per cell first and
//! iterates over at most `K * c` cells regardless of sample size.

use super::{ModelParams, expit_raw, logit};
use crate::data::FullData;
use crate::error::EstError;
use nalgebra::{DMatrix, DVector};

const MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 10;
const RESID_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const SEPARATION_BOUND: f64 = 30.0;
/// Start value for an intercept whose pooled cumulative proportion is 0 or 1.
const BOUNDARY_START: f64 = 15.0;

/// Converged working-independence solve.
#[derive(Debug, Clone)]
pub struct WiFit {
    pub params: ModelParams,
    /// Newton iterations used (1 means the start already solved the equations).
    pub iterations: usize,
    /// Sup-norm of the stacked equations at the solution.
    pub residual: f64,
    /// Some intercept started at the +/-15 boundary fallback.
    pub boundary_start: bool,
}

/// Per-cell aggregated weights, arm-major.
struct Cells {
    w: Vec<f64>,
    n_cats: usize,
    n_arms: usize,
}

impl Cells {
    fn build(
        items: impl IntoIterator<Item = (usize, usize, f64)>,
        n_cats: usize,
        n_arms: usize,
    ) -> Result<Self, EstError> {
        let mut w = vec![0.0; n_cats * n_arms];
        for (arm, cat, wi) in items {
            if arm >= n_arms {
                return Err(EstError::Domain(format!("arm {arm} out of range")));
            }
            if cat < 1 || cat > n_cats {
                return Err(EstError::Domain(format!("cat {cat} out of range")));
            }
            if !wi.is_finite() || wi < 0.0 {
                return Err(EstError::Domain(format!("weight {wi} must be finite and nonnegative")));
            }
            w[arm * n_cats + cat - 1] += wi;
        }
        Ok(Self { w, n_cats, n_arms })
    }

    #[inline]
    fn weight(&self, arm: usize, cat: usize) -> f64 {
        self.w[arm * self.n_cats + cat - 1]
    }

    fn arm_total(&self, arm: usize) -> f64 {
        (1..=self.n_cats).map(|c| self.weight(arm, c)).sum()
    }

    /// Weighted sum of the stacked equations at `params`.
    fn residual(&self, params: &ModelParams) -> DVector<f64> {
        let c1 = self.n_cats - 1;
        let k1 = self.n_arms - 1;
        let mut g = DVector::zeros(c1 + k1);
        for arm in 0..self.n_arms {
            // p_j for this arm is shared by all its cells.
            let p: Vec<f64> = (0..c1).map(|j| expit_raw(params.linpred(j, arm))).collect();
            for cat in 1..=self.n_cats {
                let w = self.weight(arm, cat);
                if w == 0.0 {
                    continue;
                }
                let mut sum = 0.0;
                for j in 0..c1 {
                    let r = if cat <= j + 1 { 1.0 } else { 0.0 };
                    let e = r - p[j];
                    g[j] += w * e;
                    sum += e;
                }
                if arm >= 1 {
                    g[c1 + arm - 1] += w * sum;
                }
            }
        }
        g
    }

    /// Derivative of the weighted equation sum in (alpha, beta). Symmetric
    /// and negative definite wherever every arm carries weight.
    fn jacobian(&self, params: &ModelParams) -> DMatrix<f64> {
        let c1 = self.n_cats - 1;
        let k1 = self.n_arms - 1;
        let mut jac = DMatrix::zeros(c1 + k1, c1 + k1);
        for arm in 0..self.n_arms {
            let w = self.arm_total(arm);
            if w == 0.0 {
                continue;
            }
            let mut qsum = 0.0;
            for j in 0..c1 {
                let p = expit_raw(params.linpred(j, arm));
                let q = p * (1.0 - p);
                qsum += q;
                jac[(j, j)] -= w * q;
                if arm >= 1 {
                    jac[(j, c1 + arm - 1)] -= w * q;
                    jac[(c1 + arm - 1, j)] -= w * q;
                }
            }
            if arm >= 1 {
                jac[(c1 + arm - 1, c1 + arm - 1)] -= w * qsum;
            }
        }
        jac
    }
}

/// Pooled weighted cumulative-proportion start, with boundary fallback.
fn starting_values(cells: &Cells) -> (ModelParams, bool) {
    let c1 = cells.n_cats - 1;
    let total: f64 = cells.w.iter().sum();
    let mut alpha = Vec::with_capacity(c1);
    let mut boundary = false;
    let mut cum = 0.0;
    let mut pooled: Vec<f64> = vec![0.0; cells.n_cats];
    for arm in 0..cells.n_arms {
        for cat in 1..=cells.n_cats {
            pooled[cat - 1] += cells.weight(arm, cat);
        }
    }
    for j in 0..c1 {
        cum += pooled[j];
        let prop = if total > 0.0 { cum / total } else { 0.5 };
        match logit(prop) {
            Ok(a) => alpha.push(a),
            Err(_) => {
                boundary = true;
                alpha.push(if prop <= 0.0 { -BOUNDARY_START } else { BOUNDARY_START });
            }
        }
    }
    (
        ModelParams {
            alpha,
            beta: vec![0.0; cells.n_arms - 1],
        },
        boundary,
    )
}

fn check_separation(params: &ModelParams) -> Result<(), EstError> {
    // Divergence can ride a ridge that keeps alpha_j + beta_a bounded while
    // both halves blow up, so the coordinates are bounded as well.
    if params.beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
        return Err(EstError::Separation);
    }
    for j in 0..params.alpha.len() {
        for arm in 0..params.n_arms() {
            if params.linpred(j, arm).abs() > SEPARATION_BOUND {
                return Err(EstError::Separation);
            }
        }
    }
    Ok(())
}

/// Solve the weighted stacked equations by Newton iteration.
///
/// Starts at the pooled weighted cumulative-proportion intercepts with zero
/// arm effects unless `start` is supplied. Converges when the sup-norm of
/// the equation sum falls below 1e-10 or the step below 1e-12; caps at 50
/// iterations with up to 10 step-halvings per iteration, and aborts with a
/// separation error once any `|alpha_j + beta_a|` exceeds 30.
pub fn solve_weighted_wi(
    items: impl IntoIterator<Item = (usize, usize, f64)>,
    n_cats: usize,
    n_arms: usize,
    start: Option<ModelParams>,
) -> Result<WiFit, EstError> {
    if n_cats < 2 || n_arms < 2 {
        return Err(EstError::Domain("need at least 2 categories and 2 arms".into()));
    }
    let cells = Cells::build(items, n_cats, n_arms)?;
    for arm in 0..n_arms {
        if cells.arm_total(arm) <= 0.0 {
            return Err(EstError::Degenerate(format!("arm {arm} carries no weight")));
        }
    }
    let (default_start, boundary_start) = starting_values(&cells);
    let mut params = match start {
        Some(s) => {
            if s.alpha.len() != n_cats - 1 || s.beta.len() != n_arms - 1 {
                return Err(EstError::Domain("start has wrong dimensions".into()));
            }
            s
        }
        None => default_start,
    };

    let mut g = cells.residual(&params);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let sup = g.amax();
        if sup < RESID_TOL {
            return Ok(WiFit {
                params,
                iterations,
                residual: sup,
                boundary_start,
            });
        }
        if iterations > MAX_ITER {
            return Err(EstError::NonConvergence {
                iterations: MAX_ITER,
                residual: sup,
            });
        }
        let jac = cells.jacobian(&params);
        // The Jacobian is symmetric negative definite; solve on its negation.
        let delta = match (-&jac).cholesky() {
            Some(ch) => ch.solve(&g),
            None => (-jac)
                .lu()
                .solve(&g)
                .ok_or_else(|| EstError::Degenerate("singular derivative of the stacked equations".into()))?,
        };

        let norm0 = g.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for halving in 0..=MAX_HALVINGS {
            let trial = ModelParams {
                alpha: (0..params.alpha.len())
                    .map(|j| params.alpha[j] + lambda * delta[j])
                    .collect(),
                beta: (0..params.beta.len())
                    .map(|b| params.beta[b] + lambda * delta[params.alpha.len() + b])
                    .collect(),
            };
            let gt = cells.residual(&trial);
            if gt.norm() < norm0 || halving == MAX_HALVINGS {
                accepted = Some((trial, gt, lambda));
                break;
            }
            lambda *= 0.5;
        }
        let (trial, gt, lambda) = accepted.expect("step acceptance always terminates");
        check_separation(&trial)?;
        let step = lambda * delta.amax();
        params = trial;
        g = gt;
        if step < STEP_TOL {
            return Ok(WiFit {
                params,
                iterations,
                residual: g.amax(),
                boundary_start,
            });
        }
    }
}

/// Working-independence estimator on fully observed data (unit weights).
pub fn solve_full_working_independence(data: &FullData) -> Result<WiFit, EstError> {
    solve_weighted_wi(
        data.records.iter().map(|r| (r.arm.index(), r.cat, 1.0)),
        data.meta.n_cats,
        data.meta.n_arms,
        None,
    )
}
