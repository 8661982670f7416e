//! Estimating function, efficient score, and the information-like matrix V.
//!
//! The working-independence estimating function stacks the c-1 cumulative
//! residuals `R_j - expit(alpha_j + beta_A)` with, per non-reference arm a,
//! `I(A = a) * sum_j {R_j - expit(alpha_j + beta_a)}`. Profiling the
//! intercepts out of it yields the efficient score
//!
//! ```text
//! m = (-B12' B11^-1, I_{K-1}) M,
//! ```
//!
//! whose mean is zero at the truth and whose second-moment matrix under the
//! working-independence law is the Schur complement
//! `V = B22 - B12' B11^-1 B12`. V is also minus the mean derivative of m in
//! beta under the model itself, which is what makes the one-step update
//! downstream a Newton step.

use super::{CumulativeProbs, ModelParams, PBAR_FLOOR, expit_raw};
use crate::error::EstError;
use nalgebra::{DMatrix, DVector};

/// Blocks of the expected derivative matrix of the stacked estimating
/// function: `B11 = diag(pbar)`, `B12[(j, a)] = pi_a q_ja`, and
/// `B22 = diag(pi_a sum_j q_ja)`, arms `a = 1..K-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBlocks {
    pub b11: Vec<f64>,
    pub b12: DMatrix<f64>,
    pub b22: Vec<f64>,
}

pub fn score_blocks(probs: &CumulativeProbs) -> ScoreBlocks {
    let c1 = probs.levels();
    let k = probs.n_arms();
    let mut b12 = DMatrix::zeros(c1, k - 1);
    let mut b22 = vec![0.0; k - 1];
    for a in 1..k {
        for j in 0..c1 {
            let v = probs.pi[a] * probs.q[(j, a)];
            b12[(j, a - 1)] = v;
            b22[a - 1] += v;
        }
    }
    ScoreBlocks {
        b11: probs.pbar.clone(),
        b12,
        b22,
    }
}

/// Stacked working-independence estimating function for one record, length
/// `(c-1) + (K-1)`. Pure evaluation: the intercepts need not be ordered.
pub fn estfun_m(arm: usize, cat: usize, params: &ModelParams) -> DVector<f64> {
    let c1 = params.alpha.len();
    let k1 = params.beta.len();
    assert!(arm <= k1, "arm {arm} out of range for {} arms", k1 + 1);
    assert!(cat >= 1 && cat <= c1 + 1, "cat {cat} out of range");
    let mut out = DVector::zeros(c1 + k1);
    let mut sum = 0.0;
    for j in 0..c1 {
        let r = if cat <= j + 1 { 1.0 } else { 0.0 };
        let e = r - expit_raw(params.linpred(j, arm));
        out[j] = e;
        sum += e;
    }
    if arm >= 1 {
        out[c1 + arm - 1] = sum;
    }
    out
}

/// Efficient score for beta (length K-1) with the intercepts profiled out.
///
/// For two arms this is the closed form
///
/// ```text
/// m = sum_j [ A (R_j - p_j1) pi_0 q_j0 - (1 - A)(R_j - p_j0) pi_1 q_j1 ] / pbar_j,
/// ```
///
/// and for K > 2 the linear combination `(-B12' B11^-1, I) M`; the two
/// agree at K = 2.
pub fn efficient_score_m(
    arm: usize,
    cat: usize,
    probs: &CumulativeProbs,
) -> Result<DVector<f64>, EstError> {
    check_degenerate(probs)?;
    if probs.n_arms() == 2 {
        let c1 = probs.levels();
        assert!(arm <= 1, "arm {arm} out of range for 2 arms");
        assert!(cat >= 1 && cat <= c1 + 1, "cat {cat} out of range");
        let a = arm as f64;
        let mut m = 0.0;
        for j in 0..c1 {
            let r = if cat <= j + 1 { 1.0 } else { 0.0 };
            m += (a * (r - probs.p[(j, 1)]) * probs.pi[0] * probs.q[(j, 0)]
                - (1.0 - a) * (r - probs.p[(j, 0)]) * probs.pi[1] * probs.q[(j, 1)])
                / probs.pbar[j];
        }
        Ok(DVector::from_element(1, m))
    } else {
        efficient_score_m_general(arm, cat, probs)
    }
}

/// The K-arm construction of the efficient score, usable at K = 2 to check
/// it against the closed form.
pub fn efficient_score_m_general(
    arm: usize,
    cat: usize,
    probs: &CumulativeProbs,
) -> Result<DVector<f64>, EstError> {
    check_degenerate(probs)?;
    let c1 = probs.levels();
    let k = probs.n_arms();
    assert!(arm < k, "arm {arm} out of range for {k} arms");
    assert!(cat >= 1 && cat <= c1 + 1, "cat {cat} out of range");
    let mut top = vec![0.0; c1];
    let mut sum = 0.0;
    for j in 0..c1 {
        let r = if cat <= j + 1 { 1.0 } else { 0.0 };
        top[j] = r - probs.p[(j, arm)];
        sum += top[j];
    }
    let mut out = DVector::zeros(k - 1);
    for a in 1..k {
        let mut v = if arm == a { sum } else { 0.0 };
        for j in 0..c1 {
            // B12[(j, a-1)] / B11[j] combination of the intercept rows.
            v -= probs.pi[a] * probs.q[(j, a)] / probs.pbar[j] * top[j];
        }
        out[a - 1] = v;
    }
    Ok(out)
}

/// The (K-1) x (K-1) matrix V. For two arms the scalar
/// `sum_j pi_0 pi_1 q_j0 q_j1 / pbar_j`, otherwise the Schur complement
/// `B22 - B12' B11^-1 B12`. Errors if any `pbar_j` is degenerate or the
/// result is not positive definite.
pub fn v_matrix(probs: &CumulativeProbs) -> Result<DMatrix<f64>, EstError> {
    check_degenerate(probs)?;
    let v = if probs.n_arms() == 2 {
        let mut s = 0.0;
        for j in 0..probs.levels() {
            s += probs.pi[0] * probs.pi[1] * probs.q[(j, 0)] * probs.q[(j, 1)] / probs.pbar[j];
        }
        DMatrix::from_element(1, 1, s)
    } else {
        v_matrix_schur(probs)?
    };
    if v.clone().cholesky().is_none() {
        return Err(EstError::Degenerate("V is not positive definite".into()));
    }
    Ok(v)
}

/// Schur-complement form of V for any K >= 2.
pub fn v_matrix_schur(probs: &CumulativeProbs) -> Result<DMatrix<f64>, EstError> {
    check_degenerate(probs)?;
    let blocks = score_blocks(probs);
    let k1 = blocks.b22.len();
    let c1 = blocks.b11.len();
    let mut v = DMatrix::zeros(k1, k1);
    for a in 0..k1 {
        v[(a, a)] = blocks.b22[a];
        for b in 0..k1 {
            for j in 0..c1 {
                v[(a, b)] -= blocks.b12[(j, a)] * blocks.b12[(j, b)] / blocks.b11[j];
            }
        }
    }
    Ok(v)
}

fn check_degenerate(probs: &CumulativeProbs) -> Result<(), EstError> {
    if probs.min_pbar() < PBAR_FLOOR {
        return Err(EstError::Degenerate(format!(
            "pbar component below {PBAR_FLOOR:.0e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propodds::tests::reference_params;
    use crate::propodds::{cumulative_probs, category_prob, logit};
    use approx::assert_relative_eq;

    fn param_grid() -> Vec<(ModelParams, Vec<f64>)> {
        let mut grid = Vec::new();
        // c = 2, 3, 6 crossed with K = 2, 3 at assorted parameter values.
        for (alpha, beta, pi) in [
            (vec![0.3], vec![0.5], vec![0.5, 0.5]),
            (vec![-0.2], vec![0.4, -0.3], vec![0.4, 0.35, 0.25]),
            (vec![-0.5, 0.4], vec![0.37], vec![0.3, 0.7]),
            (vec![-0.8, 0.1], vec![0.405, 0.182], vec![1.0 / 3.0; 3]),
            (
                vec![-1.99, -0.62, 0.08, 0.49, 0.71],
                vec![1.5f64.ln()],
                vec![0.5, 0.5],
            ),
            (
                vec![-1.99, -0.62, 0.08, 0.49, 0.71],
                vec![1.5f64.ln(), 1.2f64.ln()],
                vec![0.25, 0.45, 0.3],
            ),
        ] {
            grid.push((ModelParams { alpha, beta }, pi));
        }
        grid
    }

    /// Enumerated mean of a per-record vector statistic under the model law
    /// for (A, Cat) at the table's own parameters.
    fn enumerate_mean<F>(probs: &CumulativeProbs, dim: usize, stat: F) -> DVector<f64>
    where
        F: Fn(usize, usize) -> DVector<f64>,
    {
        let mut acc = DVector::zeros(dim);
        for arm in 0..probs.n_arms() {
            for cat in 1..=probs.levels() + 1 {
                let w = probs.pi[arm] * category_prob(probs, arm, cat);
                acc += stat(arm, cat) * w;
            }
        }
        acc
    }

    #[test]
    fn estfun_hand_case() {
        // A = 0, Cat = 1, c = 3: both cumulative residuals are 1 - 1/2.
        let params = ModelParams {
            alpha: vec![0.0, 0.0],
            beta: vec![0.7],
        };
        let v = estfun_m(0, 1, &params);
        assert_eq!(v.as_slice(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn estfun_worst_category_treated() {
        // Cat = c makes every cumulative indicator zero; the arm-a entry
        // collects the residual sum.
        let params = ModelParams {
            alpha: vec![-0.3, 0.4],
            beta: vec![0.2],
        };
        let p1 = expit_raw(-0.3 + 0.2);
        let p2 = expit_raw(0.4 + 0.2);
        let v = estfun_m(1, 3, &params);
        assert_relative_eq!(v[0], -p1, epsilon = 1e-15);
        assert_relative_eq!(v[1], -p2, epsilon = 1e-15);
        assert_relative_eq!(v[2], -p1 - p2, epsilon = 1e-15);
    }

    #[test]
    fn estfun_zero_mean_over_grid() {
        for (params, pi) in param_grid() {
            let probs = cumulative_probs(&params, &pi).unwrap();
            let dim = params.alpha.len() + params.beta.len();
            let mean = enumerate_mean(&probs, dim, |arm, cat| estfun_m(arm, cat, &params));
            assert!(mean.amax() < 1e-12, "E[M] = {mean} at {params:?}");
        }
    }

    #[test]
    fn efficient_score_hand_case() {
        // Flat cumulative probabilities at 1/2 under even randomization:
        // every q and pbar is 1/4, and m collapses to -(residual sum)/2
        // for a control record, which is -1/2 at Cat = 1.
        let probs = CumulativeProbs {
            p: DMatrix::from_element(2, 2, 0.5),
            q: DMatrix::from_element(2, 2, 0.25),
            pbar: vec![0.25, 0.25],
            pi: vec![0.5, 0.5],
        };
        let m = efficient_score_m(0, 1, &probs).unwrap();
        assert_relative_eq!(m[0], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn efficient_score_zero_mean_over_grid() {
        for (params, pi) in param_grid() {
            let probs = cumulative_probs(&params, &pi).unwrap();
            let mean = enumerate_mean(&probs, params.beta.len(), |arm, cat| {
                efficient_score_m(arm, cat, &probs).unwrap()
            });
            assert!(mean.amax() < 1e-12, "E[m] = {mean} at {params:?}");
        }
    }

    #[test]
    fn efficient_score_general_matches_closed_form_at_two_arms() {
        for (params, pi) in param_grid() {
            if params.n_arms() != 2 {
                continue;
            }
            let probs = cumulative_probs(&params, &pi).unwrap();
            for arm in 0..2 {
                for cat in 1..=probs.levels() + 1 {
                    let a = efficient_score_m(arm, cat, &probs).unwrap();
                    let b = efficient_score_m_general(arm, cat, &probs).unwrap();
                    assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn v_matrix_two_arm_hand_case() {
        // c = 2, alpha = 0, beta = 0, pi = 1/2: the single term is
        // (1/2)(1/2)(1/4)(1/4) / (1/4) = 1/16, matching the profiled
        // logistic information n Var(beta_hat) = 16 at these parameters.
        let params = ModelParams {
            alpha: vec![0.0],
            beta: vec![0.0],
        };
        let probs = cumulative_probs(&params, &[0.5, 0.5]).unwrap();
        let v = v_matrix(&probs).unwrap();
        assert_relative_eq!(v[(0, 0)], 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn v_matrix_reference_value() {
        // Frozen from an independent enumeration of the Schur complement at
        // the reference table parameters.
        let (params, pi) = reference_params();
        let probs = cumulative_probs(&params, &pi).unwrap();
        let v = v_matrix(&probs).unwrap();
        assert_relative_eq!(v[(0, 0)], 0.25551353334751525, epsilon = 1e-12);
    }

    #[test]
    fn v_matrix_scalar_equals_schur_complement() {
        for (params, pi) in param_grid() {
            if params.n_arms() != 2 {
                continue;
            }
            let probs = cumulative_probs(&params, &pi).unwrap();
            let a = v_matrix(&probs).unwrap();
            let b = v_matrix_schur(&probs).unwrap();
            assert_relative_eq!(a[(0, 0)], b[(0, 0)], epsilon = 1e-12);
        }
    }

    /// Second moment of m under the law the estimating function is built
    /// for: arms from pi, cumulative indicators independent Bernoulli. The
    /// enumeration runs over all indicator configurations.
    fn independence_law_second_moment(probs: &CumulativeProbs) -> DMatrix<f64> {
        let c1 = probs.levels();
        let k = probs.n_arms();
        let k1 = k - 1;
        let mut acc = DMatrix::zeros(k1, k1);
        for arm in 0..k {
            for mask in 0..(1usize << c1) {
                let mut w = probs.pi[arm];
                let mut top = vec![0.0; c1];
                let mut sum = 0.0;
                for j in 0..c1 {
                    let r = ((mask >> j) & 1) as f64;
                    w *= if r > 0.5 { probs.p[(j, arm)] } else { 1.0 - probs.p[(j, arm)] };
                    top[j] = r - probs.p[(j, arm)];
                    sum += top[j];
                }
                let mut m = DVector::zeros(k1);
                for a in 1..k {
                    let mut v = if arm == a { sum } else { 0.0 };
                    for j in 0..c1 {
                        v -= probs.pi[a] * probs.q[(j, a)] / probs.pbar[j] * top[j];
                    }
                    m[a - 1] = v;
                }
                acc += &m * m.transpose() * w;
            }
        }
        acc
    }

    #[test]
    fn v_matrix_is_variance_of_m_under_working_independence() {
        for (params, pi) in param_grid() {
            let probs = cumulative_probs(&params, &pi).unwrap();
            let v = v_matrix(&probs).unwrap();
            let mm = independence_law_second_moment(&probs);
            assert!(
                (&v - &mm).amax() < 1e-10,
                "Var(m) != V at {params:?}: {v} vs {mm}"
            );
        }
    }

    #[test]
    fn v_matrix_is_minus_mean_beta_derivative_of_m() {
        // Under the model law itself, -E[dm/dbeta] = V; checked by central
        // differences in each beta coordinate at the truth.
        let h = 1e-5;
        for (params, pi) in param_grid() {
            let probs = cumulative_probs(&params, &pi).unwrap();
            let v = v_matrix(&probs).unwrap();
            let k1 = params.beta.len();
            for b in 0..k1 {
                let mut up = params.clone();
                up.beta[b] += h;
                let mut dn = params.clone();
                dn.beta[b] -= h;
                let probs_up = cumulative_probs(&up, &pi).unwrap();
                let probs_dn = cumulative_probs(&dn, &pi).unwrap();
                let col = enumerate_mean(&probs, k1, |arm, cat| {
                    (efficient_score_m(arm, cat, &probs_up).unwrap()
                        - efficient_score_m(arm, cat, &probs_dn).unwrap())
                        / (2.0 * h)
                });
                for a in 0..k1 {
                    assert_relative_eq!(-col[a], v[(a, b)], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn degenerate_pbar_is_rejected() {
        let params = ModelParams {
            alpha: vec![-40.0, 40.0],
            beta: vec![0.0],
        };
        let probs = cumulative_probs(&params, &[0.5, 0.5]).unwrap();
        assert!(matches!(
            efficient_score_m(0, 1, &probs),
            Err(EstError::Degenerate(_))
        ));
        assert!(matches!(v_matrix(&probs), Err(EstError::Degenerate(_))));
    }

    #[test]
    fn v_matrix_three_arm_frozen_value() {
        // Frozen from an independent enumeration at alpha = (-0.8, 0.1, 0.9),
        // beta = (0.405, 0.182), pi = (0.4, 0.35, 0.25).
        let params = ModelParams {
            alpha: vec![-0.8, 0.1, 0.9],
            beta: vec![0.405, 0.182],
        };
        let probs = cumulative_probs(&params, &[0.4, 0.35, 0.25]).unwrap();
        let v = v_matrix(&probs).unwrap();
        assert_relative_eq!(v[(0, 0)], 0.14771314, epsilon = 1e-7);
        assert_relative_eq!(v[(0, 1)], -0.05658119, epsilon = 1e-7);
        assert_relative_eq!(v[(1, 0)], -0.05658119, epsilon = 1e-7);
        assert_relative_eq!(v[(1, 1)], 0.12383882, epsilon = 1e-7);
    }

    #[test]
    fn logit_of_reference_cumulative_props() {
        for &p in &[0.12, 0.35, 0.52, 0.62, 0.67] {
            let a = logit(p).unwrap();
            assert_relative_eq!(expit_raw(a), p, epsilon = 1e-12);
        }
    }
}
