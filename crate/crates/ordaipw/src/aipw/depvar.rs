//! Dependent variable of the augmentation regression: the inverse-weighted
//! efficient score plus a censoring-martingale correction built from at-risk
//! averages of the weighted scores.

use nalgebra::DMatrix;

use crate::censoring::KaplanMeierCurve;

/// Per-arm at-risk averages of the weighted efficient score, evaluated at the
/// arm's censoring event times, with hazard-weighted prefix sums for the
/// compensator term. Shared by all subjects of the arm.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    /// Column k: average of `w_i m_i` over subjects at risk at the k-th
    /// censoring time; responses x events.
    pub g: DMatrix<f64>,
    /// Column k: `sum_{j < k} hazard_j g_j`; responses x (events + 1).
    prefix: DMatrix<f64>,
}

/// Build the at-risk score averages for every arm.
///
/// `weights` carries `delta_i / K(U_i-, A_i)` per record, zero when censored;
/// `m` is the per-record efficient score with zero rows for censored records.
pub fn score_caches(
    arms: &[usize],
    u: &[f64],
    weights: &[f64],
    m: &DMatrix<f64>,
    curves: &[KaplanMeierCurve],
) -> Vec<ScoreCache> {
    let r = m.ncols();
    curves
        .iter()
        .enumerate()
        .map(|(a, curve)| {
            let ne = curve.times.len();
            // bucket[:, e] collects scores of subjects leaving risk after e
            // events; a subject is at risk for event k iff its bucket e > k.
            let mut bucket = DMatrix::<f64>::zeros(r, ne + 1);
            for i in 0..arms.len() {
                if arms[i] != a || weights[i] == 0.0 {
                    continue;
                }
                let e = curve.events_through(u[i]);
                for c in 0..r {
                    bucket[(c, e)] += weights[i] * m[(i, c)];
                }
            }
            let mut g = DMatrix::zeros(r, ne);
            let mut tail = vec![0.0; r];
            for k in (0..ne).rev() {
                for c in 0..r {
                    tail[c] += bucket[(c, k + 1)];
                    g[(c, k)] = tail[c] / curve.at_risk[k] as f64;
                }
            }
            let mut prefix = DMatrix::zeros(r, ne + 1);
            for k in 0..ne {
                for c in 0..r {
                    prefix[(c, k + 1)] = prefix[(c, k)] + curve.hazard[k] * g[(c, k)];
                }
            }
            ScoreCache { g, prefix }
        })
        .collect()
}

/// Per-record dependent variable, n x responses:
/// `w_i m_i + (1 - delta_i) g(U_i) - sum_{t_k <= U_i} hazard_k g(t_k)`.
pub fn dependent_variable(
    arms: &[usize],
    u: &[f64],
    delta: &[bool],
    weights: &[f64],
    m: &DMatrix<f64>,
    curves: &[KaplanMeierCurve],
    caches: &[ScoreCache],
) -> DMatrix<f64> {
    let n = arms.len();
    let r = m.ncols();
    let mut y = DMatrix::zeros(n, r);
    for i in 0..n {
        let a = arms[i];
        let e = curves[a].events_through(u[i]);
        for c in 0..r {
            let mut v = weights[i] * m[(i, c)] - caches[a].prefix[(c, e)];
            if !delta[i] {
                // A censored subject's exit is one of its arm's event times.
                debug_assert!(e > 0 && curves[a].times[e - 1] == u[i]);
                v += caches[a].g[(c, e - 1)];
            }
            y[(i, c)] = v;
        }
    }
    y
}
