//! Shared helpers for the fitting tests: a seeded multinomial sampler and a
//! plain logistic-regression oracle.

use super::{CumulativeProbs, category_prob};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draw (arm, cat) pairs from the model law of the table.
pub(crate) fn sample_pairs(probs: &CumulativeProbs, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = probs.n_arms();
    let c = probs.levels() + 1;
    (0..n)
        .map(|_| {
            let ua: f64 = rng.random();
            let mut arm = k - 1;
            let mut acc = 0.0;
            for a in 0..k {
                acc += probs.pi[a];
                if ua < acc {
                    arm = a;
                    break;
                }
            }
            let uc: f64 = rng.random();
            let mut cat = c;
            let mut accc = 0.0;
            for cc in 1..=c {
                accc += category_prob(probs, arm, cc);
                if uc < accc {
                    cat = cc;
                    break;
                }
            }
            (arm, cat)
        })
        .collect()
}

/// Newton fit of `logit pr(y = 1 | arm) = b0 + b_a I(arm = a)`; returns the
/// coefficients and their observed-information standard errors.
pub(crate) fn logistic_mle(rows: &[(usize, bool)], n_arms: usize) -> (Vec<f64>, Vec<f64>) {
    let p = n_arms; // intercept + K-1 indicators
    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..50 {
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for &(arm, y) in rows {
            let mut design = vec![0.0; p];
            design[0] = 1.0;
            if arm >= 1 {
                design[arm] = 1.0;
            }
            let eta: f64 = (0..p).map(|i| design[i] * beta[i]).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = mu * (1.0 - mu);
            let r = if y { 1.0 } else { 0.0 } - mu;
            for i in 0..p {
                grad[i] += design[i] * r;
                for j in 0..p {
                    info[(i, j)] += design[i] * design[j] * w;
                }
            }
        }
        let step = info
            .clone()
            .lu()
            .solve(&grad)
            .expect("logistic information is invertible in these tests");
        beta += &step;
        if step.amax() < 1e-12 {
            let cov = info.try_inverse().expect("invertible");
            let se = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
            return (beta.iter().cloned().collect(), se);
        }
    }
    panic!("logistic oracle did not converge");
}
