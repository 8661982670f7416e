//! Two-step augmented inverse-probability-weighted estimation of the
//! proportional-odds treatment effect from interim trial data, with the
//! complete-case, horizon-restricted, and full-data comparison fits.
//!
//! The weighted path runs in two steps: (1) solve the inverse-weighted
//! working-independence equations on the completed records for starting
//! values, then (2) regress the per-subject dependent variable on the
//! augmentation design and take a single one-step update of the treatment
//! effects. Step (2) is not iterated.

mod depvar;
mod design;
mod regress;

pub use depvar::{dependent_variable, score_caches, ScoreCache};
pub use design::{build_design, DesignLayout};
pub use regress::{one_step, project, variance, RegressionFit};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::AugmentationBasis;
use crate::censoring::{fit_censoring_km, HazardForm, KaplanMeierCurve, POSITIVITY_FLOOR};
use crate::data::{FullData, ObservedData, Validate};
use crate::error::{ConfigError, DataError, EstError};
use crate::propodds::{
    cumulative_probs, efficient_score_m, efficient_score_m_general, fit_mle, solve_weighted_wi,
    v_matrix, v_matrix_schur, CumulativeProbs, MleFit, WiFit,
};

/// Two-sided 95% normal critical value.
pub const Z_975: f64 = 1.959963984540054;

/// Estimation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Maximum likelihood on the completed records only.
    Naive,
    /// Maximum likelihood on records followed to the horizon.
    Ninety,
    /// Inverse-probability-weighted complete-case fit.
    Ipw,
    /// Augmented fit, baseline covariates only.
    Aipw1,
    /// Augmented fit, baseline plus time-dependent covariates.
    Aipw2,
    /// Covariate-adjusted fit on fully observed data.
    FullAdj,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "naive" => Ok(Mode::Naive),
            "ninety" => Ok(Mode::Ninety),
            "ipw" => Ok(Mode::Ipw),
            "aipw1" => Ok(Mode::Aipw1),
            "aipw2" => Ok(Mode::Aipw2),
            "full_adj" => Ok(Mode::FullAdj),
            other => Err(ConfigError::Invalid(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Naive => "naive",
            Mode::Ninety => "ninety",
            Mode::Ipw => "ipw",
            Mode::Aipw1 => "aipw1",
            Mode::Aipw2 => "aipw2",
            Mode::FullAdj => "full_adj",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Estimation options shared by every mode.
#[derive(Debug, Clone, Default)]
pub struct EstOptions {
    /// Augmentation basis; the default is linear in X and, for the
    /// martingale block, in X and L(u).
    pub basis: Option<AugmentationBasis>,
    /// Known randomization probabilities; the default is the sample
    /// frequencies.
    pub pi: Option<Vec<f64>>,
    pub hazard_form: HazardForm,
    /// Clamp weights at the positivity floor instead of erroring.
    pub truncate_weights: bool,
    /// Use the K-arm score and variance construction even at K = 2.
    pub force_general: bool,
}

/// Fit diagnostics carried alongside the estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub n_complete: usize,
    pub censored_fraction: f64,
    pub iterations: usize,
    /// Smallest censoring-survival value among weighted records.
    pub min_censoring_survival: f64,
    pub truncated_weights: usize,
    /// Singular directions dropped from the augmentation regression.
    pub dropped_directions: usize,
    /// Per-arm total weight over arm size; values far from 1 flag poor
    /// weight normalization.
    pub weight_mass_ratio: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    fn bare(n: usize, n_complete: usize, iterations: usize) -> Self {
        Diagnostics {
            n,
            n_complete,
            censored_fraction: 1.0 - n_complete as f64 / n.max(1) as f64,
            iterations,
            min_censoring_survival: 1.0,
            truncated_weights: 0,
            dropped_directions: 0,
            weight_mass_ratio: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// Point estimates, uncertainty, and Wald tests for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: String,
    /// Cumulative intercepts at the solution, length c - 1.
    pub alpha: Vec<f64>,
    /// Arm effects, length K - 1.
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// Covariance of beta, (K - 1) x (K - 1), row major.
    pub cov: Vec<Vec<f64>>,
    pub or_point: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub wald_z: Vec<f64>,
    pub p_value: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn assemble(mode: Mode, alpha: &[f64], beta: &[f64], cov: &DMatrix<f64>, diagnostics: Diagnostics) -> EstimateResult {
    let se: Vec<f64> = (0..beta.len()).map(|r| cov[(r, r)].sqrt()).collect();
    let or_point: Vec<f64> = beta.iter().map(|b| b.exp()).collect();
    let ci_lower: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| (b - Z_975 * s).exp()).collect();
    let ci_upper: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| (b + Z_975 * s).exp()).collect();
    let wald_z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p_value: Vec<f64> = wald_z.iter().map(|z| libm::erfc(z.abs() / std::f64::consts::SQRT_2)).collect();
    EstimateResult {
        method: mode.name().to_string(),
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        se,
        cov: (0..cov.nrows()).map(|r| cov.row(r).iter().cloned().collect()).collect(),
        or_point,
        ci_lower,
        ci_upper,
        wald_z,
        p_value,
        diagnostics,
    }
}

/// Arm-specific censoring survival curves (the censoring indicator is
/// `delta = 0`).
pub fn censoring_curves(data: &ObservedData, form: HazardForm) -> Result<Vec<KaplanMeierCurve>, EstError> {
    (0..data.meta.n_arms)
        .map(|a| {
            let pts: Vec<(f64, bool)> = data
                .records
                .iter()
                .filter(|r| r.arm.index() == a)
                .map(|r| (r.u, r.delta))
                .collect();
            fit_censoring_km(&pts, form)
        })
        .collect()
}

fn validated(data: &ObservedData) -> Result<(), EstError> {
    let violations = data.validate();
    if violations.is_empty() {
        return Ok(());
    }
    let shown: Vec<String> = violations.iter().take(3).map(|v| v.to_string()).collect();
    let suffix = if violations.len() > 3 {
        format!(" (and {} more)", violations.len() - 3)
    } else {
        String::new()
    };
    Err(DataError::Invalid(format!("{}{}", shown.join("; "), suffix)).into())
}

fn resolved_pi(data: &ObservedData, opts: &EstOptions) -> Result<Vec<f64>, EstError> {
    match &opts.pi {
        None => Ok(data.arm_freqs()),
        Some(pi) => {
            if pi.len() != data.meta.n_arms
                || pi.iter().any(|&p| !(p > 0.0 && p < 1.0))
                || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(EstError::Domain(
                    "randomization probabilities must be positive, per arm, and sum to 1".into(),
                ));
            }
            Ok(pi.clone())
        }
    }
}

fn covariate_dims(data: &ObservedData) -> Result<(usize, usize), EstError> {
    let p = data.records.first().map(|r| r.x.len()).unwrap_or(0);
    if data.records.iter().any(|r| r.x.len() != p) {
        return Err(EstError::Domain("baseline covariate dimension varies across records".into()));
    }
    let q = data.records.iter().map(|r| r.path.dim()).max().unwrap_or(0);
    if data.records.iter().any(|r| r.path.dim() != q && r.path.dim() != 0) {
        return Err(EstError::Domain("time-dependent covariate dimension varies across records".into()));
    }
    Ok((p, q))
}

/// The weighted two-step machinery shared by IPW, AIPW1, and AIPW2: curves,
/// weights, the step-(1) solve, scores, and the dependent variable, all at
/// the initial estimates.
pub struct Pipeline {
    pub pi: Vec<f64>,
    pub curves: Vec<KaplanMeierCurve>,
    pub wi: WiFit,
    pub probs: CumulativeProbs,
    pub v: DMatrix<f64>,
    pub y: DMatrix<f64>,
    basis: AugmentationBasis,
    diag: Diagnostics,
}

impl Pipeline {
    pub fn build(data: &ObservedData, opts: &EstOptions) -> Result<Self, EstError> {
        validated(data)?;
        let (p, q) = covariate_dims(data)?;
        let basis = opts
            .basis
            .clone()
            .unwrap_or_else(|| AugmentationBasis::linear(p, q));
        basis.check_dims(p, q).map_err(|e| EstError::Domain(e.to_string()))?;
        let pi = resolved_pi(data, opts)?;
        let curves = censoring_curves(data, opts.hazard_form)?;
        let n = data.records.len();

        let mut weights = vec![0.0; n];
        let mut min_surv = 1.0f64;
        let mut violations = 0usize;
        let mut first = None;
        let mut truncated = 0usize;
        for (i, r) in data.records.iter().enumerate() {
            if !r.delta {
                continue;
            }
            let s = curves[r.arm.index()].survival_at(r.u);
            min_surv = min_surv.min(s);
            if s < POSITIVITY_FLOOR {
                violations += 1;
                first.get_or_insert(i);
                if opts.truncate_weights {
                    weights[i] = 1.0 / POSITIVITY_FLOOR;
                    truncated += 1;
                    continue;
                }
            }
            weights[i] = 1.0 / s;
        }
        if violations > 0 && !opts.truncate_weights {
            return Err(EstError::Positivity {
                floor: POSITIVITY_FLOOR,
                count: violations,
                first: first.expect("violation recorded"),
            });
        }

        let wi = solve_weighted_wi(
            data.records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.delta)
                .map(|(i, r)| (r.arm.index(), r.cat.expect("complete record"), weights[i])),
            data.meta.n_cats,
            data.meta.n_arms,
            None,
        )?;
        let probs = cumulative_probs(&wi.params, &pi)?;
        let v = if opts.force_general {
            v_matrix_schur(&probs)?
        } else {
            v_matrix(&probs)?
        };

        let n_complete = data.records.iter().filter(|r| r.delta).count();
        let r_dim = data.meta.n_arms - 1;
        let mut m = DMatrix::zeros(n, r_dim);
        for (i, rec) in data.records.iter().enumerate() {
            if !rec.delta {
                continue;
            }
            let mi = if opts.force_general {
                efficient_score_m_general(rec.arm.index(), rec.cat.expect("complete record"), &probs)?
            } else {
                efficient_score_m(rec.arm.index(), rec.cat.expect("complete record"), &probs)?
            };
            for c in 0..r_dim {
                m[(i, c)] = mi[c];
            }
        }

        let arms: Vec<usize> = data.records.iter().map(|r| r.arm.index()).collect();
        let u: Vec<f64> = data.records.iter().map(|r| r.u).collect();
        let delta: Vec<bool> = data.records.iter().map(|r| r.delta).collect();
        let caches = score_caches(&arms, &u, &weights, &m, &curves);
        let y = dependent_variable(&arms, &u, &delta, &weights, &m, &curves, &caches);

        let mut diag = Diagnostics::bare(n, n_complete, wi.iterations);
        diag.min_censoring_survival = min_surv;
        diag.truncated_weights = truncated;
        for a in 0..data.meta.n_arms {
            let n_a = arms.iter().filter(|&&x| x == a).count().max(1) as f64;
            let mass: f64 = (0..n).filter(|&i| arms[i] == a).map(|i| weights[i]).sum();
            let ratio = mass / n_a;
            if !(0.5..=2.0).contains(&ratio) {
                diag.warnings
                    .push(format!("arm {a} weight mass ratio {ratio:.3} outside [0.5, 2]"));
            }
            diag.weight_mass_ratio.push(ratio);
        }

        Ok(Pipeline {
            pi,
            curves,
            wi,
            probs,
            v,
            y,
            basis,
            diag,
        })
    }

    pub fn beta_init(&self) -> DVector<f64> {
        DVector::from_vec(self.wi.params.beta.clone())
    }

    /// The IPW result: the step-(1) estimates with the influence-function
    /// variance `V^-1 [sum_i y_i y_i^T] V^-1 / n^2`.
    pub fn ipw_result(&self) -> Result<EstimateResult, EstError> {
        let cov = variance(&self.v, &self.y)?;
        Ok(assemble(
            Mode::Ipw,
            &self.wi.params.alpha,
            &self.wi.params.beta,
            &cov,
            self.diag.clone(),
        ))
    }

    /// The augmented result; `with_martingale` selects the full design
    /// (baseline plus martingale columns) or the baseline block alone.
    pub fn aipw_result(&self, data: &ObservedData, with_martingale: bool) -> Result<EstimateResult, EstError> {
        let (design, _) = build_design(&data.records, &self.curves, &self.basis, &self.pi, with_martingale)?;
        let fit = project(&self.y, &design)?;
        let mean_pred = DVector::from_iterator(
            self.y.ncols(),
            fit.preds.column_iter().map(|c| c.mean()),
        );
        let beta = one_step(&self.beta_init(), &self.v, &mean_pred)?;
        let resid = &self.y - &fit.preds;
        let cov = variance(&self.v, &resid)?;
        let mut diag = self.diag.clone();
        diag.dropped_directions = fit.dropped_directions;
        let mode = if with_martingale { Mode::Aipw2 } else { Mode::Aipw1 };
        Ok(assemble(mode, &self.wi.params.alpha, beta.as_slice(), &cov, diag))
    }
}

/// Step-(1) fit: the inverse-weighted working-independence solve with the
/// influence-function variance.
pub fn fit_ipwcc(data: &ObservedData, opts: &EstOptions) -> Result<EstimateResult, EstError> {
    Pipeline::build(data, opts)?.ipw_result()
}

/// Covariate-adjusted one-step estimator on fully observed data: the
/// weighted pipeline with unit weights and no censoring terms.
pub fn covariate_adjusted_full(full: &FullData, opts: &EstOptions) -> Result<EstimateResult, EstError> {
    let obs = full.to_observed();
    validated(&obs)?;
    let (p, _) = covariate_dims(&obs)?;
    let basis = opts
        .basis
        .clone()
        .unwrap_or_else(|| AugmentationBasis::linear(p, 0));
    // Time-dependent terms are never evaluated here, so only the baseline
    // half is checked.
    basis
        .check_dims(p, usize::MAX)
        .map_err(|e| EstError::Domain(e.to_string()))?;
    let pi = resolved_pi(&obs, opts)?;
    let wi = solve_weighted_wi(
        full.records.iter().map(|r| (r.arm.index(), r.cat, 1.0)),
        full.meta.n_cats,
        full.meta.n_arms,
        None,
    )?;
    let probs = cumulative_probs(&wi.params, &pi)?;
    let v = if opts.force_general {
        v_matrix_schur(&probs)?
    } else {
        v_matrix(&probs)?
    };
    let n = full.records.len();
    let r_dim = full.meta.n_arms - 1;
    let mut y = DMatrix::zeros(n, r_dim);
    for (i, rec) in full.records.iter().enumerate() {
        let mi = if opts.force_general {
            efficient_score_m_general(rec.arm.index(), rec.cat, &probs)?
        } else {
            efficient_score_m(rec.arm.index(), rec.cat, &probs)?
        };
        for c in 0..r_dim {
            y[(i, c)] = mi[c];
        }
    }
    let (design, _) = build_design(&obs.records, &[], &basis, &pi, false)?;
    let fit = project(&y, &design)?;
    let mean_pred = DVector::from_iterator(r_dim, fit.preds.column_iter().map(|c| c.mean()));
    let beta = one_step(&DVector::from_vec(wi.params.beta.clone()), &v, &mean_pred)?;
    let resid = &y - &fit.preds;
    let cov = variance(&v, &resid)?;
    let mut diag = Diagnostics::bare(n, n, wi.iterations);
    diag.dropped_directions = fit.dropped_directions;
    Ok(assemble(Mode::FullAdj, &wi.params.alpha, beta.as_slice(), &cov, diag))
}

fn mle_result(mode: Mode, fit: &MleFit, n: usize, n_used: usize) -> EstimateResult {
    let cov = fit.cov_beta.clone();
    assemble(
        mode,
        &fit.params.alpha,
        &fit.params.beta,
        &cov,
        Diagnostics::bare(n, n_used, fit.iterations),
    )
}

/// Fit the requested method on interim data.
pub fn estimate(data: &ObservedData, mode: Mode, opts: &EstOptions) -> Result<EstimateResult, EstError> {
    match mode {
        Mode::Naive => {
            validated(data)?;
            let pairs = data.complete_pairs();
            let fit = fit_mle(&pairs, data.meta.n_cats, data.meta.n_arms)?;
            Ok(mle_result(mode, &fit, data.records.len(), pairs.len()))
        }
        Mode::Ninety => {
            validated(data)?;
            let subset = data.subset_horizon()?;
            let pairs = subset.complete_pairs();
            let fit = fit_mle(&pairs, data.meta.n_cats, data.meta.n_arms)?;
            Ok(mle_result(mode, &fit, data.records.len(), pairs.len()))
        }
        Mode::Ipw => fit_ipwcc(data, opts),
        Mode::Aipw1 => Pipeline::build(data, opts)?.aipw_result(data, false),
        Mode::Aipw2 => Pipeline::build(data, opts)?.aipw_result(data, true),
        Mode::FullAdj => {
            validated(data)?;
            let full = data.as_full()?;
            covariate_adjusted_full(&full, opts)
        }
    }
}

/// Fit several methods, sharing the weighted pipeline across IPW and the
/// augmented modes.
pub fn estimate_many(
    data: &ObservedData,
    modes: &[Mode],
    opts: &EstOptions,
) -> Vec<Result<EstimateResult, EstError>> {
    let needs_pipeline = modes
        .iter()
        .any(|m| matches!(m, Mode::Ipw | Mode::Aipw1 | Mode::Aipw2));
    let pipeline = if needs_pipeline {
        Some(Pipeline::build(data, opts))
    } else {
        None
    };
    modes
        .iter()
        .map(|&mode| match mode {
            Mode::Ipw | Mode::Aipw1 | Mode::Aipw2 => match pipeline.as_ref().expect("pipeline built") {
                Ok(p) => match mode {
                    Mode::Ipw => p.ipw_result(),
                    Mode::Aipw1 => p.aipw_result(data, false),
                    Mode::Aipw2 => p.aipw_result(data, true),
                    _ => unreachable!(),
                },
                // Rebuild to reproduce the error per mode; failures are rare
                // and the build is deterministic.
                Err(_) => match Pipeline::build(data, opts) {
                    Ok(_) => unreachable!("pipeline build is deterministic"),
                    Err(e) => Err(e),
                },
            },
            other => estimate(data, other, opts),
        })
        .collect()
}
