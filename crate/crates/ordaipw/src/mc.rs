//! Monte Carlo experiment driver.
//!
//! Each replicate draws one paired dataset (end-of-study and interim views
//! of the same subjects), runs every requested estimator, and the harness
//! aggregates the usual operating characteristics per estimator and per
//! treatment component: mean, median, and SD of the estimated odds ratio,
//! the average delta-method standard error, coverage of the nominal 95%
//! interval, MSE relative to a reference estimator, and the rejection rate
//! of the level-0.05 Wald test of no effect.
//!
//! Replicates run on a worker pool and are aggregated in replicate order,
//! so a summary depends only on the configuration and seed, not on the
//! worker count. A replicate where one estimator fails still counts for
//! the others; the run aborts only when some estimator fails more than 5%
//! of the time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aipw::{covariate_adjusted_full, estimate_many, EstOptions, EstimateResult, Mode, Z_975};
use crate::censoring::HazardForm;
use crate::error::ConfigError;
use crate::propodds::{fit_mle, fit_mle_adjusted, MleFit};
use crate::simgen::{generate, ScenarioConfig};

/// Estimators the harness can run. The first three fit the end-of-study
/// dataset (benchmarks unavailable at an interim look); the rest fit the
/// interim dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    /// Maximum likelihood on the full data, treatment only.
    Ideal,
    /// Maximum likelihood on the full data with baseline covariates.
    IdealAdj,
    /// Covariate-adjusted one-step fit on the full data.
    FullAdj,
    Naive,
    Ninety,
    Ipw,
    Aipw1,
    Aipw2,
}

/// Every estimator, in report order.
pub const ALL_ESTIMATORS: [Estimator; 8] = [
    Estimator::Ideal,
    Estimator::IdealAdj,
    Estimator::FullAdj,
    Estimator::Naive,
    Estimator::Ninety,
    Estimator::Ipw,
    Estimator::Aipw1,
    Estimator::Aipw2,
];

impl Estimator {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "ideal" => Ok(Estimator::Ideal),
            "ideal_adj" => Ok(Estimator::IdealAdj),
            "full_adj" => Ok(Estimator::FullAdj),
            "naive" => Ok(Estimator::Naive),
            "ninety" => Ok(Estimator::Ninety),
            "ipw" => Ok(Estimator::Ipw),
            "aipw1" => Ok(Estimator::Aipw1),
            "aipw2" => Ok(Estimator::Aipw2),
            other => Err(ConfigError::Invalid(format!("unknown estimator {other:?}"))),
        }
    }

    /// Parse a comma-separated estimator list; `all` expands to every
    /// estimator.
    pub fn parse_list(s: &str) -> Result<Vec<Estimator>, ConfigError> {
        if s.trim() == "all" {
            return Ok(ALL_ESTIMATORS.to_vec());
        }
        let mut out = Vec::new();
        for name in s.split(',') {
            let name = name.trim();
            if name.is_empty() {
                continue;
            }
            let e = Estimator::parse(name)?;
            if out.contains(&e) {
                return Err(ConfigError::Invalid(format!("estimator {name} listed twice")));
            }
            out.push(e);
        }
        Ok(out)
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Ideal => "ideal",
            Estimator::IdealAdj => "ideal_adj",
            Estimator::FullAdj => "full_adj",
            Estimator::Naive => "naive",
            Estimator::Ninety => "ninety",
            Estimator::Ipw => "ipw",
            Estimator::Aipw1 => "aipw1",
            Estimator::Aipw2 => "aipw2",
        }
    }

    fn interim_mode(self) -> Option<Mode> {
        match self {
            Estimator::Naive => Some(Mode::Naive),
            Estimator::Ninety => Some(Mode::Ninety),
            Estimator::Ipw => Some(Mode::Ipw),
            Estimator::Aipw1 => Some(Mode::Aipw1),
            Estimator::Aipw2 => Some(Mode::Aipw2),
            _ => None,
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A full Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub scenario: ScenarioConfig,
    pub reps: u64,
    pub estimators: Vec<Estimator>,
    pub opts: EstOptions,
    pub workers: usize,
    /// Reference for the MSE ratio column.
    pub reference: Estimator,
}

impl McConfig {
    pub fn new(scenario: ScenarioConfig, reps: u64) -> Self {
        McConfig {
            scenario,
            reps,
            estimators: ALL_ESTIMATORS.to_vec(),
            opts: EstOptions::default(),
            workers: 1,
            reference: Estimator::Aipw2,
        }
    }
}

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "estimator {estimator} failed {failures} of {reps} replicates, above the 5% abort threshold; first failure: {first}"
    )]
    ExcessFailures { estimator: String, failures: u64, reps: u64, first: String },
}

/// One successful replicate fit, reduced to what the aggregation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RepFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
}

/// Operating characteristics for one estimator and one treatment component.
///
/// The mean, median, SD, average SE, and MSE are on the odds-ratio scale;
/// coverage and the Wald test work on the log scale and transform the
/// interval monotonically. SD and coverage are absent with fewer than two
/// successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub estimator: String,
    /// Investigational arm index, 1-based.
    pub component: usize,
    /// Successful replicates: requested minus failures.
    pub replicates: u64,
    pub failures: u64,
    pub mc_mean: f64,
    pub mc_median: f64,
    pub mc_sd: Option<f64>,
    pub ave_se: f64,
    pub coverage: Option<f64>,
    pub mse_ratio: Option<f64>,
    pub reject_rate: f64,
}

/// Aggregated experiment results plus the effective configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    /// Effective configuration in key = value form, echoed for provenance.
    pub config: Vec<(String, String)>,
    /// Per-component true odds ratio used for coverage and MSE.
    pub true_or: Vec<f64>,
    /// MSE ratio reference estimator.
    pub reference: String,
    pub rows: Vec<McRow>,
}

/// Summary plus the per-replicate fits, indexed `[estimator][replicate]`.
#[derive(Debug, Clone)]
pub struct McDetail {
    pub summary: McSummary,
    pub fits: Vec<Vec<Result<RepFit, String>>>,
}

fn rep_fit(beta: Vec<f64>, se: Vec<f64>) -> Result<RepFit, String> {
    if beta.iter().any(|b| !b.is_finite()) || se.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err("non-finite estimate".into());
    }
    Ok(RepFit { beta, se })
}

fn from_estimate(r: Result<EstimateResult, crate::error::EstError>) -> Result<RepFit, String> {
    let r = r.map_err(|e| e.to_string())?;
    rep_fit(r.beta, r.se)
}

fn from_mle(r: Result<MleFit, crate::error::EstError>) -> Result<RepFit, String> {
    let r = r.map_err(|e| e.to_string())?;
    rep_fit(r.params.beta, r.se_beta)
}

fn run_replicate(cfg: &McConfig, rep: u64) -> Vec<Result<RepFit, String>> {
    let (full, obs) = match generate(&cfg.scenario, rep) {
        Ok(pair) => pair,
        Err(e) => return vec![Err(e.to_string()); cfg.estimators.len()],
    };
    let modes: Vec<Mode> = cfg.estimators.iter().filter_map(|e| e.interim_mode()).collect();
    let mut interim = estimate_many(&obs, &modes, &cfg.opts).into_iter();
    cfg.estimators
        .iter()
        .map(|est| match est {
            Estimator::Ideal => {
                let pairs: Vec<(usize, usize)> =
                    full.records.iter().map(|r| (r.arm.index(), r.cat)).collect();
                from_mle(fit_mle(&pairs, full.meta.n_cats, full.meta.n_arms))
            }
            Estimator::IdealAdj => {
                let recs: Vec<(usize, usize, Vec<f64>)> = full
                    .records
                    .iter()
                    .map(|r| (r.arm.index(), r.cat, r.x.clone()))
                    .collect();
                from_mle(fit_mle_adjusted(&recs, full.meta.n_cats, full.meta.n_arms))
            }
            Estimator::FullAdj => from_estimate(covariate_adjusted_full(&full, &cfg.opts)),
            _ => from_estimate(interim.next().expect("one result per interim mode")),
        })
        .collect()
}

fn hazard_name(form: HazardForm) -> &'static str {
    match form {
        HazardForm::NelsonAalen => "nelson-aalen",
        HazardForm::LogSurvival => "log-survival",
    }
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Effective configuration as ordered key = value pairs.
pub fn config_echo(cfg: &McConfig) -> Vec<(String, String)> {
    let sc = &cfg.scenario;
    let mut out: Vec<(String, String)> = vec![
        ("scenario".into(), sc.scenario.name().into()),
        ("n".into(), sc.n.to_string()),
    ];
    match sc.scenario {
        crate::simgen::Scenario::S5 => out.push(("ph_exp_xi".into(), sc.ph_exp_xi.to_string())),
        crate::simgen::Scenario::S6 => {
            let s6 = &sc.s6;
            out.push(("s6_lambda_h0".into(), s6.lambda_h0.to_string()));
            out.push(("s6_lambda_d0".into(), s6.lambda_d0.to_string()));
            out.push(("s6_c1".into(), s6.c1.to_string()));
            out.push(("s6_c2".into(), s6.c2.to_string()));
            out.push(("s6_p40".into(), s6.p40.to_string()));
            out.push(("s6_xi".into(), s6.xi.to_string()));
        }
        _ => out.push(("ors".into(), join_f64(&sc.ors))),
    }
    out.push(("cutpoints".into(), join_f64(&sc.cutpoints)));
    out.push(("gamma".into(), sc.gamma.to_string()));
    out.push(("zeta".into(), sc.zeta.to_string()));
    out.push(("horizon".into(), sc.horizon.to_string()));
    out.push(("hosp_cut".into(), sc.hosp_cut.to_string()));
    out.push((
        "death_windows".into(),
        sc.death_windows
            .iter()
            .map(|(a, b)| format!("{a}:{b}"))
            .collect::<Vec<_>>()
            .join(";"),
    ));
    out.push(("pi".into(), join_f64(&sc.pi)));
    out.push(("seed".into(), sc.seed.to_string()));
    out.push(("reps".into(), cfg.reps.to_string()));
    out.push((
        "estimators".into(),
        cfg.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(","),
    ));
    out.push((
        "basis".into(),
        cfg.opts.basis.as_ref().map_or_else(|| "linear".into(), |b| b.spec_string()),
    ));
    out.push(("hazard".into(), hazard_name(cfg.opts.hazard_form).into()));
    out.push(("truncate_weights".into(), cfg.opts.truncate_weights.to_string()));
    out.push(("workers".into(), cfg.workers.to_string()));
    out.push(("reference".into(), cfg.reference.name().into()));
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Run the experiment and keep the per-replicate fits.
pub fn run_mc_detail(cfg: &McConfig) -> Result<McDetail, McError> {
    cfg.scenario.validate()?;
    if cfg.reps == 0 {
        return Err(ConfigError::Invalid("reps must be positive".into()).into());
    }
    if cfg.workers == 0 {
        return Err(ConfigError::Invalid("workers must be positive".into()).into());
    }
    let by_rep: Vec<Vec<Result<RepFit, String>>> = if cfg.estimators.is_empty() {
        Vec::new()
    } else if cfg.workers == 1 {
        (0..cfg.reps).map(|rep| run_replicate(cfg, rep)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
        pool.install(|| (0..cfg.reps).into_par_iter().map(|rep| run_replicate(cfg, rep)).collect())
    };

    // Transpose to [estimator][replicate].
    let n_est = cfg.estimators.len();
    let mut fits: Vec<Vec<Result<RepFit, String>>> = vec![Vec::with_capacity(by_rep.len()); n_est];
    for rep in by_rep {
        for (ei, r) in rep.into_iter().enumerate() {
            fits[ei].push(r);
        }
    }

    for (est, col) in cfg.estimators.iter().zip(&fits) {
        let failures = col.iter().filter(|r| r.is_err()).count() as u64;
        if failures as f64 > 0.05 * cfg.reps as f64 {
            let first = col.iter().find_map(|r| r.as_ref().err().cloned()).unwrap();
            return Err(McError::ExcessFailures {
                estimator: est.name().into(),
                failures,
                reps: cfg.reps,
                first,
            });
        }
    }

    let true_or = cfg.scenario.scenario.true_ors(&cfg.scenario.ors);
    let n_comp = cfg.scenario.n_arms() - 1;
    let mut rows = Vec::with_capacity(n_est * n_comp);
    let mut mse = vec![vec![0.0f64; n_comp]; n_est];
    for (ei, (est, col)) in cfg.estimators.iter().zip(&fits).enumerate() {
        let ok: Vec<&RepFit> = col.iter().filter_map(|r| r.as_ref().ok()).collect();
        let failures = (col.len() - ok.len()) as u64;
        for comp in 0..n_comp {
            let truth_beta = true_or[comp].ln();
            let ors: Vec<f64> = ok.iter().map(|f| f.beta[comp].exp()).collect();
            let or_ses: Vec<f64> = ok.iter().map(|f| f.beta[comp].exp() * f.se[comp]).collect();
            let covered = ok
                .iter()
                .filter(|f| (f.beta[comp] - truth_beta).abs() <= Z_975 * f.se[comp])
                .count();
            let rejects = ok
                .iter()
                .filter(|f| (f.beta[comp] / f.se[comp]).abs() > Z_975)
                .count();
            mse[ei][comp] = mean(
                &ors.iter().map(|o| (o - true_or[comp]) * (o - true_or[comp])).collect::<Vec<_>>(),
            );
            rows.push(McRow {
                estimator: est.name().into(),
                component: comp + 1,
                replicates: ok.len() as u64,
                failures,
                mc_mean: mean(&ors),
                mc_median: median(&ors),
                mc_sd: sample_sd(&ors),
                ave_se: mean(&or_ses),
                coverage: (ok.len() >= 2).then(|| covered as f64 / ok.len() as f64),
                mse_ratio: None,
                reject_rate: rejects as f64 / ok.len() as f64,
            });
        }
    }
    if let Some(ri) = cfg.estimators.iter().position(|e| *e == cfg.reference) {
        for (ei, _) in cfg.estimators.iter().enumerate() {
            for comp in 0..n_comp {
                rows[ei * n_comp + comp].mse_ratio = Some(mse[ei][comp] / mse[ri][comp]);
            }
        }
    }

    Ok(McDetail {
        summary: McSummary {
            config: config_echo(cfg),
            true_or,
            reference: cfg.reference.name().into(),
            rows,
        },
        fits,
    })
}

/// Run the experiment.
pub fn run_mc(cfg: &McConfig) -> Result<McSummary, McError> {
    run_mc_detail(cfg).map(|d| d.summary)
}
