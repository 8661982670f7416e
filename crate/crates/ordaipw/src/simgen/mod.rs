//! Seedable scenario generators producing paired end-of-study and interim
//! datasets from the same subject draws, so benchmark and interim
//! estimators are compared on identical data.
//!
//! Scenarios 1-4 draw a latent uniform pushed through a proportional odds
//! map (6 or 10 categories, effect on or off); Scenario 5 swaps in a
//! proportional hazards map; Scenario 6 builds the outcome prospectively
//! from hospital-discharge and death hazards; K3 is the three-arm version
//! of Scenario 1.

mod subject;

pub use subject::{
    PoDraws, S6Draws, SubjectOutcome, arm_from_uniform, category_of, discharge_path,
    discharge_time, ph_gamma, po_gamma, s6_classify, s6_outcome, to_records,
};

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{FullData, FullRecord, ObservedData, ObservedRecord, TrialMeta};
use crate::error::ConfigError;
use crate::rng::subject_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    K3,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(Scenario::S1),
            "2" => Ok(Scenario::S2),
            "3" => Ok(Scenario::S3),
            "4" => Ok(Scenario::S4),
            "5" => Ok(Scenario::S5),
            "6" => Ok(Scenario::S6),
            "k3" => Ok(Scenario::K3),
            other => Err(ConfigError::Invalid(format!(
                "unknown scenario `{other}` (expected 1-6 or k3)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "1",
            Scenario::S2 => "2",
            Scenario::S3 => "3",
            Scenario::S4 => "4",
            Scenario::S5 => "5",
            Scenario::S6 => "6",
            Scenario::K3 => "k3",
        }
    }

    /// The scenario at its reference size and parameter values.
    pub fn defaults(self) -> ScenarioConfig {
        let cut6 = vec![0.0, 0.12, 0.35, 0.52, 0.62, 0.67, 1.0];
        let cut10 = vec![0.0, 0.06, 0.12, 0.22, 0.31, 0.39, 0.46, 0.52, 0.62, 0.67, 1.0];
        let two_arms = vec![(0.0, 30.0), (20.0, 50.0)];
        let (n, ors, cutpoints, gamma, pi, death_windows) = match self {
            Scenario::S1 => (602, vec![1.5], cut6, 1.5, vec![0.5, 0.5], two_arms),
            Scenario::S2 => (602, vec![1.0], cut6, 1.5, vec![0.5, 0.5], two_arms),
            Scenario::S3 => (602, vec![1.5], cut10, 1.5, vec![0.5, 0.5], two_arms),
            Scenario::S4 => (602, vec![1.0], cut10, 1.5, vec![0.5, 0.5], two_arms),
            Scenario::S5 => (602, Vec::new(), cut6, 1.5, vec![0.5, 0.5], two_arms),
            Scenario::S6 => (602, Vec::new(), cut6, 0.25, vec![0.5, 0.5], two_arms),
            Scenario::K3 => {
                let mut w = two_arms;
                w.push((25.0, 60.0));
                (903, vec![1.5, 1.2], cut6, 1.5, vec![1.0 / 3.0; 3], w)
            }
        };
        ScenarioConfig {
            scenario: self,
            n,
            ors,
            cutpoints,
            gamma,
            zeta: 135.0,
            horizon: 90.0,
            hosp_cut: 0.52,
            death_windows,
            pi,
            ph_exp_xi: 1.315,
            s6: S6Params::default(),
            seed: 0,
        }
    }

    /// The limit each investigational-arm estimate converges to: the
    /// generating odds ratios where the proportional odds model holds, and
    /// the large-sample calibration value where it does not.
    pub fn true_ors(self, ors: &[f64]) -> Vec<f64> {
        match self {
            Scenario::S5 => vec![1.48],
            Scenario::S6 => vec![1.49],
            _ => ors.to_vec(),
        }
    }
}

/// Hazard-model parameters for Scenario 6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S6Params {
    /// Placebo hospital-discharge hazard.
    pub lambda_h0: f64,
    /// Placebo death hazard over the first 40 days.
    pub lambda_d0: f64,
    /// Discharge-day cutpoints separating categories 1/2 and 2/3.
    pub c1: f64,
    pub c2: f64,
    /// Placebo probability of category 4 among subjects hospitalized at
    /// the horizon.
    pub p40: f64,
    /// Log hazard ratio: discharge hazard up, death hazard down.
    pub xi: f64,
}

impl Default for S6Params {
    fn default() -> Self {
        S6Params {
            lambda_h0: 0.0149,
            lambda_d0: 0.0139,
            c1: 9.16,
            c2: 39.19,
            p40: 2.0 / 3.0,
            xi: (1.0 / 0.775f64).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    /// Generating odds ratios per investigational arm (scenarios 1-4, K3).
    pub ors: Vec<f64>,
    /// Latent-scale cutpoints, 0 to 1.
    pub cutpoints: Vec<f64>,
    /// Covariate strength.
    pub gamma: f64,
    /// Censoring horizon: C is uniform on (0, zeta).
    pub zeta: f64,
    /// Outcome determination lag.
    pub horizon: f64,
    /// Latent value below which the subject leaves the hospital early.
    pub hosp_cut: f64,
    /// Death-time window per arm.
    pub death_windows: Vec<(f64, f64)>,
    pub pi: Vec<f64>,
    /// exp(xi) of the Scenario 5 proportional hazards map.
    pub ph_exp_xi: f64,
    pub s6: S6Params,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn n_cats(&self) -> usize {
        self.cutpoints.len() - 1
    }

    pub fn n_arms(&self) -> usize {
        self.pi.len()
    }

    pub fn meta(&self) -> TrialMeta {
        TrialMeta {
            n_cats: self.n_cats(),
            n_arms: self.n_arms(),
            horizon: self.horizon,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Invalid(m));
        if self.n == 0 {
            return err("n must be positive".into());
        }
        if self.cutpoints.len() < 3
            || self.cutpoints[0] != 0.0
            || *self.cutpoints.last().unwrap() != 1.0
            || self.cutpoints.windows(2).any(|w| !(w[1] > w[0]))
        {
            return err("cutpoints must ascend strictly from 0 to 1".into());
        }
        if !(self.horizon > 0.0) || !(self.zeta > self.horizon) {
            return err(format!(
                "censoring horizon zeta = {} must exceed the outcome horizon {}",
                self.zeta, self.horizon
            ));
        }
        if !(self.hosp_cut > 0.0 && self.hosp_cut < 1.0) {
            return err("hospital cutoff must lie in (0,1)".into());
        }
        if self.pi.len() < 2
            || self.pi.iter().any(|&p| !(p > 0.0))
            || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return err("arm probabilities must be positive and sum to 1".into());
        }
        if self.death_windows.len() != self.n_arms()
            || self.death_windows.iter().any(|&(a, b)| !(a >= 0.0 && b > a))
        {
            return err("each arm needs a death window (a, b) with 0 <= a < b".into());
        }
        match self.scenario {
            Scenario::S5 | Scenario::S6 => {
                if !self.ors.is_empty() {
                    return err(format!(
                        "scenario {} does not take odds-ratio overrides",
                        self.scenario.name()
                    ));
                }
            }
            _ => {
                if self.ors.len() != self.n_arms() - 1 || self.ors.iter().any(|&o| !(o > 0.0)) {
                    return err(format!(
                        "scenario {} needs {} positive odds ratio(s)",
                        self.scenario.name(),
                        self.n_arms() - 1
                    ));
                }
            }
        }
        if !(self.ph_exp_xi > 0.0) {
            return err("ph_exp_xi must be positive".into());
        }
        let s6 = &self.s6;
        if !(s6.lambda_h0 > 0.0 && s6.lambda_d0 > 0.0)
            || !(s6.c1 > 0.0 && s6.c2 > s6.c1 && s6.c2 < self.horizon)
            || !(s6.p40 > 0.0 && s6.p40 < 1.0)
            || !s6.xi.is_finite()
        {
            return err("scenario 6 hazard parameters out of range".into());
        }
        Ok(())
    }
}

/// Generate one replicate, streaming each subject's paired records to the
/// caller in subject order.
pub fn generate_with(
    cfg: &ScenarioConfig,
    replicate: u64,
    mut f: impl FnMut(FullRecord, ObservedRecord),
) -> Result<TrialMeta, ConfigError> {
    cfg.validate()?;
    for i in 0..cfg.n {
        let mut rng = subject_rng(cfg.seed, replicate, i as u64);
        let outcome = match cfg.scenario {
            Scenario::S6 => {
                let d = S6Draws {
                    arm: rng.random(),
                    u_h: rng.random(),
                    u_d: rng.random(),
                    u_4: rng.random(),
                    z: StandardNormal.sample(&mut rng),
                    censor: rng.random(),
                };
                s6_outcome(cfg, &d)
            }
            scenario => {
                let d = PoDraws {
                    arm: rng.random(),
                    upsilon: rng.random(),
                    death: rng.random(),
                    z: StandardNormal.sample(&mut rng),
                    censor: rng.random(),
                };
                subject::po_outcome(cfg, &d, scenario == Scenario::S5)
            }
        };
        let (full, obs) = to_records(&outcome, cfg.horizon);
        f(full, obs);
    }
    Ok(cfg.meta())
}

/// Generate one replicate as paired datasets.
pub fn generate(cfg: &ScenarioConfig, replicate: u64) -> Result<(FullData, ObservedData), ConfigError> {
    let mut full = Vec::with_capacity(cfg.n);
    let mut obs = Vec::with_capacity(cfg.n);
    let meta = generate_with(cfg, replicate, |f, o| {
        full.push(f);
        obs.push(o);
    })?;
    Ok((
        FullData { meta, records: full },
        ObservedData { meta, records: obs },
    ))
}
