//! Pure per-subject generation rules, separated from the draw plumbing so
//! the classification logic can be tested against hand computations.

use crate::data::{CovariatePath, FullRecord, ObservedRecord, TreatmentArm};
use crate::propodds::expit_raw;

use super::{S6Params, ScenarioConfig};

/// Everything the generators decide about one subject before censoring is
/// applied to the record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectOutcome {
    pub arm: usize,
    pub x: f64,
    pub cat: usize,
    /// Outcome determination time: the horizon unless the subject dies.
    pub t: f64,
    /// Hospital discharge time driving L(u); the horizon when the subject
    /// never leaves alive.
    pub tee: f64,
    /// Censoring time.
    pub c: f64,
}

pub fn arm_from_uniform(u: f64, pi: &[f64]) -> usize {
    let mut cum = 0.0;
    for (a, &p) in pi.iter().enumerate() {
        cum += p;
        if u < cum {
            return a;
        }
    }
    pi.len() - 1
}

/// Latent outcome under the proportional odds map: uniform on the control
/// arm, odds-shifted on investigational arms.
pub fn po_gamma(upsilon: f64, or: f64) -> f64 {
    let w = upsilon / or;
    w / (1.0 - upsilon + w)
}

/// Latent outcome under the proportional hazards map.
pub fn ph_gamma(upsilon: f64, exp_xi: f64) -> f64 {
    1.0 - upsilon.powf(1.0 / exp_xi)
}

/// Category whose cutpoint interval contains gamma.
pub fn category_of(gamma: f64, cutpoints: &[f64]) -> usize {
    let interior = &cutpoints[1..cutpoints.len() - 1];
    1 + interior.partition_point(|&t| t <= gamma)
}

/// Discharge time: scaled time in hospital below the discharge cutoff,
/// the horizon otherwise.
pub fn discharge_time(gamma: f64, hosp_cut: f64, horizon: f64) -> f64 {
    if gamma < hosp_cut {
        horizon * gamma / hosp_cut
    } else {
        horizon
    }
}

/// Draws consumed by every subject of the latent-variable scenarios, in
/// stream order.
#[derive(Debug, Clone, Copy)]
pub struct PoDraws {
    pub arm: f64,
    pub upsilon: f64,
    pub death: f64,
    pub z: f64,
    pub censor: f64,
}

pub fn po_outcome(cfg: &ScenarioConfig, d: &PoDraws, ph: bool) -> SubjectOutcome {
    let arm = arm_from_uniform(d.arm, &cfg.pi);
    let gamma = if ph {
        if arm == 0 { d.upsilon } else { ph_gamma(d.upsilon, cfg.ph_exp_xi) }
    } else {
        let or = if arm == 0 { 1.0 } else { cfg.ors[arm - 1] };
        po_gamma(d.upsilon, or)
    };
    let cat = category_of(gamma, &cfg.cutpoints);
    let t = if cat == cfg.n_cats() {
        let (a, b) = cfg.death_windows[arm];
        a + d.death * (b - a)
    } else {
        cfg.horizon
    };
    SubjectOutcome {
        arm,
        x: cfg.gamma * (d.upsilon - 0.5) + d.z,
        cat,
        t,
        tee: discharge_time(gamma, cfg.hosp_cut, cfg.horizon),
        c: d.censor * cfg.zeta,
    }
}

/// Draws consumed by every subject of the prospective hazard scenario.
#[derive(Debug, Clone, Copy)]
pub struct S6Draws {
    pub arm: f64,
    pub u_h: f64,
    pub u_d: f64,
    pub u_4: f64,
    pub z: f64,
    pub censor: f64,
}

/// Arm-specific classification: death before leaving the hospital (within
/// the 40-day death window) gives the worst category at the death time;
/// discharge is graded against the day cutpoints; still hospitalized at
/// the horizon splits between the two middle categories.
pub fn s6_classify(p: &S6Params, horizon: f64, arm: usize, u_h: f64, u_d: f64, u_4: f64) -> (usize, f64) {
    let scale = if arm == 0 { 1.0 } else { p.xi.exp() };
    let chi_h = -u_h.ln() / (p.lambda_h0 * scale);
    let chi_d = -u_d.ln() / (p.lambda_d0 / scale);
    if chi_d < chi_h.min(40.0) {
        return (6, chi_d);
    }
    if chi_h < p.c1 {
        (1, chi_h)
    } else if chi_h < p.c2 {
        (2, chi_h)
    } else if chi_h < horizon {
        (3, chi_h)
    } else {
        let p4 = if arm == 0 {
            p.p40
        } else {
            expit_raw((p.p40 / (1.0 - p.p40)).ln() + p.xi)
        };
        (if u_4 <= p4 { 4 } else { 5 }, horizon)
    }
}

pub fn s6_outcome(cfg: &ScenarioConfig, d: &S6Draws) -> SubjectOutcome {
    let arm = arm_from_uniform(d.arm, &cfg.pi);
    let p = &cfg.s6;
    let (cat0, t0) = s6_classify(p, cfg.horizon, 0, d.u_h, d.u_d, d.u_4);
    let (cat, t_arm) = if arm == 0 {
        (cat0, t0)
    } else {
        s6_classify(p, cfg.horizon, arm, d.u_h, d.u_d, d.u_4)
    };
    SubjectOutcome {
        arm,
        x: cfg.gamma * (cat0 as f64 - 3.5) + d.z,
        cat,
        t: if cat == 6 { t_arm } else { cfg.horizon },
        tee: if cat <= 3 { t_arm } else { cfg.horizon },
        c: d.censor * cfg.zeta,
    }
}

/// Step path for L(u) = (left hospital by u, days out of hospital by the
/// horizon if discharged), truncated to the observed history [0, u].
pub fn discharge_path(tee: f64, horizon: f64, u: f64) -> CovariatePath {
    let out = vec![1.0, horizon - tee];
    let bps = if tee <= 0.0 {
        vec![(0.0, out)]
    } else if tee < horizon && tee <= u {
        vec![(0.0, vec![0.0, 0.0]), (tee, out)]
    } else {
        vec![(0.0, vec![0.0, 0.0])]
    };
    CovariatePath::new(bps).expect("generated path is valid")
}

/// Apply censoring to one subject, yielding the paired records.
pub fn to_records(o: &SubjectOutcome, horizon: f64) -> (FullRecord, ObservedRecord) {
    let u = o.t.min(o.c);
    let delta = o.t <= o.c;
    let full = FullRecord {
        x: vec![o.x],
        arm: TreatmentArm(o.arm),
        cat: o.cat,
        t: o.t,
    };
    let observed = ObservedRecord {
        x: vec![o.x],
        arm: TreatmentArm(o.arm),
        u,
        delta,
        cat: delta.then_some(o.cat),
        path: discharge_path(o.tee, horizon, u),
        ctime: Some(o.c),
    };
    (full, observed)
}
