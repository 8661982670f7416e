//! Kaplan-Meier estimation of the censoring distribution and
//! censoring-martingale integrals, per arm.
//!
//! Censoring is the "event" here: a record contributes a censoring event
//! when its outcome is still unknown (`delta = 0`) at `u`. Outcomes at a
//! tied time are treated as happening first, consistent with observing the
//! outcome when `T <= C`; this is what the left-continuous evaluation
//! `Khat(u-)` encodes, and the at-risk set at `u` counts everyone with
//! `U >= u`.

use crate::error::EstError;

/// Default floor under which inverse-probability weights are refused.
pub const POSITIVITY_FLOOR: f64 = 1e-3;

/// Which increments drive the martingale sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HazardForm {
    /// `dN / Y` at each censoring event time; makes per-arm martingale
    /// residuals sum to exactly zero.
    #[default]
    NelsonAalen,
    /// Increments of `-log Khat`; an alternative that trades the exact
    /// zero-sum property for agreement with the product-limit curve.
    LogSurvival,
}

/// Product-limit estimate of the censoring survival `Khat(u) = pr(C > u)`
/// for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeierCurve {
    /// Distinct censoring event times, strictly ascending.
    pub times: Vec<f64>,
    /// `Khat` just after each event time.
    pub survival: Vec<f64>,
    /// Hazard increment at each event time.
    pub hazard: Vec<f64>,
    /// At-risk count `#{U_i >= t_k}` at each event time.
    pub at_risk: Vec<usize>,
    /// Censoring events at each event time.
    pub events: Vec<usize>,
    /// Records the curve was fitted on.
    pub n: usize,
    pub form: HazardForm,
}

/// Fit the censoring curve from one arm's `(u, delta)` records.
pub fn fit_censoring_km(records: &[(f64, bool)], form: HazardForm) -> Result<KaplanMeierCurve, EstError> {
    for &(u, _) in records {
        if !u.is_finite() || u < 0.0 {
            return Err(EstError::Domain(format!("follow-up time {u} must be finite and nonnegative")));
        }
    }
    let n = records.len();
    let mut sorted: Vec<(f64, bool)> = records.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut times = Vec::new();
    let mut survival = Vec::new();
    let mut hazard = Vec::new();
    let mut at_risk = Vec::new();
    let mut events = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut d = 0usize;
        while j < sorted.len() && sorted[j].0 == t {
            if !sorted[j].1 {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            let y = n - i; // everyone with U >= t
            let frac = d as f64 / y as f64;
            let dl = match form {
                HazardForm::NelsonAalen => frac,
                HazardForm::LogSurvival => {
                    if frac < 1.0 {
                        -(1.0 - frac).ln()
                    } else {
                        f64::INFINITY
                    }
                }
            };
            surv *= 1.0 - frac;
            times.push(t);
            survival.push(surv);
            hazard.push(dl);
            at_risk.push(y);
            events.push(d);
        }
        i = j;
    }
    Ok(KaplanMeierCurve {
        times,
        survival,
        hazard,
        at_risk,
        events,
        n,
        form,
    })
}

impl KaplanMeierCurve {
    /// Number of censoring event times preceding or at `u`.
    pub fn events_through(&self, u: f64) -> usize {
        self.times.partition_point(|&t| t <= u)
    }

    /// Left-continuous evaluation `Khat(u-)`: the product over event times
    /// strictly before `u`. A censoring event at `u` itself does not count,
    /// which is the tie rule that processes outcomes first.
    pub fn survival_at(&self, u: f64) -> f64 {
        let idx = self.times.partition_point(|&t| t < u);
        if idx == 0 { 1.0 } else { self.survival[idx - 1] }
    }
}

/// Integral of `integrand` against the estimated censoring martingale of
/// one record: the jump `(1 - delta) integrand(u)` minus the compensator
/// sum over the curve's event times at which the record is at risk.
///
/// With Nelson-Aalen increments these integrals sum to exactly zero over
/// the records the curve was fitted on, for any integrand.
pub fn martingale_integral(
    u: f64,
    delta: bool,
    curve: &KaplanMeierCurve,
    integrand: impl Fn(f64) -> f64,
) -> f64 {
    let jump = if delta { 0.0 } else { integrand(u) };
    let mut comp = 0.0;
    for k in 0..curve.events_through(u) {
        comp += curve.hazard[k] * integrand(curve.times[k]);
    }
    jump - comp
}
