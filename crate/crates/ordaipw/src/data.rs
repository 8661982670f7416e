//! Trial data model.
//!
//! An ordinal outcome with categories 1..=c (1 best, c death) is determined
//! for every subject at a fixed lag `horizon` after randomization, except
//! that death (category c) is determined at the death time itself. At an
//! interim analysis a subject's outcome is known only if the outcome
//! determination time precedes the subject's censoring time, giving the
//! observed-data structure `(u, delta, cat if delta = 1, path)` alongside
//! baseline covariates.

use crate::error::DataError;
use serde::{Deserialize, Serialize};

/// Randomized arm, index 0 = control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreatmentArm(pub usize);

impl TreatmentArm {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Piecewise-constant time-dependent covariate path on `[0, u]`.
///
/// Right-continuous step function: evaluation at `u` returns the value at
/// the latest breakpoint with time `<= u`. The first breakpoint must sit at
/// time 0 so the path is defined from randomization onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariatePath {
    breakpoints: Vec<(f64, Vec<f64>)>,
}

impl CovariatePath {
    pub fn new(breakpoints: Vec<(f64, Vec<f64>)>) -> Result<Self, DataError> {
        if breakpoints.is_empty() {
            return Err(DataError::Invalid(
                "covariate path needs a breakpoint at time 0".into(),
            ));
        }
        if breakpoints[0].0 != 0.0 {
            return Err(DataError::Invalid(format!(
                "first path breakpoint at time {}, expected 0",
                breakpoints[0].0
            )));
        }
        let dim = breakpoints[0].1.len();
        for w in breakpoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(DataError::Invalid(
                    "path breakpoint times must be strictly ascending".into(),
                ));
            }
        }
        for (t, v) in &breakpoints {
            if !t.is_finite() || v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                return Err(DataError::Invalid(
                    "path breakpoints must be finite with a common dimension".into(),
                ));
            }
        }
        Ok(Self { breakpoints })
    }

    /// Path with no time-dependent components.
    pub fn empty() -> Self {
        Self {
            breakpoints: vec![(0.0, Vec::new())],
        }
    }

    pub fn dim(&self) -> usize {
        self.breakpoints[0].1.len()
    }

    pub fn breakpoints(&self) -> &[(f64, Vec<f64>)] {
        &self.breakpoints
    }

    /// Value at time `u` (latest breakpoint with time `<= u`).
    pub fn eval(&self, u: f64) -> &[f64] {
        let mut idx = 0;
        for (i, (t, _)) in self.breakpoints.iter().enumerate() {
            if *t <= u {
                idx = i;
            } else {
                break;
            }
        }
        &self.breakpoints[idx].1
    }
}

/// End-of-study record: the outcome category and its determination time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRecord {
    pub x: Vec<f64>,
    pub arm: TreatmentArm,
    /// Outcome category in 1..=c.
    pub cat: usize,
    /// Outcome determination time: `horizon` for cat < c, death time otherwise.
    pub t: f64,
}

/// Interim record: follow-up to `u = min(t, ctime)` with the outcome known
/// only when `delta` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord {
    pub x: Vec<f64>,
    pub arm: TreatmentArm,
    pub u: f64,
    pub delta: bool,
    /// Present exactly when `delta` is set.
    pub cat: Option<usize>,
    /// Covariate history on `[0, u]`.
    pub path: CovariatePath,
    /// Censoring time, known for everyone under administrative censoring.
    /// Required by the horizon subset; `u` already equals it when `delta`
    /// is unset.
    pub ctime: Option<f64>,
}

/// Trial-level constants shared by every record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    /// Number of outcome categories c >= 2.
    pub n_cats: usize,
    /// Number of randomized arms K >= 2.
    pub n_arms: usize,
    /// Outcome determination lag in study time (days).
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullData {
    pub meta: TrialMeta,
    pub records: Vec<FullRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedData {
    pub meta: TrialMeta,
    pub records: Vec<ObservedRecord>,
}

/// A broken dataset invariant, tied to a record when record-level.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub record: Option<usize>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.record {
            Some(i) => write!(f, "record {}: {}", i, self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

fn meta_violations(meta: &TrialMeta, out: &mut Vec<Violation>) {
    if meta.n_cats < 2 {
        out.push(Violation {
            record: None,
            rule: format!("n_cats = {} but at least 2 categories required", meta.n_cats),
        });
    }
    if meta.n_arms < 2 {
        out.push(Violation {
            record: None,
            rule: format!("n_arms = {} but at least 2 arms required", meta.n_arms),
        });
    }
    if !(meta.horizon > 0.0) || !meta.horizon.is_finite() {
        out.push(Violation {
            record: None,
            rule: format!("horizon = {} must be finite and positive", meta.horizon),
        });
    }
}

fn arm_coverage(meta: &TrialMeta, arms: impl Iterator<Item = usize>, out: &mut Vec<Violation>) {
    let mut seen = vec![0usize; meta.n_arms];
    for a in arms {
        if a < meta.n_arms {
            seen[a] += 1;
        }
    }
    for (a, &n) in seen.iter().enumerate() {
        if n == 0 {
            out.push(Violation {
                record: None,
                rule: format!("arm {a} has no records"),
            });
        }
    }
}

pub trait Validate {
    /// Every violated invariant, empty when the dataset is sound.
    fn validate(&self) -> Vec<Violation>;
}

impl Validate for FullData {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        meta_violations(&self.meta, &mut out);
        let xdim = self.records.first().map(|r| r.x.len());
        for (i, r) in self.records.iter().enumerate() {
            let mut push = |rule: String| out.push(Violation { record: Some(i), rule });
            if r.arm.index() >= self.meta.n_arms {
                push(format!("arm index {} out of range", r.arm.index()));
            }
            if r.cat < 1 || r.cat > self.meta.n_cats {
                push(format!("cat {} out of range 1..={}", r.cat, self.meta.n_cats));
            }
            if !(r.t >= 0.0) || !r.t.is_finite() {
                push(format!("t = {} must be finite and nonnegative", r.t));
            }
            if r.cat < self.meta.n_cats && r.t != self.meta.horizon {
                push(format!(
                    "non-death outcome determined at t = {} instead of the horizon {}",
                    r.t, self.meta.horizon
                ));
            }
            if Some(r.x.len()) != xdim {
                push("baseline covariate dimension differs across records".into());
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                push("baseline covariates must be finite".into());
            }
        }
        arm_coverage(&self.meta, self.records.iter().map(|r| r.arm.index()), &mut out);
        out
    }
}

impl Validate for ObservedData {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        meta_violations(&self.meta, &mut out);
        let xdim = self.records.first().map(|r| r.x.len());
        let ldim = self.records.first().map(|r| r.path.dim());
        for (i, r) in self.records.iter().enumerate() {
            let mut push = |rule: String| out.push(Violation { record: Some(i), rule });
            if r.arm.index() >= self.meta.n_arms {
                push(format!("arm index {} out of range", r.arm.index()));
            }
            if !(r.u >= 0.0) || !r.u.is_finite() {
                push(format!("u = {} must be finite and nonnegative", r.u));
            }
            match (r.delta, r.cat) {
                (true, None) => push("delta = 1 record lacks cat".into()),
                (false, Some(_)) => push("delta = 0 record carries cat".into()),
                (true, Some(cat)) => {
                    if cat < 1 || cat > self.meta.n_cats {
                        push(format!("cat {} out of range 1..={}", cat, self.meta.n_cats));
                    } else if cat < self.meta.n_cats && r.u != self.meta.horizon {
                        push(format!(
                            "non-death outcome observed at u = {} instead of the horizon {}",
                            r.u, self.meta.horizon
                        ));
                    }
                }
                (false, None) => {}
            }
            if let Some(ct) = r.ctime {
                if ct.is_nan() || ct < 0.0 {
                    push(format!("ctime = {ct} must be nonnegative"));
                }
                if !r.delta && ct != r.u {
                    push(format!("delta = 0 record has ctime = {ct} differing from u = {}", r.u));
                }
            }
            if Some(r.x.len()) != xdim {
                push("baseline covariate dimension differs across records".into());
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                push("baseline covariates must be finite".into());
            }
            if Some(r.path.dim()) != ldim {
                push("covariate path dimension differs across records".into());
            }
            if let Some((t_last, _)) = r.path.breakpoints().last()
                && *t_last > r.u
            {
                push(format!("path breakpoint at {} lies beyond u = {}", t_last, r.u));
            }
        }
        arm_coverage(&self.meta, self.records.iter().map(|r| r.arm.index()), &mut out);
        out
    }
}

impl FullData {
    /// View the end-of-study data as interim data with no censoring.
    pub fn to_observed(&self) -> ObservedData {
        let records = self
            .records
            .iter()
            .map(|r| ObservedRecord {
                x: r.x.clone(),
                arm: r.arm,
                u: r.t,
                delta: true,
                cat: Some(r.cat),
                path: CovariatePath::empty(),
                ctime: Some(f64::INFINITY),
            })
            .collect();
        ObservedData {
            meta: self.meta,
            records,
        }
    }
}

impl ObservedData {
    /// Reinterpret a fully followed-up dataset as end-of-study data.
    ///
    /// Errors on the first record with `delta = 0`.
    pub fn as_full(&self) -> Result<FullData, DataError> {
        let mut records = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if !r.delta {
                return Err(DataError::Censored(i));
            }
            records.push(FullRecord {
                x: r.x.clone(),
                arm: r.arm,
                cat: r.cat.expect("delta = 1 record carries cat"),
                t: r.u,
            });
        }
        Ok(FullData {
            meta: self.meta,
            records,
        })
    }

    /// Records whose outcome is known at the interim analysis.
    pub fn subset_complete(&self) -> ObservedData {
        ObservedData {
            meta: self.meta,
            records: self.records.iter().filter(|r| r.delta).cloned().collect(),
        }
    }

    /// Records whose censoring time reaches the horizon, so the outcome is
    /// known whatever it is. Requires a censoring time on every record
    /// (administrative censoring).
    pub fn subset_horizon(&self) -> Result<ObservedData, DataError> {
        let mut records = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let ctime = if r.delta {
                r.ctime.ok_or(DataError::CtimeUnavailable(i))?
            } else {
                r.u
            };
            if ctime >= self.meta.horizon {
                records.push(r.clone());
            }
        }
        Ok(ObservedData {
            meta: self.meta,
            records,
        })
    }

    /// Arm/category pairs of the `delta = 1` records.
    pub fn complete_pairs(&self) -> Vec<(usize, usize)> {
        self.records
            .iter()
            .filter(|r| r.delta)
            .map(|r| (r.arm.index(), r.cat.expect("delta = 1 record carries cat")))
            .collect()
    }

    /// Empirical arm frequencies.
    pub fn arm_freqs(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.meta.n_arms];
        for r in &self.records {
            counts[r.arm.index()] += 1;
        }
        let n = self.records.len().max(1) as f64;
        counts.iter().map(|&k| k as f64 / n).collect()
    }
}
