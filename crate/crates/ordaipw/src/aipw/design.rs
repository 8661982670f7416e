//! Augmentation design: treatment-indicator offsets times baseline basis
//! values, and arm-specific censoring-martingale integrals of the centered
//! time-dependent basis.

use nalgebra::DMatrix;

use crate::basis::AugmentationBasis;
use crate::censoring::KaplanMeierCurve;
use crate::data::ObservedRecord;
use crate::error::EstError;

/// Column bookkeeping for the assembled design.
#[derive(Debug, Clone, Copy)]
pub struct DesignLayout {
    pub n_arms: usize,
    /// Baseline basis size M + 1 (the implicit constant included).
    pub n_baseline: usize,
    /// Time-dependent basis size L; zero when the martingale block is off.
    pub n_timedep: usize,
}

impl DesignLayout {
    /// Arms 1..K-1 each get a full set of baseline columns; arm 0 is the
    /// reference and is omitted.
    pub fn baseline_cols(&self) -> usize {
        (self.n_arms - 1) * self.n_baseline
    }

    /// Every arm gets a set of martingale columns.
    pub fn martingale_cols(&self) -> usize {
        self.n_arms * self.n_timedep
    }

    pub fn ncols(&self) -> usize {
        self.baseline_cols() + self.martingale_cols()
    }

    /// Column of `{I(A = a) - pi_a} f_m`, arm `a` in 1..K-1.
    pub fn baseline_col(&self, a: usize, m: usize) -> usize {
        (a - 1) * self.n_baseline + m
    }

    /// Column of the arm-`a` martingale integral of `h_{l0+1}`.
    pub fn martingale_col(&self, a: usize, l0: usize) -> usize {
        self.baseline_cols() + a * self.n_timedep + l0
    }
}

fn baseline_fill(
    records: &[ObservedRecord],
    pi: &[f64],
    basis: &AugmentationBasis,
    design: &mut DMatrix<f64>,
    layout: &DesignLayout,
) -> Result<(), EstError> {
    let mut f = vec![0.0; layout.n_baseline];
    for (i, rec) in records.iter().enumerate() {
        for (m, fm) in f.iter_mut().enumerate() {
            *fm = basis.eval_baseline(m, &rec.x);
            if !fm.is_finite() {
                return Err(EstError::Domain(format!(
                    "non-finite design value in baseline column f_{m}, record {i}"
                )));
            }
        }
        let arm = rec.arm.index();
        for a in 1..layout.n_arms {
            let ind = if arm == a { 1.0 } else { 0.0 };
            for (m, fm) in f.iter().enumerate() {
                design[(i, layout.baseline_col(a, m))] = (ind - pi[a]) * fm;
            }
        }
    }
    Ok(())
}

/// At-risk averages of `h` over one arm at the arm's censoring event times,
/// L x events. `h(l0, u, record)` evaluates the (l0+1)-th basis function.
fn h_averages(
    records: &[ObservedRecord],
    arm: usize,
    curve: &KaplanMeierCurve,
    l: usize,
    h: &impl Fn(usize, f64, &ObservedRecord) -> f64,
) -> Result<DMatrix<f64>, EstError> {
    let ne = curve.times.len();
    let mut mu = DMatrix::zeros(l, ne);
    if ne == 0 {
        return Ok(mu);
    }
    let mut members: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].arm.index() == arm)
        .collect();
    members.sort_by(|&a, &b| records[a].u.total_cmp(&records[b].u));
    let mut p = 0;
    for k in 0..ne {
        let t = curve.times[k];
        while p < members.len() && records[members[p]].u < t {
            p += 1;
        }
        let at_risk = members.len() - p;
        debug_assert_eq!(at_risk, curve.at_risk[k]);
        for l0 in 0..l {
            let mut s = 0.0;
            for &i in &members[p..] {
                let v = h(l0, t, &records[i]);
                if !v.is_finite() {
                    return Err(EstError::Domain(format!(
                        "non-finite design value in martingale column h_{} (arm {arm}), record {i}",
                        l0 + 1
                    )));
                }
                s += v;
            }
            mu[(l0, k)] = s / at_risk as f64;
        }
    }
    Ok(mu)
}

/// Martingale block for an arbitrary time-dependent basis closure; the block
/// has `K * l` columns, zero outside the record's own arm.
fn martingale_fill(
    records: &[ObservedRecord],
    curves: &[KaplanMeierCurve],
    l: usize,
    h: &impl Fn(usize, f64, &ObservedRecord) -> f64,
    design: &mut DMatrix<f64>,
    layout: &DesignLayout,
) -> Result<(), EstError> {
    let mus = curves
        .iter()
        .enumerate()
        .map(|(a, curve)| h_averages(records, a, curve, l, h))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, rec) in records.iter().enumerate() {
        let a = rec.arm.index();
        let curve = &curves[a];
        let mu = &mus[a];
        let e = curve.events_through(rec.u);
        for l0 in 0..l {
            let mut v = 0.0;
            for k in 0..e {
                v -= curve.hazard[k] * (h(l0, curve.times[k], rec) - mu[(l0, k)]);
            }
            if !rec.delta {
                v += h(l0, rec.u, rec) - mu[(l0, e - 1)];
            }
            if !v.is_finite() {
                return Err(EstError::Domain(format!(
                    "non-finite design value in martingale column h_{} (arm {a}), record {i}",
                    l0 + 1
                )));
            }
            design[(i, layout.martingale_col(a, l0))] = v;
        }
    }
    Ok(())
}

/// Assemble the design matrix: the baseline block and, when requested, the
/// martingale block. `curves` may be empty when the martingale block is off.
pub fn build_design(
    records: &[ObservedRecord],
    curves: &[KaplanMeierCurve],
    basis: &AugmentationBasis,
    pi: &[f64],
    with_martingale: bool,
) -> Result<(DMatrix<f64>, DesignLayout), EstError> {
    let layout = DesignLayout {
        n_arms: pi.len(),
        n_baseline: basis.n_baseline() + 1,
        n_timedep: if with_martingale { basis.n_timedep() } else { 0 },
    };
    let mut design = DMatrix::zeros(records.len(), layout.ncols());
    baseline_fill(records, pi, basis, &mut design, &layout)?;
    if layout.n_timedep > 0 {
        let h = |l0: usize, u: f64, rec: &ObservedRecord| {
            basis.eval_timedep(l0 + 1, u, &rec.x, &rec.path)
        };
        martingale_fill(records, curves, layout.n_timedep, &h, &mut design, &layout)?;
    }
    Ok((design, layout))
}
