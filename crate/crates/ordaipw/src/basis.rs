//! Augmentation basis: the baseline functions f_m(X) and time-dependent
//! functions h_l(u, X, L(u)) whose linear span approximates the optimal
//! augmentation terms. The constant f_0 = 1 is always implicit and never
//! listed here.

use crate::data::CovariatePath;
use crate::error::ConfigError;

/// One basis function, resolved against the dataset's covariate layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTerm {
    /// Baseline covariate component (zero-based).
    X(usize),
    /// Time-dependent covariate component (zero-based), evaluated at u.
    L(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentationBasis {
    /// f_1..f_M; X terms only.
    pub baseline: Vec<BasisTerm>,
    /// h_1..h_L; X or L terms.
    pub timedep: Vec<BasisTerm>,
}

impl AugmentationBasis {
    /// Default: every baseline component enters f, and both the baseline
    /// and time-dependent components enter h.
    pub fn linear(p: usize, q: usize) -> Self {
        let baseline: Vec<BasisTerm> = (0..p).map(BasisTerm::X).collect();
        let mut timedep = baseline.clone();
        timedep.extend((0..q).map(BasisTerm::L));
        AugmentationBasis { baseline, timedep }
    }

    /// No basis functions beyond the implicit f_0 = 1.
    pub fn none() -> Self {
        AugmentationBasis { baseline: Vec::new(), timedep: Vec::new() }
    }

    /// Parse a basis spec against a dataset with `p` baseline and `q`
    /// time-dependent covariate components.
    ///
    /// Grammar: `linear`, `none`, or semicolon-separated `f=...` / `h=...`
    /// clauses whose values are comma-separated covariate names `x1..xp`
    /// (both clauses) and `l1..lq` (h only). An omitted or empty clause
    /// means no functions of that kind. Example: `f=x1;h=x1,l1,l2`.
    pub fn parse(spec: &str, p: usize, q: usize) -> Result<Self, ConfigError> {
        let spec = spec.trim();
        match spec {
            "linear" => return Ok(Self::linear(p, q)),
            "none" => return Ok(Self::none()),
            _ => {}
        }
        let mut baseline = Vec::new();
        let mut timedep = Vec::new();
        let mut seen_f = false;
        let mut seen_h = false;
        for clause in spec.split(';') {
            let clause = clause.trim();
            if clause.is_empty() {
                continue;
            }
            let (key, value) = clause
                .split_once('=')
                .ok_or_else(|| ConfigError::Invalid(format!("basis clause `{clause}` is not f=... or h=...")))?;
            let (out, allow_l, seen) = match key.trim() {
                "f" => (&mut baseline, false, &mut seen_f),
                "h" => (&mut timedep, true, &mut seen_h),
                other => {
                    return Err(ConfigError::Invalid(format!("unknown basis clause `{other}`")));
                }
            };
            if *seen {
                return Err(ConfigError::Invalid(format!("duplicate basis clause `{}`", key.trim())));
            }
            *seen = true;
            for name in value.split(',') {
                let name = name.trim();
                if name.is_empty() {
                    continue;
                }
                out.push(parse_term(name, p, q, allow_l)?);
            }
        }
        Ok(AugmentationBasis { baseline, timedep })
    }

    /// Evaluate f_m (1-based; m = 0 is the implicit constant).
    pub fn eval_baseline(&self, m: usize, x: &[f64]) -> f64 {
        if m == 0 {
            return 1.0;
        }
        match self.baseline[m - 1] {
            BasisTerm::X(k) => x[k],
            BasisTerm::L(_) => unreachable!("baseline terms are X only"),
        }
    }

    /// Evaluate h_l (1-based) at time u.
    pub fn eval_timedep(&self, l: usize, u: f64, x: &[f64], path: &CovariatePath) -> f64 {
        match self.timedep[l - 1] {
            BasisTerm::X(k) => x[k],
            BasisTerm::L(k) => path.eval(u)[k],
        }
    }

    /// Check every term against a dataset's covariate dimensions.
    pub fn check_dims(&self, p: usize, q: usize) -> Result<(), ConfigError> {
        for (clause, terms) in [("f", &self.baseline), ("h", &self.timedep)] {
            for term in terms {
                match *term {
                    BasisTerm::X(k) if k >= p => {
                        return Err(ConfigError::Invalid(format!(
                            "basis clause {clause} uses x{} but the data has {p} baseline covariates",
                            k + 1
                        )));
                    }
                    BasisTerm::L(k) if k >= q => {
                        return Err(ConfigError::Invalid(format!(
                            "basis clause {clause} uses l{} but the data has {q} time-dependent covariates",
                            k + 1
                        )));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Number of explicit baseline functions M.
    pub fn n_baseline(&self) -> usize {
        self.baseline.len()
    }

    /// Number of time-dependent functions L.
    pub fn n_timedep(&self) -> usize {
        self.timedep.len()
    }

    /// Render back to the `f=...;h=...` grammar accepted by `parse`.
    pub fn spec_string(&self) -> String {
        let render = |terms: &[BasisTerm]| {
            terms
                .iter()
                .map(|t| match *t {
                    BasisTerm::X(k) => format!("x{}", k + 1),
                    BasisTerm::L(k) => format!("l{}", k + 1),
                })
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("f={};h={}", render(&self.baseline), render(&self.timedep))
    }
}

fn parse_term(name: &str, p: usize, q: usize, allow_l: bool) -> Result<BasisTerm, ConfigError> {
    let (kind, idx) = name.split_at(1);
    let k: usize = idx
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("bad covariate name `{name}`")))?;
    if k == 0 {
        return Err(ConfigError::Invalid(format!("covariate names are 1-based, got `{name}`")));
    }
    match kind {
        "x" if k <= p => Ok(BasisTerm::X(k - 1)),
        "x" => Err(ConfigError::Invalid(format!("`{name}` exceeds the {p} baseline covariates"))),
        "l" if !allow_l => Err(ConfigError::Invalid(format!("`{name}`: time-dependent covariates are not allowed in f"))),
        "l" if k <= q => Ok(BasisTerm::L(k - 1)),
        "l" => Err(ConfigError::Invalid(format!("`{name}` exceeds the {q} time-dependent covariates"))),
        _ => Err(ConfigError::Invalid(format!("bad covariate name `{name}`"))),
    }
}
