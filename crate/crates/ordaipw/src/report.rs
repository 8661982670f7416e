//! Rendering of Monte Carlo summaries and single fits.
//!
//! Text mode prints the operating characteristics as rows and the
//! estimators as columns, rounded to three decimals. CSV and JSON keep
//! full precision, and every format carries the effective configuration.

use crate::aipw::EstimateResult;
use crate::error::ConfigError;
use crate::mc::{McRow, McSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(ConfigError::Invalid(format!("unknown format {other:?}"))),
        }
    }
}

type StatAccessor = fn(&McRow) -> Option<f64>;

/// Statistic rows in report order, with accessors into a summary row.
const STATS: [(&str, StatAccessor); 7] = [
    ("MC mean", |r| Some(r.mc_mean)),
    ("MC median", |r| Some(r.mc_median)),
    ("MC SD", |r| r.mc_sd),
    ("Ave MC SE", |r| Some(r.ave_se)),
    ("MC Cov", |r| r.coverage),
    ("MC MSE ratio", |r| r.mse_ratio),
    ("MC pr(reject H0)", |r| Some(r.reject_rate)),
];

pub fn render(summary: &McSummary, format: ReportFormat) -> Result<String, serde_json::Error> {
    Ok(match format {
        ReportFormat::Text => render_text(summary),
        ReportFormat::Csv => render_csv(summary),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(summary)?;
            s.push('\n');
            s
        }
    })
}

fn fmt3(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.3}"),
        None => "NA".to_string(),
    }
}

fn render_text(summary: &McSummary) -> String {
    let mut out = String::new();
    for (k, v) in &summary.config {
        out.push_str(&format!("{k} = {v}\n"));
    }
    let components: Vec<usize> = {
        let mut c: Vec<usize> = summary.rows.iter().map(|r| r.component).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    for &comp in &components {
        let rows: Vec<&McRow> = summary.rows.iter().filter(|r| r.component == comp).collect();
        out.push('\n');
        if components.len() > 1 {
            out.push_str(&format!("arm {comp} vs arm 0 (true OR {:.3}):\n", summary.true_or[comp - 1]));
        } else {
            out.push_str(&format!("true OR {:.3}:\n", summary.true_or[comp - 1]));
        }
        let label_w = STATS.iter().map(|(l, _)| l.len()).max().unwrap().max("replicates".len());
        let col_w: Vec<usize> = rows.iter().map(|r| r.estimator.len().max(6) + 2).collect();
        out.push_str(&format!("{:label_w$}", ""));
        for (r, w) in rows.iter().zip(&col_w) {
            out.push_str(&format!("{:>w$}", r.estimator));
        }
        out.push('\n');
        for (label, get) in STATS {
            out.push_str(&format!("{label:label_w$}"));
            for (r, w) in rows.iter().zip(&col_w) {
                out.push_str(&format!("{:>w$}", fmt3(get(r))));
            }
            out.push('\n');
        }
        for (label, get) in [
            ("replicates", (|r: &McRow| r.replicates) as fn(&McRow) -> u64),
            ("failures", |r| r.failures),
        ] {
            out.push_str(&format!("{label:label_w$}"));
            for (r, w) in rows.iter().zip(&col_w) {
                out.push_str(&format!("{:>w$}", get(r)));
            }
            out.push('\n');
        }
    }
    out
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(summary: &McSummary) -> String {
    let mut out = String::new();
    for (k, v) in &summary.config {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(
        "estimator,component,mc_mean,mc_median,mc_sd,ave_se,coverage,mse_ratio,reject_rate,replicates,failures\n",
    );
    for r in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.estimator,
            r.component,
            r.mc_mean,
            r.mc_median,
            csv_opt(r.mc_sd),
            r.ave_se,
            csv_opt(r.coverage),
            csv_opt(r.mse_ratio),
            r.reject_rate,
            r.replicates,
            r.failures,
        ));
    }
    out
}

/// Render a single fit.
pub fn render_estimate(result: &EstimateResult, format: ReportFormat) -> Result<String, serde_json::Error> {
    Ok(match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(result)?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "method,component,beta,se,or,ci_lower,ci_upper,wald_z,p_value\n",
            );
            for c in 0..result.beta.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    result.method,
                    c + 1,
                    result.beta[c],
                    result.se[c],
                    result.or_point[c],
                    result.ci_lower[c],
                    result.ci_upper[c],
                    result.wald_z[c],
                    result.p_value[c],
                ));
            }
            out
        }
        ReportFormat::Text => {
            let mut out = String::new();
            let d = &result.diagnostics;
            out.push_str(&format!("method: {}\n", result.method));
            out.push_str(&format!(
                "records: {} total, {} complete (censored fraction {:.3})\n",
                d.n, d.n_complete, d.censored_fraction
            ));
            for c in 0..result.beta.len() {
                out.push_str(&format!(
                    "arm {}: OR {:.4} (95% CI {:.4} to {:.4}), beta {:.4}, se {:.4}, z {:.3}, p {:.4}\n",
                    c + 1,
                    result.or_point[c],
                    result.ci_lower[c],
                    result.ci_upper[c],
                    result.beta[c],
                    result.se[c],
                    result.wald_z[c],
                    result.p_value[c],
                ));
            }
            out.push_str(&format!(
                "alpha: {}\n",
                result.alpha.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(", ")
            ));
            out.push_str(&format!(
                "diagnostics: iterations {}, min censoring survival {:.4}, truncated weights {}, dropped design directions {}\n",
                d.iterations, d.min_censoring_survival, d.truncated_weights, d.dropped_directions
            ));
            for w in &d.warnings {
                out.push_str(&format!("warning: {w}\n"));
            }
            out
        }
    })
}
