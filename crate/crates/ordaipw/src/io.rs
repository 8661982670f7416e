//! CSV ingestion and export.
//!
//! Two input files. subjects.csv: id, arm, u, delta, cat (empty when
//! delta = 0), optional ctime, and baseline covariates x1..xp. tdc.csv
//! (optional): id, time, l1..lq, one row per breakpoint of the subject's
//! time-dependent covariate path. Subjects absent from tdc.csv get an
//! all-zero path; ids in tdc.csv that are not in subjects.csv are
//! rejected.

use std::collections::HashMap;
use std::path::Path;

use crate::data::{CovariatePath, ObservedData, ObservedRecord, FullData, TreatmentArm, TrialMeta, Validate};
use crate::error::DataError;

/// Overrides for quantities otherwise inferred from the data.
#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub horizon: Option<f64>,
    pub n_cats: Option<usize>,
    pub n_arms: Option<usize>,
}

fn csv_err(file: &str, e: csv::Error) -> DataError {
    DataError::Csv(format!("{file}: {e}"))
}

fn bad(file: &str, row: usize, msg: impl std::fmt::Display) -> DataError {
    DataError::Csv(format!("{file} row {row}: {msg}"))
}

/// Column indices of a contiguous numbered covariate family `x1..xp`,
/// ordered by covariate number.
fn covariate_columns(file: &str, headers: &csv::StringRecord, prefix: char) -> Result<Vec<usize>, DataError> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if let Some(num) = h.strip_prefix(prefix)
            && !num.is_empty()
            && num.bytes().all(|b| b.is_ascii_digit())
        {
            let k: usize = num
                .parse()
                .map_err(|_| DataError::Csv(format!("{file}: covariate column `{h}` out of range")))?;
            found.push((k, i));
        }
    }
    found.sort_unstable();
    for (pos, &(k, _)) in found.iter().enumerate() {
        if k != pos + 1 {
            return Err(DataError::Csv(format!(
                "{file}: {prefix}-covariate columns must be numbered {prefix}1..{prefix}{} without gaps or repeats",
                found.len()
            )));
        }
    }
    Ok(found.into_iter().map(|(_, i)| i).collect())
}

struct Layout {
    named: HashMap<String, usize>,
    covariates: Vec<usize>,
}

fn layout(file: &str, headers: &csv::StringRecord, required: &[&str], optional: &[&str], prefix: char) -> Result<Layout, DataError> {
    let covariates = covariate_columns(file, headers, prefix)?;
    let mut named = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if covariates.contains(&i) {
            continue;
        }
        if !required.contains(&h) && !optional.contains(&h) {
            return Err(DataError::Csv(format!("{file}: unknown column `{h}`")));
        }
        if named.insert(h.to_string(), i).is_some() {
            return Err(DataError::Csv(format!("{file}: duplicate column `{h}`")));
        }
    }
    for r in required {
        if !named.contains_key(*r) {
            return Err(DataError::Csv(format!("{file}: missing required column `{r}`")));
        }
    }
    Ok(Layout { named, covariates })
}

fn field(rec: &csv::StringRecord, idx: usize) -> &str {
    rec.get(idx).unwrap_or("").trim()
}

fn parse_f64(file: &str, row: usize, name: &str, s: &str) -> Result<f64, DataError> {
    s.parse()
        .map_err(|_| bad(file, row, format!("column {name}: `{s}` is not a number")))
}

fn parse_usize(file: &str, row: usize, name: &str, s: &str) -> Result<usize, DataError> {
    s.parse()
        .map_err(|_| bad(file, row, format!("column {name}: `{s}` is not a nonnegative integer")))
}

/// Read an interim dataset from CSV text.
pub fn read_observed_str(subjects: &str, tdc: Option<&str>, opts: &IngestOptions) -> Result<ObservedData, DataError> {
    const SUBJ: &str = "subjects.csv";
    let mut rdr = csv::Reader::from_reader(subjects.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_err(SUBJ, e))?.clone();
    let lay = layout(SUBJ, &headers, &["id", "arm", "u", "delta", "cat"], &["ctime"], 'x')?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut records: Vec<ObservedRecord> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(SUBJ, e))?;
        let row = i + 2;
        let id = field(&rec, lay.named["id"]).to_string();
        if id.is_empty() {
            return Err(bad(SUBJ, row, "empty id"));
        }
        if ids.insert(id.clone(), i).is_some() {
            return Err(bad(SUBJ, row, format!("duplicate id `{id}`")));
        }
        let arm = parse_usize(SUBJ, row, "arm", field(&rec, lay.named["arm"]))?;
        let u = parse_f64(SUBJ, row, "u", field(&rec, lay.named["u"]))?;
        let delta = match field(&rec, lay.named["delta"]) {
            "0" => false,
            "1" => true,
            other => return Err(bad(SUBJ, row, format!("column delta: `{other}` is not 0 or 1"))),
        };
        let cat_field = field(&rec, lay.named["cat"]);
        let cat = if cat_field.is_empty() {
            None
        } else {
            Some(parse_usize(SUBJ, row, "cat", cat_field)?)
        };
        let ctime = match lay.named.get("ctime").map(|&c| field(&rec, c)) {
            Some(s) if !s.is_empty() => Some(parse_f64(SUBJ, row, "ctime", s)?),
            _ if !delta => Some(u),
            _ => None,
        };
        let x = lay
            .covariates
            .iter()
            .enumerate()
            .map(|(k, &c)| parse_f64(SUBJ, row, &format!("x{}", k + 1), field(&rec, c)))
            .collect::<Result<Vec<f64>, _>>()?;
        records.push(ObservedRecord {
            x,
            arm: TreatmentArm(arm),
            u,
            delta,
            cat,
            path: CovariatePath::empty(),
            ctime,
        });
    }
    if records.is_empty() {
        return Err(DataError::Csv(format!("{SUBJ}: no data rows")));
    }

    attach_paths(tdc, &ids, &mut records)?;

    let n_arms = opts
        .n_arms
        .unwrap_or_else(|| records.iter().map(|r| r.arm.index()).max().unwrap_or(0) + 1);
    let n_cats = match opts.n_cats {
        Some(c) => c,
        None => records
            .iter()
            .filter_map(|r| r.cat)
            .max()
            .ok_or_else(|| DataError::Invalid("cannot infer the category count: no delta = 1 records (pass an explicit override)".into()))?,
    };
    let horizon = match opts.horizon {
        Some(h) => h,
        None => records
            .iter()
            .filter(|r| r.delta && r.cat.is_some_and(|c| c < n_cats))
            .map(|r| r.u)
            .max_by(f64::total_cmp)
            .or_else(|| records.iter().map(|r| r.u).max_by(f64::total_cmp))
            .unwrap_or(f64::NAN),
    };
    let data = ObservedData {
        meta: TrialMeta { n_cats, n_arms, horizon },
        records,
    };
    let violations = data.validate();
    if !violations.is_empty() {
        let shown: Vec<String> = violations.iter().take(3).map(|v| v.to_string()).collect();
        let more = violations.len().saturating_sub(3);
        let tail = if more > 0 { format!(" (and {more} more)") } else { String::new() };
        return Err(DataError::Invalid(format!("{}{}", shown.join("; "), tail)));
    }
    Ok(data)
}

fn attach_paths(tdc: Option<&str>, ids: &HashMap<String, usize>, records: &mut [ObservedRecord]) -> Result<(), DataError> {
    const TDC: &str = "tdc.csv";
    let Some(text) = tdc else { return Ok(()) };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_err(TDC, e))?.clone();
    let lay = layout(TDC, &headers, &["id", "time"], &[], 'l')?;
    let q = lay.covariates.len();

    let mut breakpoints: HashMap<usize, Vec<(f64, Vec<f64>)>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(TDC, e))?;
        let row = i + 2;
        let id = field(&rec, lay.named["id"]);
        let &subject = ids
            .get(id)
            .ok_or_else(|| bad(TDC, row, format!("id `{id}` does not appear in subjects.csv")))?;
        let time = parse_f64(TDC, row, "time", field(&rec, lay.named["time"]))?;
        let l = lay
            .covariates
            .iter()
            .enumerate()
            .map(|(k, &c)| parse_f64(TDC, row, &format!("l{}", k + 1), field(&rec, c)))
            .collect::<Result<Vec<f64>, _>>()?;
        breakpoints.entry(subject).or_default().push((time, l));
    }
    for (i, record) in records.iter_mut().enumerate() {
        let path = match breakpoints.remove(&i) {
            Some(bps) => CovariatePath::new(bps)
                .map_err(|e| DataError::Csv(format!("{TDC}: subject at subjects.csv row {}: {e}", i + 2)))?,
            None => CovariatePath::new(vec![(0.0, vec![0.0; q])]).expect("zero path is valid"),
        };
        record.path = path;
    }
    Ok(())
}

/// Read an interim dataset from files, rejecting non-UTF-8 content.
pub fn read_observed(subjects: &Path, tdc: Option<&Path>, opts: &IngestOptions) -> Result<ObservedData, DataError> {
    let subjects_text = read_utf8(subjects)?;
    let tdc_text = tdc.map(read_utf8).transpose()?;
    read_observed_str(&subjects_text, tdc_text.as_deref(), opts)
}

fn read_utf8(path: &Path) -> Result<String, DataError> {
    let bytes = std::fs::read(path)?;
    String::from_utf8(bytes).map_err(|_| DataError::Csv(format!("{}: not valid UTF-8", path.display())))
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Write subjects.csv. Ids are 1-based row numbers.
pub fn write_subjects_csv<W: std::io::Write>(data: &ObservedData, w: W) -> Result<(), DataError> {
    let p = data.records.first().map_or(0, |r| r.x.len());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "arm".into(), "u".into(), "delta".into(), "cat".into(), "ctime".into()];
    header.extend((1..=p).map(|k| format!("x{k}")));
    wtr.write_record(&header).map_err(|e| csv_err("subjects.csv", e))?;
    for (i, r) in data.records.iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            r.arm.index().to_string(),
            fmt_f64(r.u),
            if r.delta { "1".into() } else { "0".into() },
            r.cat.map(|c| c.to_string()).unwrap_or_default(),
            r.ctime.map(fmt_f64).unwrap_or_default(),
        ];
        row.extend(r.x.iter().map(|&v| fmt_f64(v)));
        wtr.write_record(&row).map_err(|e| csv_err("subjects.csv", e))?;
    }
    wtr.flush().map_err(DataError::Io)?;
    Ok(())
}

/// Write tdc.csv: one row per path breakpoint, same 1-based ids.
pub fn write_tdc_csv<W: std::io::Write>(data: &ObservedData, w: W) -> Result<(), DataError> {
    let q = data.records.first().map_or(0, |r| r.path.dim());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "time".into()];
    header.extend((1..=q).map(|k| format!("l{k}")));
    wtr.write_record(&header).map_err(|e| csv_err("tdc.csv", e))?;
    for (i, r) in data.records.iter().enumerate() {
        for (t, l) in r.path.breakpoints() {
            let mut row = vec![(i + 1).to_string(), fmt_f64(*t)];
            row.extend(l.iter().map(|&v| fmt_f64(v)));
            wtr.write_record(&row).map_err(|e| csv_err("tdc.csv", e))?;
        }
    }
    wtr.flush().map_err(DataError::Io)?;
    Ok(())
}

/// Write the end-of-study records (id, arm, cat, t, x1..xp).
pub fn write_full_csv<W: std::io::Write>(data: &FullData, w: W) -> Result<(), DataError> {
    let p = data.records.first().map_or(0, |r| r.x.len());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "arm".into(), "cat".into(), "t".into()];
    header.extend((1..=p).map(|k| format!("x{k}")));
    wtr.write_record(&header).map_err(|e| csv_err("full.csv", e))?;
    for (i, r) in data.records.iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), r.arm.index().to_string(), r.cat.to_string(), fmt_f64(r.t)];
        row.extend(r.x.iter().map(|&v| fmt_f64(v)));
        wtr.write_record(&row).map_err(|e| csv_err("full.csv", e))?;
    }
    wtr.flush().map_err(DataError::Io)?;
    Ok(())
}
