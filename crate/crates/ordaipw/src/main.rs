//! Command-line front end: Monte Carlo experiments over the built-in
//! scenarios, single-dataset fits from CSV input, and dataset export.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4
//! estimation failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use ordaipw::aipw::{estimate, EstOptions, Mode};
use ordaipw::basis::AugmentationBasis;
use ordaipw::censoring::HazardForm;
use ordaipw::config::load_config;
use ordaipw::error::{ConfigError, DataError, EstError};
use ordaipw::io::{read_observed, write_full_csv, write_subjects_csv, write_tdc_csv, IngestOptions};
use ordaipw::mc::{run_mc, Estimator, McConfig, McError};
use ordaipw::report::{render, render_estimate, ReportFormat};
use ordaipw::simgen::{generate, Scenario, ScenarioConfig, S6Params};

/// Covariate dimensions every scenario dataset carries: one baseline
/// component and a two-component time-dependent path.
const SCENARIO_DIMS: (usize, usize) = (1, 2);

#[derive(Parser)]
#[command(name = "ordaipw", version, about = "Proportional-odds treatment effects from censored time-lagged ordinal outcomes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a Monte Carlo experiment over a built-in scenario.
    Simulate(SimulateArgs),
    /// Fit one estimator to a CSV dataset.
    Fit(FitArgs),
    /// Export one simulated replicate as CSV files.
    ExportScenario(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario: 1-6 or k3.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    reps: Option<u64>,
    /// Subjects per replicate.
    #[arg(long)]
    n: Option<usize>,
    /// Generating odds ratio (two-arm scenarios).
    #[arg(long)]
    or: Option<f64>,
    /// Generating odds ratios per investigational arm (three-arm scenario).
    #[arg(long)]
    or1: Option<f64>,
    #[arg(long)]
    or2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated estimator list, or `all`.
    #[arg(long)]
    estimators: Option<String>,
    /// Augmentation basis spec: `linear`, `none`, or `f=...;h=...`.
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output format: text, csv, or json.
    #[arg(long)]
    format: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    subjects: PathBuf,
    /// Time-dependent covariate file; subjects absent from it get an
    /// all-zero path.
    #[arg(long)]
    tdc: Option<PathBuf>,
    /// Estimator: naive, ninety, ipw, aipw1, aipw2, or full_adj.
    #[arg(long)]
    method: String,
    #[arg(long)]
    basis: Option<String>,
    /// Known randomization probabilities, comma-separated.
    #[arg(long)]
    pi: Option<String>,
    /// Outcome determination lag; inferred from completed records when
    /// omitted.
    #[arg(long)]
    horizon: Option<f64>,
    /// Censoring-hazard form: nelson-aalen or log-survival.
    #[arg(long)]
    hazard: Option<String>,
    /// Clamp extreme weights at the positivity floor instead of erroring.
    #[arg(long)]
    truncate_weights: bool,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Writes <prefix>_subjects.csv, <prefix>_tdc.csv, <prefix>_full.csv.
    #[arg(long)]
    out_prefix: PathBuf,
}

enum CliError {
    Config(ConfigError),
    Data(DataError),
    Est(EstError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Est(EstError::Data(_)) => 3,
            CliError::Est(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Data(e) => e.fmt(f),
            CliError::Est(e) => e.fmt(f),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl From<EstError> for CliError {
    fn from(e: EstError) -> Self {
        CliError::Est(e)
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::Config(c) => CliError::Config(c),
            other => CliError::Est(EstError::Domain(other.to_string())),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(args) => simulate(args),
        Cmd::Fit(args) => fit(args),
        Cmd::ExportScenario(args) => export_scenario(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    ConfigError::Invalid(msg.into()).into()
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| invalid(format!("config key {key}: cannot parse `{v}`")))
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_windows(v: &str) -> Result<Vec<(f64, f64)>, CliError> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| invalid(format!("death_windows entry `{pair}` is not lo:hi")))?;
            Ok((parse_value("death_windows", a.trim())?, parse_value("death_windows", b.trim())?))
        })
        .collect()
}

fn parse_hazard(v: &str) -> Result<HazardForm, CliError> {
    match v {
        "nelson-aalen" => Ok(HazardForm::NelsonAalen),
        "log-survival" => Ok(HazardForm::LogSurvival),
        other => Err(invalid(format!("unknown hazard form {other:?}"))),
    }
}

/// Merge the config file and flags into an experiment, flags winning.
fn merge_simulate(args: &SimulateArgs) -> Result<(McConfig, ReportFormat), CliError> {
    let mut map: BTreeMap<String, String> = match &args.config {
        Some(path) => load_config(path)?,
        None => BTreeMap::new(),
    };
    if args.or.is_some() && (args.or1.is_some() || args.or2.is_some()) {
        return Err(invalid("use --or or --or1/--or2, not both"));
    }
    if args.or1.is_some() != args.or2.is_some() {
        return Err(invalid("--or1 and --or2 must be given together"));
    }
    if let Some(or) = args.or {
        map.insert("ors".into(), or.to_string());
    }
    if let (Some(a), Some(b)) = (args.or1, args.or2) {
        map.insert("ors".into(), format!("{a},{b}"));
    }
    let flag_overrides: [(&str, Option<String>); 8] = [
        ("scenario", args.scenario.clone()),
        ("reps", args.reps.map(|v| v.to_string())),
        ("n", args.n.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("estimators", args.estimators.clone()),
        ("basis", args.basis.clone()),
        ("workers", args.workers.map(|v| v.to_string())),
        ("format", args.format.clone()),
    ];
    for (key, value) in flag_overrides {
        if let Some(v) = value {
            map.insert(key.into(), v);
        }
    }

    let scenario_name = map
        .remove("scenario")
        .ok_or_else(|| invalid("simulate needs --scenario or a config file with scenario ="))?;
    let scenario = Scenario::parse(&scenario_name)?;
    let mut sc: ScenarioConfig = scenario.defaults();
    let mut mc = McConfig::new(sc.clone(), 5000);
    mc.workers = std::thread::available_parallelism().map_or(1, |p| p.get());
    let mut format = ReportFormat::Text;
    let mut s6 = S6Params::default();

    for (key, v) in &map {
        match key.as_str() {
            "n" => sc.n = parse_value(key, v)?,
            "ors" => sc.ors = parse_f64_list(key, v)?,
            "cutpoints" => sc.cutpoints = parse_f64_list(key, v)?,
            "gamma" => sc.gamma = parse_value(key, v)?,
            "zeta" => sc.zeta = parse_value(key, v)?,
            "horizon" => sc.horizon = parse_value(key, v)?,
            "hosp_cut" => sc.hosp_cut = parse_value(key, v)?,
            "death_windows" => sc.death_windows = parse_windows(v)?,
            "pi" => sc.pi = parse_f64_list(key, v)?,
            "ph_exp_xi" => sc.ph_exp_xi = parse_value(key, v)?,
            "s6_lambda_h0" => s6.lambda_h0 = parse_value(key, v)?,
            "s6_lambda_d0" => s6.lambda_d0 = parse_value(key, v)?,
            "s6_c1" => s6.c1 = parse_value(key, v)?,
            "s6_c2" => s6.c2 = parse_value(key, v)?,
            "s6_p40" => s6.p40 = parse_value(key, v)?,
            "s6_xi" => s6.xi = parse_value(key, v)?,
            "seed" => sc.seed = parse_value(key, v)?,
            "reps" => mc.reps = parse_value(key, v)?,
            "estimators" => mc.estimators = Estimator::parse_list(v)?,
            "basis" => {
                mc.opts.basis = match v.as_str() {
                    "linear" => None,
                    spec => Some(AugmentationBasis::parse(spec, SCENARIO_DIMS.0, SCENARIO_DIMS.1)?),
                }
            }
            "hazard" => mc.opts.hazard_form = parse_hazard(v)?,
            "truncate_weights" => mc.opts.truncate_weights = parse_value(key, v)?,
            "workers" => mc.workers = parse_value(key, v)?,
            "format" => format = ReportFormat::parse(v)?,
            "reference" => mc.reference = Estimator::parse(v)?,
            other => return Err(invalid(format!("unknown config key `{other}`"))),
        }
    }
    sc.scenario = scenario;
    sc.s6 = s6;
    mc.scenario = sc;
    Ok((mc, format))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Data(DataError::Io(e))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (mc, format) = merge_simulate(&args)?;
    let summary = run_mc(&mc)?;
    let text = render(&summary, format)
        .map_err(|e| CliError::Est(EstError::Domain(format!("serialization: {e}"))))?;
    write_output(args.out.as_deref(), &text)
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let method = Mode::parse(&args.method.to_lowercase())?;
    let format = match &args.format {
        Some(f) => ReportFormat::parse(f)?,
        None => ReportFormat::Text,
    };
    let ingest = IngestOptions { horizon: args.horizon, ..IngestOptions::default() };
    let data = read_observed(&args.subjects, args.tdc.as_deref(), &ingest)?;
    let p = data.records.first().map_or(0, |r| r.x.len());
    let q = data.records.iter().map(|r| r.path.dim()).max().unwrap_or(0);
    let mut opts = EstOptions {
        truncate_weights: args.truncate_weights,
        ..EstOptions::default()
    };
    if let Some(spec) = &args.basis {
        opts.basis = Some(AugmentationBasis::parse(spec, p, q)?);
    }
    if let Some(pi) = &args.pi {
        opts.pi = Some(parse_f64_list("pi", pi)?);
    }
    if let Some(h) = &args.hazard {
        opts.hazard_form = parse_hazard(h)?;
    }
    let result = estimate(&data, method, &opts)?;
    let text = render_estimate(&result, format)
        .map_err(|e| CliError::Est(EstError::Domain(format!("serialization: {e}"))))?;
    write_output(args.out.as_deref(), &text)
}

fn export_scenario(args: ExportArgs) -> Result<(), CliError> {
    let scenario = Scenario::parse(&args.scenario)?;
    let mut sc = scenario.defaults();
    if let Some(n) = args.n {
        sc.n = n;
    }
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    let (full, obs) = generate(&sc, 0)?;
    let prefix = args.out_prefix.as_os_str().to_string_lossy();
    let io_err = |e: DataError| CliError::Data(e);
    let open = |suffix: &str| -> Result<std::fs::File, CliError> {
        let path = format!("{prefix}_{suffix}.csv");
        std::fs::File::create(&path).map_err(|e| CliError::Data(DataError::Io(e)))
    };
    write_subjects_csv(&obs, open("subjects")?).map_err(io_err)?;
    write_tdc_csv(&obs, open("tdc")?).map_err(io_err)?;
    write_full_csv(&full, open("full")?).map_err(io_err)?;
    Ok(())
}
