//! Command-line front end. Every invocation writes exactly one JSON document
//! to stdout; logs and error text go to stderr.
//!
//! Exit codes: 0 success, 2 usage or invalid parameter, 3 I/O or malformed
//! input, 4 numeric failure (singular matrices, diverging routines).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibration::{calibrate, CalibrationResult};
use crate::design::{generate_gaussian_design, load_csv, read_design_csv, Dataset};
use crate::error::Error;
use crate::experiments::{
    run_detection_edge, run_efficiency, run_oracle_rates, run_rate_sweep, run_variable_selection, DesignSource,
    Report, ScenarioConfig,
};
use crate::noise::{FisherMethod, NoiseModel};
use crate::rng::{child_seed, stream};
use crate::solver::{fit_exp_lasso_at, resolve_lambda, FitConfig, Lambda};

pub const SCHEMA: &str = "explasso/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "explasso", version, about = "Pivotal exp-Lasso for sparse location-scale regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo quantile of λ* for a design.
    Calibrate(CalibrateArgs),
    /// Fit the exp-Lasso to a CSV dataset.
    Fit(FitArgs),
    /// Run a replicated simulation study.
    Simulate(SimulateArgs),
    /// Fisher information of a noise model at (0, 1).
    Fisher(FisherArgs),
    /// Design diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV design file (a `y` column, if present, is ignored).
    #[arg(long, conflicts_with_all = ["n", "p"])]
    pub design: Option<PathBuf>,
    /// Rows of a generated Gaussian design.
    #[arg(long, requires = "p")]
    pub n: Option<usize>,
    /// Columns of a generated Gaussian design.
    #[arg(long, requires = "n")]
    pub p: Option<usize>,
    #[arg(long, default_value = "gaussian")]
    pub model: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Do not add an unpenalized intercept column.
    #[arg(long)]
    pub no_intercept: bool,
    /// Write the sorted λ* samples to this CSV file.
    #[arg(long)]
    pub dump_samples: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with a `y` column and predictor columns.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "gaussian")]
    pub model: String,
    /// A positive value, or `auto` to calibrate.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    #[arg(long)]
    pub no_intercept: bool,
    /// Comma-separated predictor names or 0-based indices left unpenalized.
    #[arg(long, value_delimiter = ',')]
    pub unpenalized: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Calibration replications when `--lambda auto`.
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_kkt: f64,
    #[arg(long, default_value_t = 200)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Rates,
    Edge,
    Select,
    Efficiency,
}

impl Study {
    fn name(self) -> &'static str {
        match self {
            Study::Rates => "rates",
            Study::Edge => "edge",
            Study::Select => "select",
            Study::Efficiency => "efficiency",
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub study: Study,
    /// Flat `key = value` scenario file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub s_star: Option<usize>,
    #[arg(long)]
    pub beta_magnitude: Option<f64>,
    #[arg(long)]
    pub sigma_star: Option<f64>,
    #[arg(long)]
    pub intercept: Option<f64>,
    #[arg(long)]
    pub model: Option<String>,
    /// `gaussian`, `orthogonal` or a CSV design file.
    #[arg(long)]
    pub design: Option<String>,
    /// Number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub calibration_reps: Option<usize>,
    #[arg(long)]
    pub redraw_design: bool,
    /// Edge study: multiples of the calibrated quantile (comma-separated).
    #[arg(long)]
    pub multipliers: Option<String>,
    /// Rates study: sample sizes for the rate sweep (comma-separated).
    #[arg(long)]
    pub n_grid: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FisherMethodArg {
    Analytic,
    Quadrature,
}

#[derive(Debug, Args)]
pub struct FisherArgs {
    #[arg(long, default_value = "gaussian")]
    pub model: String,
    #[arg(long, value_enum, default_value = "quadrature")]
    pub method: FisherMethodArg,
    /// Also report a Monte Carlo plug-in estimate from this many draws.
    #[arg(long)]
    pub mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// CSV design (a `y` column, if present, is ignored).
    #[arg(long)]
    pub data: PathBuf,
    /// Active set as comma-separated predictor names or 0-based indices.
    #[arg(long, value_delimiter = ',')]
    pub active: Vec<String>,
    /// CSV matrix (with header) of the reference covariance.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Cone parameter of the restricted-eigenvalue proxy.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 200)]
    pub re_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parameter(_) | Error::Domain(_) | Error::Dimension(_) => EXIT_USAGE,
            Error::Io(_) | Error::Parse { .. } | Error::Schema(_) => EXIT_IO,
            Error::Rank(_) | Error::Numeric(_) => EXIT_NUMERIC,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: msg.into() }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the command and writes
/// the JSON result to `out`. Returns the exit code.
pub fn run<I, T, W>(args: I, out: &mut W, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fisher(a) => cmd_fisher(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    };
    match result {
        Ok(mut doc) => {
            doc.as_object_mut().expect("json object").insert("schema".into(), json!(SCHEMA));
            match serde_json::to_writer_pretty(&mut *out, &doc) {
                Ok(()) => {
                    let _ = writeln!(out);
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: cannot write output: {e}");
                    EXIT_IO
                }
            }
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn parse_model(s: &str) -> CliResult<NoiseModel> {
    s.parse::<NoiseModel>().map_err(Failure::from)
}

fn check_alpha_eta(alpha: f64, eta: f64) -> CliResult<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(usage(format!("--alpha must lie in (0, 1/2] (got {alpha})")));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(usage(format!("--eta must lie in [0, 1) (got {eta})")));
    }
    Ok(())
}

fn check_reps(reps: usize) -> CliResult<()> {
    if reps < crate::calibration::MIN_REPS {
        return Err(usage(format!(
            "--reps must be at least {} (got {reps})",
            crate::calibration::MIN_REPS
        )));
    }
    Ok(())
}

fn calibration_json(c: &CalibrationResult) -> Value {
    json!({
        "quantile": c.quantile,
        "lambda": c.lambda,
        "alpha": c.alpha,
        "eta": c.eta,
        "N": c.n_reps,
        "mc_bracket": [c.mc_bracket.0, c.mc_bracket.1],
        "seed": c.seed,
    })
}

fn read_design(path: &Path) -> CliResult<(DMatrix<f64>, Vec<String>)> {
    let file = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(read_design_csv(file)?)
}

/// Resolves predictor names or 0-based indices.
fn resolve_columns(names: &[String], specs: &[String]) -> CliResult<Vec<usize>> {
    specs
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let s = s.trim();
            if let Some(j) = names.iter().position(|n| n == s) {
                return Ok(j);
            }
            match s.parse::<usize>() {
                Ok(j) if j < names.len() => Ok(j),
                _ => Err(usage(format!("unknown column '{s}'"))),
            }
        })
        .collect()
}

fn cmd_calibrate(a: &CalibrateArgs) -> CliResult<Value> {
    let model = parse_model(&a.model)?;
    check_alpha_eta(a.alpha, a.eta)?;
    check_reps(a.reps)?;
    let raw = match (&a.design, a.n, a.p) {
        (Some(path), _, _) => read_design(path)?.0,
        (None, Some(n), Some(p)) => {
            if n < 2 || p == 0 {
                return Err(usage("--n must be at least 2 and --p at least 1"));
            }
            generate_gaussian_design(n, p, &mut stream(child_seed(a.seed, 0xd5), 0))?
        }
        _ => return Err(usage("give either --design or both --n and --p")),
    };
    let (n, p) = raw.shape();
    let ds = Dataset::new(DVector::zeros(n), raw, None)?;
    let ds = if a.no_intercept { ds } else { ds.with_intercept() };
    let cal = calibrate(ds.x(), ds.penalty_mask(), &model, a.alpha, a.eta, a.reps, a.seed)?;
    if let Some(path) = &a.dump_samples {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
        w.write_record(["lambda_star"]).map_err(|e| io_failure(path, e))?;
        for s in &cal.lambda_star_samples {
            w.write_record([format!("{s:e}")]).map_err(|e| io_failure(path, e))?;
        }
        w.flush().map_err(|e| io_failure(path, e))?;
    }
    let mut doc = calibration_json(&cal);
    let obj = doc.as_object_mut().expect("object");
    obj.insert("model".into(), json!(model.to_string()));
    obj.insert("n".into(), json!(n));
    obj.insert("p".into(), json!(p));
    Ok(doc)
}

fn cmd_fit(a: &FitArgs) -> CliResult<Value> {
    let model = parse_model(&a.model)?;
    check_alpha_eta(a.alpha, a.eta)?;
    let lambda = match a.lambda.trim() {
        "auto" => {
            check_reps(a.reps)?;
            Lambda::Calibrate
        }
        v => match v.parse::<f64>() {
            Ok(l) if l > 0.0 && l.is_finite() => Lambda::Value(l),
            _ => return Err(usage(format!("--lambda must be a positive number or 'auto' (got '{v}')"))),
        },
    };
    if !(a.tol_kkt > 0.0) || a.max_outer == 0 || a.starts == 0 {
        return Err(usage("--tol-kkt must be positive and --max-outer, --starts at least 1"));
    }
    if !a.data.exists() {
        return Err(io_failure(&a.data, "no such file"));
    }
    let ds = load_csv(&a.data)?;
    let unpen = resolve_columns(ds.names(), &a.unpenalized)?;
    let ds = ds.unpenalize(&unpen)?;
    let ds = if a.no_intercept { ds } else { ds.with_intercept() };
    let cfg = FitConfig {
        lambda,
        alpha: a.alpha,
        eta: a.eta,
        tol_kkt: a.tol_kkt,
        max_outer: a.max_outer,
        seed: a.seed,
        calibration_reps: a.reps,
        n_starts: a.starts,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let (lam, cal) = resolve_lambda(&ds, &model, &cfg)?;
    let fit = fit_exp_lasso_at(&ds, &model, &cfg, lam)?;
    if !fit.converged {
        log::warn!("solver did not converge (kkt {:e} > {:e})", fit.kkt_residual, fit.kkt_tolerance);
    }
    let names = ds.names();
    let mut doc = json!({
        "model": model.to_string(),
        "lambda": lam,
        "names": names,
        "beta": fit.beta.as_slice(),
        "sigma": fit.sigma,
        "active_set": fit.active_set.iter().map(|&j| names[j].clone()).collect::<Vec<_>>(),
        "objective": fit.objective,
        "kkt_residual": fit.kkt_residual,
        "kkt_tolerance": fit.kkt_tolerance,
        "converged": fit.converged,
        "degenerate": fit.degenerate,
        "outer_iters": fit.outer_iters,
        "inner_iters": fit.inner_iters,
    });
    let obj = doc.as_object_mut().expect("object");
    if let Some(means) = ds.meta().raw_means {
        // intercept for predictors on their original (uncentered) scale
        let shift: f64 = means.iter().zip(fit.beta.iter().skip(1)).map(|(m, b)| m * b).sum();
        obj.insert("raw_intercept".into(), json!(fit.beta[0] - shift));
    }
    if let Some(c) = cal {
        obj.insert("calibration".into(), calibration_json(&c));
    }
    Ok(doc)
}

const SCENARIO_KEYS: &[&str] = &[
    "n",
    "p",
    "s_star",
    "beta_magnitude",
    "sigma_star",
    "intercept",
    "model",
    "design",
    "replications",
    "alpha",
    "eta",
    "seed",
    "calibration_reps",
    "redraw_design",
    "multipliers",
    "n_grid",
];

/// Reads a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", i + 1));
        };
        let k = k.trim().to_string();
        if !SCENARIO_KEYS.contains(&k.as_str()) {
            return Err(format!("line {}: unknown key '{k}'", i + 1));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> CliResult<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|_| usage(format!("invalid value '{v}' for {key}"))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| usage(format!("invalid entry '{t}' in {key}"))))
        .collect()
}

fn scenario_map(a: &SimulateArgs) -> CliResult<BTreeMap<String, String>> {
    let mut map = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            parse_config(&text).map_err(|m| usage(format!("{}: {m}", path.display())))?
        }
        None => BTreeMap::new(),
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("n", a.n.map(|v| v.to_string()));
    set("p", a.p.map(|v| v.to_string()));
    set("s_star", a.s_star.map(|v| v.to_string()));
    set("beta_magnitude", a.beta_magnitude.map(|v| v.to_string()));
    set("sigma_star", a.sigma_star.map(|v| v.to_string()));
    set("intercept", a.intercept.map(|v| v.to_string()));
    set("model", a.model.clone());
    set("design", a.design.clone());
    set("replications", a.reps.map(|v| v.to_string()));
    set("alpha", a.alpha.map(|v| v.to_string()));
    set("eta", a.eta.map(|v| v.to_string()));
    set("seed", a.seed.map(|v| v.to_string()));
    set("calibration_reps", a.calibration_reps.map(|v| v.to_string()));
    set("redraw_design", a.redraw_design.then(|| "true".to_string()));
    set("multipliers", a.multipliers.clone());
    set("n_grid", a.n_grid.clone());
    Ok(map)
}

fn scenario_from_map(map: &BTreeMap<String, String>) -> CliResult<ScenarioConfig> {
    let d = ScenarioConfig::default();
    let design = match map.get("design").map(String::as_str) {
        None | Some("gaussian") => DesignSource::Gaussian,
        Some("orthogonal") => DesignSource::Orthogonal,
        Some(path) => DesignSource::Fixed(Arc::new(read_design(Path::new(path))?.0)),
    };
    let (n_file, p_file) = match &design {
        DesignSource::Fixed(x) => (Some(x.nrows()), Some(x.ncols())),
        _ => (None, None),
    };
    let cfg = ScenarioConfig {
        n: get(map, "n")?.or(n_file).unwrap_or(d.n),
        p: get(map, "p")?.or(p_file).unwrap_or(d.p),
        s_star: get(map, "s_star")?.unwrap_or(d.s_star),
        beta_magnitude: get(map, "beta_magnitude")?.unwrap_or(d.beta_magnitude),
        sigma_star: get(map, "sigma_star")?.unwrap_or(d.sigma_star),
        intercept: get(map, "intercept")?.unwrap_or(d.intercept),
        model: match map.get("model") {
            Some(m) => parse_model(m)?,
            None => d.model,
        },
        design,
        replications: get(map, "replications")?.unwrap_or(d.replications),
        alpha: get(map, "alpha")?.unwrap_or(d.alpha),
        eta: get(map, "eta")?.unwrap_or(d.eta),
        seed: get(map, "seed")?.unwrap_or(d.seed),
        calibration_reps: get(map, "calibration_reps")?.unwrap_or(d.calibration_reps),
        redraw_design: get(map, "redraw_design")?.unwrap_or(d.redraw_design),
        solver: d.solver,
    };
    check_alpha_eta(cfg.alpha, cfg.eta)?;
    check_reps(cfg.calibration_reps)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_report<R: Report>(rep: &R, out_dir: &Path, extra: Option<Value>) -> CliResult<Value> {
    fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    let records = out_dir.join(format!("{}_records.csv", R::STUDY));
    let summary = out_dir.join(format!("{}_summary.json", R::STUDY));
    let file = fs::File::create(&records).map_err(|e| io_failure(&records, e))?;
    rep.write_records(std::io::BufWriter::new(file)).map_err(|e| io_failure(&records, e))?;
    let mut doc = serde_json::to_value(rep).map_err(|e| usage(e.to_string()))?;
    let obj = doc.as_object_mut().expect("object");
    obj.remove("records");
    obj.insert("study".into(), json!(R::STUDY));
    obj.insert("schema".into(), json!(SCHEMA));
    if let Some(x) = extra {
        obj.insert("sweep".into(), x);
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| usage(e.to_string()))?;
    fs::write(&summary, text + "\n").map_err(|e| io_failure(&summary, e))?;
    let obj = doc.as_object_mut().expect("object");
    obj.insert("records_file".into(), json!(records.display().to_string()));
    obj.insert("summary_file".into(), json!(summary.display().to_string()));
    Ok(doc)
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<Value> {
    let map = scenario_map(a)?;
    let cfg = scenario_from_map(&map)?;
    match a.study {
        Study::Rates => {
            let rep = run_oracle_rates(&cfg)?;
            let sweep = match map.get("n_grid") {
                Some(s) => Some(to_value(&run_rate_sweep(&cfg, &parse_list::<usize>(s, "n_grid")?)?)?),
                None => None,
            };
            write_report(&rep, &a.out, sweep)
        }
        Study::Edge => {
            let multipliers = match map.get("multipliers") {
                Some(s) => parse_list::<f64>(s, "multipliers")?,
                None => vec![0.3, 0.5, 0.7, 0.9, 1.0, 1.0 / (1.0 - cfg.eta)],
            };
            write_report(&run_detection_edge(&cfg, &multipliers)?, &a.out, None)
        }
        Study::Select => write_report(&run_variable_selection(&cfg)?, &a.out, None),
        Study::Efficiency => write_report(&run_efficiency(&cfg)?, &a.out, None),
    }
    .map(|mut v| {
        v.as_object_mut().expect("object").insert("study".into(), json!(a.study.name()));
        v
    })
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| usage(e.to_string()))
}

fn cmd_fisher(a: &FisherArgs) -> CliResult<Value> {
    let model = parse_model(&a.model)?;
    let method = match a.method {
        FisherMethodArg::Analytic => FisherMethod::Analytic,
        FisherMethodArg::Quadrature => FisherMethod::Quadrature,
    };
    let info = model.fisher_info(method)?;
    let mut doc = json!({
        "model": model.to_string(),
        "order": ["scale", "location"],
        "fisher": info.matrix(),
        "inverse": info.inverse()?,
    });
    if let Some(count) = a.mc {
        let mc = model.fisher_monte_carlo(&mut stream(a.seed, 0), count)?;
        doc.as_object_mut().expect("object").insert("monte_carlo".into(), to_value(&mc)?);
    }
    Ok(doc)
}

fn read_reference(path: &Path) -> CliResult<DMatrix<f64>> {
    let file = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(read_design_csv(file)?.0)
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<Value> {
    if !(a.eta > 0.0 && a.eta <= 1.0) {
        return Err(usage(format!("--eta must lie in (0, 1] (got {})", a.eta)));
    }
    let (raw, names) = read_design(&a.data)?;
    let n = raw.nrows();
    let ds = Dataset::new(DVector::zeros(n), raw, None)?.with_names(names)?;
    let mut active = resolve_columns(ds.names(), &a.active)?;
    let ds = if a.no_intercept {
        ds
    } else {
        active.iter_mut().for_each(|j| *j += 1);
        ds.with_intercept()
    };
    let reference = a.reference.as_deref().map(read_reference).transpose()?;
    let diag = ds.diagnostics(reference.as_ref(), (!active.is_empty()).then_some(active.as_slice()))?;
    let re = ds.restricted_eigenvalue_proxy(&active, a.eta, a.re_samples, &mut stream(a.seed, 0))?;
    let mut doc = to_value(&diag)?;
    let obj = doc.as_object_mut().expect("object");
    obj.insert("n".into(), json!(ds.n()));
    obj.insert("p".into(), json!(ds.p()));
    obj.insert("names".into(), json!(ds.names()));
    obj.insert("active_set".into(), json!(active));
    obj.insert("restricted_eigenvalue_proxy".into(), json!(re));
    Ok(doc)
}
