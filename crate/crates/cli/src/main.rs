use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cproj::bgg::normality_defect;
use cproj::chart::load_chart;
use cproj::determinants::calibrate_scalar_curvature_constant;
use cproj::models::{from_key, ModelPackage};
use cproj::strata::{label_name, oracle_agreement, stratify, Grid, StratificationReport, StratifyOptions, Tolerances};
use cproj::tractor::Splitting;
use cproj::verify::{box_samples, verify_model, Check, VerifyOptions};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] cproj::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_hypothesis() => 3,
            CliError::Core(cproj::Error::Config(_) | cproj::Error::Parse(_)) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "cproj", version, about = "Verification and curved orbit stratification for c-projective metrizability solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suites and report each check against its tolerance.
    Verify(Common),
    /// Classify a grid into strata and locate the hypersurface.
    Stratify {
        #[command(flatten)]
        common: Common,
        /// Maximum number of hypersurface roots that get CR data (0 = all).
        #[arg(long, default_value_t = 256)]
        cr_limit: usize,
        /// Skip the per-point metrizability residual.
        #[arg(long)]
        no_residuals: bool,
    },
    /// Estimate the determinant / scalar curvature constant.
    Calibrate(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in model, e.g. `cpm:m=2,p=1,q=0` or `flat:m=2,sig=2,0`.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    model: Option<String>,
    /// Chart file (TOML) with polynomial J, Γ and ζ.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Chart box: `min:max` for every axis, or one `min:max` per axis separated by commas.
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: Option<String>,
    /// Grid points per axis: one integer, or one per axis separated by commas.
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long)]
    tol_alg: Option<f64>,
    #[arg(long)]
    tol_num: Option<f64>,
    #[arg(long)]
    tol_eig: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample count for verify and calibrate.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

/// Validated run configuration, echoed into every report.
#[derive(Serialize)]
struct RunConfig {
    command: &'static str,
    model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(rename = "box")]
    bounds: Vec<(f64, f64)>,
    resolution: Vec<usize>,
    tol_alg: f64,
    tol_num: f64,
    tol_eig: f64,
    seed: u64,
    samples: usize,
    format: Format,
    version: &'static str,
}

impl RunConfig {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            alg: self.tol_alg,
            num: self.tol_num,
            eig: self.tol_eig,
        }
    }
}

fn parse_bounds(s: &str, n: usize) -> Result<Vec<(f64, f64)>> {
    let usage = || CliError::Usage(format!("--box: expected `min:max` or {n} comma-separated `min:max`, got `{s}`"));
    let parts: Vec<(f64, f64)> = s
        .split(',')
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(usage)?;
            Ok((a.trim().parse().map_err(|_| usage())?, b.trim().parse().map_err(|_| usage())?))
        })
        .collect::<Result<_>>()?;
    let out = match parts.len() {
        1 => vec![parts[0]; n],
        k if k == n => parts,
        _ => return Err(usage()),
    };
    if out.iter().any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
        return Err(CliError::Usage("--box: every axis needs finite min < max".into()));
    }
    Ok(out)
}

fn parse_resolution(s: &str, n: usize) -> Result<Vec<usize>> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| CliError::Usage(format!("--resolution: `{p}` is not an integer"))))
        .collect::<Result<_>>()?;
    let out = match parts.len() {
        1 => vec![parts[0]; n],
        k if k == n => parts,
        k => return Err(CliError::Usage(format!("--resolution: expected 1 or {n} values, got {k}"))),
    };
    if out.iter().any(|&r| r < 2) {
        return Err(CliError::Usage("--resolution: every axis needs at least 2 points".into()));
    }
    Ok(out)
}

fn positive(name: &str, v: Option<f64>, default: f64) -> Result<f64> {
    match v {
        None => Ok(default),
        Some(t) if t > 0.0 && t.is_finite() => Ok(t),
        Some(t) => Err(CliError::Usage(format!("--{name}: tolerance must be positive, got {t}"))),
    }
}

fn load(common: &Common, command: &'static str) -> Result<(ModelPackage, RunConfig)> {
    let pkg = match (&common.model, &common.input) {
        (Some(key), None) => from_key(key)?,
        (None, Some(path)) => load_chart(&fs::read_to_string(path)?)?,
        _ => return Err(CliError::Usage("give exactly one of --model and --input".into())),
    };
    let n = pkg.geometry.n();
    let bounds = match &common.bounds {
        Some(s) => parse_bounds(s, n)?,
        None => pkg.default_box.clone(),
    };
    let resolution = match &common.resolution {
        Some(s) => parse_resolution(s, n)?,
        None => vec![9; n],
    };
    let d = Tolerances::default();
    let cfg = RunConfig {
        command,
        model: pkg.key.clone(),
        input: common.input.as_ref().map(|p| p.display().to_string()),
        bounds,
        resolution,
        tol_alg: positive("tol-alg", common.tol_alg, d.alg)?,
        tol_num: positive("tol-num", common.tol_num, d.num)?,
        tol_eig: positive("tol-eig", common.tol_eig, d.eig)?,
        seed: common.seed,
        samples: common.samples,
        format: common.format,
        version: env!("CARGO_PKG_VERSION"),
    };
    if cfg.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    Ok((pkg, cfg))
}

fn emit(out: &Option<PathBuf>, body: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => io::stdout().write_all(body)?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    config: &'a RunConfig,
    pass: bool,
    checks: Vec<Check>,
}

fn run_verify(common: &Common) -> Result<bool> {
    let (pkg, cfg) = load(common, "verify")?;
    let opts = VerifyOptions {
        tol: cfg.tolerances(),
        samples: cfg.samples,
        upsilons: 10,
        seed: cfg.seed,
    };
    let checks = verify_model(&pkg, &cfg.bounds, &opts)?;
    let pass = checks.iter().all(|c| c.pass);
    let body = match cfg.format {
        Format::Json => json(&VerifyReport { config: &cfg, pass, checks })?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for c in &checks {
                w.serialize(c)?;
            }
            w.into_inner().map_err(|e| io::Error::other(e.to_string()))?
        }
    };
    emit(&common.out, &body)?;
    Ok(pass)
}

#[derive(Serialize)]
struct StratifyReport<'a> {
    config: &'a RunConfig,
    oracle_agreement: Option<f64>,
    normality_defect: f64,
    #[serde(flatten)]
    report: &'a StratificationReport,
}

fn points_csv(report: &StratificationReport, n: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    header.extend(["label", "p", "q", "r", "tau", "residual"].map(String::from));
    w.write_record(&header)?;
    for r in &report.points {
        let mut row: Vec<String> = r.coords.iter().map(|v| v.to_string()).collect();
        row.push(label_name(r.label).into());
        row.extend([r.signature.p, r.signature.q, r.signature.r].map(|v| v.to_string()));
        row.push(r.tau.to_string());
        row.push(r.residual.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()).into())
}

fn run_stratify(common: &Common, cr_limit: usize, no_residuals: bool) -> Result<bool> {
    let (pkg, cfg) = load(common, "stratify")?;
    let grid = Grid::new(cfg.bounds.clone(), cfg.resolution.clone())?;
    let s = Splitting::new(pkg.geometry.clone());
    let opts = StratifyOptions {
        tol: cfg.tolerances(),
        residuals: !no_residuals,
        cr_limit: (cr_limit > 0).then_some(cr_limit),
        seed: cfg.seed,
        ..Default::default()
    };
    let report = stratify(&pkg.zeta, &s, &grid, &opts)?;
    let agreement = pkg.h_form.as_ref().map(|h| oracle_agreement(&report, h)).transpose()?;
    let sample = box_samples(&cfg.bounds, 64, cfg.seed)?;
    // a ζ that does not solve the equation violates the standing hypothesis
    let normal = normality_defect(&pkg.zeta, &s, &sample, cfg.tol_num).map_err(|e| match e {
        cproj::Error::Precondition(m) => cproj::Error::Hypothesis(m),
        e => e,
    })?;
    let pass = agreement.map_or(true, |a| a == 1.0) && report.summary.separated;
    let body = match cfg.format {
        Format::Json => json(&StratifyReport {
            config: &cfg,
            oracle_agreement: agreement,
            normality_defect: normal,
            report: &report,
        })?,
        Format::Csv => points_csv(&report, pkg.geometry.n())?,
    };
    emit(&common.out, &body)?;
    Ok(pass)
}

#[derive(Serialize)]
struct CalibrateReport<'a> {
    config: &'a RunConfig,
    pass: bool,
    #[serde(flatten)]
    calibration: &'a cproj::determinants::Calibration,
}

fn run_calibrate(common: &Common) -> Result<bool> {
    let (pkg, cfg) = load(common, "calibrate")?;
    let cal = calibrate_scalar_curvature_constant(&pkg, cfg.samples, cfg.seed)?;
    let pass = cal.spread < cfg.tol_num;
    let body = match cfg.format {
        Format::Json => json(&CalibrateReport { config: &cfg, pass, calibration: &cal })?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.serialize(&cal)?;
            w.into_inner().map_err(|e| io::Error::other(e.to_string()))?
        }
    };
    emit(&common.out, &body)?;
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(c) => run_verify(c),
        Command::Stratify {
            common,
            cr_limit,
            no_residuals,
        } => run_stratify(common, *cr_limit, *no_residuals),
        Command::Calibrate(c) => run_calibrate(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cproj: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
