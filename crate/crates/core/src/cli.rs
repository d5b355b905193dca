//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when flags fail validation, 1 on runtime
//! errors. Every error is written to stderr behind an `ERROR <code>:` prefix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::calibration::{self, BoundTag, CalibrationParams};
use crate::datagen::{gen_dataset, gen_ground_truth, gen_masks, Dataset, NoiseModel, Scenario};
use crate::error::Error;
use crate::experiments::{self, LambdaPolicy, NoiseKind, StudyConfig, StudyResult};
use crate::lowerbound;
use crate::metrics::CheckTag;
use crate::solver::{self, EstimatorConfig, LambdaSpec, StepRule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable supplying the seed when `--seed` is absent.
pub const SEED_ENV: &str = "LRM_SEED";

#[derive(Debug, Parser)]
#[command(name = "lrm", version, about = "Schatten-p penalized trace regression toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Fit the estimator to a dataset.
    Fit(FitArgs),
    /// Prediction-error rate study over a grid of N.
    Rates(StudyArgs),
    /// Coverage of an explicit-constant oracle inequality.
    Coverage(CoverageArgs),
    /// Noise-matrix norm against an effective noise level.
    Noise(NoiseArgs),
    /// Greedy Varshamov-Gilbert packing.
    Pack(PackArgs),
    /// Print an effective noise level.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PFlag {
    Auto,
    Value(f64),
}

fn parse_p(s: &str) -> Result<PFlag, String> {
    if s == "auto" {
        return Ok(PFlag::Auto);
    }
    let p: f64 = s.parse().map_err(|_| format!("expected 'auto' or a number in (0,1], got '{s}'"))?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(format!("p must lie in (0, 1], got {p}"));
    }
    Ok(PFlag::Value(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaFlag {
    Auto(BoundTag),
    Value(f64),
}

fn parse_lambda(s: &str) -> Result<LambdaFlag, String> {
    if let Some(tag) = s.strip_prefix("auto:") {
        return tag.parse().map(LambdaFlag::Auto).map_err(|e: Error| e.to_string());
    }
    let l: f64 = s
        .parse()
        .map_err(|_| format!("expected 'auto:<bound>' or a number, got '{s}'"))?;
    if !(l >= 0.0) || !l.is_finite() {
        return Err(format!("lambda must be >= 0, got {l}"));
    }
    Ok(LambdaFlag::Value(l))
}

fn parse_bound(s: &str) -> Result<BoundTag, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_check(s: &str) -> Result<CheckTag, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<usize, String> {
    s.trim().parse().map_err(|_| format!("bad grid value '{s}'"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NoiseFlag {
    Gaussian,
    Bernstein,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StepFlag {
    Fixed,
    Backtracking,
}

/// Calibration constants shared by several subcommands.
#[derive(Debug, Clone, Args)]
pub struct CalibFlags {
    /// Confidence parameter D.
    #[arg(long = "D")]
    pub d: Option<f64>,
    /// Bernstein constant H.
    #[arg(long = "H")]
    pub h: Option<f64>,
    /// Tropp parameter A (tau6).
    #[arg(long = "A")]
    pub a: Option<f64>,
    /// Light-tail constant B (tau3).
    #[arg(long = "B")]
    pub b: Option<f64>,
    /// Constant theta of tau7.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub c_star: Option<f64>,
    /// Maximal rank-1 restricted eigenvalue; computed from the design when absent.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub s_row: Option<f64>,
    #[arg(long)]
    pub h_row: Option<f64>,
    #[arg(long)]
    pub s_col: Option<f64>,
    #[arg(long)]
    pub h_col: Option<f64>,
    /// Gram quantity of tau6; computed from the design when absent.
    #[arg(long)]
    pub gram: Option<f64>,
}

impl CalibFlags {
    fn params(&self) -> CalibrationParams {
        CalibrationParams {
            d_conf: self.d,
            h: self.h,
            a_conf: self.a,
            b_conf: self.b,
            theta_conf: self.theta,
            c_star: self.c_star,
            phi_max1: self.phi,
            s_row: self.s_row,
            h_row: self.h_row,
            s_col: self.s_col,
            h_col: self.h_col,
            gram_max_cross: self.gram,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
    #[arg(long)]
    pub m: usize,
    #[arg(long = "T")]
    pub t: usize,
    #[arg(long)]
    pub r: usize,
    /// Total observations (a multiple of T for multitask).
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub noise: NoiseFlag,
    #[arg(long = "H")]
    pub h: Option<f64>,
    /// Largest singular value of the ground truth.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_p, default_value = "1")]
    pub p: PFlag,
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: LambdaFlag,
    /// Noise level for calibration; defaults to the dataset's sigma.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    pub calib: CalibFlags,
    #[arg(long, default_value_t = solver::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = solver::DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = solver::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value = "fixed")]
    pub step: StepFlag,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
    #[arg(long)]
    pub m: usize,
    #[arg(long = "T")]
    pub t: usize,
    #[arg(long)]
    pub r: usize,
    /// Comma-separated total observation counts.
    #[arg(long = "N", value_delimiter = ',', value_parser = parse_grid, required = true)]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, value_parser = parse_p, default_value = "1")]
    pub p: PFlag,
    /// Defaults to auto:tau1 for rates and to the matching tau for coverage.
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<LambdaFlag>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub noise: NoiseFlag,
    #[command(flatten)]
    pub calib: CalibFlags,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = solver::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = solver::DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = solver::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value = "backtracking")]
    pub step: StepFlag,
    /// Per-trial CSV; stdout when absent.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
    /// Summary CSV; defaults to `<out>_summary.csv` when `--out` is given.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long, value_parser = parse_check)]
    pub bound: CheckTag,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, value_parser = parse_bound)]
    pub bound: BoundTag,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    #[arg(long)]
    pub n_bits: usize,
    #[arg(long)]
    pub min_dist: usize,
    #[arg(long)]
    pub target: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_parser = parse_bound)]
    pub bound: BoundTag,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long = "T")]
    pub t: usize,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub p: Option<f64>,
    #[command(flatten)]
    pub calib: CalibFlags,
    /// Print lambda instead of tau.
    #[arg(long)]
    pub lambda: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Runtime(e) => e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn parse_and_dispatch(argv: &[String]) -> i32 {
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, env_seed.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}

/// As [`parse_and_dispatch`] with explicit environment seed and streams.
pub fn run(argv: &[String], env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let text = e.to_string();
            let text = text.trim_start_matches("error: ").trim_end();
            let _ = writeln!(err, "ERROR {EXIT_USAGE}: {text}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, env_seed, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "ERROR {}: {}", e.code(), e.message());
            e.code()
        }
    }
}

/// Precedence: flag, then environment, then 0.
fn resolve_seed(flag: Option<u64>, env_seed: Option<&str>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env_seed {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        None => Ok(0),
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Runtime(e.into())),
        None => writeln!(out, "{text}").map_err(|e| CliError::Runtime(e.into())),
    }
}

fn dispatch(cmd: Command, env_seed: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, env_seed, out),
        Command::Fit(a) => cmd_fit(a, env_seed, out),
        Command::Rates(a) => {
            let cfg = study_config(&a, env_seed, LambdaPolicy::Auto(BoundTag::Tau1))?;
            let res = experiments::rate_study(&cfg)?;
            write_study(&a, &res, out)
        }
        Command::Coverage(c) => {
            let default = match c.bound {
                CheckTag::UsrS1 => LambdaPolicy::Auto(BoundTag::Tau2),
                CheckTag::CsS1 => LambdaPolicy::Auto(BoundTag::Tau4),
                _ => LambdaPolicy::Auto(BoundTag::Tau1),
            };
            if !c.bound.is_explicit() {
                return Err(CliError::Usage(format!(
                    "bound {} has no explicit constants; use thm1, usr_s1 or cs_s1",
                    c.bound
                )));
            }
            let cfg = study_config(&c.study, env_seed, default)?;
            let res = experiments::coverage_study(&cfg, c.bound)?;
            write_study(&c.study, &res, out)
        }
        Command::Noise(c) => {
            if !experiments::NOISE_BOUNDS.contains(&c.bound) {
                return Err(CliError::Usage(format!(
                    "noise study supports tau1, tau2, tau4, tau5, tau6, tau_row, tau_col; got {}",
                    c.bound
                )));
            }
            let cfg = study_config(&c.study, env_seed, LambdaPolicy::Auto(c.bound))?;
            let res = experiments::noise_study(&cfg, c.bound)?;
            write_study(&c.study, &res, out)
        }
        Command::Pack(a) => cmd_pack(a, env_seed, out),
        Command::Calibrate(a) => cmd_calibrate(a, out),
    }
}

fn noise_model(kind: NoiseFlag, sigma: f64, h: Option<f64>) -> Result<NoiseModel, CliError> {
    match kind {
        NoiseFlag::None => Ok(NoiseModel::Noiseless),
        NoiseFlag::Gaussian => NoiseModel::gaussian(sigma).map_err(usage),
        NoiseFlag::Bernstein => NoiseModel::bounded_bernstein(sigma, h.unwrap_or(sigma)).map_err(usage),
    }
}

fn cmd_gen(a: GenArgs, env_seed: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed, env_seed)?;
    let noise = noise_model(a.noise, a.sigma, a.h)?;
    if a.m == 0 || a.t == 0 || a.n == 0 {
        return Err(CliError::Usage("m, T and N must be positive".into()));
    }
    if a.r > a.m.min(a.t) {
        return Err(CliError::Usage(format!("r = {} exceeds min(m, T)", a.r)));
    }
    if !(a.scale > 0.0) {
        return Err(CliError::Usage(format!("scale must be positive, got {}", a.scale)));
    }
    let count = match a.scenario {
        Scenario::Cs if a.n > a.m * a.t => {
            return Err(CliError::Usage(format!("CS needs N <= mT = {}", a.m * a.t)));
        }
        Scenario::Multitask { .. } => {
            if !a.n.is_multiple_of(a.t) {
                return Err(CliError::Usage(format!("multitask N = {} is not a multiple of T", a.n)));
            }
            a.n / a.t
        }
        _ => a.n,
    };
    let truth = gen_ground_truth(a.m, a.t, a.r, a.scale, crate::rng::derive_seed(seed, &[0]))?;
    let op = gen_masks(a.scenario, a.m, a.t, count, crate::rng::derive_seed(seed, &[1]))?;
    let data = gen_dataset(truth, op, a.scenario, noise, crate::rng::derive_seed(seed, &[2]))?;
    let mut data = data;
    data.seed = seed;
    emit(out, a.out.as_deref(), &data.to_json()?)
}

fn cmd_fit(a: FitArgs, env_seed: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed, env_seed)?;
    if a.restarts == 0 || !(a.rel_tol > 0.0) || a.max_iters == 0 {
        return Err(CliError::Usage("restarts, rel-tol and max-iters must be positive".into()));
    }
    let text = fs::read_to_string(&a.data).map_err(|e| CliError::Runtime(e.into()))?;
    let data = Dataset::from_json(&text)?;
    let p = match a.p {
        PFlag::Value(p) => p,
        PFlag::Auto => calibration::p_auto(data.n_obs(), data.op.m(), data.op.t())?,
    };
    let lambda = match a.lambda {
        LambdaFlag::Value(l) => LambdaSpec::Explicit(l),
        LambdaFlag::Auto(bound) => {
            let mut params = a.calib.params();
            params.sigma = a.sigma.or(match data.noise.sigma() {
                s if s > 0.0 => Some(s),
                _ => None,
            });
            params.h = params.h.or(data.noise.h());
            params.p = Some(p);
            LambdaSpec::Auto { bound, params }
        }
    };
    let cfg = EstimatorConfig {
        p,
        lambda,
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        restarts: a.restarts,
        step: match a.step {
            StepFlag::Fixed => StepRule::Fixed,
            StepFlag::Backtracking => StepRule::Backtracking {
                beta: solver::DEFAULT_BETA,
                initial: None,
            },
        },
        seed,
        truth_fallback: false,
    };
    let fit = solver::fit(&data, &cfg)?;
    emit(out, a.out.as_deref(), &fit.to_json()?)
}

fn study_config(a: &StudyArgs, env_seed: Option<&str>, default_lambda: LambdaPolicy) -> Result<StudyConfig, CliError> {
    let seed = resolve_seed(a.seed, env_seed)?;
    let mut cfg = StudyConfig::new(a.scenario, a.m, a.t, a.r, a.n_grid.clone(), a.trials);
    match a.p {
        PFlag::Value(p) => cfg.p = p,
        PFlag::Auto => cfg.auto_p = true,
    }
    cfg.lambda = match a.lambda {
        Some(LambdaFlag::Value(l)) => LambdaPolicy::Explicit(l),
        Some(LambdaFlag::Auto(b)) => LambdaPolicy::Auto(b),
        None => default_lambda,
    };
    cfg.sigma = a.sigma;
    cfg.noise = match a.noise {
        NoiseFlag::Gaussian => NoiseKind::Gaussian,
        NoiseFlag::Bernstein => NoiseKind::Bernstein {
            h: a.calib.h.unwrap_or(a.sigma),
        },
        NoiseFlag::None => NoiseKind::None,
    };
    cfg.calibration = a.calib.params();
    cfg.spectral_scale = a.scale;
    cfg.master_seed = seed;
    cfg.jobs = a.jobs;
    cfg.max_iters = a.max_iters;
    cfg.rel_tol = a.rel_tol;
    cfg.restarts = a.restarts;
    cfg.step = match a.step {
        StepFlag::Fixed => StepRule::Fixed,
        StepFlag::Backtracking => StepRule::Backtracking {
            beta: solver::DEFAULT_BETA,
            initial: None,
        },
    };
    cfg.validate().map_err(usage)?;
    if a.r > a.m.min(a.t) {
        return Err(CliError::Usage(format!("r = {} exceeds min(m, T)", a.r)));
    }
    if matches!(a.scenario, Scenario::Cs) && a.n_grid.iter().any(|&n| n > a.m * a.t) {
        return Err(CliError::Usage(format!("CS needs N <= mT = {}", a.m * a.t)));
    }
    if let NoiseKind::Bernstein { h } = cfg.noise {
        NoiseModel::bounded_bernstein(cfg.sigma, h).map_err(usage)?;
    }
    Ok(cfg)
}

fn write_study(a: &StudyArgs, res: &StudyResult, out: &mut dyn Write) -> Result<(), CliError> {
    emit(out, a.out.as_deref(), res.csv_string()?.trim_end())?;
    let summary_path = a.summary.clone().or_else(|| {
        a.out.as_ref().map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            p.with_file_name(format!("{stem}_summary.csv"))
        })
    });
    if let Some(path) = summary_path {
        fs::write(&path, res.summary_csv_string()?).map_err(|e| CliError::Runtime(e.into()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PackFile {
    n_bits: usize,
    min_dist: usize,
    seed: u64,
    codewords: Vec<Vec<u8>>,
}

fn cmd_pack(a: PackArgs, env_seed: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed, env_seed)?;
    if a.n_bits == 0 || a.n_bits > lowerbound::MAX_BITS || a.min_dist == 0 || a.min_dist > a.n_bits {
        return Err(CliError::Usage(format!(
            "need 1 <= min-dist <= n-bits <= {}",
            lowerbound::MAX_BITS
        )));
    }
    let codewords = lowerbound::vg_packing(a.n_bits, a.min_dist, a.target, seed)?;
    let file = PackFile {
        n_bits: a.n_bits,
        min_dist: a.min_dist,
        seed,
        codewords,
    };
    emit(out, a.out.as_deref(), &serde_json::to_string(&file).map_err(Error::from)?)
}

fn cmd_calibrate(a: CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut params = a.calib.params();
    params.sigma = Some(a.sigma);
    params.m = Some(a.m);
    params.t = Some(a.t);
    params.n_obs = Some(a.n);
    params.p = a.p;
    let value = if a.lambda {
        calibration::lambda_auto(a.bound, &params)
    } else {
        calibration::effective_noise(a.bound, &params)
    };
    let value = value.map_err(|e| match e {
        Error::Configuration(_) | Error::InvalidParameter(_) => usage(e),
        other => CliError::Runtime(other),
    })?;
    writeln!(out, "{value}").map_err(|e| CliError::Runtime(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str], env: Option<&str>) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("lrm").chain(args.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(&argv, env, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn calibrate_prints_tau4() {
        let (code, out, _) = run_args(
            &["calibrate", "--bound", "tau4", "--sigma", "1", "--D", "2", "--m", "10", "--T", "10", "--N", "100"],
            None,
        );
        assert_eq!(code, 0);
        assert!(out.starts_with("0.50596"), "{out}");
    }

    #[test]
    fn usage_errors_exit_two() {
        let (code, _, err) = run_args(&["frobnicate"], None);
        assert_eq!(code, 2);
        assert!(err.starts_with("ERROR 2:"));
        let (code, _, err) = run_args(&["calibrate", "--bound", "tau1", "--sigma", "1", "--m", "3", "--T", "3", "--N", "9"], None);
        assert_eq!(code, 2);
        assert!(err.starts_with("ERROR 2:"));
        let (code, _, _) = run_args(&["fit", "--data", "x.json", "--lambda", "auto:nope"], None);
        assert_eq!(code, 2);
        let (code, _, _) = run_args(&["fit", "--data", "x.json", "--lambda", "1", "--p", "1.5"], None);
        assert_eq!(code, 2);
    }

    #[test]
    fn missing_file_is_runtime_error() {
        let (code, _, err) = run_args(&["fit", "--data", "/nonexistent/d.json", "--lambda", "1"], None);
        assert_eq!(code, 1);
        assert!(err.starts_with("ERROR 1:"));
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(5), Some("7")).unwrap(), 5);
        assert_eq!(resolve_seed(None, Some("7")).unwrap(), 7);
        assert_eq!(resolve_seed(None, None).unwrap(), 0);
        assert!(resolve_seed(None, Some("x")).is_err());
    }
}
