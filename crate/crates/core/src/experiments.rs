//! Seeded Monte Carlo studies: prediction-error rates over a grid of sample
//! sizes, coverage of the explicit-constant oracle inequalities and
//! concentration of the noise matrix.
//!
//! Every trial draws its seed from `(master_seed, N index, trial index)`, so
//! the output does not depend on how many worker threads run the trials.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{self, BoundTag, CalibrationParams};
use crate::datagen::{gen_dataset, gen_ground_truth, gen_masks, Dataset, NoiseModel, Scenario};
use crate::densela;
use crate::error::{Error, Result};
use crate::metrics::{self, CheckTag};
use crate::rng::derive_seed;
use crate::sampling::{self, SamplingOperator};
use crate::solver::{self, EstimatorConfig, LambdaSpec, StepRule};

/// Header of the per-trial CSV.
pub const CSV_HEADER: &str =
    "scenario,m,T,r,N,trial,seed,p,lambda,pred_sq,frob_sq,schatten1,rank_hat,bound_id,bound_lhs,bound_rhs,holds,iters,converged";

/// Random starts and tolerance for `φ_max(1)` inside studies.
pub const STUDY_PHI_RESTARTS: usize = 3;
pub const STUDY_PHI_TOL: f64 = 1e-8;
const STUDY_PHI_MAX_ITERS: usize = 200;

/// Noise distribution used by a study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    Gaussian,
    /// Rademacher noise scaled by `σ`, Bernstein constant `H`.
    Bernstein { h: f64 },
    None,
}

/// Penalty weight policy of a study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaPolicy {
    Explicit(f64),
    Auto(BoundTag),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub m: usize,
    pub t: usize,
    pub r: usize,
    /// Total observation counts `N`; for multi-task designs `N/T` per task.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub p: f64,
    /// Replace `p` by `1/ln(N/M)` at every grid point.
    pub auto_p: bool,
    pub lambda: LambdaPolicy,
    pub sigma: f64,
    pub noise: NoiseKind,
    /// Calibration constants (`D`, `H`, `A`, `B`, `ϑ`, …); `σ`, `m`, `T`, `N`,
    /// `p`, `φ_max(1)` are filled per trial.
    pub calibration: CalibrationParams,
    pub spectral_scale: f64,
    pub master_seed: u64,
    pub jobs: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub step: StepRule,
    /// Skip fitting and report `Â = A*`.
    pub oracle_fit: bool,
}

impl StudyConfig {
    pub fn new(scenario: Scenario, m: usize, t: usize, r: usize, n_grid: Vec<usize>, trials: usize) -> Self {
        StudyConfig {
            scenario,
            m,
            t,
            r,
            n_grid,
            trials,
            p: 1.0,
            auto_p: false,
            lambda: LambdaPolicy::Auto(BoundTag::Tau1),
            sigma: 1.0,
            noise: NoiseKind::Gaussian,
            calibration: CalibrationParams::default(),
            spectral_scale: 1.0,
            master_seed: 0,
            jobs: 1,
            max_iters: solver::DEFAULT_MAX_ITERS,
            rel_tol: solver::DEFAULT_REL_TOL,
            restarts: solver::DEFAULT_RESTARTS,
            step: StepRule::Backtracking {
                beta: solver::DEFAULT_BETA,
                initial: None,
            },
            oracle_fit: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("N grid must be nonempty and strictly increasing".into()));
        }
        if self.m == 0 || self.t == 0 {
            return Err(Error::InvalidParameter("m and T must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidParameter("jobs must be >= 1".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.auto_p {
            for &n in &self.n_grid {
                calibration::p_auto(n, self.m, self.t)?;
            }
        } else if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if let Scenario::Multitask { .. } = self.scenario {
            if let Some(n) = self.n_grid.iter().find(|&&n| n % self.t != 0) {
                return Err(Error::InvalidParameter(format!("multi-task N = {n} is not a multiple of T")));
            }
        }
        Ok(())
    }

    pub fn p_for(&self, n_obs: usize) -> Result<f64> {
        if self.auto_p {
            calibration::p_auto(n_obs, self.m, self.t)
        } else {
            Ok(self.p)
        }
    }

    fn noise_model(&self) -> Result<NoiseModel> {
        match self.noise {
            NoiseKind::Gaussian => NoiseModel::gaussian(self.sigma),
            NoiseKind::Bernstein { h } => NoiseModel::bounded_bernstein(self.sigma, h),
            NoiseKind::None => Ok(NoiseModel::Noiseless),
        }
    }

    fn trial_seed(&self, n_index: usize, trial: usize) -> u64 {
        derive_seed(self.master_seed, &[n_index as u64, trial as u64])
    }

    fn masks(&self, n_obs: usize, seed: u64) -> Result<SamplingOperator> {
        let count = match self.scenario {
            Scenario::Multitask { .. } => n_obs / self.t,
            _ => n_obs,
        };
        gen_masks(self.scenario, self.m, self.t, count, seed)
    }

    /// Calibration parameters for one design.
    fn params_for(&self, op: &SamplingOperator, bound: Option<BoundTag>, p: f64) -> Result<CalibrationParams> {
        let mut params = self.calibration.clone();
        params.sigma = Some(self.sigma);
        params.m = Some(op.m());
        params.t = Some(op.t());
        params.n_obs = Some(op.n_obs());
        params.p.get_or_insert(p);
        if let NoiseKind::Bernstein { h } = self.noise {
            params.h.get_or_insert(h);
        }
        if matches!(bound, Some(BoundTag::Tau1 | BoundTag::Thm4i)) && params.phi_max1.is_none() {
            params.phi_max1 = Some(sampling::phi_max1_with(
                op,
                STUDY_PHI_RESTARTS,
                STUDY_PHI_TOL,
                STUDY_PHI_MAX_ITERS,
            )?);
        }
        if bound == Some(BoundTag::Tau6) && params.gram_max_cross.is_none() {
            params.gram_max_cross = Some(calibration::gram_max_cross(op)?);
        }
        Ok(params)
    }
}

/// One trial. Fit-related fields are empty for noise studies and for trials
/// whose solver diverged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub scenario: String,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub p: f64,
    pub lambda: Option<f64>,
    pub pred_sq: Option<f64>,
    pub frob_sq: Option<f64>,
    pub schatten1: Option<f64>,
    pub rank_hat: Option<usize>,
    pub bound_id: String,
    pub bound_lhs: Option<f64>,
    pub bound_rhs: Option<f64>,
    pub holds: Option<bool>,
    pub iters: Option<usize>,
    pub converged: Option<bool>,
    #[serde(skip)]
    pub diverged: bool,
    /// `objective(Â)` and `objective(A*)`.
    #[serde(skip)]
    pub objective_hat: Option<f64>,
    #[serde(skip)]
    pub objective_truth: Option<f64>,
    /// Sides of the basic inequality.
    #[serde(skip)]
    pub basic_lhs: Option<f64>,
    #[serde(skip)]
    pub basic_rhs: Option<f64>,
}

impl StudyRow {
    fn empty(cfg: &StudyConfig, n: usize, trial: usize, seed: u64, bound_id: &str) -> Self {
        StudyRow {
            scenario: cfg.scenario.to_string(),
            m: cfg.m,
            t: cfg.t,
            r: cfg.r,
            n,
            trial,
            seed,
            p: cfg.p,
            lambda: None,
            pred_sq: None,
            frob_sq: None,
            schatten1: None,
            rank_hat: None,
            bound_id: bound_id.to_string(),
            bound_lhs: None,
            bound_rhs: None,
            holds: None,
            iters: None,
            converged: None,
            diverged: false,
            objective_hat: None,
            objective_truth: None,
            basic_lhs: None,
            basic_rhs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub median_pred_sq: Option<f64>,
    pub holds_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub per_n: Vec<SummaryRow>,
    /// Least-squares slope of `ln median pred_sq` against `ln N`.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub summary: Summary,
}

impl StudyResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER.split(','))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// `N,median_pred_sq,holds_rate` rows followed by `slope,<slope>,<stderr>`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.summary.per_n {
            w.serialize(row)?;
        }
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(["slope".to_string(), fmt(self.summary.slope), fmt(self.summary.slope_stderr)])?;
        w.flush()?;
        Ok(())
    }

    pub fn summary_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_summary_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let k = values.len();
    Some(if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    })
}

/// Ordinary least squares slope of `y` on `x` and its standard error.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let stderr = if n > 2 {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let e = b - my - slope * (a - mx);
                e * e
            })
            .sum();
        (ssr / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, stderr))
}

fn summarize(cfg: &StudyConfig, rows: &[StudyRow]) -> Summary {
    let per_n: Vec<SummaryRow> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let mut preds: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && !r.diverged)
                .filter_map(|r| r.pred_sq)
                .collect();
            let verdicts: Vec<bool> = rows.iter().filter(|r| r.n == n).filter_map(|r| r.holds).collect();
            let holds_rate = if verdicts.is_empty() {
                None
            } else {
                Some(verdicts.iter().filter(|&&h| h).count() as f64 / verdicts.len() as f64)
            };
            SummaryRow {
                n,
                median_pred_sq: median(&mut preds),
                holds_rate,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = per_n
        .iter()
        .filter_map(|s| s.median_pred_sq.filter(|v| *v > 0.0).map(|v| ((s.n as f64).ln(), v.ln())))
        .unzip();
    let fit = if xs.len() == per_n.len() { ols_slope(&xs, &ys) } else { None };
    Summary {
        per_n,
        slope: fit.map(|f| f.0),
        slope_stderr: fit.map(|f| f.1),
    }
}

fn run_trials<F>(cfg: &StudyConfig, task: F) -> Result<Vec<StudyRow>>
where
    F: Fn(usize, usize, usize, u64) -> Result<StudyRow> + Sync,
{
    let tasks: Vec<(usize, usize, usize)> = cfg
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| (0..cfg.trials).map(move |trial| (k, n, trial)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
    let mut rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(k, n, trial)| task(k, n, trial, cfg.trial_seed(k, trial)))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by_key(|r| (r.n, r.trial));
    Ok(rows)
}

/// Generates one dataset and fits it, filling the fit columns of `row`.
fn fit_trial(cfg: &StudyConfig, n: usize, seed: u64, check: CheckTag, row: &mut StudyRow) -> Result<()> {
    let truth = gen_ground_truth(cfg.m, cfg.t, cfg.r, cfg.spectral_scale, derive_seed(seed, &[0]))?;
    let op = cfg.masks(n, derive_seed(seed, &[1]))?;
    let data = gen_dataset(truth, op, cfg.scenario, cfg.noise_model()?, derive_seed(seed, &[2]))?;
    let bound = match cfg.lambda {
        LambdaPolicy::Auto(b) => Some(b),
        LambdaPolicy::Explicit(_) => None,
    };
    let p = cfg.p_for(n)?;
    row.p = p;
    let params = cfg.params_for(&data.op, bound, p)?;
    let lambda = match cfg.lambda {
        LambdaPolicy::Explicit(l) => l,
        LambdaPolicy::Auto(b) => calibration::lambda_auto(b, &params)?,
    };
    row.lambda = Some(lambda);

    let fit = if cfg.oracle_fit {
        let a = data.truth.as_ref().expect("generated with truth").a_star.clone();
        solver::FitResult {
            objective: solver::objective(&data, &a, p, lambda)?,
            a_hat: a,
            iterations: 0,
            converged: true,
            lambda_used: lambda,
            objective_trace: Vec::new(),
        }
    } else {
        let est = EstimatorConfig {
            p,
            lambda: LambdaSpec::Explicit(lambda),
            max_iters: cfg.max_iters,
            rel_tol: cfg.rel_tol,
            restarts: cfg.restarts,
            step: cfg.step,
            seed: derive_seed(seed, &[3]),
            truth_fallback: true,
        };
        match solver::fit(&data, &est) {
            Ok(f) => f,
            Err(Error::Divergence { .. }) => {
                row.diverged = true;
                return Ok(());
            }
            Err(e) => return Err(e),
        }
    };
    record_fit(p, &data, &fit, check, &params, row)
}

fn record_fit(
    p: f64,
    data: &Dataset,
    fit: &solver::FitResult,
    check: CheckTag,
    params: &CalibrationParams,
    row: &mut StudyRow,
) -> Result<()> {
    let a_star = &data.truth.as_ref().expect("generated with truth").a_star;
    let diff = fit.a_hat.sub(a_star)?;
    let frob = diff.frobenius_norm();
    row.pred_sq = Some(metrics::prediction_error(&data.op, &fit.a_hat, a_star)?);
    row.frob_sq = Some(frob * frob);
    row.schatten1 = Some(densela::schatten(&diff, 1.0)?);
    row.rank_hat = Some(densela::numerical_rank(&fit.a_hat, metrics::RANK_HAT_TOL)?);
    let bc = metrics::bound_check(check, data, fit, params)?;
    row.bound_lhs = Some(bc.lhs);
    row.bound_rhs = Some(bc.rhs);
    row.holds = bc.holds;
    row.iters = Some(fit.iterations);
    row.converged = Some(fit.converged);
    row.objective_hat = Some(fit.objective);
    row.objective_truth = Some(solver::objective(data, a_star, p, fit.lambda_used)?);
    let (bl, br) = metrics::basic_inequality(data, &fit.a_hat, p, fit.lambda_used)?;
    row.basic_lhs = Some(bl);
    row.basic_rhs = Some(br);
    Ok(())
}

/// Prediction error against `N`; each row also carries the `thm1` check.
pub fn rate_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let rows = run_trials(cfg, |_, n, trial, seed| {
        let mut row = StudyRow::empty(cfg, n, trial, seed, CheckTag::Thm1.as_str());
        fit_trial(cfg, n, seed, CheckTag::Thm1, &mut row)?;
        Ok(row)
    })?;
    let summary = summarize(cfg, &rows);
    Ok(StudyResult { rows, summary })
}

/// Per-trial verdicts of an explicit-constant oracle inequality.
pub fn coverage_study(cfg: &StudyConfig, bound: CheckTag) -> Result<StudyResult> {
    if !bound.is_explicit() {
        return Err(Error::Configuration(format!(
            "bound {bound} has no explicit constants; coverage needs thm1, usr_s1 or cs_s1"
        )));
    }
    cfg.validate()?;
    let rows = run_trials(cfg, |_, n, trial, seed| {
        let mut row = StudyRow::empty(cfg, n, trial, seed, bound.as_str());
        fit_trial(cfg, n, seed, bound, &mut row)?;
        Ok(row)
    })?;
    let summary = summarize(cfg, &rows);
    Ok(StudyResult { rows, summary })
}

/// Tags accepted by [`noise_study`].
pub const NOISE_BOUNDS: [BoundTag; 7] = [
    BoundTag::Tau1,
    BoundTag::Tau2,
    BoundTag::Tau4,
    BoundTag::Tau5,
    BoundTag::Tau6,
    BoundTag::TauRow,
    BoundTag::TauCol,
];

/// `‖N⁻¹ Σ ξ_i X_i‖` against the effective noise level `τ`.
pub fn noise_study(cfg: &StudyConfig, bound: BoundTag) -> Result<StudyResult> {
    if !NOISE_BOUNDS.contains(&bound) {
        return Err(Error::Configuration(format!(
            "noise study supports tau1, tau2, tau4, tau5, tau6, tau_row, tau_col; got {bound}"
        )));
    }
    cfg.validate()?;
    let rows = run_trials(cfg, |_, n, trial, seed| {
        let mut row = StudyRow::empty(cfg, n, trial, seed, bound.as_str());
        let op = cfg.masks(n, derive_seed(seed, &[1]))?;
        let xi = cfg.noise_model()?.sample(op.n_obs(), derive_seed(seed, &[2]));
        row.p = cfg.p_for(n)?;
        let params = cfg.params_for(&op, Some(bound), row.p)?;
        let tau = calibration::effective_noise(bound, &params)?;
        let norm = metrics::noise_matrix_norm(&op, &xi)?;
        row.bound_lhs = Some(norm);
        row.bound_rhs = Some(tau);
        row.holds = Some(norm <= tau);
        Ok(row)
    })?;
    let summary = summarize(cfg, &rows);
    Ok(StudyResult { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_on_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 1.5 * v).collect();
        let (s, e) = ols_slope(&x, &y).unwrap();
        assert!((s + 1.5).abs() < 1e-12);
        assert!(e < 1e-12);
        assert!(ols_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn csv_header_is_exact() {
        let mut cfg = StudyConfig::new(Scenario::Cs, 4, 4, 1, vec![16], 2);
        cfg.lambda = LambdaPolicy::Explicit(0.1);
        let res = rate_study(&cfg).unwrap();
        let csv = res.csv_string().unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().count(), 3);
        let summary = res.summary_csv_string().unwrap();
        assert_eq!(summary.lines().next().unwrap(), "N,median_pred_sq,holds_rate");
        assert!(summary.lines().last().unwrap().starts_with("slope,"));
    }

    #[test]
    fn oracle_fit_always_covers() {
        let mut cfg = StudyConfig::new(Scenario::Usr, 6, 6, 1, vec![60, 120], 3);
        cfg.lambda = LambdaPolicy::Auto(BoundTag::Tau2);
        cfg.noise = NoiseKind::Bernstein { h: 1.0 };
        cfg.oracle_fit = true;
        let res = coverage_study(&cfg, CheckTag::UsrS1).unwrap();
        assert!(res.summary.per_n.iter().all(|s| s.holds_rate == Some(1.0)));
        assert!(coverage_study(&cfg, CheckTag::Thm4i).is_err());
    }

    #[test]
    fn noise_study_rejects_unsupported_bounds() {
        let cfg = StudyConfig::new(Scenario::Cs, 4, 4, 1, vec![16], 2);
        assert!(matches!(noise_study(&cfg, BoundTag::Tau7), Err(Error::Configuration(_))));
        assert!(noise_study(&cfg, BoundTag::Tau4).is_ok());
    }

    #[test]
    fn validation() {
        let cfg = StudyConfig::new(Scenario::Cs, 4, 4, 1, vec![16, 8], 2);
        assert!(cfg.validate().is_err());
        let cfg = StudyConfig::new(Scenario::Multitask { n: 0 }, 4, 4, 1, vec![10], 2);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn noiseless_least_squares_hits_solver_floor() {
        let mut cfg = StudyConfig::new(Scenario::GaussianDense, 4, 4, 2, vec![40, 80], 3);
        cfg.noise = NoiseKind::None;
        cfg.lambda = LambdaPolicy::Explicit(0.0);
        cfg.rel_tol = 1e-15;
        cfg.max_iters = 20_000;
        let res = rate_study(&cfg).unwrap();
        for s in &res.summary.per_n {
            assert!(s.median_pred_sq.unwrap() <= 1e-10, "{:?}", s);
        }
    }

    #[test]
    fn doubling_rank_roughly_doubles_error() {
        let median_at = |r: usize| {
            let mut cfg = StudyConfig::new(Scenario::GaussianDense, 10, 10, r, vec![1000], 15);
            cfg.spectral_scale = 20.0;
            cfg.master_seed = 21;
            rate_study(&cfg).unwrap().summary.per_n[0].median_pred_sq.unwrap()
        };
        let ratio = median_at(4) / median_at(2);
        assert!(ratio > 1.5 && ratio < 3.0, "ratio {ratio}");
    }

    #[test]
    fn medians_decrease_along_grid() {
        let mut cfg = StudyConfig::new(Scenario::GaussianDense, 8, 8, 2, vec![200, 400, 800], 9);
        cfg.spectral_scale = 20.0;
        let res = rate_study(&cfg).unwrap();
        let medians: Vec<f64> = res.summary.per_n.iter().map(|s| s.median_pred_sq.unwrap()).collect();
        assert!(medians.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{medians:?}");
    }

    #[test]
    fn vanishing_noise_always_below_tau() {
        let mut cfg = StudyConfig::new(Scenario::Cs, 6, 6, 1, vec![36], 5);
        cfg.sigma = 1e-12;
        cfg.calibration.d_conf = Some(2.0);
        let res = noise_study(&cfg, BoundTag::Tau4).unwrap();
        assert!(res.rows.iter().all(|r| r.bound_lhs.unwrap() < 1e-10 && r.holds == Some(true)));
    }

    #[test]
    fn parallelism_does_not_change_output() {
        let mut cfg = StudyConfig::new(Scenario::Usr, 6, 5, 1, vec![60, 90], 4);
        cfg.p = 0.6;
        cfg.spectral_scale = 5.0;
        let serial = rate_study(&cfg).unwrap().csv_string().unwrap();
        cfg.jobs = 4;
        assert_eq!(rate_study(&cfg).unwrap().csv_string().unwrap(), serial);
    }
}
