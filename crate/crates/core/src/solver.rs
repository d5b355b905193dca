//! The Schatten-p penalized least squares estimator
//! `Â ∈ argmin (1/N) Σ (Y_i − tr(X_iᵀA))² + λ‖A‖_{S_p}^p`.
//!
//! With `ỹ = y/√N` the data term is `|ỹ − 𝓛(A)|²`, so proximal gradient runs
//! entirely through the sampling operator. `p = 1` uses accelerated proximal
//! gradient with a momentum reset whenever a step would raise the objective;
//! `p < 1` runs plain proximal gradient from several starting points.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::{self, BoundTag, CalibrationParams};
use crate::datagen::Dataset;
use crate::densela::{self, dot, Matrix};
use crate::error::{dim_mismatch, Error, Result};
use crate::prox::{matrix_prox, matrix_prox_spectrum, ProxParams};
use crate::rng::{derive_seed, rng_from};
use crate::sampling::{self, SamplingOperator};

pub const DEFAULT_MAX_ITERS: usize = 5000;
pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_BETA: f64 = 0.5;

/// Power iterations behind the initial curvature guess of backtracking mode.
const BACKTRACK_POWER_ITERS: usize = 40;
const BACKTRACK_INFLATION: f64 = 1.05;

/// How the penalty weight is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaSpec {
    Explicit(f64),
    /// `λ = 4τ` for the given bound (or its own formula for `thm4i`).
    /// `m`, `T`, `N` and `φ_max(1)` are filled from the data when unset.
    Auto { bound: BoundTag, params: CalibrationParams },
}

/// Step size policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// `1/L_f` with `L_f = 2‖𝓛‖²` from the operator norm.
    Fixed,
    /// Start from `initial` (or a short power-iteration estimate) and divide the
    /// step by `beta` until the quadratic upper model holds.
    Backtracking { beta: f64, initial: Option<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub p: f64,
    pub lambda: LambdaSpec,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub step: StepRule,
    pub seed: u64,
    /// When the data carry ground truth and no start reaches `objective(A*)`,
    /// add a run started at `A*` (p < 1 only).
    pub truth_fallback: bool,
}

impl EstimatorConfig {
    pub fn new(p: f64, lambda: LambdaSpec) -> Self {
        EstimatorConfig {
            p,
            lambda,
            max_iters: DEFAULT_MAX_ITERS,
            rel_tol: DEFAULT_REL_TOL,
            restarts: DEFAULT_RESTARTS,
            step: StepRule::Fixed,
            seed: 0,
            truth_fallback: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if let StepRule::Backtracking { beta, initial } = self.step {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidParameter(format!("backtracking beta must lie in (0, 1), got {beta}")));
            }
            if let Some(l) = initial {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(Error::InvalidParameter(format!("initial curvature must be positive, got {l}")));
                }
            }
        }
        if let LambdaSpec::Explicit(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub a_hat: Matrix,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda_used: f64,
    /// Objective after every accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    a_hat: Matrix,
    objective: f64,
    iterations: usize,
    converged: bool,
    lambda_used: f64,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&FitFile {
            a_hat: self.a_hat.clone(),
            objective: self.objective,
            iterations: self.iterations,
            converged: self.converged,
            lambda_used: self.lambda_used,
        })?)
    }

    /// Reads the JSON form; the trace is not stored and comes back empty.
    pub fn from_json(s: &str) -> Result<Self> {
        let f: FitFile = serde_json::from_str(s)?;
        Ok(FitResult {
            a_hat: f.a_hat,
            objective: f.objective,
            iterations: f.iterations,
            converged: f.converged,
            lambda_used: f.lambda_used,
            objective_trace: Vec::new(),
        })
    }
}

fn check_shape(op: &SamplingOperator, a: &Matrix) -> Result<()> {
    if a.shape() != (op.m(), op.t()) {
        return Err(dim_mismatch(
            format!("{}x{}", op.m(), op.t()),
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    Ok(())
}

/// `(1/N) Σ (Y_i − tr(X_iᵀA))² + λ‖A‖_{S_p}^p`.
pub fn objective(data: &Dataset, a: &Matrix, p: f64, lambda: f64) -> Result<f64> {
    check_shape(&data.op, a)?;
    let fit: f64 = data
        .op
        .masks()
        .iter()
        .zip(&data.y)
        .map(|(mask, y)| {
            let r = y - mask.inner(a);
            r * r
        })
        .sum::<f64>()
        / data.n_obs() as f64;
    let pen = if lambda == 0.0 { 0.0 } else { lambda * densela::schatten_pow(a, p)? };
    Ok(fit + pen)
}

/// `∇f(A) = −2 𝓛*(ỹ − 𝓛(A))`.
pub fn smooth_gradient(data: &Dataset, a: &Matrix) -> Result<Matrix> {
    check_shape(&data.op, a)?;
    let ys = data.scaled_y();
    let la = data.op.apply(a)?;
    let resid: Vec<f64> = ys.iter().zip(&la).map(|(y, l)| y - l).collect();
    let mut g = Matrix::zeros(a.rows(), a.cols());
    data.op.adjoint_into(&resid, -2.0, &mut g);
    Ok(g)
}

/// Resolves the penalty weight for a dataset.
pub fn resolve_lambda(data: &Dataset, spec: &LambdaSpec) -> Result<f64> {
    match spec {
        LambdaSpec::Explicit(l) => Ok(*l),
        LambdaSpec::Auto { bound, params } => {
            let mut params = params.clone();
            if params.sigma.is_none() {
                return Err(Error::Configuration(format!("lambda auto:{bound} needs sigma")));
            }
            params.complete_from(*bound, &data.op, sampling::PHI_RESTARTS)?;
            calibration::lambda_auto(*bound, &params)
        }
    }
}

/// Exact minimizer for a complete point design: the prox of the response
/// matrix `Ŷ` with step `N/2`.
pub fn closed_form_complete(data: &Dataset, p: f64, lambda: f64) -> Result<Matrix> {
    if !data.op.is_complete_design() {
        return Err(Error::InvalidInput("closed form needs each cell observed exactly once".into()));
    }
    let mut y_hat = Matrix::zeros(data.op.m(), data.op.t());
    for ((row, col), y) in data.op.point_cells()?.into_iter().zip(&data.y) {
        y_hat.as_mut_slice()[row * data.op.t() + col] = *y;
    }
    matrix_prox(&y_hat, &ProxParams::new(p, lambda, data.n_obs() as f64 / 2.0)?)
}

struct Problem<'a> {
    op: &'a SamplingOperator,
    ys: Vec<f64>,
    p: f64,
    lambda: f64,
    gram: Option<GramForm<'a>>,
}

/// `f(A) = c − 2⟨b, A⟩ + ⟨A, G A⟩` with `b = 𝓛*ỹ` and `c = |ỹ|²`.
struct GramForm<'a> {
    g: &'a Matrix,
    b: Matrix,
    c: f64,
}

struct Run {
    x: Matrix,
    obj: f64,
    iters: usize,
    converged: bool,
    trace: Vec<f64>,
}

struct Step {
    lf: f64,
    beta: Option<f64>,
}

impl Step {
    fn init(op: &SamplingOperator, rule: StepRule) -> Step {
        match rule {
            StepRule::Fixed => {
                let norm = sampling::operator_norm(op);
                Step {
                    lf: (2.0 * norm * norm).max(f64::MIN_POSITIVE),
                    beta: None,
                }
            }
            StepRule::Backtracking { beta, initial } => {
                let lf = initial.unwrap_or_else(|| {
                    let norm = sampling::operator_norm_with(op, 1e-6, BACKTRACK_POWER_ITERS, 0);
                    2.0 * norm * norm * BACKTRACK_INFLATION
                });
                Step {
                    lf: lf.max(f64::MIN_POSITIVE),
                    beta: Some(beta),
                }
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl<'a> Problem<'a> {
    fn new(op: &'a SamplingOperator, ys: Vec<f64>, p: f64, lambda: f64) -> Result<Self> {
        let gram = match op.design_gram() {
            Some(g) => Some(GramForm {
                g,
                b: op.adjoint(&ys)?,
                c: dot(&ys, &ys),
            }),
            None => None,
        };
        Ok(Problem { op, ys, p, lambda, gram })
    }

    /// Length of the image vectors tracked by [`run`](Self::run).
    fn image_len(&self) -> usize {
        match &self.gram {
            Some(gf) => gf.b.as_slice().len(),
            None => self.ys.len(),
        }
    }

    /// `𝓛x`, or `Gx` in Gram form.
    fn image(&self, x: &Matrix, out: &mut [f64]) {
        match &self.gram {
            Some(gf) => {
                let d = out.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&gf.g.as_slice()[i * d..(i + 1) * d], x.as_slice());
                }
            }
            None => self.op.apply_into(x, out),
        }
    }

    fn smooth(&self, x: &Matrix, img: &[f64]) -> f64 {
        match &self.gram {
            Some(gf) => gf.c - 2.0 * dot(gf.b.as_slice(), x.as_slice()) + dot(x.as_slice(), img),
            None => sq_dist(&self.ys, img),
        }
    }

    fn gradient(&self, img: &[f64], scratch: &mut Vec<f64>, grad: &mut Matrix) {
        match &self.gram {
            Some(gf) => {
                for ((g, b), i) in grad.as_mut_slice().iter_mut().zip(gf.b.as_slice()).zip(img) {
                    *g = -2.0 * (b - i);
                }
            }
            None => {
                scratch.clear();
                scratch.extend(self.ys.iter().zip(img).map(|(a, b)| a - b));
                self.op.adjoint_into(scratch, -2.0, grad);
            }
        }
    }

    /// `|𝓛d|²` for `d = x_new − y`, from the images of both points.
    fn curvature(&self, d: &Matrix, img_new: &[f64], img_y: &[f64]) -> f64 {
        match &self.gram {
            Some(_) => d
                .as_slice()
                .iter()
                .zip(img_new.iter().zip(img_y))
                .map(|(di, (a, b))| di * (a - b))
                .sum(),
            None => sq_dist(img_new, img_y),
        }
    }

    fn penalty(&self, x: &Matrix) -> Result<f64> {
        if self.lambda == 0.0 {
            return Ok(0.0);
        }
        Ok(self.lambda * densela::schatten_pow(x, self.p)?)
    }

    fn run(&self, x0: Matrix, accelerate: bool, step: &mut Step, max_iters: usize, rel_tol: f64) -> Result<Run> {
        let n = self.image_len();
        let (m, t) = (self.op.m(), self.op.t());
        let mut x = x0;
        let mut lx = vec![0.0; n];
        self.image(&x, &mut lx);
        let mut obj = self.smooth(&x, &lx) + self.penalty(&x)?;
        if !obj.is_finite() {
            return Err(Error::Divergence { iteration: 0 });
        }
        let mut trace = vec![obj];
        let mut y = x.clone();
        let mut ly = lx.clone();
        let mut theta = 1.0_f64;
        let mut fresh = true;
        let mut grad = Matrix::zeros(m, t);
        let mut scratch = Vec::new();
        let mut lx_new = vec![0.0; n];
        let mut converged = false;
        let mut iters = 0;

        while iters < max_iters {
            iters += 1;
            let fy = self.smooth(&y, &ly);
            self.gradient(&ly, &mut scratch, &mut grad);
            let (x_new, sv, f_new) = loop {
                let eta = 1.0 / step.lf;
                let z = y.add_scaled(&grad, -eta)?;
                let (xn, sv) = matrix_prox_spectrum(&z, &ProxParams::new(self.p, self.lambda, eta)?)?;
                self.image(&xn, &mut lx_new);
                if let Some(beta) = step.beta {
                    // f is quadratic: f(xn) − f(y) − ⟨∇f(y), d⟩ = |𝓛d|² exactly
                    let d = xn.sub(&y)?;
                    let d2 = dot(d.as_slice(), d.as_slice());
                    let curv = self.curvature(&d, &lx_new, &ly);
                    if curv > 0.5 * step.lf * d2 + 1e-12 * fy.abs() && d2 > 0.0 && step.lf < 1e300 {
                        step.lf /= beta;
                        continue;
                    }
                }
                let f_new = self.smooth(&xn, &lx_new);
                break (xn, sv, f_new);
            };
            let pen = if self.lambda == 0.0 {
                0.0
            } else {
                self.lambda * densela::spectrum_power_sum(&sv, self.p)
            };
            let obj_new = f_new + pen;
            if !obj_new.is_finite() {
                return Err(Error::Divergence { iteration: iters });
            }
            if obj_new > obj {
                if accelerate && !fresh {
                    y = x.clone();
                    ly.copy_from_slice(&lx);
                    theta = 1.0;
                    fresh = true;
                    continue;
                }
                // a plain step from x cannot increase the objective beyond rounding
                converged = true;
                break;
            }
            let change = (obj - obj_new) / obj.abs().max(f64::MIN_POSITIVE);
            if accelerate {
                let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                let beta = (theta - 1.0) / theta_new;
                y = x_new.add_scaled(&x_new.sub(&x)?, beta)?;
                for ((l, a), b) in ly.iter_mut().zip(&lx_new).zip(&lx) {
                    *l = a + beta * (a - b);
                }
                theta = theta_new;
                fresh = beta == 0.0;
            } else {
                y = x_new.clone();
                ly.copy_from_slice(&lx_new);
            }
            x = x_new;
            std::mem::swap(&mut lx, &mut lx_new);
            obj = obj_new;
            trace.push(obj);
            if change <= rel_tol || obj == 0.0 {
                converged = true;
                break;
            }
        }
        Ok(Run {
            x,
            obj,
            iters,
            converged,
            trace,
        })
    }
}

/// Minimizes the penalized least squares objective.
pub fn fit(data: &Dataset, config: &EstimatorConfig) -> Result<FitResult> {
    config.validate()?;
    if data.n_obs() == 0 {
        return Err(Error::InvalidInput("dataset has no observations".into()));
    }
    let lambda = resolve_lambda(data, &config.lambda)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("resolved lambda must be >= 0, got {lambda}")));
    }
    let pb = Problem::new(&data.op, data.scaled_y(), config.p, lambda)?;
    let (m, t) = (data.op.m(), data.op.t());
    let mut step = Step::init(&data.op, config.step);

    let best = if config.p == 1.0 {
        pb.run(Matrix::zeros(m, t), true, &mut step, config.max_iters, config.rel_tol)?
    } else {
        let mut best: Option<Run> = None;
        for x0 in starting_points(&pb, data, config, &mut step)? {
            let run = pb.run(x0, false, &mut step, config.max_iters, config.rel_tol)?;
            if best.as_ref().is_none_or(|b| run.obj < b.obj) {
                best = Some(run);
            }
        }
        let mut best = best.expect("at least one start");
        if config.truth_fallback {
            if let Some(truth) = &data.truth {
                let truth_obj = objective(data, &truth.a_star, config.p, lambda)?;
                if best.obj > truth_obj {
                    let run = pb.run(truth.a_star.clone(), false, &mut step, config.max_iters, config.rel_tol)?;
                    if run.obj < best.obj {
                        best = run;
                    }
                }
            }
        }
        best
    };
    let objective = objective(data, &best.x, config.p, lambda)?;
    Ok(FitResult {
        a_hat: best.x,
        objective,
        iterations: best.iters,
        converged: best.converged,
        lambda_used: lambda,
        objective_trace: best.trace,
    })
}

/// Initial points for `p < 1`, in order: zero, the least-squares rescaled
/// adjoint, the `p = 1` solution, random low-rank matrices and, for complete
/// designs, the exact prox of the response matrix.
fn starting_points(pb: &Problem, data: &Dataset, config: &EstimatorConfig, step: &mut Step) -> Result<Vec<Matrix>> {
    let (m, t) = (data.op.m(), data.op.t());
    let mut starts = vec![Matrix::zeros(m, t)];

    let back = data.op.adjoint(&pb.ys)?;
    let lb = data.op.apply(&back)?;
    let denom = dot(&lb, &lb);
    let scale = if denom > 0.0 { dot(&pb.ys, &lb) / denom } else { 0.0 };
    let rescaled = back.scale(scale);
    let magnitude = densela::spectral_norm(&rescaled)?.max(1e-12);
    starts.push(rescaled);

    if starts.len() < config.restarts {
        let convex = Problem::new(pb.op, pb.ys.clone(), 1.0, pb.lambda)?;
        starts.push(convex.run(Matrix::zeros(m, t), true, step, config.max_iters, config.rel_tol)?.x);
    }
    if data.op.is_complete_design() && starts.len() < config.restarts {
        starts.push(closed_form_complete(data, pb.p, pb.lambda)?);
    }
    let mut k = 0u64;
    while starts.len() < config.restarts {
        let mut rng = rng_from(derive_seed(config.seed, &[k]));
        let r = 1 + (k as usize % m.min(t).min(3));
        let g1 = Matrix::from_vec(m, r, (0..m * r).map(|_| rng.sample(StandardNormal)).collect())?;
        let g2 = Matrix::from_vec(t, r, (0..t * r).map(|_| rng.sample(StandardNormal)).collect())?;
        let prod = g1.matmul(&g2.transpose())?;
        let s = densela::spectral_norm(&prod)?.max(f64::MIN_POSITIVE);
        starts.push(prod.scale(magnitude / s));
        k += 1;
    }
    starts.truncate(config.restarts);
    Ok(starts)
}
