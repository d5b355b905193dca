//! Masks, the sampling operator `A ↦ (trace(X_iᵀA))_i / √N`, its adjoint, and
//! the operator diagnostics the estimation guarantees are stated in terms of.

use std::collections::HashSet;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::densela::{self, dot, Matrix};
use crate::error::{dim_mismatch, Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Relative-change tolerance and iteration cap of the power method.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Default number of random restarts for [`phi_max1`].
pub const PHI_RESTARTS: usize = 8;

/// Largest `mT` for which the design Gram matrix of a dense operator is built.
pub const GRAM_MAX_DIM: usize = 2500;

/// Masks copied per matrix-multiply call while building the Gram matrix.
const GRAM_PANEL: usize = 256;

const PHI_TOL: f64 = 1e-10;
const PHI_MAX_ITERS: usize = 500;

/// One measurement functional `X_i`. Indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Mask {
    /// `e_row e_colᵀ`.
    Point { row: usize, col: usize },
    /// Zero except for column `task`, which holds `x`.
    Column { task: usize, x: Vec<f64> },
    Dense { data: Matrix },
}

impl Mask {
    pub fn validate(&self, m: usize, t: usize) -> Result<()> {
        match self {
            Mask::Point { row, col } => {
                if *row >= m || *col >= t {
                    return Err(Error::InvalidInput(format!(
                        "point mask ({row},{col}) outside {m}x{t}"
                    )));
                }
            }
            Mask::Column { task, x } => {
                if *task >= t {
                    return Err(Error::InvalidInput(format!("column mask task {task} >= T = {t}")));
                }
                if x.len() != m {
                    return Err(dim_mismatch(format!("predictor of length {m}"), format!("{}", x.len())));
                }
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidInput("column mask has non-finite entries".into()));
                }
            }
            Mask::Dense { data } => {
                if data.shape() != (m, t) {
                    return Err(dim_mismatch(
                        format!("{m}x{t}"),
                        format!("{}x{}", data.rows(), data.cols()),
                    ));
                }
                data.ensure_finite()?;
            }
        }
        Ok(())
    }

    /// `trace(Xᵀ A)`.
    #[inline]
    pub fn inner(&self, a: &Matrix) -> f64 {
        match self {
            Mask::Point { row, col } => a[(*row, *col)],
            Mask::Column { task, x } => {
                let t = a.cols();
                let s = a.as_slice();
                x.iter().enumerate().map(|(i, xi)| xi * s[i * t + task]).sum()
            }
            Mask::Dense { data } => dot(data.as_slice(), a.as_slice()),
        }
    }

    /// `out += c X`.
    #[inline]
    pub fn add_scaled_to(&self, out: &mut Matrix, c: f64) {
        match self {
            Mask::Point { row, col } => out[(*row, *col)] += c,
            Mask::Column { task, x } => {
                let t = out.cols();
                let s = out.as_mut_slice();
                for (i, xi) in x.iter().enumerate() {
                    s[i * t + task] += c * xi;
                }
            }
            Mask::Dense { data } => {
                for (o, d) in out.as_mut_slice().iter_mut().zip(data.as_slice()) {
                    *o += c * d;
                }
            }
        }
    }

    pub fn to_dense(&self, m: usize, t: usize) -> Matrix {
        let mut out = Matrix::zeros(m, t);
        self.add_scaled_to(&mut out, 1.0);
        out
    }
}

/// The linear map `A ↦ (trace(X_1ᵀA), …, trace(X_NᵀA)) / √N`.
#[derive(Clone, Debug)]
pub struct SamplingOperator {
    m: usize,
    t: usize,
    masks: Vec<Mask>,
    gram: OnceLock<Option<Matrix>>,
}

impl PartialEq for SamplingOperator {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.t == other.t && self.masks == other.masks
    }
}

impl SamplingOperator {
    pub fn new(m: usize, t: usize, masks: Vec<Mask>) -> Result<Self> {
        if m == 0 || t == 0 {
            return Err(Error::InvalidInput("m and T must be positive".into()));
        }
        if masks.is_empty() {
            return Err(Error::InvalidInput("sampling operator needs at least one mask".into()));
        }
        for mask in &masks {
            mask.validate(m, t)?;
        }
        Ok(SamplingOperator {
            m,
            t,
            masks,
            gram: OnceLock::new(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n_obs(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn into_masks(self) -> Vec<Mask> {
        self.masks
    }

    fn check_matrix(&self, a: &Matrix) -> Result<()> {
        if a.shape() != (self.m, self.t) {
            return Err(dim_mismatch(
                format!("{}x{}", self.m, self.t),
                format!("{}x{}", a.rows(), a.cols()),
            ));
        }
        Ok(())
    }

    fn check_vector(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.masks.len() {
            return Err(dim_mismatch(format!("vector of length {}", self.masks.len()), format!("{}", z.len())));
        }
        Ok(())
    }

    pub fn apply(&self, a: &Matrix) -> Result<Vec<f64>> {
        self.check_matrix(a)?;
        let mut out = vec![0.0; self.masks.len()];
        self.apply_into(a, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`apply`](Self::apply) writing into `out`.
    pub fn apply_into(&self, a: &Matrix, out: &mut [f64]) {
        let scale = 1.0 / (self.masks.len() as f64).sqrt();
        for (o, mask) in out.iter_mut().zip(&self.masks) {
            *o = mask.inner(a) * scale;
        }
    }

    /// `(1/√N) Σ z_i X_i`.
    pub fn adjoint(&self, z: &[f64]) -> Result<Matrix> {
        self.check_vector(z)?;
        let mut out = Matrix::zeros(self.m, self.t);
        self.adjoint_into(z, 1.0, &mut out);
        Ok(out)
    }

    /// `out = (c/√N) Σ z_i X_i`, overwriting `out`.
    pub fn adjoint_into(&self, z: &[f64], c: f64, out: &mut Matrix) {
        out.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        let scale = c / (self.masks.len() as f64).sqrt();
        for (&zi, mask) in z.iter().zip(&self.masks) {
            if zi != 0.0 {
                mask.add_scaled_to(out, zi * scale);
            }
        }
    }

    /// `G = (1/N) Σ vec(X_i) vec(X_i)ᵀ` (row-major `vec`), so that
    /// `𝓛*𝓛(A) = G vec(A)`. Built once and cached for dense designs with
    /// `N ≥ mT` and `mT ≤ GRAM_MAX_DIM`, where it is cheaper than passes over
    /// the masks; `None` otherwise.
    pub fn design_gram(&self) -> Option<&Matrix> {
        self.gram
            .get_or_init(|| {
                let d = self.m * self.t;
                let dense = self.masks.iter().all(|mk| matches!(mk, Mask::Dense { .. }));
                (dense && d <= GRAM_MAX_DIM && self.masks.len() >= d).then(|| self.build_gram())
            })
            .as_ref()
    }

    fn build_gram(&self) -> Matrix {
        let d = self.m * self.t;
        let alpha = 1.0 / self.masks.len() as f64;
        let mut g = vec![0.0; d * d];
        let mut panel = Vec::with_capacity(GRAM_PANEL * d);
        for chunk in self.masks.chunks(GRAM_PANEL) {
            panel.clear();
            for mask in chunk {
                if let Mask::Dense { data } = mask {
                    panel.extend_from_slice(data.as_slice());
                }
            }
            let k = chunk.len();
            // SAFETY: `panel` holds k x d and `g` holds d x d row-major values,
            // matching the dimensions and strides passed.
            unsafe {
                matrixmultiply::dgemm(
                    d,
                    k,
                    d,
                    alpha,
                    panel.as_ptr(),
                    1,
                    d as isize,
                    panel.as_ptr(),
                    d as isize,
                    1,
                    1.0,
                    g.as_mut_ptr(),
                    d as isize,
                    1,
                );
            }
        }
        Matrix::from_vec(d, d, g).expect("square")
    }

    /// `out = 𝓛*𝓛(a)`, through the Gram matrix when one is available.
    pub fn normal_into(&self, a: &Matrix, out: &mut Matrix) {
        match self.design_gram() {
            Some(g) => gram_apply(g, a.as_slice(), out.as_mut_slice()),
            None => {
                let mut la = vec![0.0; self.masks.len()];
                self.apply_into(a, &mut la);
                self.adjoint_into(&la, 1.0, out);
            }
        }
    }

    /// Cells observed by point masks, in mask order.
    pub fn point_cells(&self) -> Result<Vec<(usize, usize)>> {
        self.masks
            .iter()
            .map(|mask| match mask {
                Mask::Point { row, col } => Ok((*row, *col)),
                _ => Err(Error::InvalidInput("operator contains non-point masks".into())),
            })
            .collect()
    }

    /// True when the masks are point masks observing every cell exactly once.
    pub fn is_complete_design(&self) -> bool {
        if self.masks.len() != self.m * self.t {
            return false;
        }
        match self.point_cells() {
            Ok(cells) => cells.iter().collect::<HashSet<_>>().len() == cells.len(),
            Err(_) => false,
        }
    }

    /// Dense `N x (mT)` matrix of the operator, rows `vec(X_i)ᵀ / √N`.
    pub fn to_dense_matrix(&self) -> Matrix {
        let n = self.masks.len();
        let scale = 1.0 / (n as f64).sqrt();
        let mt = self.m * self.t;
        let mut out = Matrix::zeros(n, mt);
        for (i, mask) in self.masks.iter().enumerate() {
            let d = mask.to_dense(self.m, self.t);
            for (j, v) in d.as_slice().iter().enumerate() {
                out[(i, j)] = v * scale;
            }
        }
        out
    }
}

/// Summary of the operator constants used by the guarantees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub phi_max1: f64,
    pub op_norm: f64,
    /// `op_norm²`, the uniform-boundedness constant measured on this design.
    pub c0_estimate: f64,
}

pub fn report(op: &SamplingOperator, restarts: usize) -> Result<OperatorReport> {
    let phi = phi_max1(op, restarts)?;
    // φ_max(1) is a certified lower bound on the operator norm
    let op_norm = operator_norm(op).max(phi);
    Ok(OperatorReport {
        phi_max1: phi,
        op_norm,
        c0_estimate: op_norm * op_norm,
    })
}

/// Largest singular value of the operator by power iteration on `𝓛*𝓛`.
pub fn operator_norm(op: &SamplingOperator) -> f64 {
    operator_norm_with(op, POWER_TOL, POWER_MAX_ITERS, 0)
}

pub fn operator_norm_with(op: &SamplingOperator, tol: f64, max_iters: usize, seed: u64) -> f64 {
    let mut rng = rng_from(derive_seed(seed, &[0x0b]));
    let (m, t) = (op.m(), op.t());
    let mut a = Matrix::from_vec(m, t, (0..m * t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .expect("shape");
    let mut next = Matrix::zeros(m, t);
    let mut lambda = 0.0;
    for _ in 0..max_iters.max(1) {
        let norm = a.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        a = a.scale(1.0 / norm);
        op.normal_into(&a, &mut next);
        let new_lambda = dot(a.as_slice(), next.as_slice());
        std::mem::swap(&mut a, &mut next);
        let done = (new_lambda - lambda).abs() <= tol * new_lambda;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Lower bound on the maximal rank-1 restricted eigenvalue φ_max(1).
///
/// Alternating maximization of `(1/N) Σ (uᵀ X_i v)²` over unit `u`, `v`: each
/// half-step sets one factor to the top eigenvector of the Gram matrix induced
/// by the other, so the objective never decreases. Returns the square root of
/// the best objective across `restarts` random starts.
pub fn phi_max1(op: &SamplingOperator, restarts: usize) -> Result<f64> {
    phi_max1_with(op, restarts, PHI_TOL, PHI_MAX_ITERS)
}

pub fn phi_max1_with(op: &SamplingOperator, restarts: usize, tol: f64, max_iters: usize) -> Result<f64> {
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    let mut best = 0.0_f64;
    for k in 0..restarts {
        let mut rng = rng_from(derive_seed(0x0f1, &[k as u64]));
        let mut v: Vec<f64> = (0..op.t()).map(|_| rng.sample(StandardNormal)).collect();
        normalize(&mut v);
        let mut obj = 0.0;
        for _ in 0..max_iters {
            let (u, _) = top_eigvec(&left_gram(op, &v))?;
            let (v_new, val) = top_eigvec(&right_gram(op, &u))?;
            v = v_new;
            let done = val - obj <= tol * val.abs().max(f64::MIN_POSITIVE);
            obj = obj.max(val);
            if done {
                break;
            }
        }
        best = best.max(obj);
    }
    Ok(best.max(0.0).sqrt())
}

fn normalize(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|e| *e /= n);
    } else if let Some(first) = x.first_mut() {
        *first = 1.0;
    }
}

/// `y = G x` for a row-major square `G`.
fn gram_apply(g: &Matrix, x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot(&g.as_slice()[i * d..(i + 1) * d], x);
    }
}

/// `(1/N) Σ (X_i v)(X_i v)ᵀ`, an `m x m` matrix.
fn left_gram(op: &SamplingOperator, v: &[f64]) -> Matrix {
    match op.design_gram() {
        Some(g) => left_gram_from(g, op.m(), op.t(), v),
        None => left_gram_masks(op, v),
    }
}

/// `(1/N) Σ (X_iᵀ u)(X_iᵀ u)ᵀ`, a `T x T` matrix.
fn right_gram(op: &SamplingOperator, u: &[f64]) -> Matrix {
    match op.design_gram() {
        Some(g) => right_gram_from(g, op.m(), op.t(), u),
        None => right_gram_masks(op, u),
    }
}

/// `B[i][i'] = Σ_{j,j'} v_j v_j' G[(i,j),(i',j')]`.
fn left_gram_from(g: &Matrix, m: usize, t: usize, v: &[f64]) -> Matrix {
    let d = m * t;
    let gs = g.as_slice();
    let mut gv = vec![0.0; d * m];
    for r in 0..d {
        let row = &gs[r * d..(r + 1) * d];
        for ip in 0..m {
            gv[r * m + ip] = dot(&row[ip * t..(ip + 1) * t], v);
        }
    }
    let mut s = Matrix::zeros(m, m);
    for i in 0..m {
        for (j, &vj) in v.iter().enumerate() {
            let src = &gv[(i * t + j) * m..(i * t + j + 1) * m];
            for (ip, &val) in src.iter().enumerate() {
                s[(i, ip)] += vj * val;
            }
        }
    }
    s
}

fn left_gram_masks(op: &SamplingOperator, v: &[f64]) -> Matrix {
    let m = op.m();
    let mut s = Matrix::zeros(m, m);
    let mut w = vec![0.0; m];
    for mask in op.masks() {
        match mask {
            Mask::Point { row, col } => s[(*row, *row)] += v[*col] * v[*col],
            Mask::Column { task, x } => add_outer(&mut s, x, v[*task] * v[*task]),
            Mask::Dense { data } => {
                for (i, wi) in w.iter_mut().enumerate() {
                    *wi = dot(data.row(i), v);
                }
                add_outer(&mut s, &w, 1.0);
            }
        }
    }
    s.scale(1.0 / op.n_obs() as f64)
}

/// `C[j][j'] = Σ_{i,i'} u_i u_i' G[(i,j),(i',j')]`.
fn right_gram_from(g: &Matrix, m: usize, t: usize, u: &[f64]) -> Matrix {
    let d = m * t;
    let gs = g.as_slice();
    let mut s = Matrix::zeros(t, t);
    for (i, &ui) in u.iter().enumerate() {
        for j in 0..t {
            let row = &gs[(i * t + j) * d..(i * t + j + 1) * d];
            let out = &mut s.as_mut_slice()[j * t..(j + 1) * t];
            for (ip, &uip) in u.iter().enumerate().take(m) {
                let c = ui * uip;
                if c != 0.0 {
                    for (o, &gv) in out.iter_mut().zip(&row[ip * t..(ip + 1) * t]) {
                        *o += c * gv;
                    }
                }
            }
        }
    }
    s
}

fn right_gram_masks(op: &SamplingOperator, u: &[f64]) -> Matrix {
    let t = op.t();
    let mut s = Matrix::zeros(t, t);
    let mut z = vec![0.0; t];
    for mask in op.masks() {
        match mask {
            Mask::Point { row, col } => s[(*col, *col)] += u[*row] * u[*row],
            Mask::Column { task, x } => {
                let c = dot(x, u);
                s[(*task, *task)] += c * c;
            }
            Mask::Dense { data } => {
                z.iter_mut().for_each(|e| *e = 0.0);
                for (i, &ui) in u.iter().enumerate() {
                    for (zj, &d) in z.iter_mut().zip(data.row(i)) {
                        *zj += ui * d;
                    }
                }
                add_outer(&mut s, &z, 1.0);
            }
        }
    }
    s.scale(1.0 / op.n_obs() as f64)
}

fn add_outer(s: &mut Matrix, w: &[f64], c: f64) {
    let n = w.len();
    let data = s.as_mut_slice();
    for i in 0..n {
        let wi = c * w[i];
        if wi == 0.0 {
            continue;
        }
        let row = &mut data[i * n..(i + 1) * n];
        for (r, &wj) in row.iter_mut().zip(w) {
            *r += wi * wj;
        }
    }
}

/// Top eigenpair of a symmetric positive semidefinite matrix.
fn top_eigvec(s: &Matrix) -> Result<(Vec<f64>, f64)> {
    let f = densela::svd(s)?;
    let mut u = f.u.column(0);
    normalize(&mut u);
    Ok((u, f.singular_values[0]))
}

/// Monte Carlo estimate of the restricted isometry constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RIEstimate {
    pub r: usize,
    pub nu: f64,
    pub delta_hat: f64,
    pub n_samples: usize,
}

/// `|ν |𝓛(A)|₂ / ‖A‖_F − 1|` for a single nonzero test matrix.
pub fn ri_deviation(op: &SamplingOperator, nu: f64, a: &Matrix) -> Result<f64> {
    let la = op.apply(a)?;
    let fro = a.frobenius_norm();
    if fro == 0.0 {
        return Err(Error::InvalidInput("RI probe must be nonzero".into()));
    }
    Ok((nu * dot(&la, &la).sqrt() / fro - 1.0).abs())
}

/// Samples `n_samples` random rank-`r` matrices (Gaussian factor products) and
/// reports the largest deviation. This is a lower bound on `δ_r`, never a
/// certificate.
pub fn ri_estimate(op: &SamplingOperator, r: usize, nu: f64, n_samples: usize, seed: u64) -> Result<RIEstimate> {
    ri_estimate_with_probes(op, r, nu, n_samples, seed, &[])
}

/// As [`ri_estimate`], with extra caller-chosen test matrices.
pub fn ri_estimate_with_probes(
    op: &SamplingOperator,
    r: usize,
    nu: f64,
    n_samples: usize,
    seed: u64,
    probes: &[Matrix],
) -> Result<RIEstimate> {
    let (m, t) = (op.m(), op.t());
    if r == 0 || r > m.min(t) {
        return Err(Error::InvalidParameter(format!("rank {r} outside [1, {}]", m.min(t))));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    let mut rng = rng_from(seed);
    let mut delta: f64 = 0.0;
    for _ in 0..n_samples {
        let g1 = Matrix::from_vec(m, r, (0..m * r).map(|_| rng.sample(StandardNormal)).collect())?;
        let g2 = Matrix::from_vec(t, r, (0..t * r).map(|_| rng.sample(StandardNormal)).collect())?;
        let a = g1.matmul(&g2.transpose())?;
        let fro = a.frobenius_norm();
        if fro == 0.0 {
            continue;
        }
        delta = delta.max(ri_deviation(op, nu, &a.scale(1.0 / fro))?);
    }
    for p in probes {
        delta = delta.max(ri_deviation(op, nu, p)?);
    }
    Ok(RIEstimate {
        r,
        nu,
        delta_hat: delta,
        n_samples: n_samples + probes.len(),
    })
}

/// Largest κ ∈ (0, 1] such that some `r` rows or `r` columns carry at least
/// `κ · max(m,T) · r + 1` observed cells; 0 when no such κ exists.
pub fn dispersion_kappa(op: &SamplingOperator, r: usize) -> Result<f64> {
    let cells = op.point_cells()?;
    dispersion_kappa_cells(op.m(), op.t(), &cells, r)
}

/// [`dispersion_kappa`] on a raw list of observed cells (duplicates count once).
pub fn dispersion_kappa_cells(m: usize, t: usize, cells: &[(usize, usize)], r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidParameter("r must be >= 1".into()));
    }
    let distinct: HashSet<(usize, usize)> = cells.iter().copied().collect();
    let mut row_counts = vec![0usize; m];
    let mut col_counts = vec![0usize; t];
    for &(i, j) in &distinct {
        if i >= m || j >= t {
            return Err(Error::InvalidInput(format!("cell ({i},{j}) outside {m}x{t}")));
        }
        row_counts[i] += 1;
        col_counts[j] += 1;
    }
    let top = |mut counts: Vec<usize>| -> usize {
        counts.sort_unstable_by(|a, b| b.cmp(a));
        counts.iter().take(r).sum()
    };
    let c = top(row_counts).max(top(col_counts)) as f64;
    let big_m = m.max(t) as f64;
    let kappa = ((c - 1.0) / (big_m * r as f64)).min(1.0);
    Ok(if kappa > 0.0 { kappa } else { 0.0 })
}

/// Eigenvalue range `(min, max)` of each task's predictor Gram matrix
/// `Ψ_t = n⁻¹ Σ_s x x ᵀ`.
pub fn gram_spectra(op: &SamplingOperator, n_per_task: usize) -> Result<Vec<(f64, f64)>> {
    let (m, t) = (op.m(), op.t());
    if n_per_task == 0 {
        return Err(Error::InvalidParameter("n_per_task must be >= 1".into()));
    }
    let mut per_task: Vec<Vec<&[f64]>> = vec![Vec::new(); t];
    for mask in op.masks() {
        match mask {
            Mask::Column { task, x } => per_task[*task].push(x),
            _ => return Err(Error::InvalidInput("gram_spectra needs column masks".into())),
        }
    }
    per_task
        .iter()
        .enumerate()
        .map(|(task, xs)| {
            if xs.len() != n_per_task {
                return Err(Error::InvalidInput(format!(
                    "task {task} has {} masks, expected {n_per_task}",
                    xs.len()
                )));
            }
            let stacked = Matrix::from_vec(n_per_task, m, xs.iter().flat_map(|x| x.iter().copied()).collect())?;
            let sv = densela::singular_values(&stacked)?;
            let n = n_per_task as f64;
            let max = sv.first().map(|s| s * s / n).unwrap_or(0.0);
            let min = if n_per_task < m {
                0.0
            } else {
                sv.last().map(|s| s * s / n).unwrap_or(0.0)
            };
            Ok((min, max))
        })
        .collect()
}
