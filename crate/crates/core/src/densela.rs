//! Dense real matrices, one-sided Jacobi SVD and Schatten quasi-norms.
//!
//! Everything here is sized for desk-scale problems (dimensions up to a few
//! hundred). Matrices are stored row-major.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim_mismatch, Error, Result};

/// Singular values below this fraction of the largest one are treated as zero
/// when evaluating Schatten quantities.
pub const SV_CLAMP_REL: f64 = 1e-13;

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Dense real `rows x cols` matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Rectangular matrix with `diag` on its main diagonal.
    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_mismatch(
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from a list of rows, rejecting ragged or non-finite input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidInput("matrix must be non-empty".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(dim_mismatch(
                    format!("row {i} of length {cols}"),
                    format!("length {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        let m = Matrix {
            rows: rows.len(),
            cols,
            data,
        };
        m.ensure_finite()?;
        Ok(m)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(|c| c.to_vec()).collect()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput("matrix has non-finite entries".into()))
        }
    }

    pub fn ensure_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_mismatch(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(dim_mismatch(
                format!("inner dimension {}", self.cols),
                format!("{}", other.rows),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Matrix, s: f64) -> Result<Matrix> {
        self.ensure_same_shape(other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    /// In-place `self += s * other`; shapes must agree.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.add_scaled(other, -1.0)
    }

    /// `trace(selfᵀ other)`, the Frobenius inner product.
    pub fn inner(&self, other: &Matrix) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators; the compiler vectorizes this reliably
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ` with `k = min(m, T)`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let (m, k) = self.u.shape();
        let t = self.v.rows();
        let mut out = Matrix::zeros(m, t);
        for (j, &s) in self.singular_values.iter().enumerate().take(k) {
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let a = s * self.u[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let row = &mut out.data[i * t..(i + 1) * t];
                for (l, o) in row.iter_mut().enumerate() {
                    *o += a * self.v[(l, j)];
                }
            }
        }
        out
    }
}

/// One-sided Jacobi SVD.
///
/// Rotations act on the columns of the taller orientation until every pair of
/// columns is orthogonal to `1e-14` relative to their norms. Deterministic for
/// a given input.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    a.ensure_finite()?;
    if a.rows >= a.cols {
        Ok(jacobi_tall(a))
    } else {
        let f = jacobi_tall(&a.transpose());
        Ok(SvdFactors {
            u: f.v,
            singular_values: f.singular_values,
            v: f.u,
        })
    }
}

/// Singular values only, descending.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(a)?.singular_values)
}

fn jacobi_tall(a: &Matrix) -> SvdFactors {
    let (m, n) = a.shape();
    // column-major working copies
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (wp, wq) = pair_mut(&mut w, p, q);
                rotate(wp, wq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q);
                rotate(vp, vq, c, s);
                norms[p] = dot(&w[p], &w[p]);
                norms[q] = dot(&w[q], &w[q]);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    order.sort_by(|&i, &j| sig[j].partial_cmp(&sig[i]).unwrap().then(i.cmp(&j)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut singular = Vec::with_capacity(n);
    let mut v_out = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let s = sig[j];
        let candidate = if s > f64::MIN_POSITIVE {
            Some(w[j].iter().map(|x| x / s).collect::<Vec<_>>())
        } else {
            None
        };
        let (col, exact) = orthonormal_extension(&u_cols, candidate, m);
        singular.push(if exact { s } else { 0.0 });
        u_cols.push(col);
        for l in 0..n {
            v_out[(l, k)] = v[j][l];
        }
    }
    let mut u = Matrix::zeros(m, n);
    for (k, col) in u_cols.iter().enumerate() {
        for i in 0..m {
            u[(i, k)] = col[i];
        }
    }
    SvdFactors {
        u,
        singular_values: singular,
        v: v_out,
    }
}

fn pair_mut<T>(v: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    debug_assert!(p < q);
    let (lo, hi) = v.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Orthonormalizes `candidate` against `basis` (two Gram-Schmidt passes).
/// Falls back to canonical vectors when the candidate is missing or lies in
/// the span of the basis. The flag reports whether the candidate was kept.
fn orthonormal_extension(basis: &[Vec<f64>], candidate: Option<Vec<f64>>, m: usize) -> (Vec<f64>, bool) {
    let project_out = |mut x: Vec<f64>| -> (Vec<f64>, f64) {
        for _ in 0..2 {
            for b in basis {
                let c = dot(&x, b);
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= c * bi;
                }
            }
        }
        let n = dot(&x, &x).sqrt();
        (x, n)
    };
    if let Some(c) = candidate {
        let (x, n) = project_out(c);
        if n > 0.5 {
            return (x.into_iter().map(|e| e / n).collect(), true);
        }
    }
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        let (x, n) = project_out(e);
        if n > 0.5 {
            return (x.into_iter().map(|e| e / n).collect(), false);
        }
    }
    unreachable!("basis already spans R^m")
}

/// Schatten-p parameter: a positive real or the spectral norm.
pub fn validate_p(p: f64) -> Result<()> {
    if p > 0.0 && !p.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "Schatten exponent must be in (0, inf], got {p}"
        )))
    }
}

fn clamped(sv: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let cut = sv.first().copied().unwrap_or(0.0) * SV_CLAMP_REL;
    sv.iter().map(move |&s| if s < cut { 0.0 } else { s })
}

/// `Σ σ_jᵖ` over a spectrum, with the relative clamp applied.
pub fn spectrum_power_sum(sv: &[f64], p: f64) -> f64 {
    clamped(sv).filter(|&s| s > 0.0).map(|s| s.powf(p)).sum()
}

/// `‖A‖_{S_p}`; `p = f64::INFINITY` gives the spectral norm.
pub fn schatten(a: &Matrix, p: f64) -> Result<f64> {
    validate_p(p)?;
    let sv = singular_values(a)?;
    if p.is_infinite() {
        return Ok(sv.first().copied().unwrap_or(0.0));
    }
    Ok(spectrum_power_sum(&sv, p).powf(1.0 / p))
}

/// `‖A‖_{S_p}^p`, the penalty value (avoids the 1/p root).
pub fn schatten_pow(a: &Matrix, p: f64) -> Result<f64> {
    validate_p(p)?;
    if p.is_infinite() {
        return Err(Error::InvalidParameter("schatten_pow needs finite p".into()));
    }
    Ok(spectrum_power_sum(&singular_values(a)?, p))
}

pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    schatten(a, f64::INFINITY)
}

/// Number of singular values above `tol * σ₁`.
pub fn numerical_rank(a: &Matrix, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("rank tolerance must be >= 0, got {tol}")));
    }
    let sv = singular_values(a)?;
    Ok(rank_of_spectrum(&sv, tol))
}

pub(crate) fn rank_of_spectrum(sv: &[f64], tol: f64) -> usize {
    match sv.first() {
        Some(&s1) if s1 > 0.0 => sv.iter().filter(|&&s| s > tol * s1).count(),
        _ => 0,
    }
}

/// Decomposition `B = B₁ + B₂` relative to the row and column spaces of `A`.
#[derive(Clone, Debug)]
pub struct RankSplit {
    pub b1: Matrix,
    pub b2: Matrix,
}

/// Splits `b` so that `b2` is orthogonal to `a` on both sides and `b1` has
/// rank at most `2 rank(a)`.
///
/// With `P_U`, `P_V` the projectors onto the leading singular subspaces of
/// `a`, `b2 = (I - P_U) b (I - P_V)` is the lower-right block of `b` in the
/// singular bases of `a`, and `b1 = b - b2` holds the other three blocks.
pub fn rank_split(a: &Matrix, b: &Matrix) -> Result<RankSplit> {
    a.ensure_same_shape(b)?;
    b.ensure_finite()?;
    let f = svd(a)?;
    let r = rank_of_spectrum(&f.singular_values, DEFAULT_RANK_TOL);
    let (m, t) = a.shape();

    // (I - P_U) b
    let mut left = b.clone();
    for k in 0..r {
        let uk = f.u.column(k);
        // uᵀ b
        let mut ub = vec![0.0; t];
        for i in 0..m {
            let c = uk[i];
            for (o, &x) in ub.iter_mut().zip(b.row(i)) {
                *o += c * x;
            }
        }
        for i in 0..m {
            for j in 0..t {
                left[(i, j)] -= uk[i] * ub[j];
            }
        }
    }
    // ((I - P_U) b)(I - P_V)
    let mut b2 = left.clone();
    for k in 0..r {
        let vk = f.v.column(k);
        for i in 0..m {
            let s = dot(left.row(i), &vk);
            for j in 0..t {
                b2[(i, j)] -= s * vk[j];
            }
        }
    }
    let b1 = b.sub(&b2)?;
    Ok(RankSplit { b1, b2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(m: usize, t: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..m * t).map(|_| StandardNormal.sample(&mut rng)).collect();
        Matrix::from_vec(m, t, data).unwrap()
    }

    fn gram_residual(u: &Matrix) -> f64 {
        let g = u.transpose().matmul(u).unwrap();
        g.max_abs_diff(&Matrix::identity(u.cols()))
    }

    #[test]
    fn svd_identity() {
        let f = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(f.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn svd_single_entry() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let f = svd(&a).unwrap();
        assert!((f.singular_values[0] - 2.0).abs() < 1e-15);
        assert_eq!(f.singular_values[1], 0.0);
        assert!(gram_residual(&f.u) <= 1e-10);
        assert!(gram_residual(&f.v) <= 1e-10);
        assert!(f.reconstruct().max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn svd_random_reconstruction() {
        let a = random(30, 20, 7);
        let f = svd(&a).unwrap();
        let err = f.reconstruct().sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(err <= 1e-10, "relative error {err}");
        assert!(gram_residual(&f.u) <= 1e-10);
        assert!(gram_residual(&f.v) <= 1e-10);
        assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_wide_and_zero() {
        let a = random(4, 9, 3);
        let f = svd(&a).unwrap();
        assert_eq!(f.u.shape(), (4, 4));
        assert_eq!(f.v.shape(), (9, 4));
        assert!(f.reconstruct().max_abs_diff(&a) < 1e-12);

        let z = Matrix::zeros(3, 5);
        let f = svd(&z).unwrap();
        assert!(f.singular_values.iter().all(|&s| s == 0.0));
        assert!(gram_residual(&f.u) <= 1e-12);
        assert!(gram_residual(&f.v) <= 1e-12);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn schatten_diag_examples() {
        let a = Matrix::from_diag(2, 2, &[3.0, 4.0]);
        assert!((schatten(&a, 1.0).unwrap() - 7.0).abs() < 1e-12);
        assert!((schatten(&a, 2.0).unwrap() - 5.0).abs() < 1e-12);
        // (√3 + √4)² evaluated from the singular values
        let expected = (3f64.sqrt() + 2.0).powi(2);
        assert!((schatten(&a, 0.5).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 13.9282).abs() < 1e-4);
        assert_eq!(schatten(&a, f64::INFINITY).unwrap(), 4.0);
        assert!(matches!(schatten(&a, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(schatten(&a, -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn schatten_two_is_frobenius() {
        let a = random(7, 5, 11);
        let s2 = schatten(&a, 2.0).unwrap();
        assert!((s2 - a.frobenius_norm()).abs() <= 1e-12 * s2);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Matrix::zeros(3, 3), 1e-9).unwrap(), 0);
        let d = Matrix::from_diag(2, 2, &[5.0, 1e-14]);
        assert_eq!(numerical_rank(&d, 1e-9).unwrap(), 1);
        let g1 = random(10, 3, 1);
        let g2 = random(8, 3, 2);
        let p = g1.matmul(&g2.transpose()).unwrap();
        assert_eq!(numerical_rank(&p, DEFAULT_RANK_TOL).unwrap(), 3);
        assert!(numerical_rank(&p, -1.0).is_err());
    }

    #[test]
    fn rank_split_block_example() {
        let a = Matrix::from_diag(2, 2, &[1.0, 0.0]);
        let b = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let s = rank_split(&a, &b).unwrap();
        let b1 = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let b2 = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(s.b1.max_abs_diff(&b1) < 1e-12);
        assert!(s.b2.max_abs_diff(&b2) < 1e-12);
    }

    #[test]
    fn rank_split_zero_b() {
        let a = random(4, 4, 5);
        let s = rank_split(&a, &Matrix::zeros(4, 4)).unwrap();
        assert_eq!(s.b1.max_abs(), 0.0);
        assert_eq!(s.b2.max_abs(), 0.0);
    }

    #[test]
    fn rank_split_random_orthogonality() {
        let a = random(6, 2, 21).matmul(&random(5, 2, 22).transpose()).unwrap();
        let b = random(6, 5, 23);
        let s = rank_split(&a, &b).unwrap();
        assert!(s.b1.add(&s.b2).unwrap().max_abs_diff(&b) <= 1e-12);
        // oracle: explicit products
        let ab2t = a.matmul(&s.b2.transpose()).unwrap().frobenius_norm();
        let atb2 = a.transpose().matmul(&s.b2).unwrap().frobenius_norm();
        let tr = s.b1.transpose().matmul(&s.b2).unwrap().trace();
        assert!(ab2t <= 1e-10 && atb2 <= 1e-10 && tr.abs() <= 1e-10, "{ab2t} {atb2} {tr}");
        assert!(numerical_rank(&s.b1, 1e-9).unwrap() <= 4);
    }

    #[test]
    fn rank_split_dimension_mismatch() {
        assert!(rank_split(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn json_rows_format() {
        let a = Matrix::from_rows(&[vec![1.0, 2.5], vec![-3.0, 0.125]]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.5],[-3.0,0.125]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
    }
}
