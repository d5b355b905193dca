//! Proximal operators of the Schatten-p penalty.
//!
//! The scalar problem is `min_{x≥0} (x−σ)²/(2η) + λxᵖ`. For `p = 1` it is
//! soft-thresholding; for `p < 1` it is nonconvex but one-dimensional, so the
//! global minimizer is certified by comparing the largest stationary point
//! against zero.

use crate::densela::{self, Matrix};
use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;

/// Penalty exponent, weight and step size of a prox evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxParams {
    pub p: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl ProxParams {
    pub fn new(p: f64, lambda: f64, eta: f64) -> Result<Self> {
        let params = ProxParams { p, lambda, eta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    /// Combined weight `c = λη`.
    fn c(&self) -> f64 {
        self.lambda * self.eta
    }
}

/// Input level below which the prox returns zero.
///
/// For `p = 1` this is `λη`; for `p < 1` it is
/// `(2c(1−p))^{1/(2−p)} + cp(2c(1−p))^{(p−1)/(2−p)}` with `c = λη`.
pub fn threshold(params: &ProxParams) -> f64 {
    let c = params.c();
    let p = params.p;
    if p == 1.0 {
        return c;
    }
    if c == 0.0 {
        return 0.0;
    }
    let base = 2.0 * c * (1.0 - p);
    let x = base.powf(1.0 / (2.0 - p));
    x + c * p * x.powf(p - 1.0)
}

/// Scalar subproblem value times `η`: `(x−σ)²/2 + c xᵖ`.
fn scaled_objective(x: f64, sigma: f64, c: f64, p: f64) -> f64 {
    let pen = if x == 0.0 { 0.0 } else { x.powf(p) };
    0.5 * (x - sigma) * (x - sigma) + c * pen
}

/// Global minimizer of `(x−σ)²/(2η) + λxᵖ` over `x ≥ 0`.
pub fn scalar_prox(sigma_in: f64, params: &ProxParams) -> Result<f64> {
    params.validate()?;
    if !(sigma_in >= 0.0) || !sigma_in.is_finite() {
        return Err(Error::InvalidInput(format!("singular value must be finite and >= 0, got {sigma_in}")));
    }
    Ok(scalar_prox_unchecked(sigma_in, params))
}

pub(crate) fn scalar_prox_unchecked(sigma: f64, params: &ProxParams) -> f64 {
    let c = params.c();
    let p = params.p;
    if sigma == 0.0 {
        return 0.0;
    }
    if c == 0.0 {
        return sigma;
    }
    if p == 1.0 {
        return (sigma - c).max(0.0);
    }
    // g(x) = x − σ + cp x^{p−1} is convex on x > 0 with its minimum at x_infl
    let cp = c * p;
    let g = |x: f64| x - sigma + cp * x.powf(p - 1.0);
    let x_infl = (cp * (1.0 - p)).powf(1.0 / (2.0 - p));
    if x_infl >= sigma || g(x_infl) > 0.0 {
        return 0.0;
    }
    let root = larger_root(sigma, x_infl, cp, p);
    if scaled_objective(root, sigma, c, p) < scaled_objective(0.0, sigma, c, p) {
        root
    } else {
        0.0
    }
}

/// Largest zero of `g` in `[x_infl, σ]`: safeguarded Newton from `σ`,
/// bisection whenever a step leaves the bracket.
fn larger_root(sigma: f64, x_infl: f64, cp: f64, p: f64) -> f64 {
    let g = |x: f64| x - sigma + cp * x.powf(p - 1.0);
    let dg = |x: f64| 1.0 + cp * (p - 1.0) * x.powf(p - 2.0);
    let (mut lo, mut hi) = (x_infl, sigma);
    let mut x = sigma;
    for _ in 0..NEWTON_MAX_ITERS {
        let gx = g(x);
        if gx.abs() <= NEWTON_TOL * sigma.max(1.0) {
            return x;
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = dg(x);
        let step = if d > 0.0 { x - gx / d } else { f64::NAN };
        x = if step.is_finite() && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            return x;
        }
    }
    x
}

/// `U diag(prox(σ_j)) Vᵀ`.
pub fn matrix_prox(z: &Matrix, params: &ProxParams) -> Result<Matrix> {
    Ok(matrix_prox_spectrum(z, params)?.0)
}

/// [`matrix_prox`] together with the singular values of the output.
pub fn matrix_prox_spectrum(z: &Matrix, params: &ProxParams) -> Result<(Matrix, Vec<f64>)> {
    params.validate()?;
    z.ensure_finite()?;
    if params.lambda == 0.0 {
        return Ok((z.clone(), densela::singular_values(z)?));
    }
    let mut f = densela::svd(z)?;
    for s in f.singular_values.iter_mut() {
        *s = scalar_prox_unchecked(*s, params);
    }
    Ok((f.reconstruct(), f.singular_values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    /// Grid search over `[0, σ]` followed by golden-section refinement.
    fn oracle(sigma: f64, params: &ProxParams, points: usize) -> f64 {
        let c = params.lambda * params.eta;
        let f = |x: f64| scaled_objective(x, sigma, c, params.p);
        let h = sigma / points as f64;
        let (mut best_i, mut best) = (0usize, f(0.0));
        for i in 1..=points {
            let v = f(i as f64 * h);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        if best_i == 0 {
            return 0.0;
        }
        let (mut a, mut b) = ((best_i as f64 - 1.0) * h, ((best_i + 1) as f64 * h).min(sigma));
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = b - r * (b - a);
            let x2 = a + r * (b - a);
            if f(x1) < f(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let x = 0.5 * (a + b);
        if f(x) < f(0.0) {
            x
        } else {
            0.0
        }
    }

    #[test]
    fn soft_threshold() {
        let p = ProxParams::new(1.0, 2.0, 1.0).unwrap();
        assert_eq!(scalar_prox(5.0, &p).unwrap(), 3.0);
        assert_eq!(scalar_prox(1.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn half_power_examples() {
        let p = ProxParams::new(0.5, 1.0, 1.0).unwrap();
        assert_eq!(scalar_prox(0.1, &p).unwrap(), 0.0);
        assert_eq!(oracle(0.1, &p, 1_000_000), 0.0);
        let x = scalar_prox(5.0, &p).unwrap();
        assert!((x - 4.771).abs() < 1e-3);
        assert!((x - oracle(5.0, &p, 1_000_000)).abs() < 1e-6);
    }

    #[test]
    fn threshold_separates_zero_from_root() {
        for &pp in &[0.3, 0.5, 0.7, 1.0] {
            let p = ProxParams::new(pp, 1.3, 0.7).unwrap();
            let tau = threshold(&p);
            assert_eq!(scalar_prox(tau * 0.999, &p).unwrap(), 0.0);
            assert!(scalar_prox(tau * 1.001, &p).unwrap() > 0.0);
        }
    }

    #[test]
    fn matches_oracle_on_random_inputs() {
        let mut rng = rng_from(3);
        for _ in 0..20 {
            let pp = [0.3, 0.5, 0.7, 1.0][rng.gen_range(0..4)];
            let p = ProxParams::new(pp, rng.gen_range(0.01..3.0), rng.gen_range(0.1..2.0)).unwrap();
            let s = rng.gen_range(0.0..10.0);
            let x = scalar_prox(s, &p).unwrap();
            assert!((x - oracle(s, &p, 100_000)).abs() < 1e-6, "sigma {s} params {p:?}");
        }
    }

    #[test]
    fn zero_and_invalid() {
        let p = ProxParams::new(0.4, 2.0, 1.0).unwrap();
        assert_eq!(scalar_prox(0.0, &p).unwrap(), 0.0);
        assert!(scalar_prox(-1.0, &p).is_err());
        assert!(ProxParams::new(1.5, 1.0, 1.0).is_err());
        assert!(ProxParams::new(0.5, -1.0, 1.0).is_err());
        assert!(ProxParams::new(0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn matrix_examples() {
        let z = Matrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let out = matrix_prox(&z, &ProxParams::new(1.0, 2.0, 1.0).unwrap()).unwrap();
        let want = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(out.max_abs_diff(&want) < 1e-12);

        let z = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.0, 4.0]]).unwrap();
        let out = matrix_prox(&z, &ProxParams::new(0.5, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn diagonal_consistency() {
        let params = ProxParams::new(0.5, 0.8, 1.0).unwrap();
        let d = [3.0, -2.0, 0.4];
        let z = Matrix::from_diag(3, 3, &d);
        let out = matrix_prox(&z, &params).unwrap();
        for (i, &v) in d.iter().enumerate() {
            let want = scalar_prox(v.abs(), &params).unwrap() * v.signum();
            assert!((out[(i, i)] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn local_optimality_probe() {
        let mut rng = rng_from(11);
        let z = Matrix::from_vec(3, 3, (0..9).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let params = ProxParams::new(0.5, 0.5, 1.0).unwrap();
        let x = matrix_prox(&z, &params).unwrap();
        let obj = |a: &Matrix| {
            let d = a.sub(&z).unwrap().frobenius_norm();
            d * d / (2.0 * params.eta) + params.lambda * densela::schatten_pow(a, params.p).unwrap()
        };
        let base = obj(&x);
        for _ in 0..10_000 {
            let dir = Matrix::from_vec(3, 3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let y = x.add_scaled(&dir, 1e-3).unwrap();
            assert!(obj(&y) >= base - 1e-12);
        }
    }
}
