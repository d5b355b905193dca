//! Prediction and Schatten errors, the noise matrix, and checks of the
//! oracle inequalities whose constants are explicit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationParams, DEFAULT_D};
use crate::datagen::Dataset;
use crate::densela::{self, dot, Matrix};
use crate::error::{dim_mismatch, Error, Result};
use crate::sampling::{self, SamplingOperator};
use crate::solver::FitResult;

/// Relative tolerance behind `rank_hat`; looser than the linear algebra
/// default because solver output carries optimization error.
pub const RANK_HAT_TOL: f64 = 1e-6;

fn check_pair(op: &SamplingOperator, a: &Matrix, b: &Matrix) -> Result<()> {
    for x in [a, b] {
        if x.shape() != (op.m(), op.t()) {
            return Err(dim_mismatch(
                format!("{}x{}", op.m(), op.t()),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
    }
    Ok(())
}

/// `|𝓛(Â − A*)|² = (1/N) Σ tr²(X_iᵀ(Â − A*))`.
pub fn prediction_error(op: &SamplingOperator, a_hat: &Matrix, a_star: &Matrix) -> Result<f64> {
    check_pair(op, a_hat, a_star)?;
    let l = op.apply(&a_hat.sub(a_star)?)?;
    Ok(dot(&l, &l))
}

/// `M = N⁻¹ Σ ξ_i X_i`.
pub fn noise_matrix(op: &SamplingOperator, xi: &[f64]) -> Result<Matrix> {
    if xi.len() != op.n_obs() {
        return Err(dim_mismatch(format!("{} noise values", op.n_obs()), format!("{}", xi.len())));
    }
    let mut out = Matrix::zeros(op.m(), op.t());
    op.adjoint_into(xi, 1.0 / (op.n_obs() as f64).sqrt(), &mut out);
    Ok(out)
}

pub fn noise_matrix_norm(op: &SamplingOperator, xi: &[f64]) -> Result<f64> {
    densela::spectral_norm(&noise_matrix(op, xi)?)
}

/// `‖Â − A*‖_{S_q}^q`.
pub fn schatten_error(a_hat: &Matrix, a_star: &Matrix, q: f64) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("q must be positive and finite, got {q}")));
    }
    densela::schatten_pow(&a_hat.sub(a_star)?, q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub pred_sq: f64,
    /// `(q, ‖Â − A*‖_{S_q}^q)` pairs.
    pub schatten_q: Vec<(f64, f64)>,
    pub frob_per_entry: f64,
    pub rank_hat: usize,
}

pub fn error_report(op: &SamplingOperator, a_hat: &Matrix, a_star: &Matrix, qs: &[f64]) -> Result<ErrorReport> {
    let pred_sq = prediction_error(op, a_hat, a_star)?;
    let diff = a_hat.sub(a_star)?;
    let sv = densela::singular_values(&diff)?;
    let mut schatten_q = Vec::with_capacity(qs.len());
    for &q in qs {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!("q must be positive and finite, got {q}")));
        }
        schatten_q.push((q, densela::spectrum_power_sum(&sv, q)));
    }
    let f = diff.frobenius_norm();
    Ok(ErrorReport {
        pred_sq,
        schatten_q,
        frob_per_entry: f * f / (op.m() * op.t()) as f64,
        rank_hat: densela::numerical_rank(a_hat, RANK_HAT_TOL)?,
    })
}

/// Oracle inequalities that can be checked against a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckTag {
    /// `d² ≤ 16τ‖A*‖_p^p` with `τ = λ/4`.
    Thm1,
    /// USR completion, `d² ≤ 16C̄‖A*‖₁(m+T)/N`, `C̄ = 4σ√(10D) + 8HD`.
    UsrS1,
    /// CS completion, `d² ≤ 16C̄‖A*‖₁√(m+T)/N`, `C̄ = 8σ√D`.
    CsS1,
    /// Rate factor `σφ_max(1)‖A*‖₁√((m+T)/N)`; ratio only.
    Thm4i,
    /// Rate factor `r(m+T)/N` for multi-task designs; ratio only.
    MtRi,
}

impl CheckTag {
    pub const ALL: [CheckTag; 5] = [CheckTag::Thm1, CheckTag::UsrS1, CheckTag::CsS1, CheckTag::Thm4i, CheckTag::MtRi];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckTag::Thm1 => "thm1",
            CheckTag::UsrS1 => "usr_s1",
            CheckTag::CsS1 => "cs_s1",
            CheckTag::Thm4i => "thm4i",
            CheckTag::MtRi => "mt_ri",
        }
    }

    /// True when the inequality has explicit constants and yields a verdict.
    pub fn is_explicit(&self) -> bool {
        matches!(self, CheckTag::Thm1 | CheckTag::UsrS1 | CheckTag::CsS1)
    }
}

impl fmt::Display for CheckTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckTag::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown bound id '{s}'")))
    }
}

/// Outcome of a bound check. `holds` is `None` for ratio-only bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub bound_id: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: Option<bool>,
}

impl BoundCheck {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }
}

fn need(v: Option<f64>, name: &str, tag: CheckTag) -> Result<f64> {
    v.ok_or_else(|| Error::Configuration(format!("bound {tag} needs '{name}'")))
}

/// Compares the prediction error of `fit` with the selected bound.
pub fn bound_check(tag: CheckTag, data: &Dataset, fit: &FitResult, params: &CalibrationParams) -> Result<BoundCheck> {
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("bound checks need ground truth".into()))?;
    let lhs = prediction_error(&data.op, &fit.a_hat, &truth.a_star)?;
    let (m, t, n) = (data.op.m() as f64, data.op.t() as f64, data.n_obs() as f64);
    let d = params.d_conf.unwrap_or(DEFAULT_D);
    let rhs = match tag {
        CheckTag::Thm1 => {
            let p = params.p.unwrap_or(1.0);
            16.0 * (fit.lambda_used / 4.0) * densela::schatten_pow(&truth.a_star, p)?
        }
        CheckTag::UsrS1 => {
            let sigma = need(params.sigma, "sigma", tag)?;
            let h = need(params.h, "H", tag)?;
            let c_bar = 4.0 * sigma * (10.0 * d).sqrt() + 8.0 * h * d;
            16.0 * c_bar * densela::schatten_pow(&truth.a_star, 1.0)? * (m + t) / n
        }
        CheckTag::CsS1 => {
            let sigma = need(params.sigma, "sigma", tag)?;
            let c_bar = 8.0 * sigma * d.sqrt();
            16.0 * c_bar * densela::schatten_pow(&truth.a_star, 1.0)? * (m + t).sqrt() / n
        }
        CheckTag::Thm4i => {
            let sigma = need(params.sigma, "sigma", tag)?;
            let phi = match params.phi_max1 {
                Some(phi) => phi,
                None => sampling::phi_max1(&data.op, sampling::PHI_RESTARTS)?,
            };
            sigma * phi * densela::schatten_pow(&truth.a_star, 1.0)? * ((m + t) / n).sqrt()
        }
        CheckTag::MtRi => truth.r as f64 * (m + t) / n,
    };
    let holds = if tag.is_explicit() { Some(lhs <= rhs) } else { None };
    Ok(BoundCheck {
        bound_id: tag.as_str(),
        lhs,
        rhs,
        holds,
    })
}

/// Both sides of the basic inequality
/// `d² ≤ (2/N) Σ ξ_i tr((Â−A*)ᵀX_i) + λ(‖A*‖_p^p − ‖Â‖_p^p)`, which follows from
/// `objective(Â) ≤ objective(A*)`.
pub fn basic_inequality(data: &Dataset, a_hat: &Matrix, p: f64, lambda: f64) -> Result<(f64, f64)> {
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("basic inequality needs ground truth".into()))?;
    let lhs = prediction_error(&data.op, a_hat, &truth.a_star)?;
    let xi = data.noise_realization()?;
    let diff = a_hat.sub(&truth.a_star)?;
    let cross: f64 = data.op.masks().iter().zip(&xi).map(|(mk, x)| x * mk.inner(&diff)).sum();
    let pen = if lambda == 0.0 {
        0.0
    } else {
        lambda * (densela::schatten_pow(&truth.a_star, p)? - densela::schatten_pow(a_hat, p)?)
    };
    Ok((lhs, 2.0 * cross / data.n_obs() as f64 + pen))
}
