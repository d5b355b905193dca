//! Effective noise levels `τ`, the regularization weight `λ = 4τ`, the
//! automatic choice of `p` and the rank-inflation constants of the RI analysis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::densela::{self, Matrix};
use crate::error::{Error, Result};
use crate::sampling::{self, SamplingOperator};

pub const DEFAULT_D: f64 = 2.0;
pub const DEFAULT_THETA: f64 = 1.0;

/// Effective noise bound selector. The string forms are the CLI tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundTag {
    Tau1,
    Tau2,
    Tau3,
    Tau4,
    Tau5,
    Tau6,
    Tau7,
    TauRow,
    TauCol,
    Thm4i,
}

impl BoundTag {
    pub const ALL: [BoundTag; 10] = [
        BoundTag::Tau1,
        BoundTag::Tau2,
        BoundTag::Tau3,
        BoundTag::Tau4,
        BoundTag::Tau5,
        BoundTag::Tau6,
        BoundTag::Tau7,
        BoundTag::TauRow,
        BoundTag::TauCol,
        BoundTag::Thm4i,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundTag::Tau1 => "tau1",
            BoundTag::Tau2 => "tau2",
            BoundTag::Tau3 => "tau3",
            BoundTag::Tau4 => "tau4",
            BoundTag::Tau5 => "tau5",
            BoundTag::Tau6 => "tau6",
            BoundTag::Tau7 => "tau7",
            BoundTag::TauRow => "tau_row",
            BoundTag::TauCol => "tau_col",
            BoundTag::Thm4i => "thm4i",
        }
    }
}

impl fmt::Display for BoundTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundTag::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown bound tag '{s}'")))
    }
}

/// Inputs of the effective noise formulas. Unset fields are only an error
/// when the selected bound needs them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub sigma: Option<f64>,
    pub d_conf: Option<f64>,
    pub h: Option<f64>,
    pub b_conf: Option<f64>,
    pub a_conf: Option<f64>,
    pub theta_conf: Option<f64>,
    pub c_star: Option<f64>,
    pub m: Option<usize>,
    pub t: Option<usize>,
    pub n_obs: Option<usize>,
    pub p: Option<f64>,
    pub phi_max1: Option<f64>,
    pub s_row: Option<f64>,
    pub h_row: Option<f64>,
    pub s_col: Option<f64>,
    pub h_col: Option<f64>,
    pub gram_max_cross: Option<f64>,
}

fn need<T: Copy>(v: Option<T>, name: &str, bound: BoundTag) -> Result<T> {
    v.ok_or_else(|| Error::Configuration(format!("bound {bound} needs '{name}'")))
}

impl CalibrationParams {
    pub fn new(sigma: f64, m: usize, t: usize, n_obs: usize) -> Self {
        CalibrationParams {
            sigma: Some(sigma),
            m: Some(m),
            t: Some(t),
            n_obs: Some(n_obs),
            ..Default::default()
        }
    }

    /// Fills `m`, `T`, `N` and, when the bound needs them and they are unset,
    /// `φ_max(1)` and the Gram quantity of `τ₆` from the operator.
    pub fn complete_from(&mut self, bound: BoundTag, op: &SamplingOperator, phi_restarts: usize) -> Result<()> {
        self.m.get_or_insert(op.m());
        self.t.get_or_insert(op.t());
        self.n_obs.get_or_insert(op.n_obs());
        if matches!(bound, BoundTag::Tau1 | BoundTag::Thm4i) && self.phi_max1.is_none() {
            self.phi_max1 = Some(sampling::phi_max1(op, phi_restarts)?);
        }
        if bound == BoundTag::Tau6 && self.gram_max_cross.is_none() {
            self.gram_max_cross = Some(gram_max_cross(op)?);
        }
        Ok(())
    }

    fn d(&self) -> f64 {
        self.d_conf.unwrap_or(DEFAULT_D)
    }

    fn theta(&self) -> f64 {
        self.theta_conf.unwrap_or(DEFAULT_THETA)
    }
}

/// `max{‖Σ XᵢᵀXᵢ‖^{1/2}, ‖Σ XᵢXᵢᵀ‖^{1/2}}`, spectral norms.
pub fn gram_max_cross(op: &SamplingOperator) -> Result<f64> {
    let (m, t) = (op.m(), op.t());
    if let Ok(cells) = op.point_cells() {
        let mut rows = vec![0usize; m];
        let mut cols = vec![0usize; t];
        for (i, j) in cells {
            rows[i] += 1;
            cols[j] += 1;
        }
        let max = rows.into_iter().chain(cols).max().unwrap_or(0);
        return Ok((max as f64).sqrt());
    }
    let mut xtx = Matrix::zeros(t, t);
    let mut xxt = Matrix::zeros(m, m);
    for mask in op.masks() {
        let x = mask.to_dense(m, t);
        xtx.axpy(1.0, &x.transpose().matmul(&x)?);
        xxt.axpy(1.0, &x.matmul(&x.transpose())?);
    }
    Ok(densela::spectral_norm(&xtx)?.sqrt().max(densela::spectral_norm(&xxt)?.sqrt()))
}

/// Value of the selected effective noise bound.
pub fn effective_noise(bound: BoundTag, params: &CalibrationParams) -> Result<f64> {
    let sigma = need(params.sigma, "sigma", bound)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let m = need(params.m, "m", bound)?;
    let t = need(params.t, "T", bound)?;
    let n_obs = need(params.n_obs, "N", bound)?;
    if m == 0 || t == 0 || n_obs == 0 {
        return Err(Error::InvalidParameter("m, T and N must be >= 1".into()));
    }
    let d = params.d();
    if d < 2.0 && !matches!(bound, BoundTag::Tau3 | BoundTag::Tau6 | BoundTag::Tau7) {
        return Err(Error::InvalidParameter(format!("D must be >= 2, got {d}")));
    }
    let (mf, tf, n) = (m as f64, t as f64, n_obs as f64);
    let mt = mf + tf;
    let value = match bound {
        BoundTag::Tau1 => {
            let phi = need(params.phi_max1, "phi_max1", bound)?;
            4.0 * (2.0 * d).sqrt() * sigma * phi * (mt / n).sqrt()
        }
        BoundTag::Tau2 => {
            let h = need(params.h, "H", bound)?;
            (4.0 * sigma * (10.0 * d).sqrt() + 8.0 * h * d) * mt / n
        }
        BoundTag::Tau3 => {
            let b = need(params.b_conf, "B", bound)?;
            if !(b > 0.0) {
                return Err(Error::InvalidParameter(format!("B must be positive, got {b}")));
            }
            b.sqrt() * sigma * (mf + 1.0).max(tf + 1.0).ln() / n.sqrt()
        }
        BoundTag::Tau4 => 8.0 * sigma * d.sqrt() * mt.sqrt() / n,
        BoundTag::Tau5 => {
            let h = need(params.h, "H", bound)?;
            (4.0 * sigma * (2.0 * d * mt).sqrt() + 8.0 * h * d * mt) / n
        }
        BoundTag::Tau6 => {
            let a = need(params.a_conf, "A", bound)?;
            if !(a > 1.0) {
                return Err(Error::InvalidParameter(format!("A must exceed 1, got {a}")));
            }
            let g = need(params.gram_max_cross, "gram_max_cross", bound)?;
            sigma * (2.0 * a * mt.ln()).sqrt() / n * g
        }
        BoundTag::Tau7 => {
            let p = need(params.p, "p", bound)?;
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter(format!("tau7 needs p in (0, 1), got {p}")));
            }
            let kappa = (2.0 - p) / (2.0 - 2.0 * p);
            let c_kappa = (2.0 * kappa - 1.0) * (2.0 * kappa) * kappa.powf(-1.0 / (2.0 * kappa - 1.0));
            let big_m = mf.max(tf);
            let e = 1.0 - p / 2.0;
            c_kappa * (params.theta() / p).powf(e) * (big_m / n).powf(e)
        }
        BoundTag::TauRow => {
            let s = need(params.s_row, "s_row", bound)?;
            let hr = need(params.h_row, "h_row", bound)?;
            let h = need(params.h, "H", bound)?;
            bernstein_tau(sigma, d, s, hr, h, mf, n)
        }
        BoundTag::TauCol => {
            let s = need(params.s_col, "s_col", bound)?;
            let hc = need(params.h_col, "h_col", bound)?;
            let h = need(params.h, "H", bound)?;
            bernstein_tau(sigma, d, s, hc, h, tf, n)
        }
        BoundTag::Thm4i => lambda_thm4i(sigma, need(params.phi_max1, "phi_max1", bound)?, mt, n) / 4.0,
    };
    Ok(value)
}

fn bernstein_tau(sigma: f64, d: f64, s: f64, h_dim: f64, h: f64, dim: f64, n: f64) -> f64 {
    let c = (2.0 * d * sigma * sigma * s * s).sqrt() + 2.0 * d * h_dim * h * (dim.ln() / n).sqrt();
    c * (dim * dim.ln() / n).sqrt()
}

fn lambda_thm4i(sigma: f64, phi: f64, mt: f64, n: f64) -> f64 {
    32.0 * sigma * phi * (mt / n).sqrt()
}

/// `λ = 4τ`; `thm4i` uses its own formula `32σφ_max(1)√((m+T)/N)`.
pub fn lambda_auto(bound: BoundTag, params: &CalibrationParams) -> Result<f64> {
    if bound == BoundTag::Thm4i {
        let sigma = need(params.sigma, "sigma", bound)?;
        let phi = need(params.phi_max1, "phi_max1", bound)?;
        let mt = (need(params.m, "m", bound)? + need(params.t, "T", bound)?) as f64;
        let n = need(params.n_obs, "N", bound)? as f64;
        effective_noise(bound, params)?;
        return Ok(lambda_thm4i(sigma, phi, mt, n));
    }
    Ok(4.0 * effective_noise(bound, params)?)
}

/// `p = 1/ln(N/M)` with `M = max(m, T)`; requires `N > eM`.
pub fn p_auto(n_obs: usize, m: usize, t: usize) -> Result<f64> {
    let big_m = m.max(t) as f64;
    let n = n_obs as f64;
    if big_m == 0.0 || !(n > std::f64::consts::E * big_m) {
        return Err(Error::InvalidParameter(format!("p auto needs N > e*M, got N = {n_obs}, M = {big_m}")));
    }
    Ok(1.0 / (n / big_m).ln())
}

/// Rank inflation `a(p)` and RI level `δ₀(p)` of the RI analysis.
///
/// `a(p)` is the smallest integer exceeding `(6^{1/p}/√2)^{2p/(2−p)}`, computed
/// as `(36/2ᵖ)^{1/(2−p)}` so that integer values are hit exactly.
pub fn ri_inflation(p: f64) -> Result<(u64, f64)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {p}")));
    }
    let x = (36.0 / 2f64.powf(p)).powf(1.0 / (2.0 - p));
    let near = x.round();
    let floor = if (x - near).abs() <= 1e-12 * x.max(1.0) { near } else { x.floor() };
    let a = floor as u64 + 1;
    let delta0 = 0.5 * (1.0 - 3f64.powf(1.0 / p) * (a as f64 / 2.0).powf(0.5 - 1.0 / p));
    Ok((a, delta0))
}
