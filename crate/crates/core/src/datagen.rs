//! Synthetic ground truth, mask designs, noise and dataset assembly.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::densela::{self, Matrix};
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::sampling::{Mask, SamplingOperator};

/// Low-rank target `A*`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub a_star: Matrix,
    pub r: usize,
    pub spectral_scale: f64,
}

/// `A* = G₁G₂ᵀ` with standard normal factors of width `r`, rescaled so that
/// `σ₁(A*) = spectral_scale`. `r = 0` yields the zero matrix.
pub fn gen_ground_truth(m: usize, t: usize, r: usize, spectral_scale: f64, seed: u64) -> Result<GroundTruth> {
    if m == 0 || t == 0 {
        return Err(Error::InvalidParameter("m and T must be positive".into()));
    }
    if r > m.min(t) {
        return Err(Error::InvalidParameter(format!("rank {r} exceeds min(m,T) = {}", m.min(t))));
    }
    if !(spectral_scale > 0.0) || !spectral_scale.is_finite() {
        return Err(Error::InvalidParameter(format!("spectral scale must be positive, got {spectral_scale}")));
    }
    if r == 0 {
        return Ok(GroundTruth {
            a_star: Matrix::zeros(m, t),
            r,
            spectral_scale: 0.0,
        });
    }
    let mut rng = rng_from(seed);
    let g1 = Matrix::from_vec(m, r, (0..m * r).map(|_| rng.sample(StandardNormal)).collect())?;
    let g2 = Matrix::from_vec(t, r, (0..t * r).map(|_| rng.sample(StandardNormal)).collect())?;
    let prod = g1.matmul(&g2.transpose())?;
    let s1 = densela::spectral_norm(&prod)?;
    Ok(GroundTruth {
        a_star: prod.scale(spectral_scale / s1),
        r,
        spectral_scale,
    })
}

/// Noise distribution of `ξ_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel {
    Noiseless,
    Gaussian { sigma: f64 },
    /// `ξ = σ ε` with Rademacher `ε`; satisfies `E|ξ|ˡ ≤ ½ l! σ² Hˡ⁻²`.
    BoundedBernstein { sigma: f64, h: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(NoiseModel::Gaussian { sigma })
    }

    /// Checks the Bernstein moment condition for l = 2..8 before accepting.
    pub fn bounded_bernstein(sigma: f64, h: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("H must be positive, got {h}")));
        }
        if h < sigma {
            return Err(Error::InvalidParameter(format!(
                "Rademacher noise needs H >= sigma, got sigma = {sigma}, H = {h}"
            )));
        }
        let mut factorial = 1.0;
        for l in 2..=8i32 {
            factorial *= l as f64;
            // E|ξ|ˡ = σˡ for the Rademacher construction
            let moment = sigma.powi(l);
            let bound = 0.5 * factorial * sigma * sigma * h.powi(l - 2);
            if moment > bound * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "Bernstein condition fails at l = {l} for sigma = {sigma}, H = {h}"
                )));
            }
        }
        Ok(NoiseModel::BoundedBernstein { sigma, h })
    }

    pub fn sigma(&self) -> f64 {
        match self {
            NoiseModel::Noiseless => 0.0,
            NoiseModel::Gaussian { sigma } | NoiseModel::BoundedBernstein { sigma, .. } => *sigma,
        }
    }

    pub fn h(&self) -> Option<f64> {
        match self {
            NoiseModel::BoundedBernstein { h, .. } => Some(*h),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NoiseModel::Noiseless => "none",
            NoiseModel::Gaussian { .. } => "gaussian",
            NoiseModel::BoundedBernstein { .. } => "bernstein",
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        match *self {
            NoiseModel::Noiseless => vec![0.0; n],
            NoiseModel::Gaussian { sigma } => {
                let d = Normal::new(0.0, sigma).expect("validated sigma");
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            NoiseModel::BoundedBernstein { sigma, .. } => (0..n)
                .map(|_| if rng.gen::<bool>() { sigma } else { -sigma })
                .collect(),
        }
    }
}

/// Sampling scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Uniform sampling with replacement of point masks.
    Usr,
    /// Collaborative sampling: distinct point masks.
    Cs,
    /// `n` observations per task with standard normal predictors.
    Multitask { n: usize },
    /// Masks with i.i.d. standard normal entries.
    GaussianDense,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Usr => write!(f, "usr"),
            Scenario::Cs => write!(f, "cs"),
            Scenario::Multitask { .. } => write!(f, "multitask"),
            Scenario::GaussianDense => write!(f, "gaussian_dense"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// Parses `usr`, `cs`, `gaussian_dense`, `multitask` (n filled in later) or
    /// `multitask:<n>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "usr" => Ok(Scenario::Usr),
            "cs" => Ok(Scenario::Cs),
            "gaussian_dense" => Ok(Scenario::GaussianDense),
            "multitask" => Ok(Scenario::Multitask { n: 0 }),
            other => {
                if let Some(n) = other.strip_prefix("multitask:") {
                    let n = n
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad multitask size in '{other}'")))?;
                    Ok(Scenario::Multitask { n })
                } else {
                    Err(Error::InvalidParameter(format!("unknown scenario '{other}'")))
                }
            }
        }
    }
}

/// Generates masks for a scenario. `n_or_total` is the per-task sample size
/// for multi-task designs and the total `N` otherwise.
pub fn gen_masks(scenario: Scenario, m: usize, t: usize, n_or_total: usize, seed: u64) -> Result<SamplingOperator> {
    if m == 0 || t == 0 {
        return Err(Error::InvalidParameter("m and T must be positive".into()));
    }
    if n_or_total == 0 {
        return Err(Error::InvalidParameter("number of observations must be >= 1".into()));
    }
    let mut rng = rng_from(seed);
    let masks: Vec<Mask> = match scenario {
        Scenario::Usr => (0..n_or_total)
            .map(|_| Mask::Point {
                row: rng.gen_range(0..m),
                col: rng.gen_range(0..t),
            })
            .collect(),
        Scenario::Cs => {
            if n_or_total > m * t {
                return Err(Error::InvalidParameter(format!(
                    "CS design needs N <= mT = {}, got {n_or_total}",
                    m * t
                )));
            }
            index::sample(&mut rng, m * t, n_or_total)
                .into_iter()
                .map(|c| Mask::Point { row: c / t, col: c % t })
                .collect()
        }
        Scenario::Multitask { .. } => (0..t)
            .flat_map(|task| (0..n_or_total).map(move |_| task))
            .map(|task| Mask::Column {
                task,
                x: (0..m).map(|_| rng.sample(StandardNormal)).collect(),
            })
            .collect(),
        Scenario::GaussianDense => (0..n_or_total)
            .map(|_| Mask::Dense {
                data: Matrix::from_vec(m, t, (0..m * t).map(|_| rng.sample(StandardNormal)).collect())
                    .expect("shape"),
            })
            .collect(),
    };
    SamplingOperator::new(m, t, masks)
}

/// Observations of the trace regression model together with their provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub op: SamplingOperator,
    pub y: Vec<f64>,
    pub truth: Option<GroundTruth>,
    pub noise: NoiseModel,
    pub seed: u64,
    pub scenario: Scenario,
}

impl Dataset {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// `y / √N`, the response vector in the scaling of the sampling operator.
    pub fn scaled_y(&self) -> Vec<f64> {
        let s = 1.0 / (self.y.len() as f64).sqrt();
        self.y.iter().map(|v| v * s).collect()
    }

    /// Realized noise `ξ_i = Y_i − trace(X_iᵀ A*)`; needs ground truth.
    pub fn noise_realization(&self) -> Result<Vec<f64>> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("dataset carries no ground truth".into()))?;
        Ok(self
            .op
            .masks()
            .iter()
            .zip(&self.y)
            .map(|(mask, y)| y - mask.inner(&truth.a_star))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// `Y_i = trace(X_iᵀ A*) + ξ_i`.
pub fn gen_dataset(
    truth: GroundTruth,
    op: SamplingOperator,
    scenario: Scenario,
    noise: NoiseModel,
    seed: u64,
) -> Result<Dataset> {
    if truth.a_star.shape() != (op.m(), op.t()) {
        return Err(crate::error::dim_mismatch(
            format!("{}x{}", op.m(), op.t()),
            format!("{}x{}", truth.a_star.rows(), truth.a_star.cols()),
        ));
    }
    let xi = noise.sample(op.n_obs(), seed);
    let y = op
        .masks()
        .iter()
        .zip(&xi)
        .map(|(mask, e)| mask.inner(&truth.a_star) + e)
        .collect();
    let scenario = match scenario {
        Scenario::Multitask { .. } => Scenario::Multitask { n: op.n_obs() / op.t() },
        s => s,
    };
    Ok(Dataset {
        op,
        y,
        truth: Some(truth),
        noise,
        seed,
        scenario,
    })
}

/// On-disk JSON layout of a [`Dataset`].
#[derive(Serialize, Deserialize)]
struct DatasetFile {
    m: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N")]
    n: usize,
    scenario: String,
    seed: u64,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<String>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    masks: Vec<Mask>,
    y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a_star: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
}

impl From<&Dataset> for DatasetFile {
    fn from(d: &Dataset) -> Self {
        DatasetFile {
            m: d.op.m(),
            t: d.op.t(),
            n: d.n_obs(),
            scenario: d.scenario.to_string(),
            seed: d.seed,
            sigma: d.noise.sigma(),
            noise: Some(d.noise.kind().to_string()),
            h: d.noise.h(),
            masks: d.op.masks().to_vec(),
            y: d.y.clone(),
            a_star: d.truth.as_ref().map(|g| g.a_star.clone()),
            r: d.truth.as_ref().map(|g| g.r),
        }
    }
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = Error;

    fn try_from(f: DatasetFile) -> Result<Self> {
        if f.masks.len() != f.n || f.y.len() != f.n {
            return Err(Error::InvalidInput(format!(
                "N = {} but {} masks and {} responses",
                f.n,
                f.masks.len(),
                f.y.len()
            )));
        }
        if !f.y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("responses must be finite".into()));
        }
        let op = SamplingOperator::new(f.m, f.t, f.masks)?;
        let scenario = match f.scenario.parse()? {
            Scenario::Multitask { .. } => Scenario::Multitask { n: f.n / f.t },
            s => s,
        };
        let noise = match (f.noise.as_deref(), f.sigma) {
            (Some("none"), _) => NoiseModel::Noiseless,
            (_, 0.0) => NoiseModel::Noiseless,
            (Some("bernstein"), s) => NoiseModel::bounded_bernstein(s, f.h.unwrap_or(s))?,
            (Some("gaussian") | None, s) => NoiseModel::gaussian(s)?,
            (Some(other), _) => return Err(Error::InvalidInput(format!("unknown noise kind '{other}'"))),
        };
        let truth = match f.a_star {
            Some(a_star) => {
                if a_star.shape() != (f.m, f.t) {
                    return Err(Error::InvalidInput("a_star has wrong shape".into()));
                }
                let r = match f.r {
                    Some(r) => r,
                    None => densela::numerical_rank(&a_star, densela::DEFAULT_RANK_TOL)?,
                };
                let spectral_scale = densela::spectral_norm(&a_star)?;
                Some(GroundTruth { a_star, r, spectral_scale })
            }
            None => None,
        };
        Ok(Dataset {
            op,
            y: f.y,
            truth,
            noise,
            seed: f.seed,
            scenario,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ground_truth_examples() {
        let g = gen_ground_truth(4, 5, 0, 1.0, 1).unwrap();
        assert_eq!(g.a_star, Matrix::zeros(4, 5));

        let g = gen_ground_truth(10, 8, 3, 1.0, 9).unwrap();
        assert_eq!(densela::numerical_rank(&g.a_star, 1e-9).unwrap(), 3);
        assert!((densela::spectral_norm(&g.a_star).unwrap() - 1.0).abs() < 1e-9);

        let again = gen_ground_truth(10, 8, 3, 1.0, 9).unwrap();
        assert_eq!(g.a_star.as_slice(), again.a_star.as_slice());
        assert!(gen_ground_truth(3, 3, 4, 1.0, 0).is_err());
    }

    #[test]
    fn cs_complete_covers_every_cell() {
        let op = gen_masks(Scenario::Cs, 3, 4, 12, 5).unwrap();
        let cells: HashSet<_> = op.point_cells().unwrap().into_iter().collect();
        assert_eq!(cells.len(), 12);
        assert!(op.is_complete_design());
        assert!(matches!(
            gen_masks(Scenario::Cs, 3, 4, 13, 5),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn usr_uniformity() {
        let n = 16_000;
        let op = gen_masks(Scenario::Usr, 4, 4, n, 77).unwrap();
        let mut counts = [0usize; 16];
        for (i, j) in op.point_cells().unwrap() {
            counts[i * 4 + j] += 1;
        }
        let mean = n as f64 / 16.0;
        let sd = (n as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c}");
        }
    }

    #[test]
    fn multitask_counts() {
        let op = gen_masks(Scenario::Multitask { n: 5 }, 3, 2, 5, 1).unwrap();
        assert_eq!(op.n_obs(), 10);
        let per_task = op
            .masks()
            .iter()
            .filter(|m| matches!(m, Mask::Column { task: 0, .. }))
            .count();
        assert_eq!(per_task, 5);
    }

    #[test]
    fn noiseless_dataset_is_exact() {
        let g = gen_ground_truth(5, 4, 2, 3.0, 1).unwrap();
        let op = gen_masks(Scenario::Usr, 5, 4, 30, 2).unwrap();
        let d = gen_dataset(g.clone(), op.clone(), Scenario::Usr, NoiseModel::Noiseless, 3).unwrap();
        for (mask, y) in op.masks().iter().zip(&d.y) {
            assert_eq!(*y, mask.inner(&g.a_star));
        }
        let d2 = gen_dataset(g, op, Scenario::Usr, NoiseModel::Noiseless, 3).unwrap();
        assert_eq!(d.y, d2.y);
    }

    #[test]
    fn gaussian_noise_variance() {
        let n = 100_000;
        let g = gen_ground_truth(2, 2, 0, 1.0, 0).unwrap();
        let op = gen_masks(Scenario::Usr, 2, 2, n, 0).unwrap();
        let d = gen_dataset(g, op, Scenario::Usr, NoiseModel::gaussian(2.0).unwrap(), 11).unwrap();
        let mean = d.y.iter().sum::<f64>() / n as f64;
        let var = d.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(var > 3.9 && var < 4.1, "variance {var}");
    }

    #[test]
    fn bernstein_construction() {
        assert!(NoiseModel::bounded_bernstein(1.0, 1.0).is_ok());
        assert!(NoiseModel::bounded_bernstein(2.0, 1.0).is_err());
        let xi = NoiseModel::bounded_bernstein(0.5, 1.0).unwrap().sample(100, 4);
        assert!(xi.iter().all(|x| x.abs() == 0.5));
        assert!(NoiseModel::gaussian(0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = gen_ground_truth(3, 4, 1, 2.0, 1).unwrap();
        let op = gen_masks(Scenario::Multitask { n: 2 }, 3, 4, 2, 2).unwrap();
        let d = gen_dataset(g, op, Scenario::Multitask { n: 2 }, NoiseModel::gaussian(0.3).unwrap(), 3).unwrap();
        let back = Dataset::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back.y, d.y);
        assert_eq!(back.op, d.op);
        assert_eq!(back.scenario, Scenario::Multitask { n: 2 });
        assert_eq!(back.truth.unwrap().a_star, d.truth.unwrap().a_star);
        assert!(Dataset::from_json(r#"{"m":2,"T":2,"N":1,"scenario":"usr","seed":0,"sigma":1.0,"masks":[],"y":[1.0]}"#).is_err());
    }
}
