//! Packing constructions behind the minimax lower bounds: Varshamov–Gilbert
//! codes, the hypothesis matrices they induce, Kullback–Leibler budgets and
//! the rate `ψ`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::densela::Matrix;
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Longest codeword the packing supports.
pub const MAX_BITS: usize = 128;
/// Codes of length up to this are searched over every candidate.
const EXHAUSTIVE_BITS: usize = 20;
/// Candidate budget for longer codes.
const RANDOM_CANDIDATES: usize = 1 << 20;
/// Largest `⌈n/8⌉` for which a hypothesis set is materialized.
pub const MAX_LOG2_CARD: usize = 12;

fn bits_of(word: u128, n_bits: usize) -> Vec<u8> {
    (0..n_bits).map(|k| ((word >> k) & 1) as u8).collect()
}

/// Greedy binary code with pairwise Hamming distance `≥ min_dist`.
///
/// Candidates are visited in a seeded random order with the all-zero word
/// first; a candidate is kept when it is far enough from every kept word.
/// Stops at `target_card` words or when the candidates run out.
pub fn vg_packing(n_bits: usize, min_dist: usize, target_card: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    Ok(vg_words(n_bits, min_dist, target_card, seed)?
        .into_iter()
        .map(|w| bits_of(w, n_bits))
        .collect())
}

fn vg_words(n_bits: usize, min_dist: usize, target_card: usize, seed: u64) -> Result<Vec<u128>> {
    if n_bits == 0 || n_bits > MAX_BITS {
        return Err(Error::InvalidParameter(format!("n_bits must lie in 1..={MAX_BITS}, got {n_bits}")));
    }
    if min_dist == 0 || min_dist > n_bits {
        return Err(Error::InvalidParameter(format!(
            "min_dist must lie in 1..={n_bits}, got {min_dist}"
        )));
    }
    let mut kept: Vec<u128> = vec![0];
    if target_card <= 1 {
        kept.truncate(target_card);
        return Ok(kept);
    }
    let mut rng = rng_from(seed);
    let consider = |w: u128, kept: &mut Vec<u128>| {
        if kept.iter().all(|k| (k ^ w).count_ones() as usize >= min_dist) {
            kept.push(w);
        }
    };
    if n_bits <= EXHAUSTIVE_BITS {
        let mut order: Vec<u32> = (1..(1u32 << n_bits)).collect();
        order.shuffle(&mut rng);
        for w in order {
            consider(w as u128, &mut kept);
            if kept.len() >= target_card {
                break;
            }
        }
    } else {
        let mask = if n_bits == 128 { u128::MAX } else { (1u128 << n_bits) - 1 };
        let mut seen = HashSet::new();
        for _ in 0..RANDOM_CANDIDATES {
            let w = rng.gen::<u128>() & mask;
            if w == 0 || !seen.insert(w) {
                continue;
            }
            consider(w, &mut kept);
            if kept.len() >= target_card {
                break;
            }
        }
    }
    Ok(kept)
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Hypothesis matrices lifted from a binary code.
#[derive(Clone, Debug, PartialEq)]
pub struct PackingDesign {
    pub n_bits: usize,
    pub min_dist: usize,
    pub codewords: Vec<Vec<u8>>,
    pub s: usize,
    pub gamma: f64,
    pub nu: f64,
    /// Cells carrying the code bits, in bit order.
    pub support: Vec<(usize, usize)>,
    pub hypotheses: Vec<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct PackingFile {
    n_bits: usize,
    min_dist: usize,
    codewords: Vec<Vec<u8>>,
    s: usize,
    gamma: f64,
    nu: f64,
}

impl PackingDesign {
    /// Nonzero entry value `γν/√N`.
    pub fn level(gamma: f64, nu: f64, n_obs: usize) -> f64 {
        gamma * nu / (n_obs as f64).sqrt()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PackingFile {
            n_bits: self.n_bits,
            min_dist: self.min_dist,
            codewords: self.codewords.clone(),
            s: self.s,
            gamma: self.gamma,
            nu: self.nu,
        })?)
    }
}

/// Codewords of length `s·m` placed on the first `s` columns, entries in
/// `{0, γν/√N}`; distance `⌈sm/8⌉` and target size `2^{⌈sm/8⌉}`.
pub fn hypothesis_set(m: usize, t: usize, n_obs: usize, s: usize, gamma: f64, nu: f64, seed: u64) -> Result<PackingDesign> {
    if s == 0 || s > m.min(t) {
        return Err(Error::InvalidParameter(format!("s must lie in 1..={}, got {s}", m.min(t))));
    }
    let support: Vec<(usize, usize)> = (0..s).flat_map(|j| (0..m).map(move |i| (i, j))).collect();
    let mut design = hypothesis_set_on(m, t, n_obs, &support, gamma, nu, seed)?;
    design.s = s;
    Ok(design)
}

/// As [`hypothesis_set`] with the code bits placed on an arbitrary cell set,
/// e.g. the dispersion index set of a CS design.
pub fn hypothesis_set_on(
    m: usize,
    t: usize,
    n_obs: usize,
    support: &[(usize, usize)],
    gamma: f64,
    nu: f64,
    seed: u64,
) -> Result<PackingDesign> {
    if n_obs == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() || !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!("need gamma >= 0 and nu > 0, got {gamma}, {nu}")));
    }
    if support.is_empty() {
        return Err(Error::InvalidParameter("support must be nonempty".into()));
    }
    let distinct: HashSet<_> = support.iter().collect();
    if distinct.len() != support.len() || support.iter().any(|&(i, j)| i >= m || j >= t) {
        return Err(Error::InvalidParameter("support cells must be distinct and inside the matrix".into()));
    }
    let n_bits = support.len();
    let min_dist = n_bits.div_ceil(8);
    if min_dist > MAX_LOG2_CARD {
        return Err(Error::InvalidParameter(format!(
            "packing of 2^{min_dist} hypotheses is too large to materialize (limit 2^{MAX_LOG2_CARD})"
        )));
    }
    let words = vg_words(n_bits, min_dist, 1usize << min_dist, seed)?;
    let level = PackingDesign::level(gamma, nu, n_obs);
    let hypotheses = words
        .iter()
        .map(|&w| {
            let mut a = Matrix::zeros(m, t);
            for (k, &(i, j)) in support.iter().enumerate() {
                if (w >> k) & 1 == 1 {
                    a.as_mut_slice()[i * t + j] = level;
                }
            }
            a
        })
        .collect();
    let s = support.iter().map(|&(_, j)| j + 1).max().unwrap_or(0);
    Ok(PackingDesign {
        n_bits,
        min_dist,
        codewords: words.into_iter().map(|w| bits_of(w, n_bits)).collect(),
        s,
        gamma,
        nu,
        support: support.to_vec(),
        hypotheses,
    })
}

/// `γ² = ασ² log 2 / (4(1+δ)²)`.
pub fn gamma_kl(alpha: f64, sigma: f64, delta: f64) -> f64 {
    (alpha * sigma * sigma * std::f64::consts::LN_2 / (4.0 * (1.0 + delta).powi(2))).sqrt()
}

/// `K_i = N d²_i / (2σ²)`; satisfied when the mean is `≤ α log(card − 1)`.
pub fn kl_budget(n_obs: usize, sigma: f64, pred_sq: &[f64], card: usize, alpha: f64) -> Result<(Vec<f64>, bool)> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if card < 2 {
        return Err(Error::InvalidParameter(format!("cardinality must be >= 2, got {card}")));
    }
    if !(alpha > 0.0 && alpha < 0.125) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1/8), got {alpha}")));
    }
    let kl: Vec<f64> = pred_sq.iter().map(|d| n_obs as f64 * d / (2.0 * sigma * sigma)).collect();
    let mean = if kl.is_empty() { 0.0 } else { kl.iter().sum::<f64>() / kl.len() as f64 };
    Ok((kl, mean <= alpha * ((card - 1) as f64).ln()))
}

/// `ψ = min(rM/N, Δᵖ(M/N)^{1−p/2}, Δ²)` with `M = max(m, T)`.
pub fn psi_rate(m: usize, t: usize, n_obs: usize, r: usize, delta_cap: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 2], got {p}")));
    }
    if r == 0 || n_obs == 0 {
        return Err(Error::InvalidParameter("r and N must be >= 1".into()));
    }
    if !(delta_cap >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta_cap}")));
    }
    let ratio = m.max(t) as f64 / n_obs as f64;
    let first = r as f64 * ratio;
    if delta_cap.is_infinite() {
        return Ok(first);
    }
    Ok(first
        .min(delta_cap.powf(p) * ratio.powf(1.0 - p / 2.0))
        .min(delta_cap * delta_cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela;

    fn all_pairs_ok(words: &[Vec<u8>], d: usize) -> bool {
        (0..words.len()).all(|i| (i + 1..words.len()).all(|j| hamming(&words[i], &words[j]) >= d))
    }

    #[test]
    fn packing_examples() {
        let w = vg_packing(8, 1, 2, 0).unwrap();
        assert_eq!(w.len(), 2);
        assert_ne!(w[0], w[1]);
        let w = vg_packing(16, 2, 4, 1).unwrap();
        assert_eq!(w.len(), 4);
        assert!(all_pairs_ok(&w, 2));
        let w = vg_packing(24, 3, 8, 2).unwrap();
        assert_eq!(w.len(), 8);
        assert!(all_pairs_ok(&w, 3));
        assert!(w[0].iter().all(|&b| b == 0));
        assert!(vg_packing(4, 5, 2, 0).is_err());
        assert_eq!(vg_packing(12, 2, 10, 9).unwrap(), vg_packing(12, 2, 10, 9).unwrap());
    }

    #[test]
    fn exhaustion_stops_early() {
        // length-3 code at distance 3 holds exactly two words
        assert_eq!(vg_packing(3, 3, 100, 4).unwrap().len(), 2);
    }

    #[test]
    fn hypothesis_examples() {
        let d = hypothesis_set(2, 2, 1, 1, 1.0, 1.0, 0).unwrap();
        assert_eq!(d.hypotheses[0], Matrix::zeros(2, 2));
        for h in &d.hypotheses {
            assert!(h.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(h[(0, 1)], 0.0);
            assert_eq!(h[(1, 1)], 0.0);
        }

        let d = hypothesis_set(8, 8, 16, 2, 0.5, 2.0, 3).unwrap();
        assert!(d.hypotheses.len() >= 4);
        for (i, a) in d.hypotheses.iter().enumerate() {
            assert!(densela::numerical_rank(a, 1e-9).unwrap() <= 2);
            for b in &d.hypotheses[i + 1..] {
                let f = a.sub(b).unwrap().frobenius_norm();
                assert!(f * f >= 0.125 - 1e-12);
                assert!(densela::numerical_rank(&a.sub(b).unwrap(), 1e-9).unwrap() <= 2);
            }
        }
        assert!(hypothesis_set(3, 3, 1, 4, 1.0, 1.0, 0).is_err());
        let json: serde_json::Value = serde_json::from_str(&d.to_json().unwrap()).unwrap();
        assert_eq!(json["min_dist"], 2);
    }

    #[test]
    fn kl_examples() {
        let (kl, ok) = kl_budget(100, 1.0, &[0.0], 4, 0.1).unwrap();
        assert_eq!(kl, vec![0.0]);
        assert!(ok);
        let (kl, _) = kl_budget(100, 1.0, &[0.5], 4, 0.1).unwrap();
        assert_eq!(kl, vec![25.0]);
        let card = 1 << 16;
        let (_, ok) = kl_budget(1, 0.5f64.sqrt(), &[1.0, 1.0, 1.0], card, 0.1).unwrap();
        assert!(ok);
        assert!(kl_budget(1, 1.0, &[1.0], 4, 0.2).is_err());
        assert!(kl_budget(1, 1.0, &[1.0], 1, 0.1).is_err());
    }

    #[test]
    fn psi_examples() {
        assert!((psi_rate(40, 10, 1200, 3, f64::INFINITY, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(psi_rate(40, 10, 1200, 3, 0.0, 1.0).unwrap(), 0.0);
        for r in 1..5 {
            assert!((psi_rate(10, 10, 10, r, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(psi_rate(10, 10, 10, 1, 1.0, 2.5).is_err());
    }
}
