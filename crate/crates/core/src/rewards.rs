//! Frame-to-frame audio similarity used as the per-step reward.
//!
//! All measures compare linear magnitude spectra. Cosine and Hellinger need a
//! convention for silent frames: a norm (or sum) below [`SILENCE_EPS`] counts
//! as silence. Cosine is 0 whenever either side is silent; Hellinger is 0 when
//! both are silent and 1 when exactly one is.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SILENCE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    NegL2,
    NegL1,
    Cosine,
    CombinedHellingerCosine,
}

impl RewardKind {
    pub const ALL: [RewardKind; 4] = [
        RewardKind::NegL2,
        RewardKind::NegL1,
        RewardKind::Cosine,
        RewardKind::CombinedHellingerCosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::NegL2 => "neg_l2",
            RewardKind::NegL1 => "neg_l1",
            RewardKind::Cosine => "cosine",
            RewardKind::CombinedHellingerCosine => "combined_hellinger_cosine",
        }
    }

    pub fn evaluate(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            RewardKind::NegL2 => reward_neg_l2(x, y),
            RewardKind::NegL1 => reward_neg_l1(x, y),
            RewardKind::Cosine => reward_cosine(x, y),
            RewardKind::CombinedHellingerCosine => reward_combined(x, y),
        }
    }

    /// Supremum of the measure.
    pub fn max_value(self) -> f64 {
        match self {
            RewardKind::NegL2 | RewardKind::NegL1 => 0.0,
            RewardKind::Cosine | RewardKind::CombinedHellingerCosine => 1.0,
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RewardKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown reward kind `{s}`")))
    }
}

fn same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "frames differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub fn reward_neg_l2(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x, y)?;
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-sq.sqrt())
}

pub fn reward_neg_l1(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x, y)?;
    Ok(-x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn reward_cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x, y)?;
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nx < SILENCE_EPS || ny < SILENCE_EPS {
        return Ok(0.0);
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).min(1.0))
}

/// Hellinger distance between the sum-normalised vectors.
pub fn hellinger(u: &[f64], v: &[f64]) -> Result<f64> {
    same_len(u, v)?;
    if u.iter().chain(v).any(|&a| a < 0.0 || a.is_nan()) {
        return Err(Error::domain("hellinger needs non-negative entries"));
    }
    let su: f64 = u.iter().sum();
    let sv: f64 = v.iter().sum();
    match (su < SILENCE_EPS, sv < SILENCE_EPS) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(1.0),
        _ => {}
    }
    let sq: f64 = u
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let d = (a / su).sqrt() - (b / sv).sqrt();
            d * d
        })
        .sum();
    Ok((sq.sqrt() / std::f64::consts::SQRT_2).min(1.0))
}

/// `max(cosine, 1 - hellinger)`.
pub fn reward_combined(x: &[f64], y: &[f64]) -> Result<f64> {
    let c = reward_cosine(x, y)?;
    let h = hellinger(x, y)?;
    Ok(c.max(1.0 - h))
}
