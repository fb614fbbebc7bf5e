//! Importance weighting and weighted resampling.
//!
//! Each point gets `w_i = p_desired(x_i) / p_original(x_i)`, weights are
//! normalized to sum to one, and `N` points are drawn with replacement with
//! probability `w̃_i`. Draws use inverse-CDF lookup on the cumulative
//! normalized weights, fed by a seeded ChaCha8 stream, so a seed fixes the
//! index sequence on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::Density2D;
use crate::model::Observation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResampleError {
    #[error("all importance weights are zero; no point lies in the desired support")]
    ZeroWeightSum,
    #[error("original density is zero at point {index} ({temperature}, {co2}); densities and points do not match")]
    OriginalZeroAtPoint { index: usize, temperature: f64, co2: f64 },
    #[error("resample plan needs at least one draw")]
    NoDraws,
    #[error("weights cover {weights} points but the source has {source_len}")]
    LengthMismatch { weights: usize, source_len: usize },
}

/// Raw and normalized importance weights, indexed like the source points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSet {
    raw: Vec<f64>,
    normalized: Vec<f64>,
}

impl WeightedSet {
    /// Normalizes raw weights. Fails when they sum to zero.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self, ResampleError> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(ResampleError::ZeroWeightSum);
        }
        let normalized = raw.iter().map(|w| w / total).collect();
        Ok(Self { raw, normalized })
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Kish effective sample size `1 / Σ w̃²`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.normalized.iter().map(|w| w * w).sum::<f64>()
    }

    /// Self-normalized importance estimate `Σ w̃_i g_i`.
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        self.normalized.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Importance weights of `points` for moving from `original` to `desired`.
pub fn compute_weights<P, Q>(
    points: &[(f64, f64)],
    desired: &P,
    original: &Q,
) -> Result<WeightedSet, ResampleError>
where
    P: Density2D + ?Sized,
    Q: Density2D + ?Sized,
{
    let mut raw = Vec::with_capacity(points.len());
    for (index, &(temperature, co2)) in points.iter().enumerate() {
        let q = original.eval(temperature, co2);
        if !(q > 0.0) {
            return Err(ResampleError::OriginalZeroAtPoint {
                index,
                temperature,
                co2,
            });
        }
        raw.push(desired.eval(temperature, co2) / q);
    }
    WeightedSet::from_raw(raw)
}

/// Number of draws and the seed that fixes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplePlan {
    draws: usize,
    seed: u64,
}

impl ResamplePlan {
    pub fn new(draws: usize, seed: u64) -> Result<Self, ResampleError> {
        if draws == 0 {
            return Err(ResampleError::NoDraws);
        }
        Ok(Self { draws, seed })
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Source indices drawn i.i.d. with replacement, `P(i) = w̃_i`.
pub fn draw_indices(weights: &WeightedSet, plan: &ResamplePlan) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights.normalized() {
        acc += w;
        cdf.push(acc);
    }
    // rounding can leave the last cumulative value a hair below 1
    let last_positive = weights
        .normalized()
        .iter()
        .rposition(|w| *w > 0.0)
        .expect("normalized weights have positive mass");
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    (0..plan.draws)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.partition_point(|c| *c <= u).min(last_positive)
        })
        .collect()
}

/// Resampled observations with the source index of every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resampled {
    pub observations: Vec<Observation>,
    pub source_indices: Vec<usize>,
}

pub fn resample(
    source: &[Observation],
    weights: &WeightedSet,
    plan: &ResamplePlan,
) -> Result<Resampled, ResampleError> {
    if source.len() != weights.len() {
        return Err(ResampleError::LengthMismatch {
            weights: weights.len(),
            source_len: source.len(),
        });
    }
    let source_indices = draw_indices(weights, plan);
    Ok(Resampled {
        observations: source_indices.iter().map(|&i| source[i]).collect(),
        source_indices,
    })
}
