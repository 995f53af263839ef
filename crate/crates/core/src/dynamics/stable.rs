use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::StableJumps;

/// Sampler for the stable-like jumps truncated below at ε.
///
/// Sizes above ε have density proportional to z^{-2-𝔟}, so the tail is
/// P(Z > z) = (z/ε)^{-1-𝔟} and z = ε·U^{-1/(1+𝔟)} is an exact draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableJumpSampler {
    pub index: f64,
    pub normalization: f64,
    pub truncation: f64,
}

impl StableJumpSampler {
    pub fn new(index: f64, normalization: f64, truncation: f64) -> Result<Self> {
        if !(index > -1.0 && index < 0.0) {
            return Err(invalid("stable.index", "must lie in (-1, 0)"));
        }
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(invalid("stable.normalization", "must be positive"));
        }
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(invalid("stable.truncation", "must be positive"));
        }
        Ok(StableJumpSampler {
            index,
            normalization,
            truncation,
        })
    }

    pub fn from_law(stable: &StableJumps) -> Result<Self> {
        Self::new(stable.index, stable.density_constant(), stable.truncation_level())
    }

    /// Λ(ε) = C ε^{-1-𝔟} / (1+𝔟): jump rate per unit trait.
    pub fn rate(&self) -> f64 {
        self.rate_above(self.truncation)
    }

    pub fn rate_above(&self, level: f64) -> f64 {
        let b = self.index;
        self.normalization * level.powf(-1.0 - b) / (1.0 + b)
    }

    /// ∫_0^ε z ρ(dz): drift per unit trait dropped by the truncation.
    pub fn truncation_bias(&self) -> f64 {
        self.mean_between(0.0, self.truncation)
    }

    /// ∫_lo^hi z ρ(dz).
    pub fn mean_between(&self, lo: f64, hi: f64) -> f64 {
        let b = self.index;
        self.normalization * (hi.powf(-b) - lo.powf(-b)) / (-b)
    }

    pub fn tail_probability(&self, z: f64) -> f64 {
        if z <= self.truncation {
            1.0
        } else {
            (z / self.truncation).powf(-1.0 - self.index)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_above(self.truncation, rng)
    }

    /// Draw from ρ restricted to (level, ∞), normalized.
    pub fn sample_above<R: Rng + ?Sized>(&self, level: f64, rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        level * u.powf(-1.0 / (1.0 + self.index))
    }
}
