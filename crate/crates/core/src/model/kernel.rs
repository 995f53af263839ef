//! Sharing kernels: the symmetric law of the fraction of parasites inherited
//! by one daughter cell at division.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Raw, possibly asymmetric description of a kernel as it appears in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelSpec {
    Uniform,
    EqualSharing,
    TwoPoint { theta0: f64 },
    Table { atoms: Vec<f64>, weights: Vec<f64> },
}

/// Symmetric sharing law κ on (0, 1).
///
/// Tables are mirrored on construction, so every value of this type satisfies
/// `E[f(Θ)] = E[f(1 - Θ)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub enum SharingKernel {
    /// κ(dθ) = dθ.
    Uniform,
    /// κ = δ_{1/2}.
    EqualSharing,
    /// κ = ½δ_{θ₀} + ½δ_{1-θ₀}, θ₀ ∈ (0, ½).
    TwoPoint { theta0: f64 },
    /// Finite symmetric table; atoms in (0, 1), weights summing to one.
    Table { atoms: Vec<f64>, weights: Vec<f64> },
}

impl SharingKernel {
    pub fn two_point(theta0: f64) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 < 0.5) {
            return Err(invalid("theta0", format!("must lie in (0, 1/2), got {theta0}")));
        }
        Ok(SharingKernel::TwoPoint { theta0 })
    }

    /// Builds a table kernel, mirroring every atom θ ↦ 1-θ and halving the weights.
    pub fn symmetric_table(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(invalid("atoms", "atoms and weights must be non-empty and of equal length"));
        }
        if atoms.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(invalid("atoms", "every atom must lie in (0, 1)"));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights", "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(invalid("weights", "weights must have positive total"));
        }
        let mut mirrored: Vec<(f64, f64)> = Vec::with_capacity(2 * atoms.len());
        for (&a, &w) in atoms.iter().zip(weights) {
            let w = 0.5 * w / total;
            mirrored.push((a, w));
            mirrored.push((1.0 - a, w));
        }
        mirrored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(mirrored.len());
        for (a, w) in mirrored {
            match merged.last_mut() {
                Some(last) if (last.0 - a).abs() < 1e-15 => last.1 += w,
                _ => merged.push((a, w)),
            }
        }
        let (atoms, weights) = merged.into_iter().unzip();
        Ok(SharingKernel::Table { atoms, weights })
    }

    /// λ⁻ = inf{λ < 0 : E[Θ^λ] < ∞}.
    pub fn lambda_minus(&self) -> f64 {
        match self {
            SharingKernel::Uniform => -1.0,
            _ => f64::NEG_INFINITY,
        }
    }

    /// E[Θ^λ], or +∞ when λ ≤ λ⁻.
    pub fn mellin(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 1.0;
        }
        match self {
            SharingKernel::Uniform => {
                if lambda <= -1.0 {
                    f64::INFINITY
                } else {
                    1.0 / (lambda + 1.0)
                }
            }
            SharingKernel::EqualSharing => 0.5f64.powf(lambda),
            SharingKernel::TwoPoint { theta0 } => {
                0.5 * (theta0.powf(lambda) + (1.0 - theta0).powf(lambda))
            }
            SharingKernel::Table { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .map(|(a, w)| w * a.powf(lambda))
                .sum(),
        }
    }

    /// d/dλ E[Θ^λ] = E[Θ^λ ln Θ], or -∞ when λ ≤ λ⁻.
    pub fn mellin_derivative(&self, lambda: f64) -> f64 {
        match self {
            SharingKernel::Uniform => {
                if lambda <= -1.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.0 / ((lambda + 1.0) * (lambda + 1.0))
                }
            }
            SharingKernel::EqualSharing => -std::f64::consts::LN_2 * 0.5f64.powf(lambda),
            SharingKernel::TwoPoint { theta0 } => {
                let t = *theta0;
                0.5 * (t.powf(lambda) * t.ln() + (1.0 - t).powf(lambda) * (1.0 - t).ln())
            }
            SharingKernel::Table { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .map(|(a, w)| w * a.powf(lambda) * a.ln())
                .sum(),
        }
    }

    /// E[ln Θ].
    pub fn log_moment(&self) -> f64 {
        match self {
            SharingKernel::Uniform => -1.0,
            SharingKernel::EqualSharing => -std::f64::consts::LN_2,
            SharingKernel::TwoPoint { theta0 } => 0.5 * (theta0 * (1.0 - theta0)).ln(),
            SharingKernel::Table { atoms, weights } => {
                atoms.iter().zip(weights).map(|(a, w)| w * a.ln()).sum()
            }
        }
    }

    /// E[Θ ln Θ].
    pub fn theta_log_moment(&self) -> f64 {
        match self {
            SharingKernel::Uniform => -0.25,
            SharingKernel::EqualSharing => 0.5 * 0.5f64.ln(),
            SharingKernel::TwoPoint { theta0 } => {
                let t = *theta0;
                0.5 * (t * t.ln() + (1.0 - t) * (1.0 - t).ln())
            }
            SharingKernel::Table { atoms, weights } => {
                atoms.iter().zip(weights).map(|(a, w)| w * a * a.ln()).sum()
            }
        }
    }

    /// E[Θ(1-Θ)].
    pub fn product_moment(&self) -> f64 {
        self.mellin(1.0) - self.mellin(2.0)
    }

    /// P(Θ ≤ θ).
    pub fn cdf(&self, theta: f64) -> f64 {
        let atom_cdf = |atoms: &[(f64, f64)]| -> f64 {
            atoms.iter().filter(|(a, _)| *a <= theta).map(|(_, w)| w).sum()
        };
        match self {
            SharingKernel::Uniform => theta.clamp(0.0, 1.0),
            SharingKernel::EqualSharing => {
                if theta >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            SharingKernel::TwoPoint { theta0 } => {
                atom_cdf(&[(*theta0, 0.5), (1.0 - theta0, 0.5)])
            }
            SharingKernel::Table { atoms, weights } => {
                let pairs: Vec<(f64, f64)> =
                    atoms.iter().copied().zip(weights.iter().copied()).collect();
                atom_cdf(&pairs)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SharingKernel::Uniform => {
                // open interval: Θ = 0 would put the whole load in one daughter
                loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        return u;
                    }
                }
            }
            SharingKernel::EqualSharing => 0.5,
            SharingKernel::TwoPoint { theta0 } => {
                if rng.random::<bool>() {
                    *theta0
                } else {
                    1.0 - theta0
                }
            }
            SharingKernel::Table { atoms, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("table kernels are non-empty")
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SharingKernel::Uniform => "uniform",
            SharingKernel::EqualSharing => "equal-sharing",
            SharingKernel::TwoPoint { .. } => "two-point",
            SharingKernel::Table { .. } => "table",
        }
    }
}

impl TryFrom<KernelSpec> for SharingKernel {
    type Error = crate::error::Error;

    fn try_from(spec: KernelSpec) -> Result<Self> {
        match spec {
            KernelSpec::Uniform => Ok(SharingKernel::Uniform),
            KernelSpec::EqualSharing => Ok(SharingKernel::EqualSharing),
            KernelSpec::TwoPoint { theta0 } => SharingKernel::two_point(theta0),
            KernelSpec::Table { atoms, weights } => SharingKernel::symmetric_table(&atoms, &weights),
        }
    }
}

impl From<SharingKernel> for KernelSpec {
    fn from(k: SharingKernel) -> Self {
        match k {
            SharingKernel::Uniform => KernelSpec::Uniform,
            SharingKernel::EqualSharing => KernelSpec::EqualSharing,
            SharingKernel::TwoPoint { theta0 } => KernelSpec::TwoPoint { theta0 },
            SharingKernel::Table { atoms, weights } => KernelSpec::Table { atoms, weights },
        }
    }
}
