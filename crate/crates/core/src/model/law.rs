use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use super::kernel::SharingKernel;
use super::profile::Profile;
use crate::error::{invalid, Result};
use crate::numeric;

/// Law of a single compensated jump size under π / Λ_π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SizeLaw {
    Fixed { size: f64 },
    Exponential { mean: f64 },
    Uniform { low: f64, high: f64 },
}

impl SizeLaw {
    pub fn mean(&self) -> f64 {
        match self {
            SizeLaw::Fixed { size } => *size,
            SizeLaw::Exponential { mean } => *mean,
            SizeLaw::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            SizeLaw::Fixed { size } => size * size,
            SizeLaw::Exponential { mean } => 2.0 * mean * mean,
            SizeLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SizeLaw::Fixed { size } => *size,
            SizeLaw::Exponential { mean } => {
                Exp::new(1.0 / mean).expect("validated mean").sample(rng)
            }
            SizeLaw::Uniform { low, high } => rng.random_range(*low..=*high),
        }
    }

    /// Draws from the size-biased law z·P(dz) / E[Z].
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SizeLaw::Fixed { size } => *size,
            SizeLaw::Exponential { mean } => {
                Gamma::new(2.0, *mean).expect("validated mean").sample(rng)
            }
            SizeLaw::Uniform { low, high } => loop {
                let z = rng.random_range(*low..=*high);
                if rng.random::<f64>() * high <= z {
                    return z;
                }
            },
        }
    }

    /// E[f(Z)].
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        match self {
            SizeLaw::Fixed { size } => f(*size),
            SizeLaw::Exponential { mean } => {
                let m = *mean;
                numeric::integrate_to_infinity(|z| f(z) * (-z / m).exp() / m, 0.0, 1e-11)
            }
            SizeLaw::Uniform { low, high } => {
                if high == low {
                    f(*low)
                } else {
                    numeric::integrate(&f, *low, *high, 1e-12) / (high - low)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SizeLaw::Fixed { size } => *size > 0.0 && size.is_finite(),
            SizeLaw::Exponential { mean } => *mean > 0.0 && mean.is_finite(),
            SizeLaw::Uniform { low, high } => *low >= 0.0 && high >= low && high.is_finite() && *high > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("jumps.sizes", format!("{self:?} is not a valid positive size law")))
        }
    }
}

/// Finite-activity jump measure π = Λ_π · (size law).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasure {
    /// Total mass Λ_π.
    pub mass: f64,
    pub sizes: SizeLaw,
}

impl JumpMeasure {
    /// ∫ z π(dz)
    pub fn first_moment(&self) -> f64 {
        self.mass * self.sizes.mean()
    }

    /// ∫ z² π(dz)
    pub fn second_moment(&self) -> f64 {
        self.mass * self.sizes.second_moment()
    }

    /// ∫ f(z) π(dz)
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.mass * self.sizes.expect(f)
    }
}

/// Positive stable-like jumps with density C / z^{2+b} and rate proportional to the trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableJumps {
    /// c_𝔟 ≤ 0; zero disables the jumps.
    pub coeff: f64,
    /// 𝔟 ∈ (-1, 0).
    pub index: f64,
    /// Overrides the default density constant C.
    #[serde(default)]
    pub normalization: Option<f64>,
    /// Overrides the default small-jump truncation ε.
    #[serde(default)]
    pub truncation: Option<f64>,
}

/// Per-unit-time bias budget of the small-jump truncation, relative to the trait.
pub const STABLE_TRUNCATION_BIAS: f64 = 1e-4;

impl StableJumps {
    pub fn is_active(&self) -> bool {
        self.coeff != 0.0
    }

    /// C = |c_𝔟|·|𝔟|·(𝔟+1)/Γ(1-𝔟) unless overridden.
    pub fn density_constant(&self) -> f64 {
        self.normalization.unwrap_or_else(|| {
            let b = self.index;
            self.coeff.abs() * b.abs() * (b + 1.0) / statrs::function::gamma::gamma(1.0 - b)
        })
    }

    /// ∫_0^ε z ρ(dz) = C ε^{-𝔟} / (-𝔟): drift lost per unit trait per unit time.
    pub fn truncation_bias(&self, epsilon: f64) -> f64 {
        let b = self.index;
        self.density_constant() * epsilon.powf(-b) / (-b)
    }

    /// ε such that the truncation bias per unit trait equals [`STABLE_TRUNCATION_BIAS`].
    pub fn truncation_level(&self) -> f64 {
        self.truncation.unwrap_or_else(|| {
            let b = self.index;
            (STABLE_TRUNCATION_BIAS * (-b) / self.density_constant()).powf(1.0 / (-b))
        })
    }

    fn validate(&self) -> Result<()> {
        if self.coeff > 0.0 || !self.coeff.is_finite() {
            return Err(invalid("stable.coeff", "must be finite and ≤ 0"));
        }
        if !(self.index > -1.0 && self.index < 0.0) {
            return Err(invalid("stable.index", "must lie in (-1, 0)"));
        }
        if let Some(c) = self.normalization {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid("stable.normalization", "must be positive"));
            }
        }
        if let Some(e) = self.truncation {
            if !(e > 0.0 && e.is_finite()) {
                return Err(invalid("stable.truncation", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-cell parasite dynamics: drift g, diffusion σ², compensated jumps at
/// rate p with measure π, and optional stable-like jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParasiteLaw {
    pub drift: Profile,
    /// σ²(x)
    pub diffusion: Profile,
    /// p(x)
    #[serde(default = "Profile::zero")]
    pub jump_rate: Profile,
    #[serde(default)]
    pub jumps: Option<JumpMeasure>,
    #[serde(default)]
    pub stable: Option<StableJumps>,
}

impl ParasiteLaw {
    /// g(x) = g·x, σ²(x) = σ²·x², no jumps.
    pub fn geometric(g: f64, sigma2: f64) -> Self {
        ParasiteLaw {
            drift: Profile::linear(g),
            diffusion: Profile::monomial(sigma2, 2.0),
            jump_rate: Profile::zero(),
            jumps: None,
            stable: None,
        }
    }

    pub fn with_jumps(mut self, jump_rate: Profile, jumps: JumpMeasure) -> Self {
        self.jump_rate = jump_rate;
        self.jumps = Some(jumps);
        self
    }

    pub fn with_stable(mut self, stable: StableJumps) -> Self {
        self.stable = Some(stable);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(j) = &self.jumps {
            if !(j.mass >= 0.0 && j.mass.is_finite()) {
                return Err(invalid("jumps.mass", "must be finite and nonnegative"));
            }
            j.sizes.validate()?;
        }
        if let Some(s) = &self.stable {
            s.validate()?;
        }
        Ok(())
    }

    pub fn active_jumps(&self) -> Option<&JumpMeasure> {
        self.jumps
            .as_ref()
            .filter(|j| j.mass > 0.0 && !self.jump_rate.is_identically_zero())
    }

    pub fn active_stable(&self) -> Option<&StableJumps> {
        self.stable.as_ref().filter(|s| s.is_active())
    }

    /// σ = 0, no jumps of either kind.
    pub fn is_deterministic(&self) -> bool {
        self.diffusion.is_identically_zero()
            && self.active_jumps().is_none()
            && self.active_stable().is_none()
    }

    /// ∫ z π(dz), zero without compensated jumps.
    pub fn jump_first_moment(&self) -> f64 {
        self.active_jumps().map_or(0.0, JumpMeasure::first_moment)
    }

    /// ∫ z² π(dz), zero without compensated jumps.
    pub fn jump_second_moment(&self) -> f64 {
        self.active_jumps().map_or(0.0, JumpMeasure::second_moment)
    }

    /// Whether the trait can reach 0 in finite time (LN0-type behavior), judged by
    /// whether g(u)/u - σ²(u)/u² diverges to -∞ as u → 0.
    pub fn zero_attainable(&self) -> bool {
        let h = |u: f64| self.drift.eval(u) / u - self.diffusion.eval(u) / (u * u);
        let near = h(1e-9);
        let far = h(1e-6);
        near.is_finite() && near < far - 1.0 || near == f64::NEG_INFINITY
    }
}

/// Division/death rate family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Rates {
    Constant { r: f64, q: f64 },
    /// r(x) = αx + β, q constant.
    LinearDivision { alpha: f64, beta: f64, q: f64 },
    General { division: Profile, death: Profile },
}

/// Cell division and death policy together with the sharing kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPolicy {
    pub rates: Rates,
    pub kernel: SharingKernel,
}

impl CellPolicy {
    pub fn constant(r: f64, q: f64, kernel: SharingKernel) -> Self {
        CellPolicy {
            rates: Rates::Constant { r, q },
            kernel,
        }
    }

    pub fn linear_division(alpha: f64, beta: f64, q: f64, kernel: SharingKernel) -> Self {
        CellPolicy {
            rates: Rates::LinearDivision { alpha, beta, q },
            kernel,
        }
    }

    pub fn division_rate(&self, x: f64) -> f64 {
        match &self.rates {
            Rates::Constant { r, .. } => *r,
            Rates::LinearDivision { alpha, beta, .. } => alpha * x + beta,
            Rates::General { division, .. } => division.eval(x),
        }
    }

    pub fn death_rate(&self, x: f64) -> f64 {
        match &self.rates {
            Rates::Constant { q, .. } | Rates::LinearDivision { q, .. } => *q,
            Rates::General { death, .. } => death.eval(x),
        }
    }

    /// `(r, q)` when both rates are trait-independent.
    pub fn constant_rates(&self) -> Option<(f64, f64)> {
        match &self.rates {
            Rates::Constant { r, q } => Some((*r, *q)),
            Rates::LinearDivision { .. } => None,
            Rates::General { division, death } => {
                Some((division.as_constant()?, death.as_constant()?))
            }
        }
    }

    /// Same policy with the natural death rate set to zero.
    pub fn without_death(&self) -> Self {
        let rates = match &self.rates {
            Rates::Constant { r, .. } => Rates::Constant { r: *r, q: 0.0 },
            Rates::LinearDivision { alpha, beta, .. } => Rates::LinearDivision {
                alpha: *alpha,
                beta: *beta,
                q: 0.0,
            },
            Rates::General { division, .. } => Rates::General {
                division: division.clone(),
                death: Profile::zero(),
            },
        };
        CellPolicy {
            rates,
            kernel: self.kernel.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.rates {
            Rates::Constant { r, q } => {
                if !(*r >= 0.0 && *q >= 0.0 && r.is_finite() && q.is_finite()) {
                    return Err(invalid("rates", "constant r and q must be finite and ≥ 0"));
                }
            }
            Rates::LinearDivision { alpha, beta, q } => {
                if !(*alpha > 0.0 && *beta > 0.0) {
                    return Err(invalid("rates", "linear division requires α > 0 and β > 0"));
                }
                if !(*q >= 0.0 && q.is_finite()) {
                    return Err(invalid("rates.q", "must be finite and ≥ 0"));
                }
            }
            Rates::General { .. } => {}
        }
        Ok(())
    }
}

/// A complete single-lineage / population model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub parasite: ParasiteLaw,
    pub policy: CellPolicy,
    pub initial_trait: f64,
    /// Finite surrogate for +∞.
    #[serde(default = "default_explosion_cap")]
    pub explosion_cap: f64,
    #[serde(default = "default_time_step")]
    pub time_step: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_explosion_cap() -> f64 {
    1e12
}

fn default_time_step() -> f64 {
    0.01
}

fn default_horizon() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(parasite: ParasiteLaw, policy: CellPolicy, initial_trait: f64) -> Self {
        ModelSpec {
            parasite,
            policy,
            initial_trait,
            explosion_cap: default_explosion_cap(),
            time_step: default_time_step(),
            horizon: default_horizon(),
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_time_step(mut self, dt: f64) -> Self {
        self.time_step = dt;
        self
    }

    pub fn with_explosion_cap(mut self, cap: f64) -> Self {
        self.explosion_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.parasite.validate()?;
        self.policy.validate()?;
        if !(self.initial_trait >= 0.0 && self.initial_trait.is_finite()) {
            return Err(invalid("initial_trait", "must be finite and ≥ 0"));
        }
        if !(self.explosion_cap > self.initial_trait) {
            return Err(invalid("explosion_cap", "must exceed the initial trait"));
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return Err(invalid("time_step", "must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        Ok(())
    }
}
