//! Single-cell trait integrator.
//!
//! A step combines a drift-diffusion flow with compensated jumps at rate
//! p(x)·π and stable-like jumps at rate x·ρ. The flow is exact for
//! deterministic linear drift and for geometric Brownian motion; otherwise
//! the linear part of the drift is integrated exponentially and the rest by
//! Euler–Maruyama. Jump counts in a step are Poisson with rates frozen at the
//! start of the step.

mod probe;
mod stable;

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

pub use probe::{probe_assumptions, AssumptionProbe, ProbeOptions, ProbePoint, ProbeReport};
pub use stable::StableJumpSampler;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParasiteLaw};

/// Value substituted for a non-absorbing law whose Euler step overshoots below 0.
pub const ZERO_FLOOR: f64 = 1e-300;

/// Expected stable jumps per step above which small stable jumps are replaced by their mean.
pub const STABLE_JUMP_BUDGET: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathStatus {
    Running,
    AbsorbedAtZero,
    Exploded,
}

impl PathStatus {
    pub fn is_terminal(self) -> bool {
        self != PathStatus::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PathStatus::Running => "running",
            PathStatus::AbsorbedAtZero => "absorbed",
            PathStatus::Exploded => "exploded",
        }
    }
}

/// Jumps drawn during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct JumpLog {
    pub compensated: u64,
    pub stable: u64,
    /// Total size of all jumps, before compensation.
    pub total_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// New trait; `f64::INFINITY` once exploded.
    pub value: f64,
    pub status: PathStatus,
    pub jumps: JumpLog,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraitPath {
    pub times: Vec<f64>,
    /// Trait values; exploded entries are `f64::INFINITY`.
    pub values: Vec<f64>,
    pub status: PathStatus,
}

impl TraitPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths hold the initial point")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,value,status")?;
        let last = self.values.len() - 1;
        for (i, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            let status = if i == last { self.status } else { PathStatus::Running };
            writeln!(out, "{t},{v},{}", status.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Flow {
    /// x ↦ x·e^{g dt}
    ExactLinear(f64),
    /// x ↦ x·exp((g - s)dt + √(2s dt)·N) for g(x) = gx, σ²(x) = s·x².
    Geometric { g: f64, s: f64 },
    /// x ↦ x·e^{g dt} + √(2σ²(x)dt)·N
    LinearDrift(f64),
    /// Classical RK4 on the drift.
    DeterministicRk4,
    Euler,
}

/// Precomputed stepping data for one parasite law.
#[derive(Debug, Clone)]
pub struct TraitStepper<'a> {
    law: &'a ParasiteLaw,
    cap: f64,
    flow: Flow,
    compensator: f64,
    jump_mass: f64,
    stable: Option<StableJumpSampler>,
    absorbing: bool,
}

impl<'a> TraitStepper<'a> {
    pub fn new(law: &'a ParasiteLaw, explosion_cap: f64) -> Result<Self> {
        law.validate()?;
        if !(explosion_cap > 0.0) {
            return Err(crate::error::invalid("explosion_cap", "must be positive"));
        }
        let linear = law.drift.as_linear();
        let deterministic_diffusion = law.diffusion.is_identically_zero();
        let flow = match (linear, law.diffusion.as_monomial(2.0)) {
            (Some(g), _) if deterministic_diffusion => Flow::ExactLinear(g),
            (Some(g), Some(s)) => Flow::Geometric { g, s },
            (Some(g), None) => Flow::LinearDrift(g),
            (None, _) if deterministic_diffusion => Flow::DeterministicRk4,
            (None, _) => Flow::Euler,
        };
        let stable = law.active_stable().map(StableJumpSampler::from_law).transpose()?;
        Ok(TraitStepper {
            law,
            cap: explosion_cap,
            flow,
            compensator: law.jump_first_moment(),
            jump_mass: law.active_jumps().map_or(0.0, |j| j.mass),
            stable,
            absorbing: law.zero_attainable(),
        })
    }

    pub fn law(&self) -> &ParasiteLaw {
        self.law
    }

    pub fn explosion_cap(&self) -> f64 {
        self.cap
    }

    pub fn stable_sampler(&self) -> Option<&StableJumpSampler> {
        self.stable.as_ref()
    }

    /// Whether an overshoot below 0 is treated as absorption rather than clamped.
    pub fn absorbs_at_zero(&self) -> bool {
        self.absorbing
    }

    pub fn step<R: Rng + ?Sized>(&self, x: f64, dt: f64, rng: &mut R) -> Result<Step> {
        check_step(x, dt)?;
        if x == 0.0 {
            return Ok(Step {
                value: 0.0,
                status: PathStatus::AbsorbedAtZero,
                jumps: JumpLog::default(),
            });
        }
        let mut y = self.flow(x, dt, 0.0, rng);
        let mut log = JumpLog::default();
        y += self.compensated_jumps(x, dt, &mut log, rng);
        match self.stable_jumps(x, y, dt, &mut log, rng) {
            Some(v) => y = v,
            None => {
                return Ok(Step {
                    value: f64::INFINITY,
                    status: PathStatus::Exploded,
                    jumps: log,
                })
            }
        }
        let (value, status) = self.settle(y);
        Ok(Step {
            value,
            status,
            jumps: log,
        })
    }

    /// Drift and diffusion over `dt` from `x`, plus `extra_drift·dt`. May return a negative value.
    pub(crate) fn flow<R: Rng + ?Sized>(&self, x: f64, dt: f64, extra_drift: f64, rng: &mut R) -> f64 {
        let extra = extra_drift * dt;
        match self.flow {
            Flow::ExactLinear(g) => x * (g * dt).exp() + extra,
            Flow::Geometric { g, s } => {
                let n: f64 = rng.sample(StandardNormal);
                x * ((g - s) * dt + (2.0 * s * dt).sqrt() * n).exp() + extra
            }
            Flow::LinearDrift(g) => {
                let n: f64 = rng.sample(StandardNormal);
                x * (g * dt).exp() + (2.0 * self.law.diffusion.eval(x).max(0.0) * dt).sqrt() * n + extra
            }
            Flow::DeterministicRk4 => {
                let g = |u: f64| self.law.drift.eval(u.max(0.0));
                let k1 = g(x);
                let k2 = g(x + 0.5 * dt * k1);
                let k3 = g(x + 0.5 * dt * k2);
                let k4 = g(x + dt * k3);
                x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + extra
            }
            Flow::Euler => {
                let n: f64 = rng.sample(StandardNormal);
                x + self.law.drift.eval(x) * dt
                    + (2.0 * self.law.diffusion.eval(x).max(0.0) * dt).sqrt() * n
                    + extra
            }
        }
    }

    /// Sum of compensated jump sizes minus the compensator p(x)·m₁·dt.
    pub(crate) fn compensated_jumps<R: Rng + ?Sized>(
        &self,
        x: f64,
        dt: f64,
        log: &mut JumpLog,
        rng: &mut R,
    ) -> f64 {
        let Some(jumps) = self.law.active_jumps() else {
            return 0.0;
        };
        let p = self.law.jump_rate.eval(x).max(0.0);
        let count = poisson(p * self.jump_mass * dt, rng);
        let mut total = 0.0;
        for _ in 0..count {
            total += jumps.sizes.sample(rng);
        }
        log.compensated += count;
        log.total_size += total;
        total - p * self.compensator * dt
    }

    /// Adds stable jumps to `y`; `None` once the running sum passes the cap.
    ///
    /// When more than [`STABLE_JUMP_BUDGET`] jumps are expected, jumps below
    /// the raised level are replaced by their mean.
    pub(crate) fn stable_jumps<R: Rng + ?Sized>(
        &self,
        x: f64,
        mut y: f64,
        dt: f64,
        log: &mut JumpLog,
        rng: &mut R,
    ) -> Option<f64> {
        let Some(sampler) = &self.stable else {
            return Some(y);
        };
        let b = sampler.index;
        let budget_level =
            (x * sampler.normalization * dt / ((1.0 + b) * STABLE_JUMP_BUDGET)).powf(1.0 / (1.0 + b));
        let level = sampler.truncation.max(budget_level);
        if level > sampler.truncation {
            y += x * sampler.mean_between(sampler.truncation, level) * dt;
        }
        let count = poisson(x * sampler.rate_above(level) * dt, rng);
        log.stable += count;
        for _ in 0..count {
            let z = sampler.sample_above(level, rng);
            log.total_size += z;
            y += z;
            if y > self.cap {
                return None;
            }
        }
        if y > self.cap {
            None
        } else {
            Some(y)
        }
    }

    /// Applies absorption, clamping and the explosion cap to a raw update.
    pub(crate) fn settle(&self, y: f64) -> (f64, PathStatus) {
        if !y.is_finite() || y > self.cap {
            if y.is_nan() {
                return (ZERO_FLOOR, PathStatus::Running);
            }
            return (f64::INFINITY, PathStatus::Exploded);
        }
        if y <= 0.0 {
            if self.absorbing {
                return (0.0, PathStatus::AbsorbedAtZero);
            }
            return (ZERO_FLOOR, PathStatus::Running);
        }
        (y, PathStatus::Running)
    }

    /// Integrates to `horizon` and returns the terminal value and status.
    pub fn advance<R: Rng + ?Sized>(&self, x0: f64, horizon: f64, dt: f64, rng: &mut R) -> Result<(f64, PathStatus)> {
        let mut x = x0;
        let mut status = PathStatus::Running;
        for h in step_sizes(horizon, dt)? {
            let s = self.step(x, h, rng)?;
            x = s.value;
            status = s.status;
            if status.is_terminal() {
                break;
            }
        }
        Ok((x, status))
    }

    /// Full path on the step grid, stopping early on absorption or explosion.
    pub fn path<R: Rng + ?Sized>(&self, x0: f64, horizon: f64, dt: f64, rng: &mut R) -> Result<TraitPath> {
        check_step(x0, dt)?;
        let sizes = step_sizes(horizon, dt)?;
        let mut times = Vec::with_capacity(sizes.len() + 1);
        let mut values = Vec::with_capacity(sizes.len() + 1);
        times.push(0.0);
        values.push(x0);
        let mut t = 0.0;
        let mut x = x0;
        let mut status = PathStatus::Running;
        for (i, h) in sizes.iter().enumerate() {
            let s = self.step(x, *h, rng)?;
            t = if i + 1 == sizes.len() { horizon } else { t + h };
            x = s.value;
            status = s.status;
            times.push(t);
            values.push(x);
            if status.is_terminal() {
                break;
            }
        }
        Ok(TraitPath { times, values, status })
    }
}

pub(crate) fn check_step(x: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if x < 0.0 || x.is_nan() {
        return Err(Error::NegativeTrait(x));
    }
    Ok(())
}

/// Step lengths covering `[0, horizon]`: full steps of `dt` and a shorter final step if needed.
pub fn step_sizes(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(crate::error::invalid("horizon", "must be finite and ≥ 0"));
    }
    let ratio = horizon / dt;
    let full = (ratio + 1e-9).floor() as usize;
    let mut sizes = vec![dt; full];
    let rest = horizon - full as f64 * dt;
    if rest > 1e-9 * dt {
        sizes.push(rest);
    }
    Ok(sizes)
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).map_or(u64::MAX, |d| d.sample(rng) as u64)
}

/// One step of the trait SDE.
pub fn step_trait<R: Rng + ?Sized>(x: f64, dt: f64, law: &ParasiteLaw, explosion_cap: f64, rng: &mut R) -> Result<Step> {
    TraitStepper::new(law, explosion_cap)?.step(x, dt, rng)
}

/// Trait path of a single cell without divisions, using the model's step and horizon.
pub fn simulate_trait<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<TraitPath> {
    TraitStepper::new(&spec.parasite, spec.explosion_cap)?.path(spec.initial_trait, spec.horizon, spec.time_step, rng)
}
