//! Auxiliary "typical cell" processes.
//!
//! [`HomogeneousSpine`] follows the trait with multiplicative jumps y ↦ θy at
//! rate 2r(y). [`InhomogeneousSpine`] is the time-inhomogeneous process for
//! linear division rates, parameterized by the remaining time s = t - u.

use rand::Rng;
use rand_distr::Distribution;

use crate::dynamics::{probe_assumptions, step_sizes, JumpLog, PathStatus, ProbeOptions, TraitPath, TraitStepper};
use crate::error::{invalid, Error, Result};
use crate::model::{CellPolicy, ModelSpec, ParasiteLaw, Rates, SharingKernel};
use crate::numeric::log_grid;

/// Trait dynamics plus division-type jumps y ↦ θy at rate 2r(y).
#[derive(Debug, Clone)]
pub struct HomogeneousSpine<'a> {
    stepper: TraitStepper<'a>,
    policy: &'a CellPolicy,
}

impl<'a> HomogeneousSpine<'a> {
    pub fn new(law: &'a ParasiteLaw, policy: &'a CellPolicy, explosion_cap: f64) -> Result<Self> {
        policy.validate()?;
        Ok(HomogeneousSpine {
            stepper: TraitStepper::new(law, explosion_cap)?,
            policy,
        })
    }

    pub fn from_spec(spec: &'a ModelSpec) -> Result<Self> {
        Self::new(&spec.parasite, &spec.policy, spec.explosion_cap)
    }

    /// One step; the division rate is frozen at the starting value.
    pub fn step<R: Rng + ?Sized>(&self, y: f64, dt: f64, rng: &mut R) -> Result<(f64, PathStatus)> {
        let s = self.stepper.step(y, dt, rng)?;
        if s.status.is_terminal() {
            return Ok((s.value, s.status));
        }
        let rate = 2.0 * self.policy.division_rate(y).max(0.0);
        let mut v = s.value;
        for _ in 0..crate::dynamics::poisson(rate * dt, rng) {
            v *= self.policy.kernel.sample(rng);
        }
        Ok((v, s.status))
    }

    /// Integrates to `horizon`, calling `observe(t, y)` after every step.
    pub fn advance_observed<R, F>(&self, x0: f64, horizon: f64, dt: f64, rng: &mut R, mut observe: F) -> Result<(f64, PathStatus)>
    where
        R: Rng + ?Sized,
        F: FnMut(f64, f64),
    {
        let mut y = x0;
        let mut t = 0.0;
        let mut status = PathStatus::Running;
        for h in step_sizes(horizon, dt)? {
            let (v, st) = self.step(y, h, rng)?;
            y = v;
            t += h;
            status = st;
            observe(t, y);
            if st.is_terminal() {
                break;
            }
        }
        Ok((y, status))
    }

    pub fn advance<R: Rng + ?Sized>(&self, x0: f64, horizon: f64, dt: f64, rng: &mut R) -> Result<(f64, PathStatus)> {
        self.advance_observed(x0, horizon, dt, rng, |_, _| {})
    }

    pub fn path<R: Rng + ?Sized>(&self, x0: f64, horizon: f64, dt: f64, rng: &mut R) -> Result<TraitPath> {
        let mut times = vec![0.0];
        let mut values = vec![x0];
        let (_, status) = self.advance_observed(x0, horizon, dt, rng, |t, y| {
            times.push(t);
            values.push(y);
        })?;
        if let Some(last) = times.last_mut() {
            if (*last - horizon).abs() < 1e-9 * horizon.max(1.0) {
                *last = horizon;
            }
        }
        Ok(TraitPath { times, values, status })
    }
}

/// Homogeneous spine path using the model's initial trait, step and horizon.
pub fn simulate_spine_homogeneous<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<TraitPath> {
    HomogeneousSpine::from_spec(spec)?.path(spec.initial_trait, spec.horizon, spec.time_step, rng)
}

/// Spine of the linear-division model observed up to time `horizon`.
#[derive(Debug, Clone)]
pub struct InhomogeneousSpine<'a> {
    stepper: TraitStepper<'a>,
    kernel: &'a SharingKernel,
    pub alpha: f64,
    pub beta: f64,
    pub g: f64,
    pub q: f64,
    pub horizon: f64,
    /// Advisory verdict of x p'(x) ≥ p(x) on a log-grid.
    pub b2_holds: bool,
}

impl<'a> InhomogeneousSpine<'a> {
    pub fn new(spec: &'a ModelSpec, horizon: f64) -> Result<Self> {
        spec.validate()?;
        let Rates::LinearDivision { alpha, beta, q } = spec.policy.rates else {
            return Err(invalid("rates", "the inhomogeneous spine needs linear division rates"));
        };
        let law = &spec.parasite;
        let g = law
            .drift
            .as_linear()
            .ok_or_else(|| invalid("drift", "the inhomogeneous spine needs g(x) = gx"))?;
        if g == beta {
            return Err(Error::Degenerate("the inhomogeneous spine is undefined for g = β".into()));
        }
        if law.active_stable().is_some() {
            return Err(invalid("stable", "the inhomogeneous spine has no stable jumps"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        let report = probe_assumptions(law, None, &log_grid(1e-3, 1e3, 25), ProbeOptions::default());
        let b2_holds = report.get("B2").is_some_and(|p| p.satisfied);
        Ok(InhomogeneousSpine {
            stepper: TraitStepper::new(law, spec.explosion_cap)?,
            kernel: &spec.policy.kernel,
            alpha,
            beta,
            g,
            q,
            horizon,
            b2_holds,
        })
    }

    /// R(y,s) = α(e^{(g-β)s} - 1) / ((g-β) + αy(e^{(g-β)s} - 1)).
    pub fn r_factor(&self, y: f64, s: f64) -> f64 {
        let c = self.g - self.beta;
        let e = (c * s).exp_m1();
        self.alpha * e / (c + self.alpha * y * e)
    }

    /// A_t = |α(e^{(g-β)t} - 1)/(g-β)|, an upper bound of R over the run.
    pub fn r_bound(&self) -> f64 {
        let c = self.g - self.beta;
        (self.alpha * (c * self.horizon).exp_m1() / c).abs()
    }

    pub fn f1(&self, y: f64, s: f64) -> f64 {
        let law = self.stepper.law();
        let lead = 2.0 * law.diffusion.eval(y) + law.jump_rate.eval(y) * law.jump_second_moment();
        self.g * y + lead * self.r_factor(y, s)
    }

    pub fn f2(&self, y: f64, s: f64, theta: f64) -> f64 {
        let c = self.g - self.beta;
        let e = (c * s).exp_m1();
        let ay = self.alpha * y * e;
        2.0 * (self.alpha * y + self.beta) * (c + theta * ay) / (c + ay)
    }

    pub fn f3(&self, y: f64, s: f64, z: f64) -> f64 {
        self.stepper.law().jump_rate.eval(y) * (1.0 + z * self.r_factor(y, s))
    }

    /// 𝒜V(y) for V(y) = y at remaining time s.
    pub fn lyapunov_drift(&self, y: f64, s: f64) -> f64 {
        let c = self.g - self.beta;
        let e = (c * s).exp_m1();
        let ay = self.alpha * y * e;
        let mean_loss = 2.0 * (self.alpha * y + self.beta) * (0.5 * c + ay * self.kernel.product_moment()) / (c + ay);
        self.f1(y, s) - y * mean_loss
    }

    /// One step from elapsed time `u`; rates are frozen at the start of the step.
    pub fn step<R: Rng + ?Sized>(&self, y: f64, u: f64, dt: f64, rng: &mut R) -> Result<(f64, PathStatus, JumpLog)> {
        let mut log = JumpLog::default();
        if y == 0.0 {
            return Ok((0.0, PathStatus::AbsorbedAtZero, log));
        }
        let law = self.stepper.law();
        let s = (self.horizon - u).max(0.0);
        let r = self.r_factor(y, s);
        let sigma2 = law.diffusion.eval(y).max(0.0);
        let mut v = self.stepper.flow(y, dt, 2.0 * sigma2 * r, rng);
        v += self.stepper.compensated_jumps(y, dt, &mut log, rng);
        if let Some(j) = law.active_jumps() {
            let extra = law.jump_rate.eval(y).max(0.0) * r * j.first_moment() * dt;
            let n = crate::dynamics::poisson(extra, rng);
            for _ in 0..n {
                let z = j.sizes.sample_size_biased(rng);
                v += z;
                log.total_size += z;
            }
            log.compensated += n;
        }
        let (mut v, status) = self.stepper.settle(v);
        if status.is_terminal() {
            return Ok((v, status, log));
        }
        let bound = 2.0 * (self.alpha * y + self.beta);
        for _ in 0..crate::dynamics::poisson(bound * dt, rng) {
            let theta = self.kernel.sample(rng);
            if rng.random::<f64>() * bound < self.f2(y, s, theta) {
                v *= theta;
            }
        }
        Ok((v, status, log))
    }

    pub fn path<R: Rng + ?Sized>(&self, x0: f64, dt: f64, rng: &mut R) -> Result<TraitPath> {
        crate::dynamics::check_step(x0, dt)?;
        let sizes = step_sizes(self.horizon, dt)?;
        let mut times = vec![0.0];
        let mut values = vec![x0];
        let (mut y, mut u, mut status) = (x0, 0.0, PathStatus::Running);
        for (i, h) in sizes.iter().enumerate() {
            let (v, st, _) = self.step(y, u, *h, rng)?;
            u = if i + 1 == sizes.len() { self.horizon } else { u + h };
            y = v;
            status = st;
            times.push(u);
            values.push(y);
            if st.is_terminal() {
                break;
            }
        }
        Ok(TraitPath { times, values, status })
    }

    pub fn advance<R: Rng + ?Sized>(&self, x0: f64, dt: f64, rng: &mut R) -> Result<(f64, PathStatus)> {
        let p = self.path(x0, dt, rng)?;
        Ok((p.terminal(), p.status))
    }
}

/// Inhomogeneous spine path over [0, spec.horizon].
pub fn simulate_spine_inhomogeneous<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<TraitPath> {
    InhomogeneousSpine::new(spec, spec.horizon)?.path(spec.initial_trait, spec.time_step, rng)
}

/// Draws from κ tilted by `weight` by rejection, given `0 ≤ weight ≤ w_max`.
pub fn thinned_kernel_sampler<R, W>(kernel: &SharingKernel, weight: W, w_max: f64, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    W: Fn(f64) -> f64,
{
    if !(w_max > 0.0 && w_max.is_finite()) {
        return Err(invalid("w_max", "must be positive and finite"));
    }
    for _ in 0..10_000_000 {
        let theta = kernel.sample(rng);
        let w = weight(theta);
        if w > w_max || w < 0.0 || w.is_nan() {
            return Err(Error::WeightBound { value: w, bound: w_max });
        }
        if rng.random::<f64>() * w_max < w {
            return Ok(theta);
        }
    }
    Err(Error::Degenerate("tilted kernel sampler failed to accept".into()))
}

/// A `Distribution` view over [`thinned_kernel_sampler`] for a weight known to respect its bound.
pub struct TiltedKernel<'a, W> {
    pub kernel: &'a SharingKernel,
    pub weight: W,
    pub w_max: f64,
}

impl<W: Fn(f64) -> f64> Distribution<f64> for TiltedKernel<'_, W> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        thinned_kernel_sampler(self.kernel, &self.weight, self.w_max, rng).expect("weight within its declared bound")
    }
}
