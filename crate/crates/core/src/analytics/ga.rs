use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{CellPolicy, ParasiteLaw, StableJumps};
use crate::numeric;

/// ∫ ((1+w)^{1-a} - 1) ρ(dw), or -∞/+∞ when the tail diverges.
pub fn stable_ga_integral(stable: &StableJumps, a: f64) -> f64 {
    let b = stable.index;
    let c = stable.density_constant();
    let e = 1.0 - a;
    if e > 0.0 && e >= 1.0 + b {
        return f64::INFINITY;
    }
    let f = |w: f64| ((1.0 + w).powf(e) - 1.0) * c * w.powf(-2.0 - b);
    let f0 = |w: f64| {
        if w < 1e-8 {
            e * c * w.powf(-1.0 - b)
        } else {
            f(w)
        }
    };
    numeric::integrate_singular_at_zero(f0, 1.0, 8, 1e-12) + numeric::integrate_tail(f, 1.0, 1e-12)
}

/// Contribution to the stable term of jumps below the dynamics truncation level.
pub fn stable_ga_truncation_bias(stable: &StableJumps, a: f64) -> f64 {
    let b = stable.index;
    let eps = stable.truncation_level();
    (1.0 - a).abs() * stable.density_constant() * eps.powf(-b) / (-b)
}

/// G_a(x) for the spine with division rate 2r(x).
pub fn ga(x: f64, a: f64, law: &ParasiteLaw, policy: &CellPolicy) -> Result<f64> {
    if a == 1.0 {
        return Err(invalid("a", "G_a is undefined at a = 1"));
    }
    if !(x > 0.0) {
        return Err(invalid("x", "G_a is defined for x > 0"));
    }
    let mellin = policy.kernel.mellin(1.0 - a);
    if !mellin.is_finite() {
        return Err(Error::InfiniteMoment { exponent: 1.0 - a });
    }
    let mut value = (a - 1.0) * law.drift.eval(x) / x
        - a * (a - 1.0) * law.diffusion.eval(x) / (x * x)
        - 2.0 * policy.division_rate(x) * (mellin - 1.0);
    if let Some(s) = law.active_stable() {
        value -= x.powf(-s.index) * stable_ga_integral(s, a);
    }
    if let Some(j) = law.active_jumps() {
        let e = 1.0 - a;
        value -= law.jump_rate.eval(x) * j.integrate(|z| (z / x + 1.0).powf(e) - 1.0 - e * z / x);
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GaAssumption {
    /// a > 1: uniform explosion of the infection.
    Expl,
    /// a < 1 without stable jumps: uniform containment.
    Ext,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaPoint {
    pub x: f64,
    /// r(x) - q(x)
    pub growth: f64,
    pub ga: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaCriterion {
    pub a: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub assumption: GaAssumption,
    pub points: Vec<GaPoint>,
    /// r - q ≤ γ < γ′ ≤ G_a at every grid point.
    pub holds: bool,
    /// Share of the stable term carried by jumps below the simulation truncation.
    pub stable_truncation_bias: Option<f64>,
}

/// Grid check of r - q ≤ γ < γ′ ≤ G_a, as EXPL when a > 1 and EXT when a < 1.
pub fn check_expl_ext(
    a: f64,
    gamma: f64,
    gamma_prime: f64,
    grid: &[f64],
    law: &ParasiteLaw,
    policy: &CellPolicy,
) -> Result<GaCriterion> {
    if a == 1.0 || a < 0.0 {
        return Err(invalid("a", "must lie in [0, ∞) without 1"));
    }
    if !(gamma >= 0.0 && gamma < gamma_prime) {
        return Err(Error::Precondition(format!("need 0 ≤ γ < γ′, got γ = {gamma}, γ′ = {gamma_prime}")));
    }
    let assumption = if a > 1.0 {
        GaAssumption::Expl
    } else {
        if law.active_stable().is_some() {
            return Err(Error::Precondition("EXT requires no stable jumps".into()));
        }
        GaAssumption::Ext
    };
    let mut points = Vec::with_capacity(grid.len());
    for &x in grid.iter().filter(|x| **x > 0.0) {
        let growth = policy.division_rate(x) - policy.death_rate(x);
        let g = ga(x, a, law, policy)?;
        points.push(GaPoint {
            x,
            growth,
            ga: g,
            holds: growth <= gamma && gamma_prime <= g,
        });
    }
    let holds = !points.is_empty() && points.iter().all(|p| p.holds);
    Ok(GaCriterion {
        a,
        gamma,
        gamma_prime,
        assumption,
        points,
        holds,
        stable_truncation_bias: law.active_stable().map(|s| stable_ga_truncation_bias(s, a)),
    })
}
