//! Numeric spot checks of the existence/uniqueness conditions on a model.
//! Every verdict is advisory: the checks sample a log-grid and never prove anything.

use serde::Serialize;

use super::law::{ModelSpec, ParasiteLaw, StableJumps};
use super::profile::Profile;
use crate::numeric::{self, log_grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EuClause {
    /// r, p locally Lipschitz; p non-decreasing with p(0) = 0; g(0) = 0 with a log-Lipschitz modulus.
    RegularityRatesDrift,
    /// σ Hölder-½ on compacts, σ(0) = 0.
    DiffusionHolder,
    /// ∫ (z ∧ z²) π(dz) < ∞.
    JumpMoment,
    /// r - q ≤ r₁x^γ + r₂.
    GrowthDomination,
    /// 𝒢(x^γ) ≤ c₁x^γ + c₂.
    GeneratorDomination,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseVerdict {
    pub clause: EuClause,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EuReport {
    pub clauses: Vec<ClauseVerdict>,
    /// Polynomial growth exponent γ fitted for clause iv).
    pub growth_exponent: Option<f64>,
}

impl EuReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    pub fn verdict(&self, clause: EuClause) -> Option<&ClauseVerdict> {
        self.clauses.iter().find(|c| c.clause == clause)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClauseVerdict> {
        self.clauses.iter().filter(|c| !c.pass)
    }
}

const LIPSCHITZ_CEILING: f64 = 1e8;

pub fn validate_eu(spec: &ModelSpec) -> EuReport {
    let law = &spec.parasite;
    let mut clauses = Vec::with_capacity(5);

    clauses.push(check_regularity(spec));
    clauses.push(check_diffusion(&law.diffusion));
    clauses.push(ClauseVerdict {
        clause: EuClause::JumpMoment,
        pass: law.jumps.as_ref().is_none_or(|j| j.first_moment().is_finite() && j.second_moment().is_finite()),
        detail: "finite-activity jump measure with finite first and second moments".into(),
    });

    let (growth, gamma) = check_growth(spec);
    clauses.push(growth);
    clauses.push(check_generator(law, gamma));

    EuReport {
        clauses,
        growth_exponent: gamma,
    }
}

fn probe_points() -> Vec<f64> {
    let mut pts = vec![0.0];
    pts.extend(log_grid(1e-6, 1e3, 91));
    pts
}

fn max_ratio<F: Fn(f64, f64) -> f64>(pts: &[f64], ratio: F) -> f64 {
    pts.windows(2)
        .map(|w| ratio(w[0], w[1]))
        .fold(0.0, f64::max)
}

fn check_regularity(spec: &ModelSpec) -> ClauseVerdict {
    let law = &spec.parasite;
    let pts: Vec<f64> = probe_points().into_iter().filter(|&x| x <= 50.0).collect();
    let mut problems = Vec::new();

    let p0 = law.jump_rate.eval(0.0);
    if p0 != 0.0 {
        problems.push(format!("p(0) = {p0} ≠ 0"));
    }
    if pts.windows(2).any(|w| law.jump_rate.eval(w[1]) < law.jump_rate.eval(w[0]) - 1e-12) {
        problems.push("p is not non-decreasing".into());
    }
    let g0 = law.drift.eval(0.0);
    if g0 != 0.0 {
        problems.push(format!("g(0) = {g0} ≠ 0"));
    }
    let lip = |f: &dyn Fn(f64) -> f64| max_ratio(&pts, |a, b| (f(b) - f(a)).abs() / (b - a));
    let r_lip = lip(&|x| spec.policy.division_rate(x));
    let p_lip = lip(&|x| law.jump_rate.eval(x));
    if !(r_lip.is_finite() && r_lip < LIPSCHITZ_CEILING) {
        problems.push(format!("r Lipschitz ratio {r_lip:e}"));
    }
    if !(p_lip.is_finite() && p_lip < LIPSCHITZ_CEILING) {
        problems.push(format!("p Lipschitz ratio {p_lip:e}"));
    }
    let phi = |h: f64| if h <= 1.0 { h * (1.0 - h.ln()) } else { 1.0 };
    let g_mod = max_ratio(&pts, |a, b| (law.drift.eval(b) - law.drift.eval(a)).abs() / phi(b - a));
    if !(g_mod.is_finite() && g_mod < LIPSCHITZ_CEILING) {
        problems.push(format!("g modulus ratio {g_mod:e}"));
    }

    ClauseVerdict {
        clause: EuClause::RegularityRatesDrift,
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("max ratios: r {r_lip:.3e}, p {p_lip:.3e}, g {g_mod:.3e}")
        } else {
            problems.join("; ")
        },
    }
}

fn check_diffusion(diffusion: &Profile) -> ClauseVerdict {
    let pts: Vec<f64> = probe_points().into_iter().filter(|&x| x <= 50.0).collect();
    let sigma = |x: f64| diffusion.eval(x).max(0.0).sqrt();
    let mut problems = Vec::new();
    if pts.iter().any(|&x| diffusion.eval(x) < 0.0) {
        problems.push("σ² takes negative values".to_string());
    }
    if sigma(0.0) != 0.0 {
        problems.push(format!("σ(0) = {} ≠ 0", sigma(0.0)));
    }
    let holder = max_ratio(&pts, |a, b| (sigma(b) - sigma(a)).abs() / (b - a).sqrt());
    if !(holder.is_finite() && holder < LIPSCHITZ_CEILING) {
        problems.push(format!("Hölder-½ ratio {holder:e}"));
    }
    ClauseVerdict {
        clause: EuClause::DiffusionHolder,
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("max Hölder-½ ratio {holder:.3e}")
        } else {
            problems.join("; ")
        },
    }
}

/// Local log-log slopes of `h` over consecutive grid decades.
fn decade_slopes<F: Fn(f64) -> f64>(h: F) -> Vec<f64> {
    let xs = log_grid(1.0, 1e3, 4);
    xs.windows(2)
        .map(|w| {
            let (a, b) = (h(w[0]).max(1e-300), h(w[1]).max(1e-300));
            (b.ln() - a.ln()) / (w[1].ln() - w[0].ln())
        })
        .collect()
}

/// Fits γ from the last decade and rejects accelerating growth.
fn polynomial_exponent<F: Fn(f64) -> f64>(h: F) -> Option<f64> {
    let grid = log_grid(1.0, 1e3, 31);
    if grid.iter().any(|&x| !h(x).is_finite()) {
        return None;
    }
    if grid.iter().all(|&x| h(x) <= 1.0) {
        return Some(0.0);
    }
    let slopes = decade_slopes(&h);
    let last = *slopes.last()?;
    let prev = slopes[slopes.len() - 2];
    if !last.is_finite() || last > prev + 0.5 {
        return None;
    }
    Some(last.max(0.0).ceil())
}

fn check_growth(spec: &ModelSpec) -> (ClauseVerdict, Option<f64>) {
    let excess = |x: f64| spec.policy.division_rate(x) - spec.policy.death_rate(x);
    let gamma = polynomial_exponent(|x| excess(x).max(0.0));
    let verdict = ClauseVerdict {
        clause: EuClause::GrowthDomination,
        pass: gamma.is_some(),
        detail: match gamma {
            Some(g) => format!("r - q dominated by a polynomial of degree {g}"),
            None => format!(
                "r - q outgrows every polynomial on the probe grid (decade slopes {:?})",
                decade_slopes(|x| excess(x).max(0.0))
            ),
        },
    };
    (verdict, gamma)
}

/// 𝒢 applied to x ↦ x^γ at `x > 0`; +∞ when the stable integral diverges.
pub fn generator_on_power(law: &ParasiteLaw, x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let drift = law.drift.eval(x) * gamma * x.powf(gamma - 1.0);
    let diffusion = law.diffusion.eval(x) * gamma * (gamma - 1.0) * x.powf(gamma - 2.0);
    let jumps = law.active_jumps().filter(|_| gamma != 1.0).map_or(0.0, |j| {
        law.jump_rate.eval(x)
            * j.integrate(|z| (x + z).powf(gamma) - x.powf(gamma) - gamma * z * x.powf(gamma - 1.0))
    });
    let stable = law
        .active_stable()
        .map_or(0.0, |s| x * stable_power_integral(s, x, gamma));
    drift + diffusion + jumps + stable
}

/// ∫ ((x+z)^γ - x^γ) ρ(dz).
fn stable_power_integral(s: &StableJumps, x: f64, gamma: f64) -> f64 {
    let b = s.index;
    if gamma >= 1.0 + b {
        return f64::INFINITY;
    }
    let c = s.density_constant();
    let f = |z: f64| ((x + z).powf(gamma) - x.powf(gamma)) * c * z.powf(-2.0 - b);
    numeric::integrate_singular_at_zero(f, 1.0, 6, 1e-10) + numeric::integrate_tail(f, 1.0, 1e-10)
}

fn check_generator(law: &ParasiteLaw, gamma: Option<f64>) -> ClauseVerdict {
    let Some(gamma) = gamma else {
        return ClauseVerdict {
            clause: EuClause::GeneratorDomination,
            pass: false,
            detail: "no polynomial growth exponent available from clause iv)".into(),
        };
    };
    let exponent = polynomial_exponent(|x| generator_on_power(law, x, gamma).max(0.0));
    let pass = match exponent {
        Some(e) => e <= gamma + 1e-9 || gamma == 0.0,
        None => false,
    };
    ClauseVerdict {
        clause: EuClause::GeneratorDomination,
        pass,
        detail: match exponent {
            Some(e) => format!("𝒢x^{gamma} grows like x^{e}"),
            None => format!("𝒢x^{gamma} is infinite or outgrows every polynomial"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellPolicy, JumpMeasure, Rates, SharingKernel, SizeLaw};

    fn base_law() -> ParasiteLaw {
        ParasiteLaw::geometric(1.0, 0.2).with_jumps(
            Profile::linear(1.0),
            JumpMeasure {
                mass: 1.0,
                sizes: SizeLaw::Exponential { mean: 0.5 },
            },
        )
    }

    #[test]
    fn linear_quadratic_family_passes() {
        let spec = ModelSpec::new(base_law(), CellPolicy::constant(1.0, 0.5, SharingKernel::Uniform), 1.0);
        let report = validate_eu(&spec);
        assert!(report.all_pass(), "{report:#?}");
        let linear = ModelSpec::new(
            base_law(),
            CellPolicy::linear_division(1.0, 2.0, 0.5, SharingKernel::Uniform),
            1.0,
        );
        let report = validate_eu(&linear);
        assert!(report.all_pass(), "{report:#?}");
        assert_eq!(report.growth_exponent, Some(1.0));
    }

    #[test]
    fn constant_jump_rate_fails_origin_condition() {
        let mut law = base_law();
        law.jump_rate = Profile::constant(1.0);
        let spec = ModelSpec::new(law, CellPolicy::constant(1.0, 0.0, SharingKernel::Uniform), 1.0);
        let report = validate_eu(&spec);
        let v = report.verdict(EuClause::RegularityRatesDrift).unwrap();
        assert!(!v.pass);
        assert!(v.detail.contains("p(0)"));
    }

    #[test]
    fn exponential_division_rate_fails_domination() {
        let policy = CellPolicy {
            rates: Rates::General {
                division: Profile::Exponential { scale: 1.0, rate: 1.0 },
                death: Profile::zero(),
            },
            kernel: SharingKernel::Uniform,
        };
        let spec = ModelSpec::new(ParasiteLaw::geometric(1.0, 0.0), policy, 1.0);
        let report = validate_eu(&spec);
        assert!(!report.verdict(EuClause::GrowthDomination).unwrap().pass);
    }

    #[test]
    fn decreasing_jump_rate_is_flagged() {
        let mut law = base_law();
        law.jump_rate = Profile::power_sum(&[(1.0, 1.0), (-0.1, 2.0)]);
        let spec = ModelSpec::new(law, CellPolicy::constant(1.0, 0.0, SharingKernel::Uniform), 1.0);
        let v = validate_eu(&spec);
        assert!(v.verdict(EuClause::RegularityRatesDrift).unwrap().detail.contains("non-decreasing"));
    }
}
