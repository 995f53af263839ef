use serde::Serialize;

use crate::model::{CellPolicy, ParasiteLaw};

/// Tuning of the advisory assumption probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeOptions {
    /// a ∈ (0,1) in LN0 and SN∞.
    pub a_small: f64,
    /// a > 1 in SN0.
    pub a_large: f64,
    /// η in the LN0 bound.
    pub eta: f64,
    /// Fraction of grid points, at the relevant end, that must satisfy a tail condition.
    pub tail_fraction: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            a_small: 0.5,
            a_large: 2.0,
            eta: 0.1,
            tail_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePoint {
    pub x: f64,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionProbe {
    pub name: &'static str,
    pub points: Vec<ProbePoint>,
    /// Whether the inequality holds on the whole relevant tail of the grid.
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub probes: Vec<AssumptionProbe>,
}

impl ProbeReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionProbe> {
        self.probes.iter().find(|p| p.name == name)
    }
}

enum Tail {
    Small,
    Large,
    All,
}

fn finish(name: &'static str, mut points: Vec<ProbePoint>, tail: Tail, fraction: f64) -> AssumptionProbe {
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    let n = points.len();
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1.min(n), n);
    let slice = match tail {
        Tail::Small => &points[..k],
        Tail::Large => &points[n - k..],
        Tail::All => &points[..],
    };
    let satisfied = !slice.is_empty() && slice.iter().all(|p| p.holds);
    AssumptionProbe {
        name,
        points,
        satisfied,
    }
}

/// Evaluates LN0, SN0, SN∞, B.2 and B.3 pointwise on `grid`.
///
/// SN∞ needs division rates and the kernel, so it is only probed when a
/// policy is supplied; it uses the spine division rate 2r. Grid points
/// outside (0, ∞) are ignored.
pub fn probe_assumptions(
    law: &ParasiteLaw,
    policy: Option<&CellPolicy>,
    grid: &[f64],
    opts: ProbeOptions,
) -> ProbeReport {
    let grid: Vec<f64> = grid.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    let g = |u: f64| law.drift.eval(u);
    let s2 = |u: f64| law.diffusion.eval(u);
    let p = |u: f64| law.jump_rate.eval(u);
    let mut probes = Vec::new();

    let a = opts.a_small;
    let ln0: Vec<ProbePoint> = grid
        .iter()
        .filter(|&&u| u < (-1.0f64).exp())
        .map(|&u| {
            let lhs = g(u) / u - a * s2(u) / (u * u);
            let l = (1.0 / u).ln();
            let bound = -l * l.ln().powf(1.0 + opts.eta);
            ProbePoint {
                x: u,
                lhs,
                bound,
                holds: lhs <= bound,
            }
        })
        .collect();
    probes.push(finish("LN0", ln0, Tail::Small, opts.tail_fraction));

    let b = opts.a_large;
    let sn0: Vec<ProbePoint> = grid
        .iter()
        .filter(|&&u| u < 1.0)
        .map(|&u| {
            let lhs = g(u) / u - b * s2(u) / (u * u);
            let bound = -(1.0 / u).ln();
            ProbePoint {
                x: u,
                lhs,
                bound,
                holds: lhs >= bound,
            }
        })
        .collect();
    probes.push(finish("SN0", sn0, Tail::Small, opts.tail_fraction));

    if let Some(policy) = policy {
        let mellin = policy.kernel.mellin(1.0 - a);
        let sn: Vec<ProbePoint> = grid
            .iter()
            .filter(|&&u| u > 1.0)
            .map(|&u| {
                let ia = law.active_jumps().map_or(0.0, |j| {
                    j.integrate(|z| (1.0 + z / u).powf(1.0 - a) - 1.0 - (1.0 - a) * z / u) / (a - 1.0)
                });
                let lhs = g(u) / u - a * s2(u) / (u * u)
                    - 2.0 * policy.division_rate(u) * (1.0 - mellin) / (1.0 - a)
                    - p(u) * ia;
                let bound = u.ln();
                ProbePoint {
                    x: u,
                    lhs,
                    bound,
                    holds: lhs <= bound,
                }
            })
            .collect();
        probes.push(finish("SN_INF", sn, Tail::Large, opts.tail_fraction));
    }

    let b2: Vec<ProbePoint> = grid
        .iter()
        .map(|&u| {
            let lhs = u * law.jump_rate.derivative(u);
            let bound = p(u);
            ProbePoint {
                x: u,
                lhs,
                bound,
                holds: lhs >= bound - 1e-12 * bound.abs().max(1.0),
            }
        })
        .collect();
    probes.push(finish("B2", b2, Tail::All, 1.0));

    for (name, f) in [
        ("B3_DIFFUSION", &s2 as &dyn Fn(f64) -> f64),
        ("B3_JUMP_RATE", &p as &dyn Fn(f64) -> f64),
    ] {
        let ratios: Vec<(f64, f64)> = grid.iter().map(|&u| (u, f(u) / (u * u))).collect();
        let half = ratios.len() / 2;
        let reference = ratios[..half.max(1).min(ratios.len())]
            .iter()
            .map(|r| r.1.abs())
            .fold(0.0, f64::max);
        let points = ratios
            .iter()
            .map(|&(u, lhs)| ProbePoint {
                x: u,
                lhs,
                bound: 1.5 * reference + 1e-12,
                holds: lhs.is_finite() && lhs.abs() <= 1.5 * reference + 1e-12,
            })
            .collect();
        probes.push(finish(name, points, Tail::Large, opts.tail_fraction));
    }

    ProbeReport { probes }
}
