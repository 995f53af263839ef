use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CellPolicy, ParasiteLaw, SharingKernel};
use crate::numeric::{bisect, golden_section_min};

/// κ̂(λ) = λ(g - σ²) + λ²σ² + 2r(E[Θ^λ] - 1) for the spine log-load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceExponent {
    pub g: f64,
    pub sigma2: f64,
    pub r: f64,
    pub kernel: SharingKernel,
}

impl LaplaceExponent {
    pub fn new(g: f64, sigma2: f64, r: f64, kernel: SharingKernel) -> Self {
        LaplaceExponent { g, sigma2, r, kernel }
    }

    /// Reads g, σ² and r off a geometric law (g(x) = gx, σ²(x) = σ²x²) with constant rates.
    pub fn from_model(law: &ParasiteLaw, policy: &CellPolicy) -> Result<Self> {
        let g = law
            .drift
            .as_linear()
            .ok_or_else(|| invalid("drift", "κ̂ needs a linear drift g(x) = gx"))?;
        let sigma2 = law
            .diffusion
            .as_monomial(2.0)
            .ok_or_else(|| invalid("diffusion", "κ̂ needs σ²(x) = σ²x²"))?;
        if law.active_jumps().is_some() {
            return Err(invalid("jumps", "κ̂ is defined without compensated jumps"));
        }
        let (r, _) = policy
            .constant_rates()
            .ok_or_else(|| invalid("rates", "κ̂ needs constant division and death rates"))?;
        Ok(Self::new(g, sigma2, r, policy.kernel.clone()))
    }

    pub fn lambda_minus(&self) -> f64 {
        self.kernel.lambda_minus()
    }

    /// +∞ at or below λ⁻.
    pub fn kappa_hat(&self, lambda: f64) -> f64 {
        let m = self.kernel.mellin(lambda);
        if !m.is_finite() {
            return f64::INFINITY;
        }
        lambda * (self.g - self.sigma2) + lambda * lambda * self.sigma2 + 2.0 * self.r * (m - 1.0)
    }

    pub fn kappa_hat_derivative(&self, lambda: f64) -> f64 {
        (self.g - self.sigma2) + 2.0 * lambda * self.sigma2 + 2.0 * self.r * self.kernel.mellin_derivative(lambda)
    }

    /// 𝐦 = κ̂′(0⁺) = g - σ² + 2r E[ln Θ].
    pub fn malthus_drift(&self) -> f64 {
        self.g - self.sigma2 + 2.0 * self.r * self.kernel.log_moment()
    }

    /// Midpoint convexity of κ̂ on `n` points of `(lo, hi)`.
    pub fn is_convex_on(&self, lo: f64, hi: f64, n: usize) -> bool {
        let h = (hi - lo) / (n as f64 + 1.0);
        (1..=n).all(|i| {
            let x = lo + i as f64 * h;
            let (a, b) = (x - 0.5 * h, x + 0.5 * h);
            let mid = self.kappa_hat(x);
            let chord = 0.5 * (self.kappa_hat(a) + self.kappa_hat(b));
            mid <= chord + 1e-12 * chord.abs().max(1.0)
        })
    }

    /// τ̂ = argmin of κ̂ on (λ⁻, 0).
    ///
    /// Golden-section search on an expanding bracket, polished by bisection on κ̂′.
    pub fn tau_hat(&self) -> Result<f64> {
        let m = self.malthus_drift();
        let lm = self.lambda_minus();
        if !(lm < 0.0 && m > 0.0) {
            return Err(Error::NoInteriorMinimizer(format!(
                "requires λ⁻ < 0 < 𝐦, got λ⁻ = {lm}, 𝐦 = {m}"
            )));
        }
        let delta = 1e-8;
        let hi = -delta;
        let mut lo = if lm.is_finite() { lm + delta } else { -1.0 };
        if !lm.is_finite() {
            while self.kappa_hat_derivative(lo) >= 0.0 {
                lo *= 2.0;
                if lo < -1e6 {
                    return Err(Error::NoInteriorMinimizer("κ̂ has no minimizer above -10⁶".into()));
                }
            }
        }
        if !self.is_convex_on(lo, hi, 64) {
            return Err(Error::NoInteriorMinimizer("κ̂ failed the sampled convexity check".into()));
        }
        let rough = golden_section_min(|l| self.kappa_hat(l), lo, hi, 1e-10);
        let width = 1e-4 * (1.0 + rough.abs());
        let (a, b) = ((rough - width).max(lo), (rough + width).min(hi));
        let d = |l: f64| self.kappa_hat_derivative(l);
        let tau = if d(a) < 0.0 && d(b) > 0.0 {
            bisect(d, a, b, 1e-15).unwrap_or(rough)
        } else {
            bisect(d, lo, hi, 1e-15).unwrap_or(rough)
        };
        Ok(tau)
    }
}

/// Class of the long-run behavior of E[𝔠_t].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegimeClass {
    MeanToZero,
    Grows,
    GrowsSlow,
    Undetermined,
}

impl RegimeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeClass::MeanToZero => "MEAN_TO_ZERO",
            RegimeClass::Grows => "GROWS",
            RegimeClass::GrowsSlow => "GROWS_SLOW",
            RegimeClass::Undetermined => "UNDETERMINED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub malthus: f64,
    pub tau_hat: Option<f64>,
    /// κ̂(τ̂) + r - q
    pub exponent_at_tau: Option<f64>,
    pub class: RegimeClass,
    /// E[𝔠_t] ≍ t^{polynomial_order} e^{rate_exponent·t}; `None` when no asymptotic applies.
    pub rate_exponent: Option<f64>,
    pub polynomial_order: Option<f64>,
}

/// Relative tolerance under which 𝐦 is treated as zero.
const MALTHUS_ZERO: f64 = 1e-13;

pub fn classify_mean_cells(le: &LaplaceExponent, q: f64) -> Result<RegimeVerdict> {
    if !(le.r > 0.0) {
        return Err(invalid("r", "classification requires r > 0"));
    }
    let r = le.r;
    let m = le.malthus_drift();
    let scale = le.g.abs() + le.sigma2.abs() + r;
    let lm = le.lambda_minus();
    let zero = m.abs() <= MALTHUS_ZERO * scale;
    let (tau, at_tau) = if !zero && m > 0.0 && lm < 0.0 {
        let t = le.tau_hat()?;
        (Some(t), Some(le.kappa_hat(t) + r - q))
    } else {
        (None, None)
    };
    let (rate, order) = if zero {
        if lm < 0.0 {
            (Some(r - q), Some(-0.5))
        } else {
            (None, None)
        }
    } else if m < 0.0 {
        (Some(r - q), Some(0.0))
    } else {
        (at_tau, at_tau.map(|_| -1.5))
    };
    let class = if q > r {
        RegimeClass::MeanToZero
    } else if let Some(e) = at_tau {
        if e <= 0.0 {
            RegimeClass::MeanToZero
        } else {
            RegimeClass::GrowsSlow
        }
    } else if r == q {
        RegimeClass::Undetermined
    } else if zero {
        if lm < 0.0 {
            RegimeClass::GrowsSlow
        } else {
            RegimeClass::Undetermined
        }
    } else if m < 0.0 {
        RegimeClass::Grows
    } else {
        RegimeClass::Undetermined
    };
    Ok(RegimeVerdict {
        malthus: m,
        tau_hat: tau,
        exponent_at_tau: at_tau,
        class,
        rate_exponent: rate,
        polynomial_order: order,
    })
}

/// g* = 3r - q + 2√(2r(r-q)) for the uniform kernel with σ = 0.
pub fn uniform_threshold(r: f64, q: f64) -> Result<f64> {
    if !(r > q && q >= 0.0) {
        return Err(invalid("rates", "the uniform threshold requires r > q ≥ 0"));
    }
    Ok(3.0 * r - q + 2.0 * (2.0 * r * (r - q)).sqrt())
}

/// x₀(r,q): the root on (2r, ∞) of φ(x) = x(1 + ln 2r - ln x) - (r + q).
pub fn equal_sharing_threshold(r: f64, q: f64) -> Result<f64> {
    if !(r > q && q >= 0.0) {
        return Err(invalid("rates", "x₀(r,q) requires r > q ≥ 0"));
    }
    let phi = |x: f64| x * (1.0 + (2.0 * r).ln() - x.ln()) - (r + q);
    let lo = 2.0 * r;
    let mut hi = 4.0 * r;
    while phi(hi) > 0.0 {
        hi *= 2.0;
    }
    bisect(phi, lo, hi, 1e-13 * hi).ok_or_else(|| Error::Degenerate("φ has no sign change on (2r, ∞)".into()))
}

/// g* = x₀(r,q)·ln 2 for equal sharing with σ = 0.
pub fn equal_sharing_growth_threshold(r: f64, q: f64) -> Result<f64> {
    Ok(equal_sharing_threshold(r, q)? * std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeCell {
    pub g_over_r: f64,
    pub theta0: f64,
    pub class: RegimeClass,
}

/// Classification over a (g/r, θ₀) grid for the two-point kernel, σ = 0, r = 1 and q = `q_over_r`.
pub fn regime_map(q_over_r: f64, g_over_r: &[f64], theta0: &[f64]) -> Result<Vec<RegimeCell>> {
    let mut cells = Vec::with_capacity(g_over_r.len() * theta0.len());
    for &t in theta0 {
        let kernel = SharingKernel::two_point(t)?;
        for &g in g_over_r {
            if !(g > 0.0) {
                return Err(invalid("g_over_r", "grid must lie in (0, ∞)"));
            }
            let le = LaplaceExponent::new(g, 0.0, 1.0, kernel.clone());
            let v = classify_mean_cells(&le, q_over_r)?;
            cells.push(RegimeCell {
                g_over_r: g,
                theta0: t,
                class: v.class,
            });
        }
    }
    Ok(cells)
}

/// g/r = -ln(θ₀(1-θ₀)), where 𝐦 changes sign for the two-point kernel.
pub fn two_point_malthus_boundary(theta0: f64) -> f64 {
    -(theta0 * (1.0 - theta0)).ln()
}

pub fn write_regime_map_csv<W: Write>(mut out: W, cells: &[RegimeCell]) -> io::Result<()> {
    writeln!(out, "g_over_r,theta0,class")?;
    for c in cells {
        writeln!(out, "{},{},{}", c.g_over_r, c.theta0, c.class.as_str())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_at_zero_and_closed_forms() {
        let le = LaplaceExponent::new(3.0, 0.0, 1.5, SharingKernel::Uniform);
        assert_eq!(le.kappa_hat(0.0), 0.0);
        let l = 0.7;
        assert!((le.kappa_hat(l) - (l * 3.0 + 3.0 * (1.0 / (l + 1.0) - 1.0))).abs() < 1e-12);
        assert!(le.kappa_hat(-1.0).is_infinite());
        let tp = LaplaceExponent::new(2.0, 0.0, 1.0, SharingKernel::two_point(0.2).unwrap());
        let l = -0.4;
        let expected = l * 2.0 + (0.2f64.powf(l) + 0.8f64.powf(l) - 2.0);
        assert!((tp.kappa_hat(l) - expected).abs() < 1e-12);
    }

    #[test]
    fn malthus_values() {
        let u = LaplaceExponent::new(5.0, 0.0, 1.0, SharingKernel::Uniform);
        assert!((u.malthus_drift() - 3.0).abs() < 1e-15);
        let d = LaplaceExponent::new(2.0, 0.0, 1.0, SharingKernel::EqualSharing);
        assert!((d.malthus_drift() - (2.0 - 2.0 * 2f64.ln())).abs() < 1e-15);
        let t = LaplaceExponent::new(2.0, 0.0, 1.0, SharingKernel::two_point(0.25).unwrap());
        assert!((t.malthus_drift() - (2.0 + (0.1875f64).ln())).abs() < 1e-15);
    }

    #[test]
    fn tau_hat_examples() {
        let u = LaplaceExponent::new(4.0, 0.0, 1.0, SharingKernel::Uniform);
        assert!((u.tau_hat().unwrap() - (0.5f64.sqrt() - 1.0)).abs() < 1e-10);
        let d = LaplaceExponent::new(2.0, 0.0, 1.0, SharingKernel::EqualSharing);
        let expected = (2f64.ln()).ln() / 2f64.ln();
        assert!((d.tau_hat().unwrap() - expected).abs() < 1e-10);
        assert!((expected + 0.528766).abs() < 1e-6);
        let neg = LaplaceExponent::new(1.0, 0.0, 1.0, SharingKernel::Uniform);
        assert!(matches!(neg.tau_hat(), Err(Error::NoInteriorMinimizer(_))));
    }

    #[test]
    fn classification_examples() {
        let le = |g| LaplaceExponent::new(g, 0.0, 1.0, SharingKernel::Uniform);
        assert_eq!(classify_mean_cells(&le(5.0), 0.5).unwrap().class, RegimeClass::MeanToZero);
        assert_eq!(classify_mean_cells(&le(4.0), 0.5).unwrap().class, RegimeClass::GrowsSlow);
        assert_eq!(classify_mean_cells(&le(1.0), 0.5).unwrap().class, RegimeClass::Grows);
        assert_eq!(classify_mean_cells(&le(1.0), 2.0).unwrap().class, RegimeClass::MeanToZero);
        assert_eq!(classify_mean_cells(&le(1.0), 1.0).unwrap().class, RegimeClass::Undetermined);
        let v = classify_mean_cells(&le(2.0), 0.5).unwrap();
        assert_eq!(v.class, RegimeClass::GrowsSlow);
        assert_eq!(v.polynomial_order, Some(-0.5));
        assert!((uniform_threshold(1.0, 0.5).unwrap() - 4.5).abs() < 1e-15);
    }

    #[test]
    fn equal_sharing_root() {
        let x0 = equal_sharing_threshold(1.0, 0.0).unwrap();
        assert!((x0 - 4.311070407001005).abs() < 1e-9);
        assert!((equal_sharing_threshold(1.0, 0.5).unwrap() - 3.572546259759025).abs() < 1e-9);
        assert!((equal_sharing_threshold(2.0, 1.0).unwrap() - 7.145092519518053).abs() < 1e-9);
        assert!(equal_sharing_threshold(1.0, 1.0).is_err());
    }

    #[test]
    fn regime_map_csv() {
        let cells = regime_map(0.5, &[1.0, 2.0], &[0.1, 0.25]).unwrap();
        assert_eq!(cells.len(), 4);
        let mut buf = Vec::new();
        write_regime_map_csv(&mut buf, &cells).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("g_over_r,theta0,class\n1,0.1,"));
        assert!((two_point_malthus_boundary(0.25) - 1.6740).abs() < 1e-4);
    }
}
