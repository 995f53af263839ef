use serde::{Deserialize, Serialize};

/// One term `coef · x^power` of a [`Profile::PowerSum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub power: f64,
}

/// Parametric scalar function of the trait, used for drift, diffusion,
/// jump rate, division rate and death rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Profile {
    /// c
    Constant { value: f64 },
    /// slope · x + intercept
    Affine { slope: f64, intercept: f64 },
    /// Σ coef · x^power
    PowerSum { terms: Vec<Monomial> },
    /// scale · exp(rate · x)
    Exponential { scale: f64, rate: f64 },
    /// max · x / (half + x)
    Saturating { max: f64, half: f64 },
}

impl Profile {
    pub fn zero() -> Self {
        Profile::Constant { value: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    /// `slope · x`
    pub fn linear(slope: f64) -> Self {
        Profile::Affine {
            slope,
            intercept: 0.0,
        }
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        Profile::Affine { slope, intercept }
    }

    pub fn power_sum(terms: &[(f64, f64)]) -> Self {
        Profile::PowerSum {
            terms: terms
                .iter()
                .map(|&(coef, power)| Monomial { coef, power })
                .collect(),
        }
    }

    /// `coef · x^power`
    pub fn monomial(coef: f64, power: f64) -> Self {
        Self::power_sum(&[(coef, power)])
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Affine { slope, intercept } => slope * x + intercept,
            Profile::PowerSum { terms } => terms
                .iter()
                .map(|m| {
                    if m.power == 0.0 {
                        m.coef
                    } else if x == 0.0 {
                        if m.power > 0.0 {
                            0.0
                        } else {
                            f64::INFINITY * m.coef.signum()
                        }
                    } else {
                        m.coef * x.powf(m.power)
                    }
                })
                .sum(),
            Profile::Exponential { scale, rate } => scale * (rate * x).exp(),
            Profile::Saturating { max, half } => max * x / (half + x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Profile::Constant { .. } => 0.0,
            Profile::Affine { slope, .. } => *slope,
            Profile::PowerSum { terms } => terms
                .iter()
                .filter(|m| m.power != 0.0)
                .map(|m| m.coef * m.power * x.powf(m.power - 1.0))
                .sum(),
            Profile::Exponential { scale, rate } => scale * rate * (rate * x).exp(),
            Profile::Saturating { max, half } => max * half / ((half + x) * (half + x)),
        }
    }

    /// Returns `Some(c)` when the profile is exactly `c · x`.
    pub fn as_linear(&self) -> Option<f64> {
        match self {
            Profile::Constant { value } if *value == 0.0 => Some(0.0),
            Profile::Affine { slope, intercept } if *intercept == 0.0 => Some(*slope),
            Profile::PowerSum { terms } => {
                let mut slope = 0.0;
                for m in terms {
                    if m.coef == 0.0 {
                        continue;
                    }
                    if m.power != 1.0 {
                        return None;
                    }
                    slope += m.coef;
                }
                Some(slope)
            }
            _ => None,
        }
    }

    /// Returns `Some(c)` when the profile is exactly `c · x^power`.
    pub fn as_monomial(&self, power: f64) -> Option<f64> {
        if power == 1.0 {
            return self.as_linear();
        }
        if power == 0.0 {
            return self.as_constant();
        }
        match self {
            Profile::Constant { value } if *value == 0.0 => Some(0.0),
            Profile::PowerSum { terms } => {
                let mut c = 0.0;
                for m in terms {
                    if m.coef == 0.0 {
                        continue;
                    }
                    if m.power != power {
                        return None;
                    }
                    c += m.coef;
                }
                Some(c)
            }
            _ => None,
        }
    }

    /// Returns `Some(c)` when the profile does not depend on the trait.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Profile::Constant { value } => Some(*value),
            Profile::Affine { slope, intercept } if *slope == 0.0 => Some(*intercept),
            Profile::PowerSum { terms } => {
                let mut c = 0.0;
                for m in terms {
                    if m.coef == 0.0 {
                        continue;
                    }
                    if m.power != 0.0 {
                        return None;
                    }
                    c += m.coef;
                }
                Some(c)
            }
            Profile::Exponential { scale, rate } if *rate == 0.0 => Some(*scale),
            _ => None,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }
}
