use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the linear-division family r(x) = αx + β, g(x) = gx, constant q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDivisionParams {
    pub alpha: f64,
    pub beta: f64,
    pub g: f64,
    pub q: f64,
}

impl LinearDivisionParams {
    pub fn new(alpha: f64, beta: f64, g: f64, q: f64) -> Self {
        LinearDivisionParams { alpha, beta, g, q }
    }
}

/// m(x,s,t) = (αx/(g-β)) e^{(g-q)(t-s)} + (1 - αx/(g-β)) e^{(β-q)(t-s)}.
pub fn mean_population(x: f64, s: f64, t: f64, p: LinearDivisionParams) -> Result<f64> {
    if p.g == p.beta && p.alpha != 0.0 {
        return Err(Error::Degenerate("g = β: mean population formula is undefined".into()));
    }
    let d = t - s;
    let c = if p.alpha == 0.0 { 0.0 } else { p.alpha * x / (p.g - p.beta) };
    Ok(c * ((p.g - p.q) * d).exp() + (1.0 - c) * ((p.beta - p.q) * d).exp())
}

/// e^{(r-q)(t-s)}: the constant-rate mean count.
pub fn mean_population_constant(r: f64, q: f64, s: f64, t: f64) -> f64 {
    ((r - q) * (t - s)).exp()
}

fn check_second_moment(p: &LinearDivisionParams) -> Result<()> {
    if p.alpha != 0.0 {
        if p.g == p.beta {
            return Err(Error::Degenerate("g - β = 0 in the second-moment expression".into()));
        }
        if p.g - 2.0 * p.beta + p.q == 0.0 {
            return Err(Error::Degenerate("g - 2β + q = 0 in the second-moment expression".into()));
        }
    }
    if p.beta == p.q {
        return Err(Error::Degenerate("β - q = 0 in the second-moment expression".into()));
    }
    Ok(())
}

/// E[N_t²] from one cell with trait x.
///
/// This is the variation-of-constants solution of
/// dE[N²]/dt = αxe^{(g-q)t}(1 + 2E[N]) + (β+q)E[N] + 2(β-q)E[N²],
/// which is exact when α = 0.
pub fn second_moment_n(x: f64, t: f64, p: LinearDivisionParams) -> Result<f64> {
    check_second_moment(&p)?;
    let LinearDivisionParams { alpha, beta, g, q } = p;
    if alpha == 0.0 {
        let e_2b = (2.0 * (beta - q) * t).exp();
        let e_b = ((beta - q) * t).exp();
        return Ok(e_2b - (beta + q) * (e_b - e_2b) / (beta - q));
    }
    let ax = alpha * x;
    let gb = g - beta;
    let d2 = g - 2.0 * beta + q;
    let e_gq = ((g - q) * t).exp();
    let e_2b = (2.0 * (beta - q) * t).exp();
    let e_b = ((beta - q) * t).exp();
    let e_2g = (2.0 * (g - q) * t).exp();
    let e_gb = ((g + beta - 2.0 * q) * t).exp();
    let c = ax / gb;
    Ok(e_2b + ax * (e_gq - e_2b) / d2
        + 2.0 * ax * ax / gb * (e_2g - e_2b) / (2.0 * gb)
        + 2.0 * ax * (1.0 - c) * (e_gb - e_2b) / gb
        + (beta + q) * c * (e_gq - e_2b) / d2
        - (1.0 - c) * (beta + q) * (e_b - e_2b) / (beta - q))
}

/// E[N_t²] / E[N_t]².
pub fn second_moment_ratio(x: f64, t: f64, p: LinearDivisionParams) -> Result<f64> {
    let m = mean_population(x, 0.0, t, p)?;
    Ok(second_moment_n(x, t, p)? / (m * m))
}

/// lim_{t→∞} E[N_t²] / E[N_t]².
pub fn asymptotic_ratio(x: f64, p: LinearDivisionParams) -> Result<f64> {
    check_second_moment(&p)?;
    let LinearDivisionParams { alpha, beta, g, q } = p;
    let ax = alpha * x;
    if alpha == 0.0 {
        if beta <= q {
            return Err(Error::Precondition("the ratio limit needs β > q".into()));
        }
        return Ok(1.0 + (beta + q) / (beta - q));
    }
    if beta > g.max(q) {
        let bg = beta - g;
        let c1 = 1.0 + ax / (2.0 * beta - g - q) - ax * ax / (bg * bg)
            + (1.0 + ax / bg) * (2.0 * ax / bg + (beta + q) / (beta - q))
            + ax / (g - beta) * (beta + q) / (2.0 * beta - g - q);
        let lead = 1.0 + ax / bg;
        return Ok(c1 / (lead * lead));
    }
    if g > beta.max(q) {
        return Ok(1.0);
    }
    Err(Error::Precondition("the ratio limit needs β > max(g,q) or g > max(β,q)".into()))
}
