//! Closed forms for the two-state Markov-chain drift: stationary moments,
//! `n2..n4`, the A/B/C/D integrals and the long-run affine optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::ExpSum;
use crate::models::{CtmcDrift, ModelParams};
use crate::ou_analytics::Abcd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmcStationary {
    /// Stationary mean of the drift.
    pub n1: f64,
    /// Stationary variance of the drift.
    pub gamma: f64,
    /// `P(mu = rho1)`.
    pub p1: f64,
    /// `P(mu = rho2)`.
    pub p2: f64,
}

pub fn ctmc_stationary(params: &ModelParams) -> Result<CtmcStationary> {
    params.validate()?;
    Ok(stationary_of(params.ctmc_drift()?))
}

pub(crate) fn stationary_of(c: &CtmcDrift) -> CtmcStationary {
    let th = c.switching_rate();
    let p1 = c.beta / th;
    let p2 = c.alpha / th;
    let gap = c.rho2 - c.rho1;
    CtmcStationary {
        n1: p1 * c.rho1 + p2 * c.rho2,
        gamma: p1 * p2 * gap * gap,
        p1,
        p2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmcMomentSet {
    /// `E[Z_t]`
    pub n2: f64,
    /// `E[mu_t Z_t]`
    pub n3: f64,
    /// `E[Z_t^2]`
    pub n4: f64,
}

/// `n2, n3, n4` as exponential sums.
#[derive(Debug, Clone)]
pub struct CtmcSums {
    pub stationary: CtmcStationary,
    pub n2: ExpSum,
    pub n3: ExpSum,
    pub n4: ExpSum,
}

impl CtmcSums {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let c = params.ctmc_drift()?;
        let st = stationary_of(c);
        let (l, th) = (params.lambda, c.switching_rate());
        let s2 = params.sigma * params.sigma;
        let (n1, g) = (st.n1, st.gamma);
        let one_minus = |k: f64, r: f64| ExpSum::from_terms([(k, 0.0), (-k, r)]);

        let j = (n1 - 0.5 * s2) / l;
        let n2 = one_minus(j, l);
        let n3 = &one_minus(n1 * n1 / l - n1 * s2 / (2.0 * l), l) + &one_minus(g / (th + l), th + l);
        let n4 = &(&one_minus(2.0 * g / ((l - th) * (l + th)), th + l)
            + &one_minus(s2 / (2.0 * l) - g / (l * (l - th)), 2.0 * l))
            + &(&n2 * &n2);
        Ok(CtmcSums {
            stationary: st,
            n2,
            n3,
            n4,
        })
    }

    pub fn at(&self, t: f64) -> CtmcMomentSet {
        let z = |s: &ExpSum| s.terms().iter().map(|&(c, r)| c * (-r * t).exp_m1()).sum::<f64>();
        // Every sum vanishes at t = 0, so evaluate through expm1.
        CtmcMomentSet {
            n2: z(&self.n2),
            n3: z(&self.n3),
            n4: z(&self.n4),
        }
    }
}

pub fn ctmc_moments(params: &ModelParams, t: f64) -> Result<CtmcMomentSet> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    Ok(CtmcSums::new(params)?.at(t))
}

/// `A = int n3`, `B = n1 T`, `C = int n4`, `D = int n2` over `[0, T]`.
pub fn ctmc_abcd(params: &ModelParams, horizon: f64) -> Result<Abcd> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("T", format!("must be positive, got {horizon}")));
    }
    let s = CtmcSums::new(params)?;
    Ok(Abcd {
        a: s.n3.integral(horizon),
        b: s.stationary.n1 * horizon,
        c: s.n4.integral(horizon),
        d: s.n2.integral(horizon),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmcLimits {
    /// `lim A(T)/T`
    pub h_inf: f64,
    /// `lim C(T)/T`
    pub i_inf: f64,
    /// `lim D(T)/T`
    pub j_inf: f64,
    /// `lim a1*(T)`
    pub c_inf: f64,
    /// `lim b1*(T)`
    pub d_inf: f64,
}

pub fn ctmc_limits(params: &ModelParams) -> Result<CtmcLimits> {
    params.validate()?;
    let c = params.ctmc_drift()?;
    let st = stationary_of(c);
    let (l, th) = (params.lambda, c.switching_rate());
    let s2 = params.sigma * params.sigma;
    let (n1, g) = (st.n1, st.gamma);
    let j_inf = n1 / l - s2 / (2.0 * l);
    Ok(CtmcLimits {
        h_inf: n1 * n1 / l - n1 * s2 / (2.0 * l) + g / (l + th),
        i_inf: g / (l * (l + th)) + s2 / (2.0 * l) + j_inf * j_inf,
        j_inf,
        c_inf: 2.0 * l * g / (2.0 * g * s2 + s2 * s2 * (l + th)),
        d_inf: (g + n1 * (l + th)) / (2.0 * g + s2 * (l + th)),
    })
}

/// Long-run growth `g(x, y)` of the affine weight `x z + y`.
pub fn ctmc_growth_value(params: &ModelParams, x: f64, y: f64) -> Result<f64> {
    let lim = ctmc_limits(params)?;
    let n1 = stationary_of(params.ctmc_drift()?).n1;
    Ok(growth_value_with(&lim, n1, params.sigma, x, y))
}

pub(crate) fn growth_value_with(lim: &CtmcLimits, n1: f64, sigma: f64, x: f64, y: f64) -> f64 {
    lim.h_inf * x + n1 * y
        - 0.5 * sigma * sigma * (lim.i_inf * x * x + 2.0 * lim.j_inf * x * y + y * y)
}
