//! Closed forms for the OU drift: moments of `(mu_t, Z_t)`, the time
//! integrals A/B/C/D, optimal affine strategies, long-run growth rates and
//! value functions. [`optimal_affine_from_abcd`] and [`affine_objective`] are
//! shared with the Markov-chain case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::ExpSum;
use crate::models::{ModelParams, OuDrift};
use crate::quadrature::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuMomentSet {
    /// `E[mu_t]`
    pub m1: f64,
    /// `Var[mu_t]`
    pub v1: f64,
    /// `E[Z_t]`
    pub m2: f64,
    /// `Var[Z_t]`
    pub v2: f64,
    /// `E[mu_t Z_t]`
    pub m3: f64,
}

impl OuMomentSet {
    pub fn cov(&self) -> f64 {
        self.m3 - self.m1 * self.m2
    }
}

/// Constants of the exponential-sum moment formulas.
///
/// Rates: `m1` uses `{0, kappa}`, `v1` `{0, 2 kappa}`, `m2` `{0, lambda, kappa}`,
/// `v2` `{0, 2 lambda, 2 kappa, kappa + lambda}`, `m3`
/// `{0, 2 kappa, kappa + lambda, kappa, lambda}`, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuCoefficients {
    pub kappa: f64,
    pub lambda: f64,
    pub m1: [f64; 2],
    pub v1: [f64; 2],
    pub m2: [f64; 3],
    pub v2: [f64; 4],
    pub m3: [f64; 5],
}

impl OuCoefficients {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let ou = *params.ou_drift()?;
        Ok(Self::from_parts(&ou, params.sigma, params.lambda))
    }

    fn from_parts(ou: &OuDrift, sigma: f64, lambda: f64) -> Self {
        let (k, l, mb, d) = (ou.kappa, lambda, ou.mu_bar, ou.delta);
        let (m0, v0) = (ou.m1_0(), ou.v1_0());
        let s2 = sigma * sigma;
        let d2 = d * d;
        let kl = k - l;

        let m1 = [mb, m0 - mb];
        let v1 = [d2 / (2.0 * k), v0 - d2 / (2.0 * k)];

        let m2_1 = (2.0 * mb - s2) / (2.0 * l);
        let m2_2 = (l * m0 - k * mb) / (l * kl) + s2 / (2.0 * l);
        let m2_3 = (mb - m0) / kl;

        let v2_1 = s2 / (2.0 * l) + d2 / (2.0 * k * l * (k + l));
        let v2_2 = (v0 - d2 / (2.0 * l)) / (kl * kl) - s2 / (2.0 * l);
        let v2_3 = (v0 - d2 / (2.0 * k)) / (kl * kl);
        let v2_4 = -2.0 / (kl * kl) * (v0 - d2 / (k + l));

        let shared = k * mb / (l * kl) - s2 / (2.0 * l);
        let m3_1 = mb * m2_1 + d2 / (2.0 * k * (k + l));
        let m3_2 = -mb * m2_3 - v0 / kl - m0 * m1[1] / kl + d2 / (2.0 * k * kl);
        let m3_3 = -shared * m0 + (m0 * m0 + v0) / kl - d2 / (k * k - l * l) - mb * m2_2;
        let m3_4 = -mb * m2_1 + mb * m2_3 + shared * m0 - mb * m0 / kl;
        let m3_5 = mb * m2_2;

        OuCoefficients {
            kappa: k,
            lambda: l,
            m1,
            v1,
            m2: [m2_1, m2_2, m2_3],
            v2: [v2_1, v2_2, v2_3, v2_4],
            m3: [m3_1, m3_2, m3_3, m3_4, m3_5],
        }
    }

    pub fn m1_sum(&self) -> ExpSum {
        let k = self.kappa;
        ExpSum::from_terms([(self.m1[0], 0.0), (self.m1[1], k)])
    }

    pub fn v1_sum(&self) -> ExpSum {
        ExpSum::from_terms([(self.v1[0], 0.0), (self.v1[1], 2.0 * self.kappa)])
    }

    pub fn m2_sum(&self) -> ExpSum {
        let (k, l) = (self.kappa, self.lambda);
        ExpSum::from_terms([(self.m2[0], 0.0), (self.m2[1], l), (self.m2[2], k)])
    }

    pub fn v2_sum(&self) -> ExpSum {
        let (k, l) = (self.kappa, self.lambda);
        ExpSum::from_terms([
            (self.v2[0], 0.0),
            (self.v2[1], 2.0 * l),
            (self.v2[2], 2.0 * k),
            (self.v2[3], k + l),
        ])
    }

    pub fn m3_sum(&self) -> ExpSum {
        let (k, l) = (self.kappa, self.lambda);
        ExpSum::from_terms([
            (self.m3[0], 0.0),
            (self.m3[1], 2.0 * k),
            (self.m3[2], k + l),
            (self.m3[3], k),
            (self.m3[4], l),
        ])
    }

    /// `Cov(mu_t, Z_t)` as an exponential sum; it vanishes at `t = 0`.
    pub fn cov_sum(&self) -> ExpSum {
        &self.m3_sum() - &(&self.m1_sum() * &self.m2_sum())
    }

    /// Moments rebuilt from the exponential sums.
    pub fn moments_at(&self, t: f64) -> OuMomentSet {
        OuMomentSet {
            m1: self.m1_sum().eval(t),
            v1: self.v1_sum().eval(t),
            m2: self.m2_sum().eval(t),
            v2: self.v2_sum().eval(t),
            m3: self.m3_sum().eval(t),
        }
    }

    /// The five moment formulas. `m2`, `v2` and `m3` vanish at `t = 0` and
    /// are evaluated in `expm1` form so that they do so exactly.
    pub fn direct(&self, t: f64) -> OuMomentSet {
        let ek = (-self.kappa * t).exp();
        let [a1, a2] = self.m1;
        let [b1, b2] = self.v1;
        OuMomentSet {
            m1: a1 + a2 * ek,
            v1: b1 + b2 * ek * ek,
            m2: eval_from_zero(&self.m2_sum(), t),
            v2: eval_from_zero(&self.v2_sum(), t).max(0.0),
            m3: eval_from_zero(&self.m3_sum(), t),
        }
    }
}

/// Sum of the values at `t` of a sum that vanishes at 0, evaluated as
/// `sum c_k expm1(-r_k t)` to avoid cancellation for small `t`.
fn eval_from_zero(s: &ExpSum, t: f64) -> f64 {
    s.terms().iter().map(|&(c, r)| c * (-r * t).exp_m1()).sum()
}

pub fn ou_moments(params: &ModelParams, t: f64) -> Result<OuMomentSet> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    Ok(OuCoefficients::new(params)?.direct(t))
}

/// Time-integrated moments over `[0, T]`:
/// `A = int E[mu Z]`, `B = int E[mu]`, `C = int E[Z^2]`, `D = int E[Z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abcd {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Abcd {
    pub fn determinant(&self, horizon: f64) -> f64 {
        self.c * horizon - self.d * self.d
    }
}

/// Which closed form to use for `C(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CIntegral {
    /// Exact integral of `m2^2 + v2`.
    #[default]
    Exact,
    /// The variant used to produce the published coefficient table, which
    /// pairs the `e^{-(kappa+lambda)T}` term with the third `m3` constant and
    /// the `e^{-kappa T}` term with the second `m2` constant.
    ReferenceTable,
}

pub fn ou_abcd(params: &ModelParams, horizon: f64) -> Result<Abcd> {
    ou_abcd_with(params, horizon, CIntegral::Exact)
}

pub fn ou_abcd_with(params: &ModelParams, horizon: f64, variant: CIntegral) -> Result<Abcd> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("T", format!("must be positive, got {horizon}")));
    }
    let co = OuCoefficients::new(params)?;
    let m2 = co.m2_sum();
    let a = co.m3_sum().integral(horizon);
    let b = co.m1_sum().integral(horizon);
    let d = m2.integral(horizon);
    let c = match variant {
        CIntegral::Exact => (&(&m2 * &m2) + &co.v2_sum()).integral(horizon),
        CIntegral::ReferenceTable => reference_c(&co, horizon),
    };
    Ok(Abcd { a, b, c, d })
}

fn reference_c(co: &OuCoefficients, horizon: f64) -> f64 {
    use crate::expsum::integral_of_exp as ie;
    let (k, l) = (co.kappa, co.lambda);
    let [m12, m22, m32] = co.m2;
    let [v12, v22, v32, v42] = co.v2;
    let m33 = co.m3[2];
    (m12 * m12 + v12) * horizon
        + (m22 * m22 + v22) * ie(2.0 * l, horizon)
        + (m32 * m32 + v32) * ie(2.0 * k, horizon)
        + (2.0 * m22 * m33 + v42) * ie(k + l, horizon)
        + 2.0 * m12 * m22 * ie(l, horizon)
        + 2.0 * m12 * m22 * ie(k, horizon)
}

/// Maximizer `(a1*, b1*)` of [`affine_objective`].
pub fn optimal_affine_from_abcd(abcd: &Abcd, horizon: f64, sigma: f64) -> Result<(f64, f64)> {
    let det = abcd.determinant(horizon);
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::DegenerateZProcess { determinant: det });
    }
    let s2 = sigma * sigma;
    let a = (abcd.a * horizon - abcd.b * abcd.d) / (s2 * det);
    let b = (abcd.b * abcd.c - abcd.a * abcd.d) / (s2 * det);
    Ok((a, b))
}

/// Expected log-growth `g(a, b; T)` of the weight `a z + b`.
pub fn affine_objective(abcd: &Abcd, horizon: f64, sigma: f64, a: f64, b: f64) -> f64 {
    abcd.a * a + abcd.b * b
        - 0.5 * sigma * sigma * (abcd.c * a * a + 2.0 * abcd.d * a * b + horizon * b * b)
}

/// `(a1*, b1*)` for horizon `T`.
pub fn optimal_c1_coefficients(params: &ModelParams, horizon: f64) -> Result<(f64, f64)> {
    optimal_affine_from_abcd(&ou_abcd(params, horizon)?, horizon, params.sigma)
}

/// Time-dependent coefficients `(a2*(t), b2*(t))` of the optimal square-integrable strategy.
pub fn optimal_c2_coefficients(params: &ModelParams, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    Ok(C2Schedule::new(params)?.at(t))
}

/// Precomputed evaluator for `t -> (a2*(t), b2*(t))`.
#[derive(Debug, Clone)]
pub struct C2Schedule {
    s2: f64,
    m1: ExpSum,
    m2: ExpSum,
    v2: ExpSum,
    cov: ExpSum,
    limit0: (f64, f64),
}

impl C2Schedule {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let co = OuCoefficients::new(params)?;
        let ou = params.ou_drift()?;
        let s2 = params.sigma * params.sigma;
        Ok(C2Schedule {
            s2,
            m1: co.m1_sum(),
            m2: co.m2_sum(),
            v2: co.v2_sum(),
            cov: co.cov_sum(),
            limit0: (ou.v1_0() / (s2 * s2), ou.m1_0() / s2),
        })
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return self.limit0;
        }
        let v2 = eval_from_zero(&self.v2, t);
        if v2 <= 0.0 {
            return self.limit0;
        }
        let cov = eval_from_zero(&self.cov, t);
        let m2 = eval_from_zero(&self.m2, t);
        let a = cov / (v2 * self.s2);
        (a, self.m1.eval(t) / self.s2 - m2 * a)
    }
}

/// Optimal long-run growth coefficients `(a_inf, b_inf)`.
pub fn growth_limit_affine(params: &ModelParams) -> Result<(f64, f64)> {
    params.validate()?;
    let ou = params.ou_drift()?;
    let (k, l, mb, d) = (ou.kappa, params.lambda, ou.mu_bar, ou.delta);
    let s2 = params.sigma * params.sigma;
    let a = (l * d * d / s2) / (k * (k + l) * s2 + d * d);
    let b = mb / s2 - a * (2.0 * mb - s2) / (2.0 * l);
    Ok((a, b))
}

fn eta_raw(ou: &OuDrift, sigma: f64, lambda: f64) -> f64 {
    let (k, mb, d) = (ou.kappa, ou.mu_bar, ou.delta);
    let s2 = sigma * sigma;
    let d2 = d * d;
    let kl = k + lambda;
    d2 * d2 / (4.0 * k * s2) * lambda / (k * s2 * kl * kl + kl * d2) + mb * mb / (2.0 * s2)
}

/// Long-run growth rate of the optimal affine strategy at decay rate `lambda`
/// (the model's own `lambda` unless overridden).
pub fn eta(params: &ModelParams, lambda_override: Option<f64>) -> Result<f64> {
    let ou = params.ou_drift()?;
    let lambda = lambda_override.unwrap_or(params.lambda);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let mut p = *params;
    p.lambda = lambda;
    if let Err(e) = p.validate() {
        // kappa == lambda only matters for finite-horizon formulas
        if !matches!(e, Error::KappaEqualsLambda { .. }) {
            return Err(e);
        }
    }
    Ok(eta_raw(ou, params.sigma, lambda))
}

/// `sup_lambda eta(lambda)`, attained at [`hat_lambda`].
pub fn eta_upper_bound(params: &ModelParams) -> Result<f64> {
    let ou = params.ou_drift()?;
    let (k, mb, d, s) = (ou.kappa, ou.mu_bar, ou.delta, params.sigma);
    let s2 = s * s;
    let d2 = d * d;
    let root = (s2 * k * k + d2).sqrt();
    Ok(d2 / (4.0 * s2 * k) * d2 / (2.0 * s * k * root + 2.0 * s2 * k * k + d2) + mb * mb / (2.0 * s2))
}

/// Decay rate maximizing `eta`.
pub fn hat_lambda(params: &ModelParams) -> Result<f64> {
    let ou = params.ou_drift()?;
    Ok((ou.kappa * ou.kappa + ou.delta * ou.delta / (params.sigma * params.sigma)).sqrt())
}

/// Long-run growth with the drift observed, `lim V_bar(T) / T`.
pub fn xi(params: &ModelParams) -> Result<f64> {
    let ou = params.ou_drift()?;
    let s2 = params.sigma * params.sigma;
    Ok(ou.delta * ou.delta / (4.0 * ou.kappa * s2) + ou.mu_bar * ou.mu_bar / (2.0 * s2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctions {
    /// Optimal affine strategy with constant coefficients.
    pub v1_star: f64,
    /// Optimal function of `(t, Z_t)`.
    pub v2_star: f64,
    /// Drift observed.
    pub v_bar: f64,
    /// Price observed only.
    pub v_check: f64,
    pub xi: f64,
}

const V2_TOLERANCE: f64 = 1e-10;

pub fn value_functions(params: &ModelParams, horizon: f64) -> Result<ValueFunctions> {
    let abcd = ou_abcd(params, horizon)?;
    let (a1, b1) = optimal_affine_from_abcd(&abcd, horizon, params.sigma)?;
    let co = OuCoefficients::new(params)?;
    let s2 = params.sigma * params.sigma;
    let m1 = co.m1_sum();
    let v1 = co.v1_sum();
    let m1sq = &m1 * &m1;
    let v2 = co.v2_sum();
    let cov = co.cov_sum();
    let integrand = |t: f64| {
        let m1t = m1.eval(t);
        let v1t = v1.eval(t);
        let v2t = eval_from_zero(&v2, t);
        let corr2 = if t <= 0.0 || v2t <= 0.0 || v1t <= 0.0 {
            0.0
        } else {
            let c = eval_from_zero(&cov, t) / (v1t * v2t).sqrt();
            c.clamp(-1.0, 1.0).powi(2)
        };
        (corr2 * v1t + m1t * m1t) / (2.0 * s2)
    };
    let v2_star = adaptive_simpson("V2*", integrand, 0.0, horizon, V2_TOLERANCE, 50)?;
    Ok(ValueFunctions {
        v1_star: affine_objective(&abcd, horizon, params.sigma, a1, b1),
        v2_star,
        v_bar: (&v1 + &m1sq).integral(horizon) / (2.0 * s2),
        v_check: m1sq.integral(horizon) / (2.0 * s2),
        xi: xi(params)?,
    })
}

/// Number of decimals at which `a2*`, `b2*` are compared with their limits
/// when counting convergence days; the coefficients are reported to 4 places.
pub const CONVERGENCE_DECIMALS: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceDays {
    pub a_day: u32,
    pub b_day: u32,
}

/// First trading day from which `a2*` (resp. `b2*`), rounded to `decimals`,
/// equals `a_inf` (resp. `b_inf`) on every later day up to `max_days`.
pub fn convergence_days(
    params: &ModelParams,
    dt: f64,
    decimals: i32,
    max_days: u32,
) -> Result<ConvergenceDays> {
    let sched = C2Schedule::new(params)?;
    let (ai, bi) = growth_limit_affine(params)?;
    let scale = 10f64.powi(decimals);
    let round = |x: f64| (x * scale).round();
    let (ra, rb) = (round(ai), round(bi));
    let mut a_day = 0;
    let mut b_day = 0;
    for day in 0..=max_days {
        let (a, b) = sched.at(f64::from(day) * dt);
        if round(a) != ra {
            a_day = day + 1;
        }
        if round(b) != rb {
            b_day = day + 1;
        }
    }
    if a_day > max_days || b_day > max_days {
        return Err(Error::invalid(
            "max_days",
            format!("coefficients have not settled by day {max_days}"),
        ));
    }
    Ok(ConvergenceDays { a_day, b_day })
}
