//! Domain types shared by every other module: drift models, simulation
//! settings, strategy descriptions, and the ExpMA period <-> decay-rate map.
//!
//! All rates are in monthly units; a trading day is `1/21` month.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trading days per month.
pub const DAYS_PER_MONTH: f64 = 21.0;

/// One trading day, in months.
pub const ONE_DAY: f64 = 1.0 / DAYS_PER_MONTH;

/// Seed used when a config or command line does not supply one.
pub const DEFAULT_SEED: u64 = 271_828;

/// Distance below which `kappa ~ lambda` or `lambda ~ alpha + beta` is
/// treated as the excluded equality.
const SINGULAR_GAP: f64 = 1e-8;

/// Ornstein-Uhlenbeck drift `dmu = kappa (mu_bar - mu) dt + delta dW'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuDrift {
    pub kappa: f64,
    pub mu_bar: f64,
    pub delta: f64,
    /// Mean of `mu_0`; stationary mean `mu_bar` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1_0: Option<f64>,
    /// Variance of `mu_0`; stationary variance `delta^2 / (2 kappa)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1_0: Option<f64>,
}

impl OuDrift {
    pub fn stationary_variance(&self) -> f64 {
        self.delta * self.delta / (2.0 * self.kappa)
    }

    pub fn m1_0(&self) -> f64 {
        self.m1_0.unwrap_or(self.mu_bar)
    }

    pub fn v1_0(&self) -> f64 {
        self.v1_0.unwrap_or_else(|| self.stationary_variance())
    }

    /// True when either initial-law parameter falls back to its stationary default.
    pub fn uses_stationary_default(&self) -> bool {
        self.m1_0.is_none() || self.v1_0.is_none()
    }
}

/// Two-state continuous-time Markov chain drift on `{rho1, rho2}` with
/// switching intensities `alpha` (rho1 -> rho2) and `beta` (rho2 -> rho1),
/// started from its stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmcDrift {
    pub rho1: f64,
    pub rho2: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl CtmcDrift {
    pub fn switching_rate(&self) -> f64 {
        self.alpha + self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DriftModel {
    Ou(OuDrift),
    Ctmc2(CtmcDrift),
}

impl DriftModel {
    pub fn tag(&self) -> &'static str {
        match self {
            DriftModel::Ou(_) => "ou",
            DriftModel::Ctmc2(_) => "ctmc2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub drift: DriftModel,
    /// Price volatility.
    pub sigma: f64,
    /// ExpMA decay rate.
    pub lambda: f64,
}

impl ModelParams {
    pub fn ou(sigma: f64, lambda: f64, kappa: f64, mu_bar: f64, delta: f64) -> Self {
        ModelParams {
            drift: DriftModel::Ou(OuDrift {
                kappa,
                mu_bar,
                delta,
                m1_0: None,
                v1_0: None,
            }),
            sigma,
            lambda,
        }
    }

    pub fn ctmc(sigma: f64, lambda: f64, rho1: f64, rho2: f64, alpha: f64, beta: f64) -> Self {
        ModelParams {
            drift: DriftModel::Ctmc2(CtmcDrift {
                rho1,
                rho2,
                alpha,
                beta,
            }),
            sigma,
            lambda,
        }
    }

    /// Base OU parameter set of the experiments (`sigma = 0.0436`,
    /// `kappa = 0.0226`, `mu_bar = 0.0034`, `delta = 8.2404e-4`).
    pub fn reference_ou(lambda: f64) -> Self {
        ModelParams::ou(0.0436, lambda, 0.0226, 0.0034, 8.2404e-4)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn ou_drift(&self) -> Result<&OuDrift> {
        match &self.drift {
            DriftModel::Ou(ou) => Ok(ou),
            DriftModel::Ctmc2(_) => Err(Error::WrongDriftModel { expected: "ou" }),
        }
    }

    pub fn ctmc_drift(&self) -> Result<&CtmcDrift> {
        match &self.drift {
            DriftModel::Ctmc2(c) => Ok(c),
            DriftModel::Ou(_) => Err(Error::WrongDriftModel { expected: "ctmc2" }),
        }
    }

    pub fn validate(&self) -> Result<&Self> {
        positive_finite("sigma", self.sigma)?;
        positive_finite("lambda", self.lambda)?;
        match &self.drift {
            DriftModel::Ou(ou) => {
                positive_finite("kappa", ou.kappa)?;
                finite("mu_bar", ou.mu_bar)?;
                positive_finite("delta", ou.delta)?;
                if let Some(m) = ou.m1_0 {
                    finite("m1_0", m)?;
                }
                if let Some(v) = ou.v1_0 {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::invalid("v1_0", format!("must be >= 0, got {v}")));
                    }
                }
                if (ou.kappa - self.lambda).abs() <= SINGULAR_GAP * self.lambda.max(1.0) {
                    return Err(Error::KappaEqualsLambda {
                        kappa: ou.kappa,
                        lambda: self.lambda,
                    });
                }
            }
            DriftModel::Ctmc2(c) => {
                finite("rho1", c.rho1)?;
                finite("rho2", c.rho2)?;
                if c.rho1 >= c.rho2 {
                    return Err(Error::invalid(
                        "rho1",
                        format!("must be below rho2 ({} >= {})", c.rho1, c.rho2),
                    ));
                }
                positive_finite("alpha", c.alpha)?;
                positive_finite("beta", c.beta)?;
                let sum = c.switching_rate();
                if (self.lambda - sum).abs() < SINGULAR_GAP {
                    return Err(Error::LambdaEqualsAlphaPlusBeta {
                        lambda: self.lambda,
                        sum,
                    });
                }
            }
        }
        Ok(self)
    }
}

/// Validates `params`, returning them unchanged on success.
pub fn validate(params: ModelParams) -> Result<ModelParams> {
    params.validate()?;
    Ok(params)
}

fn finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite, got {v}")))
    }
}

fn positive_finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive, got {v}")))
    }
}

/// Decay rate whose per-step weight `lambda * dt` equals `2 / (period + 1)`.
pub fn period_to_lambda(period_days: u32, dt: f64) -> Result<f64> {
    if period_days == 0 {
        return Err(Error::invalid("period_days", "must be at least 1"));
    }
    positive_finite("dt", dt)?;
    Ok(2.0 / ((f64::from(period_days) + 1.0) * dt))
}

fn default_dt() -> f64 {
    ONE_DAY
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_pi0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon_months: f64,
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_pi0")]
    pub pi0: f64,
}

impl SimConfig {
    pub fn new(horizon_months: f64, n_paths: usize) -> Self {
        SimConfig {
            dt: ONE_DAY,
            horizon_months,
            n_paths,
            seed: DEFAULT_SEED,
            omega: 0.0,
            x0: 0.0,
            pi0: 1.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Number of time steps, `round(T / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.horizon_months / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<&Self> {
        positive_finite("dt", self.dt)?;
        positive_finite("horizon_months", self.horizon_months)?;
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.omega) {
            return Err(Error::invalid("omega", format!("must lie in [0, 1), got {}", self.omega)));
        }
        finite("x0", self.x0)?;
        positive_finite("pi0", self.pi0)?;
        if self.n_steps() == 0 {
            return Err(Error::invalid("horizon_months", "shorter than one time step"));
        }
        Ok(self)
    }
}

pub type CoefficientFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;
pub type WeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Portfolio rule `pi_t = f(t, Z_t)`.
#[derive(Clone)]
pub enum StrategySpec {
    ConstantAffine { a: f64, b: f64 },
    /// `t -> (a(t), b(t))`, weight `a(t) z + b(t)`.
    TimeVaryingAffine(CoefficientFn),
    /// Weight `g(z)`, independent of time.
    NonlinearFilter(WeightFn),
    BuyAndHold,
}

impl StrategySpec {
    pub fn time_varying(f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        StrategySpec::TimeVaryingAffine(Arc::new(f))
    }

    pub fn nonlinear(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        StrategySpec::NonlinearFilter(Arc::new(g))
    }

    /// Weight at time `t` given signal `z`; `None` for buy-and-hold, whose
    /// weight is whatever one share is worth.
    pub fn weight(&self, t: f64, z: f64) -> Option<f64> {
        match self {
            StrategySpec::ConstantAffine { a, b } => Some(a * z + b),
            StrategySpec::TimeVaryingAffine(f) => {
                let (a, b) = f(t);
                Some(a * z + b)
            }
            StrategySpec::NonlinearFilter(g) => Some(g(z)),
            StrategySpec::BuyAndHold => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StrategySpec::ConstantAffine { .. } => "constant_affine",
            StrategySpec::TimeVaryingAffine(_) => "time_varying_affine",
            StrategySpec::NonlinearFilter(_) => "nonlinear_filter",
            StrategySpec::BuyAndHold => "buy_and_hold",
        }
    }
}

impl fmt::Debug for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::ConstantAffine { a, b } => {
                f.debug_struct("ConstantAffine").field("a", a).field("b", b).finish()
            }
            other => f.write_str(other.kind()),
        }
    }
}
