//! C ABI for expma-lab.
//!
//! Every fallible function returns an [`ExpmaStatus`] and writes results
//! through out-pointers. On failure a description is available from
//! [`expma_last_error_message`] on the same thread. Handles are created by
//! `*_new` functions and must be released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use expma_lab::ctmc_analytics::{ctmc_abcd, ctmc_limits, ctmc_moments};
use expma_lab::ctmc_filter::{long_run_growth_ctmc, StationaryFilter};
use expma_lab::metrics::compute_metrics;
use expma_lab::models::{DriftModel, OuDrift};
use expma_lab::ou_analytics::{
    eta, growth_limit_affine, hat_lambda, optimal_affine_from_abcd, optimal_c2_coefficients, ou_abcd, ou_moments,
    C2Schedule,
};
use expma_lab::simulator::{run_strategy, simulate_paths};
use expma_lab::{Error, ModelParams, SimConfig, StrategySpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpmaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    KappaEqualsLambda = 3,
    LambdaEqualsAlphaPlusBeta = 4,
    WrongDriftModel = 5,
    DegenerateZProcess = 6,
    LeverageCostSingularity = 7,
    OutsideEffectiveSupport = 8,
    QuadratureFailure = 9,
    CflViolation = 10,
    PdeInstability = 11,
    Domain = 12,
    ResourceLimit = 13,
    Config = 14,
    Io = 15,
    Panic = 16,
}

/// Opaque validated model parameters.
pub struct ExpmaModel {
    params: ModelParams,
}

/// Opaque stationary filter for the two-state drift.
pub struct ExpmaFilter {
    inner: StationaryFilter,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpmaOuMoments {
    pub m1: f64,
    pub v1: f64,
    pub m2: f64,
    pub v2: f64,
    pub m3: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpmaCtmcMoments {
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpmaCtmcLimits {
    pub h_inf: f64,
    pub i_inf: f64,
    pub j_inf: f64,
    pub c_inf: f64,
    pub d_inf: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpmaStrategyKind {
    /// Weight `a z + b` with the given coefficients.
    ConstantAffine = 0,
    BuyAndHold = 1,
    /// Long-run optimal affine coefficients of the model.
    Growth = 2,
    /// Optimal constant affine coefficients for the backtest horizon.
    UtilityC1 = 3,
    /// Optimal time-varying affine coefficients (OU only).
    UtilityC2 = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ExpmaBacktestSpec {
    pub horizon_months: f64,
    /// Step in months; 0 selects one trading day.
    pub dt: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub omega: f64,
    /// One of [`ExpmaStrategyKind`].
    pub strategy: i32,
    pub a: f64,
    pub b: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpmaMetrics {
    pub total_return: f64,
    pub se_return: f64,
    pub avg_daily_return: f64,
    pub se_daily_return: f64,
    /// NaN when `has_sharpe` is 0.
    pub sharpe: f64,
    pub se_sharpe: f64,
    pub has_sharpe: i32,
    pub log_growth: f64,
    pub se_log_growth: f64,
    pub n_paths: u64,
    pub n_steps: u64,
    pub bankrupt_count: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ExpmaStatus {
    match e {
        Error::InvalidParameter { .. } => ExpmaStatus::InvalidParameter,
        Error::KappaEqualsLambda { .. } => ExpmaStatus::KappaEqualsLambda,
        Error::LambdaEqualsAlphaPlusBeta { .. } => ExpmaStatus::LambdaEqualsAlphaPlusBeta,
        Error::WrongDriftModel { .. } => ExpmaStatus::WrongDriftModel,
        Error::DegenerateZProcess { .. } => ExpmaStatus::DegenerateZProcess,
        Error::LeverageCostSingularity { .. } => ExpmaStatus::LeverageCostSingularity,
        Error::OutsideEffectiveSupport { .. } => ExpmaStatus::OutsideEffectiveSupport,
        Error::QuadratureFailure { .. } => ExpmaStatus::QuadratureFailure,
        Error::CflViolation { .. } => ExpmaStatus::CflViolation,
        Error::PdeInstability(_) => ExpmaStatus::PdeInstability,
        Error::Domain { .. } => ExpmaStatus::Domain,
        Error::ResourceLimit(_) => ExpmaStatus::ResourceLimit,
        Error::Config(_) | Error::Json(_) => ExpmaStatus::Config,
        Error::MissingInput { .. } | Error::Io { .. } | Error::Csv(_) => ExpmaStatus::Io,
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> ExpmaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExpmaStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            ExpmaStatus::Panic
        }
    }
}

macro_rules! need {
    ($($p:ident),+) => {
        if $($p.is_null())||+ {
            set_last_error("null pointer argument");
            return ExpmaStatus::NullPointer;
        }
    };
}

unsafe fn model<'a>(m: *const ExpmaModel) -> &'a ModelParams {
    &(*m).params
}

const STATUS_NAMES: [&[u8]; 17] = [
    b"ok\0",
    b"null_pointer\0",
    b"invalid_parameter\0",
    b"kappa_equals_lambda\0",
    b"lambda_equals_alpha_plus_beta\0",
    b"wrong_drift_model\0",
    b"degenerate_Z_process\0",
    b"leverage_cost_singularity\0",
    b"outside_effective_support\0",
    b"quadrature_failure\0",
    b"cfl_violation\0",
    b"pde_instability\0",
    b"domain\0",
    b"resource_limit\0",
    b"config\0",
    b"io\0",
    b"panic\0",
];

/// Name of a status value; the string is static. Unknown values give
/// `"unknown"`.
#[no_mangle]
pub extern "C" fn expma_status_string(status: i32) -> *const c_char {
    let s: &'static [u8] = usize::try_from(status)
        .ok()
        .and_then(|i| STATUS_NAMES.get(i).copied())
        .unwrap_or(b"unknown\0");
    s.as_ptr().cast()
}

/// Message of the last failure on this thread. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn expma_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn boxed_model(params: ModelParams, out: *mut *mut ExpmaModel) -> ExpmaStatus {
    guard(|| {
        params.validate()?;
        // SAFETY: checked non-null by callers.
        unsafe { *out = Box::into_raw(Box::new(ExpmaModel { params })) };
        Ok(())
    })
}

/// OU drift model with the stationary initial drift law.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expma_model_new_ou(
    sigma: f64,
    lambda: f64,
    kappa: f64,
    mu_bar: f64,
    delta: f64,
    out: *mut *mut ExpmaModel,
) -> ExpmaStatus {
    need!(out);
    boxed_model(ModelParams::ou(sigma, lambda, kappa, mu_bar, delta), out)
}

/// OU drift model with explicit initial drift mean and variance.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expma_model_new_ou_with_initial(
    sigma: f64,
    lambda: f64,
    kappa: f64,
    mu_bar: f64,
    delta: f64,
    m1_0: f64,
    v1_0: f64,
    out: *mut *mut ExpmaModel,
) -> ExpmaStatus {
    need!(out);
    let mut p = ModelParams::ou(sigma, lambda, kappa, mu_bar, delta);
    p.drift = DriftModel::Ou(OuDrift {
        kappa,
        mu_bar,
        delta,
        m1_0: Some(m1_0),
        v1_0: Some(v1_0),
    });
    boxed_model(p, out)
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expma_model_new_ctmc(
    sigma: f64,
    lambda: f64,
    rho1: f64,
    rho2: f64,
    alpha: f64,
    beta: f64,
    out: *mut *mut ExpmaModel,
) -> ExpmaStatus {
    need!(out);
    boxed_model(ModelParams::ctmc(sigma, lambda, rho1, rho2, alpha, beta), out)
}

/// # Safety
/// `model` must come from an `expma_model_new_*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn expma_model_free(model: *mut ExpmaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expma_period_to_lambda(period_days: u32, dt: f64, out: *mut f64) -> ExpmaStatus {
    need!(out);
    guard(|| {
        let v = expma_lab::period_to_lambda(period_days, dt)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Optimal constant affine coefficients for horizon `horizon_months`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_optimal_c1(
    m: *const ExpmaModel,
    horizon_months: f64,
    out_a: *mut f64,
    out_b: *mut f64,
) -> ExpmaStatus {
    need!(m, out_a, out_b);
    let p = model(m);
    guard(|| {
        let abcd = match p.drift {
            DriftModel::Ou(_) => ou_abcd(p, horizon_months)?,
            DriftModel::Ctmc2(_) => ctmc_abcd(p, horizon_months)?,
        };
        let (a, b) = optimal_affine_from_abcd(&abcd, horizon_months, p.sigma)?;
        *out_a = a;
        *out_b = b;
        Ok(())
    })
}

/// Time-varying optimal affine coefficients at `t` (OU only).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_optimal_c2(
    m: *const ExpmaModel,
    t: f64,
    out_a: *mut f64,
    out_b: *mut f64,
) -> ExpmaStatus {
    need!(m, out_a, out_b);
    let p = model(m);
    guard(|| {
        let (a, b) = optimal_c2_coefficients(p, t)?;
        *out_a = a;
        *out_b = b;
        Ok(())
    })
}

/// Long-run optimal affine coefficients.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_growth_limit(m: *const ExpmaModel, out_a: *mut f64, out_b: *mut f64) -> ExpmaStatus {
    need!(m, out_a, out_b);
    let p = model(m);
    guard(|| {
        let (a, b) = match p.drift {
            DriftModel::Ou(_) => growth_limit_affine(p)?,
            DriftModel::Ctmc2(_) => {
                let l = ctmc_limits(p)?;
                (l.c_inf, l.d_inf)
            }
        };
        *out_a = a;
        *out_b = b;
        Ok(())
    })
}

/// Long-run growth of the optimal affine strategy; `lambda <= 0` uses the
/// model's own decay rate (OU only).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_eta(m: *const ExpmaModel, lambda: f64, out: *mut f64) -> ExpmaStatus {
    need!(m, out);
    let p = model(m);
    guard(|| {
        *out = eta(p, (lambda > 0.0).then_some(lambda))?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_hat_lambda(m: *const ExpmaModel, out: *mut f64) -> ExpmaStatus {
    need!(m, out);
    let p = model(m);
    guard(|| {
        *out = hat_lambda(p)?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_ou_moments(m: *const ExpmaModel, t: f64, out: *mut ExpmaOuMoments) -> ExpmaStatus {
    need!(m, out);
    let p = model(m);
    guard(|| {
        let r = ou_moments(p, t)?;
        *out = ExpmaOuMoments {
            m1: r.m1,
            v1: r.v1,
            m2: r.m2,
            v2: r.v2,
            m3: r.m3,
        };
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_ctmc_moments(m: *const ExpmaModel, t: f64, out: *mut ExpmaCtmcMoments) -> ExpmaStatus {
    need!(m, out);
    let p = model(m);
    guard(|| {
        let r = ctmc_moments(p, t)?;
        *out = ExpmaCtmcMoments {
            n2: r.n2,
            n3: r.n3,
            n4: r.n4,
        };
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_ctmc_limits(m: *const ExpmaModel, out: *mut ExpmaCtmcLimits) -> ExpmaStatus {
    need!(m, out);
    let p = model(m);
    guard(|| {
        let l = ctmc_limits(p)?;
        *out = ExpmaCtmcLimits {
            h_inf: l.h_inf,
            i_inf: l.i_inf,
            j_inf: l.j_inf,
            c_inf: l.c_inf,
            d_inf: l.d_inf,
        };
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_long_run_growth_ctmc(m: *const ExpmaModel, out: *mut f64) -> ExpmaStatus {
    need!(m, out);
    let p = model(m);
    guard(|| {
        *out = long_run_growth_ctmc(p)?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_filter_new(m: *const ExpmaModel, out: *mut *mut ExpmaFilter) -> ExpmaStatus {
    need!(m, out);
    let p = model(m);
    guard(|| {
        let inner = StationaryFilter::new(p)?;
        *out = Box::into_raw(Box::new(ExpmaFilter { inner }));
        Ok(())
    })
}

/// Stationary filter weight `g_inf(x)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_filter_g_inf(f: *const ExpmaFilter, x: f64, out: *mut f64) -> ExpmaStatus {
    need!(f, out);
    guard(|| {
        *out = (*f).inner.weight(x)?;
        Ok(())
    })
}

/// Stationary conditional drift mean at `x`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_filter_expectation(f: *const ExpmaFilter, x: f64, out: *mut f64) -> ExpmaStatus {
    need!(f, out);
    guard(|| {
        *out = (*f).inner.expectation(x)?;
        Ok(())
    })
}

/// # Safety
/// `f` must come from [`expma_filter_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn expma_filter_free(f: *mut ExpmaFilter) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Simulate `spec.n_paths` paths of the model and report the metrics of one
/// strategy.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn expma_backtest(
    m: *const ExpmaModel,
    spec: *const ExpmaBacktestSpec,
    out: *mut ExpmaMetrics,
) -> ExpmaStatus {
    need!(m, spec, out);
    let p = *model(m);
    let s = *spec;
    guard(|| {
        let mut cfg = SimConfig::new(s.horizon_months, s.n_paths as usize)
            .with_seed(s.seed)
            .with_omega(s.omega);
        if s.dt > 0.0 {
            cfg = cfg.with_dt(s.dt);
        }
        cfg.validate()?;
        let strategy = match s.strategy {
            k if k == ExpmaStrategyKind::ConstantAffine as i32 => StrategySpec::ConstantAffine { a: s.a, b: s.b },
            k if k == ExpmaStrategyKind::BuyAndHold as i32 => StrategySpec::BuyAndHold,
            k if k == ExpmaStrategyKind::Growth as i32 => {
                let (a, b) = match p.drift {
                    DriftModel::Ou(_) => growth_limit_affine(&p)?,
                    DriftModel::Ctmc2(_) => {
                        let l = ctmc_limits(&p)?;
                        (l.c_inf, l.d_inf)
                    }
                };
                StrategySpec::ConstantAffine { a, b }
            }
            k if k == ExpmaStrategyKind::UtilityC1 as i32 => {
                let abcd = match p.drift {
                    DriftModel::Ou(_) => ou_abcd(&p, s.horizon_months)?,
                    DriftModel::Ctmc2(_) => ctmc_abcd(&p, s.horizon_months)?,
                };
                let (a, b) = optimal_affine_from_abcd(&abcd, s.horizon_months, p.sigma)?;
                StrategySpec::ConstantAffine { a, b }
            }
            k if k == ExpmaStrategyKind::UtilityC2 as i32 => {
                let sched = C2Schedule::new(&p)?;
                StrategySpec::time_varying(move |t| sched.at(t))
            }
            k => {
                return Err(Error::InvalidParameter {
                    field: "strategy",
                    reason: format!("unknown strategy kind {k}"),
                })
            }
        };
        let bundle = simulate_paths(&p, &cfg)?;
        let ledger = run_strategy(&bundle, &strategy, s.omega, cfg.pi0)?;
        let r = compute_metrics(&ledger)?;
        *out = ExpmaMetrics {
            total_return: r.total_return,
            se_return: r.se_return,
            avg_daily_return: r.avg_daily_return,
            se_daily_return: r.se_daily_return,
            sharpe: r.sharpe.unwrap_or(f64::NAN),
            se_sharpe: r.se_sharpe.unwrap_or(f64::NAN),
            has_sharpe: i32::from(r.sharpe.is_some()),
            log_growth: r.log_growth,
            se_log_growth: r.se_log_growth,
            n_paths: r.n_paths as u64,
            n_steps: r.n_steps as u64,
            bankrupt_count: r.bankrupt_count as u64,
        };
        Ok(())
    })
}
