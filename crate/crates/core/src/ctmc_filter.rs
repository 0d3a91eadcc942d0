//! Nonlinear filter for the two-state chain: the conditional laws of `Q_t`
//! given `mu_0`, the stationary Beta law, `E[mu_0 | Q = x]`, the optimal
//! stationary weight `g_inf` and its long-run growth rate.
//!
//! Coordinates: `Q_t = Q1_t + Q2_t` with `Q1_t = int_0^t e^{-lambda s} mu_s ds`
//! supported on `[rho1 w(t), rho2 w(t)]`, `w(t) = (1 - e^{-lambda t}) / lambda`,
//! and `Q2_t` Gaussian. The stationary law is expressed in
//! `s = (lambda z - rho1) / (rho2 - rho1)`, which maps the support to `[0, 1]`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{CtmcDrift, ModelParams};
use crate::quadrature::{composite_legendre, gauss_jacobi, gauss_legendre, BetaRule, GaussRule};
use crate::special::{gamma_fn, Gaussian};

/// Densities below this are treated as zero.
pub const DENSITY_FLOOR: f64 = 1e-300;

const JACOBI_ORDER: usize = 48;
const FILTER_ORDER: usize = 24;
const MAX_PANELS: usize = 512;

/// The split of `Q_t` into its drift part and its Gaussian part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QDecomposition {
    pub rho1: f64,
    pub rho2: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl QDecomposition {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let c = params.ctmc_drift()?;
        Ok(QDecomposition {
            rho1: c.rho1,
            rho2: c.rho2,
            lambda: params.lambda,
            sigma: params.sigma,
        })
    }

    fn w(&self, t: f64) -> f64 {
        -(-self.lambda * t).exp_m1() / self.lambda
    }

    /// Support `[left, right]` of `Q1_t`.
    pub fn support(&self, t: f64) -> (f64, f64) {
        let w = self.w(t);
        (self.rho1 * w, self.rho2 * w)
    }

    /// Law of `Q2_t`.
    pub fn phi(&self, t: f64) -> Gaussian {
        let s2 = self.sigma * self.sigma;
        let var = -s2 * (-2.0 * self.lambda * t).exp_m1() / (2.0 * self.lambda);
        Gaussian {
            mean: -s2 * self.w(t) / 2.0,
            sd: var.sqrt(),
        }
    }

    /// Limit law of `Q2_t`.
    pub fn phi_inf(&self) -> Gaussian {
        let s2 = self.sigma * self.sigma;
        Gaussian {
            mean: -s2 / (2.0 * self.lambda),
            sd: (s2 / (2.0 * self.lambda)).sqrt(),
        }
    }
}

/// `int_0^s y^(p-1) (1-y)^(q-1) dy` for `s <= 1/2`, via `y = s u` and a
/// Gauss-Jacobi rule carrying `u^(p-1)`.
fn lower_beta_part(rule: &GaussRule, p: f64, q: f64, s: f64) -> f64 {
    let inner = rule.integrate(|x| {
        let u = 0.5 * (1.0 + x);
        (1.0 - s * u).powf(q - 1.0)
    });
    s.powf(p) * 2f64.powf(-p) * inner
}

/// Regularized incomplete Beta function with cached rules for `(p, q)` and `(q, p)`.
#[derive(Debug, Clone)]
struct IncBeta {
    p: f64,
    q: f64,
    rule_p: GaussRule,
    rule_q: GaussRule,
    total: f64,
}

impl IncBeta {
    fn new(p: f64, q: f64) -> Result<Self> {
        let rule_p = gauss_jacobi(JACOBI_ORDER, 0.0, p - 1.0)?;
        let rule_q = gauss_jacobi(JACOBI_ORDER, 0.0, q - 1.0)?;
        let total = lower_beta_part(&rule_p, p, q, 0.5) + lower_beta_part(&rule_q, q, p, 0.5);
        Ok(IncBeta {
            p,
            q,
            rule_p,
            rule_q,
            total,
        })
    }

    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else if s <= 0.5 {
            (lower_beta_part(&self.rule_p, self.p, self.q, s) / self.total).clamp(0.0, 1.0)
        } else {
            (1.0 - lower_beta_part(&self.rule_q, self.q, self.p, 1.0 - s) / self.total).clamp(0.0, 1.0)
        }
    }
}

/// Law of `int_0^inf e^{-lambda s} mu_s ds` given `mu_0`: scaled Beta laws
/// on `[rho1/lambda, rho2/lambda]`.
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    pub rho1: f64,
    pub rho2: f64,
    pub lambda: f64,
    /// `alpha / lambda`
    pub a: f64,
    /// `beta / lambda`
    pub b: f64,
    /// Normalizer of `u_inf`.
    pub c: f64,
    /// Normalizer of `v_inf`, `beta c / alpha`.
    pub d: f64,
    pub support: (f64, f64),
    u_cdf: IncBeta,
    v_cdf: IncBeta,
}

pub fn stationary_law(params: &ModelParams) -> Result<StationaryLaw> {
    params.validate()?;
    StationaryLaw::from_drift(params.ctmc_drift()?, params.lambda)
}

impl StationaryLaw {
    fn from_drift(ch: &CtmcDrift, lambda: f64) -> Result<Self> {
        let a = ch.alpha / lambda;
        let b = ch.beta / lambda;
        let gap = ch.rho2 - ch.rho1;
        let u_cdf = IncBeta::new(a, b + 1.0)?;
        let v_cdf = IncBeta::new(a + 1.0, b)?;
        let c = match (gamma_fn(a + b + 1.0), gamma_fn(a), gamma_fn(b)) {
            (Ok(gab), Ok(ga), Ok(gb)) => {
                lambda * lambda * gab / (ch.beta * gap.powf(a + b) * ga * gb)
            }
            // Outside the Gamma domain fall back to the quadrature normalizer.
            _ => lambda / (gap.powf(a + b) * u_cdf.total),
        };
        Ok(StationaryLaw {
            rho1: ch.rho1,
            rho2: ch.rho2,
            lambda,
            a,
            b,
            c,
            d: ch.beta * c / ch.alpha,
            support: (ch.rho1 / lambda, ch.rho2 / lambda),
            u_cdf,
            v_cdf,
        })
    }

    pub fn to_unit(&self, z: f64) -> f64 {
        (self.lambda * z - self.rho1) / (self.rho2 - self.rho1)
    }

    pub fn from_unit(&self, s: f64) -> f64 {
        (self.rho1 + (self.rho2 - self.rho1) * s) / self.lambda
    }

    /// Kernel `(lambda z - rho1)^(a-1) (rho2 - lambda z)^(b-1)`.
    pub fn l(&self, z: f64) -> f64 {
        (self.lambda * z - self.rho1).powf(self.a - 1.0) * (self.rho2 - self.lambda * z).powf(self.b - 1.0)
    }

    /// Conditional c.d.f. given `mu_0 = rho1`.
    pub fn u_inf(&self, z: f64) -> f64 {
        self.u_cdf.eval(self.to_unit(z))
    }

    /// Conditional c.d.f. given `mu_0 = rho2`.
    pub fn v_inf(&self, z: f64) -> f64 {
        self.v_cdf.eval(self.to_unit(z))
    }

    /// Unconditional c.d.f., mixing with the stationary law of `mu_0`.
    pub fn mixture_cdf(&self, z: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        (b * self.u_inf(z) + a * self.v_inf(z)) / (a + b)
    }
}

/// Quadrature over the stationary law convolved with `phi_inf`.
///
/// Holds a composite Beta rule for the weight `s^(a-1) (1-s)^(b-1)`; the
/// Gaussian factor is evaluated in log space so far tails do not underflow.
#[derive(Debug, Clone)]
pub struct StationaryFilter {
    pub law: StationaryLaw,
    pub phi_inf: Gaussian,
    pub sigma: f64,
    rule: BetaRule,
    z_nodes: Vec<f64>,
}

struct Sums {
    log_scale: f64,
    s0: f64,
    s1: f64,
}

impl StationaryFilter {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let q = QDecomposition::new(params)?;
        let law = stationary_law(params)?;
        let phi_inf = q.phi_inf();
        let sd_unit = phi_inf.sd * law.lambda / (law.rho2 - law.rho1);
        let panels = ((2.0 / sd_unit).ceil() as usize).clamp(2, MAX_PANELS);
        let rule = BetaRule::new(law.a, law.b, panels, FILTER_ORDER)?;
        let z_nodes = rule.nodes.iter().map(|&s| law.from_unit(s)).collect();
        Ok(StationaryFilter {
            law,
            phi_inf,
            sigma: params.sigma,
            rule,
            z_nodes,
        })
    }

    fn sums(&self, x: f64) -> Sums {
        let logs: Vec<f64> = self.z_nodes.iter().map(|&z| self.phi_inf.ln_pdf(x - z)).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for ((&w, &s), &lg) in self.rule.weights.iter().zip(&self.rule.nodes).zip(&logs) {
            let e = w * (lg - m).exp();
            s0 += e;
            s1 += e * s;
        }
        Sums {
            log_scale: m,
            s0,
            s1,
        }
    }

    /// `E[mu_0 | Q_inf = x]`.
    pub fn expectation(&self, x: f64) -> Result<f64> {
        let s = self.sums(x);
        if s.log_scale < DENSITY_FLOOR.ln() || s.s0 <= 0.0 {
            return Err(Error::OutsideEffectiveSupport { x });
        }
        let frac = (s.s1 / s.s0).clamp(0.0, 1.0);
        Ok(self.law.rho1 + (self.law.rho2 - self.law.rho1) * frac)
    }

    /// `g_inf(x) = E[mu_0 | Q_inf = x] / sigma^2`.
    pub fn weight(&self, x: f64) -> Result<f64> {
        Ok(self.expectation(x)? / (self.sigma * self.sigma))
    }

    /// Conditional densities `(p_inf(x), q_inf(x))` of `Q_inf` given `mu_0 = rho1, rho2`.
    pub fn densities(&self, x: f64) -> (f64, f64) {
        let s = self.sums(x);
        let (a, b) = (self.law.a, self.law.b);
        let mass = self.rule.mass();
        let scale = s.log_scale.exp();
        // Beta(a, b+1) and Beta(a+1, b) reweight the Beta(a, b) rule by (1-s) and s.
        let p = (s.s0 - s.s1) * scale / (mass * b / (a + b));
        let q = s.s1 * scale / (mass * a / (a + b));
        (p.max(0.0), q.max(0.0))
    }

    /// Unconditional density of `Q_inf`.
    pub fn mixture_density(&self, x: f64) -> f64 {
        let s = self.sums(x);
        s.s0 * s.log_scale.exp() / self.rule.mass()
    }

    /// Range holding all but a Gaussian tail of `k` standard deviations.
    pub fn effective_range(&self, k: f64) -> (f64, f64) {
        let (lo, hi) = self.law.support;
        (
            lo + self.phi_inf.mean - k * self.phi_inf.sd,
            hi + self.phi_inf.mean + k * self.phi_inf.sd,
        )
    }
}

/// When to condition.
#[derive(Debug, Clone, Copy)]
pub enum FilterTime<'a> {
    Finite { grid: &'a UVGrid, t: f64 },
    Infinite,
}

pub fn filter_expectation(params: &ModelParams, when: FilterTime<'_>, x: f64) -> Result<f64> {
    match when {
        FilterTime::Infinite => StationaryFilter::new(params)?.expectation(x),
        FilterTime::Finite { grid, t } => grid.filter_expectation(t, x),
    }
}

pub fn g_infinity(params: &ModelParams, x: f64) -> Result<f64> {
    StationaryFilter::new(params)?.weight(x)
}

/// `g_inf` sampled on a uniform grid and linearly interpolated; beyond the
/// table it is flat at the end values, which approach `rho1/sigma^2` and
/// `rho2/sigma^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabulatedFilter {
    pub lo: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl TabulatedFilter {
    pub fn new(params: &ModelParams, points: usize) -> Result<Self> {
        let f = StationaryFilter::new(params)?;
        let (lo, hi) = f.effective_range(12.0);
        let points = points.max(2);
        let step = (hi - lo) / (points - 1) as f64;
        let s2 = params.sigma * params.sigma;
        let values = (0..points)
            .map(|i| {
                let x = lo + step * i as f64;
                match f.weight(x) {
                    Ok(v) => Ok(v),
                    Err(Error::OutsideEffectiveSupport { .. }) => {
                        let mid = 0.5 * (lo + hi);
                        Ok(if x < mid { f.law.rho1 } else { f.law.rho2 } / s2)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TabulatedFilter { lo, step, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return self.values[0];
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().expect("table is nonempty");
        }
        let frac = pos - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }
}

/// Outer-integral truncation, in standard deviations of `phi_inf`.
const GROWTH_TAIL_SDS: f64 = 8.0;

/// Long-run growth rate of the weight `g_inf`,
/// `E[(E[mu_0 | Q_inf])^2] / (2 sigma^2)`.
pub fn long_run_growth_ctmc(params: &ModelParams) -> Result<f64> {
    let f = StationaryFilter::new(params)?;
    let (lo, hi) = f.effective_range(GROWTH_TAIL_SDS);
    let (r1, r2) = (f.law.rho1, f.law.rho2);
    let mass = f.rule.mass();
    let integrand = |y: f64| {
        let s = f.sums(y);
        if s.s0 <= 0.0 || !s.log_scale.is_finite() {
            return 0.0;
        }
        let num = r1 * s.s0 + (r2 - r1) * s.s1;
        num * num / s.s0 * s.log_scale.exp() / mass
    };
    let panels = (((hi - lo) / (0.5 * f.phi_inf.sd)).ceil() as usize).max(8);
    let rule = gauss_legendre(16);
    let coarse = composite_legendre(integrand, lo, hi, panels, &rule);
    let fine = composite_legendre(integrand, lo, hi, 2 * panels, &rule);
    let quad_err = (fine - coarse).abs();
    // Mass of the mixture beyond the truncation, times the largest integrand value.
    let tail = 2.0 * crate::special::norm_cdf(-GROWTH_TAIL_SDS) * r1.abs().max(r2.abs()).powi(2);
    let achieved = quad_err + tail;
    if achieved > 1e-9 * fine.abs().max(1e-300) {
        return Err(Error::QuadratureFailure {
            what: "long-run growth outer integral",
            achieved,
        });
    }
    Ok(fine / (2.0 * params.sigma * params.sigma))
}

/// Options for [`solve_uv_pde_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    /// Target CFL number, reaction terms included; at most 1.
    pub cfl: f64,
    /// Start time of the march; the state there is the one-jump approximation.
    pub t_start: Option<f64>,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions {
            cfl: 0.9,
            t_start: None,
        }
    }
}

/// Solution of the u/v transport system on the moving support, stored on the
/// fixed grid `xi in [0, 1]`, `x = left(t) + xi (right(t) - left(t))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UVGrid {
    pub rho1: f64,
    pub rho2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub xi: Vec<f64>,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// `e^{-alpha t}`, mass of `u` at the left endpoint.
    pub atom_u: Vec<f64>,
    /// `e^{-beta t}`, mass of `v` at the right endpoint.
    pub atom_v: Vec<f64>,
    pub steps_taken: usize,
}

pub fn solve_uv_pde(params: &ModelParams, t_max: f64, nx: usize, nt: usize) -> Result<UVGrid> {
    solve_uv_pde_with(params, t_max, nx, nt, PdeOptions::default())
}

/// First-order upwind march with `nx` cells and `nt` equally spaced snapshots
/// in `(0, t_max]`; the internal step adapts to keep the CFL number at `opts.cfl`.
pub fn solve_uv_pde_with(
    params: &ModelParams,
    t_max: f64,
    nx: usize,
    nt: usize,
    opts: PdeOptions,
) -> Result<UVGrid> {
    params.validate()?;
    let ch = *params.ctmc_drift()?;
    if nx < 64 {
        return Err(Error::invalid("nx", format!("need at least 64 cells, got {nx}")));
    }
    if nt == 0 {
        return Err(Error::invalid("nt", "need at least one snapshot"));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid("t_max", format!("must be positive, got {t_max}")));
    }
    if opts.cfl > 1.0 {
        return Err(Error::CflViolation { cfl: opts.cfl });
    }
    if !(opts.cfl > 0.0) {
        return Err(Error::invalid("cfl", format!("must be positive, got {}", opts.cfl)));
    }
    let (alpha, beta, lambda) = (ch.alpha, ch.beta, params.lambda);
    let gap = ch.rho2 - ch.rho1;
    let rate = alpha.max(beta).max(lambda);
    let t0 = opts
        .t_start
        .unwrap_or((1e-4 / rate).min(1e-3 * t_max))
        .min(0.5 * t_max / nt as f64);
    let dxi = 1.0 / nx as f64;
    let xi: Vec<f64> = (0..=nx).map(|j| j as f64 * dxi).collect();

    let ea = (-alpha * t0).exp();
    let eb = (-beta * t0).exp();
    let mut u: Vec<f64> = xi.iter().map(|&s| ea + (1.0 - ea) * s).collect();
    // v[nx] carries the left limit 1 - e^{-beta t} while marching.
    let mut v: Vec<f64> = xi.iter().map(|&s| (1.0 - eb) * s).collect();
    let mut un = u.clone();
    let mut vn = v.clone();

    let width = |t: f64| -gap * (-lambda * t).exp_m1() / lambda;
    let mut grid = UVGrid {
        rho1: ch.rho1,
        rho2: ch.rho2,
        alpha,
        beta,
        lambda,
        sigma: params.sigma,
        xi: xi.clone(),
        times: Vec::with_capacity(nt),
        u: Vec::with_capacity(nt),
        v: Vec::with_capacity(nt),
        atom_u: Vec::with_capacity(nt),
        atom_v: Vec::with_capacity(nt),
        steps_taken: 0,
    };

    let mut t = t0;
    for k in 1..=nt {
        let target = t_max * k as f64 / nt as f64;
        while t < target {
            // Advection speed in xi-units is at most gap / width(t).
            let adv = gap / (width(t) * dxi);
            let mut dt = opts.cfl / (adv + alpha.max(beta));
            if t + dt > target {
                dt = target - t;
            }
            let k_adv = gap * dt / (width(t) * dxi);
            for j in 0..nx {
                let nu = k_adv * xi[j];
                un[j] = u[j] + nu * (u[j + 1] - u[j]) - alpha * dt * (u[j] - v[j]);
            }
            un[nx] = 1.0;
            vn[0] = 0.0;
            for j in 1..=nx {
                let nu = k_adv * (1.0 - xi[j]);
                vn[j] = v[j] - nu * (v[j] - v[j - 1]) - beta * dt * (v[j] - u[j]);
            }
            t += dt;
            un[0] = (-alpha * t).exp();
            std::mem::swap(&mut u, &mut un);
            std::mem::swap(&mut v, &mut vn);
            grid.steps_taken += 1;
        }
        t = target;
        check_cdf(&u, "u")?;
        check_cdf(&v, "v")?;
        let mut v_out = v.clone();
        v_out[nx] = 1.0;
        grid.times.push(t);
        grid.u.push(u.clone());
        grid.v.push(v_out);
        grid.atom_u.push((-alpha * t).exp());
        grid.atom_v.push((-beta * t).exp());
    }
    Ok(grid)
}

const MONOTONE_TOLERANCE: f64 = 1e-9;

fn check_cdf(w: &[f64], name: &str) -> Result<()> {
    for (j, pair) in w.windows(2).enumerate() {
        if pair[1] < pair[0] - MONOTONE_TOLERANCE {
            return Err(Error::PdeInstability(format!(
                "{name} decreases at node {j}: {} -> {}",
                pair[0], pair[1]
            )));
        }
    }
    if w.iter().any(|&x| !(-MONOTONE_TOLERANCE..=1.0 + MONOTONE_TOLERANCE).contains(&x)) {
        return Err(Error::PdeInstability(format!("{name} left [0, 1]")));
    }
    Ok(())
}

impl UVGrid {
    fn q(&self) -> QDecomposition {
        QDecomposition {
            rho1: self.rho1,
            rho2: self.rho2,
            lambda: self.lambda,
            sigma: self.sigma,
        }
    }

    pub fn support(&self, t: f64) -> (f64, f64) {
        self.q().support(t)
    }

    /// Physical coordinates of the grid at snapshot `k`.
    pub fn x_physical(&self, k: usize) -> Vec<f64> {
        let (lo, hi) = self.support(self.times[k]);
        self.xi.iter().map(|&s| lo + s * (hi - lo)).collect()
    }

    /// `(u, v)` at time `t` on the xi grid, interpolating between snapshots.
    fn profiles_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let first = self.times[0];
        let last = *self.times.last().expect("at least one snapshot");
        let eps = 1e-12 * last;
        if !(t >= first - eps && t <= last + eps) {
            return Err(Error::invalid(
                "t",
                format!("{t} outside the solved range [{first}, {last}]"),
            ));
        }
        let k = self.times.partition_point(|&s| s < t - eps);
        if k == 0 || (self.times[k] - t).abs() <= eps {
            return Ok((self.u[k].clone(), self.v[k].clone()));
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect();
        let mut u: Vec<f64> = mix(&self.u[k - 1], &self.u[k]);
        u[0] = (-self.alpha * t).exp();
        Ok((u, mix(&self.v[k - 1], &self.v[k])))
    }

    /// `u(t, x)` at physical `x`, linear in between nodes.
    pub fn u_at(&self, t: f64, x: f64) -> Result<f64> {
        let (u, _) = self.profiles_at(t)?;
        Ok(self.interp(t, &u, x))
    }

    pub fn v_at(&self, t: f64, x: f64) -> Result<f64> {
        let (_, v) = self.profiles_at(t)?;
        Ok(self.interp(t, &v, x))
    }

    fn interp(&self, t: f64, w: &[f64], x: f64) -> f64 {
        let (lo, hi) = self.support(t);
        if x < lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let n = self.xi.len() - 1;
        let pos = (x - lo) / (hi - lo) * n as f64;
        let j = (pos.floor() as usize).min(n - 1);
        let f = pos - j as f64;
        w[j] + f * (w[j + 1] - w[j])
    }

    /// Conditional densities `(p(t, x), q(t, x))` of `Q_t` given
    /// `mu_0 = rho1, rho2`: the atom convolved with `phi(t)` plus the exact
    /// convolution of the piecewise-linear continuous part.
    pub fn conditional_densities(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        if !(t > 0.0) {
            return Err(Error::invalid("t", format!("must be positive, got {t}")));
        }
        let (u, v) = self.profiles_at(t)?;
        let q = self.q();
        let phi = q.phi(t);
        let (lo, hi) = q.support(t);
        let n = self.xi.len() - 1;
        let au = (-self.alpha * t).exp();
        let av = (-self.beta * t).exp();
        let dz = (hi - lo) / n as f64;
        let mut p = au * phi.pdf(x - lo);
        let mut qd = av * phi.pdf(x - hi);
        for j in 0..n {
            let z0 = lo + j as f64 * dz;
            let z1 = z0 + dz;
            let m = phi.mass(x - z1, x - z0);
            if m == 0.0 {
                continue;
            }
            let uc1 = if j + 1 == n { 1.0 } else { u[j + 1] };
            p += (uc1 - u[j]) / dz * m;
            let vc1 = if j + 1 == n { 1.0 - av } else { v[j + 1] };
            qd += (vc1 - v[j]) / dz * m;
        }
        for (val, what) in [(p, "conditional density p"), (qd, "conditional density q")] {
            if val < -1e-10 {
                return Err(Error::QuadratureFailure {
                    what,
                    achieved: val,
                });
            }
        }
        Ok((p.max(0.0), qd.max(0.0)))
    }

    /// `E[mu_0 | Q_t = x]`.
    pub fn filter_expectation(&self, t: f64, x: f64) -> Result<f64> {
        let (p, q) = self.conditional_densities(t, x)?;
        if p < DENSITY_FLOOR && q < DENSITY_FLOOR {
            return Err(Error::OutsideEffectiveSupport { x });
        }
        let (a, b) = (self.alpha, self.beta);
        let e = (self.rho1 * b * p + self.rho2 * a * q) / (b * p + a * q);
        Ok(e.clamp(self.rho1, self.rho2))
    }

    /// Plot-ready rows `t, x_physical, u, v`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x_physical", "u", "v"])?;
        for k in 0..self.times.len() {
            let xs = self.x_physical(k);
            for (j, x) in xs.iter().enumerate() {
                w.write_record(&[
                    self.times[k].to_string(),
                    x.to_string(),
                    self.u[k][j].to_string(),
                    self.v[k][j].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> ModelParams {
        ModelParams::ctmc(0.2, 2.0, -0.2, 0.3, 1.0, 1.5)
    }

    #[test]
    fn law_endpoints_and_normalizers() {
        for p in [base(), ModelParams::ctmc(0.2, 2.0, -0.2, 0.3, 0.6, 0.8), ModelParams::ctmc(0.1, 0.5, 0.0, 0.1, 3.0, 1.0)] {
            let law = stationary_law(&p).unwrap();
            let (lo, hi) = law.support;
            assert_eq!(law.u_inf(lo), 0.0);
            assert_eq!(law.u_inf(hi), 1.0);
            assert_eq!(law.v_inf(lo), 0.0);
            assert_eq!(law.v_inf(hi), 1.0);
            let c = p.ctmc_drift().unwrap();
            assert_eq!(law.d, c.beta * law.c / c.alpha);
            // c equals the quadrature normalizer of the Beta(a, b+1) law
            let gap = c.rho2 - c.rho1;
            let quad_c = law.lambda / (gap.powf(law.a + law.b) * law.u_cdf.total);
            assert_relative_eq!(law.c, quad_c, max_relative = 1e-10);
            let mut prev = 0.0;
            for i in 0..=200 {
                let z = lo + (hi - lo) * i as f64 / 200.0;
                let val = law.u_inf(z);
                assert!(val >= prev - 1e-15);
                prev = val;
            }
        }
    }

    #[test]
    fn unit_exponents_give_beta_1_2() {
        // alpha = beta = lambda: l is constant, u_inf is the Beta(1, 2) c.d.f.
        let p = ModelParams::ctmc(0.2, 1.0, -0.2, 0.3, 1.0, 1.0);
        let law = stationary_law(&p).unwrap();
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            let z = law.from_unit(s);
            assert!((law.u_inf(z) - (1.0 - (1.0 - s).powi(2))).abs() < 1e-9);
            assert!((law.v_inf(z) - s * s).abs() < 1e-9);
        }
    }

    #[test]
    fn u_inf_matches_kernel_integral() {
        // alpha, beta >= lambda keeps l bounded, so plain Simpson is an independent check.
        let p = ModelParams::ctmc(0.2, 1.0, -0.2, 0.3, 1.7, 2.6);
        let law = stationary_law(&p).unwrap();
        let (lo, hi) = law.support;
        let x = lo + 0.37 * (hi - lo);
        let direct = crate::quadrature::adaptive_simpson(
            "u_inf",
            |z| law.c * (law.rho2 - law.lambda * z) * law.l(z),
            lo,
            x,
            1e-12,
            60,
        )
        .unwrap();
        assert_relative_eq!(law.u_inf(x), direct, max_relative = 1e-8);
    }

    #[test]
    fn phi_limits() {
        let q = QDecomposition::new(&base()).unwrap();
        let far = q.phi(1e3);
        let inf = q.phi_inf();
        assert_relative_eq!(far.mean, inf.mean, max_relative = 1e-14);
        assert_relative_eq!(far.sd, inf.sd, max_relative = 1e-14);
        let g = q.phi(0.3);
        let total = composite_legendre(|x| g.pdf(x), g.mean - 12.0 * g.sd, g.mean + 12.0 * g.sd, 24, &gauss_legendre(16));
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn filter_monotone_and_bounded() {
        let p = base();
        let f = StationaryFilter::new(&p).unwrap();
        let (lo, hi) = f.effective_range(6.0);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=400 {
            let x = lo + (hi - lo) * i as f64 / 400.0;
            let e = f.expectation(x).unwrap();
            assert!((-0.2..=0.3).contains(&e));
            assert!(e >= prev - 1e-12, "non-monotone at {x}");
            prev = e;
        }
    }

    #[test]
    fn filter_tails() {
        // Far-tail gap is about alpha * sd / 10 at ten standard deviations.
        let p = ModelParams::ctmc(0.05, 2.0, -0.2, 0.3, 0.2, 0.3);
        let f = StationaryFilter::new(&p).unwrap();
        let (lo, hi) = f.law.support;
        let sd = f.phi_inf.sd;
        let m = f.phi_inf.mean;
        assert!((f.expectation(lo + m - 10.0 * sd).unwrap() + 0.2).abs() < 1e-3);
        assert!((f.expectation(hi + m + 10.0 * sd).unwrap() - 0.3).abs() < 1e-3);
        let err = f.expectation(lo - 100.0).unwrap_err();
        assert_eq!(err.code(), "outside_effective_support");
    }

    #[test]
    fn degenerate_chain_gives_merton_weight() {
        let p = ModelParams::ctmc(0.2, 2.0, 0.1 - 1e-9, 0.1, 1.0, 1.5);
        let f = StationaryFilter::new(&p).unwrap();
        for x in [-0.3, -0.01, 0.0, 0.05, 0.2] {
            assert_relative_eq!(f.weight(x).unwrap(), 0.1 / 0.04, max_relative = 1e-6);
        }
    }

    #[test]
    fn stationary_densities_normalized() {
        let f = StationaryFilter::new(&base()).unwrap();
        let (lo, hi) = f.effective_range(10.0);
        let rule = gauss_legendre(16);
        let p = composite_legendre(|x| f.densities(x).0, lo, hi, 200, &rule);
        let q = composite_legendre(|x| f.densities(x).1, lo, hi, 200, &rule);
        let m = composite_legendre(|x| f.mixture_density(x), lo, hi, 200, &rule);
        assert!((p - 1.0).abs() < 1e-8 && (q - 1.0).abs() < 1e-8 && (m - 1.0).abs() < 1e-8, "{p} {q} {m}");
    }

    #[test]
    fn growth_between_jensen_bounds() {
        let p = base();
        let g = long_run_growth_ctmc(&p).unwrap();
        let st = crate::ctmc_analytics::ctmc_stationary(&p).unwrap();
        let s2 = 0.04;
        let lower = st.n1 * st.n1 / (2.0 * s2);
        let upper = (st.p1 * 0.04 + st.p2 * 0.09) / (2.0 * s2);
        assert!(lower <= g && g <= upper, "{lower} {g} {upper}");
        let lim = crate::ctmc_analytics::ctmc_limits(&p).unwrap();
        let affine = crate::ctmc_analytics::ctmc_growth_value(&p, lim.c_inf, lim.d_inf).unwrap();
        assert!(g >= affine - 1e-9, "{g} < {affine}");
    }

    #[test]
    fn pde_boundary_conditions() {
        let p = ModelParams::ctmc(0.2, 2.0, -0.2, 0.3, 1.0, 1.0 + 1e-3);
        let g = solve_uv_pde(&p, 0.01, 64, 1).unwrap();
        let u = &g.u[0];
        let v = &g.v[0];
        assert_eq!(*u.last().unwrap(), 1.0);
        assert_relative_eq!(u[0], (-0.01f64).exp(), max_relative = 1e-15);
        assert_eq!(v[0], 0.0);
        assert_eq!(*v.last().unwrap(), 1.0);
    }

    #[test]
    fn pde_argument_checks() {
        let p = base();
        assert!(solve_uv_pde(&p, 1.0, 32, 4).is_err());
        let e = solve_uv_pde_with(&p, 1.0, 64, 4, PdeOptions { cfl: 1.5, t_start: None }).unwrap_err();
        assert_eq!(e.code(), "cfl_violation");
        assert!(solve_uv_pde(&p, 1.0, 64, 0).is_err());
    }

    #[test]
    fn pde_approaches_stationary_law() {
        let p = base();
        let t_max = 20.0;
        let g = solve_uv_pde(&p, t_max, 400, 4).unwrap();
        let law = stationary_law(&p).unwrap();
        let k = g.times.len() - 1;
        let mut worst: f64 = 0.0;
        for (j, &s) in g.xi.iter().enumerate().take(g.xi.len() - 1) {
            worst = worst.max((g.u[k][j] - law.u_inf(law.from_unit(s))).abs());
            worst = worst.max((g.v[k][j] - law.v_inf(law.from_unit(s))).abs());
        }
        assert!(worst < 0.01, "sup distance {worst}");
    }

    #[test]
    fn pde_densities_normalize() {
        let p = base();
        let g = solve_uv_pde(&p, 10.0, 256, 20).unwrap();
        let q = QDecomposition::new(&p).unwrap();
        let rule = gauss_legendre(16);
        for t in [0.5, 2.0, 10.0] {
            let (lo, hi) = q.support(t);
            let ph = q.phi(t);
            let (a, b) = (lo + ph.mean - 10.0 * ph.sd, hi + ph.mean + 10.0 * ph.sd);
            let pm = composite_legendre(|x| g.conditional_densities(t, x).unwrap().0, a, b, 200, &rule);
            let qm = composite_legendre(|x| g.conditional_densities(t, x).unwrap().1, a, b, 200, &rule);
            assert!((pm - 1.0).abs() < 1e-4 && (qm - 1.0).abs() < 1e-4, "t={t}: {pm} {qm}");
        }
    }

    #[test]
    fn large_t_densities_match_stationary() {
        let p = base();
        let t = 20.0;
        let g = solve_uv_pde(&p, t, 400, 2).unwrap();
        let f = StationaryFilter::new(&p).unwrap();
        let (lo, hi) = f.effective_range(4.0);
        let mut worst: f64 = 0.0;
        for i in 0..=200 {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            let (p1, q1) = g.conditional_densities(t, x).unwrap();
            let (p2, q2) = f.densities(x);
            worst = worst.max((p1 - p2).abs()).max((q1 - q2).abs());
        }
        assert!(worst < 0.01, "{worst}");
    }

    #[test]
    fn tabulated_filter_matches_direct() {
        let p = base();
        let tab = TabulatedFilter::new(&p, 4097).unwrap();
        let f = StationaryFilter::new(&p).unwrap();
        let (lo, hi) = f.effective_range(5.0);
        for i in 0..=97 {
            let x = lo + (hi - lo) * i as f64 / 97.0;
            assert!((tab.eval(x) - f.weight(x).unwrap()).abs() < 1e-4 * 0.5 / 0.04);
        }
        assert_eq!(tab.eval(-1e9), tab.values[0]);
    }

    #[test]
    fn csv_export_columns() {
        let g = solve_uv_pde(&base(), 1.0, 64, 2).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x_physical,u,v\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 65);
    }
}
