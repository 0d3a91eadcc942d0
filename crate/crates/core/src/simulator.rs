//! Seeded path generation and wealth evolution under proportional costs.
//!
//! A [`PathBundle`] is a deterministic recipe: path `i` is regenerated on
//! demand from its own ChaCha stream `(seed, i)`, so ensembles of any size
//! stay within bounded memory and every strategy sees identical paths.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{DriftModel, ModelParams, SimConfig, StrategySpec};

/// Upper bound on `n_paths * n_steps` for one bundle.
pub const MAX_PATH_STEPS: u64 = 20_000_000_000;

/// Upper bound on stored floats when materializing paths or full ledgers.
pub const MAX_STORED_VALUES: u64 = 200_000_000;

/// One simulated trajectory; all arrays have `n_steps + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PathBundle {
    params: ModelParams,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    x0: f64,
}

pub fn simulate_paths(params: &ModelParams, config: &SimConfig) -> Result<PathBundle> {
    params.validate()?;
    config.validate()?;
    let n_steps = config.n_steps();
    let work = config.n_paths as u64 * n_steps as u64;
    if work > MAX_PATH_STEPS {
        return Err(Error::ResourceLimit(format!(
            "{} paths x {} steps exceeds {MAX_PATH_STEPS}",
            config.n_paths, n_steps
        )));
    }
    Ok(PathBundle {
        params: *params,
        dt: config.dt,
        n_steps,
        n_paths: config.n_paths,
        seed: config.seed,
        x0: config.x0,
    })
}

impl PathBundle {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn drift_tag(&self) -> &'static str {
        self.params.drift.tag()
    }
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Hex digest identifying the paths this bundle generates.
    pub fn identity_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.params).expect("params serialize"));
        h.update(self.dt.to_le_bytes());
        h.update((self.n_steps as u64).to_le_bytes());
        h.update((self.n_paths as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.x0.to_le_bytes());
        hex(&h.finalize())
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Path `index`, regenerated from its own random stream.
    pub fn path(&self, index: usize) -> SimPath {
        assert!(index < self.n_paths, "path index {index} out of range");
        let n = self.n_steps;
        let mut rng = self.rng(index);
        let mut p = SimPath {
            x: Vec::with_capacity(n + 1),
            y: Vec::with_capacity(n + 1),
            z: Vec::with_capacity(n + 1),
            mu: Vec::with_capacity(n + 1),
        };
        let sigma = self.params.sigma;
        let lambda = self.params.lambda;
        let dt = self.dt;
        let sdt = dt.sqrt();
        let half_var = 0.5 * sigma * sigma;
        let (mut x, mut y) = (self.x0, 0.0);
        match self.params.drift {
            DriftModel::Ou(ou) => {
                let z0: f64 = rng.sample(StandardNormal);
                let mut mu = ou.m1_0() + ou.v1_0().sqrt() * z0;
                for _ in 0..n {
                    push(&mut p, x, y, mu);
                    let zi: f64 = rng.sample(StandardNormal);
                    let zb: f64 = rng.sample(StandardNormal);
                    let xn = x + (mu - half_var) * dt + sigma * sdt * zi;
                    y += lambda * (x - y) * dt;
                    mu += ou.kappa * (ou.mu_bar - mu) * dt + ou.delta * sdt * zb;
                    x = xn;
                }
                push(&mut p, x, y, mu);
            }
            DriftModel::Ctmc2(c) => {
                let th = c.alpha + c.beta;
                let u: f64 = rng.random();
                let mut high = u < c.alpha / th;
                let mut next_jump = {
                    let e: f64 = rng.sample(Exp1);
                    e / if high { c.beta } else { c.alpha }
                };
                let mut t = 0.0;
                for i in 0..n {
                    let mu_now = if high { c.rho2 } else { c.rho1 };
                    push(&mut p, x, y, mu_now);
                    let t_end = (i + 1) as f64 * dt;
                    // Integrate the piecewise-constant drift exactly over the step.
                    let mut drift_int = 0.0;
                    while next_jump < t_end {
                        drift_int += (next_jump - t) * if high { c.rho2 } else { c.rho1 };
                        t = next_jump;
                        high = !high;
                        let e: f64 = rng.sample(Exp1);
                        next_jump = t + e / if high { c.beta } else { c.alpha };
                    }
                    drift_int += (t_end - t) * if high { c.rho2 } else { c.rho1 };
                    t = t_end;
                    let zi: f64 = rng.sample(StandardNormal);
                    let xn = x + drift_int - half_var * dt + sigma * sdt * zi;
                    y += lambda * (x - y) * dt;
                    x = xn;
                }
                push(&mut p, x, y, if high { c.rho2 } else { c.rho1 });
            }
        }
        p
    }

    /// All paths in memory; refused beyond [`MAX_STORED_VALUES`].
    pub fn materialize(&self) -> Result<Vec<SimPath>> {
        let values = 4 * self.n_paths as u64 * (self.n_steps as u64 + 1);
        if values > MAX_STORED_VALUES {
            return Err(Error::ResourceLimit(format!(
                "materializing {values} values exceeds {MAX_STORED_VALUES}"
            )));
        }
        Ok((0..self.n_paths).into_par_iter().map(|i| self.path(i)).collect())
    }

    /// Dump the first `k` paths as CSV rows `path, step, X, Y, Z, mu`.
    pub fn write_csv<W: Write>(&self, k: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path", "step", "X", "Y", "Z", "mu"])?;
        for i in 0..k.min(self.n_paths) {
            let p = self.path(i);
            for s in 0..=self.n_steps {
                w.write_record(&[
                    i.to_string(),
                    s.to_string(),
                    p.x[s].to_string(),
                    p.y[s].to_string(),
                    p.z[s].to_string(),
                    p.mu[s].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn push(p: &mut SimPath, x: f64, y: f64, mu: f64) {
    p.x.push(x);
    p.y.push(y);
    p.z.push(x - y);
    p.mu.push(mu);
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Smallest admissible `|1 +- omega f|`.
const SINGULAR_DENOMINATOR: f64 = 1e-10;

/// Change in shares that moves the weight from `f_cur` to `f_next` at the
/// new price `e^{x_next}` while paying `omega` per unit traded.
///
/// The branch follows the sign of the trade, which equals the sign of the
/// numerator whenever `1 +- omega f_next > 0`.
pub fn rebalance_delta(
    f_next: f64,
    f_cur: f64,
    pi_cur: f64,
    x_cur: f64,
    x_next: f64,
    omega: f64,
) -> Result<f64> {
    let pre = pre_trade_wealth(f_cur, pi_cur, x_cur, x_next);
    delta_from_pre(f_next, f_cur, pi_cur, pre, x_cur, x_next, omega)
}

fn pre_trade_wealth(f_cur: f64, pi_cur: f64, x_cur: f64, x_next: f64) -> f64 {
    (1.0 - f_cur) * pi_cur + f_cur * pi_cur * (x_next - x_cur).exp()
}

fn delta_from_pre(
    f_next: f64,
    f_cur: f64,
    pi_cur: f64,
    pre: f64,
    x_cur: f64,
    x_next: f64,
    omega: f64,
) -> Result<f64> {
    let num = f_next * pre - f_cur * pi_cur * (x_next - x_cur).exp();
    let (sign, den) = if num >= 0.0 {
        ('+', 1.0 + omega * f_next)
    } else {
        ('-', 1.0 - omega * f_next)
    };
    if den.abs() < SINGULAR_DENOMINATOR {
        return Err(Error::LeverageCostSingularity {
            sign,
            denominator: den,
        });
    }
    Ok(num / (den * x_next.exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerMode {
    /// Per-path summaries only.
    #[default]
    Summary,
    /// Also keep every step of every path.
    Full,
}

/// Which code path applies the cost rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostBranch {
    /// Skip the trade computation when `omega == 0`.
    #[default]
    Auto,
    /// Always compute `Delta` and charge `omega |Delta| e^X`.
    Always,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub mode: LedgerMode,
    pub cost_branch: CostBranch,
}

/// Step-by-step record of one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathTrace {
    /// `Pi_i` after rebalancing, `i = 0..=n`.
    pub wealth: Vec<f64>,
    /// `Pi_{(i)-}` before rebalancing; entry 0 is the initial wealth.
    pub pre_wealth: Vec<f64>,
    /// `f_i`
    pub weight: Vec<f64>,
    /// `Delta_i`; entry 0 is the inception trade.
    pub delta: Vec<f64>,
    /// Largest relative self-financing residual over the path.
    pub max_residual: f64,
}

/// Per-path summary used by the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub terminal_wealth: f64,
    /// Number of daily returns pooled (0 once bankrupt).
    pub n_returns: usize,
    pub mean_return: f64,
    /// Sum of squared deviations of the daily returns from `mean_return`.
    pub m2_return: f64,
    pub cost_paid: f64,
    pub bankrupt: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WealthLedger {
    pub strategy: String,
    pub omega: f64,
    pub pi0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub paths: Vec<PathSummary>,
    pub traces: Option<Vec<PathTrace>>,
}

impl WealthLedger {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn bankrupt_count(&self) -> usize {
        self.paths.iter().filter(|p| p.bankrupt).count()
    }

    /// Ledger built from given wealth trajectories (each starting at `pi0`).
    pub fn from_wealth_series(series: &[Vec<f64>], pi0: f64, dt: f64) -> Result<Self> {
        let n_steps = series.first().map_or(0, |s| s.len().saturating_sub(1));
        let mut paths = Vec::with_capacity(series.len());
        for s in series {
            if s.len() != n_steps + 1 {
                return Err(Error::invalid("series", "all paths need the same length"));
            }
            let mut acc = ReturnAccumulator::default();
            for w in s.windows(2) {
                acc.push(w[1] / w[0] - 1.0);
            }
            paths.push(acc.finish(*s.last().unwrap_or(&pi0), 0.0, false));
        }
        Ok(WealthLedger {
            strategy: "constructed".into(),
            omega: 0.0,
            pi0,
            dt,
            n_steps,
            paths,
            traces: None,
        })
    }
}

#[derive(Default)]
struct ReturnAccumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl ReturnAccumulator {
    fn push(&mut self, r: f64) {
        self.n += 1;
        let d = r - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (r - self.mean);
    }

    fn finish(self, terminal: f64, cost: f64, bankrupt: bool) -> PathSummary {
        let (n, mean, m2) = if bankrupt { (0, 0.0, 0.0) } else { (self.n, self.mean, self.m2) };
        PathSummary {
            terminal_wealth: terminal,
            n_returns: n,
            mean_return: mean,
            m2_return: m2,
            cost_paid: cost,
            bankrupt,
        }
    }
}

/// A strategy and the cost rate it trades at.
#[derive(Debug, Clone)]
pub struct StrategyJob {
    pub name: String,
    pub strategy: StrategySpec,
    pub omega: f64,
}

impl StrategyJob {
    pub fn new(name: impl Into<String>, strategy: StrategySpec, omega: f64) -> Self {
        StrategyJob {
            name: name.into(),
            strategy,
            omega,
        }
    }
}

pub fn run_strategy(
    bundle: &PathBundle,
    strategy: &StrategySpec,
    omega: f64,
    pi0: f64,
) -> Result<WealthLedger> {
    let job = StrategyJob::new(strategy.kind(), strategy.clone(), omega);
    let mut out = run_strategies(bundle, std::slice::from_ref(&job), pi0, RunOptions::default())?;
    Ok(out.remove(0))
}

/// Run every job on every path of `bundle`; each path is generated once and
/// shared by all jobs.
pub fn run_strategies(
    bundle: &PathBundle,
    jobs: &[StrategyJob],
    pi0: f64,
    opts: RunOptions,
) -> Result<Vec<WealthLedger>> {
    for j in jobs {
        if !(0.0..1.0).contains(&j.omega) {
            return Err(Error::invalid("omega", format!("must lie in [0, 1), got {}", j.omega)));
        }
    }
    if !(pi0 > 0.0 && pi0.is_finite()) {
        return Err(Error::invalid("pi0", format!("must be positive, got {pi0}")));
    }
    if opts.mode == LedgerMode::Full {
        let values = 4 * jobs.len() as u64 * bundle.n_paths as u64 * (bundle.n_steps as u64 + 1);
        if values > MAX_STORED_VALUES {
            return Err(Error::ResourceLimit(format!(
                "full ledger of {values} values exceeds {MAX_STORED_VALUES}"
            )));
        }
    }
    let per_path: Vec<Vec<(PathSummary, Option<PathTrace>)>> = (0..bundle.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = bundle.path(i);
            jobs.iter()
                .map(|j| run_path(&path, bundle, j, pi0, opts))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ledgers: Vec<WealthLedger> = jobs
        .iter()
        .map(|j| WealthLedger {
            strategy: j.name.clone(),
            omega: j.omega,
            pi0,
            dt: bundle.dt,
            n_steps: bundle.n_steps,
            paths: Vec::with_capacity(bundle.n_paths),
            traces: (opts.mode == LedgerMode::Full).then(Vec::new),
        })
        .collect();
    for row in per_path {
        for (ledger, (summary, trace)) in ledgers.iter_mut().zip(row) {
            ledger.paths.push(summary);
            if let (Some(traces), Some(t)) = (ledger.traces.as_mut(), trace) {
                traces.push(t);
            }
        }
    }
    Ok(ledgers)
}

fn run_path(
    path: &SimPath,
    bundle: &PathBundle,
    job: &StrategyJob,
    pi0: f64,
    opts: RunOptions,
) -> Result<(PathSummary, Option<PathTrace>)> {
    let n = bundle.n_steps;
    let dt = bundle.dt;
    let full = opts.mode == LedgerMode::Full;
    let mut trace = full.then(|| PathTrace {
        wealth: Vec::with_capacity(n + 1),
        pre_wealth: Vec::with_capacity(n + 1),
        weight: Vec::with_capacity(n + 1),
        delta: Vec::with_capacity(n + 1),
        max_residual: 0.0,
    });
    let mut acc = ReturnAccumulator::default();

    if let StrategySpec::BuyAndHold = job.strategy {
        let shares = pi0 / bundle.x0.exp();
        let mut prev = pi0;
        for i in 0..=n {
            let w = shares * path.x[i].exp();
            if i > 0 {
                acc.push(w / prev - 1.0);
            }
            if let Some(t) = trace.as_mut() {
                t.wealth.push(w);
                t.pre_wealth.push(w);
                t.weight.push(1.0);
                t.delta.push(0.0);
            }
            prev = w;
        }
        return Ok((acc.finish(prev, 0.0, false), trace));
    }

    let omega = job.omega;
    let charge = omega > 0.0 || opts.cost_branch == CostBranch::Always;
    let weight_at = |i: usize| -> Result<f64> {
        let f = job
            .strategy
            .weight(i as f64 * dt, path.z[i])
            .expect("non-buy-and-hold strategies have a weight");
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::invalid("strategy", format!("non-finite weight at step {i}")))
        }
    };

    // Inception: start from one share's worth of wealth (weight 1), then
    // rebalance to the strategy weight at t = 0.
    let x0 = path.x[0];
    let mut f = weight_at(0)?;
    let mut cost = 0.0;
    let mut pi = pi0;
    let mut shares_before = pi0 / x0.exp();
    let mut delta = 0.0;
    if charge {
        delta = delta_from_pre(f, 1.0, pi0, pi0, x0, x0, omega)?;
        let c = omega * delta.abs() * x0.exp();
        pi = pi0 - c;
        cost += c;
    } else if full {
        delta = delta_from_pre(f, 1.0, pi0, pi0, x0, x0, 0.0)?;
    }
    let mut max_res: f64 = 0.0;
    if full {
        max_res = max_res.max(residual(f, pi, shares_before, delta, x0));
    }
    if let Some(t) = trace.as_mut() {
        t.wealth.push(pi);
        t.pre_wealth.push(pi0);
        t.weight.push(f);
        t.delta.push(delta);
    }
    if !(pi > 0.0) {
        return Ok((acc.finish(pi0, cost, true), finish_trace(trace, max_res)));
    }

    let mut prev_recorded = pi0;
    let mut bankrupt = false;
    for i in 0..n {
        let (xc, xn) = (path.x[i], path.x[i + 1]);
        let pre = pre_trade_wealth(f, pi, xc, xn);
        let f_next = weight_at(i + 1)?;
        let mut new_pi = pre;
        delta = 0.0;
        if charge {
            delta = delta_from_pre(f_next, f, pi, pre, xc, xn, omega)?;
            let c = omega * delta.abs() * xn.exp();
            new_pi = pre - c;
            cost += c;
        } else if full {
            delta = delta_from_pre(f_next, f, pi, pre, xc, xn, 0.0)?;
        }
        if !(new_pi > 0.0 && new_pi.is_finite()) {
            bankrupt = true;
            if let Some(t) = trace.as_mut() {
                // Frozen at the last positive wealth for the remaining steps.
                for _ in i..n {
                    t.wealth.push(pi);
                    t.pre_wealth.push(pi);
                    t.weight.push(0.0);
                    t.delta.push(0.0);
                }
            }
            break;
        }
        if full {
            shares_before = f * pi / xc.exp();
            max_res = max_res.max(residual(f_next, new_pi, shares_before, delta, xn));
        }
        acc.push(new_pi / prev_recorded - 1.0);
        if let Some(t) = trace.as_mut() {
            t.wealth.push(new_pi);
            t.pre_wealth.push(pre);
            t.weight.push(f_next);
            t.delta.push(delta);
        }
        prev_recorded = new_pi;
        pi = new_pi;
        f = f_next;
    }
    Ok((acc.finish(pi, cost, bankrupt), finish_trace(trace, max_res)))
}

fn finish_trace(trace: Option<PathTrace>, max_res: f64) -> Option<PathTrace> {
    trace.map(|mut t| {
        t.max_residual = max_res;
        t
    })
}

/// Relative mismatch of `f Pi = (shares + Delta) e^x`.
fn residual(f_next: f64, pi_next: f64, shares_before: f64, delta: f64, x: f64) -> f64 {
    let lhs = f_next * pi_next;
    let rhs = (shares_before + delta) * x.exp();
    (lhs - rhs).abs() / lhs.abs().max(pi_next.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ONE_DAY;
    use approx::assert_relative_eq;

    fn small_config(n_paths: usize) -> SimConfig {
        SimConfig::new(2.0, n_paths)
    }

    #[test]
    fn same_seed_same_paths() {
        let p = ModelParams::reference_ou(2.0);
        let b1 = simulate_paths(&p, &small_config(8)).unwrap();
        let b2 = simulate_paths(&p, &small_config(8)).unwrap();
        for i in 0..8 {
            assert_eq!(b1.path(i), b2.path(i));
        }
        assert_eq!(b1.identity_hash(), b2.identity_hash());
        let b3 = simulate_paths(&p, &small_config(8).with_seed(7)).unwrap();
        assert_ne!(b1.path(0), b3.path(0));
        assert_ne!(b1.identity_hash(), b3.identity_hash());
    }

    #[test]
    fn path_invariants() {
        let p = ModelParams::ctmc(0.2, 2.0, -0.2, 0.3, 1.0, 1.5);
        let b = simulate_paths(&p, &small_config(4)).unwrap();
        let path = b.path(3);
        assert_eq!(path.x.len(), b.n_steps() + 1);
        assert_eq!(path.y[0], 0.0);
        assert_eq!(path.x[0], 0.0);
        for i in 0..path.x.len() {
            assert_eq!(path.z[i], path.x[i] - path.y[i]);
            assert!(path.mu[i] == -0.2 || path.mu[i] == 0.3);
        }
    }

    #[test]
    fn deterministic_limit() {
        let mut p = ModelParams::ou(1e-12, 2.0, 0.0226, 0.0034, 1e-14);
        if let DriftModel::Ou(ou) = &mut p.drift {
            ou.v1_0 = Some(0.0);
        }
        let cfg = small_config(1);
        let b = simulate_paths(&p, &cfg).unwrap();
        let path = b.path(0);
        let n = b.n_steps();
        let expect = (0.0034 - 0.5e-24) * n as f64 * ONE_DAY;
        assert!((path.x[n] - expect).abs() < 1e-8);
    }

    #[test]
    fn resource_limit() {
        let p = ModelParams::reference_ou(2.0);
        let cfg = SimConfig::new(1e6, 1_000_000);
        assert_eq!(simulate_paths(&p, &cfg).unwrap_err().code(), "resource_limit");
    }

    #[test]
    fn delta_cost_free_formula() {
        let (fc, fnx, pi, xc, xn) = (0.5, 1.5, 1.0, 0.0, 0.01);
        let pre = pre_trade_wealth(fc, pi, xc, xn);
        let d = rebalance_delta(fnx, fc, pi, xc, xn, 0.0).unwrap();
        let want = (fnx * pre - fc * pi * (xn - xc).exp()) / xn.exp();
        assert_eq!(d, want);
        assert_eq!(rebalance_delta(0.7, 0.7, 1.3, 0.2, 0.2, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn delta_satisfies_both_equations() {
        let (fc, fnx, pi, xc, xn, om) = (0.5, 1.5, 1.0, 0.0, 0.01, 0.001);
        let d = rebalance_delta(fnx, fc, pi, xc, xn, om).unwrap();
        let pre = pre_trade_wealth(fc, pi, xc, xn);
        let new_pi = pre - om * d.abs() * xn.exp();
        let lhs = fnx * new_pi;
        let rhs = (fc * pi / xc.exp() + d) * xn.exp();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn leverage_singularity() {
        let e = rebalance_delta(100.0, 0.5, 1.0, 0.0, 0.0, 0.01).unwrap();
        assert!(e > 0.0);
        // buying while targeting f = -1/omega
        let err = rebalance_delta(-100.0, -200.0, 1.0, 0.0, 0.0, 0.01).unwrap_err();
        assert_eq!(err.code(), "leverage_cost_singularity");
    }

    #[test]
    fn buy_and_hold_tracks_price() {
        let p = ModelParams::reference_ou(2.0);
        let b = simulate_paths(&p, &small_config(5)).unwrap();
        let jobs = [StrategyJob::new("bh", StrategySpec::BuyAndHold, 0.01)];
        let opts = RunOptions { mode: LedgerMode::Full, cost_branch: CostBranch::Auto };
        let l = run_strategies(&b, &jobs, 1.0, opts).unwrap().remove(0);
        for (i, s) in l.paths.iter().enumerate() {
            assert_eq!(s.terminal_wealth, b.path(i).x[b.n_steps()].exp());
            assert_eq!(s.cost_paid, 0.0);
        }
    }

    #[test]
    fn zero_cost_branches_bit_identical() {
        let p = ModelParams::reference_ou(2.0);
        let b = simulate_paths(&p, &small_config(20)).unwrap();
        let jobs = [StrategyJob::new("g", StrategySpec::ConstantAffine { a: 8.0, b: 1.8 }, 0.0)];
        let auto = run_strategies(&b, &jobs, 1.0, RunOptions { mode: LedgerMode::Full, cost_branch: CostBranch::Auto })
            .unwrap()
            .remove(0);
        let always = run_strategies(&b, &jobs, 1.0, RunOptions { mode: LedgerMode::Full, cost_branch: CostBranch::Always })
            .unwrap()
            .remove(0);
        for (x, y) in auto.traces.unwrap().iter().zip(always.traces.unwrap().iter()) {
            assert_eq!(x.wealth, y.wealth);
        }
        assert_eq!(auto.paths, always.paths);
    }

    #[test]
    fn costs_never_help() {
        let p = ModelParams::reference_ou(2.0);
        let b = simulate_paths(&p, &small_config(30)).unwrap();
        let s = StrategySpec::ConstantAffine { a: 8.0, b: 1.8 };
        let jobs: Vec<_> = [0.0, 0.001, 0.005, 0.01]
            .iter()
            .map(|&o| StrategyJob::new("g", s.clone(), o))
            .collect();
        let ls = run_strategies(&b, &jobs, 1.0, RunOptions::default()).unwrap();
        for i in 0..30 {
            for k in 1..4 {
                assert!(ls[k].paths[i].terminal_wealth <= ls[k - 1].paths[i].terminal_wealth);
            }
        }
    }

    #[test]
    fn residuals_small() {
        let p = ModelParams::reference_ou(2.0);
        let b = simulate_paths(&p, &small_config(10)).unwrap();
        let jobs = [StrategyJob::new("g", StrategySpec::ConstantAffine { a: 8.0, b: 1.8 }, 0.005)];
        let l = run_strategies(&b, &jobs, 1.0, RunOptions { mode: LedgerMode::Full, cost_branch: CostBranch::Auto })
            .unwrap()
            .remove(0);
        for t in l.traces.unwrap() {
            assert!(t.max_residual <= 1e-10, "{}", t.max_residual);
        }
    }

    #[test]
    fn bankrupt_paths_freeze() {
        let p = ModelParams::reference_ou(2.0);
        let b = simulate_paths(&p, &small_config(10)).unwrap();
        let jobs = [StrategyJob::new("wild", StrategySpec::ConstantAffine { a: 0.0, b: 60.0 }, 0.0)];
        let l = run_strategies(&b, &jobs, 1.0, RunOptions::default()).unwrap().remove(0);
        let flagged = l.paths.iter().filter(|s| s.bankrupt).count();
        assert!(flagged > 0);
        for s in l.paths.iter().filter(|s| s.bankrupt) {
            assert!(s.terminal_wealth > 0.0);
            assert_eq!(s.n_returns, 0);
        }
    }

    #[test]
    fn csv_dump() {
        let b = simulate_paths(&ModelParams::reference_ou(2.0), &small_config(3)).unwrap();
        let mut buf = Vec::new();
        b.write_csv(2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path,step,X,Y,Z,mu\n"));
        assert_eq!(text.lines().count(), 1 + 2 * (b.n_steps() + 1));
    }

    #[test]
    fn constructed_ledger() {
        let series = vec![vec![1.0, 1.1, 1.21]];
        let l = WealthLedger::from_wealth_series(&series, 1.0, ONE_DAY).unwrap();
        assert_relative_eq!(l.paths[0].mean_return, 0.1, max_relative = 1e-12);
    }
}
