//! Performance statistics over a wealth ledger.
//!
//! Daily returns from all non-bankrupt paths are pooled into one sample for
//! the average return and the Sharpe ratio. Standard errors treat paths as
//! independent clusters and use the delta method for ratio estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::WealthLedger;

/// Relative spread below which returns count as constant.
const CONSTANT_RETURN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean of `Pi_T / Pi_0 - 1` over all paths.
    pub total_return: f64,
    pub se_return: f64,
    /// Pooled mean daily return.
    pub avg_daily_return: f64,
    pub se_daily_return: f64,
    /// Pooled daily Sharpe ratio; `None` when returns do not vary.
    pub sharpe: Option<f64>,
    pub se_sharpe: Option<f64>,
    /// Mean of per-path Sharpe ratios, over paths where it is defined.
    pub per_path_sharpe: Option<f64>,
    /// `E[ln(Pi_T / Pi_0)] / T`, per month.
    pub log_growth: f64,
    pub se_log_growth: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub bankrupt_count: usize,
    pub mean_cost: f64,
}

pub fn compute_metrics(ledger: &WealthLedger) -> Result<MetricsReport> {
    let n_paths = ledger.paths.len();
    if n_paths == 0 {
        return Err(Error::invalid("ledger", "no paths"));
    }
    let horizon = ledger.n_steps as f64 * ledger.dt;
    let pi0 = ledger.pi0;

    let totals: Vec<f64> = ledger.paths.iter().map(|p| p.terminal_wealth / pi0 - 1.0).collect();
    let (total_return, se_return) = mean_and_se(&totals);
    let logs: Vec<f64> = ledger
        .paths
        .iter()
        .map(|p| (p.terminal_wealth / pi0).ln() / horizon.max(f64::MIN_POSITIVE))
        .collect();
    let (log_growth, se_log_growth) = mean_and_se(&logs);
    let mean_cost = ledger.paths.iter().map(|p| p.cost_paid).sum::<f64>() / n_paths as f64;

    // Pooled moments via Chan's combination, in path order.
    let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for p in ledger.paths.iter().filter(|p| !p.bankrupt && p.n_returns > 0) {
        let nb = p.n_returns as f64;
        let d = p.mean_return - mean;
        let tot = n + nb;
        mean += d * nb / tot;
        m2 += p.m2_return + d * d * n * nb / tot;
        n = tot;
    }

    let (mut se_daily, mut sharpe, mut se_sharpe) = (0.0, None, None);
    if n >= 2.0 {
        let var_pop = m2 / n;
        let sd = (m2 / (n - 1.0)).sqrt();
        let sd_pop = var_pop.sqrt();
        // Linearized per-path contributions to the pooled mean and second moment.
        let (mut s_mu, mut s_mix) = (0.0f64, 0.0f64);
        let g_mu = if sd_pop > 0.0 { 1.0 / sd_pop + mean * mean / sd_pop.powi(3) } else { 0.0 };
        let g_m2 = if sd_pop > 0.0 { -mean / (2.0 * sd_pop.powi(3)) } else { 0.0 };
        let raw2 = var_pop + mean * mean;
        for p in ledger.paths.iter().filter(|p| !p.bankrupt && p.n_returns > 0) {
            let nb = p.n_returns as f64;
            let e = nb * (p.mean_return - mean);
            let sumsq = p.m2_return + nb * p.mean_return * p.mean_return;
            let h = sumsq - raw2 * nb;
            s_mu += e * e;
            let lin = g_mu * e + g_m2 * h;
            s_mix += lin * lin;
        }
        se_daily = s_mu.sqrt() / n;
        if sd > CONSTANT_RETURN_TOL * mean.abs() && sd > 0.0 {
            sharpe = Some(mean / sd);
            se_sharpe = Some(s_mix.sqrt() / n);
        }
    }

    let per_path: Vec<f64> = ledger
        .paths
        .iter()
        .filter(|p| !p.bankrupt && p.n_returns > 1)
        .filter_map(|p| {
            let sd = (p.m2_return / (p.n_returns as f64 - 1.0)).sqrt();
            (sd > CONSTANT_RETURN_TOL * p.mean_return.abs() && sd > 0.0).then(|| p.mean_return / sd)
        })
        .collect();
    let per_path_sharpe = (!per_path.is_empty()).then(|| per_path.iter().sum::<f64>() / per_path.len() as f64);

    Ok(MetricsReport {
        total_return,
        se_return,
        avg_daily_return: mean,
        se_daily_return: se_daily,
        sharpe,
        se_sharpe,
        per_path_sharpe,
        log_growth,
        se_log_growth,
        n_paths,
        n_steps: ledger.n_steps,
        bankrupt_count: ledger.bankrupt_count(),
        mean_cost,
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
