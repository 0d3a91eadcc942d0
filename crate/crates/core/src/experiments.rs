//! Config-driven experiments: the headline performance table, one-factor
//! sweeps, analytic growth rates, the filter PDE and real-price signals.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctmc_analytics::{ctmc_abcd, ctmc_growth_value, ctmc_limits, ctmc_moments, ctmc_stationary};
use crate::ctmc_filter::{long_run_growth_ctmc, solve_uv_pde_with, PdeOptions, TabulatedFilter, UVGrid};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::models::{DriftModel, ModelParams, SimConfig, StrategySpec, ONE_DAY};
use crate::ou_analytics::{
    convergence_days, eta, eta_upper_bound, growth_limit_affine, hat_lambda, optimal_affine_from_abcd,
    ou_abcd_with, ou_moments, xi, C2Schedule, CIntegral, CONVERGENCE_DECIMALS,
};
use crate::simulator::{hex, run_strategies, simulate_paths, LedgerMode, RunOptions, StrategyJob};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Performance,
    LambdaSweep,
    HorizonSweep,
    VolSweep,
    CostSweep,
    Pde,
    GrowthRates,
    Signal,
}

impl ExperimentKind {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Performance => "performance",
            ExperimentKind::LambdaSweep => "lambda_sweep",
            ExperimentKind::HorizonSweep => "horizon_sweep",
            ExperimentKind::VolSweep => "vol_sweep",
            ExperimentKind::CostSweep => "cost_sweep",
            ExperimentKind::Pde => "pde",
            ExperimentKind::GrowthRates => "growth_rates",
            ExperimentKind::Signal => "signal",
        }
    }

    pub fn is_sweep(self) -> bool {
        self.sweep_param().is_some()
    }

    /// Name of the swept quantity.
    pub fn sweep_param(self) -> Option<&'static str> {
        match self {
            ExperimentKind::LambdaSweep => Some("lambda"),
            ExperimentKind::HorizonSweep => Some("horizon_months"),
            ExperimentKind::VolSweep => Some("sigma"),
            ExperimentKind::CostSweep => Some("omega"),
            _ => None,
        }
    }

    /// Sweep used when the config gives none.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentKind::LambdaSweep => vec![42.0 / 11.0, 2.0, 42.0 / 51.0, 42.0 / 101.0, 42.0 / 201.0],
            ExperimentKind::HorizonSweep => vec![12.0, 24.0, 60.0, 120.0, 360.0],
            ExperimentKind::VolSweep => vec![0.0349, 0.0436, 0.0523],
            ExperimentKind::CostSweep => vec![0.0, 0.001, 0.005, 0.01],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSettings {
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_nt")]
    pub nt: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_t_max() -> f64 {
    20.0
}
fn default_nx() -> usize {
    400
}
fn default_nt() -> usize {
    41
}
fn default_cfl() -> f64 {
    0.9
}

impl Default for PdeSettings {
    fn default() -> Self {
        PdeSettings {
            t_max: default_t_max(),
            nx: default_nx(),
            nt: default_nt(),
            cfl: default_cfl(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSettings {
    /// CSV with columns `date, close`.
    pub input: PathBuf,
    /// Months per row; one trading day unless set.
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

fn default_model() -> ModelParams {
    ModelParams::reference_ou(2.0)
}
fn default_sim() -> SimConfig {
    SimConfig::new(24.0, 10_000)
}
fn default_table_points() -> usize {
    2001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Filled in from the CLI subcommand when omitted.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_model")]
    pub model: ModelParams,
    #[serde(default = "default_sim")]
    pub sim: SimConfig,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub c_integral: CIntegral,
    /// Grid size for tabulating the CTMC filter weight.
    #[serde(default = "default_table_points")]
    pub filter_table_points: usize,
    #[serde(default)]
    pub pde: PdeSettings,
    #[serde(default)]
    pub signal: Option<SignalSettings>,
    #[serde(default)]
    pub output: OutputSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            model: default_model(),
            sim: default_sim(),
            sweep: None,
            c_integral: CIntegral::default(),
            filter_table_points: default_table_points(),
            pde: PdeSettings::default(),
            signal: None,
            output: OutputSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment: Some(kind),
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingInput { path: path.into() }
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_json(&text)
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment
            .ok_or_else(|| Error::Config("missing `experiment` id".into()))
    }

    /// Hex digest of the config as serialized.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    pub fn sweep_values(&self) -> Result<Vec<f64>> {
        let kind = self.kind()?;
        let values = match &self.sweep {
            Some(v) if v.is_empty() => {
                return Err(Error::Config(format!("{} needs a nonempty sweep list", kind.id())));
            }
            Some(v) => v.clone(),
            None => kind.default_sweep(),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(values)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        self.model.validate()?;
        self.sim.validate()?;
        if kind.is_sweep() {
            for v in self.sweep_values()? {
                match kind {
                    ExperimentKind::LambdaSweep => {
                        self.model.with_lambda(v).validate()?;
                    }
                    ExperimentKind::VolSweep => {
                        self.model.with_sigma(v).validate()?;
                    }
                    ExperimentKind::HorizonSweep => {
                        SimConfig { horizon_months: v, ..self.sim }.validate()?;
                    }
                    ExperimentKind::CostSweep => {
                        self.sim.with_omega(v).validate()?;
                    }
                    _ => unreachable!(),
                }
            }
        }
        if kind == ExperimentKind::Signal && self.signal.is_none() {
            return Err(Error::Config("signal experiment needs a `signal.input` file".into()));
        }
        Ok(())
    }
}

/// One metrics cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub strategy: String,
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub omega: f64,
    pub seed: u64,
    pub bundle_hash: String,
    pub metrics: MetricsReport,
}

/// A named analytic value, optionally indexed by a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRow {
    pub name: String,
    pub param: String,
    pub param_value: Option<f64>,
    pub value: f64,
}

impl AnalyticRow {
    fn scalar(name: &str, value: f64) -> Self {
        AnalyticRow {
            name: name.into(),
            param: "none".into(),
            param_value: None,
            value,
        }
    }

    fn indexed(name: &str, param: &str, at: f64, value: f64) -> Self {
        AnalyticRow {
            name: name.into(),
            param: param.into(),
            param_value: Some(at),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRow {
    pub date: String,
    pub close: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
    /// Distinct path bundles used, in order of first use.
    pub bundle_hashes: Vec<String>,
    pub drift_model: String,
    /// OU only: whether the initial drift law fell back to the stationary one.
    pub stationary_initial_law: Option<bool>,
    /// All strategies in a cell share one bundle.
    pub common_random_numbers: bool,
    pub c_integral: CIntegral,
    /// Seconds since the Unix epoch, or `SOURCE_DATE_EPOCH` when set; JSON output only.
    pub timestamp: u64,
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub metadata: Metadata,
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub analytics: Vec<AnalyticRow>,
    #[serde(default)]
    pub signal: Vec<SignalRow>,
    #[serde(skip)]
    pub grid: Option<UVGrid>,
}

impl ReportSet {
    fn empty(config: &ExperimentConfig, experiment: &str) -> Self {
        let stationary = match config.model.drift {
            DriftModel::Ou(ou) => Some(ou.uses_stationary_default()),
            DriftModel::Ctmc2(_) => None,
        };
        ReportSet {
            metadata: Metadata {
                experiment: experiment.into(),
                seed: config.sim.seed,
                version: env!("CARGO_PKG_VERSION").into(),
                config_hash: config.hash(),
                bundle_hashes: Vec::new(),
                drift_model: config.model.drift.tag().into(),
                stationary_initial_law: stationary,
                common_random_numbers: true,
                c_integral: config.c_integral,
                timestamp: timestamp(),
            },
            rows: Vec::new(),
            analytics: Vec::new(),
            signal: Vec::new(),
            grid: None,
        }
    }

    fn note_bundle(&mut self, hash: &str) {
        if !self.metadata.bundle_hashes.iter().any(|h| h == hash) {
            self.metadata.bundle_hashes.push(hash.to_string());
        }
    }
}

/// The strategies compared in every simulated cell.
pub fn strategy_set(
    params: &ModelParams,
    horizon: f64,
    c_integral: CIntegral,
    table_points: usize,
) -> Result<Vec<(String, StrategySpec)>> {
    let mut out = Vec::new();
    match params.drift {
        DriftModel::Ou(_) => {
            let abcd = ou_abcd_with(params, horizon, c_integral)?;
            let (a1, b1) = optimal_affine_from_abcd(&abcd, horizon, params.sigma)?;
            out.push(("utility_c1".into(), StrategySpec::ConstantAffine { a: a1, b: b1 }));
            let sched = C2Schedule::new(params)?;
            out.push(("utility_c2".into(), StrategySpec::time_varying(move |t| sched.at(t))));
            let (ai, bi) = growth_limit_affine(params)?;
            out.push(("growth".into(), StrategySpec::ConstantAffine { a: ai, b: bi }));
        }
        DriftModel::Ctmc2(_) => {
            let abcd = ctmc_abcd(params, horizon)?;
            let (a1, b1) = optimal_affine_from_abcd(&abcd, horizon, params.sigma)?;
            out.push(("utility_c1".into(), StrategySpec::ConstantAffine { a: a1, b: b1 }));
            let lim = ctmc_limits(params)?;
            out.push((
                "growth_affine".into(),
                StrategySpec::ConstantAffine {
                    a: lim.c_inf,
                    b: lim.d_inf,
                },
            ));
            let table = TabulatedFilter::new(params, table_points)?;
            out.push(("growth_filter".into(), StrategySpec::nonlinear(move |z| table.eval(z))));
        }
    }
    out.push(("buy_and_hold".into(), StrategySpec::BuyAndHold));
    Ok(out)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportSet> {
    config.validate()?;
    let kind = config.kind()?;
    let mut set = ReportSet::empty(config, kind.id());
    match kind {
        ExperimentKind::Performance => {
            simulate_cell(config, &config.model, &config.sim, &[config.sim.omega], "none", None, &mut set)?;
        }
        ExperimentKind::LambdaSweep | ExperimentKind::VolSweep | ExperimentKind::HorizonSweep => {
            let param = kind.sweep_param().expect("sweep kind");
            for v in config.sweep_values()? {
                let (model, sim) = match kind {
                    ExperimentKind::LambdaSweep => (config.model.with_lambda(v), config.sim),
                    ExperimentKind::VolSweep => (config.model.with_sigma(v), config.sim),
                    _ => (config.model, SimConfig { horizon_months: v, ..config.sim }),
                };
                simulate_cell(config, &model, &sim, &[config.sim.omega], param, Some(v), &mut set)?;
            }
        }
        ExperimentKind::CostSweep => {
            let omegas = config.sweep_values()?;
            simulate_cell(config, &config.model, &config.sim, &omegas, "omega", None, &mut set)?;
        }
        ExperimentKind::GrowthRates => set.analytics = growth_rates(&config.model)?,
        ExperimentKind::Pde => {
            let p = &config.pde;
            let opts = PdeOptions {
                cfl: p.cfl,
                ..PdeOptions::default()
            };
            let grid = solve_uv_pde_with(&config.model, p.t_max, p.nx, p.nt, opts)?;
            set.analytics = vec![
                AnalyticRow::scalar("t_max", p.t_max),
                AnalyticRow::scalar("nx", p.nx as f64),
                AnalyticRow::scalar("snapshots", grid.times.len() as f64),
                AnalyticRow::scalar("steps_taken", grid.steps_taken as f64),
            ];
            set.grid = Some(grid);
        }
        ExperimentKind::Signal => {
            let s = config.signal.as_ref().expect("validated");
            set.signal = signal_series(config, &s.input, s.dt)?;
        }
    }
    Ok(set)
}

/// Simulate one bundle and run every strategy at every cost rate on it.
/// With several `omegas` each row's sweep value is its cost rate.
fn simulate_cell(
    config: &ExperimentConfig,
    model: &ModelParams,
    sim: &SimConfig,
    omegas: &[f64],
    param: &str,
    value: Option<f64>,
    set: &mut ReportSet,
) -> Result<()> {
    let bundle = simulate_paths(model, sim)?;
    let hash = bundle.identity_hash();
    set.note_bundle(&hash);
    let strategies = strategy_set(model, sim.horizon_months, config.c_integral, config.filter_table_points)?;
    let mut jobs = Vec::new();
    for &w in omegas {
        for (name, s) in &strategies {
            jobs.push(StrategyJob::new(name.clone(), s.clone(), w));
        }
    }
    let opts = RunOptions {
        mode: LedgerMode::Summary,
        ..Default::default()
    };
    let ledgers = run_strategies(&bundle, &jobs, sim.pi0, opts)?;
    let by_omega = omegas.len() > 1 || param == "omega";
    for ledger in &ledgers {
        set.rows.push(ReportRow {
            experiment: set.metadata.experiment.clone(),
            strategy: ledger.strategy.clone(),
            sweep_param: param.into(),
            sweep_value: if by_omega { Some(ledger.omega) } else { value },
            omega: ledger.omega,
            seed: sim.seed,
            bundle_hash: hash.clone(),
            metrics: compute_metrics(ledger)?,
        });
    }
    Ok(())
}

/// Long-run growth figures of the model.
pub fn growth_rates(model: &ModelParams) -> Result<Vec<AnalyticRow>> {
    model.validate()?;
    let s2 = model.sigma * model.sigma;
    Ok(match model.drift {
        DriftModel::Ou(ou) => {
            let (ai, bi) = growth_limit_affine(model)?;
            let lh = hat_lambda(model)?;
            vec![
                AnalyticRow::scalar("eta", eta(model, None)?),
                AnalyticRow::scalar("xi", xi(model)?),
                AnalyticRow::scalar("constant_drift_growth", ou.mu_bar * ou.mu_bar / (2.0 * s2)),
                AnalyticRow::scalar("hat_lambda", lh),
                AnalyticRow::scalar("eta_at_hat_lambda", eta(model, Some(lh))?),
                AnalyticRow::scalar("eta_upper_bound", eta_upper_bound(model)?),
                AnalyticRow::scalar("a_inf", ai),
                AnalyticRow::scalar("b_inf", bi),
            ]
        }
        DriftModel::Ctmc2(_) => {
            let st = ctmc_stationary(model)?;
            let lim = ctmc_limits(model)?;
            vec![
                AnalyticRow::scalar("n1", st.n1),
                AnalyticRow::scalar("c_inf", lim.c_inf),
                AnalyticRow::scalar("d_inf", lim.d_inf),
                AnalyticRow::scalar("affine_growth", ctmc_growth_value(model, lim.c_inf, lim.d_inf)?),
                AnalyticRow::scalar("filter_growth", long_run_growth_ctmc(model)?),
                AnalyticRow::scalar("constant_drift_growth", st.n1 * st.n1 / (2.0 * s2)),
            ]
        }
    })
}

/// Optimal coefficients at the configured horizon and their limits.
pub fn strategy_report(config: &ExperimentConfig) -> Result<ReportSet> {
    config.model.validate()?;
    config.sim.validate()?;
    let mut set = ReportSet::empty(config, "strategy");
    let m = &config.model;
    let t = config.sim.horizon_months;
    let rows = &mut set.analytics;
    match m.drift {
        DriftModel::Ou(_) => {
            let abcd = ou_abcd_with(m, t, config.c_integral)?;
            let (a1, b1) = optimal_affine_from_abcd(&abcd, t, m.sigma)?;
            let (ai, bi) = growth_limit_affine(m)?;
            rows.push(AnalyticRow::indexed("a1_star", "horizon_months", t, a1));
            rows.push(AnalyticRow::indexed("b1_star", "horizon_months", t, b1));
            rows.push(AnalyticRow::scalar("a_inf", ai));
            rows.push(AnalyticRow::scalar("b_inf", bi));
            let days = convergence_days(m, config.sim.dt, CONVERGENCE_DECIMALS, 100_000)?;
            rows.push(AnalyticRow::scalar("a2_convergence_day", f64::from(days.a_day)));
            rows.push(AnalyticRow::scalar("b2_convergence_day", f64::from(days.b_day)));
            let sched = C2Schedule::new(m)?;
            let n = config.sim.n_steps();
            let stride = (n / 24).max(1);
            for i in (0..=n).step_by(stride) {
                let ti = i as f64 * config.sim.dt;
                let (a, b) = sched.at(ti);
                rows.push(AnalyticRow::indexed("a2_star", "t", ti, a));
                rows.push(AnalyticRow::indexed("b2_star", "t", ti, b));
            }
        }
        DriftModel::Ctmc2(_) => {
            let abcd = ctmc_abcd(m, t)?;
            let (a1, b1) = optimal_affine_from_abcd(&abcd, t, m.sigma)?;
            let lim = ctmc_limits(m)?;
            rows.push(AnalyticRow::indexed("a1_star", "horizon_months", t, a1));
            rows.push(AnalyticRow::indexed("b1_star", "horizon_months", t, b1));
            rows.push(AnalyticRow::scalar("c_inf", lim.c_inf));
            rows.push(AnalyticRow::scalar("d_inf", lim.d_inf));
            let table = TabulatedFilter::new(m, 41)?;
            for (i, v) in table.values.iter().enumerate() {
                rows.push(AnalyticRow::indexed("g_inf", "x", table.lo + table.step * i as f64, *v));
            }
        }
    }
    Ok(set)
}

/// Moment functions on a monthly grid up to the configured horizon.
pub fn moments_report(config: &ExperimentConfig) -> Result<ReportSet> {
    config.model.validate()?;
    config.sim.validate()?;
    let mut set = ReportSet::empty(config, "moments");
    let months = config.sim.horizon_months.ceil() as usize;
    let mut grid = vec![0.0, 0.5];
    grid.extend((1..=months).map(|m| (m as f64).min(config.sim.horizon_months)));
    grid.dedup();
    for t in grid {
        match config.model.drift {
            DriftModel::Ou(_) => {
                let m = ou_moments(&config.model, t)?;
                for (name, v) in [("m1", m.m1), ("v1", m.v1), ("m2", m.m2), ("v2", m.v2), ("m3", m.m3)] {
                    set.analytics.push(AnalyticRow::indexed(name, "t", t, v));
                }
            }
            DriftModel::Ctmc2(_) => {
                let m = ctmc_moments(&config.model, t)?;
                for (name, v) in [("n2", m.n2), ("n3", m.n3), ("n4", m.n4)] {
                    set.analytics.push(AnalyticRow::indexed(name, "t", t, v));
                }
            }
        }
    }
    Ok(set)
}

#[derive(Deserialize)]
struct PriceRow {
    date: String,
    close: f64,
}

/// `X = ln(close / close_0)`, the ExpMA recursion for `Y`, and the growth
/// strategy weight of the configured model.
fn signal_series(config: &ExperimentConfig, input: &Path, dt: Option<f64>) -> Result<Vec<SignalRow>> {
    if !input.exists() {
        return Err(Error::MissingInput { path: input.into() });
    }
    let dt = dt.unwrap_or(ONE_DAY);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("signal dt must be positive, got {dt}")));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(input)?;
    let prices: Vec<PriceRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if prices.is_empty() {
        return Err(Error::Config(format!("{} has no price rows", input.display())));
    }
    if let Some(bad) = prices.iter().find(|p| !(p.close > 0.0 && p.close.is_finite())) {
        return Err(Error::Config(format!("non-positive close on {}", bad.date)));
    }
    let weight: Box<dyn Fn(f64) -> f64> = match config.model.drift {
        DriftModel::Ou(_) => {
            let (a, b) = growth_limit_affine(&config.model)?;
            Box::new(move |z| a * z + b)
        }
        DriftModel::Ctmc2(_) => {
            let table = TabulatedFilter::new(&config.model, config.filter_table_points)?;
            Box::new(move |z| table.eval(z))
        }
    };
    let lambda = config.model.lambda;
    let c0 = prices[0].close;
    let mut y = 0.0;
    let mut prev_x = 0.0;
    let mut out = Vec::with_capacity(prices.len());
    for (i, p) in prices.into_iter().enumerate() {
        let x = (p.close / c0).ln();
        if i > 0 {
            y += lambda * (prev_x - y) * dt;
        }
        prev_x = x;
        out.push(SignalRow {
            date: p.date,
            close: p.close,
            x,
            y,
            z: x - y,
            weight: weight(x - y),
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>, missing: &str) -> String {
    v.map_or_else(|| missing.to_string(), |x| x.to_string())
}

/// Metric rows in the fixed CSV column order; an undefined Sharpe is written
/// as `undefined`.
pub fn write_rows_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "experiment",
        "strategy",
        "sweep_param",
        "sweep_value",
        "total_return",
        "avg_daily_return",
        "sharpe",
        "log_growth",
        "se_return",
        "se_sharpe",
        "n_paths",
        "seed",
    ])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record(&[
            r.experiment.clone(),
            r.strategy.clone(),
            r.sweep_param.clone(),
            opt(r.sweep_value, ""),
            m.total_return.to_string(),
            m.avg_daily_return.to_string(),
            opt(m.sharpe, "undefined"),
            m.log_growth.to_string(),
            m.se_return.to_string(),
            opt(m.se_sharpe, "undefined"),
            m.n_paths.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_analytics_csv<W: Write>(rows: &[AnalyticRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "param", "param_value", "value"])?;
    for r in rows {
        w.write_record(&[r.name.clone(), r.param.clone(), opt(r.param_value, ""), r.value.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_signal_csv<W: Write>(rows: &[SignalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["date", "close", "x", "y", "z", "weight"])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write `reports` under `dir` and return the files written.
pub fn emit(reports: &ReportSet, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = reports.metadata.experiment.as_str();
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let rows_needed = !reports.rows.is_empty() || (reports.analytics.is_empty() && reports.signal.is_empty() && reports.grid.is_none());
            if rows_needed {
                let p = dir.join(format!("{stem}.csv"));
                write_rows_csv(&reports.rows, create(&p)?)?;
                written.push(p);
            }
            if !reports.analytics.is_empty() {
                let p = dir.join(format!("{stem}_analytics.csv"));
                write_analytics_csv(&reports.analytics, create(&p)?)?;
                written.push(p);
            }
            if !reports.signal.is_empty() {
                let p = dir.join("signal_series.csv");
                write_signal_csv(&reports.signal, create(&p)?)?;
                written.push(p);
            }
        }
        OutputFormat::Json => {
            let p = dir.join(format!("{stem}.json"));
            let mut f = create(&p)?;
            serde_json::to_writer_pretty(&mut f, reports)?;
            f.write_all(b"\n").map_err(|e| Error::io(&p, e))?;
            f.flush().map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    if let Some(grid) = &reports.grid {
        let p = dir.join("pde_grid.csv");
        grid.save_csv(&p)?;
        written.push(p);
    }
    Ok(written)
}
