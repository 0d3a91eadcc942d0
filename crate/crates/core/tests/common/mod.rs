//! Independent Monte Carlo oracles shared by the integration tests.
//!
//! Nothing here calls the closed forms under test. The OU pair `(mu, Z)` is
//! sampled with its exact Gaussian transition from a Van Loan matrix
//! exponential; the two-state drift with exact jump epochs and an exact OU
//! step for `Z` between jumps.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix4, Vector2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use expma_lab::models::{DriftModel, ModelParams};

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Running sums for sample moments.
#[derive(Debug, Clone, Default)]
pub struct Sample {
    pub values: Vec<f64>,
}

impl Sample {
    pub fn push(&mut self, x: f64) {
        self.values.push(x);
    }

    pub fn n(&self) -> f64 {
        self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n()
    }

    fn central(&self, k: i32) -> f64 {
        let m = self.mean();
        self.values.iter().map(|x| (x - m).powi(k)).sum::<f64>() / self.n()
    }

    pub fn var(&self) -> f64 {
        self.central(2) * self.n() / (self.n() - 1.0)
    }

    pub fn se_mean(&self) -> f64 {
        (self.var() / self.n()).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn se_var(&self) -> f64 {
        let m2 = self.central(2);
        ((self.central(4) - m2 * m2) / self.n()).sqrt()
    }
}

/// Exact transition over `h` of `d(mu, Z) = (A (mu, Z) + c) dt + B dW`.
pub struct OuExactStep {
    phi: Matrix2<f64>,
    shift: Vector2<f64>,
    chol: Matrix2<f64>,
}

impl OuExactStep {
    pub fn new(p: &ModelParams, h: f64) -> Self {
        let DriftModel::Ou(ou) = p.drift else { panic!("OU model expected") };
        let (k, l, s) = (ou.kappa, p.lambda, p.sigma);
        let a = Matrix2::new(-k, 0.0, 1.0, -l);
        let c = Vector2::new(k * ou.mu_bar, -0.5 * s * s);
        let bbt = Matrix2::new(ou.delta * ou.delta, 0.0, 0.0, s * s);

        let phi = (a * h).exp();
        // Affine part: int_0^h e^{A u} du c, via the augmented generator.
        let mut aug = nalgebra::Matrix3::<f64>::zeros();
        aug.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        aug.fixed_view_mut::<2, 1>(0, 2).copy_from(&c);
        let e = (aug * h).exp();
        let shift = Vector2::new(e[(0, 2)], e[(1, 2)]);

        // Van Loan: exp([[-A, BB'], [0, A']] h).
        let mut m = Matrix4::<f64>::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a));
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&bbt);
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&a.transpose());
        let f = (m * h).exp();
        let f12 = f.fixed_view::<2, 2>(0, 2).into_owned();
        let f22 = f.fixed_view::<2, 2>(2, 2).into_owned();
        let q = f22.transpose() * f12;
        let q = 0.5 * (q + q.transpose());
        let chol = q.cholesky().expect("positive definite transition covariance").l();
        OuExactStep { phi, shift, chol }
    }

    pub fn step(&self, state: Vector2<f64>, rng: &mut ChaCha8Rng) -> Vector2<f64> {
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.phi * state + self.shift + self.chol * z
    }
}

/// Draw `mu_0` from the configured initial law, `Z_0 = 0`.
pub fn ou_initial(p: &ModelParams, rng: &mut ChaCha8Rng) -> Vector2<f64> {
    let DriftModel::Ou(ou) = p.drift else { panic!("OU model expected") };
    let z: f64 = rng.sample(StandardNormal);
    Vector2::new(ou.m1_0() + ou.v1_0().sqrt() * z, 0.0)
}

/// Samples of `(mu_t, Z_t)` at each of the ascending `times`.
pub fn ou_samples(p: &ModelParams, times: &[f64], n_paths: usize, seed: u64) -> Vec<(Sample, Sample, Sample)> {
    let mut prev = 0.0;
    let steps: Vec<OuExactStep> = times
        .iter()
        .map(|&t| {
            let s = OuExactStep::new(p, t - prev);
            prev = t;
            s
        })
        .collect();
    let mut out = vec![(Sample::default(), Sample::default(), Sample::default()); times.len()];
    for path in 0..n_paths {
        let mut r = rng(seed, path as u64);
        let mut s = ou_initial(p, &mut r);
        for (j, step) in steps.iter().enumerate() {
            s = step.step(s, &mut r);
            out[j].0.push(s[0]);
            out[j].1.push(s[1]);
            out[j].2.push(s[0] * s[1]);
        }
    }
    out
}

/// Two-state drift with exact switching and exact OU evolution of `Z`.
pub struct CtmcExact {
    pub rho: [f64; 2],
    pub rate: [f64; 2],
    pub lambda: f64,
    pub sigma: f64,
}

impl CtmcExact {
    pub fn new(p: &ModelParams) -> Self {
        let DriftModel::Ctmc2(c) = p.drift else { panic!("CTMC model expected") };
        CtmcExact {
            rho: [c.rho1, c.rho2],
            rate: [c.alpha, c.beta],
            lambda: p.lambda,
            sigma: p.sigma,
        }
    }

    /// Stationary draw of the state index.
    pub fn stationary_state(&self, rng: &mut ChaCha8Rng) -> usize {
        let p2 = self.rate[0] / (self.rate[0] + self.rate[1]);
        usize::from(rng.random::<f64>() < p2)
    }

    /// `Z` after time `h` at constant drift `mu`.
    fn z_step(&self, z: f64, mu: f64, h: f64, rng: &mut ChaCha8Rng) -> f64 {
        let l = self.lambda;
        let decay = (-l * h).exp();
        let mean_target = (mu - 0.5 * self.sigma * self.sigma) / l;
        let sd = self.sigma * (-(-2.0 * l * h).exp_m1() / (2.0 * l)).sqrt();
        let n: f64 = rng.sample(StandardNormal);
        mean_target + (z - mean_target) * decay + sd * n
    }

    /// Evolve `(state, Z)` over `[0, t]`.
    pub fn run(&self, state: &mut usize, z: &mut f64, t: f64, rng: &mut ChaCha8Rng) {
        let mut left = t;
        loop {
            let e: f64 = rng.sample(Exp1);
            let hold = e / self.rate[*state];
            if hold >= left {
                *z = self.z_step(*z, self.rho[*state], left, rng);
                return;
            }
            *z = self.z_step(*z, self.rho[*state], hold, rng);
            left -= hold;
            *state = 1 - *state;
        }
    }

    /// `int_0^t e^{-lambda s} mu_s ds` starting from `state`, exactly.
    pub fn discounted_drift(&self, mut state: usize, t: f64, rng: &mut ChaCha8Rng) -> f64 {
        let l = self.lambda;
        let mut s = 0.0;
        let mut acc = 0.0;
        while s < t {
            let e: f64 = rng.sample(Exp1);
            let end = (s + e / self.rate[state]).min(t);
            acc += self.rho[state] * ((-l * s).exp() - (-l * end).exp()) / l;
            s = end;
            state = 1 - state;
        }
        acc
    }
}

/// Kolmogorov-Smirnov distance between a sample and a c.d.f.
pub fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// `|x - want| <= k se`.
pub fn within(x: f64, want: f64, se: f64, k: f64) -> bool {
    (x - want).abs() <= k * se
}

/// One Monte Carlo comparison.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub t: f64,
    pub mc: f64,
    pub se: f64,
    pub closed: f64,
}

impl Check {
    pub fn z_score(&self) -> f64 {
        (self.mc - self.closed) / self.se
    }
}

/// `m1, v1, m2, v2, m3` against exact-transition sampling.
pub fn ou_moment_checks(p: &ModelParams, times: &[f64], n: usize, seed: u64) -> Vec<Check> {
    use expma_lab::ou_analytics::ou_moments;
    let samples = ou_samples(p, times, n, seed);
    let mut out = Vec::new();
    for (&t, (mu, z, prod)) in times.iter().zip(&samples) {
        let m = ou_moments(p, t).unwrap();
        out.push(Check { name: "m1", t, mc: mu.mean(), se: mu.se_mean(), closed: m.m1 });
        out.push(Check { name: "v1", t, mc: mu.var(), se: mu.se_var(), closed: m.v1 });
        out.push(Check { name: "m2", t, mc: z.mean(), se: z.se_mean(), closed: m.m2 });
        out.push(Check { name: "v2", t, mc: z.var(), se: z.se_var(), closed: m.v2 });
        out.push(Check { name: "m3", t, mc: prod.mean(), se: prod.se_mean(), closed: m.m3 });
    }
    out
}

/// `n2, n3, n4` against exact two-state sampling from the stationary law.
pub fn ctmc_moment_checks(p: &ModelParams, times: &[f64], n: usize, seed: u64) -> Vec<Check> {
    use expma_lab::ctmc_analytics::ctmc_moments;
    let sim = CtmcExact::new(p);
    let mut z_s = vec![Sample::default(); times.len()];
    let mut mz_s = vec![Sample::default(); times.len()];
    let mut zz_s = vec![Sample::default(); times.len()];
    for path in 0..n {
        let mut r = rng(seed, path as u64);
        let mut state = sim.stationary_state(&mut r);
        let mut z = 0.0;
        let mut now = 0.0;
        for (j, &t) in times.iter().enumerate() {
            sim.run(&mut state, &mut z, t - now, &mut r);
            now = t;
            z_s[j].push(z);
            mz_s[j].push(sim.rho[state] * z);
            zz_s[j].push(z * z);
        }
    }
    let mut out = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let m = ctmc_moments(p, t).unwrap();
        out.push(Check { name: "n2", t, mc: z_s[j].mean(), se: z_s[j].se_mean(), closed: m.n2 });
        out.push(Check { name: "n3", t, mc: mz_s[j].mean(), se: mz_s[j].se_mean(), closed: m.n3 });
        out.push(Check { name: "n4", t, mc: zz_s[j].mean(), se: zz_s[j].se_mean(), closed: m.n4 });
    }
    out
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn rel_err(x: f64, want: f64) -> f64 {
    (x - want).abs() / want.abs().max(1e-300)
}

/// `E[g mu - g^2 sigma^2 / 2]` over stationary `(mu, Z)` drawn with exact
/// switching after a burn-in of `40 / lambda`.
pub fn stationary_growth_sample(p: &ModelParams, n: usize, seed: u64) -> Sample {
    use expma_lab::ctmc_filter::StationaryFilter;
    let sim = CtmcExact::new(p);
    let filter = StationaryFilter::new(p).unwrap();
    let s2 = p.sigma * p.sigma;
    let mut out = Sample::default();
    for path in 0..n {
        let mut r = rng(seed, path as u64);
        let mut state = sim.stationary_state(&mut r);
        let mut z = 0.0;
        sim.run(&mut state, &mut z, 40.0 / p.lambda, &mut r);
        let g = filter.weight(z).unwrap();
        out.push(g * sim.rho[state] - 0.5 * g * g * s2);
    }
    out
}

/// KS distances of the stationary mixture, `u_inf` and `v_inf` against
/// discounted drift integrals truncated at `40 / lambda`.
pub fn stationary_law_ks(p: &ModelParams, n: usize, seed: u64) -> [f64; 3] {
    use expma_lab::ctmc_filter::stationary_law;
    let sim = CtmcExact::new(p);
    let law = stationary_law(p).unwrap();
    let horizon = 40.0 / p.lambda;
    let draw = |stream: u64, fixed: Option<usize>| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut r = rng(seed, stream * n as u64 + i as u64);
                let s = fixed.unwrap_or_else(|| sim.stationary_state(&mut r));
                sim.discounted_drift(s, horizon, &mut r)
            })
            .collect()
    };
    [
        ks_distance(draw(0, None), |z| law.mixture_cdf(z)),
        ks_distance(draw(1, Some(0)), |z| law.u_inf(z)),
        ks_distance(draw(2, Some(1)), |z| law.v_inf(z)),
    ]
}

/// Largest gap between the PDE `u(t, .)`, `v(t, .)` and the empirical
/// conditional c.d.f.s of the discounted drift at `probes` interior points.
pub fn pde_vs_conditional_cdf(p: &ModelParams, grid: &expma_lab::ctmc_filter::UVGrid, t: f64, probes: usize, n: usize, seed: u64) -> f64 {
    let sim = CtmcExact::new(p);
    let (lo, hi) = grid.support(t);
    let mut worst: f64 = 0.0;
    for (state, stream) in [(0usize, 0u64), (1, 1)] {
        let mut xs: Vec<f64> = (0..n)
            .map(|i| sim.discounted_drift(state, t, &mut rng(seed, stream * n as u64 + i as u64)))
            .collect();
        xs.sort_by(f64::total_cmp);
        for k in 1..=probes {
            let x = lo + (hi - lo) * k as f64 / (probes + 1) as f64;
            let emp = xs.partition_point(|&v| v <= x) as f64 / n as f64;
            let pde = if state == 0 { grid.u_at(t, x) } else { grid.v_at(t, x) }.unwrap();
            worst = worst.max((pde - emp).abs());
        }
    }
    worst
}

/// Sup distance between the last PDE snapshot and the stationary law mapped
/// onto the same unit grid.
pub fn pde_vs_stationary(p: &ModelParams, grid: &expma_lab::ctmc_filter::UVGrid) -> f64 {
    let law = expma_lab::ctmc_filter::stationary_law(p).unwrap();
    let k = grid.times.len() - 1;
    let mut worst: f64 = 0.0;
    for (j, &s) in grid.xi.iter().enumerate().take(grid.xi.len() - 1) {
        let z = law.from_unit(s);
        worst = worst.max((grid.u[k][j] - law.u_inf(z)).abs());
        worst = worst.max((grid.v[k][j] - law.v_inf(z)).abs());
    }
    worst
}

/// `filter_expectation(inf, .)` is nondecreasing and inside `[rho1, rho2]`
/// on `points` points across the effective range.
pub fn filter_monotone_bounded(p: &ModelParams, points: usize) -> bool {
    use expma_lab::ctmc_filter::{filter_expectation, FilterTime, StationaryFilter};
    let f = StationaryFilter::new(p).unwrap();
    let (lo, hi) = f.effective_range(4.0);
    let (r1, r2) = (f.law.rho1, f.law.rho2);
    let mut prev = f64::NEG_INFINITY;
    (0..points).all(|i| {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let e = filter_expectation(p, FilterTime::Infinite, x).unwrap();
        let ok = e >= prev - 1e-12 * (r2 - r1) && (r1..=r2).contains(&e);
        prev = prev.max(e);
        ok
    })
}
