//! Quadrature rules: adaptive Simpson, Gauss-Jacobi via Golub-Welsch, and a
//! composite rule for Beta-weighted integrals on `[0, 1]`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::special::gamma_fn;

/// Nodes and weights on `[-1, 1]` for the weight `(1 - x)^a (1 + x)^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `int_{-1}^{1} (1 - x)^a (1 + x)^b dx`.
fn jacobi_mass(a: f64, b: f64) -> Result<f64> {
    let two = 2f64.powf(a + b + 1.0);
    if a == 0.0 {
        return Ok(two / (b + 1.0));
    }
    if b == 0.0 {
        return Ok(two / (a + 1.0));
    }
    Ok(two * gamma_fn(a + 1.0)? * gamma_fn(b + 1.0)? / gamma_fn(a + b + 2.0)?)
}

/// `n`-point Gauss-Jacobi rule for exponents `a, b > -1`.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::invalid("n", "quadrature order must be positive"));
    }
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::invalid(
            "exponent",
            format!("Jacobi exponents must exceed -1, got ({a}, {b})"),
        ));
    }
    let ab = a + b;
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        jm[(k, k)] = diag;
        if k + 1 < n {
            let m = (k + 1) as f64;
            let off2 = if k == 0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let s = 2.0 * m + ab;
                4.0 * m * (m + a) * (m + b) * (m + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            let off = off2.sqrt();
            jm[(k, k + 1)] = off;
            jm[(k + 1, k)] = off;
        }
    }
    let mass = jacobi_mass(a, b)?;
    let eig = SymmetricEigen::new(jm);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            (eig.eigenvalues[j], mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

pub fn gauss_legendre(n: usize) -> GaussRule {
    gauss_jacobi(n, 0.0, 0.0).expect("Legendre rule parameters are valid")
}

/// Composite Gauss-Legendre over `[lo, hi]` with `panels` equal panels.
pub fn composite_legendre(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    panels: usize,
    rule: &GaussRule,
) -> f64 {
    let h = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + h * p as f64;
        let mid = a + 0.5 * h;
        let part: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * f(mid + 0.5 * h * x))
            .sum();
        total += 0.5 * h * part;
    }
    total
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(
    what: &'static str,
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut worst: f64 = 0.0;
    let v = simpson_step(&f, a, b, fa, fm, fb, whole, tol, max_depth, &mut worst);
    if worst > 0.0 {
        return Err(Error::QuadratureFailure {
            what,
            achieved: worst,
        });
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    worst: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    if depth == 0 || !diff.is_finite() {
        *worst = worst.max(diff.abs() / 15.0);
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst)
}

/// Rule for `int_0^1 f(s) s^(p-1) (1-s)^(q-1) ds` with `p, q > 0`.
///
/// The end panels absorb the endpoint powers into Gauss-Jacobi weights, so
/// `f` only has to be smooth; interior panels are plain Gauss-Legendre.
#[derive(Debug, Clone)]
pub struct BetaRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BetaRule {
    pub fn new(p: f64, q: f64, panels: usize, order: usize) -> Result<Self> {
        if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
            return Err(Error::invalid(
                "beta_exponent",
                format!("Beta exponents must be positive, got ({p}, {q})"),
            ));
        }
        let panels = panels.max(2);
        let h = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);

        let left = gauss_jacobi(order, 0.0, p - 1.0)?;
        let scale = (0.5 * h).powf(p);
        for (&x, &w) in left.nodes.iter().zip(&left.weights) {
            let s = 0.5 * h * (1.0 + x);
            nodes.push(s);
            weights.push(scale * w * (1.0 - s).powf(q - 1.0));
        }

        let legendre = gauss_legendre(order);
        for k in 1..panels - 1 {
            let mid = (k as f64 + 0.5) * h;
            for (&x, &w) in legendre.nodes.iter().zip(&legendre.weights) {
                let s = mid + 0.5 * h * x;
                nodes.push(s);
                weights.push(0.5 * h * w * s.powf(p - 1.0) * (1.0 - s).powf(q - 1.0));
            }
        }

        let right = gauss_jacobi(order, q - 1.0, 0.0)?;
        let scale = (0.5 * h).powf(q);
        for (&x, &w) in right.nodes.iter().zip(&right.weights) {
            let s = 1.0 - 0.5 * h * (1.0 - x);
            nodes.push(s);
            weights.push(scale * w * s.powf(p - 1.0));
        }
        Ok(BetaRule { nodes, weights })
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }

    /// Total weight, `B(p, q)` up to quadrature error.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::beta::beta;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(10);
        for k in 0..20u32 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((r.integrate(|x| x.powi(k as i32)) - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn jacobi_moments() {
        // int (1-x)^a (1+x)^b x dx = mass * (b - a) / (a + b + 2)
        for &(a, b) in &[(0.0, -0.5), (-0.7, 0.0), (0.3, 1.7), (0.0, 12.0)] {
            let r = gauss_jacobi(12, a, b).unwrap();
            let mass = jacobi_mass(a, b).unwrap();
            assert_relative_eq!(r.integrate(|_| 1.0), mass, max_relative = 1e-12);
            let m1 = r.integrate(|x| x);
            assert!((m1 - mass * (b - a) / (a + b + 2.0)).abs() < 1e-12 * mass);
        }
    }

    #[test]
    fn jacobi_rejects_bad_exponents() {
        assert!(gauss_jacobi(4, -1.0, 0.0).is_err());
        assert!(gauss_jacobi(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn beta_rule_mass_and_mean() {
        for &(p, q) in &[(0.5, 0.5), (0.2, 3.0), (2.0, 0.3), (1.0, 1.0), (7.5, 4.0)] {
            let r = BetaRule::new(p, q, 4, 24).unwrap();
            let b = beta(p, q);
            assert_relative_eq!(r.mass(), b, max_relative = 1e-11);
            assert_relative_eq!(r.integrate(|s| s), b * p / (p + q), max_relative = 1e-11);
        }
    }

    #[test]
    fn simpson_accuracy_and_failure() {
        let v = adaptive_simpson("sin", f64::sin, 0.0, std::f64::consts::PI, 1e-12, 40).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
        let err = adaptive_simpson("spike", |x: f64| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-12, 3)
            .unwrap_err();
        assert_eq!(err.code(), "quadrature_failure");
    }
}
