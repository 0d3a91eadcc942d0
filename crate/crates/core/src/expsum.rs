//! Finite sums `sum_k c_k exp(-r_k t)`.
//!
//! Every closed-form moment in the crate is such a sum, and so are their
//! products; time integrals over `[0, T]` then follow term by term.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpSum {
    terms: Vec<(f64, f64)>,
}

impl ExpSum {
    pub fn zero() -> Self {
        ExpSum { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        ExpSum::term(c, 0.0)
    }

    /// `c exp(-rate t)`.
    pub fn term(c: f64, rate: f64) -> Self {
        ExpSum {
            terms: vec![(c, rate)],
        }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut s = ExpSum::zero();
        for (c, r) in terms {
            s.push(c, r);
        }
        s
    }

    fn push(&mut self, c: f64, rate: f64) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.1 == rate) {
            t.0 += c;
        } else {
            self.terms.push((c, rate));
        }
    }

    /// `(coefficient, rate)` pairs.
    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    pub fn coefficient(&self, rate: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.1 == rate)
            .map(|t| t.0)
            .sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(c, r)| c * (-r * t).exp()).sum()
    }

    /// Limit as `t -> inf` (the zero-rate coefficient); rates are assumed nonnegative.
    pub fn limit(&self) -> f64 {
        self.coefficient(0.0)
    }

    /// `int_0^T` of the sum.
    pub fn integral(&self, horizon: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, r)| c * integral_of_exp(r, horizon))
            .sum()
    }

    pub fn scale(&self, k: f64) -> Self {
        ExpSum {
            terms: self.terms.iter().map(|&(c, r)| (k * c, r)).collect(),
        }
    }
}

/// `int_0^T exp(-r t) dt`, stable for small `r T`.
pub fn integral_of_exp(rate: f64, horizon: f64) -> f64 {
    if rate == 0.0 {
        horizon
    } else {
        -(-rate * horizon).exp_m1() / rate
    }
}

impl Add for &ExpSum {
    type Output = ExpSum;
    fn add(self, rhs: &ExpSum) -> ExpSum {
        let mut out = self.clone();
        for &(c, r) in &rhs.terms {
            out.push(c, r);
        }
        out
    }
}

impl Add for ExpSum {
    type Output = ExpSum;
    fn add(self, rhs: ExpSum) -> ExpSum {
        &self + &rhs
    }
}

impl Neg for &ExpSum {
    type Output = ExpSum;
    fn neg(self) -> ExpSum {
        self.scale(-1.0)
    }
}

impl Sub for &ExpSum {
    type Output = ExpSum;
    fn sub(self, rhs: &ExpSum) -> ExpSum {
        self + &(-rhs)
    }
}

impl Sub for ExpSum {
    type Output = ExpSum;
    fn sub(self, rhs: ExpSum) -> ExpSum {
        &self - &rhs
    }
}

impl Mul for &ExpSum {
    type Output = ExpSum;
    fn mul(self, rhs: &ExpSum) -> ExpSum {
        let mut out = ExpSum::zero();
        for &(c1, r1) in &self.terms {
            for &(c2, r2) in &rhs.terms {
                out.push(c1 * c2, r1 + r2);
            }
        }
        out
    }
}

impl Mul for ExpSum {
    type Output = ExpSum;
    fn mul(self, rhs: ExpSum) -> ExpSum {
        &self * &rhs
    }
}
