//! Gamma function and Gaussian helpers.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Largest argument accepted by [`gamma_fn`].
pub const GAMMA_MAX_ARG: f64 = 60.0;

/// `Gamma(x)` for `x` in `(0, 60]`, Lanczos approximation.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= GAMMA_MAX_ARG) {
        return Err(Error::Domain {
            function: "gamma_fn",
            value: x,
        });
    }
    if x < 0.5 {
        // Shift up so the series is used where it is most accurate.
        return Ok(lanczos(x + 1.0) / x);
    }
    Ok(lanczos(x))
}

fn lanczos(x: f64) -> f64 {
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    // Split the power to avoid overflow near the top of the domain.
    let half = t.powf(0.5 * (x + 0.5));
    (2.0 * std::f64::consts::PI).sqrt() * half * half * (-t).exp() * acc
}

/// Standard normal c.d.f.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gaussian with given mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn pdf(&self, x: f64) -> f64 {
        norm_pdf((x - self.mean) / self.sd) / self.sd
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        norm_cdf((x - self.mean) / self.sd)
    }

    /// `P(lo < X <= hi)`, computed from the tail nearer to the interval.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        let a = (lo - self.mean) / self.sd;
        let b = (hi - self.mean) / self.sd;
        if a > 0.0 {
            norm_cdf(-a) - norm_cdf(-b)
        } else {
            norm_cdf(b) - norm_cdf(a)
        }
    }
}
