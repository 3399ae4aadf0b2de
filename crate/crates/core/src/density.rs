//! Analytic initial densities `f^in`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::quadrature::gauss_kronrod;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitialDensity {
    /// `amplitude · e^{-rate x}`
    Exponential { amplitude: f64, rate: f64 },
    /// `height · 1_{(lo, hi)}(x)`
    Indicator { lo: f64, hi: f64, height: f64 },
    Zero,
}

impl InitialDensity {
    pub fn exponential() -> Self {
        InitialDensity::Exponential {
            amplitude: 1.0,
            rate: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialDensity::Exponential { amplitude, rate } => {
                require_positive("amplitude", amplitude)?;
                require_positive("rate", rate)
            }
            InitialDensity::Indicator { lo, hi, height } => {
                require_positive("height", height)?;
                if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                    return Err(invalid("lo/hi", format!("need 0 <= lo < hi, got ({lo}, {hi})")));
                }
                Ok(())
            }
            InitialDensity::Zero => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialDensity::Exponential { amplitude, rate } => amplitude * (-rate * x).exp(),
            InitialDensity::Indicator { lo, hi, height } => {
                if x > lo && x < hi {
                    height
                } else {
                    0.0
                }
            }
            InitialDensity::Zero => 0.0,
        }
    }

    /// Points inside which the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            InitialDensity::Indicator { lo, hi, .. } => vec![lo, hi],
            _ => Vec::new(),
        }
    }

    /// `∫_a^b f dx`, splitting at breakpoints.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        self.weighted_integral(|_| 1.0, a, b)
    }

    /// `∫_a^b x f dx`.
    pub fn first_moment(&self, a: f64, b: f64) -> Result<f64> {
        self.weighted_integral(|x| x, a, b)
    }

    pub fn weighted_integral<F: Fn(f64) -> f64>(&self, w: F, a: f64, b: f64) -> Result<f64> {
        if b <= a || matches!(self, InitialDensity::Zero) {
            return Ok(0.0);
        }
        let mut cuts = vec![a];
        cuts.extend(self.breakpoints().into_iter().filter(|&p| p > a && p < b));
        cuts.push(b);
        let mut total = 0.0;
        for w2 in cuts.windows(2) {
            let est = gauss_kronrod(|x| w(x) * self.eval(x), w2[0], w2[1], 1e-300, 1e-14)?;
            total += est.value;
        }
        Ok(total)
    }

    /// Draws one size from `f` restricted to `(a, b)`, normalised.
    pub fn sample<R: Rng + ?Sized>(&self, a: f64, b: f64, rng: &mut R) -> Result<f64> {
        let u: f64 = rng.random();
        match *self {
            InitialDensity::Exponential { rate, .. } => {
                // inverse CDF of the truncated exponential on (a, b)
                let span = -(-rate * (b - a)).exp_m1();
                let x = a - (-u * span).ln_1p() / rate;
                Ok(x.clamp(a, b))
            }
            InitialDensity::Indicator { lo, hi, .. } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return Err(Error::Domain("indicator support misses the sampling window".into()));
                }
                Ok(l + u * (h - l))
            }
            InitialDensity::Zero => Err(Error::Domain("zero density cannot be normalised".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_integrals() {
        let f = InitialDensity::exponential();
        let v = f.integral(1e-3, 10.0).unwrap();
        let exact = (-1e-3f64).exp() - (-10f64).exp();
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn indicator_integrals_split_at_jumps() {
        let f = InitialDensity::Indicator { lo: 1.0, hi: 2.0, height: 1.0 };
        assert!((f.integral(0.3, 5.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((f.first_moment(0.3, 5.0).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn samples_stay_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = InitialDensity::exponential();
        for _ in 0..10_000 {
            let x = f.sample(1e-3, 10.0, &mut rng).unwrap();
            assert!((1e-3..=10.0).contains(&x));
        }
        let f = InitialDensity::Indicator { lo: 1.0, hi: 2.0, height: 3.0 };
        for _ in 0..1000 {
            let x = f.sample(0.0, 10.0, &mut rng).unwrap();
            assert!(x > 1.0 - 1e-15 && x < 2.0);
        }
    }
}
