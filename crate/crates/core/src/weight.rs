//! Candidate weights `g` and membership in the admissible class: `g > 0`,
//! `g(x)/x` non-decreasing, and the dissipativity gap
//! `g(y) - ∫₀^y g(x) b(x,y,z) dx ≥ θ g(y)`.

use serde::{Deserialize, Serialize};

use crate::daughter::{DaughterFamily, DaughterSpec};
use crate::error::{invalid, require_positive, Error, Result};

/// Relative tolerance of the sampled ratio-monotonicity check.
pub const MONOTONE_TOLERANCE: f64 = 1e-10;

/// Lower end of the default search interval for the dissipativity infimum.
pub const THETA_SEARCH_MIN: f64 = 1e-4;

const THETA_QUAD_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFamily {
    /// `x^α`
    Power { alpha: f64 },
    /// `x^α (1+x)^β`
    PowerShifted { alpha: f64, beta: f64 },
    /// `x^α e^{λx}`
    PowerExp { alpha: f64, lambda: f64 },
    /// `x^α (log(1+x))^γ`
    PowerLog { alpha: f64, gamma: f64 },
}

impl WeightFamily {
    pub fn alpha(&self) -> f64 {
        match *self {
            WeightFamily::Power { alpha }
            | WeightFamily::PowerShifted { alpha, .. }
            | WeightFamily::PowerExp { alpha, .. }
            | WeightFamily::PowerLog { alpha, .. } => alpha,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightFamily::Power { .. } => "power",
            WeightFamily::PowerShifted { .. } => "power_shifted",
            WeightFamily::PowerExp { .. } => "power_exp",
            WeightFamily::PowerLog { .. } => "power_log",
        }
    }

    /// Checks the family's own parameter constraints, including `α > 1`.
    pub fn validate(&self) -> Result<()> {
        let alpha = self.alpha();
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(invalid(
                "alpha",
                format!("admissible weights require alpha > 1, got {alpha}"),
            ));
        }
        match *self {
            WeightFamily::Power { .. } => Ok(()),
            WeightFamily::PowerShifted { beta, .. } => {
                if beta.is_finite() && beta >= 0.0 {
                    Ok(())
                } else {
                    Err(invalid("beta", format!("must be >= 0, got {beta}")))
                }
            }
            WeightFamily::PowerExp { lambda, .. } => require_positive("lambda", lambda),
            WeightFamily::PowerLog { gamma, .. } => require_positive("gamma", gamma),
        }
    }

    /// `g(x)`; the power-log family is continued by `0` at the origin.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightFamily::Power { alpha } => x.powf(alpha),
            WeightFamily::PowerShifted { alpha, beta } => x.powf(alpha) * (1.0 + x).powf(beta),
            WeightFamily::PowerExp { alpha, lambda } => x.powf(alpha) * (lambda * x).exp(),
            WeightFamily::PowerLog { alpha, gamma } => x.powf(alpha) * x.ln_1p().powf(gamma),
        }
    }

    /// True iff `g(x)/x` is non-decreasing along the ascending `samples`.
    pub fn check_ratio_monotone(&self, samples: &[f64]) -> bool {
        let mut prev = f64::NEG_INFINITY;
        for &x in samples {
            let r = self.eval(x) / x;
            if r < prev - MONOTONE_TOLERANCE * prev.abs() {
                return false;
            }
            prev = r;
        }
        true
    }
}

/// How the stored dissipativity constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    /// `(α-1)/(ν+α+1)` for power-law daughters.
    ClosedForm,
    /// Numerical infimum over `(0, size_bound]`, less a 1% margin.
    Numerical,
}

/// An admissible weight together with its dissipativity constant for a given
/// daughter distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub family: WeightFamily,
    pub theta: f64,
    pub theta_source: ThetaSource,
    /// Largest parent size over which `theta` was verified.
    pub size_bound: f64,
}

impl WeightSpec {
    /// Pairs `family` with `daughter`, verifying dissipativity on
    /// `(0, size_bound]`.
    pub fn admissible(family: WeightFamily, daughter: &DaughterSpec, size_bound: f64) -> Result<Self> {
        family.validate()?;
        require_positive("size_bound", size_bound)?;
        if let Some(theta) = closed_form_theta(family.alpha(), daughter) {
            return Ok(WeightSpec {
                family,
                theta,
                theta_source: ThetaSource::ClosedForm,
                size_bound,
            });
        }
        let est = estimate_theta_search(&family, daughter, size_bound)?;
        let theta = 0.99 * est.theta_hat;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Domain(format!(
                "weight {} is not dissipative for daughter {}: theta_hat = {} at y = {}",
                family.name(),
                daughter.family.name(),
                est.theta_hat,
                est.argmin_y
            )));
        }
        Ok(WeightSpec {
            family,
            theta,
            theta_source: ThetaSource::Numerical,
            size_bound,
        })
    }

    pub fn eval_g(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::Domain(format!("g requires x > 0, got {x}")));
        }
        Ok(self.family.eval(x))
    }
}

/// `θ_α = (α-1)/(ν+α+1)` for the power-law daughters (uniform binary is `ν = 0`).
pub fn closed_form_theta(alpha: f64, daughter: &DaughterSpec) -> Option<f64> {
    let nu = match daughter.family {
        DaughterFamily::PowerLaw { nu } => nu,
        DaughterFamily::UniformBinary => 0.0,
        _ => return None,
    };
    Some((alpha - 1.0) / (nu + alpha + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaEstimate {
    pub theta_hat: f64,
    pub argmin_y: f64,
    pub argmin_z: f64,
}

/// `1 - (1/g(y)) ∫₀^y g(x) b(x,y,z) dx` at one point.
pub fn dissipation_ratio(family: &WeightFamily, daughter: &DaughterSpec, y: f64, z: f64) -> Result<f64> {
    let integral = daughter.integrate_against(|x| family.eval(x), y, z, THETA_QUAD_TOL)?;
    Ok(1.0 - integral / family.eval(y))
}

/// Infimum of the dissipation ratio over the sample grid.
pub fn estimate_theta(
    family: &WeightFamily,
    daughter: &DaughterSpec,
    y_grid: &[f64],
    z_grid: &[f64],
) -> Result<ThetaEstimate> {
    let mut best = ThetaEstimate {
        theta_hat: f64::INFINITY,
        argmin_y: f64::NAN,
        argmin_z: f64::NAN,
    };
    for &y in y_grid {
        for &z in z_grid {
            if !(y > 0.0 && z > 0.0) {
                return Err(Error::Domain(format!("grid points must be positive, got ({y}, {z})")));
            }
            let r = dissipation_ratio(family, daughter, y, z)?;
            if r < best.theta_hat {
                best = ThetaEstimate {
                    theta_hat: r,
                    argmin_y: y,
                    argmin_z: z,
                };
            }
        }
    }
    Ok(best)
}

/// Two-stage search: 64 log-spaced points on `[1e-4, size_bound]`, then one
/// refinement of 64 points between the neighbours of the coarse minimiser.
pub fn estimate_theta_search(
    family: &WeightFamily,
    daughter: &DaughterSpec,
    size_bound: f64,
) -> Result<ThetaEstimate> {
    let coarse = log_grid(THETA_SEARCH_MIN, size_bound, 64);
    let z = [1.0];
    let first = estimate_theta(family, daughter, &coarse, &z)?;
    let idx = coarse
        .iter()
        .position(|&y| y == first.argmin_y)
        .unwrap_or(0);
    let lo = coarse[idx.saturating_sub(1)];
    let hi = coarse[(idx + 1).min(coarse.len() - 1)];
    if hi <= lo {
        return Ok(first);
    }
    let fine = log_grid(lo, hi, 64);
    let second = estimate_theta(family, daughter, &fine, &z)?;
    Ok(if second.theta_hat < first.theta_hat {
        second
    } else {
        first
    })
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k + 1 == count {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}
