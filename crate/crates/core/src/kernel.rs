//! Product-type collision kernels `a(x, y) = A₀ ω(x) ω(y)`.
//!
//! `ω` is stored as a single function with a branch at `x = 1`: the small-size
//! factor `ω₀` applies on `(0, 1]` and the large-size factor `ω_∞` on
//! `(1, ∞)`. Families I–VII are continuous at 1 and use one closed form on
//! both sides. Family VIII keeps its indicator structure: the kernel vanishes
//! when one particle is below 1 and the other above.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};

/// Relative tolerance for the sampled growth and monotonicity checks.
pub const CATALOG_TOLERANCE: f64 = 1e-10;

/// The eight catalog families, labelled I–VIII.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum KernelFamily {
    /// I: `ω(x) = x^ℓ`
    #[serde(rename = "I")]
    PowerLaw,
    /// II: `ω(x) = x^ℓ (1+x)^β`
    #[serde(rename = "II")]
    PowerLawShifted { beta: f64 },
    /// III: `ω(x) = x^ℓ e^{γx}`
    #[serde(rename = "III")]
    PowerLawExp { gamma: f64 },
    /// IV: `ω(x) = x^ℓ (log(1+x))^γ`
    #[serde(rename = "IV")]
    PowerLawLog { gamma: f64 },
    /// V: `ω(x) = x^ℓ e^{γ x^ν}`
    #[serde(rename = "V")]
    StretchedExp { gamma: f64, nu: f64 },
    /// VI: `ω(x) = x^ℓ / (1+x)^μ`, `ℓ > μ`
    #[serde(rename = "VI")]
    RationalDamped { mu: f64 },
    /// VII: `ω(x) = x^ℓ (2 - e^{-x})`
    #[serde(rename = "VII")]
    SaturatingExp,
    /// VIII: `x^ℓ` on `(0,1]`, `x^p` on `[1,∞)`, mixed pairs excluded.
    #[serde(rename = "VIII")]
    PiecewiseSplit { p: f64 },
}

impl KernelFamily {
    pub fn label(&self) -> &'static str {
        match self {
            KernelFamily::PowerLaw => "I",
            KernelFamily::PowerLawShifted { .. } => "II",
            KernelFamily::PowerLawExp { .. } => "III",
            KernelFamily::PowerLawLog { .. } => "IV",
            KernelFamily::StretchedExp { .. } => "V",
            KernelFamily::RationalDamped { .. } => "VI",
            KernelFamily::SaturatingExp => "VII",
            KernelFamily::PiecewiseSplit { .. } => "VIII",
        }
    }
}

/// Small-size growth regime selected by `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `ℓ < 1/2`: only a local-in-time bound on the particle number.
    SubLinear,
    /// `ℓ ≥ 1/2`: mass conservation controls the particle number globally.
    SuperLinear,
}

pub fn classify_regime(ell: f64) -> Result<Regime> {
    if !(ell.is_finite() && ell > 0.0) {
        return Err(Error::Domain(format!("ell must be positive, got {ell}")));
    }
    Ok(if ell < 0.5 {
        Regime::SubLinear
    } else {
        Regime::SuperLinear
    })
}

/// A validated collision kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub a0: f64,
    pub a1: f64,
    pub ell: f64,
    /// Truncation size; `None` disables truncation.
    pub n: Option<f64>,
}

impl KernelSpec {
    /// Builds a kernel with `A₁` set to the smallest constant satisfying
    /// `ω₀(x) ≤ A₁ x^ℓ` on `(0, 1)`.
    pub fn new(family: KernelFamily, a0: f64, ell: f64, n: Option<f64>) -> Result<Self> {
        require_positive("A0", a0)?;
        require_positive("ell", ell)?;
        if let Some(n) = n {
            require_positive("n", n)?;
        }
        match family {
            KernelFamily::PowerLaw | KernelFamily::SaturatingExp => {}
            KernelFamily::PowerLawShifted { beta } => {
                if !(beta.is_finite() && beta >= 0.0) {
                    return Err(invalid("beta", format!("must be >= 0, got {beta}")));
                }
            }
            KernelFamily::PowerLawExp { gamma } | KernelFamily::PowerLawLog { gamma } => {
                require_positive("gamma", gamma)?;
            }
            KernelFamily::StretchedExp { gamma, nu } => {
                require_positive("gamma", gamma)?;
                require_positive("nu", nu)?;
            }
            KernelFamily::RationalDamped { mu } => {
                require_positive("mu", mu)?;
                if ell <= mu {
                    return Err(invalid(
                        "mu",
                        format!("family VI requires ell > mu, got ell = {ell}, mu = {mu}"),
                    ));
                }
            }
            KernelFamily::PiecewiseSplit { p } => {
                require_positive("p", p)?;
                if p <= ell {
                    return Err(invalid(
                        "p",
                        format!("family VIII requires p > ell, got p = {p}, ell = {ell}"),
                    ));
                }
            }
        }
        let mut spec = KernelSpec {
            family,
            a0,
            a1: 1.0,
            ell,
            n,
        };
        spec.a1 = spec.sharp_a1();
        Ok(spec)
    }

    /// Overrides the small-size growth constant.
    pub fn with_a1(mut self, a1: f64) -> Result<Self> {
        require_positive("A1", a1)?;
        self.a1 = a1;
        Ok(self)
    }

    pub fn with_truncation(mut self, n: Option<f64>) -> Result<Self> {
        if let Some(n) = n {
            require_positive("n", n)?;
        }
        self.n = n;
        Ok(self)
    }

    /// `sup_{x ∈ (0,1)} ω₀(x) / x^ℓ` in closed form.
    pub fn sharp_a1(&self) -> f64 {
        match self.family {
            KernelFamily::PowerLaw | KernelFamily::PiecewiseSplit { .. } => 1.0,
            KernelFamily::PowerLawShifted { beta } => 2f64.powf(beta),
            KernelFamily::PowerLawExp { gamma } | KernelFamily::StretchedExp { gamma, .. } => {
                gamma.exp()
            }
            KernelFamily::PowerLawLog { gamma } => std::f64::consts::LN_2.powf(gamma),
            // (1+x)^{-μ} is largest as x → 0
            KernelFamily::RationalDamped { .. } => 1.0,
            KernelFamily::SaturatingExp => 2.0 - (-1f64).exp(),
        }
    }

    /// Whether `a(x, y) = A₀ ω(x) ω(y)` holds on all of `(0, ∞)²`.
    pub fn is_product(&self) -> bool {
        !matches!(self.family, KernelFamily::PiecewiseSplit { .. })
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self.ell).expect("ell validated at construction")
    }

    pub fn eval_omega(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::Domain(format!("omega requires x > 0, got {x}")));
        }
        Ok(self.omega_unchecked(x))
    }

    pub(crate) fn omega_unchecked(&self, x: f64) -> f64 {
        let base = x.powf(self.ell);
        match self.family {
            KernelFamily::PowerLaw => base,
            KernelFamily::PowerLawShifted { beta } => base * (1.0 + x).powf(beta),
            KernelFamily::PowerLawExp { gamma } => base * (gamma * x).exp(),
            KernelFamily::PowerLawLog { gamma } => base * x.ln_1p().powf(gamma),
            KernelFamily::StretchedExp { gamma, nu } => base * (gamma * x.powf(nu)).exp(),
            KernelFamily::RationalDamped { mu } => base / (1.0 + x).powf(mu),
            KernelFamily::SaturatingExp => base * (2.0 - (-x).exp()),
            KernelFamily::PiecewiseSplit { p } => {
                if x <= 1.0 {
                    base
                } else {
                    x.powf(p)
                }
            }
        }
    }

    /// `ω` with truncation applied: zero for `x ≥ n`.
    pub(crate) fn omega_truncated(&self, x: f64) -> f64 {
        match self.n {
            Some(n) if x >= n => 0.0,
            _ => self.omega_unchecked(x),
        }
    }

    pub fn eval_kernel(&self, x: f64, y: f64) -> Result<f64> {
        if !(x.is_finite() && x > 0.0 && y.is_finite() && y > 0.0) {
            return Err(Error::Domain(format!(
                "kernel requires x, y > 0, got ({x}, {y})"
            )));
        }
        Ok(self.kernel_unchecked(x, y))
    }

    pub(crate) fn kernel_unchecked(&self, x: f64, y: f64) -> f64 {
        if let Some(n) = self.n {
            if x >= n || y >= n {
                return 0.0;
            }
        }
        if let KernelFamily::PiecewiseSplit { .. } = self.family {
            let both_small = x <= 1.0 && y <= 1.0;
            let both_large = x >= 1.0 && y >= 1.0;
            if !(both_small || both_large) {
                return 0.0;
            }
        }
        self.a0 * (self.omega_unchecked(x) * self.omega_unchecked(y))
    }

    /// Samples `ω₀(x) / (A₁ x^ℓ)` on a log-spaced grid of `(0, 1)`.
    pub fn verify_growth_bound(&self, sample_count: usize) -> Result<GrowthReport> {
        if sample_count == 0 {
            return Err(invalid("sample_count", "must be at least 1"));
        }
        let mut worst_ratio = f64::NEG_INFINITY;
        let mut worst_x = f64::NAN;
        for x in log_samples_unit_interval(sample_count) {
            let ratio = self.omega_unchecked(x) / (self.a1 * x.powf(self.ell));
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_x = x;
            }
        }
        Ok(GrowthReport {
            holds: worst_ratio <= 1.0 + CATALOG_TOLERANCE,
            worst_ratio,
            worst_x,
        })
    }

    /// Checks that `ω` is non-negative and non-decreasing on the sorted samples.
    pub fn check_monotone(&self, samples: &[f64]) -> bool {
        let mut prev = 0.0_f64;
        for &x in samples {
            let w = self.omega_unchecked(x);
            if !(w >= 0.0) || w < prev * (1.0 - CATALOG_TOLERANCE) {
                return false;
            }
            prev = w;
        }
        true
    }
}

/// Outcome of [`KernelSpec::verify_growth_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReport {
    pub holds: bool,
    pub worst_ratio: f64,
    pub worst_x: f64,
}

/// `count` log-spaced points in `[1e-8, 1)`, ascending.
pub(crate) fn log_samples_unit_interval(count: usize) -> impl Iterator<Item = f64> {
    let lo = 1e-8_f64.ln();
    (0..count).map(move |k| (lo * (1.0 - k as f64 / count as f64)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_families() -> Vec<KernelSpec> {
        let fams = [
            (KernelFamily::PowerLaw, 0.7),
            (KernelFamily::PowerLawShifted { beta: 1.5 }, 0.4),
            (KernelFamily::PowerLawExp { gamma: 0.3 }, 1.0),
            (KernelFamily::PowerLawLog { gamma: 2.0 }, 1.2),
            (KernelFamily::StretchedExp { gamma: 0.5, nu: 0.5 }, 0.25),
            (KernelFamily::RationalDamped { mu: 0.5 }, 1.0),
            (KernelFamily::SaturatingExp, 0.6),
            (KernelFamily::PiecewiseSplit { p: 2.0 }, 1.0),
        ];
        fams.iter()
            .map(|&(f, ell)| KernelSpec::new(f, 1.3, ell, None).unwrap())
            .collect()
    }

    #[test]
    fn power_law_values() {
        let k = KernelSpec::new(KernelFamily::PowerLaw, 1.0, 1.0, None).unwrap();
        assert_eq!(k.eval_omega(1.0).unwrap(), 1.0);
        let k = KernelSpec::new(KernelFamily::PowerLaw, 2.0, 0.5, None).unwrap();
        assert_eq!(k.eval_omega(4.0).unwrap(), 2.0);
        assert!((k.eval_kernel(4.0, 9.0).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn saturating_exp_small_x_slope() {
        // series oracle: x(2 - e^{-x}) = x(1 + x - x²/2 + ...) so ω(x)/x → 1
        let k = KernelSpec::new(KernelFamily::SaturatingExp, 1.0, 1.0, None).unwrap();
        for &x in &[1e-4, 1e-6, 1e-8] {
            let ratio = k.eval_omega(x).unwrap() / x;
            let series = 1.0 + x - x * x / 2.0;
            assert!((ratio - series).abs() < 1e-12);
        }
    }

    #[test]
    fn piecewise_split_mixed_region_vanishes() {
        let k = KernelSpec::new(KernelFamily::PiecewiseSplit { p: 2.0 }, 1.0, 1.0, None).unwrap();
        assert_eq!(k.eval_kernel(0.5, 2.0).unwrap(), 0.0);
        assert_eq!(k.eval_kernel(2.0, 0.5).unwrap(), 0.0);
        assert_eq!(k.eval_kernel(2.0, 3.0).unwrap(), 36.0);
        assert_eq!(k.eval_kernel(0.5, 0.5).unwrap(), 0.25);
    }

    #[test]
    fn regime_split() {
        assert_eq!(classify_regime(0.25).unwrap(), Regime::SubLinear);
        assert_eq!(classify_regime(1.0).unwrap(), Regime::SuperLinear);
        assert_eq!(classify_regime(0.5).unwrap(), Regime::SuperLinear);
        assert!(classify_regime(0.0).is_err());
        assert!(classify_regime(-1.0).is_err());
    }

    #[test]
    fn growth_bound_examples() {
        let k = KernelSpec::new(KernelFamily::PowerLaw, 1.0, 0.8, None).unwrap();
        let r = k.verify_growth_bound(200).unwrap();
        assert!(r.holds);
        assert!((r.worst_ratio - 1.0).abs() < 1e-14);

        // x(1+x) ≤ 2x on (0,1)
        let k = KernelSpec::new(KernelFamily::PowerLawShifted { beta: 1.0 }, 1.0, 1.0, None)
            .unwrap()
            .with_a1(2.0)
            .unwrap();
        assert!(k.verify_growth_bound(200).unwrap().holds);
        // x e^x ≤ e·x on (0,1)
        let k = KernelSpec::new(KernelFamily::PowerLawExp { gamma: 1.0 }, 1.0, 1.0, None)
            .unwrap()
            .with_a1(std::f64::consts::E)
            .unwrap();
        assert!(k.verify_growth_bound(200).unwrap().holds);
        // a constant below the sharp one must fail
        let k = k.with_a1(2.0).unwrap();
        assert!(!k.verify_growth_bound(200).unwrap().holds);
    }

    #[test]
    fn sharp_a1_holds_for_every_family() {
        for k in all_families() {
            let r = k.verify_growth_bound(400).unwrap();
            assert!(r.holds, "{:?}: {:?}", k.family, r);
            // the sharp constant is attained in the limit, so sampling gets close to 1
            assert!(r.worst_ratio > 0.9, "{:?}: {}", k.family, r.worst_ratio);
        }
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(KernelSpec::new(KernelFamily::RationalDamped { mu: 1.0 }, 1.0, 1.0, None).is_err());
        assert!(KernelSpec::new(KernelFamily::PiecewiseSplit { p: 0.5 }, 1.0, 1.0, None).is_err());
        assert!(KernelSpec::new(KernelFamily::PowerLaw, 0.0, 1.0, None).is_err());
        assert!(KernelSpec::new(KernelFamily::PowerLaw, 1.0, -0.1, None).is_err());
        assert!(KernelSpec::new(KernelFamily::PowerLawShifted { beta: -1.0 }, 1.0, 1.0, None).is_err());
        let k = KernelSpec::new(KernelFamily::PowerLaw, 1.0, 1.0, None).unwrap();
        assert!(k.eval_omega(0.0).is_err());
        assert!(k.eval_kernel(1.0, -2.0).is_err());
    }

    #[test]
    fn truncation_zeroes_large_arguments() {
        let k = KernelSpec::new(KernelFamily::PowerLaw, 1.0, 1.0, Some(10.0)).unwrap();
        assert_eq!(k.eval_kernel(10.0, 1.0).unwrap(), 0.0);
        assert_eq!(k.eval_kernel(1.0, 12.0).unwrap(), 0.0);
        assert_eq!(k.eval_kernel(9.0, 1.0).unwrap(), 9.0);
    }

    #[test]
    fn family_iv_accepts_small_ell() {
        let k = KernelSpec::new(KernelFamily::PowerLawLog { gamma: 1.0 }, 1.0, 0.3, None).unwrap();
        assert_eq!(k.regime(), Regime::SubLinear);
    }

    #[test]
    fn every_family_is_monotone() {
        let xs: Vec<f64> = (0..2000).map(|k| 1e-6 * (1e10f64).powf(k as f64 / 1999.0)).collect();
        for k in all_families() {
            assert!(k.check_monotone(&xs), "{:?}", k.family);
        }
    }
}
