//! Daughter distributions `b(x, y, z)`: the density of fragments of size `x`
//! produced when a particle of size `y` breaks after colliding with one of
//! size `z`.
//!
//! Every catalog family is independent of `z`; the argument is carried through
//! all signatures anyway. For a fixed parent size each family is either a power
//! law on `(0, y)` or piecewise constant, which [`Profile`] captures so that
//! moments and hat-function integrals can be evaluated in closed form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::quadrature::{gauss_kronrod, tanh_sinh};

pub const DEFAULT_P: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DaughterFamily {
    /// `b = (ν+2) x^ν / y^{ν+1}` on `(0, y)`, `ν ∈ (-1, 0]`.
    PowerLaw { nu: f64 },
    /// `b = 2/y` on `(0, y)` for every `y`.
    UniformBinary,
    /// `1` on `[0,1] ∪ [y-1,y]` when `y > 2`, `2/y` otherwise.
    KllUnitEnds,
    /// `y` on `[0,1/y] ∪ [y-1/y,y]` when `y > √2`, `2/y` otherwise.
    KllShrinkingEnds,
}

impl DaughterFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DaughterFamily::PowerLaw { .. } => "power_law",
            DaughterFamily::UniformBinary => "uniform_binary",
            DaughterFamily::KllUnitEnds => "kll_unit_ends",
            DaughterFamily::KllShrinkingEnds => "kll_shrinking_ends",
        }
    }
}

/// `b(·, y, z)` for one parent, in a form that admits exact integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `coeff · x^exponent` on `(0, upper)`.
    Power {
        coeff: f64,
        exponent: f64,
        upper: f64,
    },
    /// Constant `value` on each listed `[lo, hi]`; zero elsewhere.
    Pieces { pieces: [(f64, f64, f64); 2], len: usize },
}

impl Profile {
    fn pieces(&self) -> &[(f64, f64, f64)] {
        match self {
            Profile::Pieces { pieces, len } => &pieces[..*len],
            Profile::Power { .. } => &[],
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Profile::Power { upper, .. } => *upper,
            Profile::Pieces { .. } => self.pieces().iter().map(|p| p.1).fold(0.0, f64::max),
        }
    }

    /// `∫_lo^hi x^k b(x) dx` in closed form.
    ///
    /// For power profiles `k + exponent > -1` is required when `lo = 0`.
    pub fn moment_between(&self, k: f64, lo: f64, hi: f64) -> f64 {
        match *self {
            Profile::Power {
                coeff,
                exponent,
                upper,
            } => {
                let a = lo.max(0.0);
                let b = hi.min(upper);
                if b <= a {
                    return 0.0;
                }
                let q = k + exponent + 1.0;
                coeff * (b.powf(q) - a.powf(q)) / q
            }
            Profile::Pieces { .. } => {
                let q = k + 1.0;
                self.pieces()
                    .iter()
                    .map(|&(p_lo, p_hi, value)| {
                        let a = lo.max(p_lo);
                        let b = hi.min(p_hi);
                        if b <= a {
                            0.0
                        } else {
                            value * (b.powf(q) - a.powf(q)) / q
                        }
                    })
                    .sum()
            }
        }
    }

    /// `∫_lo^hi (c0 + c1 x) b(x) dx`.
    pub fn linear_between(&self, c0: f64, c1: f64, lo: f64, hi: f64) -> f64 {
        c0 * self.moment_between(0.0, lo, hi) + c1 * self.moment_between(1.0, lo, hi)
    }

    /// `∫_lo^hi φ(x) b(x) dx` by quadrature on each smooth piece of `b`.
    pub fn integrate_with<F: Fn(f64) -> f64>(
        &self,
        phi: F,
        lo: f64,
        hi: f64,
        rel_tol: f64,
    ) -> Result<f64> {
        match *self {
            Profile::Power {
                coeff,
                exponent,
                upper,
            } => {
                let a = lo.max(0.0);
                let b = hi.min(upper);
                if b <= a {
                    return Ok(0.0);
                }
                let est = tanh_sinh(|x| phi(x) * coeff * x.powf(exponent), a, b, rel_tol)?;
                Ok(est.value)
            }
            Profile::Pieces { .. } => {
                let mut total = 0.0;
                for &(p_lo, p_hi, value) in self.pieces() {
                    let a = lo.max(p_lo);
                    let b = hi.min(p_hi);
                    if b > a {
                        let est = gauss_kronrod(&phi, a, b, 0.0, rel_tol)?;
                        total += value * est.value;
                    }
                }
                Ok(total)
            }
        }
    }
}

fn single_piece(lo: f64, hi: f64, value: f64) -> Profile {
    Profile::Pieces {
        pieces: [(lo, hi, value), (0.0, 0.0, 0.0)],
        len: 1,
    }
}

fn two_pieces(a: (f64, f64), b: (f64, f64), value: f64) -> Profile {
    Profile::Pieces {
        pieces: [(a.0, a.1, value), (b.0, b.1, value)],
        len: 2,
    }
}

/// A validated daughter distribution with its analytic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaughterSpec {
    pub family: DaughterFamily,
    /// Bound on the expected fragment count.
    pub beta0: f64,
    /// Exponent of the `L^p` structural condition.
    pub p: f64,
    /// Constant of the `L^p` structural condition, valid on `(0, size_bound]`.
    pub bp: f64,
    /// Whether an exact fragment-sampling recipe is available.
    pub samplable: bool,
    /// Largest parent size the constants above are derived for.
    pub size_bound: f64,
}

impl DaughterSpec {
    pub fn new(family: DaughterFamily) -> Result<Self> {
        if let DaughterFamily::PowerLaw { nu } = family {
            if !(nu.is_finite() && nu > -1.0 && nu <= 0.0) {
                return Err(invalid("nu", format!("must lie in (-1, 0], got {nu}")));
            }
        }
        let beta0 = match family {
            DaughterFamily::PowerLaw { nu } => (nu + 2.0) / (nu + 1.0),
            _ => 2.0,
        };
        let mut spec = DaughterSpec {
            family,
            beta0,
            p: DEFAULT_P,
            bp: f64::INFINITY,
            samplable: matches!(family, DaughterFamily::UniformBinary),
            size_bound: f64::INFINITY,
        };
        spec.bp = spec.sharp_bp(spec.p).unwrap_or(f64::INFINITY);
        Ok(spec)
    }

    pub fn power_law(nu: f64) -> Result<Self> {
        Self::new(DaughterFamily::PowerLaw { nu })
    }

    pub fn uniform_binary() -> Self {
        Self::new(DaughterFamily::UniformBinary).expect("no parameters")
    }

    /// Restricts the parent sizes considered to `(0, size_bound]` and
    /// re-derives `B_p` for that range.
    pub fn with_size_bound(mut self, size_bound: f64) -> Result<Self> {
        require_positive("size_bound", size_bound)?;
        self.size_bound = size_bound;
        self.bp = self.sharp_bp(self.p).unwrap_or(f64::INFINITY);
        Ok(self)
    }

    pub fn with_p(mut self, p: f64) -> Result<Self> {
        if !(p > 1.0 && p < 2.0) {
            return Err(invalid("p", format!("must lie in (1, 2), got {p}")));
        }
        self.p = p;
        self.bp = self.sharp_bp(p).unwrap_or(f64::INFINITY);
        Ok(self)
    }

    pub fn with_bp(mut self, bp: f64) -> Result<Self> {
        require_positive("Bp", bp)?;
        self.bp = bp;
        Ok(self)
    }

    /// Overrides the fragment-count bound; must not be below the sharp value.
    pub fn with_beta0(mut self, beta0: f64) -> Result<Self> {
        let sharp = Self::new(self.family)?.beta0;
        if !(beta0 >= 2.0 && beta0 >= sharp) {
            return Err(invalid(
                "beta0",
                format!("must be >= max(2, {sharp}), got {beta0}"),
            ));
        }
        self.beta0 = beta0;
        Ok(self)
    }

    /// Whether `∫₀^y b dx` is the same for every parent size.
    pub fn has_constant_fragment_count(&self) -> bool {
        true
    }

    pub fn depends_on_partner(&self) -> bool {
        false
    }

    /// `sup_{0<y≤size_bound} 2 y^{p-1} ∫₀^y b^p dx` in closed form, or `None`
    /// when the integral diverges.
    pub fn sharp_bp(&self, p: f64) -> Option<f64> {
        let small = 2f64.powf(p + 1.0);
        match self.family {
            DaughterFamily::PowerLaw { nu } => {
                if nu * p <= -1.0 {
                    None
                } else {
                    Some(2.0 * (nu + 2.0).powf(p) / (nu * p + 1.0))
                }
            }
            DaughterFamily::UniformBinary => Some(small),
            DaughterFamily::KllUnitEnds => {
                Some(small.max(4.0 * self.size_bound.powf(p - 1.0)))
            }
            DaughterFamily::KllShrinkingEnds => {
                Some(small.max(4.0 * self.size_bound.powf(2.0 * p - 2.0)))
            }
        }
    }

    /// The density of fragments for parent size `y`.
    pub fn profile(&self, y: f64, _z: f64) -> Profile {
        match self.family {
            DaughterFamily::PowerLaw { nu } => Profile::Power {
                coeff: (nu + 2.0) / y.powf(nu + 1.0),
                exponent: nu,
                upper: y,
            },
            DaughterFamily::UniformBinary => single_piece(0.0, y, 2.0 / y),
            DaughterFamily::KllUnitEnds => {
                if y > 2.0 {
                    two_pieces((0.0, 1.0), (y - 1.0, y), 1.0)
                } else {
                    single_piece(0.0, y, 2.0 / y)
                }
            }
            DaughterFamily::KllShrinkingEnds => {
                if y > std::f64::consts::SQRT_2 {
                    two_pieces((0.0, 1.0 / y), (y - 1.0 / y, y), y)
                } else {
                    single_piece(0.0, y, 2.0 / y)
                }
            }
        }
    }

    pub fn eval_b(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        for (name, v) in [("x", x), ("y", y), ("z", z)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("b requires {name} > 0, got {v}")));
            }
        }
        if x > y {
            return Ok(0.0);
        }
        Ok(match self.profile(y, z) {
            Profile::Power {
                coeff, exponent, ..
            } => coeff * x.powf(exponent),
            prof @ Profile::Pieces { .. } => prof
                .pieces()
                .iter()
                .find(|&&(lo, hi, _)| x >= lo && x <= hi)
                .map_or(0.0, |p| p.2),
        })
    }

    /// `∫₀^y b(x, y, z) dx`, in closed form.
    pub fn fragment_count(&self, y: f64, z: f64) -> f64 {
        self.profile(y, z).moment_between(0.0, 0.0, y)
    }

    /// `∫₀^y φ(x) b(x, y, z) dx`. Piecewise-constant families are integrated
    /// piece by piece, power laws with endpoint-robust quadrature.
    pub fn integrate_against<F: Fn(f64) -> f64>(
        &self,
        phi: F,
        y: f64,
        z: f64,
        rel_tol: f64,
    ) -> Result<f64> {
        self.profile(y, z).integrate_with(phi, 0.0, y, rel_tol)
    }

    /// Local mass conservation `∫₀^y x b dx = y` over a sample grid.
    ///
    /// Power-law and uniform families use quadrature; the KLL families are
    /// integrated exactly piece by piece.
    pub fn check_lmc(&self, y_samples: &[f64], z_samples: &[f64], quad_tol: f64) -> Result<LmcReport> {
        require_positive("quad_tol", quad_tol)?;
        let mut report = LmcReport {
            passed: true,
            worst_rel_error: 0.0,
            worst_y: f64::NAN,
            worst_z: f64::NAN,
        };
        for &y in y_samples {
            for &z in z_samples {
                if !(y > 0.0 && z > 0.0) {
                    return Err(Error::Domain(format!("samples must be positive, got ({y}, {z})")));
                }
                let first_moment = match self.family {
                    DaughterFamily::KllUnitEnds | DaughterFamily::KllShrinkingEnds => {
                        self.profile(y, z).moment_between(1.0, 0.0, y)
                    }
                    _ => self.integrate_against(|x| x, y, z, quad_tol * 1e-3)?,
                };
                let rel = (first_moment / y - 1.0).abs();
                if !(rel <= report.worst_rel_error) {
                    report.worst_rel_error = rel;
                    report.worst_y = y;
                    report.worst_z = z;
                }
            }
        }
        report.passed = report.worst_rel_error <= quad_tol;
        Ok(report)
    }

    /// Fragment-count bound over a sample grid.
    pub fn check_nop(&self, y_samples: &[f64], z_samples: &[f64]) -> NopReport {
        let mut max_count = 0.0_f64;
        for &y in y_samples {
            for &z in z_samples {
                max_count = max_count.max(self.fragment_count(y, z));
            }
        }
        NopReport {
            passed: max_count <= self.beta0 * (1.0 + 1e-12),
            max_count,
            beta0: self.beta0,
        }
    }

    /// The `L^p` structural condition over a sample grid.
    pub fn check_p_condition(
        &self,
        p: f64,
        y_samples: &[f64],
        z_samples: &[f64],
    ) -> Result<PConditionReport> {
        if !(p > 1.0 && p < 2.0) {
            return Err(invalid("p", format!("must lie in (1, 2), got {p}")));
        }
        if let DaughterFamily::PowerLaw { nu } = self.family {
            if nu * p <= -1.0 {
                return Ok(PConditionReport::Unverifiable {
                    reason: format!("b^p is not integrable at the origin: nu*p = {} <= -1", nu * p),
                });
            }
        }
        let bound = if (p - self.p).abs() < f64::EPSILON {
            self.bp
        } else {
            self.sharp_bp(p).unwrap_or(f64::INFINITY)
        };
        let mut observed = 0.0_f64;
        let mut worst_y = f64::NAN;
        for &y in y_samples {
            for &z in z_samples {
                let integral = match self.profile(y, z) {
                    Profile::Power {
                        coeff,
                        exponent,
                        upper,
                    } => tanh_sinh(|x| (coeff * x.powf(exponent)).powf(p), 0.0, upper, 1e-12)?.value,
                    prof => prof
                        .pieces()
                        .iter()
                        .map(|&(lo, hi, v)| v.powf(p) * (hi - lo))
                        .sum(),
                };
                let scaled = 2.0 * y.powf(p - 1.0) * integral;
                if scaled > observed {
                    observed = scaled;
                    worst_y = y;
                }
            }
        }
        Ok(PConditionReport::Checked {
            passed: observed <= bound * (1.0 + 1e-9),
            bp_observed: observed,
            bp: bound,
            worst_y,
        })
    }

    /// Draws the fragments of one breakage event. The fragments sum to `y`
    /// exactly in floating point.
    pub fn sample_fragments<R: Rng + ?Sized>(&self, y: f64, _z: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !self.samplable {
            return Err(Error::Unsupported(format!(
                "no exact fragment sampler for daughter family {}",
                self.family.name()
            )));
        }
        match self.family {
            DaughterFamily::UniformBinary => Ok(binary_split(y, rng).to_vec()),
            _ => Err(Error::Unsupported(format!(
                "no exact fragment sampler for daughter family {}",
                self.family.name()
            ))),
        }
    }
}

/// Splits `y` into `{u, y-u}` with `u` uniform on `(0, y)`, arranged so that
/// both parts are exact differences and `u + (y-u) == y` in floating point.
pub(crate) fn binary_split<R: Rng + ?Sized>(y: f64, rng: &mut R) -> [f64; 2] {
    loop {
        let u = y * rng.random::<f64>();
        if u <= 0.0 || u >= y {
            continue;
        }
        // Sterbenz: the difference of two doubles within a factor 2 is exact
        let (small, large) = if u >= 0.5 * y {
            (y - u, u)
        } else {
            let large = y - u;
            (y - large, large)
        };
        if small > 0.0 {
            return [small, large];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmcReport {
    pub passed: bool,
    pub worst_rel_error: f64,
    pub worst_y: f64,
    pub worst_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NopReport {
    pub passed: bool,
    pub max_count: f64,
    pub beta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PConditionReport {
    Checked {
        passed: bool,
        bp_observed: f64,
        bp: f64,
        worst_y: f64,
    },
    Unverifiable {
        reason: String,
    },
}

impl PConditionReport {
    pub fn passed(&self) -> bool {
        matches!(self, PConditionReport::Checked { passed: true, .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kll_unit() -> DaughterSpec {
        DaughterSpec::new(DaughterFamily::KllUnitEnds).unwrap()
    }

    #[test]
    fn eval_examples() {
        let b = DaughterSpec::power_law(0.0).unwrap();
        assert_eq!(b.eval_b(0.5, 1.0, 3.0).unwrap(), 2.0);
        let b = DaughterSpec::uniform_binary();
        assert_eq!(b.eval_b(1.0, 4.0, 7.0).unwrap(), 0.5);
        assert_eq!(kll_unit().eval_b(1.5, 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(kll_unit().eval_b(2.5, 3.0, 1.0).unwrap(), 1.0);
        assert!(b.eval_b(0.0, 1.0, 1.0).is_err());
        assert!(b.eval_b(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn support_is_below_parent() {
        for b in [
            DaughterSpec::power_law(-0.3).unwrap(),
            DaughterSpec::uniform_binary(),
            kll_unit(),
            DaughterSpec::new(DaughterFamily::KllShrinkingEnds).unwrap(),
        ] {
            for &y in &[0.1, 1.0, 1.9, 3.0, 9.5] {
                assert_eq!(b.eval_b(y * 1.0001, y, 1.0).unwrap(), 0.0);
                assert_eq!(b.eval_b(y + 5.0, y, 1.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn lmc_examples() {
        // closed form ∫₀^y (ν+2) x^{ν+1} / y^{ν+1} dx = y
        let b = DaughterSpec::power_law(-0.5).unwrap();
        let r = b.check_lmc(&[2.0], &[1.0], 1e-10).unwrap();
        assert!(r.passed, "{r:?}");
        let r = DaughterSpec::uniform_binary().check_lmc(&[4.0], &[1.0], 1e-12).unwrap();
        assert!(r.passed);
        // ∫₀¹ x dx + ∫₂³ x dx = 0.5 + 2.5
        let first = kll_unit().profile(3.0, 1.0).moment_between(1.0, 0.0, 3.0);
        assert_eq!(first, 3.0);
    }

    #[test]
    fn fragment_count_examples() {
        assert!((DaughterSpec::power_law(0.0).unwrap().fragment_count(7.3, 1.0) - 2.0).abs() < 1e-14);
        assert!((DaughterSpec::power_law(-0.5).unwrap().fragment_count(0.3, 1.0) - 3.0).abs() < 1e-14);
        assert_eq!(kll_unit().fragment_count(5.0, 1.0), 2.0);
        assert_eq!(DaughterSpec::power_law(-0.5).unwrap().beta0, 3.0);
    }

    #[test]
    fn p_condition_examples() {
        // (ν+2)^p/(νp+1) · y^{1-p}, doubled and rescaled: 2^{2.5}
        let b = DaughterSpec::power_law(0.0).unwrap();
        match b.check_p_condition(1.5, &[0.3, 1.0, 7.0], &[1.0]).unwrap() {
            PConditionReport::Checked { passed, bp_observed, .. } => {
                assert!(passed);
                assert!((bp_observed - 2f64.powf(2.5)).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        match DaughterSpec::uniform_binary().check_p_condition(1.5, &[1.0], &[1.0]).unwrap() {
            PConditionReport::Checked { bp_observed, .. } => {
                assert!((bp_observed - 2f64.powf(2.5)).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
        // ∫₀¹ 1 + ∫₃⁴ 1 = 2, so 2 · 4^{1/2} · 2 = 8
        let b = kll_unit().with_size_bound(10.0).unwrap();
        match b.check_p_condition(1.5, &[4.0], &[1.0]).unwrap() {
            PConditionReport::Checked { passed, bp_observed, .. } => {
                assert!(passed);
                assert_eq!(bp_observed, 8.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn p_condition_divergence_is_flagged() {
        let b = DaughterSpec::power_law(-0.5).unwrap();
        assert!(b.check_p_condition(1.9, &[1.0], &[1.0]).unwrap().passed());
        let b = DaughterSpec::power_law(-0.6).unwrap();
        assert!(matches!(
            b.check_p_condition(1.9, &[1.0], &[1.0]).unwrap(),
            PConditionReport::Unverifiable { .. }
        ));
    }

    #[test]
    fn sampling_conserves_mass_exactly() {
        let b = DaughterSpec::uniform_binary();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frags = b.sample_fragments(2.0, 1.0, &mut rng).unwrap();
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0] + frags[1], 2.0);
        for _ in 0..100_000 {
            let y = 10.0 * rng.random::<f64>() + 1e-6;
            let [a, c] = binary_split(y, &mut rng);
            assert!(a > 0.0 && c > 0.0);
            assert_eq!(a + c, y);
        }
    }

    #[test]
    fn non_samplable_family_is_refused() {
        let b = DaughterSpec::power_law(-0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(b.sample_fragments(1.0, 1.0, &mut rng), Err(Error::Unsupported(_))));
    }

    #[test]
    fn sampled_fragment_density_is_flat() {
        // histogram oracle against the closed form 2/y at y = 1
        let b = DaughterSpec::uniform_binary();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let bins = 9;
        let (lo, hi) = (0.05, 0.95);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        let draws = 1_000_000;
        for _ in 0..draws {
            for f in b.sample_fragments(1.0, 1.0, &mut rng).unwrap() {
                if f > lo && f < hi {
                    counts[((f - lo) / width) as usize] += 1;
                }
            }
        }
        for c in counts {
            let density = c as f64 / (draws as f64 * width);
            assert!((density / 2.0 - 1.0).abs() < 0.01, "density {density}");
        }
    }

    #[test]
    fn beta0_override_must_not_undercut_sharp_value() {
        let b = DaughterSpec::power_law(-0.5).unwrap();
        assert!(b.with_beta0(2.5).is_err());
        assert_eq!(b.with_beta0(4.0).unwrap().beta0, 4.0);
    }
}
