//! One-dimensional quadrature used by the catalog validators and the initial
//! projection.
//!
//! Two rules are provided:
//!
//! * [`gauss_kronrod`]: globally adaptive 7/15-point Gauss–Kronrod, for smooth
//!   integrands on bounded intervals.
//! * [`tanh_sinh`]: double-exponential quadrature, for integrands with
//!   integrable algebraic singularities at either endpoint (e.g. `x^ν` with
//!   `ν ∈ (-1, 0)` at the origin). Abscissae are generated from their distance
//!   to the nearest endpoint so that points close to the ends keep full
//!   relative precision.

use crate::error::{Error, Result};

/// Result of a quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4096;

fn kronrod_segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut kronrod = WGK[7] * f_center;
    let mut gauss = WG[3] * f_center;
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (G7/K15) integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate falls below `max(abs_tol, rel_tol·|I|)`.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = kronrod_segment(&f, lo, hi);
    // (lo, hi, value, error)
    let mut segments = vec![(lo, hi, v, e)];
    let mut total = v;
    let mut total_err = e;
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Quadrature {
                lo,
                hi,
                estimate: total,
                error: total_err,
            });
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                lo,
                hi,
                estimate: total,
                error: total_err,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty segment list");
        let (s_lo, s_hi, s_v, s_e) = segments.swap_remove(worst);
        let mid = 0.5 * (s_lo + s_hi);
        if mid <= s_lo || mid >= s_hi {
            // interval exhausted at machine resolution; accept as is
            segments.push((s_lo, s_hi, s_v, s_e));
            break;
        }
        let (v1, e1) = kronrod_segment(&f, s_lo, mid);
        let (v2, e2) = kronrod_segment(&f, mid, s_hi);
        total += v1 + v2 - s_v;
        total_err += e1 + e2 - s_e;
        segments.push((s_lo, mid, v1, e1));
        segments.push((mid, s_hi, v2, e2));
    }
    // re-sum to shed accumulated cancellation from the running updates
    let value: f64 = segments.iter().map(|s| s.2).sum();
    let error: f64 = segments.iter().map(|s| s.3).sum();
    Ok(Estimate {
        value: sign * value,
        error,
    })
}

const TANH_SINH_MAX_LEVEL: u32 = 12;
const TANH_SINH_T_MAX: f64 = 6.0;

/// Tanh–sinh quadrature of `f` over the finite interval `[a, b]`.
///
/// `f` is never evaluated at the endpoints themselves. Convergence is declared
/// when two successive step halvings agree to `rel_tol` (relative to the
/// estimate, with an absolute floor of `1e-300`).
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let half = 0.5 * (hi - lo);
    let center = 0.5 * (lo + hi);
    let pi_2 = std::f64::consts::FRAC_PI_2;

    // Contribution of the symmetric abscissa pair at parameter t > 0.
    let pair = |t: f64| -> f64 {
        let u = pi_2 * t.sinh();
        let cosh_u = u.cosh();
        // distance of the abscissa from the nearest endpoint
        let dist = half * (-u).exp() / cosh_u;
        let weight = half * pi_2 * t.cosh() / (cosh_u * cosh_u);
        if dist <= 0.0 || weight == 0.0 {
            return 0.0;
        }
        let left = lo + dist;
        let right = hi - dist;
        let mut s = 0.0;
        if left > lo && left < hi {
            s += f(left);
        }
        if right > lo && right < hi {
            s += f(right);
        }
        weight * s
    };

    let mut h = 1.0_f64;
    let mut sum = half * pi_2 * f(center);
    let mut k = 1;
    while (k as f64) * h <= TANH_SINH_T_MAX {
        sum += pair(k as f64 * h);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 1..=TANH_SINH_MAX_LEVEL {
        h *= 0.5;
        // new points sit at odd multiples of the halved step
        let mut k = 1;
        while (k as f64) * h <= TANH_SINH_T_MAX {
            sum += pair(k as f64 * h);
            k += 2;
        }
        let next = sum * h;
        let diff = (next - estimate).abs();
        estimate = next;
        if !estimate.is_finite() {
            break;
        }
        if diff <= rel_tol * estimate.abs().max(1e-300) {
            return Ok(Estimate {
                value: sign * estimate,
                error: diff,
            });
        }
    }
    Err(Error::Quadrature {
        lo,
        hi,
        estimate,
        error: f64::NAN,
    })
}

/// Correctly rounded sum of a slice of `f64` (Shewchuk's exact partials).
///
/// If the multiset of real values being summed is unchanged, the result is
/// bitwise identical regardless of order.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // round the partials to the nearest double, handling the half-way case
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}
