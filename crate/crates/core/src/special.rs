//! Special functions used by the Lorenz families and the Dirichlet density.
//!
//! Everything here is a pure function of its arguments and generic over [`Scalar`].

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Inputs closer than this to 0 or 1 are snapped to the boundary by [`reg_inc_beta`].
pub const INC_BETA_BOUNDARY: f64 = 1e-15;

const MAX_CF_ITER: usize = 1000;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::domain("ln_gamma", format!("x = {x} must be positive and finite")));
    }
    Ok(ln_gamma_pos(x))
}

/// [`ln_gamma`] without the domain check; callers guarantee `x > 0`.
pub(crate) fn ln_gamma_pos<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x == one || x == lit(2.0) {
        return T::zero();
    }
    if x < lit(0.5) {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma_pos(one - x);
    }
    let x = x - one;
    let mut acc: T = lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + lit::<T>(c) / (x + lit(i as f64));
    }
    let t = x + lit(LANCZOS_G + 0.5);
    let half_ln_two_pi: T = lit(0.918_938_533_204_672_8);
    half_ln_two_pi + (x + lit(0.5)) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::domain("digamma", format!("x = {x} must be positive and finite")));
    }
    Ok(digamma_pos(x))
}

pub(crate) fn digamma_pos<T: Scalar>(mut x: T) -> T {
    let mut shift = T::zero();
    while x < lit(10.0) {
        shift = shift - x.recip();
        x = x + T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv2
        * (lit::<T>(1.0 / 12.0)
            - inv2
                * (lit::<T>(1.0 / 120.0)
                    - inv2
                        * (lit::<T>(1.0 / 252.0)
                            - inv2 * (lit::<T>(1.0 / 240.0) - inv2 * lit(1.0 / 132.0)))));
    shift + x.ln() - lit::<T>(0.5) * inv - series
}

/// Trigamma ψ'(x) for `x > 0`.
pub fn trigamma<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::domain("trigamma", format!("x = {x} must be positive and finite")));
    }
    Ok(trigamma_pos(x))
}

pub(crate) fn trigamma_pos<T: Scalar>(mut x: T) -> T {
    let mut shift = T::zero();
    while x < lit(10.0) {
        shift = shift + (x * x).recip();
        x = x + T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let tail = inv2
        * inv
        * (lit::<T>(1.0 / 6.0)
            - inv2
                * (lit::<T>(1.0 / 30.0)
                    - inv2
                        * (lit::<T>(1.0 / 42.0)
                            - inv2 * (lit::<T>(1.0 / 30.0) - inv2 * lit(5.0 / 66.0)))));
    shift + inv + lit::<T>(0.5) * inv2 + tail
}

/// ln B(a, b).
pub fn ln_beta<T: Scalar>(a: T, b: T) -> Result<T> {
    Ok(ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?)
}

/// Regularized incomplete beta function I_z(a, b) = B_z(a, b) / B(a, b).
///
/// Evaluated with the modified Lentz continued fraction, switching to the
/// complementary fraction `1 - I_{1-z}(b, a)` when `z > (a + 1) / (a + b + 2)`.
/// Arguments within [`INC_BETA_BOUNDARY`] of 0 or 1 return the exact boundary value.
pub fn reg_inc_beta<T: Scalar>(z: T, a: T, b: T) -> Result<T> {
    if !(a > T::zero() && a.is_finite() && b > T::zero() && b.is_finite()) {
        return Err(Error::domain("reg_inc_beta", format!("shape parameters a = {a}, b = {b} must be positive")));
    }
    if !(z >= T::zero() && z <= T::one()) {
        return Err(Error::domain("reg_inc_beta", format!("z = {z} outside [0, 1]")));
    }
    let edge: T = lit(INC_BETA_BOUNDARY);
    if z < edge {
        return Ok(T::zero());
    }
    if z > T::one() - edge {
        return Ok(T::one());
    }
    let ln_front = a * z.ln() + b * (-z).ln_1p() - ln_beta_pos(a, b);
    let front = ln_front.exp();
    if z < (a + T::one()) / (a + b + lit(2.0)) {
        let cf = beta_cf(z, a, b)?;
        Ok((front * cf / a).min(T::one()))
    } else {
        let cf = beta_cf(T::one() - z, b, a)?;
        Ok((T::one() - front * cf / b).max(T::zero()))
    }
}

fn ln_beta_pos<T: Scalar>(a: T, b: T) -> T {
    ln_gamma_pos(a) + ln_gamma_pos(b) - ln_gamma_pos(a + b)
}

fn beta_cf<T: Scalar>(z: T, a: T, b: T) -> Result<T> {
    let tiny: T = lit::<T>(1e-300).max(T::min_positive_value());
    let eps = T::epsilon();
    let one = T::one();
    let two: T = lit(2.0);
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let guard = |v: T| if v.abs() < tiny { tiny } else { v };

    let mut c = one;
    let mut d = guard(one - qab * z / qap).recip();
    let mut h = d;
    for m in 1..=MAX_CF_ITER {
        let m = lit::<T>(m as f64);
        let m2 = two * m;
        let aa = m * (b - m) * z / ((qam + m2) * (a + m2));
        d = guard(one + aa * d).recip();
        c = guard(one + aa / c);
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2));
        d = guard(one + aa * d).recip();
        c = guard(one + aa / c);
        let delta = d * c;
        h = h * delta;
        if (delta - one).abs() <= eps {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence {
        func: "reg_inc_beta",
        iterations: MAX_CF_ITER,
    })
}

/// Regularized lower incomplete gamma P(a, x) for `a > 0`, `x >= 0`.
pub fn reg_lower_gamma<T: Scalar>(a: T, x: T) -> Result<T> {
    let (p, _) = inc_gamma_pair(a, x)?;
    Ok(p)
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn reg_upper_gamma<T: Scalar>(a: T, x: T) -> Result<T> {
    let (_, q) = inc_gamma_pair(a, x)?;
    Ok(q)
}

// Returns (P, Q), each computed directly on its own numerically stable side.
fn inc_gamma_pair<T: Scalar>(a: T, x: T) -> Result<(T, T)> {
    if !(a > T::zero() && a.is_finite()) || !(x >= T::zero()) {
        return Err(Error::domain("incomplete gamma", format!("a = {a}, x = {x}")));
    }
    if x == T::zero() {
        return Ok((T::zero(), T::one()));
    }
    if x.is_infinite() {
        return Ok((T::one(), T::zero()));
    }
    let ln_front = -x + a * x.ln() - ln_gamma_pos(a);
    if x < a + T::one() {
        let p = (gamma_series(a, x)? + ln_front).exp();
        Ok((p, T::one() - p))
    } else {
        let q = gamma_cf(a, x)? * ln_front.exp();
        Ok((T::one() - q, q))
    }
}

// ln of the series sum Σ x^n / (a (a+1) ... (a+n)).
fn gamma_series<T: Scalar>(a: T, x: T) -> Result<T> {
    let mut ap = a;
    let mut del = a.recip();
    let mut sum = del;
    for _ in 0..MAX_CF_ITER {
        ap = ap + T::one();
        del = del * x / ap;
        sum = sum + del;
        if del.abs() < sum.abs() * T::epsilon() {
            return Ok(sum.ln());
        }
    }
    Err(Error::NoConvergence {
        func: "incomplete gamma series",
        iterations: MAX_CF_ITER,
    })
}

fn gamma_cf<T: Scalar>(a: T, x: T) -> Result<T> {
    let tiny: T = lit::<T>(1e-300).max(T::min_positive_value());
    let guard = |v: T| if v.abs() < tiny { tiny } else { v };
    let one = T::one();
    let two: T = lit(2.0);
    let mut b = x + one - a;
    let mut c = tiny.recip();
    let mut d = b.recip();
    let mut h = d;
    for i in 1..=MAX_CF_ITER {
        let i = lit::<T>(i as f64);
        let an = -i * (i - a);
        b = b + two;
        d = guard(an * d + b).recip();
        c = guard(b + an / c);
        let delta = d * c;
        h = h * delta;
        if (delta - one).abs() <= T::epsilon() {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence {
        func: "incomplete gamma fraction",
        iterations: MAX_CF_ITER,
    })
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let half: T = lit(0.5);
    let h = x * x * half;
    // Φ(x) = ½ ± ½ P(½, x²/2); the incomplete gamma routine never fails for these arguments.
    let (p, q) = inc_gamma_pair(half, h).unwrap_or((T::one(), T::zero()));
    if x < T::zero() {
        if h < lit(1.5) {
            half - half * p
        } else {
            half * q
        }
    } else if h < lit(1.5) {
        half + half * p
    } else {
        T::one() - half * q
    }
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

/// Standard normal quantile Φ⁻¹(p) for `p` strictly inside (0, 1).
///
/// Rational initial guess refined by Halley steps against [`normal_cdf`].
pub fn normal_quantile<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::domain("normal_quantile", format!("p = {p} must lie in (0, 1)")));
    }
    let pf = p.as_f64();
    let mut x = lit::<T>(acklam(pf));
    let sqrt_two_pi: T = lit(2.506_628_274_631_000_5);
    let half: T = lit(0.5);
    for _ in 0..3 {
        let err = normal_cdf(x) - p;
        let u = err * sqrt_two_pi * (half * x * x).exp();
        let step = u / (T::one() + half * x * u);
        x = x - step;
        if step.abs() <= T::epsilon() * x.abs().max(T::one()) {
            break;
        }
    }
    Ok(x)
}

fn acklam(p: f64) -> f64 {
    const P_LOW: f64 = 0.024_25;
    let (a, b, c, d) = (&ACKLAM_A, &ACKLAM_B, &ACKLAM_C, &ACKLAM_D);
    let tail = |q: f64| {
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (-p).ln_1p()).sqrt())
    }
}
