//! Parametric Lorenz curve families, their Gini coefficients, and the link
//! transforms between natural parameters and unconstrained latent coordinates.
//!
//! | tag | curve | θ | latent u |
//! |-----|-------|---|----------|
//! | LN | Φ(Φ⁻¹(p) − σ) | σ | log σ |
//! | SM | I_z(1+1/α, γ−1/α), z = 1−(1−p)^{1/γ} | α, γ | log α, log γ |
//! | DA | I_z(κ+1/α, 1−1/α), z = p^{1/κ} | α, κ | log α, log κ |
//! | KA | p − ν p^ξ (1−p)^δ | ν, ξ, δ | log ν, logit ξ, logit δ |
//! | OR | p^α (1 − (1−p)^δ) | α, δ | log α, logit δ |
//! | RA | (1 − (1−p)^δ)^γ | γ, δ | log γ, logit δ |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_unit_graded, QuadratureRule};
use crate::scalar::{lit, Scalar};
use crate::special::{ln_gamma_pos, normal_cdf, normal_quantile, reg_inc_beta};

/// Largest parameter dimension over all families.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LorenzFamily {
    Lognormal,
    SinghMaddala,
    Dagum,
    Kakwani,
    Ortega,
    Rasche,
}

impl LorenzFamily {
    pub const ALL: [LorenzFamily; 6] = [
        LorenzFamily::Lognormal,
        LorenzFamily::SinghMaddala,
        LorenzFamily::Dagum,
        LorenzFamily::Kakwani,
        LorenzFamily::Ortega,
        LorenzFamily::Rasche,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            LorenzFamily::Lognormal => "LN",
            LorenzFamily::SinghMaddala => "SM",
            LorenzFamily::Dagum => "DA",
            LorenzFamily::Kakwani => "KA",
            LorenzFamily::Ortega => "OR",
            LorenzFamily::Rasche => "RA",
        }
    }

    /// Number of curve parameters.
    pub fn dim(self) -> usize {
        match self {
            LorenzFamily::Lognormal => 1,
            LorenzFamily::Kakwani => 3,
            _ => 2,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            LorenzFamily::Lognormal => &["sigma"],
            LorenzFamily::SinghMaddala => &["alpha", "gamma"],
            LorenzFamily::Dagum => &["alpha", "kappa"],
            LorenzFamily::Kakwani => &["nu", "xi", "delta"],
            LorenzFamily::Ortega => &["alpha", "delta"],
            LorenzFamily::Rasche => &["gamma", "delta"],
        }
    }

    /// Which coordinates live on the unit interval (logit link) rather than
    /// the positive half-line (log link).
    fn unit_interval(self, j: usize) -> bool {
        matches!(
            (self, j),
            (LorenzFamily::Kakwani, 1 | 2) | (LorenzFamily::Ortega, 1) | (LorenzFamily::Rasche, 1)
        )
    }

    /// Fixed starting point for per-period initial fits.
    pub fn default_start(self) -> ThetaVector<f64> {
        let v: &[f64] = match self {
            LorenzFamily::Lognormal => &[0.5],
            LorenzFamily::SinghMaddala => &[3.0, 1.5],
            LorenzFamily::Dagum => &[3.0, 0.6],
            LorenzFamily::Kakwani => &[0.6, 0.9, 0.6],
            LorenzFamily::Ortega => &[0.5, 0.6],
            LorenzFamily::Rasche => &[0.9, 0.7],
        };
        ThetaVector::new(self, v).expect("default start is valid")
    }
}

impl fmt::Display for LorenzFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LorenzFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LorenzFamily::ALL
            .into_iter()
            .find(|f| f.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown Lorenz family '{s}' (expected one of ln, sm, da, ka, or, ra)")))
    }
}

/// Natural-scale parameters of one Lorenz curve.
///
/// Constructed through [`ThetaVector::new`] the value satisfies every family
/// constraint. [`latent_to_theta`] only guarantees the box constraints, so
/// callers of that path should check [`ThetaVector::is_valid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaVector<T> {
    family: LorenzFamily,
    values: [T; MAX_DIM],
}

impl<T: Scalar> ThetaVector<T> {
    pub fn new(family: LorenzFamily, values: &[T]) -> Result<Self> {
        let theta = Self::from_slice(family, values)?;
        theta.validate()?;
        Ok(theta)
    }

    fn from_slice(family: LorenzFamily, values: &[T]) -> Result<Self> {
        if values.len() != family.dim() {
            return Err(Error::InvalidParameter {
                family: family.tag(),
                msg: format!("expected {} values, got {}", family.dim(), values.len()),
            });
        }
        let mut buf = [T::zero(); MAX_DIM];
        buf[..values.len()].copy_from_slice(values);
        Ok(Self { family, values: buf })
    }

    pub fn family(&self) -> LorenzFamily {
        self.family
    }

    pub fn values(&self) -> &[T] {
        &self.values[..self.family.dim()]
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Checks positivity, unit-interval, and finite-mean constraints.
    pub fn validate(&self) -> Result<()> {
        let fam = self.family;
        let bad = |msg: String| Err(Error::InvalidParameter { family: fam.tag(), msg });
        let v = self.values();
        let names = fam.param_names();
        for (j, &x) in v.iter().enumerate() {
            if !(x > T::zero() && x.is_finite()) {
                return bad(format!("{} = {x} must be positive", names[j]));
            }
            if fam.unit_interval(j) && x > T::one() {
                return bad(format!("{} = {x} must lie in (0, 1]", names[j]));
            }
        }
        match fam {
            LorenzFamily::SinghMaddala if v[0] * v[1] <= T::one() => {
                bad(format!("alpha * gamma = {} must exceed 1", v[0] * v[1]))
            }
            LorenzFamily::Dagum if v[0] <= T::one() => bad(format!("alpha = {} must exceed 1", v[0])),
            _ => Ok(()),
        }
    }
}

/// Unconstrained coordinates u = h(θ) of one Lorenz curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentVector<T> {
    family: LorenzFamily,
    values: [T; MAX_DIM],
}

impl<T: Scalar> LatentVector<T> {
    pub fn new(family: LorenzFamily, values: &[T]) -> Result<Self> {
        if values.len() != family.dim() {
            return Err(Error::InvalidParameter {
                family: family.tag(),
                msg: format!("expected {} latent values, got {}", family.dim(), values.len()),
            });
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter {
                family: family.tag(),
                msg: format!("latent coordinate {x} is not finite"),
            });
        }
        let mut buf = [T::zero(); MAX_DIM];
        buf[..values.len()].copy_from_slice(values);
        Ok(Self { family, values: buf })
    }

    pub fn family(&self) -> LorenzFamily {
        self.family
    }

    pub fn values(&self) -> &[T] {
        &self.values[..self.family.dim()]
    }
}

/// Forward link: log for positive parameters, logit for unit-interval ones.
///
/// Fails for unit-interval parameters equal to 1, where the logit is undefined.
pub fn theta_to_latent<T: Scalar>(theta: &ThetaVector<T>) -> Result<LatentVector<T>> {
    theta.validate()?;
    let fam = theta.family;
    let mut out = [T::zero(); MAX_DIM];
    for (j, &x) in theta.values().iter().enumerate() {
        out[j] = if fam.unit_interval(j) {
            if x >= T::one() {
                return Err(Error::InvalidParameter {
                    family: fam.tag(),
                    msg: format!("{} = 1 has no logit image", fam.param_names()[j]),
                });
            }
            (x / (T::one() - x)).ln()
        } else {
            x.ln()
        };
    }
    Ok(LatentVector { family: fam, values: out })
}

/// Inverse link. The result always satisfies the box constraints but may
/// violate the SM (αγ > 1) or DA (α > 1) finite-mean constraints.
pub fn latent_to_theta<T: Scalar>(u: &LatentVector<T>) -> ThetaVector<T> {
    latent_slice_to_theta(u.family, u.values())
}

pub(crate) fn latent_slice_to_theta<T: Scalar>(family: LorenzFamily, u: &[T]) -> ThetaVector<T> {
    let mut out = [T::zero(); MAX_DIM];
    for (j, &x) in u.iter().enumerate().take(family.dim()) {
        out[j] = if family.unit_interval(j) {
            (T::one() + (-x).exp()).recip()
        } else {
            x.exp()
        };
    }
    ThetaVector { family, values: out }
}

/// L(p | θ).
pub fn lorenz_value<T: Scalar>(theta: &ThetaVector<T>, p: T) -> Result<T> {
    theta.validate()?;
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::domain("lorenz_value", format!("p = {p} outside [0, 1]")));
    }
    eval_curve(theta, p, T::one() - p)
}

// `q` is 1 - p supplied by the caller so that tails can be evaluated without cancellation.
pub(crate) fn eval_curve<T: Scalar>(theta: &ThetaVector<T>, p: T, q: T) -> Result<T> {
    if p <= T::zero() {
        return Ok(T::zero());
    }
    if q <= T::zero() {
        return Ok(T::one());
    }
    let v = theta.values();
    let one = T::one();
    let value = match theta.family {
        LorenzFamily::Lognormal => {
            let z = if p <= lit(0.5) {
                normal_quantile(p)?
            } else {
                -normal_quantile(q)?
            };
            normal_cdf(z - v[0])
        }
        LorenzFamily::SinghMaddala => {
            let (alpha, gamma) = (v[0], v[1]);
            let z = -(q.ln() / gamma).exp_m1();
            reg_inc_beta(z.min(one), one + alpha.recip(), gamma - alpha.recip())?
        }
        LorenzFamily::Dagum => {
            let (alpha, kappa) = (v[0], v[1]);
            let z = (p.ln() / kappa).exp();
            reg_inc_beta(z.min(one), kappa + alpha.recip(), one - alpha.recip())?
        }
        LorenzFamily::Kakwani => p - v[0] * p.powf(v[1]) * q.powf(v[2]),
        LorenzFamily::Ortega => p.powf(v[0]) * -(v[1] * q.ln()).exp_m1(),
        LorenzFamily::Rasche => (-(v[1] * q.ln()).exp_m1()).powf(v[0]),
    };
    Ok(value)
}

/// Validates a population grid 0 = p_0 < p_1 < … < p_K = 1.
pub fn check_grid<T: Scalar>(p_grid: &[T]) -> Result<()> {
    if p_grid.len() < 2 {
        return Err(Error::InvalidGrid("need at least two cut points".into()));
    }
    if p_grid[0] != T::zero() || p_grid[p_grid.len() - 1] != T::one() {
        return Err(Error::InvalidGrid("grid must start at exactly 0 and end at exactly 1".into()));
    }
    if p_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Lorenz increments ΔL_k = L(p_k) − L(p_{k−1}) and whether all are positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments<T> {
    pub values: Vec<T>,
    pub valid: bool,
}

pub fn lorenz_increments<T: Scalar>(theta: &ThetaVector<T>, p_grid: &[T]) -> Result<Increments<T>> {
    check_grid(p_grid)?;
    theta.validate()?;
    let mut values = vec![T::zero(); p_grid.len() - 1];
    let valid = increments_into(theta, p_grid, &mut values)?;
    Ok(Increments { values, valid })
}

/// Fills `out` (length K) with increments; no validation of `theta` or the grid.
pub(crate) fn increments_into<T: Scalar>(theta: &ThetaVector<T>, p_grid: &[T], out: &mut [T]) -> Result<bool> {
    let mut prev = T::zero();
    let mut valid = true;
    let k_max = out.len();
    for (k, slot) in out.iter_mut().enumerate() {
        let cur = if k + 1 == k_max {
            T::one()
        } else {
            let p = p_grid[k + 1];
            eval_curve(theta, p, T::one() - p)?
        };
        let inc = cur - prev;
        if !(inc > T::zero()) {
            valid = false;
        }
        *slot = inc;
        prev = cur;
    }
    Ok(valid)
}

/// Gini coefficient. LN and SM use their closed forms; the other families
/// integrate the curve with the default 64-point rule.
pub fn gini<T: Scalar>(theta: &ThetaVector<T>) -> Result<T> {
    match gini_closed_form(theta)? {
        Some(g) => Ok(g),
        None => gini_quadrature(theta, &QuadratureRule::default_rule()),
    }
}

/// 1 − 2 ∫₀¹ L(p) dp using `rule` on the endpoint-graded unit interval.
pub fn gini_quadrature<T: Scalar>(theta: &ThetaVector<T>, rule: &QuadratureRule<T>) -> Result<T> {
    theta.validate()?;
    let mut failure = None;
    let area = integrate_unit_graded(
        |p, q| match eval_curve(theta, p, q) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                T::zero()
            }
        },
        rule,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(T::one() - lit::<T>(2.0) * area),
    }
}

/// Closed-form Gini where one exists (LN, SM); `None` for the other families.
pub fn gini_closed_form<T: Scalar>(theta: &ThetaVector<T>) -> Result<Option<T>> {
    theta.validate()?;
    let v = theta.values();
    Ok(match theta.family {
        LorenzFamily::Lognormal => Some(lit::<T>(2.0) * normal_cdf(v[0] / T::SQRT_2()) - T::one()),
        LorenzFamily::SinghMaddala => {
            let (alpha, gamma) = (v[0], v[1]);
            let ia = alpha.recip();
            let two: T = lit(2.0);
            let ln_ratio = ln_gamma_pos(gamma) + ln_gamma_pos(two * gamma - ia)
                - ln_gamma_pos(gamma - ia)
                - ln_gamma_pos(two * gamma);
            Some(T::one() - ln_ratio.exp())
        }
        _ => None,
    })
}

/// The gamma-ratio expression Γ(κ)Γ(2κ+1/α) / (Γ(κ+1/α)Γ(2κ)) for the Dagum family.
///
/// This ratio is always at least one and equals the Dagum Gini plus one; it is
/// kept only for comparison. [`gini`] integrates the curve instead.
pub fn dagum_gamma_ratio<T: Scalar>(theta: &ThetaVector<T>) -> Result<T> {
    theta.validate()?;
    if theta.family != LorenzFamily::Dagum {
        return Err(Error::InvalidParameter {
            family: theta.family.tag(),
            msg: "dagum_gamma_ratio requires the DA family".into(),
        });
    }
    let (alpha, kappa) = (theta.values[0], theta.values[1]);
    let ia = alpha.recip();
    let two: T = lit(2.0);
    Ok((ln_gamma_pos(kappa) + ln_gamma_pos(two * kappa + ia) - ln_gamma_pos(kappa + ia) - ln_gamma_pos(two * kappa)).exp())
}
