//! Standard-normal special functions and closed-form truncated Gaussian integrals.
//!
//! The integrals here are
//!
//! ```text
//! I1 = ∫_A^B exp(-a x² + b x + c) dx
//! I2 = ∫_A^B x exp(-a x² + b x + c) dx
//! ```
//!
//! with `a > 0` and either limit possibly infinite. Every cost formula in
//! [`crate::costs`] reduces to one of these two shapes.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// `1 / sqrt(2π)`
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Largest exponent accepted before `exp` is considered to overflow.
pub const MAX_EXPONENT: f64 = 700.0;

/// A point on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn as_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Affine map `scale * (x - shift)` with `scale > 0`; infinities are preserved.
    fn standardize(self, shift: f64, scale: f64) -> ExtReal {
        match self {
            ExtReal::Finite(x) => ExtReal::Finite(scale * (x - shift)),
            other => other,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtReal::PosInf
        } else if x == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(x)
        }
    }
}

/// Standard normal density φ(x).
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("std_normal_pdf argument"));
    }
    Ok(pdf(x))
}

/// Unchecked φ(x); returns 0 for infinite arguments.
#[inline]
pub(crate) fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function Φ(x), computed from `erfc` so that
/// the lower tail keeps full relative precision.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFinite("std_normal_cdf argument"));
    }
    Ok(cdf(x))
}

#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper-tail probability `1 - Φ(x)` without cancellation.
#[inline]
pub(crate) fn sf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Survival function `1 - Φ(x)`.
pub fn std_normal_sf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFinite("std_normal_sf argument"));
    }
    Ok(sf(x))
}

/// `Φ(hi) - Φ(lo)` evaluated on whichever tail keeps the two terms small,
/// so deep-tail intervals do not cancel to zero.
///
/// Returns 0 when `hi <= lo`.
pub fn cdf_difference(lo: ExtReal, hi: ExtReal) -> f64 {
    cdf_diff(lo.as_f64(), hi.as_f64())
}

#[inline]
pub(crate) fn cdf_diff(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    if lo >= 0.0 {
        // both in the upper half: difference of survival functions
        (sf(lo) - sf(hi)).max(0.0)
    } else if hi <= 0.0 {
        (cdf(hi) - cdf(lo)).max(0.0)
    } else {
        // straddles zero; both terms are O(1) so neither form cancels badly
        (1.0 - sf(hi) - cdf(lo)).max(0.0)
    }
}

/// Parameters of `exp(-a x² + b x + c)` integrated over `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianIntegralParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lower: ExtReal,
    pub upper: ExtReal,
}

impl GaussianIntegralParams {
    pub fn new(a: f64, b: f64, c: f64, lower: ExtReal, upper: ExtReal) -> Result<Self> {
        let p = Self {
            a,
            b,
            c,
            lower,
            upper,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::InvalidParams(format!(
                "quadratic coefficient must be positive and finite, got {}",
                self.a
            )));
        }
        if !self.b.is_finite() || !self.c.is_finite() {
            return Err(Error::NonFinite("Gaussian integral coefficient"));
        }
        match (self.lower, self.upper) {
            (ExtReal::Finite(lo), _) if !lo.is_finite() => {
                Err(Error::NonFinite("integration limit"))
            }
            (_, ExtReal::Finite(hi)) if !hi.is_finite() => {
                Err(Error::NonFinite("integration limit"))
            }
            (ExtReal::PosInf, _) | (_, ExtReal::NegInf) => Err(Error::InvalidParams(
                "lower limit must not be +inf and upper limit must not be -inf".into(),
            )),
            (ExtReal::Finite(lo), ExtReal::Finite(hi)) if lo > hi => Err(Error::InvalidParams(
                format!("integration limits out of order: {lo} > {hi}"),
            )),
            _ => Ok(()),
        }
    }

    /// Exponent of the completed square, `c + b²/(4a)`.
    fn peak_exponent(&self) -> f64 {
        self.c + self.b * self.b / (4.0 * self.a)
    }

    fn integrand_exponent(&self, x: f64) -> f64 {
        -self.a * x * x + self.b * x + self.c
    }

    fn boundary_value(&self, limit: ExtReal) -> f64 {
        match limit {
            ExtReal::Finite(x) => self.integrand_exponent(x).exp(),
            _ => 0.0,
        }
    }
}

/// `∫_A^B exp(-a x² + b x + c) dx` in closed form.
pub fn integral_i1(p: &GaussianIntegralParams) -> Result<f64> {
    p.validate()?;
    let peak = p.peak_exponent();
    if peak > MAX_EXPONENT {
        return Err(Error::Overflow { exponent: peak });
    }
    let centre = p.b / (2.0 * p.a);
    let scale = (2.0 * p.a).sqrt();
    let mass = cdf_difference(
        p.lower.standardize(centre, scale),
        p.upper.standardize(centre, scale),
    );
    Ok((PI / p.a).sqrt() * peak.exp() * mass)
}

/// `∫_A^B x exp(-a x² + b x + c) dx` in closed form, obtained from
/// [`integral_i1`] by integrating the derivative of the exponent.
pub fn integral_i2(p: &GaussianIntegralParams) -> Result<f64> {
    let i1 = integral_i1(p)?;
    let upper = p.boundary_value(p.upper);
    let lower = p.boundary_value(p.lower);
    Ok((p.b * i1 - (upper - lower)) / (2.0 * p.a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> GaussianIntegralParams {
        GaussianIntegralParams::new(a, b, c, lo.into(), hi.into()).unwrap()
    }

    #[test]
    fn pdf_values() {
        assert_eq!(std_normal_pdf(0.0).unwrap(), 0.398_942_280_401_432_7);
        assert_eq!(std_normal_pdf(1.0).unwrap(), std_normal_pdf(-1.0).unwrap());
        // mpmath, 40 digits: exp(-6.125)/sqrt(2π)
        let oracle = 0.000_872_682_695_045_760_065_6;
        let got = std_normal_pdf(3.5).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-15, "{got}");
        assert!(std_normal_pdf(f64::NAN).is_err());
        assert!(std_normal_pdf(f64::INFINITY).is_err());
    }

    #[test]
    fn cdf_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert_eq!(std_normal_cdf(f64::INFINITY).unwrap(), 1.0);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY).unwrap(), 0.0);
        assert!((std_normal_cdf(1.959963984540054).unwrap() - 0.975).abs() < 1e-12);
        assert!(std_normal_cdf(f64::NAN).is_err());
        // far tail keeps relative precision: Φ(-30) ≈ 4.906713927148187e-198
        let tail = std_normal_cdf(-30.0).unwrap();
        assert!(((tail - 4.906_713_927_148_187e-198) / tail).abs() < 1e-13);
    }

    #[test]
    fn cdf_difference_tails() {
        // both arguments deep in the upper tail, naive difference would be 0
        let d = cdf_difference(ExtReal::Finite(10.0), ExtReal::Finite(11.0));
        let naive = cdf(11.0) - cdf(10.0);
        assert_eq!(naive, 0.0);
        // mpmath: ncdf(11) - ncdf(10)
        let oracle = 7.619_661_958_203_076e-24;
        assert!(((d - oracle) / oracle).abs() < 1e-12, "{d}");
        assert_eq!(cdf_difference(ExtReal::Finite(2.0), ExtReal::Finite(2.0)), 0.0);
        assert_eq!(cdf_difference(ExtReal::Finite(3.0), ExtReal::Finite(2.0)), 0.0);
        assert_eq!(cdf_difference(ExtReal::NegInf, ExtReal::PosInf), 1.0);
    }

    #[test]
    fn i1_reference_values() {
        let full = integral_i1(&params(0.5, 0.0, 0.0, f64::NEG_INFINITY, f64::INFINITY)).unwrap();
        assert!((full - 2.506_628_274_631_000_2).abs() < 1e-15);
        let half = integral_i1(&params(1.0, 0.0, 0.0, 0.0, f64::INFINITY)).unwrap();
        assert!((half - PI.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn i2_reference_values() {
        let odd = integral_i2(&params(0.5, 0.0, 0.0, f64::NEG_INFINITY, f64::INFINITY)).unwrap();
        assert_eq!(odd, 0.0);
        let half = integral_i2(&params(0.5, 0.0, 0.0, 0.0, f64::INFINITY)).unwrap();
        assert!((half - 1.0).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let p = params(0.5, 40.0, 0.0, -1.0, 1.0);
        assert!(matches!(integral_i1(&p), Err(Error::Overflow { .. })));
        assert!(matches!(integral_i2(&p), Err(Error::Overflow { .. })));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GaussianIntegralParams::new(0.0, 0.0, 0.0, ExtReal::NegInf, ExtReal::PosInf).is_err());
        assert!(GaussianIntegralParams::new(-1.0, 0.0, 0.0, ExtReal::NegInf, ExtReal::PosInf).is_err());
        assert!(GaussianIntegralParams::new(1.0, 0.0, 0.0, 2.0.into(), 1.0.into()).is_err());
        assert!(GaussianIntegralParams::new(1.0, 0.0, 0.0, ExtReal::PosInf, ExtReal::PosInf).is_err());
    }

    #[test]
    fn empty_interval_is_zero() {
        let p = params(1.0, 0.3, 0.1, 0.7, 0.7);
        assert_eq!(integral_i1(&p).unwrap(), 0.0);
        assert_eq!(integral_i2(&p).unwrap(), 0.0);
    }
}
