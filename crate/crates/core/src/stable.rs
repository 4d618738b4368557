//! Univariate symmetric stable and Fréchet primitives.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Stability index restricted to the open interval (0, 2).
///
/// The Gaussian endpoint 2 is excluded: every routine in this crate relies on
/// heavy tails, and several formulas (the tail constant, the Fréchet limit)
/// degenerate there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableIndex(f64);

impl StableIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "stability index must lie strictly between 0 and 2, got {alpha}"
            )));
        }
        Ok(StableIndex(alpha))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// One standard-exponential draw by inversion, strictly positive.
pub(crate) fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -u.ln();
        }
    }
}

/// One draw from the symmetric alpha-stable law with characteristic function
/// exp(-|scale * theta|^alpha).
///
/// Polar method of Chambers, Mallows and Stuck, specialized to the symmetric
/// case.  At alpha = 1 the second factor is identically one and the draw
/// reduces to scale * tan(U).
pub fn sample_sas<R: Rng + ?Sized>(alpha: StableIndex, scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stable scale must be finite and nonnegative, got {scale}"
        )));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let a = alpha.get();
    let u = FRAC_PI_2 * (2.0 * rng.random::<f64>() - 1.0);
    let w = exp1(rng);
    let x = (a * u).sin() / u.cos().powf(1.0 / a)
        * ((((1.0 - a) * u).cos()) / w).powf((1.0 - a) / a);
    Ok(scale * x)
}

/// The stable tail constant: the reciprocal of the sine integral
/// int_0^inf x^(-alpha) sin x dx.
///
/// Away from alpha = 1 this equals (1 - alpha) / (Gamma(2 - alpha) cos(pi
/// alpha / 2)); the apparent singularity at 1 is removable with value 2/pi,
/// and we switch to that branch in a narrow window to avoid 0/0.
pub fn stable_tail_constant(alpha: StableIndex) -> f64 {
    let a = alpha.get();
    if (a - 1.0).abs() < 1e-9 {
        return 2.0 / PI;
    }
    (1.0 - a) / (gamma(2.0 - a) * (PI * a / 2.0).cos())
}

/// Fréchet law on (0, inf) with distribution function
/// exp(-(z / scale)^(-alpha)).
#[derive(Debug, Clone, Copy)]
pub struct FrechetLaw {
    alpha: StableIndex,
    scale: f64,
}

impl FrechetLaw {
    pub fn new(alpha: StableIndex, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Fréchet scale must be finite and positive, got {scale}"
            )));
        }
        Ok(FrechetLaw { alpha, scale })
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            (-(z / self.scale).powf(-self.alpha.get())).exp()
        }
    }

    /// Inverse distribution function on the open interval (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile level must lie strictly between 0 and 1, got {p}"
            )));
        }
        Ok(self.scale * (-p.ln()).powf(-1.0 / self.alpha.get()))
    }
}

/// First `count` arrival times of a unit-rate Poisson process, strictly
/// increasing.  `count = 0` yields an empty vector.
pub fn poisson_arrivals<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    let mut arrivals = Vec::with_capacity(count);
    let mut t = 0.0;
    for _ in 0..count {
        t += exp1(rng);
        arrivals.push(t);
    }
    arrivals
}
