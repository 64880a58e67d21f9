//! Standard normal density and distribution function.

use std::f64::consts::FRAC_1_SQRT_2;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Φ(z), evaluated through `erfc` so that the lower tail keeps full relative precision.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// 1 − Φ(z).
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// E[(z − Z)_+^m] for standard normal Z and m ≤ 3.
pub fn norm_lower_partial_moment(m: u32, z: f64) -> f64 {
    if z == f64::INFINITY {
        return if m == 0 { 1.0 } else { f64::INFINITY };
    }
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    let cdf = norm_cdf(z);
    let pdf = norm_pdf(z);
    let v = match m {
        0 => cdf,
        1 => z * cdf + pdf,
        2 => (z * z + 1.0) * cdf + z * pdf,
        3 => (z * z * z + 3.0 * z) * cdf + (z * z + 2.0) * pdf,
        _ => unreachable!("partial moments are only provided up to order 3"),
    };
    // cancellation in the far left tail can leave tiny negative residue
    v.max(0.0)
}

/// E[(Z − z)_+^m] for standard normal Z.
#[inline]
pub fn norm_upper_partial_moment(m: u32, z: f64) -> f64 {
    norm_lower_partial_moment(m, -z)
}

pub fn factorial(m: u32) -> f64 {
    (1..=m).fold(1.0, |acc, i| acc * i as f64)
}
