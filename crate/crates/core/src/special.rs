//! Gaussian density and probability helpers.

use std::f64::consts::{PI, SQRT_2};

/// Density of `N(0, var)` at `x`.
pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Derivative of [`normal_pdf`] in `x`.
pub fn normal_pdf_deriv(x: f64, var: f64) -> f64 {
    -x / var * normal_pdf(x, var)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    normal_pdf(z, 1.0)
}

/// `Phi(a) - Phi(b)` for the standard normal law, accurate in both tails.
pub fn std_normal_mass(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        0.5 * (libm::erfc(b / SQRT_2) - libm::erfc(a / SQRT_2))
    } else if a <= 0.0 {
        0.5 * (libm::erfc(-a / SQRT_2) - libm::erfc(-b / SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(a / SQRT_2) - 0.5 * libm::erfc(-b / SQRT_2)
    }
}
