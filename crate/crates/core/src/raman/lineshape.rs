//! Intermediate-broadening line shape: a Lorentzian convolved with a
//! Gaussian, evaluated by composite Simpson quadrature.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Number of Simpson intervals across ±`SPAN_SIGMA`·σ. Must be even.
const INTERVALS: usize = 2048;
const SPAN_SIGMA: f64 = 8.0;

/// Normalized Gaussian ⊗ Lorentzian profile pair evaluated at `x - c` and
/// `x + c`, returning `V(x - c) - V(x + c)`.
///
/// `sigma` is the Gaussian standard deviation and `hwhm` the Lorentzian half
/// width, both in the same unit as `x`.
pub(crate) fn antisymmetric_voigt(x: f64, c: f64, sigma: f64, hwhm: f64) -> f64 {
    let a = -SPAN_SIGMA * sigma;
    let h = 2.0 * SPAN_SIGMA * sigma / INTERVALS as f64;
    let g_norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let l_norm = hwhm / PI;
    let h2 = hwhm * hwhm;
    let inv_two_var = 0.5 / (sigma * sigma);

    let mut acc = 0.0;
    for k in 0..=INTERVALS {
        let t = a + h * k as f64;
        let w = if k == 0 || k == INTERVALS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let g = (-t * t * inv_two_var).exp();
        let dm = x - c - t;
        let dp = x + c - t;
        acc += w * g * (1.0 / (dm * dm + h2) - 1.0 / (dp * dp + h2));
    }
    acc * h / 3.0 * g_norm * l_norm
}

/// Gaussian standard deviation for a mode's Gaussian width parameter.
#[inline]
pub(crate) fn sigma_from_width(gw: f64) -> f64 {
    gw * 0.5 * FRAC_1_SQRT_2
}
