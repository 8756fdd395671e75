//! Per-lag curve `g_n(t) = α(t)·e^{-M_n(t)/2}` and a finite-difference
//! estimate of its curvature, used by the convexity audit.

use serde::{Deserialize, Serialize};

use super::mills::{mills_terms, INV_SQRT_2PI};

/// Class-level constants that, together with n, determine `g_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassConstants {
    pub cv: f64,
    /// Effective deadline `D - d`, seconds.
    pub slack: f64,
    /// `ρ_n` for the lag in question.
    pub rho_n: f64,
}

impl ClassConstants {
    /// `M_n(t) = ((D - d + n)·C_v·t + (D - d))² / ρ_n`.
    pub fn exponent(&self, t: f64, n: usize) -> f64 {
        let lin = (self.slack + n as f64) * self.cv * t + self.slack;
        lin * lin / self.rho_n
    }

    /// `M_n'(t)`.
    pub fn exponent_slope(&self, t: f64, n: usize) -> f64 {
        let a = (self.slack + n as f64) * self.cv;
        2.0 * a * (a * t + self.slack) / self.rho_n
    }

    /// `M_n''(t)`.
    pub fn exponent_curvature(&self, n: usize) -> f64 {
        let a = (self.slack + n as f64) * self.cv;
        2.0 * a * a / self.rho_n
    }
}

/// `ln g_n(t)`. Accepts slightly negative `t` so stencils can straddle zero.
pub fn log_g(t: f64, n: usize, k: &ClassConstants) -> f64 {
    (k.cv * INV_SQRT_2PI).ln() + mills_terms(t).complement.ln() - 0.5 * k.exponent(t, n)
}

/// Central-difference estimate of `g_n''(t) / g_n(t)`.
///
/// The stencil works on ratios `g(t ± h)/g(t)` formed in log space, so the
/// result stays finite where `g` itself underflows. `ln g` can be large, and
/// its rounding is amplified by `1/h²`, so the step keeps `h·|g'/g|` near
/// 1e-2 and a Richardson step over `h` and `2h` cancels the `h²` error.
///
/// # Panics
/// If `t` is smaller than twice the step.
pub fn g_second_derivative(t: f64, n: usize, k: &ClassConstants) -> f64 {
    let h = stencil_step(t, n, k);
    assert!(t >= 2.0 * h, "t = {t} is inside the stencil half-width {}", 2.0 * h);
    let center = log_g(t, n, k);
    let second = |h: f64| {
        let up = (log_g(t + h, n, k) - center).exp();
        let down = (log_g(t - h, n, k) - center).exp();
        (up - 2.0 + down) / (h * h)
    };
    (4.0 * second(h) - second(2.0 * h)) / 3.0
}

/// Half-width used by [`g_second_derivative`] at `t`.
pub fn stencil_step(t: f64, n: usize, k: &ClassConstants) -> f64 {
    let slope = 0.5 * k.exponent_slope(t, n).abs() + t + 1.0;
    5e-3 / slope
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_matches_analytic_curvature() {
        let k = ClassConstants { cv: 0.3, slack: 1.0, rho_n: 5.0 * 0.09 };
        let n = 5;
        for &t in &[0.1, 0.5, 1.0, 4.0, 10.0] {
            let m = mills_terms(t);
            let m1 = k.exponent_slope(t, n);
            let m2 = k.exponent_curvature(n);
            let exact = m.d2_alpha_rel - m.dlog_alpha * m1 + 0.25 * m1 * m1 - 0.5 * m2;
            let fd = g_second_derivative(t, n, &k);
            assert!((fd - exact).abs() <= 1e-7 * exact.abs().max(1.0), "t={t}: {fd} vs {exact}");
        }
    }
}
