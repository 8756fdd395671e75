//! Numerical audit of the convexity argument for `λ·P_L(λ, μ)`.
//!
//! With `t = (μ/λ - 1)/C_v`, each lag contributes `g_n(t) = α(t)e^{-M_n(t)/2}`
//! and `λ·P_L` is the perspective of `max_n g_n`. The audit evaluates, on a
//! grid of `(t, n, C_v, D - d)`:
//! - the Mills-ratio sandwich and the bracket it implies for `α`;
//! - the reciprocal bound `C_v/(√(2π)α) ≥ ((t + √(t² + 4))/2)² ≥ t² + 1`;
//! - the closed forms of `α'` and `α''` against finite differences;
//! - the closed form of `g_n''` against a log-space stencil;
//! - the bracket `n·C_v² ≤ ρ_n ≤ n²·C_v²`;
//! - the exponent bound `M_n'²/4 - M_n''/2 ≥ t² - 1` (reported, not gating);
//! - `g_n'' ≥ 0`, midpoint convexity of `λ·P_L`, and the perspective identity.
//!
//! Checks involving `1/t` skip `t = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quad::mills_by_quadrature;
use crate::loss::{
    alpha_bounds, g_second_derivative, loss_probability, mills_tail, mills_tail_bounds, mills_terms, normalized_rho,
    ClassConstants, LossModel, QueueSpec, SearchConfig, WorkloadStats, INV_SQRT_2PI,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditGrid {
    pub t_max: f64,
    pub t_step: f64,
    pub n_max: usize,
    pub cvs: Vec<f64>,
    pub slacks: Vec<f64>,
    /// Random pairs per (C_v, D - d) for the midpoint and perspective checks.
    pub samples: usize,
    pub seed: u64,
}

impl Default for AuditGrid {
    fn default() -> Self {
        Self {
            t_max: 10.0,
            t_step: 0.1,
            n_max: 50,
            cvs: vec![0.1, 0.3, 1.0],
            slacks: vec![1.0, 5.0, 30.0],
            samples: 400,
            seed: 0,
        }
    }
}

impl AuditGrid {
    fn ts(&self) -> Vec<f64> {
        let k = (self.t_max / self.t_step + 1e-9).floor() as usize;
        (0..=k).map(|i| i as f64 * self.t_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    /// Largest violation found, in the check's own measure (≤ 0 means none).
    pub max_violation: f64,
    pub tolerance: f64,
    pub cells: usize,
    /// Cells whose violation exceeds the tolerance.
    pub failures: usize,
    pub worst_at: Option<String>,
    /// Counts toward the overall verdict.
    pub gating: bool,
}

impl AuditCheck {
    fn new(name: &str, tolerance: f64, gating: bool) -> Self {
        Self {
            name: name.to_string(),
            max_violation: f64::NEG_INFINITY,
            tolerance,
            cells: 0,
            failures: 0,
            worst_at: None,
            gating,
        }
    }

    fn record(&mut self, violation: f64, at: impl FnOnce() -> String) {
        self.cells += 1;
        if violation > self.tolerance || violation.is_nan() {
            self.failures += 1;
        }
        if violation > self.max_violation || (violation.is_nan() && !self.max_violation.is_nan()) {
            self.max_violation = violation;
            self.worst_at = Some(at());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
    /// All gating checks passed.
    pub passed: bool,
}

impl AuditReport {
    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs()).max(1e-300)
}

/// `α(t)` for `C_v = 1`.
fn alpha_unit(t: f64) -> f64 {
    INV_SQRT_2PI * mills_terms(t).complement
}

/// Richardson-extrapolated central differences of `f` at `t`: first and
/// second derivative.
fn fd_derivatives(f: impl Fn(f64) -> f64, t: f64, h: f64) -> (f64, f64) {
    let d1 = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    let d2 = |h: f64| (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
    ((4.0 * d1(0.5 * h) - d1(h)) / 3.0, (4.0 * d2(0.5 * h) - d2(h)) / 3.0)
}

pub fn convexity_audit(grid: &AuditGrid) -> AuditReport {
    let ts = grid.ts();
    let mut mills = AuditCheck::new("mills-sandwich", 1e-12, true);
    let mut mills_quad = AuditCheck::new("mills-quadrature", 1e-10, true);
    let mut alpha_sw = AuditCheck::new("alpha-sandwich", 1e-12, true);
    let mut recip = AuditCheck::new("alpha-reciprocal-bound", 1e-12, true);
    let mut d1 = AuditCheck::new("alpha-first-derivative", 1e-6, true);
    let mut d2 = AuditCheck::new("alpha-second-derivative", 1e-6, true);
    let mut g2 = AuditCheck::new("g-second-closed-form", 1e-4, true);
    let mut rho_b = AuditCheck::new("rho-bracket", 1e-12, true);
    let mut m_bound = AuditCheck::new("exponent-bound", 1e-12, false);
    let mut nonneg = AuditCheck::new("g-second-nonnegative", 1e-6, true);
    let mut midpoint = AuditCheck::new("midpoint-convexity", 1e-8, true);
    let mut euler = AuditCheck::new("perspective-identity", 1e-12, true);

    // class-independent pieces
    for &t in &ts {
        let h = mills_tail(t);
        let (lo, hi) = mills_tail_bounds(t);
        mills.record((lo - h).max(h - hi), || format!("t={t:.2}"));
        let r = mills_by_quadrature(t);
        mills_quad.record(rel(crate::loss::mills_ratio(t), r), || format!("t={t:.2}"));
        let a = alpha_unit(t);
        let sq = (t * t + 4.0).sqrt();
        let chain = INV_SQRT_2PI / a;
        let mid = (0.5 * (t + sq)).powi(2);
        recip.record(((mid - chain) / chain).max((t * t + 1.0 - mid) / mid), || format!("t={t:.2}"));
        if t > 0.0 {
            // α scales linearly in C_v, so C_v = 1 covers every class
            let (fd1, fd2) = fd_derivatives(alpha_unit, t, 1e-3 * t.max(1.0));
            let an1 = (t * t + 1.0) / t * a - INV_SQRT_2PI / t;
            let an2 = (t * t + 3.0) * a - INV_SQRT_2PI;
            d1.record(rel(an1, fd1), || format!("t={t:.2}: closed {an1:.6e}, fd {fd1:.6e}"));
            d2.record(rel(an2, fd2), || format!("t={t:.2}: closed {an2:.6e}, fd {fd2:.6e}"));
        }
    }

    let search = SearchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    for &cv in &grid.cvs {
        let stats = WorkloadStats::iid(1.0, cv).expect("audit grid C_v must be finite and >= 0");
        for &t in &ts {
            let a = cv * alpha_unit(t);
            let (lo, hi) = alpha_bounds(t, cv);
            alpha_sw.record((lo - a).max(a - hi), || format!("cv={cv} t={t:.2}"));
        }
        for &slack in &grid.slacks {
            for n in 1..=grid.n_max {
                let rho_n = normalized_rho(n, &stats).expect("valid stats");
                let nf = n as f64;
                let (rlo, rhi) = (nf * cv * cv, nf * nf * cv * cv);
                rho_b.record(((rlo - rho_n).max(rho_n - rhi)) / rhi.max(1e-300), || format!("cv={cv} n={n}"));
                let k = ClassConstants { cv, slack, rho_n };
                for &t in ts.iter().filter(|&&t| t > 0.0) {
                    let at = || format!("cv={cv} D-d={slack} n={n} t={t:.2}");
                    let m1 = k.exponent_slope(t, n);
                    let m2 = k.exponent_curvature(n);
                    let lhs = 0.25 * m1 * m1 - 0.5 * m2;
                    m_bound.record((t * t - 1.0 - lhs) / lhs.abs().max(t * t).max(1.0), at);

                    // closed form of g''/g from the substituted expression
                    let w = mills_terms(t).complement;
                    let bracket = t.powi(3) - t * t * m1 + (3.0 + lhs) * t - m1 + (m1 - t) / w;
                    let closed = bracket / t;
                    let stencil = g_second_derivative(t, n, &k);
                    g2.record((closed - stencil).abs() / closed.abs().max(stencil.abs()).max(1.0), || {
                        format!("cv={cv} D-d={slack} n={n} t={t:.2}: closed {closed:.6e}, stencil {stencil:.6e}")
                    });

                    let g = cv * INV_SQRT_2PI * w * (-0.5 * k.exponent(t, n)).exp();
                    let second = g * closed;
                    nonneg.record(-second, || format!("cv={cv} D-d={slack} n={n} t={t:.2}: g''={second:.6e}"));
                }
            }

            // whole-function checks on random pairs in μ ≥ λ
            let spec = |lam: f64, mu: f64| QueueSpec::new(lam, mu, slack, 0.0).expect("valid queue");
            let f =
                |lam: f64, mu: f64| lam * loss_probability(&stats, &spec(lam, mu), &search).expect("valid").loss_prob;
            let model = LossModel::new(&stats, slack, search).expect("valid model");
            let r_max = 1.0 + grid.t_max * cv;
            for s in 0..grid.samples {
                let lam1 = rng.random_range(0.5..2.0);
                let mu1 = lam1 * rng.random_range(1.0..r_max);
                let (lam2, mu2) = if s % 2 == 0 {
                    let l = rng.random_range(0.5..2.0);
                    (l, l * rng.random_range(1.0..r_max))
                } else {
                    // nearby partner, where local curvature dominates
                    let l = lam1 * rng.random_range(0.9..1.1);
                    (l, (mu1 * rng.random_range(0.9..1.1)).max(l))
                };
                let (lm, mm) = (0.5 * (lam1 + lam2), 0.5 * (mu1 + mu2));
                let gap = f(lm, mm) - 0.5 * (f(lam1, mu1) + f(lam2, mu2));
                midpoint.record(gap, || format!("cv={cv} D-d={slack} ({lam1:.4},{mu1:.4})-({lam2:.4},{mu2:.4})"));
                let direct = f(lam1, mu1);
                let persp = lam1 * model.evaluate(mu1 / lam1).loss_prob;
                euler.record(rel(direct, persp), || format!("cv={cv} D-d={slack} ({lam1:.4},{mu1:.4})"));
            }
        }
    }
    let checks = vec![mills, mills_quad, alpha_sw, recip, d1, d2, g2, rho_b, m_bound, nonneg, midpoint, euler];
    let passed = checks.iter().filter(|c| c.gating).all(AuditCheck::passed);
    AuditReport { checks, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> AuditGrid {
        AuditGrid { t_step: 0.5, n_max: 10, cvs: vec![0.3], slacks: vec![5.0], samples: 20, ..AuditGrid::default() }
    }

    #[test]
    fn derivative_closed_forms_hold_at_one() {
        let t = 1.0;
        let a = alpha_unit(t);
        let (fd1, fd2) = fd_derivatives(alpha_unit, t, 1e-3);
        assert!(rel((t * t + 1.0) / t * a - INV_SQRT_2PI / t, fd1) < 1e-6);
        assert!(rel((t * t + 3.0) * a - INV_SQRT_2PI, fd2) < 1e-6);
    }

    #[test]
    fn moderate_region_passes() {
        let r = convexity_audit(&small());
        for c in &r.checks {
            assert!(c.passed(), "{c:?}");
        }
        assert!(r.passed);
    }

    #[test]
    fn audit_is_deterministic() {
        assert_eq!(convexity_audit(&small()), convexity_audit(&small()));
    }

    #[test]
    fn negative_curvature_is_detected() {
        // C_v = 1, D - d = 1, n = 26 near t = 0.1 has g'' < 0
        let g = AuditGrid {
            t_step: 0.1,
            t_max: 0.3,
            n_max: 30,
            cvs: vec![1.0],
            slacks: vec![1.0],
            samples: 0,
            ..AuditGrid::default()
        };
        let r = convexity_audit(&g);
        let c = r.check("g-second-nonnegative").unwrap();
        assert!(c.failures > 0 && c.max_violation > 0.1, "{c:?}");
        assert!(!r.passed);
    }
}
