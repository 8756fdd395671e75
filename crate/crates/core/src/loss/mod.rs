//! G/D/1 deadline-loss model for Gaussian request-rate processes.
//!
//! A queue fed at mean rate λ and drained deterministically at rate μ misses
//! its SLA deadline when the backlog exceeds the buffer `μ·(D - d)`. The loss
//! probability is estimated as
//!
//! ```text
//! P_L = α · exp(-½ · min_{n≥1} M_n)
//! ```
//!
//! where, with `r = μ/λ`, `t = (r - 1)/C_v`,
//!
//! ```text
//! α   = C_v/√(2π) · (1 - t·R(t))                     (R = Gaussian Mills ratio)
//! M_n = ((D - d + n)(r - 1) + (D - d))² / ρ_n
//! ρ_n = n·C_v² + 2 Σ_{l=1}^{n-1} (n - l) · C(l)/λ_class²
//! ```
//!
//! Both factors depend on (λ, μ) only through `r`, so the estimate is
//! invariant under `(λ, μ) → (cλ, cμ)`. Lags are counted in seconds and rates
//! are per second.

mod curvature;
mod mills;
mod model;

pub use curvature::{g_second_derivative, log_g, ClassConstants};
pub use mills::{
    alpha_bounds, mills_ratio, mills_tail, mills_tail_bounds, mills_tail_complement, mills_terms, MillsTerms,
    INV_SQRT_2PI,
};
pub use model::{
    alpha_normalized, alpha_raw, exponent_m, loss_probability, normalized_rho, ArgMin, CurvePoint, LossModel,
    LossResult, QueueSpec, SearchConfig, WorkloadStats,
};
