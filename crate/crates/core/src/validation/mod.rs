//! Independent oracles for the loss model and the optimizer.
//!
//! [`mc_loss`] simulates the finite-buffer queue directly and
//! [`brute_force_solve`] recomputes loss and profit from their definitions;
//! neither calls the loss model or the optimizer. [`convexity_audit`] checks
//! the analytic facts the solver relies on. Everything is seed-deterministic.

mod audit;
mod battery;
mod brute;
mod mc;
mod quad;

pub use audit::{convexity_audit, AuditCheck, AuditGrid, AuditReport};
pub use battery::{run_loss_battery, BatteryCell, BatteryReport, LossBattery};
pub use brute::{brute_force_solve, reference_loss, BruteForceResult, BruteGrid};
pub use mc::{ma_coefficients, mc_loss, McConfig, McEstimate, QueueState, Replication};
pub use quad::{adaptive_simpson, mills_by_gauss, mills_by_quadrature};
