//! Per-slot profit maximization over `(λ_g, μ_g, λ_b, μ_b)` of every
//! (data center, class) pair.
//!
//! The program maximizes green plus brown profit subject to queue stability
//! `λ ≤ μ`, the minimum service rate `μ ≥ 1`, the green server cap, the
//! installed server count, the per-class demand equality and the SLA bound
//! `λ·P_L ≤ TH_j`. It is solved by a log-barrier interior-point method with
//! a phase I feasibility search and a few deterministic restarts.
//!
//! Queues that cannot exist are pinned rather than constrained:
//! - green queues at a DC whose green cap cannot host `μ ≥ 1` for every class
//!   are fixed at `λ = μ = 0`;
//! - classes with demand below `epsilon_alloc` requests/s have every `λ`
//!   fixed at zero; their queues keep `μ ≥ 1` and pay base load.
//!
//! After solving, allocations below `epsilon_alloc·λ_j` are snapped to zero
//! and the removed mass moved to the class's largest queue.

mod barrier;
mod curve;
mod init;
mod problem;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use curve::{LossKind, PhiEval};
pub use problem::{green_server_cap, ConstraintTag, LinearRow, ProblemInstance, QueueTerm};

use crate::allocation::{Allocation, QueueKind};
use crate::error::{Error, Result};
use crate::loss::SearchConfig;
use crate::power::{slot_profit, DataCenterSpec, ServiceClass, SlotEnvironment};
use barrier::{Budget, Phase1Outcome, Settings};

/// Barrier weight path: starts at `initial_weight` and is multiplied by
/// `reduction` after every centering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierSchedule {
    pub initial_weight: f64,
    pub reduction: f64,
}

impl Default for BarrierSchedule {
    fn default() -> Self {
        Self { initial_weight: 1.0, reduction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Relative objective tolerance of the barrier path.
    pub tolerance: f64,
    /// Newton steps allowed across phases and starts.
    pub max_iterations: usize,
    pub barrier_schedule: BarrierSchedule,
    /// Relative floor: queues with `λ < epsilon_alloc·λ_j` are empty. Read
    /// in requests/s it is also the demand below which a class is empty.
    pub epsilon_alloc: f64,
    pub seed: u64,
    /// Starting points; the first is the unperturbed heuristic.
    pub starts: usize,
    /// Enforce `Σ_j (μ_g + μ_b)/k_j ≤ M_i`.
    pub total_capacity: bool,
    /// Relax demand equalities to `≤`.
    pub allow_unserved: bool,
    pub search: SearchConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 2000,
            barrier_schedule: BarrierSchedule::default(),
            epsilon_alloc: 1e-6,
            seed: 0,
            starts: 3,
            total_capacity: true,
            allow_unserved: false,
            search: SearchConfig::default(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be > 0"));
        }
        if !(self.epsilon_alloc > 0.0) {
            return Err(Error::invalid("epsilon_alloc", "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be >= 1"));
        }
        if self.starts == 0 {
            return Err(Error::invalid("starts", "must be >= 1"));
        }
        let b = self.barrier_schedule;
        if !(b.initial_weight > 0.0) {
            return Err(Error::invalid("barrier_schedule.initial_weight", "must be > 0"));
        }
        if !(b.reduction > 0.0 && b.reduction < 1.0) {
            return Err(Error::invalid("barrier_schedule.reduction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    FeasibleNotConverged,
    Infeasible,
    /// Solved, but the profitability precondition fails for some pair so
    /// concavity of the program is not guaranteed.
    NonCertified,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleNotConverged => "feasible-not-converged",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NonCertified => "non-certified",
        }
    }
}

/// Slack summary at the returned point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSummary {
    /// Bound on `optimal - achieved` model profit, currency.
    pub duality_gap: f64,
    pub newton_decrement: f64,
    /// Largest scaled violation over all constraints (≤ 0 when strictly feasible).
    pub max_violation: f64,
    pub worst_constraint: Option<ConstraintTag>,
    /// Constraints with scaled slack below 1e-4.
    pub active: Vec<ConstraintTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub allocation: Allocation,
    /// G/D/1 slot profit of `allocation`, recomputed through the profit module.
    pub objective: f64,
    /// Profit under the loss model the program was solved with.
    pub model_objective: f64,
    pub status: SolveStatus,
    pub kkt: KktSummary,
    pub iterations: usize,
    /// (DC, class) pairs failing the profitability precondition.
    pub failing_pairs: Vec<(usize, usize)>,
    pub notes: Vec<String>,
}

/// Assembles the program for one slot under the G/D/1 loss model.
pub fn build_problem(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &SolveOptions,
) -> Result<ProblemInstance> {
    problem::build(env, dcs, classes, opts, LossKind::Gd1, None)
}

/// Assembles the program with a chosen loss model and, optionally, frozen
/// per-(DC, class) totals indexed `i·J + j`.
pub fn build_problem_with(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &SolveOptions,
    loss: LossKind,
    dc_totals: Option<Vec<f64>>,
) -> Result<ProblemInstance> {
    problem::build(env, dcs, classes, opts, loss, dc_totals)
}

/// Gradient of the model profit with respect to every variable, plus the
/// queues whose exponent minimum is tied between lags.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub ties: Vec<(usize, usize, QueueKind)>,
}

pub fn objective_gradient(point: &Allocation, problem: &ProblemInstance) -> Result<Gradient> {
    if point.n_dc() != problem.n_dc() || point.n_class() != problem.n_class() {
        return Err(Error::invalid("allocation", "shape does not match the problem"));
    }
    point.check_queues(0.0)?;
    let (values, ties) = problem.profit_gradient(point.as_slice());
    let ties = ties.into_iter().map(|n| &problem.queues[n]).map(|q| (q.dc, q.class, q.kind)).collect();
    Ok(Gradient { values, ties })
}

/// Solves the program; see the module docs for the treatment of empty queues.
pub fn solve(problem: &ProblemInstance, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    let failing_pairs: Vec<(usize, usize)> =
        problem.profitability.iter().filter(|p| !p.ok()).map(|p| (p.dc, p.class)).collect();
    let mut notes = Vec::new();
    if !problem.degenerate_classes.is_empty() {
        notes.push(format!("degenerate demand: classes {:?} carry no workload", problem.degenerate_classes));
    }
    for (i, on) in problem.green_enabled.iter().enumerate() {
        if !on {
            notes.push(format!("green queues at dc {i} disabled: cap {} servers", problem.green_caps[i]));
        }
    }
    if !failing_pairs.is_empty() {
        notes.push(format!("profitability precondition fails for (dc, class) {failing_pairs:?}"));
    }

    if let Some(reason) = &problem.construction_error {
        notes.push(format!("infeasible by construction: {reason}"));
        return Ok(infeasible(
            problem,
            Allocation::zeros(problem.n_dc(), problem.n_class()),
            None,
            0,
            failing_pairs,
            notes,
        ));
    }

    let settings = Settings {
        tolerance: opts.tolerance,
        initial_weight: opts.barrier_schedule.initial_weight,
        reduction: opts.barrier_schedule.reduction,
    };
    let mut budget = Budget { used: 0, cap: opts.max_iterations };
    let mut best: Option<(f64, barrier::Phase2Outcome)> = None;
    let mut last_infeasible = None;
    for start in 0..opts.starts {
        let x0 = if start == 0 {
            init::initial_point(problem, None, opts.allow_unserved)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(start as u64));
            init::initial_point(problem, Some(&mut rng), opts.allow_unserved)
        };
        // each start gets an equal share of what is left
        let share = (budget.cap - budget.used) / (opts.starts - start);
        let mut local = Budget { used: 0, cap: share.max(1) };
        let outcome = match barrier::phase1(problem, &x0, &mut local) {
            Phase1Outcome::Feasible(x) => barrier::phase2(problem, &x, &settings, &mut local),
            Phase1Outcome::Infeasible { x, worst, violation } => {
                last_infeasible = Some((x, worst, violation));
                budget.used += local.used;
                continue;
            }
            Phase1Outcome::Stalled(x) => {
                last_infeasible = Some((x.clone(), problem.worst_violation(&x).1, f64::NAN));
                budget.used += local.used;
                continue;
            }
        };
        budget.used += local.used;
        let value = problem.model_profit(&Allocation::from_vec(problem.n_dc(), problem.n_class(), outcome.x.clone())?);
        let better = match &best {
            None => true,
            Some((v, o)) => (outcome.converged && !o.converged) || (outcome.converged == o.converged && value > *v),
        };
        if better {
            best = Some((value, outcome));
        }
    }

    let Some((_, outcome)) = best else {
        let (x, worst, violation) = last_infeasible.expect("at least one start ran");
        if let Some(tag) = worst {
            notes.push(format!("most violated constraint: {tag} (scaled violation {violation:.3e})"));
        }
        let alloc = Allocation::from_vec(problem.n_dc(), problem.n_class(), x)?;
        return Ok(infeasible(problem, alloc, worst, budget.used, failing_pairs, notes));
    };

    let mut x = outcome.x;
    snap(problem, &mut x);
    let allocation = Allocation::from_vec(problem.n_dc(), problem.n_class(), x)?;
    let model_objective = problem.model_profit(&allocation);
    let objective = slot_profit(&allocation, &problem.env, &problem.dcs, &problem.classes, &opts.search)?.total();
    let (max_violation, worst_constraint) = problem.worst_violation(allocation.as_slice());
    let status = if !outcome.converged || max_violation > 1e-6 {
        SolveStatus::FeasibleNotConverged
    } else if !failing_pairs.is_empty() {
        SolveStatus::NonCertified
    } else {
        SolveStatus::Optimal
    };
    Ok(SolveResult {
        kkt: KktSummary {
            duality_gap: outcome.gap * problem.scale(),
            newton_decrement: outcome.decrement,
            max_violation,
            worst_constraint,
            active: active_set(problem, allocation.as_slice()),
        },
        allocation,
        objective,
        model_objective,
        status,
        iterations: budget.used,
        failing_pairs,
        notes,
    })
}

fn infeasible(
    problem: &ProblemInstance,
    allocation: Allocation,
    worst: Option<ConstraintTag>,
    iterations: usize,
    failing_pairs: Vec<(usize, usize)>,
    notes: Vec<String>,
) -> SolveResult {
    let (max_violation, w) = problem.worst_violation(allocation.as_slice());
    SolveResult {
        model_objective: problem.model_profit(&allocation),
        objective: f64::NAN,
        allocation,
        status: SolveStatus::Infeasible,
        kkt: KktSummary {
            duality_gap: f64::INFINITY,
            newton_decrement: f64::INFINITY,
            max_violation,
            worst_constraint: worst.or(w),
            active: Vec::new(),
        },
        iterations,
        failing_pairs,
        notes,
    }
}

/// Zeroes allocations below the ε floor, moving their mass to the class's
/// queue with the most headroom in the same equality group.
fn snap(problem: &ProblemInstance, x: &mut [f64]) {
    for row in &problem.equalities {
        let class = match row.tag {
            ConstraintTag::Demand { class } | ConstraintTag::DcShare { class, .. } => class,
            _ => continue,
        };
        let eps = problem.epsilon(class);
        let mut moved = 0.0;
        for &(k, _) in &row.coefs {
            if x[k] < eps {
                moved += x[k];
                x[k] = 0.0;
            }
        }
        if moved > 0.0 {
            let target = row
                .coefs
                .iter()
                .map(|&(k, _)| k)
                .filter(|&k| x[k] > 0.0)
                .max_by(|&a, &b| (x[a + 1] - x[a]).total_cmp(&(x[b + 1] - x[b])));
            if let Some(k) = target {
                x[k] += moved;
                if x[k] > x[k + 1] {
                    x[k + 1] = x[k];
                }
            }
        }
    }
    if problem.equalities.is_empty() {
        for q in &problem.queues {
            if x[q.lam] < problem.epsilon(q.class) {
                x[q.lam] = 0.0;
            }
        }
    }
}

fn active_set(problem: &ProblemInstance, x: &[f64]) -> Vec<ConstraintTag> {
    let mut out: Vec<ConstraintTag> =
        problem.inequalities.iter().filter(|r| !r.hard && r.residual(x) / r.scale() > -1e-4).map(|r| r.tag).collect();
    for q in &problem.queues {
        if let Some(th) = q.threshold {
            if (problem.phi(q, x).phi - th) / th.max(1e-12) > -1e-4 {
                out.push(ConstraintTag::Sla { dc: q.dc, class: q.class, kind: q.kind });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
