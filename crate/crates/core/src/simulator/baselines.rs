use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, QueueKind};
use crate::error::{Error, Result};
use crate::loss::SearchConfig;
use crate::optimizer::{build_problem_with, solve, LossKind, SolveOptions, SolveResult};
use crate::power::{
    class_revenue, queue_loss, queue_power, DataCenterSpec, QueueRates, ServiceClass, SlotEnvironment, SECONDS_PER_HOUR,
};

/// Comparator strategies. Both are reconstructions: the cited designs are
/// not specified in enough detail to reproduce exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Same program with the M/M/1 waiting-time tail `ρ·e^{-(μ-λ)(D-d)}`.
    Mm1,
    /// Each class split evenly across DCs; only the green/brown split and
    /// the service rates are optimized inside each DC.
    EqualSplit,
}

impl Baseline {
    pub const ALL: [Baseline; 2] = [Baseline::Mm1, Baseline::EqualSplit];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Mm1 => "mm1",
            Baseline::EqualSplit => "equal-split",
        }
    }
}

/// Solves the slot with the M/M/1 tail in place of the G/D/1 estimate.
/// `objective` in the result is still the G/D/1 profit of the allocation.
pub fn baseline_mm1(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let p = build_problem_with(env, dcs, classes, opts, LossKind::Mm1, None)?;
    solve(&p, opts)
}

/// Solves the slot with every class's demand frozen at `λ_j/N` per DC.
pub fn baseline_equal_split(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let (n_dc, n_class) = (dcs.len(), classes.len());
    let mut totals = vec![0.0; n_dc * n_class];
    for j in 0..n_class {
        let share = env.class_mean(j) / n_dc as f64;
        for i in 0..n_dc {
            totals[i * n_class + j] = share;
        }
    }
    let p = build_problem_with(env, dcs, classes, opts, LossKind::Gd1, Some(totals))?;
    solve(&p, opts)
}

pub fn run_baseline(
    kind: Baseline,
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    match kind {
        Baseline::Mm1 => baseline_mm1(env, dcs, classes, opts),
        Baseline::EqualSplit => baseline_equal_split(env, dcs, classes, opts),
    }
}

/// G/D/1 profit of a single queue in isolation.
fn queue_profit(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    search: &SearchConfig,
    (i, j, kind): (usize, usize, QueueKind),
    lam: f64,
    mu: f64,
) -> Result<f64> {
    let (dc, class) = (&dcs[i], &classes[j]);
    let p = queue_loss(&env.class_stats[j], lam, mu, class, dc, search)?;
    let rates = [QueueRates { alloc_rate: lam, service_rate: mu }];
    let power = queue_power(&rates, std::slice::from_ref(class), dc, &[p]);
    let t = env.slot_length;
    Ok(class_revenue(lam, p, class, t) - env.unit_price(dc, i, kind) * power * t / SECONDS_PER_HOUR)
}

fn each_queue(alloc: &Allocation) -> impl Iterator<Item = (usize, usize, QueueKind)> + '_ {
    (0..alloc.n_dc())
        .flat_map(move |i| (0..alloc.n_class()).flat_map(move |j| QueueKind::ALL.into_iter().map(move |k| (i, j, k))))
}

/// Profit with every loaded queue run at `μ = max(λ, 1)`, the no-headroom
/// reference of the normalized gain. Empty queues keep their service rate.
pub fn profit_base(
    alloc: &Allocation,
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    search: &SearchConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for key in each_queue(alloc) {
        let (lam, mu) = alloc.queue(key.0, key.1, key.2);
        let mu = if lam > 0.0 { lam.max(1.0) } else { mu };
        total += queue_profit(env, dcs, classes, search, key, lam, mu)?;
    }
    Ok(total)
}

/// Best profit reachable by re-choosing every loaded queue's service rate on
/// a grid `μ = max(λ, 1)·(1 + k/steps)`, `k = 0..=2·steps·span`, with `λ`
/// held at the allocation. Capacity and SLA limits are ignored, and the
/// allocation's own `μ` is always a candidate, so the result bounds both
/// [`profit_base`] and the allocation's profit from above.
pub fn profit_max(
    alloc: &Allocation,
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    search: &SearchConfig,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    let mut total = 0.0;
    for key in each_queue(alloc) {
        let (lam, mu) = alloc.queue(key.0, key.1, key.2);
        let mut best = queue_profit(env, dcs, classes, search, key, lam, mu)?;
        if lam > 0.0 {
            let floor = lam.max(1.0);
            // sweep to at least twice the headroom the allocation uses
            let span = (mu / floor).max(1.5);
            let last = (2.0 * steps as f64 * span).ceil() as usize;
            for k in 0..=last {
                let m = floor * (1.0 + k as f64 / steps as f64);
                best = best.max(queue_profit(env, dcs, classes, search, key, lam, m)?);
            }
        }
        total += best;
    }
    Ok(total)
}

/// `(profit - base)/(max - base)`; undefined when `max == base`.
pub fn normalized_profit_gain(profit: f64, base: f64, max: f64) -> Result<f64> {
    let span = max - base;
    if span == 0.0 || !span.is_finite() || !profit.is_finite() {
        return Err(Error::Undefined(format!("normalized gain needs max != base (max {max}, base {base})")));
    }
    Ok((profit - base) / span)
}
