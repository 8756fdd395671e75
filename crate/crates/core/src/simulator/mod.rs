//! Multi-slot replay.
//!
//! Slots are solved independently in steady state: no queue backlog or SLA
//! state is carried from one slot to the next. Each slot report records the
//! proposed allocation, its G/D/1 profit breakdown, the normalized gain
//! reference points and, optionally, the comparator baselines evaluated
//! under the same G/D/1 profit model.
//!
//! A slot whose program is infeasible or fails to solve contributes zero
//! profit and carries the reason in its report; the run continues.

mod baselines;
mod stats;
mod synth;
mod traces;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{
    baseline_equal_split, baseline_mm1, normalized_profit_gain, profit_base, profit_max, run_baseline, Baseline,
};
pub use stats::estimate_stats;
pub use synth::{synth_raw, synth_traces, HourlyProfile, SynthSpec, WorkloadProfile};
pub use traces::{RawTraces, SlotTrace, TraceSet};

use crate::allocation::Allocation;
use crate::error::Result;
use crate::optimizer::{build_problem, solve, KktSummary, SolveOptions, SolveResult, SolveStatus};
use crate::power::{slot_profit, validate_instance, DataCenterSpec, ProfitBreakdown, ServiceClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub solve: SolveOptions,
    pub baselines: Vec<Baseline>,
    /// Grid points per unit of `μ/λ` in the `Profit_Max` sweep.
    pub max_sweep_steps: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), baselines: Vec::new(), max_sweep_steps: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub kind: Baseline,
    pub status: Option<SolveStatus>,
    /// G/D/1 profit of the baseline's allocation; `None` if it has none.
    pub profit: Option<f64>,
    /// Proposed profit minus baseline profit.
    pub delta: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    /// `None` when the solver returned an error.
    pub status: Option<SolveStatus>,
    pub allocation: Option<Allocation>,
    /// Present iff the slot was solved to a feasible point.
    pub breakdown: Option<ProfitBreakdown>,
    /// Counted profit: the breakdown total, or 0 for a failed slot.
    pub profit: f64,
    pub profit_base: Option<f64>,
    pub profit_max: Option<f64>,
    pub gain: Option<f64>,
    pub kkt: Option<KktSummary>,
    pub iterations: usize,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub baselines: Vec<BaselineReport>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTotal {
    pub kind: Baseline,
    pub total: f64,
    /// Proposed total minus baseline total.
    pub delta: f64,
    /// Slots where the baseline produced no allocation; excluded from `total`.
    pub missing_slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_profit: f64,
    pub slot_profits: Vec<f64>,
    pub gains: Vec<Option<f64>>,
    pub baselines: Vec<BaselineTotal>,
    pub failed_slots: Vec<usize>,
    pub slots: Vec<SlotReport>,
}

fn feasible(r: &SolveResult) -> bool {
    r.status != SolveStatus::Infeasible && r.objective.is_finite()
}

/// Solves one slot and its baselines.
pub fn run_slot(
    traces: &TraceSet,
    k: usize,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &RunOptions,
) -> SlotReport {
    let start = Instant::now();
    let env = traces.env(k);
    let search = &opts.solve.search;
    let mut report = SlotReport {
        slot: k,
        status: None,
        allocation: None,
        breakdown: None,
        profit: 0.0,
        profit_base: None,
        profit_max: None,
        gain: None,
        kkt: None,
        iterations: 0,
        notes: Vec::new(),
        error: None,
        baselines: Vec::new(),
        wall_time: Duration::ZERO,
    };
    let solved = build_problem(&env, dcs, classes, &opts.solve).and_then(|p| solve(&p, &opts.solve));
    match solved {
        Err(e) => report.error = Some(e.to_string()),
        Ok(r) => {
            report.status = Some(r.status);
            report.iterations = r.iterations;
            report.notes = r.notes.clone();
            report.kkt = Some(r.kkt.clone());
            if feasible(&r) {
                let extra = (|| -> Result<_> {
                    let b = slot_profit(&r.allocation, &env, dcs, classes, search)?;
                    let base = profit_base(&r.allocation, &env, dcs, classes, search)?;
                    let max = profit_max(&r.allocation, &env, dcs, classes, search, opts.max_sweep_steps)?;
                    Ok((b, base, max))
                })();
                match extra {
                    Ok((b, base, max)) => {
                        report.profit = b.total();
                        report.breakdown = Some(b);
                        report.profit_base = Some(base);
                        report.profit_max = Some(max);
                        match normalized_profit_gain(report.profit, base, max) {
                            Ok(g) => report.gain = Some(g),
                            Err(e) => report.notes.push(e.to_string()),
                        }
                    }
                    Err(e) => report.error = Some(e.to_string()),
                }
            }
            report.allocation = Some(r.allocation);
        }
    }
    let proposed = report.breakdown.as_ref().map(|_| report.profit);
    for &kind in &opts.baselines {
        let b = match run_baseline(kind, &env, dcs, classes, &opts.solve) {
            Err(e) => BaselineReport { kind, status: None, profit: None, delta: None, error: Some(e.to_string()) },
            Ok(r) => {
                let profit = feasible(&r).then_some(r.objective);
                BaselineReport {
                    kind,
                    status: Some(r.status),
                    profit,
                    delta: proposed.zip(profit).map(|(a, b)| a - b),
                    error: None,
                }
            }
        };
        report.baselines.push(b);
    }
    report.wall_time = start.elapsed();
    report
}

/// Replays every slot. Slots run in parallel; reports keep slot order.
pub fn run(
    traces: &TraceSet,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &RunOptions,
) -> Result<RunSummary> {
    opts.solve.validate()?;
    validate_instance(dcs, classes)?;
    traces.validate(dcs.len(), classes.len())?;
    let slots: Vec<SlotReport> =
        (0..traces.len()).into_par_iter().map(|k| run_slot(traces, k, dcs, classes, opts)).collect();
    Ok(summarize(slots, &opts.baselines))
}

/// Totals over already computed slot reports.
pub fn summarize(slots: Vec<SlotReport>, baselines: &[Baseline]) -> RunSummary {
    let slot_profits: Vec<f64> = slots.iter().map(|s| s.profit).collect();
    let total_profit = slot_profits.iter().sum();
    let gains = slots.iter().map(|s| s.gain).collect();
    let failed_slots = slots.iter().filter(|s| s.breakdown.is_none()).map(|s| s.slot).collect();
    let baselines = baselines
        .iter()
        .map(|&kind| {
            let mut total = 0.0;
            let mut missing = 0;
            for s in &slots {
                match s.baselines.iter().find(|b| b.kind == kind).and_then(|b| b.profit) {
                    Some(p) => total += p,
                    None => missing += 1,
                }
            }
            BaselineTotal { kind, total, delta: total_profit - total, missing_slots: missing }
        })
        .collect();
    RunSummary { total_profit, slot_profits, gains, baselines, failed_slots, slots }
}
