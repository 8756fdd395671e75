use geoprofit_core::optimizer::{build_problem, solve, SolveResult, SolveStatus};
use geoprofit_core::power::{slot_profit, ProfitBreakdown, SlotEnvironment};
use geoprofit_core::simulator::{run, synth_raw, synth_traces, Baseline, RunOptions, RunSummary, SlotReport, TraceSet};
use geoprofit_core::validation::{brute_force_solve, convexity_audit, run_loss_battery};
use geoprofit_core::{Allocation, QueueKind};

use crate::config::{RunConfig, TraceSource};
use crate::error::{CliError, CliResult};
use crate::report::{render, Format, Outputs, Record};
use crate::traces::{load_traces, write_raw};

/// What a command produced. `failure` is set when the run completed but its
/// verdict is negative; the outputs are still written.
#[derive(Debug, Default)]
pub struct CommandOutput {
    pub outputs: Outputs,
    pub stdout: String,
    pub failure: Option<String>,
}

/// Relative shortfall the brute-force comparison tolerates.
pub const BRUTE_FORCE_SLACK: f64 = 0.005;

fn need_instance(cfg: &RunConfig, what: &str) -> CliResult<()> {
    if cfg.data_centers.is_empty() || cfg.classes.is_empty() {
        return Err(CliError::Usage(format!("{what} needs --config with data centers and classes")));
    }
    Ok(())
}

pub fn build_traces(cfg: &RunConfig) -> CliResult<TraceSet> {
    let set = match &cfg.traces {
        Some(TraceSource::Files(section)) => load_traces(section, cfg)?,
        Some(TraceSource::Generator(spec)) => synth_traces(spec, cfg.seed)?,
        None => return Err(CliError::Config("no [traces] or [generator] section".into())),
    };
    set.validate(cfg.data_centers.len(), cfg.classes.len()).map_err(|e| CliError::Traces(e.to_string()))?;
    Ok(set)
}

/// The inline `[slot]` if present, else slot `k` of the traces.
fn slot_env(cfg: &RunConfig, k: usize) -> CliResult<SlotEnvironment> {
    if let Some(env) = &cfg.slot {
        return Ok(env.clone());
    }
    let set = build_traces(cfg)?;
    if k >= set.len() {
        return Err(CliError::Usage(format!("--slot {k} is out of range: the traces have {} slots", set.len())));
    }
    Ok(set.env(k))
}

fn queue_fields(rec: &mut Record, cfg: &RunConfig, alloc: &Allocation, breakdown: Option<&ProfitBreakdown>) {
    for (i, dc) in cfg.dc_names().iter().enumerate() {
        for (j, class) in cfg.class_names().iter().enumerate() {
            for kind in QueueKind::ALL {
                let (lam, mu) = alloc.queue(i, j, kind);
                let key = format!("{dc}.{class}.{}", kind.as_str());
                rec.push(format!("lambda.{key}"), lam);
                rec.push(format!("mu.{key}"), mu);
                let loss = breakdown
                    .and_then(|b| b.queues.iter().find(|q| q.dc == i && q.class == j && q.kind == kind))
                    .map(|q| q.loss_prob);
                rec.push(format!("loss.{key}"), loss);
            }
        }
    }
}

fn breakdown_fields(rec: &mut Record, b: Option<&ProfitBreakdown>) {
    rec.push("green_revenue", b.map(|b| b.green_revenue));
    rec.push("green_cost", b.map(|b| b.green_cost));
    rec.push("brown_revenue", b.map(|b| b.brown_revenue));
    rec.push("brown_cost", b.map(|b| b.brown_cost));
}

fn pair_names(cfg: &RunConfig, pairs: &[(usize, usize)]) -> String {
    let dcs = cfg.dc_names();
    let classes = cfg.class_names();
    pairs.iter().map(|&(i, j)| format!("{}/{}", dcs[i], classes[j])).collect::<Vec<_>>().join(";")
}

fn solve_record(cfg: &RunConfig, env: &SlotEnvironment, res: &SolveResult) -> CliResult<Record> {
    let breakdown = if res.status == SolveStatus::Infeasible {
        None
    } else {
        Some(slot_profit(&res.allocation, env, &cfg.dc_specs(), &cfg.class_specs(), &cfg.solver.search)?)
    };
    let mut rec = Record::new();
    rec.push("status", res.status.as_str())
        .push("profit", res.objective)
        .push("model_profit", res.model_objective)
        .push("iterations", res.iterations)
        .push("duality_gap", res.kkt.duality_gap)
        .push("max_violation", res.kkt.max_violation)
        .push("failing_pairs", pair_names(cfg, &res.failing_pairs));
    breakdown_fields(&mut rec, breakdown.as_ref());
    queue_fields(&mut rec, cfg, &res.allocation, breakdown.as_ref());
    rec.push("notes", res.notes.join("; "));
    Ok(rec)
}

pub fn cmd_solve(cfg: &RunConfig, slot: usize, format: Format) -> CliResult<CommandOutput> {
    need_instance(cfg, "solve")?;
    let env = slot_env(cfg, slot)?;
    let problem = build_problem(&env, &cfg.dc_specs(), &cfg.class_specs(), &cfg.solver)?;
    let res = solve(&problem, &cfg.solver)?;
    let rec = solve_record(cfg, &env, &res)?;
    let mut out = CommandOutput::default();
    out.outputs.add_records("solve", std::slice::from_ref(&rec), format)?;
    let mut brief = Record::new();
    brief.push("status", res.status.as_str()).push("profit", res.objective).push("iterations", res.iterations);
    if !res.failing_pairs.is_empty() {
        brief.push("failing_pairs", pair_names(cfg, &res.failing_pairs));
    }
    out.stdout = render(&[brief], Format::Table)?;
    Ok(out)
}

pub fn slot_record(cfg: &RunConfig, r: &SlotReport) -> Record {
    let mut rec = Record::new();
    rec.push("slot", r.slot)
        .push("status", r.status.map(|s| s.as_str()))
        .push("profit", r.profit)
        .push("profit_base", r.profit_base)
        .push("profit_max", r.profit_max)
        .push("gain", r.gain)
        .push("iterations", r.iterations)
        .push("duality_gap", r.kkt.as_ref().map(|k| k.duality_gap));
    breakdown_fields(&mut rec, r.breakdown.as_ref());
    if let Some(a) = &r.allocation {
        queue_fields(&mut rec, cfg, a, r.breakdown.as_ref());
    }
    for b in &r.baselines {
        let key = b.kind.as_str();
        rec.push(format!("baseline.{key}.status"), b.status.map(|s| s.as_str()));
        rec.push(format!("baseline.{key}.profit"), b.profit);
        rec.push(format!("baseline.{key}.delta"), b.delta);
    }
    rec.push("error", r.error.clone());
    rec.push("notes", r.notes.join("; "));
    rec
}

pub fn summary_record(s: &RunSummary) -> Record {
    let gains: Vec<f64> = s.gains.iter().flatten().copied().collect();
    let mean_gain = if gains.is_empty() { None } else { Some(gains.iter().sum::<f64>() / gains.len() as f64) };
    let mut rec = Record::new();
    rec.push("slots", s.slot_profits.len())
        .push("total_profit", s.total_profit)
        .push("mean_gain", mean_gain)
        .push("failed_slots", s.failed_slots.len())
        .push("failed", s.failed_slots.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";"));
    for b in &s.baselines {
        let key = b.kind.as_str();
        rec.push(format!("baseline.{key}.total"), b.total);
        rec.push(format!("baseline.{key}.delta"), b.delta);
        rec.push(format!("baseline.{key}.missing_slots"), b.missing_slots);
        rec.push(format!("baseline.{key}.kind"), "reconstruction");
    }
    rec
}

pub fn cmd_simulate(cfg: &RunConfig, format: Format) -> CliResult<CommandOutput> {
    need_instance(cfg, "simulate")?;
    let traces = build_traces(cfg)?;
    let opts = RunOptions {
        solve: cfg.solver.clone(),
        baselines: cfg.simulator.baselines.clone(),
        max_sweep_steps: cfg.simulator.max_sweep_steps,
    };
    let summary = run(&traces, &cfg.dc_specs(), &cfg.class_specs(), &opts)?;
    let slots: Vec<Record> = summary.slots.iter().map(|r| slot_record(cfg, r)).collect();
    let total = summary_record(&summary);
    let mut out = CommandOutput::default();
    out.outputs.add_records("slots", &slots, format)?;
    out.outputs.add_records("summary", std::slice::from_ref(&total), format)?;
    out.stdout = render(&[total], Format::Table)?;
    Ok(out)
}

pub fn cmd_validate_loss(cfg: &RunConfig, format: Format) -> CliResult<CommandOutput> {
    let report = run_loss_battery(&cfg.loss_battery, &cfg.monte_carlo)?;
    let cells: Vec<Record> = report
        .cells
        .iter()
        .map(|c| {
            let mut r = Record::new();
            r.push("cv", c.cv)
                .push("ratio", c.ratio)
                .push("slack", c.slack)
                .push("analytic", c.analytic)
                .push("simulated", c.simulated)
                .push("half_width", c.half_width)
                .push("decades", c.decades)
                .push("in_band", c.in_band)
                .push("agrees", c.agrees);
            r
        })
        .collect();
    let outliers: Vec<String> =
        report.outliers().map(|c| format!("cv={} ratio={} slack={}", c.cv, c.ratio, c.slack)).collect();
    let mut summary = Record::new();
    summary
        .push("cells", report.cells.len())
        .push("counted", report.counted)
        .push("agreeing", report.agreeing)
        .push("share", report.share)
        .push("min_share", cfg.loss_battery.min_share)
        .push("passed", report.passed)
        .push("outliers", outliers.join(";"));
    let mut out = CommandOutput::default();
    out.outputs.add_records("loss-battery", &cells, format)?;
    out.outputs.add_records("loss-battery-summary", std::slice::from_ref(&summary), format)?;
    out.stdout = render(&[summary], Format::Table)?;
    if !report.passed {
        out.failure = Some(format!(
            "loss battery: {} of {} counted cells agree, below the required share {}",
            report.agreeing, report.counted, cfg.loss_battery.min_share
        ));
    }
    Ok(out)
}

pub fn cmd_audit(cfg: &RunConfig, format: Format) -> CliResult<CommandOutput> {
    let report = convexity_audit(&cfg.audit);
    let checks: Vec<Record> = report
        .checks
        .iter()
        .map(|c| {
            let mut r = Record::new();
            r.push("check", c.name.as_str())
                .push("max_violation", c.max_violation)
                .push("tolerance", c.tolerance)
                .push("cells", c.cells)
                .push("failures", c.failures)
                .push("gating", c.gating)
                .push("passed", c.passed())
                .push("worst_at", c.worst_at.clone());
            r
        })
        .collect();
    let mut out = CommandOutput::default();
    out.outputs.add_records("audit", &checks, format)?;
    out.stdout = render(&checks, Format::Table)?;
    if !report.passed {
        let failed: Vec<&str> =
            report.checks.iter().filter(|c| c.gating && !c.passed()).map(|c| c.name.as_str()).collect();
        out.failure = Some(format!("convexity audit failed: {}", failed.join(", ")));
    }
    Ok(out)
}

pub fn cmd_brute_force(cfg: &RunConfig, slot: usize, format: Format) -> CliResult<CommandOutput> {
    need_instance(cfg, "brute-force")?;
    let env = slot_env(cfg, slot)?;
    let (dcs, classes) = (cfg.dc_specs(), cfg.class_specs());
    let grid = brute_force_solve(&env, &dcs, &classes, &cfg.brute_force)?;
    let problem = build_problem(&env, &dcs, &classes, &cfg.solver)?;
    let res = solve(&problem, &cfg.solver)?;
    let solver_profit = (res.status != SolveStatus::Infeasible).then_some(res.objective);
    let (within, shortfall) = match (solver_profit, grid.profit) {
        (Some(s), Some(g)) => (s >= g - BRUTE_FORCE_SLACK * g.abs(), Some((g - s) / g.abs().max(f64::MIN_POSITIVE))),
        (None, None) => (true, None),
        (Some(_), None) => (true, None),
        (None, Some(_)) => (false, None),
    };
    let mut rec = Record::new();
    rec.push("solver_status", res.status.as_str())
        .push("solver_profit", solver_profit)
        .push("grid_profit", grid.profit)
        .push("shortfall", shortfall)
        .push("tolerance", BRUTE_FORCE_SLACK)
        .push("within", within)
        .push("evaluations", grid.evaluations);
    queue_fields(&mut rec, cfg, &res.allocation, None);
    let mut out = CommandOutput::default();
    out.outputs.add_records("brute-force", std::slice::from_ref(&rec), format)?;
    let mut brief = Record::new();
    brief
        .push("solver_profit", solver_profit)
        .push("grid_profit", grid.profit)
        .push("shortfall", shortfall)
        .push("within", within);
    out.stdout = render(&[brief], Format::Table)?;
    if !within {
        out.failure = Some("solver profit is more than 0.5% below the grid optimum".into());
    }
    Ok(out)
}

pub fn cmd_gen_traces(cfg: &RunConfig) -> CliResult<CommandOutput> {
    need_instance(cfg, "gen-traces")?;
    let Some(TraceSource::Generator(spec)) = &cfg.traces else {
        return Err(CliError::Config("gen-traces needs a [generator] section".into()));
    };
    let raw = synth_raw(spec, cfg.seed)?;
    let (power, rates) = write_raw(&raw, &cfg.dc_names(), &cfg.class_names())?;
    let mut out = CommandOutput::default();
    out.outputs.add("power.csv", power);
    out.outputs.add("rates.csv", rates);
    out.stdout = format!(
        "wrote power.csv ({} steps of {} s) and rates.csv ({} s); use with [traces] files = [\"power.csv\", \"rates.csv\"]\n",
        raw.green_kw.first().map_or(0, Vec::len),
        raw.power_step,
        raw.rates.first().map_or(0, Vec::len)
    );
    Ok(out)
}

pub fn parse_baselines(names: &[String]) -> CliResult<Vec<Baseline>> {
    let mut out = Vec::new();
    for n in names {
        match n.as_str() {
            "none" => {}
            other => {
                let b = Baseline::ALL
                    .into_iter()
                    .find(|b| b.as_str() == other)
                    .ok_or_else(|| CliError::Usage(format!("unknown baseline \"{other}\" (mm1, equal-split, none)")))?;
                if !out.contains(&b) {
                    out.push(b);
                }
            }
        }
    }
    Ok(out)
}
