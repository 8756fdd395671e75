//! Per-slot program in canonical form: concave profit, linear rows
//! `aᵀx ≤ b` and `aᵀx = b`, and convex SLA rows `λ·P_L - TH ≤ 0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::curve::{psd_2x2, LossKind, PhiEval, QueueLossModel};
use super::SolveOptions;
use crate::allocation::{Allocation, QueueKind};
use crate::error::{Error, Result};
use crate::loss::LossModel;
use crate::power::{
    profitability_check, validate_instance, DataCenterSpec, ProfitabilityPair, ServiceClass, SlotEnvironment,
    SECONDS_PER_HOUR,
};

/// Identifies a constraint in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum ConstraintTag {
    AllocNonneg { dc: usize, class: usize, kind: QueueKind },
    Stability { dc: usize, class: usize, kind: QueueKind },
    MinRate { dc: usize, class: usize, kind: QueueKind },
    GreenCap { dc: usize },
    TotalCap { dc: usize },
    Demand { class: usize },
    DcShare { dc: usize, class: usize },
    Sla { dc: usize, class: usize, kind: QueueKind },
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ConstraintTag::*;
        match *self {
            AllocNonneg { dc, class, kind } => write!(f, "alloc_nonneg(dc={dc}, class={class}, {})", kind.as_str()),
            Stability { dc, class, kind } => write!(f, "stability(dc={dc}, class={class}, {})", kind.as_str()),
            MinRate { dc, class, kind } => write!(f, "min_rate(dc={dc}, class={class}, {})", kind.as_str()),
            GreenCap { dc } => write!(f, "green_cap(dc={dc})"),
            TotalCap { dc } => write!(f, "total_cap(dc={dc})"),
            Demand { class } => write!(f, "demand(class={class})"),
            DcShare { dc, class } => write!(f, "dc_share(dc={dc}, class={class})"),
            Sla { dc, class, kind } => write!(f, "sla(dc={dc}, class={class}, {})", kind.as_str()),
        }
    }
}

/// `Σ coef·x (≤ | =) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub tag: ConstraintTag,
    /// Structural rows (nonnegativity, stability, minimum rate) are kept
    /// strictly satisfied during phase I.
    pub hard: bool,
}

impl LinearRow {
    /// `aᵀx - b`; nonpositive when satisfied.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(k, c)| c * x[k]).sum::<f64>() - self.rhs
    }

    /// Normalizer used when comparing violations across rows.
    pub fn scale(&self) -> f64 {
        self.rhs.abs().max(1.0)
    }
}

/// Profit of one queue is `A·λ - B·μ - K·φ(λ, μ)` in currency per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTerm {
    pub dc: usize,
    pub class: usize,
    pub kind: QueueKind,
    pub lam: usize,
    pub mu: usize,
    pub revenue_coef: f64,
    pub base_coef: f64,
    pub loss_coef: f64,
    /// `TH_j` when the SLA row is not implied by the demand.
    pub threshold: Option<f64>,
    pub(crate) model: usize,
}

/// A fully assembled per-slot program.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub dcs: Vec<DataCenterSpec>,
    pub classes: Vec<ServiceClass>,
    pub env: SlotEnvironment,
    pub loss_kind: LossKind,
    pub queues: Vec<QueueTerm>,
    pub inequalities: Vec<LinearRow>,
    pub equalities: Vec<LinearRow>,
    /// `Some(v)` pins a variable.
    pub fixed: Vec<Option<f64>>,
    pub green_caps: Vec<u32>,
    pub green_enabled: Vec<bool>,
    /// Per-(DC, class) totals when the split across DCs is frozen, indexed `i·J + j`.
    pub dc_totals: Option<Vec<f64>>,
    pub profitability: Vec<ProfitabilityPair>,
    pub degenerate_classes: Vec<usize>,
    /// Reason the program has no feasible point, detected while building.
    pub construction_error: Option<String>,
    pub(crate) models: Vec<QueueLossModel>,
    pub(crate) free: Vec<usize>,
    /// Typical objective magnitude; the solver works with profit / scale.
    pub(crate) scale: f64,
    pub(crate) epsilon: Vec<f64>,
}

/// Servers the slot's renewable energy can keep at full draw.
pub fn green_server_cap(dc: &DataCenterSpec, green_energy: f64, slot_length: f64) -> u32 {
    let kw = green_energy / (slot_length / SECONDS_PER_HOUR);
    let per_server = dc.peak_power * dc.pue;
    if per_server <= 0.0 {
        return dc.max_servers;
    }
    // tolerance absorbs kWh/h round trips such as 2.4/0.24 = 9.999…
    let n = (kw / per_server + 1e-9).floor();
    n.clamp(0.0, u32::MAX as f64) as u32
}

pub(crate) fn build(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &SolveOptions,
    loss_kind: LossKind,
    dc_totals: Option<Vec<f64>>,
) -> Result<ProblemInstance> {
    opts.validate()?;
    validate_instance(dcs, classes)?;
    let (n_dc, n_class) = (dcs.len(), classes.len());
    env.validate(n_dc, n_class)?;
    if let Some(t) = &dc_totals {
        if t.len() != n_dc * n_class || t.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("dc_totals", "expected one nonnegative value per (DC, class)"));
        }
        for j in 0..n_class {
            let sum: f64 = (0..n_dc).map(|i| t[i * n_class + j]).sum();
            let want = env.class_mean(j);
            if (sum - want).abs() > 1e-9 * want.max(1.0) {
                return Err(Error::invalid(format!("dc_totals[class {j}]"), "must sum to the class demand"));
            }
        }
    }
    let t = env.slot_length;
    let shape = Allocation::zeros(n_dc, n_class);
    let n_var = 4 * n_dc * n_class;
    let mut fixed = vec![None; n_var];

    let green_caps: Vec<u32> =
        dcs.iter().enumerate().map(|(i, dc)| green_server_cap(dc, env.green_energy[i], t)).collect();
    // a green queue needs μ ≥ 1, i.e. at least 1/k_j servers for every class
    let green_enabled: Vec<bool> = green_caps
        .iter()
        .map(|&cap| {
            let need: f64 = classes.iter().map(|c| 1.0 / c.per_server_capacity).sum();
            cap as f64 >= need
        })
        .collect();

    let demand: Vec<f64> = (0..n_class).map(|j| env.class_mean(j)).collect();
    let degenerate: Vec<usize> = (0..n_class).filter(|&j| demand[j] < opts.epsilon_alloc).collect();

    let mut models = Vec::with_capacity(n_dc * n_class);
    for dc in dcs {
        for (j, c) in classes.iter().enumerate() {
            let slack = c.deadline - dc.network_delay;
            // degenerate classes carry no workload; any model with φ(0, μ) = 0 fits
            models.push(match loss_kind {
                LossKind::Gd1 if degenerate.contains(&j) => QueueLossModel::Mm1 { slack },
                LossKind::Gd1 => QueueLossModel::Gd1(LossModel::new(&env.class_stats[j], slack, opts.search)?),
                LossKind::Mm1 => QueueLossModel::Mm1 { slack },
            });
        }
    }

    let mut queues = Vec::new();
    let mut ineq = Vec::new();
    for (i, dc) in dcs.iter().enumerate() {
        let base = dc.base_power();
        let prop = dc.proportional_power();
        for (j, c) in classes.iter().enumerate() {
            for kind in QueueKind::ALL {
                let lam = shape.index(i, j, kind);
                let mu = lam + 1;
                if kind == QueueKind::Green && !green_enabled[i] {
                    fixed[lam] = Some(0.0);
                    fixed[mu] = Some(0.0);
                    continue;
                }
                let price_c = env.unit_price(dc, i, kind) * t / SECONDS_PER_HOUR;
                let frozen_zero = degenerate.contains(&j)
                    || dc_totals.as_ref().is_some_and(|v| v[i * n_class + j] < opts.epsilon_alloc);
                if frozen_zero {
                    fixed[lam] = Some(0.0);
                } else {
                    ineq.push(LinearRow {
                        coefs: vec![(lam, -1.0)],
                        rhs: 0.0,
                        tag: ConstraintTag::AllocNonneg { dc: i, class: j, kind },
                        hard: true,
                    });
                    ineq.push(LinearRow {
                        coefs: vec![(lam, 1.0), (mu, -1.0)],
                        rhs: 0.0,
                        tag: ConstraintTag::Stability { dc: i, class: j, kind },
                        hard: true,
                    });
                }
                ineq.push(LinearRow {
                    coefs: vec![(mu, -1.0)],
                    rhs: -1.0,
                    tag: ConstraintTag::MinRate { dc: i, class: j, kind },
                    hard: true,
                });
                let sla_needed = !frozen_zero && c.drop_threshold < demand[j] && env.class_stats[j].cv() > 0.0;
                queues.push(QueueTerm {
                    dc: i,
                    class: j,
                    kind,
                    lam,
                    mu,
                    revenue_coef: t * c.income - price_c * prop / c.per_server_capacity,
                    base_coef: price_c * base / c.per_server_capacity,
                    loss_coef: t * (c.income + c.penalty) - price_c * prop / c.per_server_capacity,
                    threshold: sla_needed.then_some(c.drop_threshold),
                    model: i * n_class + j,
                });
            }
        }
        if green_enabled[i] {
            ineq.push(LinearRow {
                coefs: (0..n_class)
                    .map(|j| (shape.index(i, j, QueueKind::Green) + 1, 1.0 / classes[j].per_server_capacity))
                    .collect(),
                rhs: green_caps[i] as f64,
                tag: ConstraintTag::GreenCap { dc: i },
                hard: false,
            });
        }
        if opts.total_capacity {
            let coefs = (0..n_class)
                .flat_map(|j| {
                    QueueKind::ALL
                        .into_iter()
                        .map(move |k| (j, k))
                        .filter(|&(_, k)| k == QueueKind::Brown || green_enabled[i])
                        .map(|(j, k)| (shape.index(i, j, k) + 1, 1.0 / classes[j].per_server_capacity))
                })
                .collect();
            ineq.push(LinearRow {
                coefs,
                rhs: dc.max_servers as f64,
                tag: ConstraintTag::TotalCap { dc: i },
                hard: false,
            });
        }
    }

    let mut eq = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for j in 0..n_class {
        // frozen per-DC totals already fix the class sum
        if degenerate.contains(&j) || dc_totals.is_some() {
            continue;
        }
        let coefs: Vec<(usize, f64)> = (0..n_dc)
            .flat_map(|i| QueueKind::ALL.map(|k| shape.index(i, j, k)))
            .filter(|&k| fixed[k].is_none())
            .map(|k| (k, 1.0))
            .collect();
        let row = LinearRow { coefs, rhs: demand[j], tag: ConstraintTag::Demand { class: j }, hard: false };
        if opts.allow_unserved {
            ineq.push(row);
        } else {
            eq.push(row);
        }
    }
    if let Some(totals) = &dc_totals {
        for i in 0..n_dc {
            for j in 0..n_class {
                let coefs: Vec<(usize, f64)> = QueueKind::ALL
                    .map(|k| shape.index(i, j, k))
                    .into_iter()
                    .filter(|&k| fixed[k].is_none())
                    .map(|k| (k, 1.0))
                    .collect();
                if coefs.is_empty() {
                    continue;
                }
                eq.push(LinearRow {
                    coefs,
                    rhs: totals[i * n_class + j],
                    tag: ConstraintTag::DcShare { dc: i, class: j },
                    hard: false,
                });
            }
        }
    }

    let construction_error = construction_check(env, dcs, classes, opts, &eq, &green_enabled, &degenerate);

    let free: Vec<usize> = (0..n_var).filter(|&k| fixed[k].is_none()).collect();
    let revenue_scale: f64 = classes.iter().zip(&demand).map(|(c, l)| c.income * l * t).sum();
    let base_scale: f64 = queues.iter().map(|q| q.base_coef).sum();
    let scale = revenue_scale.max(base_scale).max(1e-12);
    let epsilon = demand.iter().map(|l| opts.epsilon_alloc * l).collect();

    Ok(ProblemInstance {
        dcs: dcs.to_vec(),
        classes: classes.to_vec(),
        env: env.clone(),
        loss_kind,
        queues,
        inequalities: ineq,
        equalities: eq,
        fixed,
        green_caps,
        green_enabled,
        dc_totals,
        profitability: profitability_check(classes, dcs, env),
        degenerate_classes: degenerate,
        construction_error,
        models,
        free,
        scale,
        epsilon,
    })
}

/// Detects programs that cannot have a strictly feasible point.
fn construction_check(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    opts: &SolveOptions,
    eq: &[LinearRow],
    green_enabled: &[bool],
    degenerate: &[usize],
) -> Option<String> {
    for (j, c) in classes.iter().enumerate() {
        if degenerate.contains(&j) || opts.allow_unserved {
            continue;
        }
        if c.drop_threshold == 0.0 && env.class_stats[j].cv() > 0.0 {
            return Some(format!("class {j}: drop_threshold is 0 but the workload is random, every queue drops"));
        }
    }
    for row in eq {
        if row.coefs.is_empty() && row.rhs > 0.0 {
            return Some(format!("{}: no queue can take the demand", row.tag));
        }
    }
    // servers needed for μ ≥ 1 on every active queue
    for (i, dc) in dcs.iter().enumerate() {
        let per_kind: f64 = classes.iter().map(|c| 1.0 / c.per_server_capacity).sum();
        let need = per_kind * if green_enabled[i] { 2.0 } else { 1.0 };
        if opts.total_capacity && need > dc.max_servers as f64 {
            return Some(format!("total_cap(dc={i}): {need} servers needed for minimum service rates"));
        }
    }
    if opts.total_capacity && !opts.allow_unserved {
        let demand_servers: f64 = classes
            .iter()
            .enumerate()
            .filter(|(j, _)| !degenerate.contains(j))
            .map(|(j, c)| env.class_mean(j) / c.per_server_capacity)
            .sum();
        let capacity: f64 = dcs.iter().map(|d| d.max_servers as f64).sum();
        if demand_servers > capacity {
            return Some(format!("demand needs {demand_servers} servers, only {capacity} installed"));
        }
    }
    None
}

impl ProblemInstance {
    pub fn n_dc(&self) -> usize {
        self.dcs.len()
    }

    pub fn n_class(&self) -> usize {
        self.classes.len()
    }

    pub fn n_vars(&self) -> usize {
        self.fixed.len()
    }

    /// Number of convex SLA rows.
    pub fn n_sla(&self) -> usize {
        self.queues.iter().filter(|q| q.threshold.is_some()).count()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub(crate) fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub(crate) fn scale(&self) -> f64 {
        self.scale
    }

    pub(crate) fn epsilon(&self, class: usize) -> f64 {
        self.epsilon[class]
    }

    pub(crate) fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (k, &v) in self.free.iter().zip(z) {
            x[*k] = v;
        }
        x
    }

    pub(crate) fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&k| x[k]).collect()
    }

    pub(crate) fn phi(&self, q: &QueueTerm, x: &[f64]) -> PhiEval {
        self.models[q.model].eval(x[q.lam], x[q.mu])
    }

    /// Loss probability of queue `(λ, μ)` at DC `i`, class `j` under the
    /// program's own loss model.
    pub fn model_loss(&self, i: usize, j: usize, lam: f64, mu: f64) -> f64 {
        self.models[i * self.n_class() + j].eval(lam, mu).loss
    }

    /// Profit of a point under the program's loss model, currency.
    pub fn model_profit(&self, alloc: &Allocation) -> f64 {
        let x = alloc.as_slice();
        self.queues
            .iter()
            .map(|q| {
                let p = self.phi(q, x);
                q.revenue_coef * x[q.lam] - q.base_coef * x[q.mu] - q.loss_coef * p.phi
            })
            .sum()
    }

    /// Gradient of the model profit over all `4·N·J` variables. Returns the
    /// queue indices whose loss exponent sat at a tie.
    pub fn profit_gradient(&self, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let mut g = vec![0.0; self.n_vars()];
        let mut ties = Vec::new();
        for (n, q) in self.queues.iter().enumerate() {
            let p = self.phi(q, x);
            g[q.lam] += q.revenue_coef - q.loss_coef * p.grad[0];
            g[q.mu] += -q.base_coef - q.loss_coef * p.grad[1];
            if p.tie {
                ties.push(n);
            }
        }
        (g, ties)
    }

    /// Per-queue 2×2 Hessian block of the negated profit, projected to PSD.
    pub(crate) fn neg_profit_hessian(&self, q: &QueueTerm, p: &PhiEval) -> [[f64; 2]; 2] {
        let h = p.hess;
        psd_2x2([[q.loss_coef * h[0][0], q.loss_coef * h[0][1]], [q.loss_coef * h[1][0], q.loss_coef * h[1][1]]])
    }

    /// Largest scaled violation across every constraint, with its tag.
    pub fn worst_violation(&self, x: &[f64]) -> (f64, Option<ConstraintTag>) {
        let mut worst = (f64::NEG_INFINITY, None);
        for row in &self.inequalities {
            let v = row.residual(x) / row.scale();
            if v > worst.0 {
                worst = (v, Some(row.tag));
            }
        }
        for row in &self.equalities {
            let v = row.residual(x).abs() / row.scale();
            if v > worst.0 {
                worst = (v, Some(row.tag));
            }
        }
        for q in &self.queues {
            if let Some(th) = q.threshold {
                let v = (self.phi(q, x).phi - th) / th.max(1e-12);
                if v > worst.0 {
                    worst = (v, Some(ConstraintTag::Sla { dc: q.dc, class: q.class, kind: q.kind }));
                }
            }
        }
        worst
    }
}
