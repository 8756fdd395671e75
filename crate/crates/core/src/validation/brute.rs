//! Exhaustive grid search over tiny instances.
//!
//! Loss and profit are recomputed here from their definitions, without the
//! loss or optimizer modules, so the search is an independent check on the
//! solver. The loss keeps the model's two conventions: `P_L` is capped at 1
//! and a queue within `1e-9` relative of critical load has `min_n M_n = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quad::mills_by_gauss;
use crate::allocation::{Allocation, QueueKind};
use crate::error::{Error, Result};
use crate::loss::WorkloadStats;
use crate::power::{DataCenterSpec, ServiceClass, SlotEnvironment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BruteGrid {
    /// Allocation steps per class demand (100 = 1% of λ_j).
    pub lambda_steps: usize,
    /// Service-rate step as a fraction of λ_j, but never below `mu_step`
    /// requests/s.
    pub mu_step: f64,
    /// Largest service rate scanned, as `mu_span·λ_j + 1`, further capped by
    /// the server limits.
    pub mu_span: f64,
    /// Lags scanned for `min_n M_n`.
    pub n_max: usize,
    /// Refuse grids whose estimated number of queue evaluations is larger.
    pub max_evaluations: f64,
    /// Enforce the per-DC installed server count.
    pub total_capacity: bool,
}

impl Default for BruteGrid {
    fn default() -> Self {
        Self {
            lambda_steps: 100,
            mu_step: 0.005,
            mu_span: 4.0,
            n_max: 1000,
            max_evaluations: 2e6,
            total_capacity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    /// Best feasible grid point; `None` if no grid point is feasible.
    pub allocation: Option<Allocation>,
    pub profit: Option<f64>,
    pub evaluations: usize,
}

/// Loss probability straight from the definition with a full lag scan.
pub fn reference_loss(stats: &WorkloadStats, lam: f64, mu: f64, slack: f64, n_max: usize) -> f64 {
    if lam <= 0.0 || stats.mean_rate <= 0.0 || stats.variance <= 0.0 {
        return 0.0;
    }
    let cv = stats.variance.sqrt() / stats.mean_rate;
    let x = mu / lam - 1.0;
    let t = x / cv;
    let alpha = cv / (2.0 * std::f64::consts::PI).sqrt() * (1.0 - t * mills_by_gauss(t));
    let m = if x < 1e-9 {
        0.0
    } else {
        let norm = stats.mean_rate * stats.mean_rate;
        let c = |l: usize| stats.autocov.get(l).copied().unwrap_or(0.0) / norm;
        let mut best = f64::INFINITY;
        // ρ_n = n·C(0) + 2Σ_{l<n}(n - l)C(l), built incrementally
        let (mut rho, mut csum) = (0.0, 0.0);
        for n in 1..=n_max {
            csum += c(n - 1);
            rho += if n == 1 { c(0) } else { 2.0 * csum - c(0) };
            if rho <= 0.0 {
                continue;
            }
            let v = ((slack + n as f64) * x + slack).powi(2) / rho;
            best = best.min(v);
        }
        best
    };
    (alpha * (-0.5 * m).exp()).min(1.0)
}

struct Queue<'a> {
    stats: &'a WorkloadStats,
    class: &'a ServiceClass,
    dc: &'a DataCenterSpec,
    price: f64,
    slot: f64,
    n_max: usize,
}

impl Queue<'_> {
    /// Slot profit of one queue and whether it meets the SLA bound.
    fn eval(&self, lam: f64, mu: f64) -> (f64, bool) {
        let slack = self.class.deadline - self.dc.network_delay;
        let p = reference_loss(self.stats, lam, mu, slack, self.n_max);
        let requests = lam * self.slot;
        let revenue = requests * ((1.0 - p) * self.class.income - p * self.class.penalty);
        let k = self.class.per_server_capacity;
        let base = self.dc.idle_power + (self.dc.pue - 1.0) * self.dc.peak_power;
        let prop = self.dc.peak_power - self.dc.idle_power;
        let kw = base * mu / k + prop * (1.0 - p) * lam / k;
        let cost = self.price * kw * self.slot / 3600.0;
        (revenue - cost, lam * p <= self.class.drop_threshold * (1.0 + 1e-12))
    }
}

/// Best DC-level profit per allocated level `a` (in grid units): the pair
/// `(value, (λ_g, μ_g, λ_b, μ_b))`.
type DcTable = Vec<Option<(f64, [f64; 4])>>;

/// Exhaustive scan for instances with at most 2 DCs and 1 class.
///
/// Allocations move in steps of `λ_j/lambda_steps`; service rates take the
/// values `{1} ∪ {k·max(λ_j, 1)·mu_step}` inside `[max(λ, 1), limit]`.
pub fn brute_force_solve(
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    grid: &BruteGrid,
) -> Result<BruteForceResult> {
    if dcs.is_empty() || dcs.len() > 2 || classes.len() != 1 {
        return Err(Error::TooLarge(format!(
            "brute force handles at most 2 DCs x 1 class, got {} x {}",
            dcs.len(),
            classes.len()
        )));
    }
    if grid.lambda_steps == 0 || !(grid.mu_step > 0.0) || !(grid.mu_span > 0.0) {
        return Err(Error::invalid("grid", "needs lambda_steps >= 1, mu_step > 0 and mu_span > 0"));
    }
    env.validate(dcs.len(), 1)?;
    let class = &classes[0];
    let demand = env.class_stats[0].mean_rate;
    let steps = grid.lambda_steps;
    let unit = demand / steps as f64;

    // service-rate candidates shared by all queues
    let top = grid.mu_span * demand + 1.0;
    let mu_unit = (grid.mu_step * demand).max(grid.mu_step);
    let mut mus = vec![1.0];
    let mut k = 1usize;
    while k as f64 * mu_unit <= top {
        let m = k as f64 * mu_unit;
        if m > 1.0 {
            mus.push(m);
        }
        k += 1;
    }
    let estimate = dcs.len() as f64 * 2.0 * (steps + 1) as f64 * mus.len() as f64;
    if estimate > grid.max_evaluations {
        return Err(Error::TooLarge(format!(
            "grid needs about {estimate:.3e} queue evaluations, limit is {:.3e}",
            grid.max_evaluations
        )));
    }

    let mut evaluations = 0;
    let mut tables: Vec<DcTable> = Vec::with_capacity(dcs.len());
    for (i, dc) in dcs.iter().enumerate() {
        let k_j = class.per_server_capacity;
        let hours = env.slot_length / 3600.0;
        let green_servers = (env.green_energy[i] / hours / (dc.peak_power * dc.pue) + 1e-9).floor();
        let green_limit = green_servers * k_j;
        let green_on = green_limit >= 1.0;
        let total_limit = if grid.total_capacity { dc.max_servers as f64 * k_j } else { f64::INFINITY };
        let mk = |kind: QueueKind| Queue {
            stats: &env.class_stats[0],
            class,
            dc,
            price: match kind {
                QueueKind::Green => dc.green_unit_cost,
                QueueKind::Brown => env.brown_price[i],
            },
            slot: env.slot_length,
            n_max: grid.n_max,
        };
        let (green, brown) = (mk(QueueKind::Green), mk(QueueKind::Brown));

        // per allocation level: feasible (μ, profit) lists and the scan size
        let scan = |q: &Queue, limit: f64| -> Vec<(Vec<(f64, f64)>, usize)> {
            (0..=steps)
                .into_par_iter()
                .map(|a| {
                    let lam = a as f64 * unit;
                    let floor = lam.max(1.0);
                    let mut out = Vec::new();
                    let mut count = 0;
                    for &m in mus.iter().filter(|&&m| m >= floor * (1.0 - 1e-12) && m <= limit) {
                        count += 1;
                        let (v, ok) = q.eval(lam, m);
                        if ok {
                            out.push((m, v));
                        }
                    }
                    (out, count)
                })
                .collect()
        };
        let mut unpack = |rows: Vec<(Vec<(f64, f64)>, usize)>| -> Vec<Vec<(f64, f64)>> {
            rows.into_iter()
                .map(|(r, c)| {
                    evaluations += c;
                    r
                })
                .collect()
        };
        let brown_rows = unpack(scan(&brown, total_limit));
        let green_rows: Vec<Vec<(f64, f64)>> = if green_on {
            unpack(scan(&green, green_limit.min(total_limit)))
        } else {
            // no green servers: the queue is off
            (0..=steps).map(|a| if a == 0 { vec![(0.0, 0.0)] } else { Vec::new() }).collect()
        };
        // brown prefix maxima over μ (rows are sorted by μ)
        let brown_best: Vec<Vec<(f64, f64, f64)>> = brown_rows
            .iter()
            .map(|row| {
                let mut best = (f64::NEG_INFINITY, 0.0);
                row.iter()
                    .map(|&(m, v)| {
                        if v > best.0 {
                            best = (v, m);
                        }
                        (m, best.0, best.1)
                    })
                    .collect()
            })
            .collect();

        let mut table: DcTable = vec![None; steps + 1];
        #[allow(clippy::needless_range_loop)]
        for ag in 0..=steps {
            for (ab, bb) in brown_best.iter().enumerate().take(steps + 1 - ag) {
                let level = ag + ab;
                for &(mg, vg) in &green_rows[ag] {
                    // largest brown μ that still fits the installed servers
                    let room = total_limit - mg;
                    let idx = bb.partition_point(|&(m, _, _)| m <= room * (1.0 + 1e-12));
                    if idx == 0 {
                        continue;
                    }
                    let (_, vb, mb) = bb[idx - 1];
                    let v = vg + vb;
                    if table[level].is_none_or(|(best, _)| v > best) {
                        table[level] = Some((v, [ag as f64 * unit, mg, ab as f64 * unit, mb]));
                    }
                }
            }
        }
        tables.push(table);
    }

    // split the demand across DCs
    let mut best: Option<(f64, Vec<[f64; 4]>)> = None;
    match tables.len() {
        1 => {
            if let Some((v, q)) = tables[0][steps] {
                best = Some((v, vec![q]));
            }
        }
        _ => {
            for a in 0..=steps {
                if let (Some((v0, q0)), Some((v1, q1))) = (tables[0][a], tables[1][steps - a]) {
                    if best.as_ref().is_none_or(|(b, _)| v0 + v1 > *b) {
                        best = Some((v0 + v1, vec![q0, q1]));
                    }
                }
            }
        }
    }
    Ok(match best {
        None => BruteForceResult { allocation: None, profit: None, evaluations },
        Some((v, qs)) => {
            let mut alloc = Allocation::zeros(dcs.len(), 1);
            for (i, q) in qs.iter().enumerate() {
                alloc.set_queue(i, 0, QueueKind::Green, q[0], q[1]);
                alloc.set_queue(i, 0, QueueKind::Brown, q[2], q[3]);
            }
            BruteForceResult { allocation: Some(alloc), profit: Some(v), evaluations }
        }
    })
}
