//! Power consumption, revenue and profit accounting.
//!
//! Power is in kW, energy in kWh, prices in currency/kWh, incomes and
//! penalties in currency/request, rates in requests/s, slot lengths in
//! seconds. Energy cost of a queue over a slot is
//! `price · power · T / 3600`.

use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, QueueKind};
use crate::error::{Error, Result};
use crate::loss::{loss_probability, QueueSpec, SearchConfig, WorkloadStats};

/// Seconds per hour, converting kW·s to kWh.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// SLA parameters of one service class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceClass {
    /// Deadline D_j, seconds.
    pub deadline: f64,
    /// Income δ_j per request served on time.
    pub income: f64,
    /// Penalty γ_j per late request.
    pub penalty: f64,
    /// k_j, requests/s one server handles.
    pub per_server_capacity: f64,
    /// TH_j, bound on the mean dropped-request rate of every queue, requests/s.
    pub drop_threshold: f64,
}

impl ServiceClass {
    pub fn validate(&self) -> Result<()> {
        if !(self.deadline > 0.0) {
            return Err(Error::invalid("deadline", "must be > 0"));
        }
        if !(self.income >= 0.0) {
            return Err(Error::invalid("income", "must be >= 0"));
        }
        if !(self.penalty >= 0.0) {
            return Err(Error::invalid("penalty", "must be >= 0"));
        }
        if !(self.per_server_capacity > 0.0) {
            return Err(Error::invalid("per_server_capacity", "must be > 0"));
        }
        if !(self.drop_threshold >= 0.0) {
            return Err(Error::invalid("drop_threshold", "must be >= 0"));
        }
        Ok(())
    }
}

/// Hardware and energy parameters of one data center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataCenterSpec {
    /// Idle draw per server, kW.
    pub idle_power: f64,
    /// Peak draw per server, kW.
    pub peak_power: f64,
    /// Power usage effectiveness, ≥ 1.
    pub pue: f64,
    /// M_i, servers installed.
    pub max_servers: u32,
    /// d_i, seconds from the distribution center.
    pub network_delay: f64,
    /// C_g, levelized cost of local renewable energy, currency/kWh.
    pub green_unit_cost: f64,
}

impl DataCenterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.idle_power >= 0.0) {
            return Err(Error::invalid("idle_power", "must be >= 0"));
        }
        if !(self.peak_power >= self.idle_power) {
            return Err(Error::invalid("peak_power", "must be >= idle_power"));
        }
        if !(self.pue >= 1.0) {
            return Err(Error::invalid("pue", "must be ≥ 1"));
        }
        if self.max_servers < 1 {
            return Err(Error::invalid("max_servers", "must be >= 1"));
        }
        if !(self.network_delay >= 0.0) {
            return Err(Error::invalid("network_delay", "must be >= 0"));
        }
        if !(self.green_unit_cost >= 0.0) {
            return Err(Error::invalid("green_unit_cost", "must be >= 0"));
        }
        Ok(())
    }

    /// Per-server draw that does not depend on utilization:
    /// `P_idle + (E_usage - 1)·P_peak`.
    pub fn base_power(&self) -> f64 {
        self.idle_power + (self.pue - 1.0) * self.peak_power
    }

    /// Extra draw per server at full utilization: `P_peak - P_idle`.
    pub fn proportional_power(&self) -> f64 {
        self.peak_power - self.idle_power
    }
}

/// Checks the cross-type constraint `network_delay ≤ deadline` for every
/// pair plus each item's own invariants.
pub fn validate_instance(dcs: &[DataCenterSpec], classes: &[ServiceClass]) -> Result<()> {
    if dcs.is_empty() {
        return Err(Error::invalid("data_centers", "at least one is required"));
    }
    if classes.is_empty() {
        return Err(Error::invalid("classes", "at least one is required"));
    }
    for (i, dc) in dcs.iter().enumerate() {
        dc.validate().map_err(|e| prefix(e, &format!("data_centers[{i}].")))?;
    }
    for (j, c) in classes.iter().enumerate() {
        c.validate().map_err(|e| prefix(e, &format!("classes[{j}].")))?;
    }
    let min_deadline = classes.iter().map(|c| c.deadline).fold(f64::INFINITY, f64::min);
    for (i, dc) in dcs.iter().enumerate() {
        if dc.network_delay >= min_deadline {
            return Err(Error::invalid(
                format!("data_centers[{i}].network_delay"),
                "must be below every class deadline",
            ));
        }
    }
    Ok(())
}

fn prefix(e: Error, p: &str) -> Error {
    match e {
        Error::Invalid { field, reason } => Error::Invalid { field: format!("{p}{field}"), reason },
        other => other,
    }
}

/// Forecast inputs for one time slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEnvironment {
    /// W_i, renewable energy available during the slot at each DC, kWh.
    pub green_energy: Vec<f64>,
    /// C_b, grid price at each DC, currency/kWh.
    pub brown_price: Vec<f64>,
    /// T, seconds.
    pub slot_length: f64,
    /// Arrival statistics per class; `class_stats[j].mean_rate` is λ_j.
    pub class_stats: Vec<WorkloadStats>,
}

impl SlotEnvironment {
    pub fn validate(&self, n_dc: usize, n_class: usize) -> Result<()> {
        if self.green_energy.len() != n_dc {
            return Err(Error::invalid("green_energy", format!("expected {n_dc} values")));
        }
        if self.brown_price.len() != n_dc {
            return Err(Error::invalid("brown_price", format!("expected {n_dc} values")));
        }
        if self.class_stats.len() != n_class {
            return Err(Error::invalid("class_stats", format!("expected {n_class} entries")));
        }
        if let Some(i) = self.green_energy.iter().position(|w| !(*w >= 0.0)) {
            return Err(Error::invalid(format!("green_energy[{i}]"), "must be >= 0"));
        }
        if let Some(i) = self.brown_price.iter().position(|p| !(*p >= 0.0)) {
            return Err(Error::invalid(format!("brown_price[{i}]"), "must be >= 0"));
        }
        if !(self.slot_length > 0.0) {
            return Err(Error::invalid("slot_length", "must be > 0"));
        }
        for (j, s) in self.class_stats.iter().enumerate() {
            s.validate().map_err(|e| prefix(e, &format!("class_stats[{j}].")))?;
        }
        Ok(())
    }

    pub fn class_mean(&self, j: usize) -> f64 {
        self.class_stats[j].mean_rate
    }

    /// Price of the energy feeding a queue of `kind` at DC `i`.
    pub fn unit_price(&self, dc: &DataCenterSpec, i: usize, kind: QueueKind) -> f64 {
        match kind {
            QueueKind::Green => dc.green_unit_cost,
            QueueKind::Brown => self.brown_price[i],
        }
    }
}

/// Facility power of `m` servers at average utilization `u`, kW.
pub fn total_power(m: f64, utilization: f64, dc: &DataCenterSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&utilization) {
        return Err(Error::invalid("utilization", "must lie in [0, 1]"));
    }
    if !(m >= 0.0) {
        return Err(Error::invalid("servers", "must be >= 0"));
    }
    Ok(m * dc.base_power() + m * dc.proportional_power() * utilization)
}

/// Service rate and allocated rate of one queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueRates {
    pub alloc_rate: f64,
    pub service_rate: f64,
}

/// Power drawn by one family of queues (all green or all brown) at one DC,
/// kW. `rates[j]` and `loss[j]` belong to class j.
///
/// Servers switched on are `Σ μ_j/k_j`; their busy fraction comes from the
/// requests actually served, `(1 - P_L)·λ`.
pub fn queue_power(rates: &[QueueRates], classes: &[ServiceClass], dc: &DataCenterSpec, loss: &[f64]) -> f64 {
    let servers: f64 = rates.iter().zip(classes).map(|(r, c)| r.service_rate / c.per_server_capacity).sum();
    let busy: f64 =
        rates.iter().zip(classes).zip(loss).map(|((r, c), p)| (1.0 - p) * r.alloc_rate / c.per_server_capacity).sum();
    dc.base_power() * servers + dc.proportional_power() * busy
}

/// Green power at one DC; identical in form to the brown side.
pub fn green_power(rates: &[QueueRates], classes: &[ServiceClass], dc: &DataCenterSpec, loss: &[f64]) -> f64 {
    queue_power(rates, classes, dc, loss)
}

/// Revenue of one queue over a slot: on-time income minus late penalties.
pub fn class_revenue(alloc_rate: f64, loss_prob: f64, class: &ServiceClass, slot_length: f64) -> f64 {
    let served = alloc_rate * slot_length;
    (1.0 - loss_prob) * class.income * served - loss_prob * class.penalty * served
}

/// Contribution of a single queue to the slot profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueProfit {
    pub dc: usize,
    pub class: usize,
    pub kind: QueueKind,
    pub loss_prob: f64,
    pub revenue: f64,
    /// Average power attributable to this queue, kW.
    pub power_kw: f64,
    pub energy_kwh: f64,
    pub cost: f64,
}

impl QueueProfit {
    pub fn profit(&self) -> f64 {
        self.revenue - self.cost
    }
}

/// Profit of one slot split by queue and by energy source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitBreakdown {
    pub queues: Vec<QueueProfit>,
    pub green_revenue: f64,
    pub green_cost: f64,
    pub brown_revenue: f64,
    pub brown_cost: f64,
}

impl ProfitBreakdown {
    pub fn green_profit(&self) -> f64 {
        self.green_revenue - self.green_cost
    }

    pub fn brown_profit(&self) -> f64 {
        self.brown_revenue - self.brown_cost
    }

    pub fn total(&self) -> f64 {
        self.green_profit() + self.brown_profit()
    }

    /// Profit earned at DC `i`.
    pub fn dc_profit(&self, i: usize) -> f64 {
        self.queues.iter().filter(|q| q.dc == i).map(QueueProfit::profit).sum()
    }
}

/// G/D/1 loss probability of one queue, zero for an empty queue.
pub fn queue_loss(
    stats: &WorkloadStats,
    alloc_rate: f64,
    service_rate: f64,
    class: &ServiceClass,
    dc: &DataCenterSpec,
    search: &SearchConfig,
) -> Result<f64> {
    if alloc_rate == 0.0 {
        return Ok(0.0);
    }
    let q = QueueSpec::new(alloc_rate, service_rate, class.deadline, dc.network_delay)?;
    Ok(loss_probability(stats, &q, search)?.loss_prob)
}

/// Slot profit `Profit_g + Profit_b` of an allocation under the G/D/1 model.
pub fn slot_profit(
    alloc: &Allocation,
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    search: &SearchConfig,
) -> Result<ProfitBreakdown> {
    slot_profit_with(alloc, env, dcs, classes, |i, j, _kind, lam, mu| {
        queue_loss(&env.class_stats[j], lam, mu, &classes[j], &dcs[i], search)
    })
}

/// Slot profit with a caller-supplied loss model
/// `(dc, class, kind, λ, μ) -> P_L`.
pub fn slot_profit_with<F>(
    alloc: &Allocation,
    env: &SlotEnvironment,
    dcs: &[DataCenterSpec],
    classes: &[ServiceClass],
    mut loss: F,
) -> Result<ProfitBreakdown>
where
    F: FnMut(usize, usize, QueueKind, f64, f64) -> Result<f64>,
{
    let (n_dc, n_class) = (dcs.len(), classes.len());
    if alloc.n_dc() != n_dc || alloc.n_class() != n_class {
        return Err(Error::invalid("allocation", "shape does not match the instance"));
    }
    env.validate(n_dc, n_class)?;
    let t = env.slot_length;
    let mut out = ProfitBreakdown {
        queues: Vec::with_capacity(2 * n_dc * n_class),
        green_revenue: 0.0,
        green_cost: 0.0,
        brown_revenue: 0.0,
        brown_cost: 0.0,
    };
    for (i, dc) in dcs.iter().enumerate() {
        for kind in [QueueKind::Green, QueueKind::Brown] {
            let price = env.unit_price(dc, i, kind);
            let mut rates = Vec::with_capacity(n_class);
            let mut losses = Vec::with_capacity(n_class);
            for j in 0..n_class {
                let (lam, mu) = alloc.queue(i, j, kind);
                rates.push(QueueRates { alloc_rate: lam, service_rate: mu });
                losses.push(loss(i, j, kind, lam, mu)?);
            }
            for (j, class) in classes.iter().enumerate() {
                // queue_power is linear across classes, so each class's own
                // share can be computed in isolation
                let power = queue_power(&rates[j..=j], std::slice::from_ref(class), dc, &losses[j..=j]);
                let energy = power * t / SECONDS_PER_HOUR;
                let q = QueueProfit {
                    dc: i,
                    class: j,
                    kind,
                    loss_prob: losses[j],
                    revenue: class_revenue(rates[j].alloc_rate, losses[j], class, t),
                    power_kw: power,
                    energy_kwh: energy,
                    cost: price * energy,
                };
                match kind {
                    QueueKind::Green => {
                        out.green_revenue += q.revenue;
                        out.green_cost += q.cost;
                    }
                    QueueKind::Brown => {
                        out.brown_revenue += q.revenue;
                        out.brown_cost += q.cost;
                    }
                }
                out.queues.push(q);
            }
        }
    }
    Ok(out)
}

/// Margin of the per-(DC, class) profitability condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitabilityPair {
    pub dc: usize,
    pub class: usize,
    /// `δ_j - (P_peak - P_idle)/k_j · max(C_b, C_g) / 3600`, currency/request.
    pub margin: f64,
}

impl ProfitabilityPair {
    pub fn ok(&self) -> bool {
        self.margin > 0.0
    }
}

/// Profitability condition for every (DC, class) pair. When every pair
/// passes, the per-slot program is concave in the region `μ ≥ 1`.
pub fn profitability_check(
    classes: &[ServiceClass],
    dcs: &[DataCenterSpec],
    env: &SlotEnvironment,
) -> Vec<ProfitabilityPair> {
    let mut out = Vec::with_capacity(dcs.len() * classes.len());
    for (i, dc) in dcs.iter().enumerate() {
        let price = env.brown_price[i].max(dc.green_unit_cost);
        for (j, c) in classes.iter().enumerate() {
            let energy_per_request = dc.proportional_power() / c.per_server_capacity / SECONDS_PER_HOUR;
            out.push(ProfitabilityPair { dc: i, class: j, margin: c.income - energy_per_request * price });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc() -> DataCenterSpec {
        DataCenterSpec {
            idle_power: 0.1,
            peak_power: 0.2,
            pue: 1.2,
            max_servers: 100,
            network_delay: 0.0,
            green_unit_cost: 0.0,
        }
    }

    fn class(k: f64) -> ServiceClass {
        ServiceClass { deadline: 1.0, income: 1.0, penalty: 0.5, per_server_capacity: k, drop_threshold: 10.0 }
    }

    #[test]
    fn total_power_examples() {
        let d = dc();
        assert!((total_power(1.0, 0.0, &d).unwrap() - 0.14).abs() < 1e-15);
        assert!((total_power(1.0, 1.0, &d).unwrap() - 0.24).abs() < 1e-15);
        assert_eq!(total_power(0.0, 0.7, &d).unwrap(), 0.0);
        assert!(total_power(1.0, 1.1, &d).is_err());
        assert!(total_power(1.0, -0.1, &d).is_err());
    }

    #[test]
    fn green_power_examples() {
        let d = dc();
        let cls = [class(10.0)];
        // one server, no load: base only
        let idle = green_power(&[QueueRates { alloc_rate: 0.0, service_rate: 10.0 }], &cls, &d, &[0.0]);
        assert!((idle - total_power(1.0, 0.0, &d).unwrap()).abs() < 1e-15);
        // one fully used server
        let full = green_power(&[QueueRates { alloc_rate: 10.0, service_rate: 10.0 }], &cls, &d, &[0.0]);
        assert!((full - total_power(1.0, 1.0, &d).unwrap()).abs() < 1e-15);
        // 2 + 1 servers at utilization (1 + 0.5)/3
        let cls2 = [class(10.0), class(20.0)];
        let rates =
            [QueueRates { alloc_rate: 10.0, service_rate: 20.0 }, QueueRates { alloc_rate: 10.0, service_rate: 20.0 }];
        let p = green_power(&rates, &cls2, &d, &[0.0, 0.0]);
        assert!((p - total_power(3.0, 0.5, &d).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn revenue_examples() {
        let c = ServiceClass { income: 2.0, penalty: 3.0, ..class(10.0) };
        assert_eq!(class_revenue(5.0, 0.0, &c, 60.0), 2.0 * 5.0 * 60.0);
        assert_eq!(class_revenue(5.0, 1.0, &c, 60.0), -3.0 * 5.0 * 60.0);
        let sym = ServiceClass { income: 2.0, penalty: 2.0, ..class(10.0) };
        assert_eq!(class_revenue(5.0, 0.5, &sym, 60.0), 0.0);
    }

    #[test]
    fn profitability_examples() {
        let d = DataCenterSpec { idle_power: 0.1, peak_power: 0.2, ..dc() };
        let env = SlotEnvironment {
            green_energy: vec![0.0],
            brown_price: vec![50.0],
            slot_length: 60.0,
            class_stats: vec![WorkloadStats::iid(10.0, 0.1).unwrap()],
        };
        let c = ServiceClass { income: 10.0, per_server_capacity: 100.0, ..class(100.0) };
        let r = profitability_check(std::slice::from_ref(&c), std::slice::from_ref(&d), &env);
        // 10 - 0.1/100 · 50 / 3600
        assert!((r[0].margin - (10.0 - 0.001 * 50.0 / 3600.0)).abs() < 1e-15);
        assert!(r[0].ok());

        let zero = ServiceClass { income: 0.0, ..c.clone() };
        assert!(!profitability_check(&[zero], std::slice::from_ref(&d), &env)[0].ok());

        let free = SlotEnvironment { brown_price: vec![0.0], ..env };
        let tiny = ServiceClass { income: 1e-12, ..c };
        assert!(profitability_check(&[tiny], &[d], &free)[0].ok());
    }

    #[test]
    fn pue_below_one_rejected() {
        let bad = DataCenterSpec { pue: 0.9, ..dc() };
        assert_eq!(bad.validate().unwrap_err().to_string(), "pue must be ≥ 1");
    }

    #[test]
    fn network_delay_must_stay_below_deadlines() {
        let d = DataCenterSpec { network_delay: 1.0, ..dc() };
        assert!(validate_instance(&[d], &[class(10.0)]).is_err());
    }
}
