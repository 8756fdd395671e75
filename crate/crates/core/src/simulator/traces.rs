use serde::{Deserialize, Serialize};

use super::stats::estimate_stats;
use crate::error::{Error, Result};
use crate::loss::WorkloadStats;
use crate::power::{SlotEnvironment, SECONDS_PER_HOUR};

/// Forecast inputs of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    /// kWh available during the slot, per DC.
    pub green_energy: Vec<f64>,
    /// currency/kWh, per DC.
    pub brown_price: Vec<f64>,
    pub class_stats: Vec<WorkloadStats>,
}

/// Ordered slots of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub slot_length: f64,
    pub slots: Vec<SlotTrace>,
}

impl TraceSet {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn validate(&self, n_dc: usize, n_class: usize) -> Result<()> {
        if !(self.slot_length > 0.0) {
            return Err(Error::invalid("slot_length", "must be > 0"));
        }
        for k in 0..self.slots.len() {
            self.env(k).validate(n_dc, n_class).map_err(|e| match e {
                Error::Invalid { field, reason } => Error::Invalid { field: format!("slots[{k}].{field}"), reason },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn env(&self, k: usize) -> SlotEnvironment {
        let s = &self.slots[k];
        SlotEnvironment {
            green_energy: s.green_energy.clone(),
            brown_price: s.brown_price.clone(),
            slot_length: self.slot_length,
            class_stats: s.class_stats.clone(),
        }
    }

    /// Multiplies every brown price by `c`.
    pub fn scale_prices(&mut self, c: f64) {
        for s in &mut self.slots {
            for p in &mut s.brown_price {
                *p *= c;
            }
        }
    }
}

/// Time series before aggregation into slots.
///
/// Power and price are step functions sampled every `power_step` seconds;
/// request rates are per-second samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTraces {
    pub power_step: f64,
    /// `green_kw[i][h]`, kW over step h at DC i.
    pub green_kw: Vec<Vec<f64>>,
    /// `price[i][h]`, currency/kWh over step h at DC i.
    pub price: Vec<Vec<f64>>,
    /// `rates[j][s]`, requests/s of class j during second s.
    pub rates: Vec<Vec<f64>>,
}

impl RawTraces {
    pub fn duration(&self) -> f64 {
        let power = self.green_kw.first().map_or(0.0, |v| v.len() as f64 * self.power_step);
        let rates = self.rates.first().map_or(0.0, |v| v.len() as f64);
        power.min(rates)
    }

    /// Aggregates into slots of `slot_length` seconds. Energy is the
    /// integral of the step power, price the time average, and arrival
    /// statistics come from the per-second samples inside the slot.
    pub fn into_slots(&self, slot_length: f64, lag_cap: usize) -> Result<TraceSet> {
        if !(slot_length >= 1.0) || slot_length.fract() != 0.0 {
            return Err(Error::invalid("slot_length", "must be a whole number of seconds >= 1"));
        }
        if !(self.power_step > 0.0) {
            return Err(Error::invalid("power_step", "must be > 0"));
        }
        if self.green_kw.len() != self.price.len() {
            return Err(Error::invalid("price", "needs one series per DC"));
        }
        let n_slots = (self.duration() / slot_length).floor() as usize;
        let mut slots = Vec::with_capacity(n_slots);
        for k in 0..n_slots {
            let (t0, t1) = (k as f64 * slot_length, (k + 1) as f64 * slot_length);
            let green_energy =
                self.green_kw.iter().map(|s| integrate_step(s, self.power_step, t0, t1) / SECONDS_PER_HOUR).collect();
            let brown_price =
                self.price.iter().map(|s| integrate_step(s, self.power_step, t0, t1) / slot_length).collect();
            let (a, b) = (t0 as usize, t1 as usize);
            let class_stats =
                self.rates.iter().map(|r| estimate_stats(&r[a..b], lag_cap)).collect::<Result<Vec<_>>>()?;
            slots.push(SlotTrace { green_energy, brown_price, class_stats });
        }
        Ok(TraceSet { slot_length, slots })
    }
}

/// `∫_{t0}^{t1}` of a step function with values `v[h]` on `[h·step, (h+1)·step)`.
fn integrate_step(v: &[f64], step: f64, t0: f64, t1: f64) -> f64 {
    let first = (t0 / step).floor() as usize;
    let mut total = 0.0;
    let mut h = first;
    while h < v.len() {
        let (a, b) = (h as f64 * step, (h + 1) as f64 * step);
        if a >= t1 {
            break;
        }
        let overlap = b.min(t1) - a.max(t0);
        if overlap > 0.0 {
            total += v[h] * overlap;
        }
        h += 1;
    }
    total
}
