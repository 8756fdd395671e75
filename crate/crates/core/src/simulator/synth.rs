use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::traces::{RawTraces, TraceSet};
use crate::error::{Error, Result};

/// Hourly series: either explicit values or a daily sinusoid
/// `mean + amplitude·cos(2π(h - peak_hour)/24)`, plus Gaussian AR(1) noise
/// with marginal standard deviation `noise_sd`. Values are clamped at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HourlyProfile {
    pub mean: f64,
    pub amplitude: f64,
    pub peak_hour: f64,
    pub noise_sd: f64,
    /// Overrides the sinusoid; cycled if shorter than the horizon.
    pub hourly: Option<Vec<f64>>,
}

impl Default for HourlyProfile {
    fn default() -> Self {
        Self { mean: 0.0, amplitude: 0.0, peak_hour: 12.0, noise_sd: 0.0, hourly: None }
    }
}

/// Per-second request rate of one class: a diurnal mean
/// `mean_rate·(1 + amplitude·cos(2π(h - peak_hour)/24))` times
/// `(1 + cv·e_t)` with `e_t` a unit-variance AR(1) process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadProfile {
    pub mean_rate: f64,
    /// Relative diurnal swing, in [0, 1).
    pub amplitude: f64,
    pub peak_hour: f64,
    pub cv: f64,
    /// Lag-1 correlation of the per-second noise, in [0, 1).
    pub ar1: f64,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        Self { mean_rate: 100.0, amplitude: 0.0, peak_hour: 14.0, cv: 0.2, ar1: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub hours: usize,
    pub slot_length: f64,
    pub lag_cap: usize,
    /// Green power per DC, kW.
    pub wind: Vec<HourlyProfile>,
    /// Brown price per DC, currency/kWh.
    pub price: Vec<HourlyProfile>,
    pub workload: Vec<WorkloadProfile>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { hours: 24, slot_length: 3600.0, lag_cap: 30, wind: Vec::new(), price: Vec::new(), workload: Vec::new() }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hours == 0 {
            return Err(Error::invalid("hours", "must be >= 1"));
        }
        if self.wind.is_empty() || self.wind.len() != self.price.len() {
            return Err(Error::invalid("wind", "needs one profile per DC, matching price"));
        }
        if self.workload.is_empty() {
            return Err(Error::invalid("workload", "needs at least one class"));
        }
        for (j, w) in self.workload.iter().enumerate() {
            if !(w.mean_rate >= 0.0) || !(0.0..1.0).contains(&w.amplitude) {
                return Err(Error::invalid(format!("workload[{j}]"), "needs mean_rate >= 0 and amplitude in [0, 1)"));
            }
            if !(w.cv >= 0.0) || !(0.0..1.0).contains(&w.ar1) {
                return Err(Error::invalid(format!("workload[{j}]"), "needs cv >= 0 and ar1 in [0, 1)"));
            }
        }
        for (name, set) in [("wind", &self.wind), ("price", &self.price)] {
            for (i, p) in set.iter().enumerate() {
                if !(p.noise_sd >= 0.0) {
                    return Err(Error::invalid(format!("{name}[{i}].noise_sd"), "must be >= 0"));
                }
            }
        }
        Ok(())
    }
}

fn diurnal(h: f64, peak: f64) -> f64 {
    (2.0 * PI * (h - peak) / 24.0).cos()
}

/// AR(1) noise with unit marginal variance.
fn ar1_series(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut e: f64 = StandardNormal.sample(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(e);
        let z: f64 = StandardNormal.sample(rng);
        e = phi * e + innov * z;
    }
    out
}

fn hourly_series(p: &HourlyProfile, hours: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = ar1_series(rng, hours, 0.7);
    (0..hours)
        .map(|h| {
            let base = match &p.hourly {
                Some(v) if !v.is_empty() => v[h % v.len()],
                _ => p.mean + p.amplitude * diurnal(h as f64, p.peak_hour),
            };
            (base + p.noise_sd * noise[h]).max(0.0)
        })
        .collect()
}

/// Raw hourly power/price and per-second rates; deterministic per seed.
pub fn synth_raw(spec: &SynthSpec, seed: u64) -> Result<RawTraces> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let green_kw = spec.wind.iter().map(|p| hourly_series(p, spec.hours, &mut rng)).collect();
    let price = spec.price.iter().map(|p| hourly_series(p, spec.hours, &mut rng)).collect();
    let seconds = spec.hours * 3600;
    let rates = spec
        .workload
        .iter()
        .map(|w| {
            let noise = ar1_series(&mut rng, seconds, w.ar1);
            (0..seconds)
                .map(|s| {
                    let h = s as f64 / 3600.0;
                    let mean = w.mean_rate * (1.0 + w.amplitude * diurnal(h, w.peak_hour));
                    (mean * (1.0 + w.cv * noise[s])).max(0.0)
                })
                .collect()
        })
        .collect();
    Ok(RawTraces { power_step: 3600.0, green_kw, price, rates })
}

/// Synthetic slots; deterministic per seed.
pub fn synth_traces(spec: &SynthSpec, seed: u64) -> Result<TraceSet> {
    synth_raw(spec, seed)?.into_slots(spec.slot_length, spec.lag_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            hours: 4,
            slot_length: 900.0,
            lag_cap: 5,
            wind: vec![HourlyProfile { mean: 10.0, amplitude: 5.0, ..Default::default() }],
            price: vec![HourlyProfile { mean: 0.1, ..Default::default() }],
            workload: vec![WorkloadProfile {
                mean_rate: 100.0,
                amplitude: 0.5,
                cv: 0.1,
                ar1: 0.5,
                ..Default::default()
            }],
        }
    }

    #[test]
    fn zero_amplitude_is_constant() {
        let s = SynthSpec {
            wind: vec![HourlyProfile { mean: 3.0, ..Default::default() }],
            workload: vec![WorkloadProfile { mean_rate: 50.0, amplitude: 0.0, cv: 0.0, ..Default::default() }],
            ..spec()
        };
        let t = synth_traces(&s, 1).unwrap();
        assert_eq!(t.len(), 16);
        for slot in &t.slots {
            assert!((slot.green_energy[0] - 3.0 * 0.25).abs() < 1e-12);
            assert_eq!(slot.class_stats[0].mean_rate, 50.0);
            assert_eq!(slot.class_stats[0].variance, 0.0);
        }
    }

    #[test]
    fn fixed_seed_reproduces() {
        let a = serde_json::to_string(&synth_traces(&spec(), 9).unwrap()).unwrap();
        let b = serde_json::to_string(&synth_traces(&spec(), 9).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&synth_traces(&spec(), 10).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn slot_means_follow_the_sinusoid() {
        let s = SynthSpec { hours: 24, slot_length: 3600.0, ..spec() };
        let t = synth_traces(&s, 4).unwrap();
        let w = &s.workload[0];
        for (h, slot) in t.slots.iter().enumerate() {
            // average of the cosine over the hour
            let mean: f64 = (0..3600)
                .map(|k| w.mean_rate * (1.0 + w.amplitude * diurnal(h as f64 + k as f64 / 3600.0, w.peak_hour)))
                .sum::<f64>()
                / 3600.0;
            let got = slot.class_stats[0].mean_rate;
            // AR(1) with φ = 0.5 inflates the variance of the mean threefold
            let sd = w.cv * mean * (3.0f64 / 3600.0).sqrt();
            assert!((got - mean).abs() <= 4.0 * sd, "hour {h}: {got} vs {mean}");
        }
    }
}
