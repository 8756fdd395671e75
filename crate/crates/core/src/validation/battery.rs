//! Analytic-versus-simulated loss over a grid of queue settings.

use serde::{Deserialize, Serialize};

use super::mc::{mc_loss, McConfig};
use crate::error::{Error, Result};
use crate::loss::{loss_probability, QueueSpec, SearchConfig, WorkloadStats};

/// Grid and pass rule. A cell counts only when the analytic loss lies in
/// `band`; the battery passes when at least `min_share` of counted cells
/// agree with the simulation to within `max_decades` orders of magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossBattery {
    pub arrival_rate: f64,
    pub cvs: Vec<f64>,
    /// μ/λ values.
    pub ratios: Vec<f64>,
    /// D - d values, seconds.
    pub slacks: Vec<f64>,
    pub band: (f64, f64),
    pub max_decades: f64,
    pub min_share: f64,
}

impl Default for LossBattery {
    fn default() -> Self {
        Self {
            arrival_rate: 100.0,
            cvs: vec![0.1, 0.3],
            ratios: vec![1.05, 1.1, 1.2, 1.5],
            slacks: vec![1.0, 5.0, 30.0],
            band: (1e-4, 1e-1),
            max_decades: 0.5,
            min_share: 0.8,
        }
    }
}

impl LossBattery {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0) {
            return Err(Error::invalid("arrival_rate", "must be > 0"));
        }
        if self.cvs.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::invalid("cvs", "must all be > 0"));
        }
        if self.ratios.iter().any(|r| !(*r >= 1.0)) {
            return Err(Error::invalid("ratios", "must all be >= 1"));
        }
        if self.slacks.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("slacks", "must all be >= 0"));
        }
        if !(self.band.0 > 0.0 && self.band.0 < self.band.1) {
            return Err(Error::invalid("band", "must satisfy 0 < low < high"));
        }
        if !(self.max_decades > 0.0) || !(0.0..=1.0).contains(&self.min_share) {
            return Err(Error::invalid("max_decades", "and min_share must be > 0 and in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryCell {
    pub cv: f64,
    pub ratio: f64,
    pub slack: f64,
    pub analytic: f64,
    pub simulated: f64,
    pub half_width: f64,
    /// `|log10(analytic) - log10(simulated)|`; infinite when the simulation
    /// saw no drops.
    pub decades: f64,
    pub in_band: bool,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub cells: Vec<BatteryCell>,
    pub counted: usize,
    pub agreeing: usize,
    /// `agreeing / counted`; NaN when no cell is counted.
    pub share: f64,
    pub passed: bool,
}

impl BatteryReport {
    /// Counted cells that disagree.
    pub fn outliers(&self) -> impl Iterator<Item = &BatteryCell> {
        self.cells.iter().filter(|c| c.in_band && !c.agrees)
    }
}

/// Runs every (C_v, μ/λ, D - d) cell with i.i.d. arrivals.
pub fn run_loss_battery(battery: &LossBattery, mc: &McConfig) -> Result<BatteryReport> {
    battery.validate()?;
    let lam = battery.arrival_rate;
    let search = SearchConfig::default();
    let mut cells = Vec::new();
    for &cv in &battery.cvs {
        let stats = WorkloadStats::iid(lam, cv)?;
        for &ratio in &battery.ratios {
            for &slack in &battery.slacks {
                let q = QueueSpec::new(lam, ratio * lam, slack, 0.0)?;
                let analytic = loss_probability(&stats, &q, &search)?.loss_prob;
                let sim = mc_loss(&stats, &q, mc)?;
                let decades = (analytic.log10() - sim.estimate.log10()).abs();
                let decades = if decades.is_nan() { f64::INFINITY } else { decades };
                let in_band = analytic >= battery.band.0 && analytic <= battery.band.1;
                cells.push(BatteryCell {
                    cv,
                    ratio,
                    slack,
                    analytic,
                    simulated: sim.estimate,
                    half_width: sim.half_width,
                    decades,
                    in_band,
                    agrees: decades <= battery.max_decades,
                });
            }
        }
    }
    let counted = cells.iter().filter(|c| c.in_band).count();
    let agreeing = cells.iter().filter(|c| c.in_band && c.agrees).count();
    let share = if counted > 0 { agreeing as f64 / counted as f64 } else { f64::NAN };
    Ok(BatteryReport { cells, counted, agreeing, share, passed: counted > 0 && share >= battery.min_share })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_battery_counts_band_cells() {
        let b = LossBattery { cvs: vec![0.3], ratios: vec![1.1, 3.0], slacks: vec![1.0], ..Default::default() };
        let mc = McConfig { horizon: 2e4, replications: 4, ..Default::default() };
        let r = run_loss_battery(&b, &mc).unwrap();
        assert_eq!(r.cells.len(), 2);
        // μ = 3λ is far outside the band
        assert!(!r.cells[1].in_band);
        assert_eq!(r.counted, r.cells.iter().filter(|c| c.in_band).count());
    }
}
