//! Run configuration: a single TOML file with an explicit schema version.
//!
//! Defaults live in the `default_*` functions and `Default` impls below and
//! nowhere else. Relative paths are resolved against the config file's
//! directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use geoprofit_core::loss::WorkloadStats;
use geoprofit_core::optimizer::SolveOptions;
use geoprofit_core::power::{validate_instance, DataCenterSpec, ServiceClass, SlotEnvironment};
use geoprofit_core::simulator::{Baseline, SynthSpec};
use geoprofit_core::validation::{AuditGrid, BruteGrid, LossBattery, McConfig};
use geoprofit_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

fn default_idle_power() -> f64 {
    0.1
}
fn default_peak_power() -> f64 {
    0.2
}
fn default_pue() -> f64 {
    1.2
}
fn default_lag_cap() -> usize {
    30
}
fn default_fallback_cv() -> f64 {
    0.2
}
fn default_slot_length() -> f64 {
    900.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataCenterEntry {
    pub name: String,
    /// kW per server.
    #[serde(default = "default_idle_power")]
    pub idle_power: f64,
    /// kW per server.
    #[serde(default = "default_peak_power")]
    pub peak_power: f64,
    #[serde(default = "default_pue")]
    pub pue: f64,
    pub max_servers: u32,
    /// Seconds.
    #[serde(default)]
    pub network_delay: f64,
    /// Currency/kWh.
    #[serde(default)]
    pub green_unit_cost: f64,
}

impl DataCenterEntry {
    pub fn spec(&self) -> DataCenterSpec {
        DataCenterSpec {
            idle_power: self.idle_power,
            peak_power: self.peak_power,
            pue: self.pue,
            max_servers: self.max_servers,
            network_delay: self.network_delay,
            green_unit_cost: self.green_unit_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub name: String,
    /// Seconds.
    pub deadline: f64,
    /// Currency per request served in time.
    pub income: f64,
    /// Currency per late request.
    #[serde(default)]
    pub penalty: f64,
    /// Requests/s per server.
    pub per_server_capacity: f64,
    /// Dropped requests/s allowed per queue.
    pub drop_threshold: f64,
}

impl ClassEntry {
    pub fn spec(&self) -> ServiceClass {
        ServiceClass {
            deadline: self.deadline,
            income: self.income,
            penalty: self.penalty,
            per_server_capacity: self.per_server_capacity,
            drop_threshold: self.drop_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSection {
    pub baselines: Vec<Baseline>,
    /// Grid points per unit of μ/λ in the maximum-profit sweep.
    pub max_sweep_steps: usize,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        Self { baselines: Baseline::ALL.to_vec(), max_sweep_steps: 200 }
    }
}

/// Trace files in the CSV layout documented in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub files: Vec<PathBuf>,
    /// Seconds.
    #[serde(default = "default_slot_length")]
    pub slot_length: f64,
    /// Largest autocovariance lag estimated from per-second rates.
    #[serde(default = "default_lag_cap")]
    pub lag_cap: usize,
    /// C_v used when rate rows are coarser than one second.
    #[serde(default = "default_fallback_cv")]
    pub fallback_cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotClassEntry {
    /// Requests/s.
    pub mean_rate: f64,
    pub cv: f64,
    /// Normalized autocovariance at lags 1, 2, ... seconds.
    #[serde(default)]
    pub autocorr: Vec<f64>,
}

/// A single slot given inline, for `solve` and `brute-force`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSection {
    #[serde(default = "default_slot_length")]
    pub length: f64,
    /// kWh per DC.
    pub green_energy: Vec<f64>,
    /// Currency/kWh per DC.
    pub brown_price: Vec<f64>,
    pub classes: Vec<SlotClassEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    data_centers: Vec<DataCenterEntry>,
    #[serde(default)]
    classes: Vec<ClassEntry>,
    #[serde(default)]
    solver: SolveOptions,
    #[serde(default)]
    simulator: SimulatorSection,
    traces: Option<TraceSection>,
    generator: Option<SynthSpec>,
    slot: Option<SlotSection>,
    #[serde(default)]
    monte_carlo: McConfig,
    #[serde(default)]
    loss_battery: LossBattery,
    #[serde(default)]
    audit: AuditGrid,
    #[serde(default)]
    brute_force: BruteGrid,
}

/// Where a run's slots come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Files(TraceSection),
    Generator(SynthSpec),
}

/// Validated configuration. Holds at least one DC and one class unless it
/// is the default used by commands that need neither.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    /// Seeds the trace generator; `--seed` overrides every seed.
    pub seed: u64,
    pub data_centers: Vec<DataCenterEntry>,
    pub classes: Vec<ClassEntry>,
    pub solver: SolveOptions,
    pub simulator: SimulatorSection,
    pub traces: Option<TraceSource>,
    pub slot: Option<SlotEnvironment>,
    pub monte_carlo: McConfig,
    pub loss_battery: LossBattery,
    pub audit: AuditGrid,
    pub brute_force: BruteGrid,
}

impl RunConfig {
    pub fn dc_specs(&self) -> Vec<DataCenterSpec> {
        self.data_centers.iter().map(DataCenterEntry::spec).collect()
    }

    pub fn class_specs(&self) -> Vec<ServiceClass> {
        self.classes.iter().map(ClassEntry::spec).collect()
    }

    pub fn dc_names(&self) -> Vec<&str> {
        self.data_centers.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.name.as_str()).collect()
    }

    /// Applies `--seed` to every seeded component.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.solver.seed = seed;
        self.monte_carlo.seed = seed;
        self.audit.seed = seed;
    }
}

fn invalid(section: &str, e: CoreError) -> CliError {
    match e {
        CoreError::Invalid { field, reason } if section.is_empty() => CliError::Config(format!("{field} {reason}")),
        CoreError::Invalid { field, reason } => CliError::Config(format!("{section}.{field} {reason}")),
        other => CliError::Config(format!("{section}: {other}")),
    }
}

fn check_names<'a>(what: &str, names: impl Iterator<Item = &'a str>) -> CliResult<()> {
    let mut seen = HashSet::new();
    for (k, n) in names.enumerate() {
        if n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(CliError::Config(format!(
                "{what}[{k}].name must be non-empty and use only letters, digits, '_' or '-'"
            )));
        }
        if !seen.insert(n) {
            return Err(CliError::Config(format!("{what}[{k}].name duplicates \"{n}\"")));
        }
    }
    Ok(())
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses config text; relative paths are resolved against `base`.
pub fn parse_config(text: &str, base: &Path) -> CliResult<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    if raw.version != SCHEMA_VERSION {
        return Err(CliError::Config(format!("version {} is not supported (expected {SCHEMA_VERSION})", raw.version)));
    }
    let dcs: Vec<DataCenterSpec> = raw.data_centers.iter().map(DataCenterEntry::spec).collect();
    let classes: Vec<ServiceClass> = raw.classes.iter().map(ClassEntry::spec).collect();
    validate_instance(&dcs, &classes).map_err(|e| invalid("", e))?;
    check_names("data_centers", raw.data_centers.iter().map(|d| d.name.as_str()))?;
    check_names("classes", raw.classes.iter().map(|c| c.name.as_str()))?;
    raw.solver.validate().map_err(|e| invalid("solver", e))?;
    if raw.simulator.max_sweep_steps == 0 {
        return Err(CliError::Config("simulator.max_sweep_steps must be >= 1".into()));
    }
    raw.monte_carlo.validate().map_err(|e| invalid("monte_carlo", e))?;
    raw.loss_battery.validate().map_err(|e| invalid("loss_battery", e))?;
    if !(raw.audit.t_step > 0.0) || !(raw.audit.t_max >= 0.0) || raw.audit.n_max == 0 {
        return Err(CliError::Config("audit.t_step must be > 0, t_max >= 0 and n_max >= 1".into()));
    }
    let traces = match (raw.traces, raw.generator) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("traces and generator are mutually exclusive".into()));
        }
        (Some(mut t), None) => {
            if t.files.is_empty() {
                return Err(CliError::Config("traces.files must list at least one file".into()));
            }
            for f in &mut t.files {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
                if !f.is_file() {
                    return Err(CliError::Config(format!("traces.files: {} does not exist", f.display())));
                }
            }
            if !(t.slot_length >= 1.0) || t.slot_length.fract() != 0.0 {
                return Err(CliError::Config("traces.slot_length must be a whole number of seconds >= 1".into()));
            }
            if !(t.fallback_cv >= 0.0) {
                return Err(CliError::Config("traces.fallback_cv must be >= 0".into()));
            }
            Some(TraceSource::Files(t))
        }
        (None, Some(g)) => {
            g.validate().map_err(|e| invalid("generator", e))?;
            if g.wind.len() != dcs.len() || g.workload.len() != classes.len() {
                return Err(CliError::Config(
                    "generator needs one wind and price profile per data center and one workload per class".into(),
                ));
            }
            Some(TraceSource::Generator(g))
        }
        (None, None) => None,
    };
    let slot = raw.slot.map(|s| slot_env(&s, dcs.len(), classes.len())).transpose()?;
    let output_dir = raw.output_dir.map(|d| if d.is_relative() { base.join(d) } else { d });
    Ok(RunConfig {
        output_dir,
        seed: raw.seed,
        data_centers: raw.data_centers,
        classes: raw.classes,
        solver: raw.solver,
        simulator: raw.simulator,
        traces,
        slot,
        monte_carlo: raw.monte_carlo,
        loss_battery: raw.loss_battery,
        audit: raw.audit,
        brute_force: raw.brute_force,
    })
}

fn slot_env(s: &SlotSection, n_dc: usize, n_class: usize) -> CliResult<SlotEnvironment> {
    let mut class_stats = Vec::with_capacity(s.classes.len());
    for (j, c) in s.classes.iter().enumerate() {
        let var = (c.cv * c.mean_rate).powi(2);
        let mut acv = vec![var];
        acv.extend(c.autocorr.iter().map(|r| r * var));
        let stats = WorkloadStats::new(c.mean_rate, var, acv).map_err(|e| invalid(&format!("slot.classes[{j}]"), e))?;
        class_stats.push(stats);
    }
    let env = SlotEnvironment {
        green_energy: s.green_energy.clone(),
        brown_price: s.brown_price.clone(),
        slot_length: s.length,
        class_stats,
    };
    env.validate(n_dc, n_class).map_err(|e| invalid("slot", e))?;
    Ok(env)
}
