//! TOML experiment configuration.
//!
//! Every section has defaults, so an empty file is a valid desk-scale
//! experiment (20 devices, `n_f = 5`, 50 rounds, 3 repeats, synthetic data).
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::learning::data::SyntheticSpec;
use crate::learning::TrainConfig;
use crate::radio::{
    arithmetic_progression, incremental_interference, ChannelParams, ComputeProfile, LinkGrid, Policy, RadioError,
};
use crate::scheduler::SchedulerConfig;
use crate::strategies::{ColdStart, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: usize,
    pub repeats: usize,
    pub strategies: Vec<StrategyKind>,
    pub output_dir: PathBuf,
    pub network: NetworkConfig,
    pub channel: ChannelParams,
    pub compute: ComputeProfile,
    pub grid: GridConfig,
    pub policy: Policy,
    pub scheduler: SchedulerSection,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
    pub strategy: StrategySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            rounds: 50,
            repeats: 3,
            strategies: StrategyKind::ALL.to_vec(),
            output_dir: PathBuf::from("results"),
            network: NetworkConfig::default(),
            channel: ChannelParams::default(),
            compute: ComputeProfile::default(),
            grid: GridConfig::default(),
            policy: Policy::default(),
            scheduler: SchedulerSection::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            data: DataConfig::default(),
            strategy: StrategySection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Distance uniform in `[min, max]`.
    UniformDistance,
    /// Uniform over the annulus area.
    UniformArea,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub devices: usize,
    /// Final participants per round.
    pub n_f: usize,
    /// Candidate count; `ceil(1.5 * n_f)` when absent.
    pub n_p: Option<usize>,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub placement: Placement,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            devices: 20,
            n_f: 5,
            n_p: None,
            min_distance_m: 100.0,
            max_distance_m: 500.0,
            placement: Placement::UniformDistance,
        }
    }
}

impl NetworkConfig {
    pub fn n_p(&self) -> usize {
        self.n_p.unwrap_or((self.n_f * 3).div_ceil(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub bandwidth_min_hz: f64,
    pub bandwidth_max_hz: f64,
    pub bandwidth_step_hz: f64,
    pub power_min_w: f64,
    pub power_max_w: f64,
    pub power_step_w: f64,
    /// Uplink RBs; `n_p` when absent.
    pub rb_count: Option<usize>,
    /// `I_k = base + k * step`.
    pub interference_base_w: f64,
    pub interference_step_w: f64,
    /// `B_T`; `n_f * 1.5 MHz` when absent.
    pub bandwidth_budget_hz: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bandwidth_min_hz: 1e6,
            bandwidth_max_hz: 2e6,
            bandwidth_step_hz: 1e5,
            power_min_w: 0.008,
            power_max_w: 0.012,
            power_step_w: 2.5e-4,
            rb_count: None,
            interference_base_w: 1e-9,
            interference_step_w: 1e-9,
            bandwidth_budget_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    /// Joules per participant; `10 * max_energy_j` when absent.
    pub lambda: Option<f64>,
    pub time_budget_s: f64,
    pub oracle_limit: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            lambda: None,
            time_budget_s: 30.0,
            oracle_limit: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub bits_per_param: u32,
    pub header_bits: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            bits_per_param: 32,
            header_bits: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            local_epochs: 1,
            batch_size: 10,
            learning_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        features: usize,
        samples_per_class: usize,
        separation: f64,
        noise: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            classes: 10,
            features: 64,
            samples_per_class: 500,
            separation: 1.0,
            noise: 1.0,
        }
    }
}

impl DataSource {
    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match *self {
            DataSource::Synthetic {
                classes,
                features,
                samples_per_class,
                separation,
                noise,
            } => Some(SyntheticSpec {
                classes,
                features,
                samples_per_class,
                separation,
                noise,
            }),
            DataSource::Idx { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub base_size: usize,
    pub dominant_fraction: f64,
    pub size_factor_min: f64,
    pub size_factor_max: f64,
    pub rotation_limit_deg: f64,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::default(),
            base_size: 200,
            dominant_fraction: 0.9,
            size_factor_min: 0.25,
            size_factor_max: 1.0,
            rotation_limit_deg: 45.0,
            train_fraction: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    /// Fixed allocation of the channel-unaware baselines and `*_wopt`.
    pub fixed_bandwidth_hz: f64,
    pub fixed_power_w: f64,
    pub poc_cold_start: ColdStart,
    /// Disable policy blocking and channel errors.
    pub force_success: bool,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            fixed_bandwidth_hz: 1e6,
            fixed_power_w: 0.01,
            poc_cold_start: ColdStart::Infinity,
            force_success: false,
        }
    }
}

fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> HarnessError {
    HarnessError::Invalid {
        field: field.into(),
        constraint: constraint.into(),
    }
}

fn radio(section: &str, e: RadioError) -> HarnessError {
    match e {
        RadioError::InvalidParameter { field, constraint } => invalid(format!("{section}.{field}"), constraint),
        other => invalid(section, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn n_p(&self) -> usize {
        self.network.n_p()
    }

    pub fn rb_count(&self) -> usize {
        self.grid.rb_count.unwrap_or_else(|| self.n_p())
    }

    pub fn bandwidth_budget_hz(&self) -> f64 {
        self.grid.bandwidth_budget_hz.unwrap_or(self.network.n_f as f64 * 1.5e6)
    }

    pub fn lambda(&self) -> f64 {
        self.scheduler.lambda.unwrap_or(10.0 * self.policy.max_energy_j)
    }

    pub fn link_grid(&self) -> LinkGrid {
        let g = &self.grid;
        LinkGrid {
            bandwidths_hz: arithmetic_progression(g.bandwidth_min_hz, g.bandwidth_max_hz, g.bandwidth_step_hz),
            powers_w: arithmetic_progression(g.power_min_w, g.power_max_w, g.power_step_w),
            rb_interference_w: incremental_interference(self.rb_count(), g.interference_base_w, g.interference_step_w),
            bandwidth_budget_hz: self.bandwidth_budget_hz(),
            min_power_w: g.power_min_w,
            max_power_w: g.power_max_w,
        }
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            lambda: self.lambda(),
            max_devices: self.network.n_f,
            bandwidth_budget_hz: self.bandwidth_budget_hz(),
            time_budget_s: self.scheduler.time_budget_s,
            oracle_limit: self.scheduler.oracle_limit,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            local_epochs: self.training.local_epochs,
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            seed: self.seed,
        }
    }

    /// Checks every section; the error names the offending field.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be >= 1"));
        }
        if self.repeats == 0 {
            return Err(invalid("repeats", "must be >= 1"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "must name at least one strategy"));
        }

        let net = &self.network;
        if net.devices == 0 {
            return Err(invalid("network.devices", "must be >= 1"));
        }
        if net.n_f == 0 || net.n_f > net.devices {
            return Err(invalid("network.n_f", "must lie in [1, devices]"));
        }
        if self.n_p() < net.n_f || self.n_p() > net.devices {
            return Err(invalid("network.n_p", "must lie in [n_f, devices]"));
        }
        if !(net.min_distance_m > 0.0 && net.min_distance_m <= net.max_distance_m) {
            return Err(invalid(
                "network.min_distance_m",
                "need 0 < min_distance_m <= max_distance_m",
            ));
        }

        self.channel.validate().map_err(|e| radio("channel", e))?;
        self.policy.validate().map_err(|e| radio("policy", e))?;
        let c = &self.compute;
        if !(c.energy_coefficient > 0.0 && c.cpu_cycles > 0.0 && c.clock_hz > 0.0) {
            return Err(invalid(
                "compute",
                "energy_coefficient, cpu_cycles and clock_hz must be > 0",
            ));
        }

        let g = &self.grid;
        if !(g.bandwidth_step_hz > 0.0 && g.bandwidth_min_hz > 0.0 && g.bandwidth_min_hz <= g.bandwidth_max_hz) {
            return Err(invalid("grid.bandwidth_min_hz", "need 0 < min <= max and step > 0"));
        }
        if !(g.power_step_w > 0.0 && g.power_min_w > 0.0 && g.power_min_w <= g.power_max_w) {
            return Err(invalid("grid.power_min_w", "need 0 < min <= max and step > 0"));
        }
        if !(g.interference_base_w >= 0.0 && g.interference_step_w >= 0.0) {
            return Err(invalid("grid.interference_base_w", "interference must be >= 0"));
        }
        if self.rb_count() < net.n_f {
            return Err(invalid("grid.rb_count", "must be >= n_f"));
        }
        let grid = self.link_grid();
        grid.validate().map_err(|e| radio("grid", e))?;
        if grid.bandwidth_index(self.strategy.fixed_bandwidth_hz).is_none() {
            return Err(invalid("strategy.fixed_bandwidth_hz", "must be a bandwidth grid point"));
        }
        if grid.power_index(self.strategy.fixed_power_w).is_none() {
            return Err(invalid("strategy.fixed_power_w", "must be a power grid point"));
        }

        let s = &self.scheduler;
        if let Some(l) = s.lambda {
            if !(l >= 0.0) {
                return Err(invalid("scheduler.lambda", "must be >= 0"));
            }
        }
        if !(s.time_budget_s > 0.0) {
            return Err(invalid("scheduler.time_budget_s", "must be > 0"));
        }
        if !(s.oracle_limit >= 1.0) {
            return Err(invalid("scheduler.oracle_limit", "must be >= 1"));
        }

        if self.model.hidden.contains(&0) {
            return Err(invalid("model.hidden", "layer widths must be >= 1"));
        }
        if self.model.bits_per_param == 0 {
            return Err(invalid("model.bits_per_param", "must be >= 1"));
        }
        let t = &self.training;
        if t.local_epochs == 0 {
            return Err(invalid("training.local_epochs", "must be >= 1"));
        }
        if t.batch_size == 0 {
            return Err(invalid("training.batch_size", "must be >= 1"));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(invalid("training.learning_rate", "must be finite and > 0"));
        }

        let d = &self.data;
        if let DataSource::Synthetic {
            classes,
            features,
            samples_per_class,
            separation,
            noise,
        } = d.source
        {
            if classes < 2 {
                return Err(invalid("data.source.classes", "must be >= 2"));
            }
            if features == 0 || samples_per_class == 0 {
                return Err(invalid(
                    "data.source.features",
                    "features and samples_per_class must be >= 1",
                ));
            }
            if !(separation >= 0.0 && noise >= 0.0) {
                return Err(invalid("data.source.separation", "separation and noise must be >= 0"));
            }
        }
        if d.base_size == 0 {
            return Err(invalid("data.base_size", "must be >= 1"));
        }
        if !(d.dominant_fraction > 0.0 && d.dominant_fraction <= 1.0) {
            return Err(invalid("data.dominant_fraction", "must lie in (0, 1]"));
        }
        if !(d.size_factor_min > 0.0 && d.size_factor_min <= d.size_factor_max) {
            return Err(invalid(
                "data.size_factor_min",
                "need 0 < size_factor_min <= size_factor_max",
            ));
        }
        if !(d.rotation_limit_deg >= 0.0) {
            return Err(invalid("data.rotation_limit_deg", "must be >= 0"));
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(invalid("data.train_fraction", "must lie in (0, 1)"));
        }
        // every device needs at least one training sample
        let smallest = (d.base_size as f64 * d.size_factor_min).floor().max(1.0);
        if (smallest * d.train_fraction).round() < 1.0 {
            return Err(invalid(
                "data.base_size",
                "smallest partition would have no training samples",
            ));
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}
