//! Device selection and exact uplink resource scheduling.
//!
//! The scheduling problem assigns each candidate device at most one
//! `(bandwidth j, RB k, power l)` tuple so that
//!
//! ```text
//! minimise  sum(e_U * c) - lambda * sum(c)
//! s.t.      at most one tuple per device, at most one device per RB,
//!           every tuple meets the delay / energy / PER policy and power bounds,
//!           sum of bandwidths <= B_T, number of assignments <= n_f.
//! ```
//!
//! Energies are scaled to integer nano-joules before optimisation so the
//! optimum and its lexicographic tie-break are exact.

mod oracle;
mod selection;
mod solver;

pub use oracle::{brute_force_schedule, enumeration_size};
pub use selection::{select_by_data, SelectionProblem};
pub use solver::solve_schedule;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::radio::{evaluate_link, ChannelParams, Device, LinkGrid, PacketSizes, Policy, RadioError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("cannot select {requested} devices out of {available}")]
    InfeasibleSelection { requested: usize, available: usize },
    #[error("selection problem has {ids} ids but {sizes} data sizes")]
    SelectionShape { ids: usize, sizes: usize },
    #[error("device {0} has an empty dataset")]
    EmptyDevice(usize),
    #[error("solver exceeded its {budget_s} s budget (bound gap {gap_j:.3e} J)")]
    BudgetExceeded {
        budget_s: f64,
        incumbent: Box<Schedule>,
        gap_j: f64,
    },
    #[error("oracle enumeration size {size:.3e} exceeds limit {limit:.3e}")]
    OracleLimit { size: f64, limit: f64 },
    #[error("invalid scheduler config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

/// One materialised, policy-feasible `(i, j, k, l)` tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAssignment {
    pub device_id: usize,
    pub bandwidth_index: usize,
    pub rb_index: usize,
    pub power_index: usize,
    pub upload_energy_j: f64,
    pub uplink_delay_s: f64,
    pub per: f64,
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub power_w: f64,
}

impl CandidateAssignment {
    pub fn key(&self) -> (usize, usize, usize, usize) {
        (self.device_id, self.bandwidth_index, self.rb_index, self.power_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Sorted by device id.
    pub assignments: Vec<CandidateAssignment>,
    pub objective_value: f64,
    /// Exact objective in nano-joules.
    pub objective_nj: i64,
    pub total_bandwidth_hz: f64,
    pub selected_count: usize,
}

impl Schedule {
    pub fn empty() -> Self {
        Self {
            assignments: Vec::new(),
            objective_value: 0.0,
            objective_nj: 0,
            total_bandwidth_hz: 0.0,
            selected_count: 0,
        }
    }

    /// Builds a schedule and computes its objective under `config`.
    pub fn from_assignments(mut assignments: Vec<CandidateAssignment>, config: &SchedulerConfig) -> Self {
        assignments.sort_by_key(|a| a.key());
        let lambda = to_nanojoules(config.lambda);
        let objective_nj: i64 = assignments
            .iter()
            .map(|a| to_nanojoules(a.upload_energy_j) - lambda)
            .sum();
        Self {
            total_bandwidth_hz: assignments.iter().map(|a| a.bandwidth_hz).sum(),
            selected_count: assignments.len(),
            objective_value: objective_nj as f64 * 1e-9,
            objective_nj,
            assignments,
        }
    }

    pub fn upload_energy_j(&self) -> f64 {
        self.assignments.iter().map(|a| a.upload_energy_j).sum()
    }

    pub fn keys(&self) -> Vec<(usize, usize, usize, usize)> {
        self.assignments.iter().map(|a| a.key()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Weight of the participant-count reward, in joules per device.
    pub lambda: f64,
    pub max_devices: usize,
    pub bandwidth_budget_hz: f64,
    #[serde(default = "default_time_budget")]
    pub time_budget_s: f64,
    #[serde(default = "default_oracle_limit")]
    pub oracle_limit: f64,
}

fn default_time_budget() -> f64 {
    30.0
}

fn default_oracle_limit() -> f64 {
    1e9
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(self.lambda >= 0.0) {
            return Err(SchedulerError::InvalidConfig("lambda must be >= 0".into()));
        }
        if self.max_devices == 0 {
            return Err(SchedulerError::InvalidConfig("max_devices must be >= 1".into()));
        }
        if !(self.bandwidth_budget_hz >= 0.0) {
            return Err(SchedulerError::InvalidConfig("bandwidth_budget_hz must be >= 0".into()));
        }
        if !(self.time_budget_s > 0.0) {
            return Err(SchedulerError::InvalidConfig("time_budget_s must be > 0".into()));
        }
        Ok(())
    }
}

/// A self-contained scheduling problem, as read by the `schedule` and
/// `oracle` subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleInstance {
    pub candidates: Vec<CandidateAssignment>,
    pub config: SchedulerConfig,
}

pub(crate) fn to_nanojoules(joules: f64) -> i64 {
    (joules * 1e9).round() as i64
}

pub(crate) fn to_hz(hz: f64) -> u64 {
    hz.round().max(0.0) as u64
}

/// Materialises every policy-feasible tuple for `devices`, evaluated at the
/// fading mean. Output is sorted by `(device, j, k, l)`.
pub fn enumerate_feasible(
    devices: &[Device],
    grid: &LinkGrid,
    params: &ChannelParams,
    policy: &Policy,
    packets: PacketSizes,
) -> Result<Vec<CandidateAssignment>, SchedulerError> {
    let mean = params.mean_fading();
    let mut out = Vec::new();
    let mut sorted: Vec<&Device> = devices.iter().collect();
    sorted.sort_by_key(|d| d.id);
    for device in sorted {
        for j in 0..grid.bandwidths_hz.len() {
            for k in 0..grid.rb_count() {
                for l in 0..grid.powers_w.len() {
                    let power = grid.powers_w[l];
                    if power < grid.min_power_w || power > grid.max_power_w {
                        continue;
                    }
                    let m = evaluate_link(device, j, k, l, grid, &mean, packets, policy)?;
                    if m.policy_ok {
                        out.push(CandidateAssignment {
                            device_id: device.id,
                            bandwidth_index: j,
                            rb_index: k,
                            power_index: l,
                            upload_energy_j: m.upload_energy_j,
                            uplink_delay_s: m.uplink_delay_s,
                            per: m.per,
                            bandwidth_hz: grid.bandwidths_hz[j],
                            power_w: power,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Keeps only candidates at bandwidth index `j` and power index `l`.
pub fn restrict_to_point(candidates: &[CandidateAssignment], j: usize, l: usize) -> Vec<CandidateAssignment> {
    candidates
        .iter()
        .filter(|c| c.bandwidth_index == j && c.power_index == l)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DeviceExclusivity(usize),
    RbExclusivity(usize),
    BandwidthBudget,
    MaxDevices,
    DelayRequirement(usize),
    EnergyRequirement(usize),
    PerRequirement(usize),
    PowerBounds(usize),
    GridIndex(usize),
    CountMismatch,
}

impl Violation {
    pub fn name(&self) -> &'static str {
        match self {
            Violation::DeviceExclusivity(_) => "device_exclusivity",
            Violation::RbExclusivity(_) => "rb_exclusivity",
            Violation::BandwidthBudget => "bandwidth_budget",
            Violation::MaxDevices => "max_devices",
            Violation::DelayRequirement(_) => "delay_requirement",
            Violation::EnergyRequirement(_) => "energy_requirement",
            Violation::PerRequirement(_) => "per_requirement",
            Violation::PowerBounds(_) => "power_bounds",
            Violation::GridIndex(_) => "grid_index",
            Violation::CountMismatch => "count_mismatch",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DeviceExclusivity(i)
            | Violation::DelayRequirement(i)
            | Violation::EnergyRequirement(i)
            | Violation::PerRequirement(i)
            | Violation::PowerBounds(i)
            | Violation::GridIndex(i) => write!(f, "{} (device {i})", self.name()),
            Violation::RbExclusivity(k) => write!(f, "{} (rb {k})", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

/// Lists every scheduling constraint `schedule` violates.
pub fn validate_schedule(
    schedule: &Schedule,
    grid: &LinkGrid,
    config: &SchedulerConfig,
    policy: &Policy,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut devices = std::collections::BTreeMap::new();
    let mut rbs = std::collections::BTreeMap::new();
    for a in &schedule.assignments {
        *devices.entry(a.device_id).or_insert(0usize) += 1;
        *rbs.entry(a.rb_index).or_insert(0usize) += 1;
    }
    out.extend(
        devices
            .iter()
            .filter(|(_, n)| **n > 1)
            .map(|(i, _)| Violation::DeviceExclusivity(*i)),
    );
    out.extend(
        rbs.iter()
            .filter(|(_, n)| **n > 1)
            .map(|(k, _)| Violation::RbExclusivity(*k)),
    );

    let total_hz: u64 = schedule.assignments.iter().map(|a| to_hz(a.bandwidth_hz)).sum();
    if total_hz > to_hz(config.bandwidth_budget_hz) {
        out.push(Violation::BandwidthBudget);
    }
    if schedule.assignments.len() > config.max_devices {
        out.push(Violation::MaxDevices);
    }
    if schedule.selected_count != schedule.assignments.len() {
        out.push(Violation::CountMismatch);
    }
    for a in &schedule.assignments {
        let i = a.device_id;
        let in_grid = a.bandwidth_index < grid.bandwidths_hz.len()
            && a.rb_index < grid.rb_count()
            && a.power_index < grid.powers_w.len()
            && to_hz(grid.bandwidths_hz[a.bandwidth_index]) == to_hz(a.bandwidth_hz);
        if !in_grid {
            out.push(Violation::GridIndex(i));
            continue;
        }
        let power = grid.powers_w[a.power_index];
        if power < grid.min_power_w || power > grid.max_power_w {
            out.push(Violation::PowerBounds(i));
        }
        if !(a.uplink_delay_s <= policy.max_delay_s) {
            out.push(Violation::DelayRequirement(i));
        }
        if !(a.upload_energy_j <= policy.max_energy_j) {
            out.push(Violation::EnergyRequirement(i));
        }
        if !(a.per <= policy.max_per) {
            out.push(Violation::PerRequirement(i));
        }
    }
    out
}
