//! FedAvg, POC, their channel-aware `*_wopt` variants and FL-E2WS.
//!
//! A round draws a random subset, narrows it to candidates, allocates
//! uplink resources, simulates transmissions, trains and aggregates the
//! models that arrive, then evaluates the new global model.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::rng::{derive_seed, stream_rng, Stream};
use crate::learning::{
    aggregate, evaluate, global_loss, local_train, DevicePartition, LearningError, LocalDataset, ModelParams,
    TrainConfig,
};
use crate::radio::{evaluate_link, ChannelParams, Device, LinkGrid, PacketSizes, Policy, RadioError};
use crate::scheduler::{
    enumerate_feasible, restrict_to_point, select_by_data, solve_schedule, CandidateAssignment, Schedule,
    SchedulerConfig, SchedulerError, SelectionProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Fedavg,
    Poc,
    FedavgWopt,
    PocWopt,
    FlE2ws,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Fedavg,
        StrategyKind::Poc,
        StrategyKind::FedavgWopt,
        StrategyKind::PocWopt,
        StrategyKind::FlE2ws,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Fedavg => "fedavg",
            StrategyKind::Poc => "poc",
            StrategyKind::FedavgWopt => "fedavg_wopt",
            StrategyKind::PocWopt => "poc_wopt",
            StrategyKind::FlE2ws => "fl_e2ws",
        }
    }

    /// Whether RB assignment goes through the scheduler.
    pub fn channel_aware(self) -> bool {
        !matches!(self, StrategyKind::Fedavg | StrategyKind::Poc)
    }

    /// Size of the random subset `S_t`: `n_f` for the FedAvg family, `n_p` otherwise.
    pub fn subset_size(self, n_f: usize, n_p: usize) -> usize {
        match self {
            StrategyKind::Fedavg | StrategyKind::FedavgWopt => n_f,
            _ => n_p,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            format!("unknown strategy `{s}` (expected one of fedavg, poc, fedavg_wopt, poc_wopt, fl_e2ws)")
        })
    }
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("{0}")]
    Invalid(String),
}

/// POC score of a device that has never reported a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStart {
    /// Unreported devices rank first.
    Infinity,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOptions {
    pub n_f: usize,
    pub n_p: usize,
    /// Grid indices of the fixed (1 MHz, 0.01 W) allocation.
    pub fixed_bandwidth_index: usize,
    pub fixed_power_index: usize,
    pub cold_start: ColdStart,
    /// Every scheduled transmission succeeds (no policy or channel failures).
    pub force_success: bool,
}

/// Everything one repeat needs: network, data and the shared initial model.
#[derive(Debug, Clone)]
pub struct Environment {
    /// Indexed by device id.
    pub devices: Vec<Device>,
    pub partitions: Vec<DevicePartition>,
    /// Union of the per-device test splits.
    pub test_set: LocalDataset,
    pub grid: LinkGrid,
    pub channel: ChannelParams,
    pub policy: Policy,
    pub packets: PacketSizes,
    pub scheduler: SchedulerConfig,
    pub training: TrainConfig,
    pub options: StrategyOptions,
    pub initial_model: ModelParams,
    /// Seed of this repeat; all round streams derive from it.
    pub seed: u64,
}

impl Environment {
    fn device(&self, id: usize) -> &Device {
        &self.devices[id]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    /// Index of the next round to run (0-based).
    pub round: usize,
    pub model: ModelParams,
    loss_sum: Vec<f64>,
    loss_reports: Vec<usize>,
    /// Successful uploads per device so far.
    pub successes: Vec<usize>,
}

impl RoundState {
    pub fn new(model: ModelParams, devices: usize) -> Self {
        Self {
            round: 0,
            model,
            loss_sum: vec![0.0; devices],
            loss_reports: vec![0; devices],
            successes: vec![0; devices],
        }
    }

    /// Running mean of the losses device `id` has reported.
    pub fn average_loss(&self, id: usize, cold: ColdStart) -> f64 {
        match (self.loss_reports[id], cold) {
            (0, ColdStart::Infinity) => f64::INFINITY,
            (0, ColdStart::Zero) => 0.0,
            (n, _) => self.loss_sum[id] / n as f64,
        }
    }

    pub fn report_loss(&mut self, id: usize, loss: f64) {
        self.loss_sum[id] += loss;
        self.loss_reports[id] += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    PolicyBlocked,
    ChannelError,
}

/// Per scheduled device, aligned with `RoundMetrics::schedule.assignments`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_id: usize,
    pub policy_ok: bool,
    /// `1 - q` under this round's fading draws.
    pub success_prob: f64,
    pub train_energy_j: f64,
    pub downlink_delay_s: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round number.
    pub round: usize,
    /// Devices handed to resource allocation.
    pub candidates: Vec<usize>,
    pub schedule: Schedule,
    pub records: Vec<DeviceRecord>,
    pub successes: usize,
    pub policy_blocked: usize,
    pub channel_errors: usize,
    pub total_energy_j: f64,
    pub wasted_energy_j: f64,
    pub rb_occupancy_s: f64,
    pub bandwidth_sum_hz: f64,
    pub power_sum_w: f64,
    pub accuracy: f64,
    pub global_loss: f64,
}

impl RoundMetrics {
    /// Ids of the scheduled devices.
    pub fn selected(&self) -> Vec<usize> {
        self.schedule.assignments.iter().map(|a| a.device_id).collect()
    }

    pub fn upload_energy_j(&self) -> f64 {
        self.schedule.upload_energy_j()
    }
}

/// Uniform subset of `count` out of `n` devices, returned sorted.
pub fn pick_subset<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let mut ids = sample(rng, n, count.min(n)).into_vec();
    ids.sort_unstable();
    ids
}

/// Narrows the subset to the devices resource allocation will consider.
pub fn select_devices(
    kind: StrategyKind,
    state: &RoundState,
    subset: &[usize],
    devices: &[Device],
    options: &StrategyOptions,
) -> Result<Vec<usize>, StrategyError> {
    match kind {
        StrategyKind::Fedavg | StrategyKind::FedavgWopt => Ok(subset.to_vec()),
        StrategyKind::Poc | StrategyKind::PocWopt => {
            let mut ranked: Vec<(f64, usize)> = subset
                .iter()
                .map(|&id| (state.average_loss(id, options.cold_start), id))
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            Ok(ranked.into_iter().take(options.n_f).map(|(_, id)| id).collect())
        }
        StrategyKind::FlE2ws => {
            let problem = SelectionProblem {
                candidate_ids: subset.to_vec(),
                data_sizes: subset.iter().map(|&id| devices[id].data_size).collect(),
                n_select: options.n_p.min(subset.len()),
            };
            Ok(select_by_data(&problem)?)
        }
    }
}

fn assignment_at(
    device: &Device,
    j: usize,
    k: usize,
    l: usize,
    env: &Environment,
) -> Result<CandidateAssignment, RadioError> {
    let m = evaluate_link(
        device,
        j,
        k,
        l,
        &env.grid,
        &env.channel.mean_fading(),
        env.packets,
        &env.policy,
    )?;
    Ok(CandidateAssignment {
        device_id: device.id,
        bandwidth_index: j,
        rb_index: k,
        power_index: l,
        upload_energy_j: m.upload_energy_j,
        uplink_delay_s: m.uplink_delay_s,
        per: m.per,
        bandwidth_hz: env.grid.bandwidths_hz[j],
        power_w: env.grid.powers_w[l],
    })
}

/// Assigns uplink resources to `candidates`.
///
/// FedAvg and POC draw distinct RBs at random at the fixed bandwidth and
/// power without checking the policy. The `*_wopt` variants solve the
/// scheduling problem restricted to that fixed point, FL-E2WS over the whole
/// grid.
pub fn allocate_resources<R: Rng>(
    kind: StrategyKind,
    candidates: &[usize],
    env: &Environment,
    rng: &mut R,
) -> Result<Schedule, StrategyError> {
    if candidates.is_empty() {
        return Ok(Schedule::empty());
    }
    let (j, l) = (env.options.fixed_bandwidth_index, env.options.fixed_power_index);
    if !kind.channel_aware() {
        let rbs = env.grid.rb_count();
        if candidates.len() > rbs {
            return Err(StrategyError::Invalid(format!(
                "{} candidates but only {rbs} RBs",
                candidates.len()
            )));
        }
        let picks = sample(rng, rbs, candidates.len());
        let assignments = candidates
            .iter()
            .zip(picks.iter())
            .map(|(&id, k)| assignment_at(env.device(id), j, k, l, env))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Schedule::from_assignments(assignments, &env.scheduler));
    }
    let devices: Vec<Device> = candidates.iter().map(|&id| env.device(id).clone()).collect();
    let mut feasible = enumerate_feasible(&devices, &env.grid, &env.channel, &env.policy, env.packets)?;
    if kind != StrategyKind::FlE2ws {
        feasible = restrict_to_point(&feasible, j, l);
    }
    Ok(solve_schedule(&feasible, &env.scheduler)?)
}

/// Draws one outcome per gated success probability `p_gamma`.
///
/// A uniform is consumed for every entry, including blocked ones, so the
/// draw of a device does not depend on the outcome of the ones before it.
pub fn simulate_transmissions<R: Rng>(gated: &[f64], force_success: bool, rng: &mut R) -> Vec<Outcome> {
    gated
        .iter()
        .map(|&p| {
            let u: f64 = rng.random();
            if force_success {
                Outcome::Success
            } else if p <= 0.0 {
                Outcome::PolicyBlocked
            } else if u < p {
                Outcome::Success
            } else {
                Outcome::ChannelError
            }
        })
        .collect()
}

/// Runs round `state.round` and advances `state`.
pub fn run_round(kind: StrategyKind, env: &Environment, state: &mut RoundState) -> Result<RoundMetrics, StrategyError> {
    let t = state.round as u64;
    let opts = &env.options;
    let n = env.devices.len();

    let subset = pick_subset(
        n,
        kind.subset_size(opts.n_f, opts.n_p),
        &mut stream_rng(env.seed, Stream::Subset { round: t }),
    );
    let candidates = select_devices(kind, state, &subset, &env.devices, opts)?;
    let schedule = allocate_resources(
        kind,
        &candidates,
        env,
        &mut stream_rng(env.seed, Stream::Allocation { round: t }),
    )?;

    let mut records = Vec::with_capacity(schedule.assignments.len());
    let mut gated = Vec::with_capacity(schedule.assignments.len());
    for a in &schedule.assignments {
        let device = env.device(a.device_id);
        // this round's fading draws, shared by every strategy in the repeat
        let mut faded = device.clone();
        faded.fading_seed = derive_seed(
            env.seed,
            Stream::Fading {
                round: t,
                device: device.id as u64,
            },
        );
        let live = evaluate_link(
            &faded,
            a.bandwidth_index,
            a.rb_index,
            a.power_index,
            &env.grid,
            &env.channel,
            env.packets,
            &env.policy,
        )?;
        let power_ok = a.power_w >= env.grid.min_power_w && a.power_w <= env.grid.max_power_w;
        let policy_ok = power_ok && env.policy.admits(a.uplink_delay_s, a.upload_energy_j, a.per);
        gated.push(if policy_ok { live.success_prob } else { 0.0 });
        records.push(DeviceRecord {
            device_id: device.id,
            policy_ok,
            success_prob: live.success_prob,
            train_energy_j: live.train_energy_j,
            downlink_delay_s: live.downlink_delay_s,
            outcome: Outcome::PolicyBlocked,
        });
    }
    let outcomes = simulate_transmissions(
        &gated,
        opts.force_success,
        &mut stream_rng(env.seed, Stream::Transmission { round: t }),
    );

    let mut models = Vec::new();
    let mut weights = Vec::new();
    for (rec, outcome) in records.iter_mut().zip(&outcomes) {
        rec.outcome = *outcome;
        if *outcome != Outcome::Success {
            continue;
        }
        let id = rec.device_id;
        let train = &env.partitions[id].train;
        state.report_loss(id, evaluate(&state.model, train).loss);
        state.successes[id] += 1;
        let mut rng = stream_rng(
            env.seed,
            Stream::Training {
                round: t,
                device: id as u64,
            },
        );
        models.push(local_train(&state.model, train, &env.training, &mut rng)?);
        weights.push(train.len() as f64);
    }
    if !models.is_empty() {
        state.model = aggregate(&models, &weights)?;
    }

    let mut m = RoundMetrics {
        round: state.round + 1,
        candidates,
        successes: 0,
        policy_blocked: 0,
        channel_errors: 0,
        total_energy_j: 0.0,
        wasted_energy_j: 0.0,
        rb_occupancy_s: 0.0,
        bandwidth_sum_hz: 0.0,
        power_sum_w: 0.0,
        accuracy: 0.0,
        global_loss: 0.0,
        records,
        schedule,
    };
    for (a, rec) in m.schedule.assignments.iter().zip(&m.records) {
        let energy = rec.train_energy_j + a.upload_energy_j;
        m.total_energy_j += energy;
        match rec.outcome {
            Outcome::Success => m.successes += 1,
            Outcome::PolicyBlocked => m.policy_blocked += 1,
            Outcome::ChannelError => m.channel_errors += 1,
        }
        if rec.outcome != Outcome::Success {
            m.wasted_energy_j += energy;
        }
        m.rb_occupancy_s += a.uplink_delay_s;
        m.bandwidth_sum_hz += a.bandwidth_hz;
        m.power_sum_w += a.power_w;
    }
    m.accuracy = evaluate(&state.model, &env.test_set).accuracy;
    m.global_loss = global_loss(&state.model, env.partitions.iter().map(|p| &p.train));
    state.round += 1;
    Ok(m)
}

/// Runs `rounds` rounds of `kind` from the environment's initial model.
pub fn run_strategy(kind: StrategyKind, env: &Environment, rounds: usize) -> Result<Vec<RoundMetrics>, StrategyError> {
    let mut state = RoundState::new(env.initial_model.clone(), env.devices.len());
    (0..rounds).map(|_| run_round(kind, env, &mut state)).collect()
}

/// Mean, min and max of one column across repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return Self {
                mean: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        Self {
            mean: sum / n as f64,
            min,
            max,
        }
    }
}

/// Scalar columns of a round, in CSV order (after `round`).
pub const METRIC_COLUMNS: [&str; 11] = [
    "selected",
    "successes",
    "policy_blocked",
    "channel_errors",
    "total_energy_j",
    "wasted_energy_j",
    "rb_occupancy_s",
    "bandwidth_sum_hz",
    "power_sum_w",
    "accuracy",
    "global_loss",
];

impl RoundMetrics {
    pub fn columns(&self) -> [f64; 11] {
        [
            self.schedule.assignments.len() as f64,
            self.successes as f64,
            self.policy_blocked as f64,
            self.channel_errors as f64,
            self.total_energy_j,
            self.wasted_energy_j,
            self.rb_occupancy_s,
            self.bandwidth_sum_hz,
            self.power_sum_w,
            self.accuracy,
            self.global_loss,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub round: usize,
    pub columns: Vec<Spread>,
}

/// Per-round spread of every metric column over repeats.
pub fn aggregate_repeats(repeats: &[Vec<RoundMetrics>]) -> Vec<AggregateRow> {
    let rounds = repeats.iter().map(Vec::len).min().unwrap_or(0);
    (0..rounds)
        .map(|t| AggregateRow {
            round: t + 1,
            columns: (0..METRIC_COLUMNS.len())
                .map(|c| Spread::of(repeats.iter().map(|r| r[t].columns()[c])))
                .collect(),
        })
        .collect()
}
