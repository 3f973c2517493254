//! Experiment plumbing: configuration, topology, RNG streams, metrics.

pub mod config;
pub mod metrics;
pub mod rng;
pub mod topology;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::learning::data::{load_idx, synthetic_blobs};
use crate::learning::{Dataset, LearningError, LocalDataset, ModelParams};
use crate::radio::PacketSizes;
use crate::strategies::{run_strategy, Environment, RoundMetrics, StrategyError, StrategyKind, StrategyOptions};
use config::{DataSource, ExperimentConfig};
use rng::{derive_seed, stream_rng, Stream};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {constraint}")]
    Invalid { field: String, constraint: String },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("{kind} repeat {repeat}: {source}")]
    Strategy {
        kind: StrategyKind,
        repeat: usize,
        source: StrategyError,
    },
}

/// The dataset of an experiment; synthetic data is drawn from the master seed
/// so every repeat sees the same task.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    match &cfg.data.source {
        DataSource::Idx { images, labels } => Ok(load_idx(images, labels)?),
        src => {
            let spec = src.synthetic_spec().expect("synthetic source");
            Ok(synthetic_blobs(&spec, &mut stream_rng(cfg.seed, Stream::Dataset)))
        }
    }
}

pub fn repeat_seed(master: u64, repeat: usize) -> u64 {
    derive_seed(master, Stream::Repeat(repeat as u64))
}

/// Builds the topology, partitions and initial model of one repeat.
pub fn build_environment(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    repeat: usize,
) -> Result<Environment, HarnessError> {
    let seed = repeat_seed(cfg.seed, repeat);
    let topo = topology::generate_topology(cfg, dataset, seed)?;
    let mut arch = vec![dataset.dim];
    arch.extend(&cfg.model.hidden);
    arch.push(dataset.classes);
    let initial_model = ModelParams::init(&arch, &mut stream_rng(seed, Stream::ModelInit))?;
    let packets = PacketSizes::for_model(
        initial_model.parameter_count(),
        cfg.model.bits_per_param,
        cfg.model.header_bits,
    );
    let grid = cfg.link_grid();
    let options = StrategyOptions {
        n_f: cfg.network.n_f,
        n_p: cfg.n_p(),
        fixed_bandwidth_index: grid.bandwidth_index(cfg.strategy.fixed_bandwidth_hz).ok_or_else(|| {
            HarnessError::Invalid {
                field: "strategy.fixed_bandwidth_hz".into(),
                constraint: "must be a bandwidth grid point".into(),
            }
        })?,
        fixed_power_index: grid
            .power_index(cfg.strategy.fixed_power_w)
            .ok_or_else(|| HarnessError::Invalid {
                field: "strategy.fixed_power_w".into(),
                constraint: "must be a power grid point".into(),
            })?,
        cold_start: cfg.strategy.poc_cold_start,
        force_success: cfg.strategy.force_success,
    };
    Ok(Environment {
        test_set: LocalDataset::concat(topo.partitions.iter().map(|p| &p.test)),
        devices: topo.devices,
        partitions: topo.partitions,
        grid,
        channel: cfg.channel.clone(),
        policy: cfg.policy,
        packets,
        scheduler: cfg.scheduler_config(),
        training: cfg.train_config(),
        options,
        initial_model,
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub kind: StrategyKind,
    pub repeat: usize,
    pub rounds: Vec<RoundMetrics>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    /// Ordered by strategy, then repeat.
    pub runs: Vec<StrategyRun>,
}

impl ExperimentResult {
    pub fn by_strategy(&self) -> BTreeMap<StrategyKind, Vec<Vec<RoundMetrics>>> {
        let mut out: BTreeMap<StrategyKind, Vec<Vec<RoundMetrics>>> = BTreeMap::new();
        for run in &self.runs {
            out.entry(run.kind).or_default().push(run.rounds.clone());
        }
        out
    }

    pub fn run(&self, kind: StrategyKind, repeat: usize) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.kind == kind && r.repeat == repeat)
    }
}

/// Runs every configured strategy for every repeat. Repeats and strategies
/// run in parallel; the result does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let envs = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| build_environment(cfg, &dataset, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut kinds = cfg.strategies.clone();
    kinds.sort();
    kinds.dedup();
    let jobs: Vec<(StrategyKind, usize)> = kinds
        .iter()
        .flat_map(|k| (0..cfg.repeats).map(move |r| (*k, r)))
        .collect();
    let runs = jobs
        .into_par_iter()
        .map(|(kind, repeat)| {
            run_strategy(kind, &envs[repeat], cfg.rounds)
                .map(|rounds| StrategyRun { kind, repeat, rounds })
                .map_err(|source| HarnessError::Strategy { kind, repeat, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult { runs })
}
