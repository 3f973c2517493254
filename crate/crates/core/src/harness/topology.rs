//! Device placement and binding of data partitions to devices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Placement};
use super::rng::{derive_seed, stream_rng, Stream};
use super::HarnessError;
use crate::learning::{partition_dataset, Dataset, DevicePartition, PartitionConfig};
use crate::radio::Device;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub devices: Vec<Device>,
    /// Polar angle of each device around the BS.
    pub angles_rad: Vec<f64>,
    pub partitions: Vec<DevicePartition>,
}

/// Distances `d_i` for `count` devices.
pub fn place_devices<R: Rng>(
    count: usize,
    min_m: f64,
    max_m: f64,
    placement: Placement,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    (0..count)
        .map(|_| {
            let d = match placement {
                _ if min_m == max_m => min_m,
                Placement::UniformDistance => rng.random_range(min_m..=max_m),
                Placement::UniformArea => rng.random_range(min_m * min_m..=max_m * max_m).sqrt(),
            };
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            (d, angle)
        })
        .collect()
}

/// Places the devices and deals out their partitions for one repeat.
///
/// `n_i` is the training split size and the workload `Z` is
/// `n_i * local_epochs`.
pub fn generate_topology(cfg: &ExperimentConfig, dataset: &Dataset, seed: u64) -> Result<Topology, HarnessError> {
    let net = &cfg.network;
    let spots = place_devices(
        net.devices,
        net.min_distance_m,
        net.max_distance_m,
        net.placement,
        &mut stream_rng(seed, Stream::Topology),
    );
    let d = &cfg.data;
    let pcfg = PartitionConfig {
        devices: net.devices,
        base_size: d.base_size,
        dominant_fraction: d.dominant_fraction,
        size_factor_min: d.size_factor_min,
        size_factor_max: d.size_factor_max,
        rotation_limit_deg: d.rotation_limit_deg,
        train_fraction: d.train_fraction,
    };
    let partitions = partition_dataset(dataset, &pcfg, &mut stream_rng(seed, Stream::Partition))?;
    let devices = spots
        .iter()
        .zip(&partitions)
        .enumerate()
        .map(|(id, ((distance_m, _), part))| Device {
            id,
            distance_m: *distance_m,
            fading_seed: derive_seed(
                seed,
                Stream::Fading {
                    round: u64::MAX,
                    device: id as u64,
                },
            ),
            data_size: part.train.len(),
            compute: cfg.compute,
            cycles_load: (part.train.len() * cfg.training.local_epochs) as f64,
        })
        .collect();
    Ok(Topology {
        devices,
        angles_rad: spots.iter().map(|s| s.1).collect(),
        partitions,
    })
}
