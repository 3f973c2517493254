//! Closed-form wireless and energy models for a single uplink tuple.
//!
//! A tuple is `(device i, bandwidth index j, RB index k, power index l)`.
//! Rates and packet error rates are expectations over the Rayleigh fading
//! power `o_i`; depending on [`ExpectationMode`] they are evaluated at the
//! fading mean or averaged over seeded Monte-Carlo draws taken from the
//! device's own fading stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("invalid geometry: distance {0} m must be positive")]
    InvalidGeometry(f64),
    #[error("device {0} is unreachable (zero link rate)")]
    Unreachable(usize),
    #[error("packet size must be positive, got {0} bits")]
    EmptyPacket(f64),
    #[error("invalid parameter `{field}`: {constraint}")]
    InvalidParameter { field: &'static str, constraint: String },
    #[error("grid index out of bounds: {axis} index {index} >= {len}")]
    IndexOutOfBounds {
        axis: &'static str,
        index: usize,
        len: usize,
    },
}

fn invalid(field: &'static str, constraint: impl Into<String>) -> RadioError {
    RadioError::InvalidParameter {
        field,
        constraint: constraint.into(),
    }
}

/// How `E(.)` over the fading power is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    /// Average over `fading_samples` Exp(1) draws from the device stream.
    MonteCarlo,
    /// Evaluate once at `o_i = E[o_i] = 1`.
    MeanFading,
}

/// Converts a power spectral density from dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts(dbm_per_hz: f64) -> f64 {
    10f64.powf((dbm_per_hz - 30.0) / 10.0)
}

/// Converts a dB ratio to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Waterfall threshold `m` of the packet error model (dimensionless).
    pub waterfall_threshold: f64,
    /// Read `waterfall_threshold` as dB and convert it to linear first.
    pub waterfall_in_db: bool,
    pub downlink_bandwidth_hz: f64,
    pub bs_power_w: f64,
    pub downlink_interference_w: f64,
    pub fading_samples: usize,
    pub expectation_mode: ExpectationMode,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            noise_psd: dbm_per_hz_to_watts(-174.0),
            waterfall_threshold: 0.023,
            waterfall_in_db: false,
            downlink_bandwidth_hz: 20e6,
            bs_power_w: 1.0,
            downlink_interference_w: 1e-7,
            fading_samples: 1000,
            expectation_mode: ExpectationMode::MonteCarlo,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.path_loss_exponent > 0.0) {
            return Err(invalid("path_loss_exponent", "must be > 0"));
        }
        if !(self.noise_psd > 0.0) {
            return Err(invalid("noise_psd", "must be > 0 W/Hz"));
        }
        if !(self.waterfall_threshold > 0.0) {
            return Err(invalid("waterfall_threshold", "must be > 0"));
        }
        if !(self.downlink_bandwidth_hz > 0.0) {
            return Err(invalid("downlink_bandwidth_hz", "must be > 0"));
        }
        if !(self.bs_power_w > 0.0) {
            return Err(invalid("bs_power_w", "must be > 0"));
        }
        if !(self.downlink_interference_w >= 0.0) {
            return Err(invalid("downlink_interference_w", "must be >= 0"));
        }
        if self.fading_samples == 0 {
            return Err(invalid("fading_samples", "must be >= 1"));
        }
        Ok(())
    }

    /// The linear `m` used by the packet error model.
    pub fn waterfall_linear(&self) -> f64 {
        if self.waterfall_in_db {
            db_to_linear(self.waterfall_threshold)
        } else {
            self.waterfall_threshold
        }
    }

    /// Copy of these parameters evaluated at the fading mean.
    pub fn mean_fading(&self) -> Self {
        Self {
            expectation_mode: ExpectationMode::MeanFading,
            ..self.clone()
        }
    }

    /// Expectation of `f(o)` over the fading power of `device`.
    fn expect(&self, device: &Device, f: impl Fn(f64) -> f64) -> f64 {
        match self.expectation_mode {
            ExpectationMode::MeanFading => f(1.0),
            ExpectationMode::MonteCarlo => {
                let mut rng = ChaCha8Rng::seed_from_u64(device.fading_seed);
                let mut sum = 0.0;
                for _ in 0..self.fading_samples {
                    let o: f64 = Exp1.sample(&mut rng);
                    sum += f(o);
                }
                sum / self.fading_samples as f64
            }
        }
    }
}

/// CPU energy model constants of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeProfile {
    /// Energy consumption coefficient `zeta`.
    pub energy_coefficient: f64,
    /// CPU cycles `omega_i`.
    pub cpu_cycles: f64,
    /// Clock frequency `theta` in Hz.
    pub clock_hz: f64,
}

impl Default for ComputeProfile {
    fn default() -> Self {
        Self {
            energy_coefficient: 1e-27,
            cpu_cycles: 40.0,
            clock_hz: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: usize,
    pub distance_m: f64,
    /// Seed of the RNG stream that fading draws for this device come from.
    pub fading_seed: u64,
    pub data_size: usize,
    pub compute: ComputeProfile,
    /// Training workload `Z(w_i)`: local samples times local epochs.
    pub cycles_load: f64,
}

impl Device {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.distance_m > 0.0) {
            return Err(RadioError::InvalidGeometry(self.distance_m));
        }
        if self.data_size == 0 {
            return Err(invalid("data_size", "must be >= 1"));
        }
        let c = &self.compute;
        if !(c.energy_coefficient > 0.0 && c.cpu_cycles > 0.0 && c.clock_hz > 0.0) {
            return Err(invalid("compute", "zeta, omega and clock must be > 0"));
        }
        if !(self.cycles_load >= 0.0) {
            return Err(invalid("cycles_load", "must be >= 0"));
        }
        Ok(())
    }
}

/// Discretised bandwidth/power axes and per-RB interference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGrid {
    pub bandwidths_hz: Vec<f64>,
    pub powers_w: Vec<f64>,
    pub rb_interference_w: Vec<f64>,
    pub bandwidth_budget_hz: f64,
    pub min_power_w: f64,
    pub max_power_w: f64,
}

/// Inclusive arithmetic progression `start, start+step, ..., end`.
pub fn arithmetic_progression(start: f64, end: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || end < start {
        return vec![start];
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// `I_k = base + k * step` for `k = 0..count`.
pub fn incremental_interference(count: usize, base_w: f64, step_w: f64) -> Vec<f64> {
    (0..count).map(|k| base_w + k as f64 * step_w).collect()
}

impl LinkGrid {
    pub fn rb_count(&self) -> usize {
        self.rb_interference_w.len()
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        fn increasing(v: &[f64]) -> bool {
            !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| *x > 0.0)
        }
        if !increasing(&self.bandwidths_hz) {
            return Err(invalid(
                "bandwidths_hz",
                "must be non-empty, positive, strictly increasing",
            ));
        }
        if !increasing(&self.powers_w) {
            return Err(invalid("powers_w", "must be non-empty, positive, strictly increasing"));
        }
        if self.rb_interference_w.is_empty() || self.rb_interference_w.iter().any(|i| !(*i >= 0.0)) {
            return Err(invalid("rb_interference_w", "need >= 1 RB with interference >= 0"));
        }
        if !(self.bandwidth_budget_hz > 0.0) {
            return Err(invalid("bandwidth_budget_hz", "must be > 0"));
        }
        let tol = 1e-12;
        let first = self.powers_w[0];
        let last = self.powers_w[self.powers_w.len() - 1];
        if first < self.min_power_w - tol || last > self.max_power_w + tol {
            return Err(invalid("powers_w", "must lie within [min_power_w, max_power_w]"));
        }
        Ok(())
    }

    pub fn bandwidth_index(&self, hz: f64) -> Option<usize> {
        find_close(&self.bandwidths_hz, hz)
    }

    pub fn power_index(&self, watts: f64) -> Option<usize> {
        find_close(&self.powers_w, watts)
    }

    fn check(&self, j: usize, k: usize, l: usize) -> Result<(), RadioError> {
        let axes = [
            ("bandwidth", j, self.bandwidths_hz.len()),
            ("rb", k, self.rb_count()),
            ("power", l, self.powers_w.len()),
        ];
        for (axis, index, len) in axes {
            if index >= len {
                return Err(RadioError::IndexOutOfBounds { axis, index, len });
            }
        }
        Ok(())
    }
}

fn find_close(values: &[f64], target: f64) -> Option<usize> {
    values
        .iter()
        .position(|v| (v - target).abs() <= 1e-9 * target.abs().max(1.0))
}

/// Per-transmission requirements on uplink delay, upload energy and PER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Policy {
    pub max_delay_s: f64,
    pub max_energy_j: f64,
    pub max_per: f64,
}

/// The MLP policy: 200 ms, 2.5 mJ, PER 0.3.
impl Default for Policy {
    fn default() -> Self {
        Self {
            max_delay_s: 0.2,
            max_energy_j: 0.0025,
            max_per: 0.3,
        }
    }
}

impl Policy {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.max_delay_s > 0.0) {
            return Err(invalid("max_delay_s", "must be > 0"));
        }
        if !(self.max_energy_j > 0.0) {
            return Err(invalid("max_energy_j", "must be > 0"));
        }
        if !(self.max_per > 0.0 && self.max_per < 1.0) {
            return Err(invalid("max_per", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn admits(&self, uplink_delay_s: f64, upload_energy_j: f64, per: f64) -> bool {
        uplink_delay_s <= self.max_delay_s && upload_energy_j <= self.max_energy_j && per <= self.max_per
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub uplink_rate_bps: f64,
    pub downlink_rate_bps: f64,
    pub uplink_delay_s: f64,
    pub downlink_delay_s: f64,
    pub round_delay_s: f64,
    pub per: f64,
    pub success_prob: f64,
    pub gated_success: f64,
    pub train_energy_j: f64,
    pub upload_energy_j: f64,
    pub round_energy_j: f64,
    pub policy_ok: bool,
}

/// `h = o * d^-alpha`.
pub fn channel_gain(distance_m: f64, fading: f64, path_loss_exponent: f64) -> Result<f64, RadioError> {
    if !(distance_m > 0.0) {
        return Err(RadioError::InvalidGeometry(distance_m));
    }
    Ok(fading * distance_m.powf(-path_loss_exponent))
}

fn gain(device: &Device, params: &ChannelParams, fading: f64) -> f64 {
    fading * device.distance_m.powf(-params.path_loss_exponent)
}

pub fn uplink_rate(
    bandwidth_hz: f64,
    power_w: f64,
    device: &Device,
    interference_w: f64,
    params: &ChannelParams,
) -> Result<f64, RadioError> {
    if !(device.distance_m > 0.0) {
        return Err(RadioError::InvalidGeometry(device.distance_m));
    }
    let noise = interference_w + bandwidth_hz * params.noise_psd;
    let spectral = params.expect(device, |o| (power_w * gain(device, params, o) / noise).ln_1p());
    Ok(bandwidth_hz * spectral / std::f64::consts::LN_2)
}

pub fn downlink_rate(device: &Device, params: &ChannelParams) -> Result<f64, RadioError> {
    if !(device.distance_m > 0.0) {
        return Err(RadioError::InvalidGeometry(device.distance_m));
    }
    let noise = params.downlink_interference_w + params.downlink_bandwidth_hz * params.noise_psd;
    let spectral = params.expect(device, |o| {
        (params.bs_power_w * gain(device, params, o) / noise).ln_1p()
    });
    Ok(params.downlink_bandwidth_hz * spectral / std::f64::consts::LN_2)
}

/// Single-packet delay `S / c`. `device` only labels the error.
pub fn transmission_delay(packet_bits: f64, rate_bps: f64, device: usize) -> Result<f64, RadioError> {
    if !(packet_bits > 0.0) {
        return Err(RadioError::EmptyPacket(packet_bits));
    }
    if !(rate_bps > 0.0) {
        return Err(RadioError::Unreachable(device));
    }
    Ok(packet_bits / rate_bps)
}

pub fn packet_error_rate(
    bandwidth_hz: f64,
    power_w: f64,
    device: &Device,
    interference_w: f64,
    params: &ChannelParams,
) -> Result<f64, RadioError> {
    if !(device.distance_m > 0.0) {
        return Err(RadioError::InvalidGeometry(device.distance_m));
    }
    let noise = interference_w + bandwidth_hz * params.noise_psd;
    let m = params.waterfall_linear();
    let q = params.expect(device, |o| {
        let signal = power_w * gain(device, params, o);
        if signal > 0.0 {
            -(-m * noise / signal).exp_m1()
        } else {
            1.0
        }
    });
    Ok(q.clamp(0.0, 1.0))
}

/// Applies the policy gate to already computed metrics.
pub fn gated_success(metrics: &mut LinkMetrics, policy: &Policy) -> f64 {
    metrics.policy_ok = policy.admits(metrics.uplink_delay_s, metrics.upload_energy_j, metrics.per);
    metrics.gated_success = if metrics.policy_ok { metrics.success_prob } else { 0.0 };
    metrics.gated_success
}

pub fn training_energy(device: &Device) -> f64 {
    let c = &device.compute;
    c.energy_coefficient * c.cpu_cycles * c.clock_hz * c.clock_hz * device.cycles_load
}

pub fn upload_energy(power_w: f64, uplink_delay_s: f64) -> f64 {
    power_w * uplink_delay_s
}

/// Packet sizes for a model of `param_count` parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSizes {
    pub uplink_bits: f64,
    pub downlink_bits: f64,
}

impl PacketSizes {
    pub fn for_model(param_count: usize, bits_per_param: u32, header_bits: u32) -> Self {
        let bits = param_count as f64 * bits_per_param as f64 + header_bits as f64;
        Self {
            uplink_bits: bits,
            downlink_bits: bits,
        }
    }
}

/// Evaluates every link quantity for tuple `(device, j, k, l)`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_link(
    device: &Device,
    j: usize,
    k: usize,
    l: usize,
    grid: &LinkGrid,
    params: &ChannelParams,
    packets: PacketSizes,
    policy: &Policy,
) -> Result<LinkMetrics, RadioError> {
    grid.check(j, k, l)?;
    let bw = grid.bandwidths_hz[j];
    let power = grid.powers_w[l];
    let interference = grid.rb_interference_w[k];

    let uplink_rate_bps = uplink_rate(bw, power, device, interference, params)?;
    let downlink_rate_bps = downlink_rate(device, params)?;
    let uplink_delay_s = transmission_delay(packets.uplink_bits, uplink_rate_bps, device.id)?;
    let downlink_delay_s = transmission_delay(packets.downlink_bits, downlink_rate_bps, device.id)?;
    let per = packet_error_rate(bw, power, device, interference, params)?;
    let train_energy_j = training_energy(device);
    let upload_energy_j = upload_energy(power, uplink_delay_s);

    let mut metrics = LinkMetrics {
        uplink_rate_bps,
        downlink_rate_bps,
        uplink_delay_s,
        downlink_delay_s,
        round_delay_s: uplink_delay_s + downlink_delay_s,
        per,
        success_prob: 1.0 - per,
        gated_success: 0.0,
        train_energy_j,
        upload_energy_j,
        round_energy_j: train_energy_j + upload_energy_j,
        policy_ok: false,
    };
    gated_success(&mut metrics, policy);
    Ok(metrics)
}
