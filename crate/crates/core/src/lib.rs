//! Federated learning over a simulated wireless IoT uplink.
//!
//! The crate is organised bottom-up:
//!
//! - [`radio`]: closed-form uplink/downlink rate, delay, packet error and
//!   energy models for one `(device, bandwidth, RB, power)` tuple.
//! - [`scheduler`]: data-maximising device selection and the exact
//!   resource-block scheduler (branch and bound plus an exhaustive oracle).
//! - [`learning`]: a small from-scratch MLP, local SGD, weighted
//!   aggregation and the non-IID partition generator.
//! - [`strategies`]: FedAvg, POC, their channel-aware variants and FL-E2WS,
//!   composed into rounds and experiments.
//! - [`harness`]: configuration, topology, RNG streams and CSV output.

// NaN must fail every range check, so `!(x > 0.0)` is deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod learning;
pub mod radio;
pub mod scheduler;
pub mod strategies;

pub use harness::config::ExperimentConfig;
pub use radio::{ChannelParams, Device, ExpectationMode, LinkGrid, LinkMetrics, Policy};
pub use scheduler::{CandidateAssignment, Schedule, SchedulerConfig};
pub use strategies::{Environment, RoundMetrics, StrategyKind};
