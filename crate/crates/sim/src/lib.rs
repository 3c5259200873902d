// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic slot-based simulation of a lightchain network: churn,
//! workload, adversary strategies and metric collection.

pub mod adversary;
pub mod config;
pub mod engine;
pub mod error;
pub mod export;
pub mod metrics;
pub mod scenarios;
pub mod stats;
pub mod sweep;

pub use config::{derive_q, SimConfig, Strategy};
pub use engine::{run, Engine};
pub use error::{Result, SimError};
pub use metrics::{Metrics, SlotSample};
pub use sweep::{run_sweep, SweepCell};
