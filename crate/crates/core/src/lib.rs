// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Protocol library for a DHT-based permissionless blockchain: identifiers
//! and signatures, the Skip Graph overlay, the ledger data model,
//! Proof-of-Validation consensus, replication, views, incentives and the
//! security-parameter solver.

pub mod error;
pub mod ident;
pub mod incentive;
pub mod ledger;
pub mod pov;
pub mod secparams;
pub mod skipgraph;
pub mod storage;
pub mod view;

pub use error::{Error, Result};
