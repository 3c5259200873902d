// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::ident::Identifier;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("duplicate overlay node {0}")]
    DuplicateNode(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("no eligible node online")]
    OverlayEmpty,

    #[error("block parent {0} is not in the store")]
    MissingParent(Identifier),

    #[error("block {0} already stored")]
    DuplicateBlock(Identifier),

    #[error("invalid reference: {0}")]
    InvalidReference(String),

    #[error("view tail {expected} does not match block prev {got}")]
    InconsistentView {
        expected: Identifier,
        got: Identifier,
    },

    #[error("invalid block: {0}")]
    InvalidBlock(String),

    #[error("all replicas of {0} are offline")]
    Unavailable(Identifier),

    #[error("no {needed} consistent views after {tried} introducers")]
    BootstrapUnavailable { needed: usize, tried: usize },

    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),

    #[error("malformed encoding: {0}")]
    Decode(String),
}
