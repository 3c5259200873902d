// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use lightchain_core::ident::Identifier;
use lightchain_core::view::ViewTable;
use rand::seq::index;
use rand::Rng;

use crate::config::Strategy;

/// Amount added to a colluder's balance in served forged views.
pub const FORGED_VIEW_BONUS: i64 = 1_000_000;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdversaryModel {
    pub corrupted: BTreeSet<Identifier>,
    pub strategies: BTreeSet<Strategy>,
}

impl AdversaryModel {
    /// Corrupts `count` of `peers`, chosen uniformly without replacement.
    pub fn choose<R: Rng + ?Sized>(
        peers: &[Identifier],
        count: usize,
        strategies: BTreeSet<Strategy>,
        rng: &mut R,
    ) -> Self {
        let count = count.min(peers.len());
        let corrupted = index::sample(rng, peers.len(), count)
            .into_iter()
            .map(|i| peers[i])
            .collect();
        AdversaryModel {
            corrupted,
            strategies,
        }
    }

    pub fn is_corrupted(&self, peer: &Identifier) -> bool {
        self.corrupted.contains(peer)
    }

    pub fn uses(&self, s: Strategy) -> bool {
        !self.corrupted.is_empty() && self.strategies.contains(&s)
    }

    /// The honest view with the lowest corrupted peer's balance inflated.
    pub fn forge_view(&self, honest: &ViewTable) -> Option<ViewTable> {
        let target = self.corrupted.iter().next()?;
        let mut forged = honest.clone();
        let mut e = *forged.get(target)?;
        e.balance += FORGED_VIEW_BONUS;
        forged.upsert(e);
        Some(forged)
    }
}
