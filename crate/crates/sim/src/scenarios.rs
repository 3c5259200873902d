// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Scripted fork races: several validated blocks on the same parent reach
//! independent observers in different orders.

use std::sync::Arc;

use lightchain_core::ident::{Identifier, KeyPair, SchemeKind, Width};
use lightchain_core::incentive::Blacklist;
use lightchain_core::ledger::{Block, Contribution, LedgerStore, Transaction};
use lightchain_core::pov::{
    blk_validator_ids, knockout_recovery, resolve_validators, tx_validator_ids, PovParams,
    ValidatorContext,
};
use lightchain_core::skipgraph::Overlay;
use lightchain_core::view::ViewTable;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForkSetup {
    pub peers: u32,
    pub observers: usize,
    pub min_branches: usize,
    pub max_branches: usize,
    pub params: PovParams,
}

impl Default for ForkSetup {
    fn default() -> Self {
        ForkSetup {
            peers: 24,
            observers: 5,
            min_branches: 2,
            max_branches: 4,
            params: PovParams {
                alpha: 3,
                t: 2,
                min_tx: 2,
                ..PovParams::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForkOutcome {
    pub branches: usize,
    /// Observers that received one losing branch only after the successor.
    pub late_deliveries: usize,
    /// Every observer's tail is the lowest-hash branch once all arrived.
    pub lowest_hash_wins: bool,
    /// Incremental tails match a full recomputation.
    pub incremental_matches_resolve: bool,
    /// All observers share the successor as tail and finalize the winner.
    pub agree_after_successor: bool,
    /// Knocked-out owners recover exactly their transactions the winner lacks.
    pub recovery_ok: bool,
}

impl ForkOutcome {
    pub fn passed(&self) -> bool {
        self.lowest_hash_wins
            && self.incremental_matches_resolve
            && self.agree_after_successor
            && self.recovery_ok
    }
}

const ENDOWMENT: i64 = 1_000;
const MAX_REDRAWS: usize = 64;

struct MiniNet {
    overlay: Overlay,
    store: LedgerStore,
    view: ViewTable,
    params: PovParams,
    blacklist: Blacklist,
    peers: Vec<Identifier>,
}

impl MiniNet {
    fn new(setup: &ForkSetup, seed: u64) -> Result<Self> {
        let width = Width::new(64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut overlay = Overlay::new(width);
        let mut peers = Vec::new();
        for _ in 0..setup.peers {
            let kp = KeyPair::from_seed(SchemeKind::Mac, rng.random(), width);
            peers.push(overlay.join_peer(kp, true)?);
        }
        peers.sort();
        let store = LedgerStore::with_width(width);
        let view = ViewTable::genesis(peers.iter().copied(), ENDOWMENT, store.genesis());
        Ok(MiniNet {
            overlay,
            store,
            view,
            params: setup.params.clone(),
            blacklist: Blacklist::new(),
            peers,
        })
    }

    fn kp(&self, peer: &Identifier) -> Result<&KeyPair> {
        self.overlay
            .keys()
            .get(peer)
            .ok_or_else(|| SimError::Domain(format!("no key for {peer}")))
    }

    fn ctx<'a>(&'a self, v: &Identifier) -> Result<ValidatorContext<'a>> {
        Ok(ValidatorContext::new(
            self.kp(v)?,
            &self.params,
            &self.store,
            &self.view,
            &self.overlay,
            &self.blacklist,
        ))
    }

    /// A validated remittance, or `None` if it gathered fewer than `t`
    /// signatures.
    fn remit(
        &self,
        owner: &Identifier,
        to: &Identifier,
        amount: u64,
    ) -> Result<Option<Arc<Transaction>>> {
        let cont = Contribution::remittance(*to, amount);
        let prev = self.store.tail();
        let ids = tx_validator_ids(&prev, owner, &cont, self.params.alpha)?;
        let proofs = resolve_validators(&self.overlay, owner, &ids)?
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        let mut tx = Transaction::new(prev, self.kp(owner)?, cont, proofs);
        let draft = Arc::new(tx.clone());
        let mut seen = Vec::new();
        for v in draft.search_proofs.iter().map(|p| p.result) {
            if seen.contains(&v) {
                continue;
            }
            seen.push(v);
            if let Some(sig) = self.ctx(&v)?.validate_transaction(&draft).signature {
                tx.sigs.push(sig);
            }
        }
        Ok((tx.validator_sigs().len() >= self.params.t).then(|| Arc::new(tx)))
    }

    /// A validated block, or `None` if it gathered fewer than `t`
    /// signatures.
    fn block(&self, owner: &Identifier, txs: Vec<Arc<Transaction>>) -> Result<Option<Block>> {
        let prev = self.store.tail();
        let hashes: Vec<Identifier> = txs.iter().map(|t| t.h).collect();
        let ids = blk_validator_ids(&prev, owner, &hashes, self.params.alpha)?;
        let proofs = resolve_validators(&self.overlay, owner, &ids)?
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        let mut blk = Block::new(prev, self.kp(owner)?, txs, proofs);
        let designated: Vec<Identifier> = blk.search_proofs.iter().map(|p| p.result).collect();
        let mut seen = Vec::new();
        for v in designated {
            if seen.contains(&v) {
                continue;
            }
            seen.push(v);
            if let Some(sig) = self.ctx(&v)?.validate_block(&blk).signature {
                blk.sigs.push(sig);
            }
        }
        Ok((blk.validator_sigs().len() >= self.params.t).then_some(blk))
    }
}

/// Runs one fork race.
pub fn fork_race(setup: &ForkSetup, seed: u64) -> Result<ForkOutcome> {
    let mut net = MiniNet::new(setup, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let n = net.peers.len();
    let k = rng.random_range(setup.min_branches..=setup.max_branches);
    let min_tx = net.params.min_tx;

    // Distinct block owners; senders come from the remaining peers. Drafts
    // that fall short of t distinct signers are redrawn.
    let mut order: Vec<Identifier> = net.peers.clone();
    order.shuffle(&mut rng);
    let (owners, others) = order.split_at(k);
    let pool = k * min_tx + 2;
    let mut txs = Vec::with_capacity(pool);
    for s in others {
        if txs.len() == pool {
            break;
        }
        let to = net.peers[rng.random_range(0..n)];
        if let Some(tx) = net.remit(s, &to, rng.random_range(1..=10))? {
            txs.push(tx);
        }
    }
    if txs.len() < pool {
        return Err(SimError::Domain(format!(
            "only {} of {pool} transactions validated",
            txs.len()
        )));
    }

    // Each branch takes min_tx transactions; branches may overlap.
    let mut branches = Vec::with_capacity(k);
    for owner in owners {
        let mut blk = None;
        for _ in 0..MAX_REDRAWS {
            let mut pick: Vec<Arc<Transaction>> = index::sample(&mut rng, txs.len(), min_tx)
                .into_iter()
                .map(|i| txs[i].clone())
                .collect();
            pick.sort_by_key(|t| t.h);
            blk = net.block(owner, pick)?;
            if blk.is_some() {
                break;
            }
        }
        let blk =
            blk.ok_or_else(|| SimError::Domain(format!("no branch validated for {owner}")))?;
        branches.push(Arc::new(blk));
    }
    let winner = branches
        .iter()
        .min_by_key(|b| b.h)
        .cloned()
        .expect("k >= 2");

    let mut observers: Vec<LedgerStore> = vec![net.store.clone(); setup.observers];
    let mut held: Vec<Option<Arc<Block>>> = vec![None; setup.observers];
    let mut lowest_hash_wins = true;
    let mut incremental_matches_resolve = true;
    for (o, held_back) in observers.iter_mut().zip(held.iter_mut()) {
        let mut order = branches.clone();
        order.shuffle(&mut rng);
        if rng.random_bool(0.5) {
            if let Some(pos) = order.iter().position(|b| b.h != winner.h) {
                *held_back = Some(order.remove(pos));
            }
        }
        for b in order {
            o.append_arc(b)?;
            incremental_matches_resolve &= o.tail() == o.resolve_tail();
        }
        lowest_hash_wins &= o.tail() == winner.h;
    }

    // The successor is validated against a replica that follows the winner.
    net.store.append_arc(winner.clone())?;
    net.view.apply_block(&winner, &net.params)?;
    let mut succ_txs = Vec::with_capacity(min_tx);
    for s in others.iter().rev() {
        if succ_txs.len() == min_tx {
            break;
        }
        if let Some(tx) = net.remit(s, &owners[0], 1)? {
            succ_txs.push(tx);
        }
    }
    let mut successor = None;
    for owner in &order {
        successor = net.block(owner, succ_txs.clone())?;
        if successor.is_some() {
            break;
        }
    }
    let successor =
        Arc::new(successor.ok_or_else(|| SimError::Domain("no successor validated".into()))?);

    let mut agree_after_successor = true;
    let mut late_deliveries = 0;
    for (o, late) in observers.iter_mut().zip(held) {
        o.append_arc(successor.clone())?;
        if let Some(b) = late {
            o.append_arc(b)?;
            late_deliveries += 1;
        }
        incremental_matches_resolve &= o.tail() == o.resolve_tail();
        agree_after_successor &= o.tail() == successor.h && o.is_finalized(&winner.h)?;
        for b in &branches {
            if b.h != winner.h {
                agree_after_successor &= !o.on_main_path(&b.h);
            }
        }
    }

    let mut recovery_ok = true;
    for b in branches.iter().filter(|b| b.h != winner.h) {
        let got: Vec<Identifier> = knockout_recovery(&mut net.overlay, &winner, b, &[])
            .iter()
            .map(|t| t.h)
            .collect();
        let want: Vec<Identifier> = b
            .txs
            .iter()
            .map(|t| t.h)
            .filter(|h| !winner.txs.iter().any(|w| w.h == *h))
            .collect();
        recovery_ok &= got == want;
    }

    Ok(ForkOutcome {
        branches: k,
        late_deliveries,
        lowest_hash_wins,
        incremental_matches_resolve,
        agree_after_successor,
        recovery_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn races_resolve_to_lowest_hash() {
        for seed in 0..10 {
            let out = fork_race(&ForkSetup::default(), seed).unwrap();
            assert!(out.passed(), "seed {seed}: {out:?}");
            assert!((2..=4).contains(&out.branches));
        }
    }
}
