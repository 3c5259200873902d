// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Small all-honest network used by the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use lightchain_core::ident::{Identifier, KeyPair, SchemeKind, Width};
use lightchain_core::incentive::Blacklist;
use lightchain_core::ledger::{Block, Contribution, LedgerStore, Transaction};
use lightchain_core::pov::{
    blk_validator_ids, resolve_validators, tx_validator_ids, PovParams, ValidatorContext,
};
use lightchain_core::skipgraph::Overlay;
use lightchain_core::view::ViewTable;

pub const ENDOWMENT: i64 = 1_000;

pub fn w64() -> Width {
    Width::new(64).unwrap()
}

pub fn id(v: u64) -> Identifier {
    Identifier::from_u64(v, w64())
}

pub fn key(i: u32) -> KeyPair {
    let mut seed = [0u8; 32];
    seed[..4].copy_from_slice(&i.to_be_bytes());
    seed[31] = 0xa5;
    KeyPair::from_seed(SchemeKind::Mac, seed, w64())
}

pub struct Net {
    pub overlay: Overlay,
    pub store: LedgerStore,
    pub genesis_view: ViewTable,
    pub view: ViewTable,
    pub params: PovParams,
    pub blacklist: Blacklist,
    /// Peer ids in key order.
    pub peers: Vec<Identifier>,
}

impl Net {
    pub fn new(n: u32, params: PovParams) -> Self {
        let mut overlay = Overlay::new(w64());
        let mut peers = Vec::new();
        for i in 0..n {
            peers.push(overlay.join_peer(key(i), true).unwrap());
        }
        let store = LedgerStore::with_width(w64());
        let genesis_view = ViewTable::genesis(peers.iter().copied(), ENDOWMENT, store.genesis());
        Net {
            overlay,
            view: genesis_view.clone(),
            genesis_view,
            store,
            params,
            blacklist: Blacklist::new(),
            peers,
        }
    }

    pub fn small() -> Self {
        let params = PovParams {
            alpha: 3,
            t: 2,
            min_tx: 2,
            block_reward: 100,
            ..PovParams::default()
        };
        Net::new(16, params)
    }

    pub fn kp(&self, peer: &Identifier) -> &KeyPair {
        self.overlay.keys().get(peer).unwrap()
    }

    pub fn ctx<'a>(&'a self, validator: &Identifier) -> ValidatorContext<'a> {
        ValidatorContext::new(
            self.kp(validator),
            &self.params,
            &self.store,
            &self.view,
            &self.overlay,
            &self.blacklist,
        )
    }

    /// Unvalidated transaction with proofs produced by its owner.
    pub fn draft_tx(
        &self,
        owner: &Identifier,
        cont: Contribution,
        prev: Identifier,
    ) -> Transaction {
        let ids = tx_validator_ids(&prev, owner, &cont, self.params.alpha).unwrap();
        let proofs: Vec<_> = resolve_validators(&self.overlay, owner, &ids)
            .unwrap()
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        Transaction::new(prev, self.kp(owner), cont, proofs)
    }

    /// Collects one signature per distinct designated validator that signs.
    pub fn validate_tx(&self, mut tx: Transaction) -> Arc<Transaction> {
        let arc = Arc::new(tx.clone());
        let mut designated: Vec<Identifier> = tx.search_proofs.iter().map(|p| p.result).collect();
        designated.dedup();
        let mut seen = Vec::new();
        for v in designated {
            if seen.contains(&v) {
                continue;
            }
            seen.push(v);
            if let Some(sig) = self.ctx(&v).validate_transaction(&arc).signature {
                tx.sigs.push(sig);
            }
        }
        Arc::new(tx)
    }

    pub fn remit(&self, owner: &Identifier, to: &Identifier, amount: u64) -> Arc<Transaction> {
        let tx = self.draft_tx(
            owner,
            Contribution::remittance(*to, amount),
            self.store.tail(),
        );
        self.validate_tx(tx)
    }

    pub fn draft_block(&self, owner: &Identifier, txs: Vec<Arc<Transaction>>) -> Block {
        let prev = self.store.tail();
        let hashes: Vec<Identifier> = txs.iter().map(|t| t.h).collect();
        let ids = blk_validator_ids(&prev, owner, &hashes, self.params.alpha).unwrap();
        let proofs: Vec<_> = resolve_validators(&self.overlay, owner, &ids)
            .unwrap()
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        Block::new(prev, self.kp(owner), txs, proofs)
    }

    pub fn validate_block(&self, mut blk: Block) -> Block {
        let mut seen = Vec::new();
        let designated: Vec<Identifier> = blk.search_proofs.iter().map(|p| p.result).collect();
        for v in designated {
            if seen.contains(&v) {
                continue;
            }
            seen.push(v);
            if let Some(sig) = self.ctx(&v).validate_block(&blk).signature {
                blk.sigs.push(sig);
            }
        }
        blk
    }

    /// Appends to the store and applies to the shared view.
    pub fn commit(&mut self, blk: Block) {
        self.store.append_block(blk.clone()).unwrap();
        self.view.apply_block(&blk, &self.params).unwrap();
    }

    /// One validated block of remittances from `senders[i]` to the next peer.
    pub fn round(&mut self, block_owner: usize, senders: &[usize], amount: u64) -> Block {
        let txs: Vec<_> = senders
            .iter()
            .map(|s| {
                let to = self.peers[(s + 1) % self.peers.len()];
                self.remit(&self.peers[*s], &to, amount)
            })
            .collect();
        let blk = self.validate_block(self.draft_block(&self.peers[block_owner], txs));
        self.commit(blk.clone());
        blk
    }
}
