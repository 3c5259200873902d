// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Transactions, blocks, transaction pointers and the block store with its
//! fork-free main path.
//!
//! Hash layouts (all fields length-prefixed):
//!
//! * transaction: `prev, owner, cont, proofs`
//! * block: `prev, owner, S, proofs`
//!
//! where `cont` is `recipient, amount[, evidence]`, `S` is the concatenation
//! of the length-prefixed member hashes in block order, and `proofs` is the
//! concatenation of the length-prefixed proof encodings.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ident::{CanonicalEncoder, Identifier, KeyPair, Signature, Width};
use crate::skipgraph::SearchProof;

/// Single-recipient remittance, optionally carrying misbehavior evidence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Contribution {
    pub recipient: Identifier,
    pub amount: u64,
    /// Canonical evidence bytes of a misbehavior report.
    pub evidence: Option<Vec<u8>>,
}

impl Contribution {
    pub fn remittance(recipient: Identifier, amount: u64) -> Self {
        Contribution {
            recipient,
            amount,
            evidence: None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut enc = CanonicalEncoder::with_capacity(48);
        enc.id(&self.recipient).u64(self.amount);
        if let Some(ev) = &self.evidence {
            enc.field(ev);
        }
        enc.finish()
    }
}

pub fn encode_proofs(proofs: &[SearchProof]) -> Vec<u8> {
    let mut enc = CanonicalEncoder::new();
    for p in proofs {
        enc.field(&p.to_bytes());
    }
    enc.finish()
}

pub fn encode_tx_set(hashes: impl IntoIterator<Item = Identifier>) -> Vec<u8> {
    let mut enc = CanonicalEncoder::new();
    for h in hashes {
        enc.id(&h);
    }
    enc.finish()
}

pub fn tx_hash(
    prev: &Identifier,
    owner: &Identifier,
    cont: &Contribution,
    proofs: &[SearchProof],
) -> Identifier {
    let mut enc = CanonicalEncoder::new();
    enc.id(prev)
        .id(owner)
        .field(&cont.encode())
        .field(&encode_proofs(proofs));
    enc.hash(prev.width())
}

pub fn blk_hash(
    prev: &Identifier,
    owner: &Identifier,
    tx_hashes: &[Identifier],
    proofs: &[SearchProof],
) -> Identifier {
    let mut enc = CanonicalEncoder::new();
    enc.id(prev)
        .id(owner)
        .field(&encode_tx_set(tx_hashes.iter().copied()))
        .field(&encode_proofs(proofs));
    enc.hash(prev.width())
}

/// Signature over a subject hash.
pub fn sign_hash(key: &KeyPair, h: &Identifier) -> Signature {
    key.sign(h.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub prev: Identifier,
    pub owner: Identifier,
    pub cont: Contribution,
    /// One proof per validator index `1..=alpha`.
    pub search_proofs: Vec<SearchProof>,
    pub h: Identifier,
    /// Owner first, then validators.
    pub sigs: Vec<Signature>,
}

impl Transaction {
    /// Builds and owner-signs a transaction.
    pub fn new(
        prev: Identifier,
        owner: &KeyPair,
        cont: Contribution,
        search_proofs: Vec<SearchProof>,
    ) -> Self {
        let owner_id = owner.id();
        let h = tx_hash(&prev, &owner_id, &cont, &search_proofs);
        let sig = sign_hash(owner, &h);
        Transaction {
            prev,
            owner: owner_id,
            cont,
            search_proofs,
            h,
            sigs: vec![sig],
        }
    }

    pub fn recompute_hash(&self) -> Identifier {
        tx_hash(&self.prev, &self.owner, &self.cont, &self.search_proofs)
    }

    pub fn validator_sigs(&self) -> &[Signature] {
        self.sigs.get(1..).unwrap_or(&[])
    }

    /// Hops summed over every proof; the routing fee base.
    pub fn proof_hops(&self) -> usize {
        self.search_proofs.iter().map(SearchProof::hop_count).sum()
    }

    pub fn is_misbehavior_report(&self) -> bool {
        self.cont.evidence.is_some()
    }

    /// Full canonical encoding including hash and signatures.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = CanonicalEncoder::new();
        enc.id(&self.prev)
            .id(&self.owner)
            .field(&self.cont.encode())
            .field(&encode_proofs(&self.search_proofs))
            .id(&self.h)
            .u32(self.sigs.len() as u32);
        for s in &self.sigs {
            s.encode_into(&mut enc);
        }
        enc.finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub prev: Identifier,
    pub owner: Identifier,
    pub txs: Vec<Arc<Transaction>>,
    pub search_proofs: Vec<SearchProof>,
    pub h: Identifier,
    pub sigs: Vec<Signature>,
}

impl Block {
    pub fn new(
        prev: Identifier,
        owner: &KeyPair,
        txs: Vec<Arc<Transaction>>,
        search_proofs: Vec<SearchProof>,
    ) -> Self {
        let owner_id = owner.id();
        let hashes: Vec<Identifier> = txs.iter().map(|t| t.h).collect();
        let h = blk_hash(&prev, &owner_id, &hashes, &search_proofs);
        let sig = sign_hash(owner, &h);
        Block {
            prev,
            owner: owner_id,
            txs,
            search_proofs,
            h,
            sigs: vec![sig],
        }
    }

    pub fn tx_hashes(&self) -> Vec<Identifier> {
        self.txs.iter().map(|t| t.h).collect()
    }

    pub fn recompute_hash(&self) -> Identifier {
        blk_hash(
            &self.prev,
            &self.owner,
            &self.tx_hashes(),
            &self.search_proofs,
        )
    }

    pub fn validator_sigs(&self) -> &[Signature] {
        self.sigs.get(1..).unwrap_or(&[])
    }

    pub fn is_genesis(&self) -> bool {
        let zero = Identifier::zero(self.h.width());
        self.prev == zero && self.owner == zero && self.txs.is_empty()
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = CanonicalEncoder::new();
        enc.id(&self.prev)
            .id(&self.owner)
            .field(&encode_tx_set(self.txs.iter().map(|t| t.h)))
            .field(&encode_proofs(&self.search_proofs))
            .id(&self.h)
            .u32(self.sigs.len() as u32);
        for s in &self.sigs {
            s.encode_into(&mut enc);
        }
        enc.finish()
    }
}

pub fn make_genesis(width: Width) -> Block {
    let zero = Identifier::zero(width);
    Block {
        prev: zero,
        owner: zero,
        txs: Vec::new(),
        search_proofs: Vec::new(),
        h: blk_hash(&zero, &zero, &[], &[]),
        sigs: Vec::new(),
    }
}

/// Overlay node flagging an owner's latest committed transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransactionPointer {
    /// Used as the pointer node's nameID.
    pub owner_name: Identifier,
    /// Used as the pointer node's numID.
    pub block_hash: Identifier,
    pub tx_hash: Identifier,
}

/// Fork-free order between sibling blocks: lower hash first, then lower
/// owner, then lexicographically smaller encoding.
pub fn fork_order(a: &Block, b: &Block) -> Ordering {
    a.h.cmp(&b.h)
        .then_with(|| a.owner.cmp(&b.owner))
        .then_with(|| a.canonical_bytes().cmp(&b.canonical_bytes()))
}

#[derive(Clone, Debug)]
struct Stored {
    block: Arc<Block>,
    height: u64,
}

/// Block store with an incrementally maintained main path.
#[derive(Clone, Debug)]
pub struct LedgerStore {
    blocks: HashMap<Identifier, Stored>,
    children: HashMap<Identifier, Vec<Identifier>>,
    genesis: Identifier,
    main: Vec<Identifier>,
    main_height: HashMap<Identifier, u64>,
    by_owner: HashMap<Identifier, Vec<(u64, Identifier)>>,
}

impl LedgerStore {
    pub fn new(genesis: Block) -> Self {
        let g = genesis.h;
        let mut blocks = HashMap::new();
        blocks.insert(
            g,
            Stored {
                block: Arc::new(genesis),
                height: 0,
            },
        );
        let mut main_height = HashMap::new();
        main_height.insert(g, 0);
        LedgerStore {
            blocks,
            children: HashMap::new(),
            genesis: g,
            main: vec![g],
            main_height,
            by_owner: HashMap::new(),
        }
    }

    pub fn with_width(width: Width) -> Self {
        Self::new(make_genesis(width))
    }

    pub fn genesis(&self) -> Identifier {
        self.genesis
    }

    /// Committed tail of the main path.
    pub fn tail(&self) -> Identifier {
        *self.main.last().expect("main path holds genesis")
    }

    /// Height of the main-path tail; genesis is height 0.
    pub fn height(&self) -> u64 {
        (self.main.len() - 1) as u64
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, h: &Identifier) -> Option<&Arc<Block>> {
        self.blocks.get(h).map(|s| &s.block)
    }

    pub fn contains(&self, h: &Identifier) -> bool {
        self.blocks.contains_key(h)
    }

    pub fn block_height(&self, h: &Identifier) -> Option<u64> {
        self.blocks.get(h).map(|s| s.height)
    }

    pub fn children(&self, h: &Identifier) -> &[Identifier] {
        self.children.get(h).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn main_path(&self) -> &[Identifier] {
        &self.main
    }

    pub fn on_main_path(&self, h: &Identifier) -> bool {
        self.main_height.contains_key(h)
    }

    /// Main-path block at `height`.
    pub fn main_at(&self, height: u64) -> Option<Identifier> {
        self.main.get(height as usize).copied()
    }

    pub fn append_block(&mut self, blk: Block) -> Result<()> {
        self.append_arc(Arc::new(blk))
    }

    pub fn append_arc(&mut self, blk: Arc<Block>) -> Result<()> {
        if self.blocks.contains_key(&blk.h) {
            return Err(Error::DuplicateBlock(blk.h));
        }
        let parent_height = self
            .blocks
            .get(&blk.prev)
            .ok_or(Error::MissingParent(blk.prev))?
            .height;
        let height = parent_height + 1;
        let h = blk.h;
        for tx in &blk.txs {
            self.by_owner.entry(tx.owner).or_default().push((height, h));
        }
        self.children.entry(blk.prev).or_default().push(h);
        let on_main_parent = self.main_height.get(&blk.prev) == Some(&parent_height);
        self.blocks.insert(
            h,
            Stored {
                block: blk.clone(),
                height,
            },
        );
        if on_main_parent {
            let replace = match self.main.get(height as usize) {
                None => true,
                Some(cur) => fork_order(&blk, &self.blocks[cur].block) == Ordering::Less,
            };
            if replace {
                for dropped in self.main.drain(height as usize..) {
                    self.main_height.remove(&dropped);
                }
                self.main.push(h);
                self.main_height.insert(h, height);
                // A fresh block has no children, so the path ends here.
            }
        }
        Ok(())
    }

    /// Recomputes the tail by walking from genesis along the lowest child.
    pub fn resolve_tail(&self) -> Identifier {
        let mut cur = self.genesis;
        loop {
            let kids = self.children(&cur);
            let best = kids
                .iter()
                .min_by(|a, b| fork_order(&self.blocks[*a].block, &self.blocks[*b].block));
            match best {
                Some(b) => cur = *b,
                None => return cur,
            }
        }
    }

    /// On the main path with at least one main-path successor.
    pub fn is_finalized(&self, h: &Identifier) -> Result<bool> {
        if !self.blocks.contains_key(h) {
            return Err(Error::NotFound(format!("block {h}")));
        }
        Ok(match self.main_height.get(h) {
            Some(height) => *height < self.height(),
            None => false,
        })
    }

    /// Most recent main-path block at or before `upto` holding a
    /// transaction of `owner`.
    pub fn latest_owner_block(
        &self,
        owner: &Identifier,
        upto: &Identifier,
    ) -> Result<Option<Identifier>> {
        let limit = *self
            .main_height
            .get(upto)
            .ok_or_else(|| Error::InvalidReference(format!("{upto} is not on the main path")))?;
        let Some(list) = self.by_owner.get(owner) else {
            return Ok(None);
        };
        Ok(list
            .iter()
            .filter(|(height, h)| *height <= limit && self.main_height.get(h) == Some(height))
            .max_by_key(|(height, _)| *height)
            .map(|(_, h)| *h))
    }

    /// One line per main-path block: `h prev owner tx1,tx2,... sigs`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for h in &self.main {
            let b = &self.blocks[h].block;
            let txs: Vec<String> = b.txs.iter().map(|t| t.h.to_hex()).collect();
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                b.h.to_hex(),
                b.prev.to_hex(),
                b.owner.to_hex(),
                if txs.is_empty() {
                    "-".to_string()
                } else {
                    txs.join(",")
                },
                b.sigs.len()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::SchemeKind;

    fn w() -> Width {
        Width::new(64).unwrap()
    }

    fn id(v: u64) -> Identifier {
        Identifier::from_u64(v, w())
    }

    fn key(seed: u8) -> KeyPair {
        KeyPair::from_seed(SchemeKind::Mac, [seed; 32], w())
    }

    fn t0_cont() -> Contribution {
        Contribution::remittance(id(2), 5)
    }

    #[test]
    fn fixture_hashes() {
        let t0 = tx_hash(&id(0), &id(1), &t0_cont(), &[]);
        assert_eq!(t0.to_hex(), "44f98586bf34ab36");
        let b0 = blk_hash(&id(0), &id(1), &[t0], &[]);
        assert_eq!(b0.to_hex(), "64d190e95a896ebf");
        assert_eq!(make_genesis(w()).h.to_hex(), "54c2ed0f86ebd7f4");
    }

    #[test]
    fn tx_hash_sensitivity() {
        let a = tx_hash(&id(0), &id(1), &t0_cont(), &[]);
        assert_eq!(a, tx_hash(&id(0), &id(1), &t0_cont(), &[]));
        let b = tx_hash(&id(0), &id(1), &Contribution::remittance(id(2), 4), &[]);
        assert_ne!(a, b);
        let mut with_ev = t0_cont();
        with_ev.evidence = Some(vec![]);
        assert_ne!(a, tx_hash(&id(0), &id(1), &with_ev, &[]));
    }

    #[test]
    fn block_order_matters() {
        let x = blk_hash(&id(0), &id(1), &[id(5), id(6)], &[]);
        let y = blk_hash(&id(0), &id(1), &[id(6), id(5)], &[]);
        assert_ne!(x, y);
    }

    #[test]
    fn genesis_is_tail() {
        let s = LedgerStore::with_width(w());
        assert_eq!(s.tail(), s.genesis());
        assert_eq!(make_genesis(w()).prev, id(0));
        assert_eq!(make_genesis(w()).h, make_genesis(w()).h);
        assert!(make_genesis(w()).is_genesis());
    }

    fn child(prev: Identifier, seed: u8) -> Block {
        Block::new(prev, &key(seed), vec![], vec![])
    }

    #[test]
    fn append_and_finality() {
        let mut s = LedgerStore::with_width(w());
        let g = s.genesis();
        let b1 = child(g, 1);
        let h1 = b1.h;
        s.append_block(b1).unwrap();
        assert_eq!(s.tail(), h1);
        assert!(!s.is_finalized(&h1).unwrap());
        assert!(s.is_finalized(&g).unwrap());
        let b2 = child(h1, 2);
        let h2 = b2.h;
        s.append_block(b2.clone()).unwrap();
        assert!(s.is_finalized(&h1).unwrap());
        assert!(matches!(s.append_block(b2), Err(Error::DuplicateBlock(_))));
        assert!(matches!(
            s.append_block(child(id(42), 3)),
            Err(Error::MissingParent(_))
        ));
        assert!(s.is_finalized(&id(43)).is_err());
        assert_eq!(s.resolve_tail(), h2);
    }

    #[test]
    fn fork_follows_lowest_hash() {
        let mut s = LedgerStore::with_width(w());
        let g = s.genesis();
        let kids: Vec<Block> = (1..=4).map(|i| child(g, i)).collect();
        let lowest = kids.iter().map(|b| b.h).min().unwrap();
        for k in &kids {
            s.append_block(k.clone()).unwrap();
        }
        assert_eq!(s.tail(), lowest);
        assert_eq!(s.resolve_tail(), lowest);
        for k in kids.iter().filter(|k| k.h != lowest) {
            assert!(!s.is_finalized(&k.h).unwrap());
            let grandchild = child(k.h, 9);
            let gh = grandchild.h;
            s.append_block(grandchild).unwrap();
            assert!(!s.is_finalized(&gh).unwrap());
        }
        assert_eq!(s.tail(), lowest);
    }

    #[test]
    fn latest_owner_block_scans_main_path() {
        let mut s = LedgerStore::with_width(w());
        let owner = key(7);
        let mk_tx = |prev: Identifier, amount: u64| {
            Arc::new(Transaction::new(
                prev,
                &owner,
                Contribution::remittance(id(2), amount),
                vec![],
            ))
        };
        let g = s.genesis();
        let b1 = Block::new(g, &key(1), vec![mk_tx(g, 1)], vec![]);
        let b2 = Block::new(b1.h, &key(1), vec![], vec![]);
        let b3 = Block::new(b2.h, &key(1), vec![mk_tx(b2.h, 2)], vec![]);
        let (h1, h2, h3) = (b1.h, b2.h, b3.h);
        s.append_block(b1).unwrap();
        s.append_block(b2).unwrap();
        s.append_block(b3).unwrap();
        assert_eq!(s.latest_owner_block(&owner.id(), &h2).unwrap(), Some(h1));
        assert_eq!(s.latest_owner_block(&owner.id(), &h3).unwrap(), Some(h3));
        assert_eq!(s.latest_owner_block(&owner.id(), &h1).unwrap(), Some(h1));
        assert_eq!(s.latest_owner_block(&owner.id(), &g).unwrap(), None);
        assert_eq!(s.latest_owner_block(&id(99), &h3).unwrap(), None);
        assert!(s.latest_owner_block(&owner.id(), &id(5)).is_err());
    }

    #[test]
    fn export_lists_main_path() {
        let mut s = LedgerStore::with_width(w());
        let g = s.genesis();
        s.append_block(child(g, 1)).unwrap();
        let text = s.export();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().ends_with(" - 0"));
    }
}
