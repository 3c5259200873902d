// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Proof-of-Validation: validator selection, transaction and block checks,
//! signature thresholds and knockout recovery after a lost fork.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ident::{CanonicalEncoder, Identifier, KeyDirectory, KeyPair, Signature};
use crate::incentive::{Blacklist, EvidenceVerifier, MisbehaviorEvidence};
use crate::ledger::{encode_tx_set, sign_hash, Block, Contribution, LedgerStore, Transaction};
use crate::skipgraph::{verify_search_proof, NodeKind, Overlay, SearchProof};
use crate::view::ViewTable;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PovParams {
    /// Validators Threshold.
    pub alpha: usize,
    /// Signatures Threshold.
    pub t: usize,
    pub min_tx: usize,
    pub validation_fee: u64,
    pub routing_fee: u64,
    pub block_reward: u64,
    pub misbehavior_penalty: u64,
    /// Share of the penalty paid to the reporting auditor; the rest goes to
    /// the owner of the block committing the report.
    pub audition_reward: u64,
    /// Grace interval, in blocks, for retiring superseded pointers.
    pub block_interval: u64,
}

impl Default for PovParams {
    fn default() -> Self {
        PovParams {
            alpha: 8,
            t: 6,
            min_tx: 10,
            validation_fee: 1,
            routing_fee: 1,
            block_reward: 1000,
            misbehavior_penalty: 500,
            audition_reward: 250,
            block_interval: 2,
        }
    }
}

/// Expected routing cost of resolving all validators of one subject.
pub fn expected_path_hops(alpha: usize, n_peers: usize) -> u64 {
    let per_search = (n_peers.max(2) as f64).log2().ceil() as u64;
    alpha as u64 * per_search
}

impl PovParams {
    /// Full check, including `t <= alpha`.
    pub fn validate(&self, n_peers: usize) -> Result<()> {
        if self.t > self.alpha {
            return Err(Error::InvalidParameter(format!(
                "t = {} exceeds alpha = {}",
                self.t, self.alpha
            )));
        }
        self.validate_relaxed(n_peers)
    }

    /// Like [`PovParams::validate`] but admits `t > alpha`, a configuration
    /// in which no subject can ever collect `t` distinct signatures.
    pub fn validate_relaxed(&self, n_peers: usize) -> Result<()> {
        if self.alpha == 0 || self.t == 0 {
            return Err(Error::InvalidParameter(
                "alpha and t must be positive".into(),
            ));
        }
        if self.min_tx == 0 {
            return Err(Error::InvalidParameter("min_tx must be positive".into()));
        }
        if self.block_interval == 0 {
            return Err(Error::InvalidParameter(
                "block_interval must be positive".into(),
            ));
        }
        if self.audition_reward > self.misbehavior_penalty {
            return Err(Error::InvalidParameter(
                "audition_reward cannot exceed misbehavior_penalty".into(),
            ));
        }
        let cost = self.validation_fee * self.t as u64
            + self.routing_fee * expected_path_hops(self.alpha, n_peers);
        if self.block_reward <= cost {
            return Err(Error::InvalidParameter(format!(
                "block_reward {} must exceed validation and routing cost {cost}",
                self.block_reward
            )));
        }
        Ok(())
    }

    /// Fee debited from a transaction owner on top of the remittance.
    pub fn tx_fee(&self, proof_hops: usize) -> u64 {
        self.validation_fee * self.t as u64 + self.routing_fee * proof_hops as u64
    }
}

fn check_index(i: usize, alpha: usize) -> Result<()> {
    if i == 0 || i > alpha {
        return Err(Error::InvalidParameter(format!(
            "validator index {i} outside 1..={alpha}"
        )));
    }
    Ok(())
}

fn ids_with_prefix(
    prefix: CanonicalEncoder,
    alpha: usize,
    width: crate::ident::Width,
) -> Vec<Identifier> {
    (1..=alpha)
        .map(|i| {
            let mut enc = prefix.clone();
            enc.u32(i as u32);
            enc.hash(width)
        })
        .collect()
}

fn tx_prefix(prev: &Identifier, owner: &Identifier, cont: &Contribution) -> CanonicalEncoder {
    let mut enc = CanonicalEncoder::new();
    enc.id(prev).id(owner).field(&cont.encode());
    enc
}

fn blk_prefix(prev: &Identifier, owner: &Identifier, tx_hashes: &[Identifier]) -> CanonicalEncoder {
    let mut enc = CanonicalEncoder::new();
    enc.id(prev)
        .id(owner)
        .field(&encode_tx_set(tx_hashes.iter().copied()));
    enc
}

pub fn tx_validator_id(
    prev: &Identifier,
    owner: &Identifier,
    cont: &Contribution,
    i: usize,
    alpha: usize,
) -> Result<Identifier> {
    check_index(i, alpha)?;
    let mut enc = tx_prefix(prev, owner, cont);
    enc.u32(i as u32);
    Ok(enc.hash(prev.width()))
}

/// Validator identifiers for indices `1..=alpha`.
pub fn tx_validator_ids(
    prev: &Identifier,
    owner: &Identifier,
    cont: &Contribution,
    alpha: usize,
) -> Result<Vec<Identifier>> {
    check_index(alpha.max(1), alpha)?;
    Ok(ids_with_prefix(
        tx_prefix(prev, owner, cont),
        alpha,
        prev.width(),
    ))
}

pub fn blk_validator_id(
    prev: &Identifier,
    owner: &Identifier,
    tx_hashes: &[Identifier],
    i: usize,
    alpha: usize,
) -> Result<Identifier> {
    check_index(i, alpha)?;
    let mut enc = blk_prefix(prev, owner, tx_hashes);
    enc.u32(i as u32);
    Ok(enc.hash(prev.width()))
}

pub fn blk_validator_ids(
    prev: &Identifier,
    owner: &Identifier,
    tx_hashes: &[Identifier],
    alpha: usize,
) -> Result<Vec<Identifier>> {
    check_index(alpha.max(1), alpha)?;
    Ok(ids_with_prefix(
        blk_prefix(prev, owner, tx_hashes),
        alpha,
        prev.width(),
    ))
}

/// Resolves each validator identifier to its designated peer. Entries are
/// kept per index; several indices may name the same peer.
pub fn resolve_validators(
    overlay: &Overlay,
    requester: &Identifier,
    validator_ids: &[Identifier],
) -> Result<Vec<(Identifier, SearchProof)>> {
    validator_ids
        .iter()
        .map(|vid| {
            let (node, proof) = overlay.search_num_id(requester, vid, Some(NodeKind::Peer))?;
            Ok((node.num_id, proof))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Signed,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reason {
    Ok,
    Unsound,
    Incorrect,
    Unauthentic,
    InsufficientBalance,
    Inconsistent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationOutcome {
    pub verdict: Verdict,
    pub reason: Reason,
    pub signature: Option<Signature>,
}

impl ValidationOutcome {
    pub fn signed(sig: Signature) -> Self {
        ValidationOutcome {
            verdict: Verdict::Signed,
            reason: Reason::Ok,
            signature: Some(sig),
        }
    }

    pub fn rejected(reason: Reason) -> Self {
        ValidationOutcome {
            verdict: Verdict::Rejected,
            reason,
            signature: None,
        }
    }

    pub fn is_signed(&self) -> bool {
        self.verdict == Verdict::Signed
    }
}

/// Memo of verified transaction content, keyed by hash. An entry is only
/// reused for a transaction equal in every hashed field, so the memo never
/// changes a verdict. Signatures are remembered individually.
#[derive(Debug, Default)]
pub struct AuthCache {
    entries: RefCell<HashMap<Identifier, CacheEntry>>,
}

#[derive(Debug)]
struct CacheEntry {
    tx: Arc<Transaction>,
    intrinsic_ok: bool,
    good_sigs: HashSet<Signature>,
}

impl AuthCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn remove(&self, h: &Identifier) {
        self.entries.borrow_mut().remove(h);
    }

    pub fn clear(&self) {
        self.entries.borrow_mut().clear();
    }

    pub fn len(&self) -> usize {
        self.entries.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.borrow().is_empty()
    }
}

fn same_content(a: &Transaction, b: &Transaction) -> bool {
    a.h == b.h
        && a.prev == b.prev
        && a.owner == b.owner
        && a.cont == b.cont
        && a.search_proofs == b.search_proofs
}

/// Inputs a validator consults.
pub struct ValidatorContext<'a> {
    pub key: &'a KeyPair,
    pub params: &'a PovParams,
    pub store: &'a LedgerStore,
    pub view: &'a ViewTable,
    pub keys: &'a dyn KeyDirectory,
    pub blacklist: &'a Blacklist,
    pub evidence: Option<&'a dyn EvidenceVerifier>,
    /// Re-reads the committed tail right before a block signature is issued.
    pub tail_probe: Option<&'a dyn Fn() -> Identifier>,
    pub auth_cache: Option<&'a AuthCache>,
}

impl<'a> ValidatorContext<'a> {
    pub fn new(
        key: &'a KeyPair,
        params: &'a PovParams,
        store: &'a LedgerStore,
        view: &'a ViewTable,
        keys: &'a dyn KeyDirectory,
        blacklist: &'a Blacklist,
    ) -> Self {
        ValidatorContext {
            key,
            params,
            store,
            view,
            keys,
            blacklist,
            evidence: None,
            tail_probe: None,
            auth_cache: None,
        }
    }

    fn proofs_match(&self, proofs: &[SearchProof], expected: &[Identifier]) -> bool {
        proofs.len() == expected.len()
            && proofs
                .iter()
                .zip(expected)
                .all(|(p, e)| p.target == *e && verify_search_proof(p, self.keys))
    }

    fn intrinsic_uncached(&self, tx: &Transaction) -> bool {
        if tx.recompute_hash() != tx.h {
            return false;
        }
        let Ok(ids) = tx_validator_ids(&tx.prev, &tx.owner, &tx.cont, self.params.alpha) else {
            return false;
        };
        // The owner runs the validator searches.
        if tx
            .search_proofs
            .iter()
            .any(|p| p.hops.first().map(|h| h.signer) != Some(tx.owner))
        {
            return false;
        }
        self.proofs_match(&tx.search_proofs, &ids)
    }

    /// Counts distinct designated, non-blacklisted signers with a valid
    /// signature over `tx.h`, consulting the memo when present.
    fn tx_auth(&self, tx: &Arc<Transaction>) -> (bool, usize) {
        let designated: Vec<Identifier> = tx.search_proofs.iter().map(|p| p.result).collect();
        let owner_ok = |sig_ok: &mut dyn FnMut(&Signature) -> bool| -> (bool, usize) {
            let Some(owner_sig) = tx.sigs.first() else {
                return (false, 0);
            };
            if owner_sig.signer_id != tx.owner || !sig_ok(owner_sig) {
                return (false, 0);
            }
            let mut seen = HashSet::new();
            for s in tx.validator_sigs() {
                if designated.contains(&s.signer_id)
                    && !self.blacklist.contains(&s.signer_id)
                    && !seen.contains(&s.signer_id)
                    && sig_ok(s)
                {
                    seen.insert(s.signer_id);
                }
            }
            (true, seen.len())
        };
        let msg = tx.h.as_bytes().to_vec();
        let Some(cache) = self.auth_cache else {
            if !self.intrinsic_uncached(tx) {
                return (false, 0);
            }
            return owner_ok(&mut |s| self.keys.verify_signature(&msg, s));
        };
        let mut entries = cache.entries.borrow_mut();
        let hit = entries
            .get(&tx.h)
            .map(|e| Arc::ptr_eq(&e.tx, tx) || same_content(&e.tx, tx))
            .unwrap_or(false);
        if !hit {
            let ok = self.intrinsic_uncached(tx);
            entries.insert(
                tx.h,
                CacheEntry {
                    tx: tx.clone(),
                    intrinsic_ok: ok,
                    good_sigs: HashSet::new(),
                },
            );
        }
        let entry = entries.get_mut(&tx.h).expect("inserted above");
        if !entry.intrinsic_ok {
            return (false, 0);
        }
        let keys = self.keys;
        owner_ok(&mut |s| {
            if entry.good_sigs.contains(s) {
                return true;
            }
            let ok = keys.verify_signature(&msg, s);
            if ok {
                entry.good_sigs.insert(s.clone());
            }
            ok
        })
    }

    fn tx_sound(&self, tx: &Transaction) -> bool {
        let Some(prev_h) = self.store.block_height(&tx.prev) else {
            return false;
        };
        if !self.store.on_main_path(&tx.prev) {
            return false;
        }
        match self.store.latest_owner_block(&tx.owner, &self.store.tail()) {
            Ok(Some(latest)) => self
                .store
                .block_height(&latest)
                .map(|h| h <= prev_h)
                .unwrap_or(false),
            Ok(None) => true,
            Err(_) => false,
        }
    }

    fn designated(&self, proofs: &[SearchProof]) -> bool {
        let me = self.key.id();
        proofs.iter().any(|p| p.result == me)
    }

    /// Authenticity, soundness, correctness and balance compliance, in
    /// that order.
    pub fn validate_transaction(&self, tx: &Arc<Transaction>) -> ValidationOutcome {
        if self.blacklist.contains(&tx.owner) || !self.designated(&tx.search_proofs) {
            return ValidationOutcome::rejected(Reason::Unauthentic);
        }
        let (auth, _) = self.tx_auth(tx);
        if !auth {
            return ValidationOutcome::rejected(Reason::Unauthentic);
        }
        if !self.tx_sound(tx) {
            return ValidationOutcome::rejected(Reason::Unsound);
        }
        let balance = self.view.balance(&tx.owner);
        match &tx.cont.evidence {
            Some(bytes) => {
                if tx.cont.recipient != tx.owner || tx.cont.amount != 0 {
                    return ValidationOutcome::rejected(Reason::Incorrect);
                }
                let ok = match (
                    self.evidence,
                    MisbehaviorEvidence::decode(bytes, tx.h.width()),
                ) {
                    (Some(v), Ok(ev)) => ev.reporter == tx.owner && v.verify(&ev).is_ok(),
                    _ => false,
                };
                if !ok {
                    return ValidationOutcome::rejected(Reason::Incorrect);
                }
            }
            None => {
                if balance < tx.cont.amount as i64 {
                    return ValidationOutcome::rejected(Reason::Incorrect);
                }
            }
        }
        let due = tx.cont.amount as i64 + self.params.tx_fee(tx.proof_hops()) as i64;
        if balance < due {
            return ValidationOutcome::rejected(Reason::InsufficientBalance);
        }
        ValidationOutcome::signed(sign_hash(self.key, &tx.h))
    }

    /// Whether a member transaction carries `t` valid validator signatures
    /// and is sound against the validator's view.
    pub fn member_ok(&self, tx: &Arc<Transaction>) -> Result<(), Reason> {
        if self.blacklist.contains(&tx.owner) {
            return Err(Reason::Unauthentic);
        }
        let (auth, signers) = self.tx_auth(tx);
        if !auth || signers < self.params.t {
            return Err(Reason::Unauthentic);
        }
        if !self.tx_sound(tx) {
            return Err(Reason::Unsound);
        }
        Ok(())
    }

    /// Authenticity, size, member checks and consistency of a block.
    pub fn validate_block(&self, blk: &Block) -> ValidationOutcome {
        if blk.recompute_hash() != blk.h
            || self.blacklist.contains(&blk.owner)
            || !self.designated(&blk.search_proofs)
        {
            return ValidationOutcome::rejected(Reason::Unauthentic);
        }
        match blk.sigs.first() {
            Some(s)
                if s.signer_id == blk.owner && self.keys.verify_signature(blk.h.as_bytes(), s) => {}
            _ => return ValidationOutcome::rejected(Reason::Unauthentic),
        }
        let Ok(ids) = blk_validator_ids(&blk.prev, &blk.owner, &blk.tx_hashes(), self.params.alpha)
        else {
            return ValidationOutcome::rejected(Reason::Unauthentic);
        };
        if blk
            .search_proofs
            .iter()
            .any(|p| p.hops.first().map(|h| h.signer) != Some(blk.owner))
            || !self.proofs_match(&blk.search_proofs, &ids)
        {
            return ValidationOutcome::rejected(Reason::Unauthentic);
        }
        if blk.txs.len() < self.params.min_tx {
            return ValidationOutcome::rejected(Reason::Incorrect);
        }
        let mut owners = HashSet::with_capacity(blk.txs.len());
        for tx in &blk.txs {
            if !owners.insert(tx.owner) {
                return ValidationOutcome::rejected(Reason::Unsound);
            }
            if let Err(reason) = self.member_ok(tx) {
                return ValidationOutcome::rejected(reason);
            }
            let (Some(ph), Some(bh)) = (
                self.store.block_height(&tx.prev),
                self.store.block_height(&blk.prev),
            ) else {
                return ValidationOutcome::rejected(Reason::Unsound);
            };
            if ph > bh {
                return ValidationOutcome::rejected(Reason::Unsound);
            }
        }
        if blk.prev != self.store.tail() || blk.prev != self.view.tail() {
            return ValidationOutcome::rejected(Reason::Inconsistent);
        }
        if let Some(probe) = self.tail_probe {
            if probe() != blk.prev {
                return ValidationOutcome::rejected(Reason::Inconsistent);
            }
        }
        ValidationOutcome::signed(sign_hash(self.key, &blk.h))
    }
}

/// Distinct designated signers whose signature over `h` verifies. When a
/// blacklist is supplied, its members are not counted.
pub fn count_valid_signers(
    h: &Identifier,
    sigs: &[Signature],
    designated: &[Identifier],
    keys: &dyn KeyDirectory,
    blacklist: Option<&Blacklist>,
) -> usize {
    let mut seen = HashSet::new();
    for s in sigs {
        if seen.contains(&s.signer_id)
            || !designated.contains(&s.signer_id)
            || blacklist.map(|b| b.contains(&s.signer_id)).unwrap_or(false)
        {
            continue;
        }
        if keys.verify_signature(h.as_bytes(), s) {
            seen.insert(s.signer_id);
        }
    }
    seen.len()
}

/// True iff at least `t` distinct validator peers produced a signature over
/// `h` that verifies.
pub fn collect_threshold(
    h: &Identifier,
    outcomes: &[(Identifier, ValidationOutcome)],
    keys: &dyn KeyDirectory,
    t: usize,
) -> bool {
    let mut seen = HashSet::new();
    for (peer, out) in outcomes {
        if let Some(sig) = &out.signature {
            if sig.signer_id == *peer && keys.verify_signature(h.as_bytes(), sig) {
                seen.insert(*peer);
            }
        }
    }
    t > 0 && seen.len() >= t
}

/// Candidate set after `mine` lost a fork to `winner`: my transactions not
/// in the winner, then `fresh` ones not already present. The knocked-out
/// block's replicas leave the overlay. No fees or rewards move.
pub fn knockout_recovery(
    overlay: &mut Overlay,
    winner: &Block,
    mine: &Block,
    fresh: &[Arc<Transaction>],
) -> Vec<Arc<Transaction>> {
    let _ = overlay.leave(&mine.h, NodeKind::Block);
    let mut taken: HashSet<Identifier> = winner.txs.iter().map(|t| t.h).collect();
    let mut out = Vec::new();
    for tx in mine.txs.iter().chain(fresh.iter()) {
        if taken.insert(tx.h) {
            out.push(tx.clone());
        }
    }
    out
}
