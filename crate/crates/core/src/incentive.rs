// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Misbehavior evidence, auditing and the blacklist. Fee and reward flows
//! are applied by [`crate::view::ViewTable::apply_block`].

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ident::{CanonicalEncoder, Identifier, KeyDirectory, KeyPair, Width};
use crate::ledger::{Block, Contribution, LedgerStore, Transaction, TransactionPointer};
use crate::pov::{self, PovParams};
use crate::skipgraph::{Decoder, SearchProof};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MisbehaviorKind {
    /// A block handed around without `t` valid validator signatures.
    InvalidBlockDirectSubmit,
    /// A transaction pointer kept alive past its retirement interval.
    StalePointer,
    /// A committed block carrying a transaction that fails soundness.
    UnsoundTxInCommittedBlock,
    /// A committed block carrying a misbehavior report whose evidence does
    /// not verify.
    IncorrectTxInCommittedBlock,
    /// A committed block whose own or member search proofs do not verify.
    ForgedProof,
    /// A committed block carrying a transaction with fewer than `t` valid
    /// validator signatures.
    UnderSignedTxInCommittedBlock,
}

impl MisbehaviorKind {
    pub fn code(self) -> u32 {
        match self {
            MisbehaviorKind::InvalidBlockDirectSubmit => 1,
            MisbehaviorKind::StalePointer => 2,
            MisbehaviorKind::UnsoundTxInCommittedBlock => 3,
            MisbehaviorKind::IncorrectTxInCommittedBlock => 4,
            MisbehaviorKind::ForgedProof => 5,
            MisbehaviorKind::UnderSignedTxInCommittedBlock => 6,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            1 => MisbehaviorKind::InvalidBlockDirectSubmit,
            2 => MisbehaviorKind::StalePointer,
            3 => MisbehaviorKind::UnsoundTxInCommittedBlock,
            4 => MisbehaviorKind::IncorrectTxInCommittedBlock,
            5 => MisbehaviorKind::ForgedProof,
            6 => MisbehaviorKind::UnderSignedTxInCommittedBlock,
            other => return Err(Error::Decode(format!("unknown misbehavior code {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MisbehaviorEvidence {
    pub accused: Identifier,
    pub kind: MisbehaviorKind,
    /// Hash of the offending artifact (block hash, or pointer numID).
    pub subject: Identifier,
    /// Canonical bytes of the offending artifact.
    pub payload: Vec<u8>,
    pub reporter: Identifier,
}

impl MisbehaviorEvidence {
    pub fn encode(&self) -> Vec<u8> {
        let mut enc = CanonicalEncoder::new();
        enc.id(&self.accused)
            .u32(self.kind.code())
            .id(&self.subject)
            .field(&self.payload)
            .id(&self.reporter);
        enc.finish()
    }

    pub fn decode(bytes: &[u8], width: Width) -> Result<Self> {
        let mut dec = Decoder::new(bytes);
        let accused = dec.id(width)?;
        let kind = MisbehaviorKind::from_code(dec.u32()?)?;
        let subject = dec.id(width)?;
        let payload = dec.field()?.to_vec();
        let reporter = dec.id(width)?;
        dec.finish()?;
        Ok(MisbehaviorEvidence {
            accused,
            kind,
            subject,
            payload,
            reporter,
        })
    }
}

/// Canonical bytes identifying one pointer replica.
pub fn pointer_payload(ptr: &TransactionPointer, holder: &Identifier) -> Vec<u8> {
    let mut enc = CanonicalEncoder::new();
    enc.id(&ptr.owner_name)
        .id(&ptr.block_hash)
        .id(&ptr.tx_hash)
        .id(holder);
    enc.finish()
}

/// Append-only set of blacklisted peers with the height of the committing block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Blacklist {
    entries: BTreeMap<Identifier, u64>,
}

impl Blacklist {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `peer` at `height`; an existing entry keeps its first height.
    pub fn insert(&mut self, peer: Identifier, height: u64) -> bool {
        if self.entries.contains_key(&peer) {
            return false;
        }
        self.entries.insert(peer, height);
        true
    }

    pub fn contains(&self, peer: &Identifier) -> bool {
        self.entries.contains_key(peer)
    }

    pub fn height_of(&self, peer: &Identifier) -> Option<u64> {
        self.entries.get(peer).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Identifier, &u64)> {
        self.entries.iter()
    }
}

pub fn is_blacklisted(blacklist: &Blacklist, peer: &Identifier) -> bool {
    blacklist.contains(peer)
}

/// Lifecycle of one pointer replica as recorded by the pointer registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PointerStatus {
    pub live: bool,
    pub created_at: u64,
    pub superseded_at: Option<u64>,
}

/// Where an auditor or validator re-fetches artifacts named by evidence.
pub trait ArtifactDirectory {
    fn store(&self) -> &LedgerStore;
    /// Blocks that were handed around outside the store.
    fn submitted_block(&self, h: &Identifier) -> Option<Arc<Block>>;
    fn pointer_status(
        &self,
        ptr: &TransactionPointer,
        holder: &Identifier,
    ) -> Option<PointerStatus>;
    /// Current main-path height.
    fn current_height(&self) -> u64 {
        self.store().height()
    }
}

/// Re-checks evidence embedded in misbehavior reports.
pub trait EvidenceVerifier {
    fn verify(&self, evidence: &MisbehaviorEvidence) -> Result<()>;
}

/// Everything an auditor needs to re-run the validators' checks.
pub struct Auditor<'a> {
    pub params: &'a PovParams,
    pub keys: &'a dyn KeyDirectory,
    pub artifacts: &'a dyn ArtifactDirectory,
    pub width: Width,
}

impl Auditor<'_> {
    fn proofs_ok(&self, proofs: &[SearchProof], expected: &[Identifier]) -> bool {
        proofs.len() == expected.len()
            && proofs
                .iter()
                .zip(expected)
                .all(|(p, e)| p.target == *e && crate::skipgraph::verify_search_proof(p, self.keys))
    }

    fn block_proofs_ok(&self, blk: &Block) -> bool {
        let Ok(ids) =
            pov::blk_validator_ids(&blk.prev, &blk.owner, &blk.tx_hashes(), self.params.alpha)
        else {
            return false;
        };
        self.proofs_ok(&blk.search_proofs, &ids)
    }

    fn tx_proofs_ok(&self, tx: &Transaction) -> bool {
        let Ok(ids) = pov::tx_validator_ids(&tx.prev, &tx.owner, &tx.cont, self.params.alpha)
        else {
            return false;
        };
        self.proofs_ok(&tx.search_proofs, &ids)
    }

    /// Soundness of `tx` as a member of a block whose parent is `parent`.
    fn tx_sound_at(&self, tx: &Transaction, parent: &Identifier) -> bool {
        let store = self.artifacts.store();
        let (Some(prev_h), Some(parent_h)) =
            (store.block_height(&tx.prev), store.block_height(parent))
        else {
            return false;
        };
        if !store.on_main_path(&tx.prev) || prev_h > parent_h {
            return false;
        }
        match store.latest_owner_block(&tx.owner, parent) {
            Ok(Some(latest)) => store
                .block_height(&latest)
                .map(|h| h <= prev_h)
                .unwrap_or(false),
            Ok(None) => true,
            Err(_) => false,
        }
    }

    /// Whether `tx` carries evidence that fails verification.
    fn tx_incorrect(&self, tx: &Transaction) -> bool {
        match &tx.cont.evidence {
            None => false,
            Some(bytes) => match MisbehaviorEvidence::decode(bytes, self.width) {
                Ok(ev) => ev.reporter != tx.owner || self.verify(&ev).is_err(),
                Err(_) => true,
            },
        }
    }

    /// Re-runs the validators' checks on a committed (main-path) block.
    pub fn audit_committed_block(
        &self,
        blk: &Block,
        reporter: &Identifier,
    ) -> Vec<MisbehaviorEvidence> {
        let mut out = Vec::new();
        let payload = blk.canonical_bytes();
        let mk = |accused: Identifier, kind: MisbehaviorKind| MisbehaviorEvidence {
            accused,
            kind,
            subject: blk.h,
            payload: payload.clone(),
            reporter: *reporter,
        };
        if blk.is_genesis() {
            return out;
        }
        let proofs_forged =
            !self.block_proofs_ok(blk) || blk.txs.iter().any(|t| !self.tx_proofs_ok(t));
        if proofs_forged {
            out.push(mk(blk.owner, MisbehaviorKind::ForgedProof));
        }
        let mut seen_owners = std::collections::HashSet::new();
        let unsound = blk
            .txs
            .iter()
            .any(|t| !seen_owners.insert(t.owner) || !self.tx_sound_at(t, &blk.prev));
        if unsound {
            out.push(mk(blk.owner, MisbehaviorKind::UnsoundTxInCommittedBlock));
        }
        let mut accused: Vec<Identifier> = Vec::new();
        for tx in blk.txs.iter().filter(|t| self.tx_incorrect(t)) {
            accused.push(tx.owner);
            for s in tx.validator_sigs() {
                accused.push(s.signer_id);
            }
        }
        accused.sort();
        accused.dedup();
        for a in accused {
            out.push(mk(a, MisbehaviorKind::IncorrectTxInCommittedBlock));
        }
        let under_signed = blk.txs.iter().any(|tx| {
            let designated: Vec<Identifier> = tx.search_proofs.iter().map(|p| p.result).collect();
            pov::count_valid_signers(&tx.h, tx.validator_sigs(), &designated, self.keys, None)
                < self.params.t
        });
        if under_signed {
            // The block owner and every validator that attested the block.
            let mut accused = vec![blk.owner];
            accused.extend(blk.validator_sigs().iter().map(|s| s.signer_id));
            accused.sort();
            accused.dedup();
            for a in accused {
                out.push(mk(a, MisbehaviorKind::UnderSignedTxInCommittedBlock));
            }
        }
        out
    }

    /// Checks a block that reached the auditor outside of consensus.
    pub fn audit_submitted_block(
        &self,
        blk: &Block,
        reporter: &Identifier,
    ) -> Vec<MisbehaviorEvidence> {
        if self.submitted_block_valid(blk) {
            return Vec::new();
        }
        vec![MisbehaviorEvidence {
            accused: blk.owner,
            kind: MisbehaviorKind::InvalidBlockDirectSubmit,
            subject: blk.h,
            payload: blk.canonical_bytes(),
            reporter: *reporter,
        }]
    }

    fn submitted_block_valid(&self, blk: &Block) -> bool {
        if blk.recompute_hash() != blk.h || !self.block_proofs_ok(blk) {
            return false;
        }
        let designated: Vec<Identifier> = blk.search_proofs.iter().map(|p| p.result).collect();
        let signers =
            pov::count_valid_signers(&blk.h, blk.validator_sigs(), &designated, self.keys, None);
        signers >= self.params.t
    }

    /// Evidence against every holder keeping `ptr` past the interval.
    pub fn audit_pointer(
        &self,
        ptr: &TransactionPointer,
        holders: &[Identifier],
        reporter: &Identifier,
    ) -> Vec<MisbehaviorEvidence> {
        holders
            .iter()
            .filter(|h| self.pointer_stale(ptr, h))
            .map(|h| MisbehaviorEvidence {
                accused: *h,
                kind: MisbehaviorKind::StalePointer,
                subject: ptr.block_hash,
                payload: pointer_payload(ptr, h),
                reporter: *reporter,
            })
            .collect()
    }

    fn pointer_stale(&self, ptr: &TransactionPointer, holder: &Identifier) -> bool {
        match self.artifacts.pointer_status(ptr, holder) {
            Some(PointerStatus {
                live: true,
                superseded_at: Some(s),
                ..
            }) => self.artifacts.current_height() > s + self.params.block_interval,
            _ => false,
        }
    }

    fn decode_pointer(&self, payload: &[u8]) -> Result<(TransactionPointer, Identifier)> {
        let mut dec = Decoder::new(payload);
        let owner_name = dec.id(self.width)?;
        let block_hash = dec.id(self.width)?;
        let tx_hash = dec.id(self.width)?;
        let holder = dec.id(self.width)?;
        dec.finish()?;
        Ok((
            TransactionPointer {
                owner_name,
                block_hash,
                tx_hash,
            },
            holder,
        ))
    }
}

impl EvidenceVerifier for Auditor<'_> {
    fn verify(&self, ev: &MisbehaviorEvidence) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidEvidence(msg.to_string()));
        match ev.kind {
            MisbehaviorKind::StalePointer => {
                let (ptr, holder) = self.decode_pointer(&ev.payload)?;
                if holder != ev.accused || ptr.block_hash != ev.subject {
                    return bad("pointer payload does not name the accused");
                }
                if !self.pointer_stale(&ptr, &holder) {
                    return bad("pointer is not stale");
                }
                Ok(())
            }
            MisbehaviorKind::InvalidBlockDirectSubmit => {
                let Some(blk) = self.artifacts.submitted_block(&ev.subject) else {
                    return bad("submitted block unknown");
                };
                if blk.canonical_bytes() != ev.payload || blk.owner != ev.accused {
                    return bad("payload does not match the submitted block");
                }
                if self.submitted_block_valid(&blk) {
                    return bad("submitted block is valid");
                }
                Ok(())
            }
            MisbehaviorKind::UnsoundTxInCommittedBlock
            | MisbehaviorKind::IncorrectTxInCommittedBlock
            | MisbehaviorKind::ForgedProof
            | MisbehaviorKind::UnderSignedTxInCommittedBlock => {
                let store = self.artifacts.store();
                let Some(blk) = store.get(&ev.subject) else {
                    return bad("block unknown");
                };
                if !store.on_main_path(&blk.h) {
                    return bad("block is not committed");
                }
                if blk.canonical_bytes() != ev.payload {
                    return bad("payload does not match the committed block");
                }
                let found = self
                    .audit_committed_block(blk, &ev.reporter)
                    .into_iter()
                    .any(|e| e.kind == ev.kind && e.accused == ev.accused);
                if !found {
                    return bad("re-audit does not reproduce the accusation");
                }
                Ok(())
            }
        }
    }
}

/// Builds the (unvalidated) misbehavior report carrying `evidence`.
/// Validator search proofs are attached by the caller's PoV round.
pub fn misbehavior_contribution(
    reporter: &Identifier,
    evidence: &MisbehaviorEvidence,
) -> Contribution {
    Contribution {
        recipient: *reporter,
        amount: 0,
        evidence: Some(evidence.encode()),
    }
}

/// Verifies the evidence locally, then forms the report transaction.
pub fn file_misbehavior_tx(
    reporter: &KeyPair,
    evidence: &MisbehaviorEvidence,
    verifier: &dyn EvidenceVerifier,
    prev: Identifier,
    search_proofs: Vec<SearchProof>,
) -> Result<Transaction> {
    if evidence.reporter != reporter.id() {
        return Err(Error::InvalidEvidence("reporter mismatch".into()));
    }
    verifier.verify(evidence)?;
    Ok(Transaction::new(
        prev,
        reporter,
        misbehavior_contribution(&reporter.id(), evidence),
        search_proofs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> Width {
        Width::new(64).unwrap()
    }

    #[test]
    fn evidence_round_trip() {
        let ev = MisbehaviorEvidence {
            accused: Identifier::from_u64(3, w()),
            kind: MisbehaviorKind::StalePointer,
            subject: Identifier::from_u64(4, w()),
            payload: vec![1, 2, 3],
            reporter: Identifier::from_u64(5, w()),
        };
        assert_eq!(MisbehaviorEvidence::decode(&ev.encode(), w()).unwrap(), ev);
        assert!(MisbehaviorEvidence::decode(&ev.encode()[1..], w()).is_err());
        for k in 1..=6 {
            assert_eq!(MisbehaviorKind::from_code(k).unwrap().code(), k);
        }
    }

    #[test]
    fn blacklist_is_append_only() {
        let mut b = Blacklist::new();
        let p = Identifier::from_u64(9, w());
        assert!(!is_blacklisted(&b, &p));
        assert!(b.insert(p, 4));
        assert!(!b.insert(p, 7));
        assert_eq!(b.height_of(&p), Some(4));
        assert!(is_blacklisted(&b, &p));
    }
}
