// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Replication of transactions and blocks on their owner and PoV
//! validators, the transaction-pointer lifecycle, and retrieval.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ident::Identifier;
use crate::incentive::PointerStatus;
use crate::ledger::{Block, LedgerStore, Transaction, TransactionPointer};
use crate::skipgraph::{NodeKind, Overlay, OverlayNode, Phase};

/// Holders of one replicated subject.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplicaSet {
    pub subject_hash: Identifier,
    pub holders: Vec<Identifier>,
}

impl ReplicaSet {
    /// Owner first, then up to `t` distinct signers other than the owner.
    pub fn from_signers(
        subject_hash: Identifier,
        owner: Identifier,
        signers: impl IntoIterator<Item = Identifier>,
        t: usize,
    ) -> Self {
        let mut holders = vec![owner];
        for s in signers {
            if holders.len() > t {
                break;
            }
            if !holders.contains(&s) {
                holders.push(s);
            }
        }
        ReplicaSet {
            subject_hash,
            holders,
        }
    }
}

/// Holders for a transaction: its owner plus the first `t` distinct
/// validator signers.
pub fn tx_holders(tx: &Transaction, t: usize) -> ReplicaSet {
    ReplicaSet::from_signers(
        tx.h,
        tx.owner,
        signer_prefix(tx.validator_sigs().iter().map(|s| s.signer_id), t),
        t,
    )
}

pub fn block_holders(blk: &Block, t: usize) -> ReplicaSet {
    ReplicaSet::from_signers(
        blk.h,
        blk.owner,
        signer_prefix(blk.validator_sigs().iter().map(|s| s.signer_id), t),
        t,
    )
}

fn signer_prefix(ids: impl Iterator<Item = Identifier>, t: usize) -> Vec<Identifier> {
    let mut out: Vec<Identifier> = Vec::with_capacity(t);
    for id in ids {
        if out.len() == t {
            break;
        }
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

/// One overlay node per holder, `numID = subject hash`, `nameID = prev`.
/// A holder that already stores the subject is skipped.
pub fn replicate(
    overlay: &mut Overlay,
    kind: NodeKind,
    subject_hash: &Identifier,
    prev: &Identifier,
    holders: &[Identifier],
) -> Result<usize> {
    let mut added = 0;
    for h in holders {
        if overlay.has_replica(kind, subject_hash, h) {
            continue;
        }
        overlay.join(OverlayNode::hosted(kind, *subject_hash, *prev, *h))?;
        added += 1;
    }
    overlay.messages().charge(Phase::Replication, added as u64);
    Ok(added)
}

/// Locates an online replica of (`kind`, `h`).
pub fn retrieve(
    overlay: &Overlay,
    querier: &Identifier,
    kind: NodeKind,
    h: &Identifier,
) -> Result<OverlayNode> {
    let replicas = overlay.replicas(kind, h);
    if replicas.is_empty() {
        return Err(Error::NotFound(format!("{kind} {h}")));
    }
    let prior = overlay.phase();
    overlay.set_phase(Phase::Retrieval);
    let found = overlay.search_num_id(querier, h, Some(kind));
    overlay.set_phase(prior);
    match found {
        Ok((node, _)) if node.num_id == *h && node.online => Ok(node),
        Ok(_) | Err(Error::OverlayEmpty) => Err(Error::Unavailable(*h)),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
struct PointerRecord {
    pointer: TransactionPointer,
    created_at: u64,
    superseded_at: Option<u64>,
    /// Holders still exposing the pointer.
    live: BTreeSet<Identifier>,
    /// Holders already flagged as stale.
    flagged: BTreeSet<Identifier>,
}

/// Outcome of one registry update.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RetireReport {
    pub retired: Vec<(TransactionPointer, Identifier)>,
    /// Holders newly found keeping a pointer past the grace interval.
    pub flagged: Vec<(TransactionPointer, Identifier)>,
}

/// Pointers per owner, oldest first.
#[derive(Clone, Debug, Default)]
pub struct PointerRegistry {
    by_owner: BTreeMap<Identifier, Vec<PointerRecord>>,
}

impl PointerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs one pointer per member transaction of `blk`, replicated on
    /// `holders`, and marks older pointers of the same owners superseded.
    pub fn install_pointers(
        &mut self,
        overlay: &mut Overlay,
        blk: &Block,
        height: u64,
        holders: &[Identifier],
    ) -> Result<usize> {
        let mut added = 0;
        for tx in &blk.txs {
            let pointer = TransactionPointer {
                owner_name: tx.owner,
                block_hash: blk.h,
                tx_hash: tx.h,
            };
            let mut live = BTreeSet::new();
            for h in holders {
                if !overlay.has_node(NodeKind::Pointer, &blk.h, &tx.owner, h) {
                    overlay.join(OverlayNode::hosted(NodeKind::Pointer, blk.h, tx.owner, *h))?;
                    added += 1;
                }
                live.insert(*h);
            }
            let records = self.by_owner.entry(tx.owner).or_default();
            for r in records.iter_mut().filter(|r| r.superseded_at.is_none()) {
                r.superseded_at = Some(height);
            }
            records.push(PointerRecord {
                pointer,
                created_at: height,
                superseded_at: None,
                live,
                flagged: BTreeSet::new(),
            });
        }
        overlay.messages().charge(Phase::Replication, added as u64);
        Ok(added)
    }

    /// Retires superseded pointers older than the grace interval. Holders for
    /// which `keeps_stale` is true skip retirement and are flagged once the
    /// interval past supersession has elapsed.
    pub fn retire_pointers(
        &mut self,
        overlay: &mut Overlay,
        current_height: u64,
        block_interval: u64,
        keeps_stale: &dyn Fn(&Identifier) -> bool,
    ) -> RetireReport {
        let mut report = RetireReport::default();
        for records in self.by_owner.values_mut() {
            for r in records.iter_mut() {
                let Some(superseded) = r.superseded_at else {
                    continue;
                };
                if r.live.is_empty() {
                    continue;
                }
                let due = current_height.saturating_sub(r.created_at) > block_interval;
                let holders: Vec<Identifier> = r.live.iter().copied().collect();
                for h in holders {
                    if keeps_stale(&h) {
                        if current_height > superseded + block_interval && r.flagged.insert(h) {
                            report.flagged.push((r.pointer, h));
                        }
                        continue;
                    }
                    if due {
                        let _ = leave_pointer(overlay, &r.pointer, &h);
                        r.live.remove(&h);
                        report.retired.push((r.pointer, h));
                    }
                }
            }
            records.retain(|r| !r.live.is_empty() || r.superseded_at.is_none());
        }
        report
    }

    /// Removes a pointer replica after a holder was convicted or left.
    pub fn drop_holder(
        &mut self,
        overlay: &mut Overlay,
        ptr: &TransactionPointer,
        holder: &Identifier,
    ) {
        if let Some(rs) = self.by_owner.get_mut(&ptr.owner_name) {
            for r in rs.iter_mut().filter(|r| r.pointer == *ptr) {
                if r.live.remove(holder) {
                    let _ = leave_pointer(overlay, ptr, holder);
                }
            }
        }
    }

    pub fn status(&self, ptr: &TransactionPointer, holder: &Identifier) -> Option<PointerStatus> {
        let rs = self.by_owner.get(&ptr.owner_name)?;
        let r = rs.iter().find(|r| r.pointer == *ptr)?;
        Some(PointerStatus {
            live: r.live.contains(holder),
            created_at: r.created_at,
            superseded_at: r.superseded_at,
        })
    }

    /// Live pointers of `owner` with their live holders, oldest first.
    pub fn live_pointers(&self, owner: &Identifier) -> Vec<(TransactionPointer, Vec<Identifier>)> {
        self.by_owner
            .get(owner)
            .map(|rs| {
                rs.iter()
                    .filter(|r| !r.live.is_empty())
                    .map(|r| (r.pointer, r.live.iter().copied().collect()))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Superseded pointers still exposed by at least one holder.
    pub fn superseded_live(&self) -> Vec<(TransactionPointer, Vec<Identifier>, u64)> {
        let mut out = Vec::new();
        for rs in self.by_owner.values() {
            for r in rs {
                if let Some(s) = r.superseded_at {
                    if !r.live.is_empty() {
                        out.push((r.pointer, r.live.iter().copied().collect(), s));
                    }
                }
            }
        }
        out
    }

    pub fn owners(&self) -> impl Iterator<Item = &Identifier> {
        self.by_owner.keys()
    }
}

fn leave_pointer(
    overlay: &mut Overlay,
    ptr: &TransactionPointer,
    holder: &Identifier,
) -> Result<()> {
    // Pointers of several owners share one numID (the block hash).
    overlay.leave_node(NodeKind::Pointer, &ptr.block_hash, &ptr.owner_name, holder)
}

/// Latest committed state of `owner` via its pointers: a name search over
/// pointer nodes, then a numerical search for each named block.
pub fn fast_retrieve_state(
    overlay: &Overlay,
    store: &LedgerStore,
    querier: &Identifier,
    owner: &Identifier,
) -> Result<(Identifier, Arc<Transaction>)> {
    let prior = overlay.phase();
    overlay.set_phase(Phase::Retrieval);
    let result = (|| {
        let hits = overlay.search_name_id(querier, owner, Some(NodeKind::Pointer))?;
        if hits.is_empty() {
            return Err(Error::NotFound(format!("pointer for {owner}")));
        }
        let mut blocks: Vec<Identifier> = hits.iter().map(|(n, _)| n.num_id).collect();
        blocks.sort();
        blocks.dedup();
        let mut best: Option<(u64, Identifier, Arc<Transaction>)> = None;
        let mut unavailable = None;
        for b in blocks {
            let (node, _) = match overlay.search_num_id(querier, &b, Some(NodeKind::Block)) {
                Ok(r) => r,
                Err(Error::OverlayEmpty) => {
                    unavailable = Some(b);
                    continue;
                }
                Err(e) => return Err(e),
            };
            if node.num_id != b {
                unavailable = Some(b);
                continue;
            }
            let Some(blk) = store.get(&b) else {
                continue;
            };
            let Some(height) = store.block_height(&b) else {
                continue;
            };
            let Some(tx) = blk.txs.iter().find(|t| t.owner == *owner) else {
                continue;
            };
            if best.as_ref().map(|(h, _, _)| height > *h).unwrap_or(true) {
                best = Some((height, b, tx.clone()));
            }
        }
        match (best, unavailable) {
            (Some((_, b, tx)), _) => Ok((b, tx)),
            (None, Some(b)) => Err(Error::Unavailable(b)),
            (None, None) => Err(Error::NotFound(format!("committed transaction of {owner}"))),
        }
    })();
    overlay.set_phase(prior);
    result
}
