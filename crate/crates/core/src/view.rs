// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Per-peer view tables and randomized bootstrapping.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ident::{CanonicalEncoder, Identifier, Width};
use crate::incentive::MisbehaviorEvidence;
use crate::ledger::{Block, LedgerStore};
use crate::pov::PovParams;
use crate::skipgraph::{NodeKind, Overlay, Phase};

/// Balance every peer starts with.
pub const DEFAULT_ENDOWMENT: i64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ViewEntry {
    pub num_id: Identifier,
    /// Last block holding a transaction of this peer.
    pub lastblk: Identifier,
    /// Net remittance received minus sent.
    pub state: i64,
    pub balance: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewTable {
    entries: BTreeMap<Identifier, ViewEntry>,
    tail: Identifier,
}

/// Side effects of one applied block that the caller acts on.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AppliedBlock {
    /// Peers named by committed misbehavior reports, with their reporters.
    pub convictions: Vec<(Identifier, Identifier)>,
    /// Total newly minted balance.
    pub minted: i64,
}

impl ViewTable {
    pub fn empty(tail: Identifier) -> Self {
        ViewTable {
            entries: BTreeMap::new(),
            tail,
        }
    }

    /// Genesis view: every listed peer holds `endowment`.
    pub fn genesis(
        peers: impl IntoIterator<Item = Identifier>,
        endowment: i64,
        genesis: Identifier,
    ) -> Self {
        let mut v = ViewTable::empty(genesis);
        for p in peers {
            v.entries.insert(
                p,
                ViewEntry {
                    num_id: p,
                    lastblk: genesis,
                    state: 0,
                    balance: endowment,
                },
            );
        }
        v
    }

    pub fn tail(&self) -> Identifier {
        self.tail
    }

    pub fn get(&self, id: &Identifier) -> Option<&ViewEntry> {
        self.entries.get(id)
    }

    pub fn balance(&self, id: &Identifier) -> i64 {
        self.entries.get(id).map(|e| e.balance).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ViewEntry> {
        self.entries.values()
    }

    pub fn total_balance(&self) -> i64 {
        self.entries.values().map(|e| e.balance).sum()
    }

    /// Adds an entry, or replaces the one with the same numID.
    pub fn upsert(&mut self, entry: ViewEntry) {
        self.entries.insert(entry.num_id, entry);
    }

    fn entry_mut(
        entries: &mut BTreeMap<Identifier, ViewEntry>,
        id: Identifier,
        genesis_like: Identifier,
    ) -> &mut ViewEntry {
        entries.entry(id).or_insert(ViewEntry {
            num_id: id,
            lastblk: genesis_like,
            state: 0,
            balance: 0,
        })
    }

    /// Applies the remittances, fees, rewards and penalties of `blk`.
    /// The table is left untouched on error.
    pub fn apply_block(&mut self, blk: &Block, params: &PovParams) -> Result<AppliedBlock> {
        if blk.prev != self.tail {
            return Err(Error::InconsistentView {
                expected: self.tail,
                got: blk.prev,
            });
        }
        let width = blk.h.width();
        let zero = Identifier::zero(width);
        let mut scratch = self.entries.clone();
        let mut out = AppliedBlock::default();
        let debit = |scratch: &mut BTreeMap<Identifier, ViewEntry>,
                     id: Identifier,
                     amount: i64,
                     allow_debt: bool|
         -> Result<()> {
            let e = Self::entry_mut(scratch, id, zero);
            if !allow_debt && e.balance < amount {
                return Err(Error::InvalidBlock(format!(
                    "debit of {amount} from {id} exceeds balance {}",
                    e.balance
                )));
            }
            e.balance -= amount;
            Ok(())
        };
        let credit =
            |scratch: &mut BTreeMap<Identifier, ViewEntry>, id: Identifier, amount: i64| {
                Self::entry_mut(scratch, id, zero).balance += amount;
            };
        for tx in &blk.txs {
            let mut fee_payees: Vec<Identifier> = Vec::new();
            let mut seen = HashSet::new();
            for s in tx.validator_sigs() {
                if fee_payees.len() == params.t {
                    break;
                }
                if seen.insert(s.signer_id) {
                    fee_payees.push(s.signer_id);
                }
            }
            let routers: Vec<Identifier> = tx
                .search_proofs
                .iter()
                .flat_map(|p| p.routing_peers().copied())
                .collect();
            let amount = tx.cont.amount as i64;
            let fees = params.validation_fee as i64 * fee_payees.len() as i64
                + params.routing_fee as i64 * routers.len() as i64;
            debit(&mut scratch, tx.owner, amount + fees, false)?;
            credit(&mut scratch, tx.cont.recipient, amount);
            {
                let o = Self::entry_mut(&mut scratch, tx.owner, zero);
                o.state -= amount;
                o.lastblk = blk.h;
            }
            Self::entry_mut(&mut scratch, tx.cont.recipient, zero).state += amount;
            for v in fee_payees {
                credit(&mut scratch, v, params.validation_fee as i64);
            }
            for r in routers {
                credit(&mut scratch, r, params.routing_fee as i64);
            }
            if let Some(bytes) = &tx.cont.evidence {
                let ev = MisbehaviorEvidence::decode(bytes, width)
                    .map_err(|e| Error::InvalidBlock(format!("undecodable evidence: {e}")))?;
                let penalty = params.misbehavior_penalty as i64;
                let reward = params.audition_reward as i64;
                debit(&mut scratch, ev.accused, penalty, true)?;
                credit(&mut scratch, tx.owner, reward);
                credit(&mut scratch, blk.owner, penalty - reward);
                out.convictions.push((ev.accused, tx.owner));
            }
        }
        if !blk.is_genesis() {
            credit(&mut scratch, blk.owner, params.block_reward as i64);
            out.minted = params.block_reward as i64;
        }
        self.entries = scratch;
        self.tail = blk.h;
        Ok(out)
    }

    /// Text export: a `tail` line, then `numID lastblk state balance` per entry.
    pub fn export(&self) -> String {
        let mut out = format!("tail {}\n", self.tail.to_hex());
        for e in self.entries.values() {
            out.push_str(&format!(
                "{} {} {} {}\n",
                e.num_id.to_hex(),
                e.lastblk.to_hex(),
                e.state,
                e.balance
            ));
        }
        out
    }
}

/// Digest over the entries in numID order followed by the tail hash.
pub fn view_digest(view: &ViewTable) -> Identifier {
    let mut enc = CanonicalEncoder::with_capacity(view.entries.len() * 48 + 16);
    for e in view.entries.values() {
        enc.id(&e.num_id).id(&e.lastblk).i64(e.state).i64(e.balance);
    }
    enc.id(&view.tail);
    enc.hash(view.tail.width())
}

/// Replays the main path of `store` from a genesis view up to `upto`.
pub fn replay(
    store: &LedgerStore,
    genesis_view: &ViewTable,
    upto: &Identifier,
    params: &PovParams,
) -> Result<ViewTable> {
    let limit = store
        .block_height(upto)
        .filter(|_| store.on_main_path(upto))
        .ok_or_else(|| Error::InvalidReference(format!("{upto} is not on the main path")))?;
    let mut v = genesis_view.clone();
    for height in 1..=limit {
        let h = store.main_at(height).expect("height within main path");
        let blk = store.get(&h).expect("main path blocks are stored");
        v.apply_block(blk, params)?;
    }
    Ok(v)
}

pub fn view_introducer_id(new_peer: &Identifier, i: u32) -> Result<Identifier> {
    if i == 0 {
        return Err(Error::InvalidParameter(
            "introducer index starts at 1".into(),
        ));
    }
    let mut enc = CanonicalEncoder::new();
    enc.id(new_peer).u32(i);
    Ok(enc.hash(new_peer.width()))
}

/// A view as served by an introducer.
#[derive(Clone, Debug)]
pub struct ServedView {
    pub tail: Identifier,
    pub digest: Identifier,
    pub table: Arc<ViewTable>,
}

/// Answers view requests on behalf of introducers.
pub trait ViewSource {
    /// `None` when the introducer does not answer.
    fn serve(&self, introducer: &Identifier) -> Option<ServedView>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BootstrapOutcome {
    pub view: Arc<ViewTable>,
    pub introducers_tried: usize,
    /// Peers whose views were counted toward the adopted one.
    pub agreeing: Vec<Identifier>,
}

/// Iterates introducers `i = 1..=cap` until `t` of them serve byte-equal
/// (tail, digest) pairs and adopts that view.
pub fn bootstrap(
    overlay: &Overlay,
    new_peer: &Identifier,
    params: &PovParams,
    source: &dyn ViewSource,
    cap: usize,
) -> Result<BootstrapOutcome> {
    let prior = overlay.phase();
    overlay.set_phase(Phase::Bootstrap);
    let result = bootstrap_inner(overlay, new_peer, params, source, cap);
    overlay.set_phase(prior);
    result
}

fn bootstrap_inner(
    overlay: &Overlay,
    new_peer: &Identifier,
    params: &PovParams,
    source: &dyn ViewSource,
    cap: usize,
) -> Result<BootstrapOutcome> {
    let mut asked: HashSet<Identifier> = HashSet::new();
    let mut groups: HashMap<(Identifier, Identifier), Vec<Identifier>> = HashMap::new();
    let mut verified: HashMap<*const ViewTable, Identifier> = HashMap::new();
    for i in 1..=cap {
        let target = view_introducer_id(new_peer, i as u32)?;
        let (node, _proof) = overlay.search_num_id(new_peer, &target, Some(NodeKind::Peer))?;
        let peer = node.num_id;
        if peer == *new_peer || !asked.insert(peer) {
            continue;
        }
        let Some(served) = source.serve(&peer) else {
            continue;
        };
        let digest = *verified
            .entry(Arc::as_ptr(&served.table))
            .or_insert_with(|| view_digest(&served.table));
        if digest != served.digest || served.table.tail() != served.tail {
            continue;
        }
        let group = groups.entry((served.tail, served.digest)).or_default();
        group.push(peer);
        if group.len() >= params.t {
            return Ok(BootstrapOutcome {
                view: served.table,
                introducers_tried: i,
                agreeing: group.clone(),
            });
        }
    }
    Err(Error::BootstrapUnavailable {
        needed: params.t,
        tried: cap,
    })
}

/// Default introducer iteration cap.
pub fn default_bootstrap_cap(params: &PovParams) -> usize {
    4 * params.alpha
}

/// Identifier width of a view, from its tail.
pub fn view_width(view: &ViewTable) -> Width {
    view.tail.width()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> Width {
        Width::new(64).unwrap()
    }

    #[test]
    fn fixture_digests() {
        let one = Identifier::from_u64(1, w());
        assert_eq!(
            view_introducer_id(&one, 1).unwrap().to_hex(),
            "bf63bd89f0737921"
        );
        assert_ne!(
            view_introducer_id(&one, 1).unwrap(),
            view_introducer_id(&one, 2).unwrap()
        );
        assert!(view_introducer_id(&one, 0).is_err());
        let empty = ViewTable::empty(Identifier::zero(w()));
        assert_eq!(view_digest(&empty).to_hex(), "59b047bb41d97652");
    }

    #[test]
    fn digest_tracks_balances() {
        let g = Identifier::from_u64(77, w());
        let peers = [Identifier::from_u64(1, w()), Identifier::from_u64(2, w())];
        let a = ViewTable::genesis(peers, 10, g);
        let mut b = a.clone();
        assert_eq!(view_digest(&a), view_digest(&b));
        let mut e = *b.get(&peers[0]).unwrap();
        e.balance += 1;
        b.upsert(e);
        assert_ne!(view_digest(&a), view_digest(&b));
    }
}
