// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Skip Graph overlay holding peers, transactions, blocks and transaction
//! pointers.
//!
//! Each node kind lives in its own sub-graph, so that validator lookups land
//! on peers and block lookups land on blocks. Nodes are ordered by numID at
//! every level; the level-`l` list of a node holds every node of the same
//! kind whose membership vector agrees with it on the low `l` bits. The
//! membership vector of a node is the low 32 bits of its nameID.
//!
//! Routing is simulated hop by hop. Every forwarded hop costs one message and
//! adds one signed entry to the search proof. A node is reachable only while
//! it and its host peer are online; offline nodes are stepped over, which
//! models an ideal churn-repair layer.

use std::cell::Cell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Bound;

use crate::error::{Error, Result};
use crate::ident::{
    CanonicalEncoder, Identifier, KeyDirectory, KeyPair, Keyring, Signature, VerifyKey, Width,
};

/// Number of levels materialised per sub-graph.
pub const LEVELS: usize = 20;

/// Routing constant `c` in the `c * log2(n)` hop bound.
pub const ROUTING_CONSTANT: f64 = 2.0;

/// Upper bound on the hop count of one search in an overlay of `n` nodes.
pub fn hop_bound(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    (ROUTING_CONSTANT * (n as f64).log2()).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Peer,
    Transaction,
    Block,
    Pointer,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [
        NodeKind::Peer,
        NodeKind::Transaction,
        NodeKind::Block,
        NodeKind::Pointer,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Peer => "peer",
            NodeKind::Transaction => "transaction",
            NodeKind::Block => "block",
            NodeKind::Pointer => "pointer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "peer" => NodeKind::Peer,
            "transaction" => NodeKind::Transaction,
            "block" => NodeKind::Block,
            "pointer" => NodeKind::Pointer,
            other => return Err(Error::Decode(format!("unknown node kind {other:?}"))),
        })
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OverlayNode {
    pub num_id: Identifier,
    pub name_id: Identifier,
    pub kind: NodeKind,
    /// The peer answering for this node. Equal to `num_id` for peers.
    pub host: Identifier,
    pub online: bool,
}

impl OverlayNode {
    pub fn peer(id: Identifier, online: bool) -> Self {
        OverlayNode {
            num_id: id,
            name_id: id,
            kind: NodeKind::Peer,
            host: id,
            online,
        }
    }

    pub fn hosted(
        kind: NodeKind,
        num_id: Identifier,
        name_id: Identifier,
        host: Identifier,
    ) -> Self {
        OverlayNode {
            num_id,
            name_id,
            kind,
            host,
            online: true,
        }
    }
}

/// One forwarding step of a search.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProofHop {
    /// numID of the overlay node reached at this step.
    pub node: Identifier,
    /// The peer that answered for `node` and signed this hop.
    pub signer: Identifier,
    /// numID of the previous hop; the origin names itself.
    pub prev: Identifier,
    pub sig: Signature,
}

/// Signed hop chain attesting a routed lookup.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SearchProof {
    pub target: Identifier,
    pub hops: Vec<ProofHop>,
    pub result: Identifier,
}

/// Bytes signed by the peer answering for `node`.
pub fn hop_message(target: &Identifier, prev: &Identifier, node: &Identifier) -> Vec<u8> {
    let mut enc = CanonicalEncoder::with_capacity(3 * (4 + target.as_bytes().len()));
    enc.id(target).id(prev).id(node);
    enc.finish()
}

impl SearchProof {
    /// Number of forwarded messages, i.e. hops excluding the origin.
    pub fn hop_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    /// Peers that forwarded or answered the lookup, excluding the origin.
    pub fn routing_peers(&self) -> impl Iterator<Item = &Identifier> {
        self.hops.iter().skip(1).map(|h| &h.signer)
    }

    pub fn encode_into(&self, enc: &mut CanonicalEncoder) {
        enc.id(&self.target)
            .id(&self.result)
            .u32(self.hops.len() as u32);
        for hop in &self.hops {
            enc.id(&hop.node)
                .id(&hop.signer)
                .id(&hop.prev)
                .field(&hop.sig.bytes);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = CanonicalEncoder::new();
        self.encode_into(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8], width: Width) -> Result<Self> {
        let mut dec = Decoder::new(bytes);
        let proof = Self::decode(&mut dec, width)?;
        dec.finish()?;
        Ok(proof)
    }

    pub fn decode(dec: &mut Decoder<'_>, width: Width) -> Result<Self> {
        let target = dec.id(width)?;
        let result = dec.id(width)?;
        let n = dec.u32()? as usize;
        if n > dec.remaining() {
            return Err(Error::Decode("hop count exceeds payload".into()));
        }
        let mut hops = Vec::with_capacity(n);
        for _ in 0..n {
            let node = dec.id(width)?;
            let signer = dec.id(width)?;
            let prev = dec.id(width)?;
            let bytes = dec.field()?.to_vec();
            hops.push(ProofHop {
                node,
                signer,
                prev,
                sig: Signature {
                    bytes,
                    signer_id: signer,
                },
            });
        }
        Ok(SearchProof {
            target,
            hops,
            result,
        })
    }
}

/// Reader for the length-prefixed canonical encoding.
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn field(&mut self) -> Result<&'a [u8]> {
        if self.remaining() < 4 {
            return Err(Error::Decode("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(
            self.buf[self.pos..self.pos + 4]
                .try_into()
                .expect("4 bytes"),
        ) as usize;
        self.pos += 4;
        if self.remaining() < len {
            return Err(Error::Decode("truncated field".into()));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub fn id(&mut self, width: Width) -> Result<Identifier> {
        let bytes = self.field()?;
        Identifier::from_be_bytes(bytes, width).map_err(|e| Error::Decode(e.to_string()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let bytes = self.field()?;
        let arr: [u8; 4] = bytes
            .try_into()
            .map_err(|_| Error::Decode("expected 4-byte integer".into()))?;
        Ok(u32::from_be_bytes(arr))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let bytes = self.field()?;
        let arr: [u8; 8] = bytes
            .try_into()
            .map_err(|_| Error::Decode("expected 8-byte integer".into()))?;
        Ok(u64::from_be_bytes(arr))
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Decode(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

/// Checks hop signatures, hop chaining and the result designation.
pub fn verify_search_proof(proof: &SearchProof, keys: &dyn KeyDirectory) -> bool {
    let Some(last) = proof.hops.last() else {
        return false;
    };
    if last.node != proof.result {
        return false;
    }
    let mut prev = proof.hops[0].node;
    for hop in &proof.hops {
        if hop.prev != prev || hop.sig.signer_id != hop.signer {
            return false;
        }
        let msg = hop_message(&proof.target, &hop.prev, &hop.node);
        if !keys.verify_signature(&msg, &hop.sig) {
            return false;
        }
        prev = hop.node;
    }
    true
}

/// Protocol phase a message is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Join,
    Leave,
    Search,
    NameSearch,
    Validation,
    Replication,
    Bootstrap,
    Retrieval,
    Audit,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::Join,
        Phase::Leave,
        Phase::Search,
        Phase::NameSearch,
        Phase::Validation,
        Phase::Replication,
        Phase::Bootstrap,
        Phase::Retrieval,
        Phase::Audit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Join => "join",
            Phase::Leave => "leave",
            Phase::Search => "search",
            Phase::NameSearch => "name_search",
            Phase::Validation => "validation",
            Phase::Replication => "replication",
            Phase::Bootstrap => "bootstrap",
            Phase::Retrieval => "retrieval",
            Phase::Audit => "audit",
        }
    }
}

/// Per-phase message counters. Counters only ever grow.
#[derive(Debug, Default)]
pub struct MessageLedger {
    counts: [Cell<u64>; 9],
}

impl MessageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&self, phase: Phase, n: u64) {
        let c = &self.counts[phase as usize];
        c.set(c.get() + n);
    }

    pub fn get(&self, phase: Phase) -> u64 {
        self.counts[phase as usize].get()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(Cell::get).sum()
    }

    pub fn snapshot(&self) -> Vec<(Phase, u64)> {
        Phase::ALL.iter().map(|p| (*p, self.get(*p))).collect()
    }
}

impl Clone for MessageLedger {
    fn clone(&self) -> Self {
        let out = MessageLedger::default();
        for (dst, src) in out.counts.iter().zip(self.counts.iter()) {
            dst.set(src.get());
        }
        out
    }
}

/// Cost of one Skip Graph join into a graph of `n` nodes.
pub fn join_cost(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    let l = (n as f64).log2().ceil() as u64;
    l * l
}

type Entry = (u32, Identifier, u32);

#[derive(Clone, Debug)]
struct Slot {
    node: OverlayNode,
    host_slot: u32,
    alive: bool,
}

#[derive(Clone, Debug)]
struct Graph {
    levels: Vec<BTreeSet<Entry>>,
    live: usize,
}

impl Graph {
    fn new() -> Self {
        Graph {
            levels: (0..LEVELS).map(|_| BTreeSet::new()).collect(),
            live: 0,
        }
    }
}

fn prefix(mv: u32, level: usize) -> u32 {
    if level == 0 {
        0
    } else {
        mv & ((1u32 << level) - 1)
    }
}

/// The overlay. Single writer; searches take `&self` and charge messages
/// through interior counters.
#[derive(Clone, Debug)]
pub struct Overlay {
    width: Width,
    slots: Vec<Slot>,
    graphs: [Graph; 4],
    index: HashMap<(NodeKind, Identifier), Vec<u32>>,
    peers: HashMap<Identifier, u32>,
    keys: Keyring,
    messages: MessageLedger,
    phase: Cell<Phase>,
}

impl KeyDirectory for Overlay {
    fn verify_key(&self, id: &Identifier) -> Option<&VerifyKey> {
        self.keys.verify_key(id)
    }
}

impl Overlay {
    pub fn new(width: Width) -> Self {
        Overlay {
            width,
            slots: Vec::new(),
            graphs: [Graph::new(), Graph::new(), Graph::new(), Graph::new()],
            index: HashMap::new(),
            peers: HashMap::new(),
            keys: Keyring::new(),
            messages: MessageLedger::new(),
            phase: Cell::new(Phase::Search),
        }
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn keys(&self) -> &Keyring {
        &self.keys
    }

    pub fn messages(&self) -> &MessageLedger {
        &self.messages
    }

    /// Sets the phase subsequent searches are charged to.
    pub fn set_phase(&self, phase: Phase) {
        self.phase.set(phase);
    }

    pub fn phase(&self) -> Phase {
        self.phase.get()
    }

    /// Registers a peer key so the overlay can sign hops on its behalf.
    pub fn register_key(&mut self, key: KeyPair) -> Identifier {
        self.keys.insert(key)
    }

    /// Registers `key` and joins the matching peer node.
    pub fn join_peer(&mut self, key: KeyPair, online: bool) -> Result<Identifier> {
        let id = self.register_key(key);
        self.join(OverlayNode::peer(id, online))?;
        Ok(id)
    }

    /// Number of live nodes of `kind`.
    pub fn len(&self, kind: NodeKind) -> usize {
        self.graphs[kind.index()].live
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.iter().all(|g| g.live == 0)
    }

    pub fn join(&mut self, node: OverlayNode) -> Result<()> {
        if node.num_id.width() != self.width
            || node.name_id.width() != self.width
            || node.host.width() != self.width
        {
            return Err(Error::InvalidParameter("identifier width mismatch".into()));
        }
        let key = (node.kind, node.num_id);
        if let Some(existing) = self.index.get(&key) {
            let dup = existing.iter().any(|s| {
                let n = &self.slots[*s as usize].node;
                n.host == node.host && n.name_id == node.name_id
            });
            if dup {
                return Err(Error::DuplicateNode(format!(
                    "{} {} hosted by {}",
                    node.kind, node.num_id, node.host
                )));
            }
        }
        let slot = self.slots.len() as u32;
        let host_slot = match node.kind {
            NodeKind::Peer => {
                if node.host != node.num_id {
                    return Err(Error::InvalidParameter("a peer hosts itself".into()));
                }
                if self.keys.get(&node.num_id).is_none() {
                    return Err(Error::NotFound(format!(
                        "no key registered for peer {}",
                        node.num_id
                    )));
                }
                slot
            }
            _ => *self
                .peers
                .get(&node.host)
                .ok_or_else(|| Error::NotFound(format!("host peer {}", node.host)))?,
        };
        self.slots.push(Slot {
            node,
            host_slot,
            alive: true,
        });
        if node.kind == NodeKind::Peer {
            self.peers.insert(node.num_id, slot);
        }
        self.index.entry(key).or_default().push(slot);
        let mv = node.name_id.low_u32();
        let g = &mut self.graphs[node.kind.index()];
        for (l, level) in g.levels.iter_mut().enumerate() {
            level.insert((prefix(mv, l), node.num_id, slot));
        }
        g.live += 1;
        self.messages.charge(Phase::Join, join_cost(g.live));
        Ok(())
    }

    /// Removes every node of `kind` with `num_id`; returns how many left.
    pub fn leave(&mut self, num_id: &Identifier, kind: NodeKind) -> Result<usize> {
        let slots = self
            .index
            .remove(&(kind, *num_id))
            .ok_or_else(|| Error::NotFound(format!("{kind} {num_id}")))?;
        let n = slots.len();
        for s in slots {
            self.remove_slot(s);
        }
        Ok(n)
    }

    /// Removes the single replica of (`kind`, `num_id`) hosted by `host`.
    pub fn leave_replica(
        &mut self,
        num_id: &Identifier,
        kind: NodeKind,
        host: &Identifier,
    ) -> Result<()> {
        let list = self
            .index
            .get_mut(&(kind, *num_id))
            .ok_or_else(|| Error::NotFound(format!("{kind} {num_id}")))?;
        let pos = list
            .iter()
            .position(|s| self.slots[*s as usize].node.host == *host)
            .ok_or_else(|| Error::NotFound(format!("{kind} {num_id} on {host}")))?;
        let s = list.swap_remove(pos);
        if list.is_empty() {
            self.index.remove(&(kind, *num_id));
        }
        self.remove_slot(s);
        Ok(())
    }

    /// Removes the node (`kind`, `num_id`, `name_id`) hosted by `host`.
    pub fn leave_node(
        &mut self,
        kind: NodeKind,
        num_id: &Identifier,
        name_id: &Identifier,
        host: &Identifier,
    ) -> Result<()> {
        let list = self
            .index
            .get_mut(&(kind, *num_id))
            .ok_or_else(|| Error::NotFound(format!("{kind} {num_id}")))?;
        let pos = list
            .iter()
            .position(|s| {
                let n = &self.slots[*s as usize].node;
                n.host == *host && n.name_id == *name_id
            })
            .ok_or_else(|| Error::NotFound(format!("{kind} {num_id} on {host}")))?;
        let s = list.swap_remove(pos);
        if list.is_empty() {
            self.index.remove(&(kind, *num_id));
        }
        self.remove_slot(s);
        Ok(())
    }

    /// True when `host` holds the node (`kind`, `num_id`, `name_id`).
    pub fn has_node(
        &self,
        kind: NodeKind,
        num_id: &Identifier,
        name_id: &Identifier,
        host: &Identifier,
    ) -> bool {
        self.index
            .get(&(kind, *num_id))
            .map(|v| {
                v.iter().any(|s| {
                    let n = &self.slots[*s as usize].node;
                    n.host == *host && n.name_id == *name_id
                })
            })
            .unwrap_or(false)
    }

    fn remove_slot(&mut self, s: u32) {
        let slot = &mut self.slots[s as usize];
        if !slot.alive {
            return;
        }
        slot.alive = false;
        let node = slot.node;
        if node.kind == NodeKind::Peer {
            self.peers.remove(&node.num_id);
        }
        let mv = node.name_id.low_u32();
        let g = &mut self.graphs[node.kind.index()];
        for (l, level) in g.levels.iter_mut().enumerate() {
            level.remove(&(prefix(mv, l), node.num_id, s));
        }
        g.live -= 1;
        let cost = (g.live.max(2) as f64).log2().ceil() as u64;
        self.messages.charge(Phase::Leave, cost);
    }

    /// Flips a peer's online flag. Nodes it hosts follow it.
    pub fn set_peer_online(&mut self, id: &Identifier, online: bool) -> Result<()> {
        let s = *self
            .peers
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("peer {id}")))?;
        self.slots[s as usize].node.online = online;
        Ok(())
    }

    pub fn is_peer_online(&self, id: &Identifier) -> bool {
        self.peers
            .get(id)
            .map(|s| self.slots[*s as usize].node.online)
            .unwrap_or(false)
    }

    pub fn contains_peer(&self, id: &Identifier) -> bool {
        self.peers.contains_key(id)
    }

    /// Live peer identifiers in ascending order.
    pub fn peer_ids(&self) -> Vec<Identifier> {
        self.graphs[NodeKind::Peer.index()].levels[0]
            .iter()
            .map(|(_, id, _)| *id)
            .collect()
    }

    pub fn online_peer_count(&self) -> usize {
        self.peers
            .values()
            .filter(|s| self.slots[**s as usize].node.online)
            .count()
    }

    /// All live replicas of (`kind`, `num_id`), with effective online status.
    pub fn replicas(&self, kind: NodeKind, num_id: &Identifier) -> Vec<OverlayNode> {
        self.index
            .get(&(kind, *num_id))
            .map(|v| v.iter().map(|s| self.effective(*s)).collect())
            .unwrap_or_default()
    }

    pub fn online_replica_count(&self, kind: NodeKind, num_id: &Identifier) -> usize {
        self.index
            .get(&(kind, *num_id))
            .map(|v| v.iter().filter(|s| self.is_online(**s)).count())
            .unwrap_or(0)
    }

    pub fn has_replica(&self, kind: NodeKind, num_id: &Identifier, host: &Identifier) -> bool {
        self.index
            .get(&(kind, *num_id))
            .map(|v| v.iter().any(|s| self.slots[*s as usize].node.host == *host))
            .unwrap_or(false)
    }

    fn effective(&self, s: u32) -> OverlayNode {
        let mut node = self.slots[s as usize].node;
        node.online = self.is_online(s);
        node
    }

    fn is_online(&self, s: u32) -> bool {
        let slot = &self.slots[s as usize];
        slot.alive && slot.node.online && self.slots[slot.host_slot as usize].node.online
    }

    fn num(&self, s: u32) -> Identifier {
        self.slots[s as usize].node.num_id
    }

    fn mv(&self, s: u32) -> u32 {
        self.slots[s as usize].node.name_id.low_u32()
    }

    fn next_online(&self, kind: NodeKind, level: usize, s: u32) -> Option<u32> {
        let p = prefix(self.mv(s), level);
        let lo = (p, self.num(s), s);
        let hi = (p + 1, Identifier::zero(self.width), 0);
        self.graphs[kind.index()].levels[level]
            .range((Bound::Excluded(lo), Bound::Excluded(hi)))
            .map(|e| e.2)
            .find(|x| self.is_online(*x))
    }

    fn prev_online(&self, kind: NodeKind, level: usize, s: u32) -> Option<u32> {
        let p = prefix(self.mv(s), level);
        let lo = (p, Identifier::zero(self.width), 0);
        let hi = (p, self.num(s), s);
        self.graphs[kind.index()].levels[level]
            .range((Bound::Included(lo), Bound::Excluded(hi)))
            .rev()
            .map(|e| e.2)
            .find(|x| self.is_online(*x))
    }

    /// Online nodes of the level list containing `s`, in ring order
    /// starting right after `s`.
    fn ring_after(&self, kind: NodeKind, level: usize, s: u32) -> impl Iterator<Item = u32> + '_ {
        let p = prefix(self.mv(s), level);
        let me = (p, self.num(s), s);
        let start = (p, Identifier::zero(self.width), 0);
        let end = (p + 1, Identifier::zero(self.width), 0);
        let set = &self.graphs[kind.index()].levels[level];
        set.range((Bound::Excluded(me), Bound::Excluded(end)))
            .chain(set.range((Bound::Included(start), Bound::Excluded(me))))
            .map(|e| e.2)
            .filter(move |x| self.is_online(*x))
    }

    /// Online node of `kind` with the largest numID `<= at`, or the largest
    /// overall when none precedes `at`.
    fn nearest_at_or_below(&self, kind: NodeKind, at: &Identifier) -> Option<u32> {
        let set = &self.graphs[kind.index()].levels[0];
        let hi = (0u32, *at, u32::MAX);
        set.range(..=hi)
            .rev()
            .map(|e| e.2)
            .find(|x| self.is_online(*x))
            .or_else(|| set.iter().rev().map(|e| e.2).find(|x| self.is_online(*x)))
    }

    fn origin_slot(&self, origin: &Identifier) -> Result<u32> {
        let s = *self
            .peers
            .get(origin)
            .ok_or_else(|| Error::NotFound(format!("origin peer {origin}")))?;
        if !self.is_online(s) {
            return Err(Error::InvalidParameter(format!(
                "origin peer {origin} is offline"
            )));
        }
        Ok(s)
    }

    /// Entry node of the `kind` sub-graph for a search started at `origin`.
    fn entry(&self, origin: u32, kind: NodeKind, path: &mut Vec<u32>) -> Option<u32> {
        if kind == NodeKind::Peer {
            return Some(origin);
        }
        let e = self.nearest_at_or_below(kind, &self.num(origin))?;
        path.push(e);
        Some(e)
    }

    fn route_num(
        &self,
        kind: NodeKind,
        start: u32,
        target: &Identifier,
        path: &mut Vec<u32>,
    ) -> u32 {
        let mut cur = start;
        for level in (0..LEVELS).rev() {
            if self.num(cur) <= *target {
                while let Some(nx) = self.next_online(kind, level, cur) {
                    if self.num(nx) > *target {
                        break;
                    }
                    cur = nx;
                    path.push(nx);
                }
            } else {
                while let Some(pv) = self.prev_online(kind, level, cur) {
                    cur = pv;
                    path.push(pv);
                    if self.num(pv) <= *target {
                        break;
                    }
                }
            }
        }
        if self.num(cur) > *target {
            // Nothing precedes the target: continue to the ring maximum.
            return self.route_num(kind, cur, &Identifier::max(self.width), path);
        }
        cur
    }

    fn build_proof(&self, target: &Identifier, path: &[u32]) -> Result<SearchProof> {
        let mut hops = Vec::with_capacity(path.len());
        let mut prev = self.num(path[0]);
        for s in path {
            let slot = &self.slots[*s as usize];
            let node = slot.node.num_id;
            let signer = slot.node.host;
            let key = self
                .keys
                .get(&signer)
                .ok_or_else(|| Error::NotFound(format!("key for {signer}")))?;
            let sig = key.sign(&hop_message(target, &prev, &node));
            hops.push(ProofHop {
                node,
                signer,
                prev,
                sig,
            });
            prev = node;
        }
        let result = hops.last().expect("path is never empty").node;
        Ok(SearchProof {
            target: *target,
            hops,
            result,
        })
    }

    fn search_num_in(
        &self,
        origin: u32,
        target: &Identifier,
        kind: NodeKind,
    ) -> Result<(u32, Vec<u32>)> {
        let mut path = vec![origin];
        let entry = self
            .entry(origin, kind, &mut path)
            .ok_or(Error::OverlayEmpty)?;
        let end = self.route_num(kind, entry, target, &mut path);
        Ok((end, path))
    }

    /// Numerical-ID search with ring fallback. `kind_filter = None` searches
    /// every sub-graph and applies the same rule to the union.
    pub fn search_num_id(
        &self,
        origin: &Identifier,
        target: &Identifier,
        kind_filter: Option<NodeKind>,
    ) -> Result<(OverlayNode, SearchProof)> {
        let o = self.origin_slot(origin)?;
        let kinds: &[NodeKind] = match &kind_filter {
            Some(k) => std::slice::from_ref(k),
            None => &NodeKind::ALL,
        };
        let mut best: Option<(u32, Vec<u32>)> = None;
        let mut charged = 0u64;
        for kind in kinds {
            let (end, path) = match self.search_num_in(o, target, *kind) {
                Ok(r) => r,
                Err(Error::OverlayEmpty) => continue,
                Err(e) => return Err(e),
            };
            charged += (path.len() - 1) as u64;
            let better = match &best {
                None => true,
                Some((b, _)) => ring_better(&self.num(end), &self.num(*b), target),
            };
            if better {
                best = Some((end, path));
            }
        }
        self.messages.charge(self.phase.get(), charged);
        let (end, path) = best.ok_or(Error::OverlayEmpty)?;
        let proof = self.build_proof(target, &path)?;
        Ok((self.effective(end), proof))
    }

    /// All online nodes whose nameID equals `target_name`.
    pub fn search_name_id(
        &self,
        origin: &Identifier,
        target_name: &Identifier,
        kind_filter: Option<NodeKind>,
    ) -> Result<Vec<(OverlayNode, SearchProof)>> {
        let o = self.origin_slot(origin)?;
        let kinds: &[NodeKind] = match &kind_filter {
            Some(k) => std::slice::from_ref(k),
            None => &NodeKind::ALL,
        };
        let mut out = Vec::new();
        for kind in kinds {
            self.search_name_in(o, target_name, *kind, &mut out)?;
        }
        Ok(out)
    }

    fn search_name_in(
        &self,
        origin: u32,
        target_name: &Identifier,
        kind: NodeKind,
        out: &mut Vec<(OverlayNode, SearchProof)>,
    ) -> Result<()> {
        let mut path = vec![origin];
        let Some(mut cur) = self.entry(origin, kind, &mut path) else {
            return Ok(());
        };
        let want_mv = target_name.low_u32();
        let mut walked = 0u64;
        for level in 0..LEVELS - 1 {
            let want = prefix(want_mv, level + 1);
            if prefix(self.mv(cur), level + 1) == want {
                continue;
            }
            let mut found = None;
            for nx in self.ring_after(kind, level, cur) {
                path.push(nx);
                if prefix(self.mv(nx), level + 1) == want {
                    found = Some(nx);
                    break;
                }
            }
            match found {
                Some(nx) => cur = nx,
                None => {
                    // A full circuit found no node with the wanted prefix.
                    self.messages
                        .charge(Phase::NameSearch, (path.len() - 1) as u64);
                    return Ok(());
                }
            }
        }
        let top = LEVELS - 1;
        let mut matches = Vec::new();
        if self.slots[cur as usize].node.name_id == *target_name {
            matches.push(cur);
        }
        for nx in self.ring_after(kind, top, cur) {
            walked += 1;
            if self.slots[nx as usize].node.name_id == *target_name {
                matches.push(nx);
            }
        }
        self.messages
            .charge(Phase::NameSearch, (path.len() - 1) as u64 + walked);
        for m in matches {
            let proof = if m == cur {
                self.build_proof(target_name, &path)?
            } else {
                let mut p = path.clone();
                p.push(m);
                self.build_proof(target_name, &p)?
            };
            out.push((self.effective(m), proof));
        }
        Ok(())
    }

    /// Line-oriented snapshot: `kind num name host online` per node.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for slot in self.slots.iter().filter(|s| s.alive) {
            let n = &slot.node;
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                n.kind,
                n.num_id.to_hex(),
                n.name_id.to_hex(),
                n.host.to_hex(),
                u8::from(n.online)
            ));
        }
        out
    }

    /// Rebuilds an overlay from [`Overlay::dump`] output. Peer keys come
    /// from `keys`.
    pub fn restore(text: &str, width: Width, keys: &Keyring) -> Result<Self> {
        let mut overlay = Overlay::new(width);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(Error::Decode(format!(
                    "line {}: expected 5 fields",
                    lineno + 1
                )));
            }
            let kind = NodeKind::parse(parts[0])?;
            let num_id = Identifier::from_hex(parts[1], width)?;
            let name_id = Identifier::from_hex(parts[2], width)?;
            let host = Identifier::from_hex(parts[3], width)?;
            let online = match parts[4] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Decode(format!("bad online flag {other:?}"))),
            };
            if kind == NodeKind::Peer {
                let key = keys
                    .get(&num_id)
                    .ok_or_else(|| Error::NotFound(format!("key for peer {num_id}")))?;
                overlay.register_key(key.clone());
            }
            overlay.join(OverlayNode {
                num_id,
                name_id,
                kind,
                host,
                online,
            })?;
        }
        Ok(overlay)
    }
}

/// Ring preference for combining per-kind results: the largest numID at or
/// below the target wins; if neither is at or below, the larger one wins.
fn ring_better(a: &Identifier, b: &Identifier, target: &Identifier) -> bool {
    match (a <= target, b <= target) {
        (true, false) => true,
        (false, true) => false,
        _ => a > b,
    }
}
