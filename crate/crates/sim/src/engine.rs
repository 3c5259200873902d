// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Slot-driven simulation of one network.
//!
//! Honest peers share one committed store and one view; every protocol
//! action started in a slot completes within it. The engine also keeps an
//! omniscient view, updated only from main-path blocks, against which
//! finalized artifacts and bootstrapped views are checked.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use lightchain_core::ident::{Identifier, KeyPair, SchemeKind, Width};
use lightchain_core::incentive::{
    file_misbehavior_tx, ArtifactDirectory, Auditor, Blacklist, MisbehaviorEvidence,
    MisbehaviorKind, PointerStatus,
};
use lightchain_core::ledger::{Block, Contribution, LedgerStore, Transaction, TransactionPointer};
use lightchain_core::pov::{
    blk_validator_ids, count_valid_signers, knockout_recovery, resolve_validators,
    tx_validator_ids, AuthCache, ValidatorContext,
};
use lightchain_core::skipgraph::{verify_search_proof, NodeKind, Overlay, Phase, SearchProof};
use lightchain_core::storage::{block_holders, replicate, tx_holders, PointerRegistry};
use lightchain_core::view::{
    bootstrap, default_bootstrap_cap, view_digest, ServedView, ViewSource, ViewTable,
};
use lightchain_core::Error as CoreError;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::adversary::AdversaryModel;
use crate::config::{SimConfig, Strategy};
use crate::error::{Result, SimError};
use crate::metrics::{Metrics, SlotSample};

const STREAM_KEYS: u64 = 1;
const STREAM_ADVERSARY: u64 = 2;
const STREAM_CHURN: u64 = 3;
const STREAM_WORK: u64 = 4;
const STREAM_BLOCKS: u64 = 5;
const STREAM_AUDIT: u64 = 6;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug)]
struct PeerState {
    id: Identifier,
    corrupted: bool,
    online: bool,
    /// Absolute time, in hours, of the next churn toggle.
    next_toggle: f64,
    /// Holds the committed view; cleared while offline.
    synced: bool,
    /// Contributions awaiting commitment, head first.
    queue: VecDeque<Contribution>,
    /// Validated transaction for the head of `queue`.
    pending: Option<Arc<Transaction>>,
}

struct Artifacts<'a> {
    store: &'a LedgerStore,
    registry: &'a PointerRegistry,
}

impl ArtifactDirectory for Artifacts<'_> {
    fn store(&self) -> &LedgerStore {
        self.store
    }

    fn submitted_block(&self, _h: &Identifier) -> Option<Arc<Block>> {
        None
    }

    fn pointer_status(
        &self,
        ptr: &TransactionPointer,
        holder: &Identifier,
    ) -> Option<PointerStatus> {
        self.registry.status(ptr, holder)
    }
}

struct Introducers<'a> {
    overlay: &'a Overlay,
    peers: &'a [PeerState],
    index: &'a HashMap<Identifier, usize>,
    honest: &'a ServedView,
    forged: Option<&'a ServedView>,
}

impl ViewSource for Introducers<'_> {
    fn serve(&self, introducer: &Identifier) -> Option<ServedView> {
        if !self.overlay.is_peer_online(introducer) {
            return None;
        }
        let p = &self.peers[*self.index.get(introducer)?];
        if p.corrupted {
            if let Some(f) = self.forged {
                return Some(f.clone());
            }
        }
        p.synced.then(|| self.honest.clone())
    }
}

/// Outcome of one PoV round over a subject.
struct Round {
    /// Distinct designated validators, first occurrence order.
    designated: Vec<usize>,
    hops: Vec<usize>,
    sigs: Vec<lightchain_core::ident::Signature>,
}

pub struct Engine {
    cfg: SimConfig,
    width: Width,
    overlay: Overlay,
    store: LedgerStore,
    view: ViewTable,
    oracle: ViewTable,
    oracle_digest: Identifier,
    honest_served: ServedView,
    forged_served: Option<ServedView>,
    blacklist: Blacklist,
    registry: PointerRegistry,
    auth: AuthCache,
    adversary: AdversaryModel,
    peers: Vec<PeerState>,
    index: HashMap<Identifier, usize>,
    tx_bodies: HashMap<Identifier, Arc<Transaction>>,
    filed: HashSet<(Identifier, MisbehaviorKind, Identifier)>,
    rng_churn: ChaCha8Rng,
    rng_work: ChaCha8Rng,
    rng_blocks: ChaCha8Rng,
    rng_audit: ChaCha8Rng,
    emit_p: f64,
    metrics: Metrics,
    now: f64,
}

fn draw_holding(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return f64::INFINITY;
    }
    Exp::new(1.0 / mean).expect("positive rate").sample(rng)
}

fn served(view: &ViewTable) -> ServedView {
    ServedView {
        tail: view.tail(),
        digest: view_digest(view),
        table: Arc::new(view.clone()),
    }
}

/// Runs `config` to completion.
pub fn run(config: &SimConfig) -> Result<Metrics> {
    let mut e = Engine::new(config)?;
    e.run_all()?;
    Ok(e.finish())
}

impl Engine {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let cfg = config.clone();
        let width = Width::new(cfg.width_s).map_err(|e| SimError::Config(e.to_string()))?;
        let mut overlay = Overlay::new(width);
        let mut rng_keys = rng_for(cfg.seed, STREAM_KEYS);
        let mut ids = Vec::with_capacity(cfg.n);
        while ids.len() < cfg.n {
            let mut seed = [0u8; 32];
            rng_keys.fill(&mut seed);
            let kp = KeyPair::from_seed(SchemeKind::Mac, seed, width);
            if overlay.contains_peer(&kp.id()) {
                continue;
            }
            ids.push(overlay.join_peer(kp, true)?);
        }
        ids.sort();
        let adversary = AdversaryModel::choose(
            &ids,
            cfg.corrupted_count(),
            cfg.strategies.clone(),
            &mut rng_for(cfg.seed, STREAM_ADVERSARY),
        );
        let q = cfg.q()?;
        let off_mean = cfg.effective_offline_hours();
        let mut rng_churn = rng_for(cfg.seed, STREAM_CHURN);
        let mut peers = Vec::with_capacity(cfg.n);
        for id in &ids {
            let corrupted = adversary.is_corrupted(id);
            let (online, next_toggle) = if corrupted || q == 0.0 {
                (true, f64::INFINITY)
            } else {
                // Start in the stationary state; holding times are memoryless.
                let online = rng_churn.random::<f64>() >= q;
                let mean = if online {
                    cfg.mean_online_hours
                } else {
                    off_mean
                };
                (online, draw_holding(&mut rng_churn, mean))
            };
            if !online {
                overlay.set_peer_online(id, false)?;
            }
            peers.push(PeerState {
                id: *id,
                corrupted,
                online,
                next_toggle,
                synced: online,
                queue: VecDeque::new(),
                pending: None,
            });
        }
        let index = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let store = LedgerStore::with_width(width);
        let view = ViewTable::genesis(ids.iter().copied(), cfg.endowment, store.genesis());
        let oracle = view.clone();
        let honest_served = served(&view);
        let emit_p = 1.0 - (-cfg.tx_rate_per_peer_per_hour * cfg.slot_hours()).exp();
        let metrics = Metrics {
            involvement: vec![0; cfg.n],
            tails_agree: true,
            ..Metrics::default()
        };
        let mut e = Engine {
            width,
            overlay,
            oracle_digest: honest_served.digest,
            store,
            view,
            oracle,
            honest_served,
            forged_served: None,
            blacklist: Blacklist::new(),
            registry: PointerRegistry::new(),
            auth: AuthCache::new(),
            adversary,
            peers,
            index,
            tx_bodies: HashMap::new(),
            filed: HashSet::new(),
            rng_churn,
            rng_work: rng_for(cfg.seed, STREAM_WORK),
            rng_blocks: rng_for(cfg.seed, STREAM_BLOCKS),
            rng_audit: rng_for(cfg.seed, STREAM_AUDIT),
            emit_p,
            metrics,
            now: 0.0,
            cfg,
        };
        e.refresh_served();
        Ok(e)
    }

    pub fn run_all(&mut self) -> Result<()> {
        let slots = self.cfg.slots();
        for slot in 0..slots {
            self.step(slot)?;
        }
        Ok(())
    }

    /// Executes one slot.
    pub fn step(&mut self, slot: u64) -> Result<()> {
        self.now = (slot + 1) as f64 * self.cfg.slot_hours();
        self.churn()?;
        self.bootstraps()?;
        self.retire_pointers();
        self.workload()?;
        self.form_blocks()?;
        self.sample(slot);
        self.auth.clear();
        self.metrics.slots += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Metrics {
        self.metrics.chain_height = self.store.height();
        self.metrics.blacklisted = self.blacklist.len() as u64;
        self.metrics.messages = self.overlay.messages().snapshot();
        self.metrics.tails_agree =
            self.store.resolve_tail() == self.store.tail() && self.view.tail() == self.store.tail();
        self.metrics
    }

    pub fn store(&self) -> &LedgerStore {
        &self.store
    }

    pub fn view(&self) -> &ViewTable {
        &self.view
    }

    pub fn overlay(&self) -> &Overlay {
        &self.overlay
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn adversary(&self) -> &AdversaryModel {
        &self.adversary
    }

    fn kp(&self, i: usize) -> &KeyPair {
        self.overlay
            .keys()
            .get(&self.peers[i].id)
            .expect("every peer has a key")
    }

    fn active(&self, i: usize) -> bool {
        let p = &self.peers[i];
        p.online && p.synced && !self.blacklist.contains(&p.id)
    }

    fn refresh_served(&mut self) {
        self.honest_served = served(&self.view);
        self.forged_served = if self.adversary.uses(Strategy::ServeForgedView) {
            self.adversary.forge_view(&self.view).map(|v| served(&v))
        } else {
            None
        };
    }

    fn churn(&mut self) -> Result<()> {
        let off_mean = self.cfg.effective_offline_hours();
        for i in 0..self.peers.len() {
            let was = self.peers[i].online;
            while self.peers[i].next_toggle <= self.now {
                let p = &mut self.peers[i];
                p.online = !p.online;
                let mean = if p.online {
                    self.cfg.mean_online_hours
                } else {
                    off_mean
                };
                p.next_toggle += draw_holding(&mut self.rng_churn, mean);
            }
            let p = &mut self.peers[i];
            if p.online != was {
                self.overlay.set_peer_online(&p.id, p.online)?;
                if !p.online {
                    p.synced = false;
                }
            }
        }
        Ok(())
    }

    fn bootstraps(&mut self) -> Result<()> {
        let cap = default_bootstrap_cap(&self.cfg.params);
        for i in 0..self.peers.len() {
            let p = &self.peers[i];
            if !p.online || p.synced || p.corrupted {
                continue;
            }
            let src = Introducers {
                overlay: &self.overlay,
                peers: &self.peers,
                index: &self.index,
                honest: &self.honest_served,
                forged: self.forged_served.as_ref(),
            };
            let outcome = bootstrap(&self.overlay, &p.id, &self.cfg.params, &src, cap);
            self.metrics.bootstraps += 1;
            self.metrics.service_attempts += 1;
            match outcome {
                Ok(out) => {
                    let adopted = if Arc::ptr_eq(&out.view, &self.honest_served.table) {
                        self.honest_served.digest
                    } else {
                        view_digest(&out.view)
                    };
                    if adopted != self.oracle_digest {
                        self.metrics.view_mismatches += 1;
                    }
                    self.peers[i].synced = true;
                }
                Err(CoreError::BootstrapUnavailable { .. }) => {
                    self.metrics.bootstrap_failures += 1;
                    self.metrics.service_denials += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// A random active honest peer, used as auditor or reporter.
    fn pick_honest(&mut self) -> Option<usize> {
        let pool: Vec<usize> = (0..self.peers.len())
            .filter(|i| !self.peers[*i].corrupted && self.active(*i))
            .collect();
        if pool.is_empty() {
            return None;
        }
        Some(pool[self.rng_audit.random_range(0..pool.len())])
    }

    fn file_evidence(&mut self, reporter: usize, evs: Vec<MisbehaviorEvidence>) {
        for ev in evs {
            if self.filed.insert((ev.accused, ev.kind, ev.subject)) {
                let cont = lightchain_core::incentive::misbehavior_contribution(
                    &self.peers[reporter].id,
                    &ev,
                );
                self.peers[reporter].queue.push_back(cont);
            }
        }
    }

    fn retire_pointers(&mut self) {
        let height = self.store.height();
        let adversary = &self.adversary;
        let lazy = adversary.uses(Strategy::KeepStalePointers);
        let keeps = |h: &Identifier| lazy && adversary.is_corrupted(h);
        let report = self.registry.retire_pointers(
            &mut self.overlay,
            height,
            self.cfg.params.block_interval,
            &keeps,
        );
        if !self.cfg.auditing || report.flagged.is_empty() {
            return;
        }
        let Some(reporter) = self.pick_honest() else {
            return;
        };
        let rid = self.peers[reporter].id;
        let evs: Vec<MisbehaviorEvidence> = {
            let arts = Artifacts {
                store: &self.store,
                registry: &self.registry,
            };
            let aud = self.auditor(&arts);
            report
                .flagged
                .iter()
                .flat_map(|(ptr, holder)| {
                    aud.audit_pointer(ptr, std::slice::from_ref(holder), &rid)
                })
                .collect()
        };
        self.file_evidence(reporter, evs);
    }

    fn auditor<'a>(&'a self, arts: &'a Artifacts<'a>) -> Auditor<'a> {
        Auditor {
            params: &self.cfg.params,
            keys: &self.overlay,
            artifacts: arts,
            width: self.width,
        }
    }

    fn record_hops(&mut self, hops: &[usize]) {
        for h in hops {
            *self.metrics.search_hops.entry(*h).or_default() += 1;
        }
    }

    fn resolve(
        &self,
        requester: usize,
        ids: &[Identifier],
    ) -> Result<(Vec<SearchProof>, Vec<usize>)> {
        self.overlay.set_phase(Phase::Search);
        let resolved = resolve_validators(&self.overlay, &self.peers[requester].id, ids)?;
        let mut designated = Vec::new();
        let mut proofs = Vec::with_capacity(resolved.len());
        for (peer, proof) in resolved {
            let i = self.index[&peer];
            if !designated.contains(&i) {
                designated.push(i);
            }
            proofs.push(proof);
        }
        Ok((proofs, designated))
    }

    /// Whether validator `v` answers a request from `owner`, and whether it
    /// signs without checking.
    fn validator_mode(&self, v: usize, owner: usize) -> Option<bool> {
        let pv = &self.peers[v];
        if !pv.online || !(pv.synced || pv.corrupted) {
            return None;
        }
        if pv.corrupted {
            let colluding = self.peers[owner].corrupted;
            if colluding && self.adversary.uses(Strategy::SignInvalid) {
                return Some(true);
            }
            if !colluding && self.adversary.uses(Strategy::WithholdSignatures) {
                return None;
            }
        }
        Some(false)
    }

    fn tx_round(&self, owner: usize, cont: Contribution) -> Result<(Transaction, Round)> {
        let prev = self.store.tail();
        let owner_id = self.peers[owner].id;
        let ids = tx_validator_ids(&prev, &owner_id, &cont, self.cfg.params.alpha)?;
        let (proofs, designated) = self.resolve(owner, &ids)?;
        let hops = proofs.iter().map(SearchProof::hop_count).collect();
        let kp = self.kp(owner);
        let tx = match &cont.evidence {
            Some(bytes) => {
                let ev = MisbehaviorEvidence::decode(bytes, self.width)?;
                let arts = Artifacts {
                    store: &self.store,
                    registry: &self.registry,
                };
                file_misbehavior_tx(kp, &ev, &self.auditor(&arts), prev, proofs)?
            }
            None => Transaction::new(prev, kp, cont, proofs),
        };
        let arc = Arc::new(tx.clone());
        let arts = Artifacts {
            store: &self.store,
            registry: &self.registry,
        };
        let aud = self.auditor(&arts);
        let mut sigs = Vec::new();
        self.overlay.set_phase(Phase::Validation);
        for &v in &designated {
            let Some(blind) = self.validator_mode(v, owner) else {
                continue;
            };
            self.overlay.messages().charge(Phase::Validation, 2);
            let kv = self.kp(v);
            if blind {
                sigs.push(lightchain_core::ledger::sign_hash(kv, &tx.h));
                continue;
            }
            let mut ctx = ValidatorContext::new(
                kv,
                &self.cfg.params,
                &self.store,
                &self.view,
                &self.overlay,
                &self.blacklist,
            );
            ctx.auth_cache = Some(&self.auth);
            ctx.evidence = Some(&aud);
            if let Some(s) = ctx.validate_transaction(&arc).signature {
                sigs.push(s);
            }
        }
        Ok((
            tx,
            Round {
                designated,
                hops,
                sigs,
            },
        ))
    }

    fn workload(&mut self) -> Result<()> {
        let tail = self.store.tail();
        let n = self.peers.len();
        for i in 0..n {
            // A pending transaction built on an older tail is re-issued.
            let stale = self.peers[i]
                .pending
                .as_ref()
                .filter(|tx| tx.prev != tail)
                .map(|tx| tx.h);
            if let Some(h) = stale {
                self.peers[i].pending = None;
                self.tx_bodies.remove(&h);
                let _ = self.overlay.leave(&h, NodeKind::Transaction);
            }
            if !self.active(i) {
                continue;
            }
            if self.peers[i].queue.is_empty() && self.rng_work.random::<f64>() < self.emit_p {
                let mut r = self.rng_work.random_range(0..n - 1);
                if r >= i {
                    r += 1;
                }
                let amount = self.rng_work.random_range(1..=10);
                let to = self.peers[r].id;
                self.peers[i]
                    .queue
                    .push_back(Contribution::remittance(to, amount));
            }
            if self.peers[i].pending.is_some() {
                continue;
            }
            let Some(cont) = self.peers[i].queue.front().cloned() else {
                continue;
            };
            let (mut tx, round) = self.tx_round(i, cont)?;
            self.record_hops(&round.hops);
            for v in &round.designated {
                self.metrics.involvement[*v] += 1;
            }
            let honest = !self.peers[i].corrupted;
            if honest {
                self.metrics.service_attempts += 1;
            }
            let designated: Vec<Identifier> =
                round.designated.iter().map(|v| self.peers[*v].id).collect();
            tx.sigs.extend(round.sigs);
            let signers = count_valid_signers(
                &tx.h,
                tx.validator_sigs(),
                &designated,
                &self.overlay,
                Some(&self.blacklist),
            );
            if signers < self.cfg.params.t {
                if honest {
                    self.metrics.service_denials += 1;
                }
                continue;
            }
            let holders = tx_holders(&tx, self.cfg.params.t).holders;
            replicate(
                &mut self.overlay,
                NodeKind::Transaction,
                &tx.h,
                &tx.prev,
                &holders,
            )?;
            let tx = Arc::new(tx);
            self.tx_bodies.insert(tx.h, tx.clone());
            self.peers[i].pending = Some(tx);
        }
        Ok(())
    }

    /// Validated transactions visible to `cand` under the current tail, one
    /// per owner, in hash order.
    fn discover(&self, cand: usize) -> Result<Vec<Arc<Transaction>>> {
        let tail = self.store.tail();
        let hits = self.overlay.search_name_id(
            &self.peers[cand].id,
            &tail,
            Some(NodeKind::Transaction),
        )?;
        let mut by_owner: HashMap<Identifier, Arc<Transaction>> = HashMap::new();
        for (node, _) in hits {
            let Some(tx) = self.tx_bodies.get(&node.num_id) else {
                continue;
            };
            if tx.prev != tail || self.blacklist.contains(&tx.owner) {
                continue;
            }
            by_owner
                .entry(tx.owner)
                .and_modify(|cur| {
                    if tx.h < cur.h {
                        *cur = tx.clone();
                    }
                })
                .or_insert_with(|| tx.clone());
        }
        let mut txs: Vec<Arc<Transaction>> = by_owner.into_values().collect();
        txs.sort_by_key(|t| t.h);
        Ok(txs)
    }

    /// Drops members whose owner cannot cover remittance and fees.
    fn affordable(&self, txs: Vec<Arc<Transaction>>) -> Vec<Arc<Transaction>> {
        let p = &self.cfg.params;
        txs.into_iter()
            .filter(|tx| {
                let mut seen = Vec::new();
                for s in tx.validator_sigs() {
                    if seen.len() == p.t {
                        break;
                    }
                    if !seen.contains(&s.signer_id) {
                        seen.push(s.signer_id);
                    }
                }
                let routers: usize = tx.search_proofs.iter().map(SearchProof::hop_count).sum();
                let due = tx.cont.amount as i64
                    + (p.validation_fee * seen.len() as u64 + p.routing_fee * routers as u64)
                        as i64;
                self.view.balance(&tx.owner) >= due
            })
            .collect()
    }

    /// Unvalidated remittances from colluders, so that a forged block
    /// reaches `min_tx` members.
    fn forged_members(
        &self,
        cand: usize,
        present: &HashSet<Identifier>,
        need: usize,
    ) -> Result<Vec<Arc<Transaction>>> {
        let tail = self.store.tail();
        let colluders: Vec<usize> = (0..self.peers.len())
            .map(|k| (cand + k) % self.peers.len())
            .filter(|k| {
                let p = &self.peers[*k];
                p.corrupted && !present.contains(&p.id) && !self.blacklist.contains(&p.id)
            })
            .take(need)
            .collect();
        let mut out = Vec::new();
        for owner in colluders {
            let cont = Contribution::remittance(self.peers[cand].id, 1);
            let ids = tx_validator_ids(&tail, &self.peers[owner].id, &cont, self.cfg.params.alpha)?;
            let (proofs, _) = self.resolve(owner, &ids)?;
            out.push(Arc::new(Transaction::new(
                tail,
                self.kp(owner),
                cont,
                proofs,
            )));
        }
        Ok(out)
    }

    fn block_round(&self, cand: usize, txs: Vec<Arc<Transaction>>) -> Result<(Block, Round)> {
        let tail = self.store.tail();
        let hashes: Vec<Identifier> = txs.iter().map(|t| t.h).collect();
        let ids = blk_validator_ids(&tail, &self.peers[cand].id, &hashes, self.cfg.params.alpha)?;
        let (proofs, designated) = self.resolve(cand, &ids)?;
        let hops = proofs.iter().map(SearchProof::hop_count).collect();
        let blk = Block::new(tail, self.kp(cand), txs, proofs);
        let mut sigs = Vec::new();
        self.overlay.set_phase(Phase::Validation);
        for &v in &designated {
            let Some(blind) = self.validator_mode(v, cand) else {
                continue;
            };
            self.overlay.messages().charge(Phase::Validation, 2);
            let kv = self.kp(v);
            if blind {
                sigs.push(lightchain_core::ledger::sign_hash(kv, &blk.h));
                continue;
            }
            let mut ctx = ValidatorContext::new(
                kv,
                &self.cfg.params,
                &self.store,
                &self.view,
                &self.overlay,
                &self.blacklist,
            );
            ctx.auth_cache = Some(&self.auth);
            if let Some(s) = ctx.validate_block(&blk).signature {
                sigs.push(s);
            }
        }
        Ok((
            blk,
            Round {
                designated,
                hops,
                sigs,
            },
        ))
    }

    fn form_blocks(&mut self) -> Result<()> {
        let eligible: Vec<usize> = (0..self.peers.len()).filter(|i| self.active(*i)).collect();
        if eligible.is_empty() {
            return Ok(());
        }
        let k = Poisson::new(self.cfg.candidates_per_slot)
            .expect("validated positive")
            .sample(&mut self.rng_blocks) as usize;
        let k = k.min(eligible.len());
        let cands: Vec<usize> = index::sample(&mut self.rng_blocks, eligible.len(), k)
            .into_iter()
            .map(|j| eligible[j])
            .collect();
        let p = self.cfg.params.clone();
        let mut submitted: Vec<Block> = Vec::new();
        for cand in cands {
            let forging =
                self.peers[cand].corrupted && self.adversary.uses(Strategy::ForgeBlockCommit);
            let mut txs = self.affordable(self.discover(cand)?);
            if forging {
                let present: HashSet<Identifier> = txs.iter().map(|t| t.owner).collect();
                let need = p.min_tx.saturating_sub(txs.len()).max(1);
                let forged = self.forged_members(cand, &present, need)?;
                if forged.is_empty() {
                    continue;
                }
                txs.extend(forged);
                txs.sort_by_key(|t| t.h);
                self.metrics.adversary_attempts += 1;
            }
            if txs.len() < p.min_tx {
                continue;
            }
            let probe = Block::new(self.store.tail(), self.kp(cand), txs.clone(), Vec::new());
            if self.view.clone().apply_block(&probe, &p).is_err() {
                continue;
            }
            let (mut blk, round) = self.block_round(cand, txs)?;
            self.record_hops(&round.hops);
            for v in &round.designated {
                self.metrics.involvement[*v] += 1;
            }
            let honest = !self.peers[cand].corrupted;
            if honest {
                self.metrics.service_attempts += 1;
            }
            let designated: Vec<Identifier> =
                round.designated.iter().map(|v| self.peers[*v].id).collect();
            blk.sigs.extend(round.sigs);
            let signers = count_valid_signers(
                &blk.h,
                blk.validator_sigs(),
                &designated,
                &self.overlay,
                Some(&self.blacklist),
            );
            if signers >= p.t {
                submitted.push(blk);
            } else if honest {
                self.metrics.service_denials += 1;
            }
        }
        if submitted.is_empty() {
            return Ok(());
        }
        self.metrics.blocks_submitted += submitted.len() as u64;
        if submitted.len() > 1 {
            self.metrics.fork_slots += 1;
        }
        let parent = self.store.tail();
        for blk in &submitted {
            let holders = block_holders(blk, p.t).holders;
            replicate(
                &mut self.overlay,
                NodeKind::Block,
                &blk.h,
                &blk.prev,
                &holders,
            )?;
            self.store.append_block(blk.clone())?;
        }
        let winner_h = self.store.tail();
        let winner = self.store.get(&winner_h).expect("appended").clone();
        for blk in submitted.iter().filter(|b| b.h != winner_h) {
            knockout_recovery(&mut self.overlay, &winner, blk, &[]);
        }
        self.commit(parent, winner)
    }

    fn commit(&mut self, parent: Identifier, winner: Arc<Block>) -> Result<()> {
        let p = self.cfg.params.clone();
        let height = self.store.height();
        // The parent is finalized by its first main-path child.
        if let Some(parent_blk) = self.store.get(&parent).cloned() {
            if !parent_blk.is_genesis() {
                self.finalize(&parent_blk);
            }
        }
        let applied = self.view.apply_block(&winner, &p)?;
        if self.oracle.apply_block(&winner, &p).is_err() {
            self.metrics.integrity_violations += 1;
        }
        self.oracle_digest = view_digest(&self.oracle);
        for (accused, _) in &applied.convictions {
            self.blacklist.insert(*accused, height);
            self.metrics.reports_committed += 1;
        }
        for tx in &winner.txs {
            self.metrics.txs_committed += 1;
            self.tx_bodies.remove(&tx.h);
            let _ = self.overlay.leave(&tx.h, NodeKind::Transaction);
            if let Some(&i) = self.index.get(&tx.owner) {
                let peer = &mut self.peers[i];
                if peer.pending.as_ref().map(|t| t.h) == Some(tx.h) {
                    peer.pending = None;
                    peer.queue.pop_front();
                }
            }
        }
        let holders = block_holders(&winner, p.t).holders;
        self.registry
            .install_pointers(&mut self.overlay, &winner, height, &holders)?;
        self.refresh_served();
        Ok(())
    }

    fn finalize(&mut self, blk: &Block) {
        self.metrics.integrity_violations += self.omniscient_violations(blk);
        if !self.cfg.auditing {
            return;
        }
        let Some(auditor) = self.pick_honest() else {
            return;
        };
        let rid = self.peers[auditor].id;
        let evs = {
            let arts = Artifacts {
                store: &self.store,
                registry: &self.registry,
            };
            self.overlay.set_phase(Phase::Audit);
            self.auditor(&arts).audit_committed_block(blk, &rid)
        };
        self.overlay
            .messages()
            .charge(Phase::Audit, 2 * (blk.txs.len() as u64 + 1));
        self.file_evidence(auditor, evs);
    }

    fn proofs_ok(
        &self,
        proofs: &[SearchProof],
        expected: &[Identifier],
        owner: &Identifier,
    ) -> bool {
        proofs.len() == expected.len()
            && proofs.iter().zip(expected).all(|(pr, e)| {
                pr.target == *e
                    && pr.hops.first().map(|h| h.signer) == Some(*owner)
                    && verify_search_proof(pr, &self.overlay)
            })
    }

    /// Invalid artifacts in a finalized block, re-checked from scratch:
    /// one per failing member plus one when the block itself fails.
    pub fn omniscient_violations(&self, blk: &Block) -> u64 {
        let p = &self.cfg.params;
        let keys = self.overlay.keys();
        let owner_signed =
            |h: &Identifier, owner: &Identifier, sigs: &[lightchain_core::ident::Signature]| {
                sigs.first()
                    .map(|s| {
                        s.signer_id == *owner
                            && lightchain_core::ident::KeyDirectory::verify_signature(
                                keys,
                                h.as_bytes(),
                                s,
                            )
                    })
                    .unwrap_or(false)
            };
        let mut bad = 0u64;
        let block_ok = blk.recompute_hash() == blk.h
            && owner_signed(&blk.h, &blk.owner, &blk.sigs)
            && blk_validator_ids(&blk.prev, &blk.owner, &blk.tx_hashes(), p.alpha)
                .map(|ids| self.proofs_ok(&blk.search_proofs, &ids, &blk.owner))
                .unwrap_or(false)
            && {
                let designated: Vec<Identifier> =
                    blk.search_proofs.iter().map(|s| s.result).collect();
                count_valid_signers(&blk.h, blk.validator_sigs(), &designated, keys, None) >= p.t
            }
            && blk.txs.len() >= p.min_tx
            && blk
                .txs
                .iter()
                .map(|t| t.owner)
                .collect::<HashSet<_>>()
                .len()
                == blk.txs.len();
        if !block_ok {
            bad += 1;
        }
        let parent_h = self.store.block_height(&blk.prev).unwrap_or(u64::MAX);
        for tx in &blk.txs {
            let designated: Vec<Identifier> = tx.search_proofs.iter().map(|s| s.result).collect();
            let ok = tx.recompute_hash() == tx.h
                && owner_signed(&tx.h, &tx.owner, &tx.sigs)
                && tx_validator_ids(&tx.prev, &tx.owner, &tx.cont, p.alpha)
                    .map(|ids| self.proofs_ok(&tx.search_proofs, &ids, &tx.owner))
                    .unwrap_or(false)
                && count_valid_signers(&tx.h, tx.validator_sigs(), &designated, keys, None) >= p.t
                && match self.store.block_height(&tx.prev) {
                    Some(ph) if self.store.on_main_path(&tx.prev) && ph <= parent_h => {
                        match self.store.latest_owner_block(&tx.owner, &blk.prev) {
                            Ok(Some(latest)) => self
                                .store
                                .block_height(&latest)
                                .map(|h| h <= ph)
                                .unwrap_or(false),
                            Ok(None) => true,
                            Err(_) => false,
                        }
                    }
                    _ => false,
                };
            if !ok {
                bad += 1;
            }
        }
        bad
    }

    fn sample(&mut self, slot: u64) {
        let mut sum = 0u64;
        let mut count = 0u64;
        for h in &self.store.main_path()[1..] {
            sum += self.overlay.online_replica_count(NodeKind::Block, h) as u64;
            count += 1;
        }
        self.metrics.replica_sum += sum;
        self.metrics.replica_observations += count;
        self.metrics.series.push(SlotSample {
            slot,
            online_peers: self.overlay.online_peer_count(),
            chain_height: self.store.height(),
            mean_replicas: if count == 0 {
                0.0
            } else {
                sum as f64 / count as f64
            },
            integrity_violations: self.metrics.integrity_violations,
            service_denials: self.metrics.service_denials,
            messages: self.overlay.messages().total(),
        });
    }
}
