// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::sync::Arc;

use common::{id, Net};
use lightchain_core::error::Error;
use lightchain_core::ident::Identifier;
use lightchain_core::ledger::{Block, Contribution, Transaction};
use lightchain_core::skipgraph::{NodeKind, Phase};
use lightchain_core::storage::{
    block_holders, fast_retrieve_state, replicate, retrieve, tx_holders, PointerRegistry,
    ReplicaSet,
};

fn raw_block(net: &Net, owner: usize, senders: &[usize]) -> Block {
    let txs: Vec<_> = senders
        .iter()
        .map(|s| {
            Arc::new(Transaction::new(
                net.store.tail(),
                net.kp(&net.peers[*s]),
                Contribution::remittance(id(1), 1),
                vec![],
            ))
        })
        .collect();
    Block::new(net.store.tail(), net.kp(&net.peers[owner]), txs, vec![])
}

/// Commits `blk`, stores its replicas and installs its pointers.
fn settle(net: &mut Net, reg: &mut PointerRegistry, blk: Block, holders: &[Identifier]) -> u64 {
    net.store.append_block(blk.clone()).unwrap();
    replicate(
        &mut net.overlay,
        NodeKind::Block,
        &blk.h,
        &blk.prev,
        holders,
    )
    .unwrap();
    let height = net.store.height();
    reg.install_pointers(&mut net.overlay, &blk, height, holders)
        .unwrap();
    height
}

#[test]
fn replicate_is_idempotent_and_available() {
    let mut net = Net::small();
    let h = id(4242);
    let holders = [net.peers[0], net.peers[1], net.peers[2]];
    assert_eq!(
        replicate(
            &mut net.overlay,
            NodeKind::Transaction,
            &h,
            &id(1),
            &holders
        )
        .unwrap(),
        3
    );
    assert_eq!(
        replicate(
            &mut net.overlay,
            NodeKind::Transaction,
            &h,
            &id(1),
            &holders
        )
        .unwrap(),
        0
    );
    assert_eq!(net.overlay.replicas(NodeKind::Transaction, &h).len(), 3);
    let q = net.peers[9];
    assert!(retrieve(&net.overlay, &q, NodeKind::Transaction, &h).is_ok());
    net.overlay.set_peer_online(&holders[0], false).unwrap();
    net.overlay.set_peer_online(&holders[1], false).unwrap();
    assert_eq!(
        retrieve(&net.overlay, &q, NodeKind::Transaction, &h)
            .unwrap()
            .host,
        holders[2]
    );
    net.overlay.set_peer_online(&holders[2], false).unwrap();
    assert!(matches!(
        retrieve(&net.overlay, &q, NodeKind::Transaction, &h),
        Err(Error::Unavailable(_))
    ));
    // Crash-recover: a returning holder re-exposes its replica.
    net.overlay.set_peer_online(&holders[1], true).unwrap();
    assert_eq!(
        retrieve(&net.overlay, &q, NodeKind::Transaction, &h)
            .unwrap()
            .host,
        holders[1]
    );
    assert!(matches!(
        retrieve(&net.overlay, &q, NodeKind::Transaction, &id(5)),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn holder_sets_are_owner_plus_first_t_signers() {
    let mut net = Net::small();
    let tx = net.remit(&net.peers[0], &net.peers[1], 3);
    let set = tx_holders(&tx, net.params.t);
    assert_eq!(set.holders[0], tx.owner);
    assert!(set.holders.len() <= net.params.t + 1);
    let set = ReplicaSet::from_signers(id(1), id(2), [id(3), id(3), id(2), id(4), id(5)], 2);
    assert_eq!(set.holders, vec![id(2), id(3), id(4)]);
    let blk = net.round(3, &[1, 2], 1);
    assert_eq!(block_holders(&blk, net.params.t).holders[0], blk.owner);
}

#[test]
fn pointers_per_transaction_and_holder() {
    let mut net = Net::small();
    let mut reg = PointerRegistry::new();
    let blk = raw_block(&net, 0, &(1..=10).collect::<Vec<_>>());
    let holders = [net.peers[0], net.peers[11], net.peers[12]];
    let before = net.overlay.len(NodeKind::Pointer);
    settle(&mut net, &mut reg, blk.clone(), &holders);
    assert_eq!(net.overlay.len(NodeKind::Pointer) - before, 30);

    let genesis = net.store.get(&net.store.genesis()).unwrap().clone();
    assert_eq!(
        reg.install_pointers(&mut net.overlay, &genesis, 0, &holders)
            .unwrap(),
        0
    );

    let owner = net.peers[4];
    let hits = net
        .overlay
        .search_name_id(&net.peers[9], &owner, Some(NodeKind::Pointer))
        .unwrap();
    assert_eq!(hits.len(), 3);
    assert!(hits.iter().all(|(n, _)| n.num_id == blk.h));
}

#[test]
fn superseded_pointers_retire_after_interval() {
    let mut net = Net::small();
    net.params.block_interval = 1;
    let mut reg = PointerRegistry::new();
    let holders = [net.peers[0], net.peers[14]];
    let honest = |_: &Identifier| false;
    let owner = net.peers[3];

    let b1 = raw_block(&net, 0, &[5, 6]);
    settle(&mut net, &mut reg, b1, &holders);
    let b2 = raw_block(&net, 0, &[3, 7]);
    let b2h = b2.h;
    settle(&mut net, &mut reg, b2, &holders);
    // No overlapping owners so far: nothing is superseded.
    assert!(reg
        .retire_pointers(&mut net.overlay, 2, 1, &honest)
        .retired
        .is_empty());
    let b3 = raw_block(&net, 0, &[8, 9]);
    settle(&mut net, &mut reg, b3, &holders);
    let b4 = raw_block(&net, 0, &[3, 10]);
    let b4h = b4.h;
    let h4 = settle(&mut net, &mut reg, b4, &holders);
    assert_eq!(h4, 4);
    let mut retired_at = None;
    for height in 4..=5 {
        let rep = reg.retire_pointers(&mut net.overlay, height, 1, &honest);
        if rep
            .retired
            .iter()
            .any(|(p, _)| p.block_hash == b2h && p.owner_name == owner)
        {
            retired_at = Some(height);
            break;
        }
    }
    assert!(retired_at.unwrap() <= 5);
    let hits = net
        .overlay
        .search_name_id(&net.peers[9], &owner, Some(NodeKind::Pointer))
        .unwrap();
    assert!(!hits.is_empty());
    assert!(hits.iter().all(|(n, _)| n.num_id == b4h));
    let (bh, tx) = fast_retrieve_state(&net.overlay, &net.store, &net.peers[9], &owner).unwrap();
    assert_eq!(bh, b4h);
    assert_eq!(tx.owner, owner);
}

#[test]
fn stale_holders_are_flagged() {
    let mut net = Net::small();
    let mut reg = PointerRegistry::new();
    let lazy = net.peers[14];
    let holders = [net.peers[0], lazy];
    let keeps = |h: &Identifier| *h == lazy;
    let b1 = raw_block(&net, 0, &[3, 4]);
    settle(&mut net, &mut reg, b1, &holders);
    let b2 = raw_block(&net, 0, &[3, 5]);
    settle(&mut net, &mut reg, b2, &holders);
    // superseded at height 2, interval 2: flagged once height exceeds 4.
    for h in 2..=4 {
        assert!(reg
            .retire_pointers(&mut net.overlay, h, 2, &keeps)
            .flagged
            .is_empty());
    }
    let rep = reg.retire_pointers(&mut net.overlay, 5, 2, &keeps);
    assert_eq!(rep.flagged.len(), 1);
    assert_eq!(rep.flagged[0].1, lazy);
    assert_eq!(rep.flagged[0].0.owner_name, net.peers[3]);
    // Flags are raised once.
    assert!(reg
        .retire_pointers(&mut net.overlay, 6, 2, &keeps)
        .flagged
        .is_empty());
    assert_eq!(reg.superseded_live().len(), 1);
}

#[test]
fn fast_retrieval_cases() {
    let mut net = Net::small();
    let mut reg = PointerRegistry::new();
    let holders = [net.peers[0], net.peers[15]];
    let q = net.peers[9];
    assert!(matches!(
        fast_retrieve_state(&net.overlay, &net.store, &q, &net.peers[4]),
        Err(Error::NotFound(_))
    ));
    let b1 = raw_block(&net, 0, &[4, 5]);
    let b1h = b1.h;
    settle(&mut net, &mut reg, b1, &holders);
    let before = net.overlay.messages().get(Phase::Retrieval);
    let (bh, tx) = fast_retrieve_state(&net.overlay, &net.store, &q, &net.peers[4]).unwrap();
    assert_eq!(bh, b1h);
    assert_eq!(tx.owner, net.peers[4]);
    let spent = net.overlay.messages().get(Phase::Retrieval) - before;
    assert!(
        spent > 0 && spent <= 4 * 4 + 2 * holders.len() as u64,
        "{spent}"
    );
    for h in &holders {
        net.overlay.set_peer_online(h, false).unwrap();
    }
    // Pointer replicas are hosted by the same offline peers.
    assert!(matches!(
        fast_retrieve_state(&net.overlay, &net.store, &q, &net.peers[4]),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn offline_block_replicas_are_unavailable() {
    let mut net = Net::small();
    let mut reg = PointerRegistry::new();
    let blk = raw_block(&net, 0, &[4, 5]);
    net.store.append_block(blk.clone()).unwrap();
    let block_holders = [net.peers[0], net.peers[1]];
    replicate(
        &mut net.overlay,
        NodeKind::Block,
        &blk.h,
        &blk.prev,
        &block_holders,
    )
    .unwrap();
    reg.install_pointers(&mut net.overlay, &blk, 1, &[net.peers[2]])
        .unwrap();
    for h in &block_holders {
        net.overlay.set_peer_online(h, false).unwrap();
    }
    assert!(matches!(
        fast_retrieve_state(&net.overlay, &net.store, &net.peers[9], &net.peers[4]),
        Err(Error::Unavailable(h)) if h == blk.h
    ));
}
