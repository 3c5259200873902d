// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{id, key, w64};
use lightchain_core::ident::{Identifier, Keyring};
use lightchain_core::skipgraph::{
    hop_bound, verify_search_proof, NodeKind, Overlay, OverlayNode, SearchProof,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn overlay(n: u32) -> (Overlay, Vec<Identifier>) {
    let mut o = Overlay::new(w64());
    let mut ids: Vec<Identifier> = (0..n).map(|i| o.join_peer(key(i), true).unwrap()).collect();
    ids.sort();
    (o, ids)
}

/// Brute-force ring rule: exact or largest smaller, else the global maximum.
fn oracle(sorted: &[Identifier], target: &Identifier) -> Identifier {
    sorted
        .iter()
        .rev()
        .find(|x| *x <= target)
        .copied()
        .unwrap_or(*sorted.last().unwrap())
}

#[test]
fn every_peer_findable_in_1024() {
    let (o, ids) = overlay(1024);
    let origin = ids[17];
    let mut total = 0;
    for target in &ids {
        let (node, proof) = o
            .search_num_id(&origin, target, Some(NodeKind::Peer))
            .unwrap();
        assert_eq!(node.num_id, *target);
        assert!(verify_search_proof(&proof, &o));
        total += proof.hop_count();
    }
    // The bound holds in expectation; single paths may exceed it.
    let mean = total as f64 / ids.len() as f64;
    assert!(mean <= hop_bound(1024) as f64);
}

#[test]
fn random_targets_follow_ring_rule() {
    let (o, ids) = overlay(300);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let origin = ids[rng.random_range(0..ids.len())];
        let target = Identifier::from_u64(rng.random(), w64());
        let (node, proof) = o.search_num_id(&origin, &target, None).unwrap();
        assert_eq!(node.num_id, oracle(&ids, &target));
        assert_eq!(proof.result, node.num_id);
        assert_eq!(proof.target, target);
    }
}

#[test]
fn mean_hops_grow_logarithmically() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut means = Vec::new();
    for n in [256u32, 1024, 4096] {
        let (o, ids) = overlay(n);
        let mut total = 0usize;
        for _ in 0..1000 {
            let origin = ids[rng.random_range(0..ids.len())];
            let target = Identifier::from_u64(rng.random(), w64());
            total += o
                .search_num_id(&origin, &target, Some(NodeKind::Peer))
                .unwrap()
                .1
                .hop_count();
        }
        let mean = total as f64 / 1000.0;
        assert!(mean <= 2.0 * (n as f64).log2(), "n={n} mean={mean}");
        means.push(mean);
    }
    for pair in means.windows(2) {
        // Two doublings between consecutive sizes.
        assert!(pair[1] - pair[0] <= 2.0 * 2.4, "{means:?}");
        assert!(pair[1] >= pair[0]);
    }
}

#[test]
fn search_is_deterministic_across_builds() {
    let (a, ids) = overlay(200);
    let (b, _) = overlay(200);
    let target = id(0x1234_5678_9abc_def0);
    let pa = a.search_num_id(&ids[5], &target, None).unwrap().1;
    let pb = b.search_num_id(&ids[5], &target, None).unwrap().1;
    assert_eq!(pa.to_bytes(), pb.to_bytes());
}

#[test]
fn dump_restore_preserves_search() {
    let (mut o, ids) = overlay(64);
    o.join(OverlayNode::hosted(NodeKind::Block, id(99), id(1), ids[3]))
        .unwrap();
    o.set_peer_online(&ids[7], false).unwrap();
    let mut ring = Keyring::new();
    for i in 0..64 {
        ring.insert(key(i));
    }
    let r = Overlay::restore(&o.dump(), w64(), &ring).unwrap();
    assert_eq!(r.dump(), o.dump());
    let t = id(12345);
    assert_eq!(
        r.search_num_id(&ids[0], &t, None).unwrap().1.to_bytes(),
        o.search_num_id(&ids[0], &t, None).unwrap().1.to_bytes()
    );
}

fn sample_proof() -> (Overlay, SearchProof) {
    let (o, ids) = overlay(128);
    let proof = o
        .search_num_id(&ids[0], &id(0x8000_0000_0000_0001), None)
        .unwrap()
        .1;
    assert!(proof.hop_count() >= 2);
    (o, proof)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn single_bit_mutation_rejected(bit in any::<usize>()) {
        thread_local! {
            static FIXTURE: (Overlay, SearchProof) = sample_proof();
        }
        FIXTURE.with(|(o, proof)| {
            let mut bytes = proof.to_bytes();
            let i = bit % (bytes.len() * 8);
            bytes[i / 8] ^= 1 << (i % 8);
            // A mutation either breaks decoding or yields a proof that fails.
            if let Ok(p) = SearchProof::from_bytes(&bytes, w64()) {
                assert!(!verify_search_proof(&p, o), "bit {i} accepted");
            }
        });
    }

    #[test]
    fn ring_totality(raw in proptest::collection::btree_set(any::<u64>(), 1..40), target in any::<u64>()) {
        let mut o = Overlay::new(w64());
        let host = o.join_peer(key(0), true).unwrap();
        let items: Vec<Identifier> = raw.iter().map(|v| id(*v)).collect();
        for it in &items {
            o.join(OverlayNode::hosted(NodeKind::Transaction, *it, *it, host)).unwrap();
        }
        let t = id(target);
        let (node, proof) = o.search_num_id(&host, &t, Some(NodeKind::Transaction)).unwrap();
        prop_assert_eq!(node.num_id, oracle(&items, &t));
        prop_assert!(verify_search_proof(&proof, &o));
    }
}
