use std::collections::BTreeMap;

use mneme::adversary::forge_block;
use mneme::crypto::{generate_keypair, KeyPair, PrfKey, PublicKey};
use mneme::geo::{Area, Point};
use mneme::ledger::{Block, Genesis, LedgerView, Signer, Transaction};
use mneme::poc::{prove_context, BlockAction, IgnoreReason, PocNode, PocParams};
use proptest::prelude::*;

const POPULATION: u64 = 16;

fn keys() -> Vec<KeyPair> {
    (1..=POPULATION).map(generate_keypair).collect()
}

fn genesis(keys: &[KeyPair]) -> Genesis {
    Genesis::new(PrfKey::derive(5), keys.iter().map(|k| (k.public_key, 100)).collect(), 3)
}

fn honest(keys: &[KeyPair], at: Point) -> PocNode {
    let g = genesis(keys);
    let mut node = PocNode::new(
        keys[0].clone(),
        PocParams::default(),
        LedgerView::new(keys[0].public_key, g.clone()),
    );
    node.set_context(proof_at(keys, 0, at));
    node
}

/// A genuine proof for `keys[i]` at `at`, attested by the next three keys
/// standing next to it.
fn proof_at(keys: &[KeyPair], i: usize, at: Point) -> mneme::poc::ContextProof {
    let g = genesis(keys);
    let witnesses: Vec<(&KeyPair, Point)> = (1..=3).map(|d| (&keys[(i + d) % keys.len()], at)).collect();
    prove_context(
        &keys[i],
        &g.prf_key,
        at,
        &witnesses,
        0,
        &Area::default(),
        &PocParams::default(),
        &g.reputations,
    )
    .unwrap()
}

fn transactions(keys: &[KeyPair], view: &LedgerView) -> Vec<Transaction> {
    let g = view.genesis_hash();
    (0..4)
        .map(|i| Transaction::normal(keys[i].public_key, keys[15 - i].public_key, 1, [g], i as u64))
        .collect()
}

fn proposal(keys: &[KeyPair], view: &LedgerView, signers: &[(usize, Point)]) -> Block {
    let mut b = Block::new(transactions(keys, view), view.tips(), keys[1].public_key, 0);
    for (i, at) in signers {
        b.push_signer(Signer {
            key: keys[*i].public_key,
            proof: proof_at(keys, *i, *at),
        });
    }
    b
}

fn meets(b: &Block, p: &PocParams) -> bool {
    b.signers.len() >= p.min_signatures && b.recompute_avg_signer_distance() >= p.min_distance
}

fn point() -> impl Strategy<Value = Point> {
    (0.0f64..500.0, 0.0f64..500.0).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn honest_nodes_only_verify_blocks_meeting_both_thresholds(
        me in point(),
        spots in prop::collection::vec(point(), 0..9),
        familiar in any::<bool>(),
    ) {
        let ks = keys();
        let mut node = honest(&ks, me);
        let signers: Vec<(usize, Point)> = spots.iter().enumerate().map(|(i, p)| (i + 2, *p)).collect();
        let block = proposal(&ks, &node.view, &signers);
        if familiar {
            for t in &block.transactions {
                node.hear_transaction(t, 0);
            }
        }
        let params = node.params.clone();
        match node.on_block_received(block.clone(), 1) {
            BlockAction::VerifyAndAdd(b) => prop_assert!(meets(&b, &params)),
            BlockAction::SignAndForward(b) | BlockAction::Rebroadcast(b) => prop_assert!(!meets(&b, &params)),
            BlockAction::ForwardOnly { block: b, at } => {
                prop_assert!(!meets(&b, &params));
                prop_assert_eq!(at, 1 + params.backoff);
            }
            other => prop_assert!(false, "unexpected {other:?}"),
        }
    }

    #[test]
    fn announced_blocks_are_rechecked(spots in prop::collection::vec(point(), 0..9)) {
        let ks = keys();
        let mut node = honest(&ks, Point::new(250.0, 250.0));
        let signers: Vec<(usize, Point)> = spots.iter().enumerate().map(|(i, p)| (i + 2, *p)).collect();
        let mut block = proposal(&ks, &node.view, &signers);
        block.seal(&ks[15]);
        let ok = meets(&block, &node.params);
        match node.on_verified_block(block) {
            BlockAction::VerifyAndAdd(_) => prop_assert!(ok),
            BlockAction::Ignore(IgnoreReason::Malformed) => prop_assert!(!ok),
            other => prop_assert!(false, "unexpected {other:?}"),
        }
    }

    #[test]
    fn inflated_distance_claims_are_malformed(spots in prop::collection::vec(point(), 2..9), bump in 1.0f64..500.0) {
        let ks = keys();
        let mut node = honest(&ks, Point::new(250.0, 250.0));
        let signers: Vec<(usize, Point)> = spots.iter().enumerate().map(|(i, p)| (i + 2, *p)).collect();
        let mut block = proposal(&ks, &node.view, &signers);
        block.avg_signer_distance += bump;
        prop_assert_eq!(node.on_block_received(block.clone(), 1), BlockAction::Ignore(IgnoreReason::Malformed));
        block.seal(&ks[15]);
        prop_assert_eq!(node.on_verified_block(block), BlockAction::Ignore(IgnoreReason::Malformed));
    }
}

#[test]
fn wide_signer_set_is_verified() {
    let ks = keys();
    let mut node = honest(&ks, Point::new(250.0, 250.0));
    let corners = [(0.0, 0.0), (500.0, 0.0), (0.0, 500.0), (500.0, 500.0)];
    let signers: Vec<(usize, Point)> = corners
        .iter()
        .enumerate()
        .map(|(i, (x, y))| (i + 2, Point::new(*x, *y)))
        .collect();
    let block = proposal(&ks, &node.view, &signers);
    for t in &block.transactions {
        node.hear_transaction(t, 0);
    }
    assert!(matches!(node.on_block_received(block, 1), BlockAction::VerifyAndAdd(_)));
}

#[test]
fn colluders_without_reputation_cannot_forge_context() {
    let ks = keys();
    let mut node = honest(&ks, Point::new(250.0, 250.0));
    let outsiders: Vec<KeyPair> = (100..106).map(generate_keypair).collect();
    let g = genesis(&ks);
    let block = forge_block(
        &outsiders,
        transactions(&ks, &node.view),
        node.view.tips(),
        &g.prf_key,
        0,
        &Area::default(),
        &PocParams::default(),
        &g.reputations,
    )
    .unwrap();
    assert!(block.signers.len() >= 5 && block.avg_signer_distance >= 150.0);
    assert_eq!(
        node.on_block_received(block.clone(), 1),
        BlockAction::Ignore(IgnoreReason::InvalidPoc)
    );
    let mut sealed = block;
    sealed.seal(&outsiders[0]);
    assert_eq!(
        node.on_verified_block(sealed),
        BlockAction::Ignore(IgnoreReason::InvalidPoc)
    );
}

#[test]
fn colluders_with_reputation_can_spoof_locations() {
    // Colluders holding real reputation vouch for each other at spoofed spots.
    let ks = keys();
    let mut node = honest(&ks, Point::new(250.0, 250.0));
    let colluders: Vec<KeyPair> = ks[8..14].to_vec();
    let g = genesis(&ks);
    let block = forge_block(
        &colluders,
        transactions(&ks, &node.view),
        node.view.tips(),
        &g.prf_key,
        0,
        &Area::default(),
        &PocParams::default(),
        &g.reputations,
    )
    .unwrap();
    assert!(matches!(node.on_block_received(block, 1), BlockAction::VerifyAndAdd(_)));
}

#[test]
fn reputation_table_decides_weight() {
    let ks = keys();
    let reps: BTreeMap<PublicKey, f64> = ks.iter().map(|k| (k.public_key, 1.0 / POPULATION as f64)).collect();
    assert_eq!(mneme::poc::reputation_weight(&reps, &ks[0].public_key), 1.0);
    assert_eq!(
        mneme::poc::reputation_weight(&reps, &generate_keypair(999).public_key),
        0.0
    );
}
