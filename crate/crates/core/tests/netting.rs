use std::collections::{BTreeMap, BTreeSet};

use mneme::crypto::{generate_keypair, Digest, PublicKey};
use mneme::ledger::{Block, Transaction, TxKind, VIRTUAL_USER};
use mneme::poe::{equal_allocation, summarize_epoch, EquivalenceProof, PoeError, SummaryParams};
use mneme::Credits;
use proptest::prelude::*;

fn pk(seed: u64) -> PublicKey {
    generate_keypair(seed).public_key
}

fn params() -> SummaryParams {
    SummaryParams {
        phi_c: 0.5,
        block_size: 4,
        anchor: Digest::of(b"anchor"),
        created_at: 100,
    }
}

fn block(txs: Vec<Transaction>, creator: PublicKey, at: u64) -> Block {
    Block::new(txs, BTreeSet::from([Digest::of(b"anchor")]), creator, at)
}

#[test]
fn four_friends_net_to_four_transactions() {
    let (alice, bob, carol, david) = (pk(1), pk(2), pk(3), pk(4));
    let tx = |from, to, amount, i: u64| Transaction::normal(from, to, amount, [Digest::of(&i.to_le_bytes())], i);
    let first = block(
        vec![
            tx(alice, bob, 5, 1),
            tx(alice, carol, 2, 2),
            tx(alice, david, 2, 3),
            tx(bob, david, 1, 4),
        ],
        alice,
        1,
    );
    let second = block(
        vec![
            tx(david, carol, 2, 5),
            tx(bob, alice, 1, 6),
            tx(carol, alice, 1, 7),
            tx(carol, david, 1, 8),
        ],
        bob,
        2,
    );
    let committee = BTreeSet::from([alice, bob, david]);
    let summary = summarize_epoch(&[first, second], &committee, 3, &params()).unwrap();
    assert_eq!(summary.len(), 1);
    let got: BTreeSet<(PublicKey, PublicKey, Credits)> = summary[0]
        .transactions
        .iter()
        .map(|t| (t.sender, t.receiver, t.amount))
        .collect();
    let want = BTreeSet::from([
        (alice, VIRTUAL_USER, 6),
        (VIRTUAL_USER, bob, 4),
        (VIRTUAL_USER, carol, 2),
        (VIRTUAL_USER, david, 3),
    ]);
    assert_eq!(got, want);
    assert!(summary[0].transactions.iter().all(|t| t.kind == TxKind::Netting));
}

#[test]
fn double_spend_inside_an_epoch_is_refused() {
    let (a, b, c) = (pk(1), pk(2), pk(3));
    let input = Digest::of(b"coin");
    let mut txs = vec![
        Transaction::normal(a, b, 1, [input], 0),
        Transaction::normal(a, c, 1, [input], 1),
    ];
    txs.extend((0..2).map(|i| Transaction::normal(pk(10 + i), c, 1, [Digest::of(&[i as u8])], 2)));
    let r = summarize_epoch(&[block(txs, a, 0)], &BTreeSet::new(), 0, &params());
    assert_eq!(r, Err(PoeError::ConflictingEpoch { input }));
}

#[derive(Debug, Clone)]
struct Epoch {
    blocks: Vec<Block>,
    committee: BTreeSet<PublicKey>,
    fees: Credits,
}

fn keys(n: usize) -> Vec<PublicKey> {
    (0..n as u64).map(|i| pk(500 + i)).collect()
}

prop_compose! {
    fn epoch()(
        population in 2usize..24,
        blocks in 1usize..12,
        seed in any::<u64>(),
        fees in 0u64..50,
    ) -> Epoch {
        use rand::{Rng, SeedableRng};
        let accounts = keys(24);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut counter = 0u64;
        let mut out = Vec::new();
        for b in 0..blocks {
            let txs = (0..4)
                .map(|_| {
                    let s = rng.gen_range(0..population);
                    let mut r = rng.gen_range(0..population - 1);
                    if r >= s {
                        r += 1;
                    }
                    counter += 1;
                    Transaction::normal(accounts[s], accounts[r], rng.gen_range(0..100), [Digest::of(&counter.to_le_bytes())], counter)
                        .with_fees(rng.gen_range(0..3), rng.gen_range(0..5))
                })
                .collect();
            let mut blk = block(txs, accounts[rng.gen_range(0..population)], b as u64);
            blk.forwarders = (0..rng.gen_range(0..3)).map(|_| accounts[rng.gen_range(0..population)]).collect();
            out.push(blk);
        }
        let committee = (0..rng.gen_range(0..4)).map(|_| accounts[rng.gen_range(0..population)]).collect();
        Epoch { blocks: out, committee, fees }
    }
}

/// Brute-force per-account change: replay every transfer and fee payout.
fn replay(blocks: &[Block], phi_c: f64) -> BTreeMap<PublicKey, i64> {
    let mut out: BTreeMap<PublicKey, i64> = BTreeMap::new();
    for b in blocks {
        for t in &b.transactions {
            *out.entry(t.sender).or_default() -= (t.amount + t.tx_fee + t.block_fee) as i64;
            *out.entry(t.receiver).or_default() += t.amount as i64;
        }
        for (k, f) in b.fee_rewards(phi_c) {
            *out.entry(k).or_default() += f as i64;
        }
    }
    out.remove(&VIRTUAL_USER);
    out.retain(|_, d| *d != 0);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn netting_preserves_balances_and_never_grows(e in epoch()) {
        let p = params();
        match summarize_epoch(&e.blocks, &e.committee, e.fees, &p) {
            Ok(summary) => {
                prop_assert!(summary.len() <= e.blocks.len());
                let mut expected = replay(&e.blocks, p.phi_c);
                for (k, c) in equal_allocation(e.fees, &e.committee) {
                    *expected.entry(k).or_default() += c as i64;
                }
                expected.retain(|_, d| *d != 0);
                prop_assert_eq!(replay(&summary, p.phi_c), expected);
                for b in &summary {
                    prop_assert!(b.transactions.len() <= p.block_size);
                    prop_assert!(b.transactions.iter().all(|t| t.sender == VIRTUAL_USER || t.receiver == VIRTUAL_USER));
                }
            }
            Err(PoeError::Incompressible { summary, epoch }) => prop_assert!(summary > epoch),
            Err(other) => prop_assert!(false, "unexpected {other:?}"),
        }
    }

    #[test]
    fn equivalence_proofs_verify(e in epoch()) {
        let p = params();
        let alloc = equal_allocation(e.fees, &e.committee);
        let proof = EquivalenceProof::produce(pk(1), &e.blocks, alloc, &p).unwrap();
        match proof.verify(&e.blocks, p.phi_c) {
            Ok(ok) => prop_assert!(ok),
            Err(PoeError::Incompressible { .. }) => prop_assert!(proof.summary_blocks.len() > e.blocks.len()),
            Err(other) => prop_assert!(false, "unexpected {other:?}"),
        }
    }

    #[test]
    fn tampered_summary_fails_verification(e in epoch(), bump in 1u64..10) {
        let p = params();
        let mut proof = EquivalenceProof::produce(pk(1), &e.blocks, BTreeMap::new(), &p).unwrap();
        prop_assume!(proof.summary_blocks.len() <= e.blocks.len());
        prop_assume!(!proof.summary_blocks.is_empty());
        proof.summary_blocks[0].transactions[0].amount += bump;
        prop_assert_eq!(proof.verify(&e.blocks, p.phi_c), Ok(false));
    }
}

#[test]
fn dense_epochs_compress() {
    // Six accounts trading across five blocks always fits in two summary blocks.
    let accounts = keys(6);
    let mut blocks = Vec::new();
    let mut n = 0u64;
    for b in 0..5u64 {
        let txs = (0..4)
            .map(|i| {
                n += 1;
                Transaction::normal(
                    accounts[(b as usize + i) % 6],
                    accounts[(b as usize + i + 1) % 6],
                    n,
                    [Digest::of(&n.to_le_bytes())],
                    n,
                )
            })
            .collect();
        blocks.push(block(txs, accounts[0], b));
    }
    let summary = summarize_epoch(&blocks, &BTreeSet::new(), 0, &params()).unwrap();
    assert!(summary.len() <= 2);
}
