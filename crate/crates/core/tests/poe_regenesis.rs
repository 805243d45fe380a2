use std::collections::{BTreeMap, BTreeSet};

use mneme::crypto::{generate_keypair, Digest, KeyPair, PrfKey, PublicKey};
use mneme::ledger::{Block, Genesis, LedgerView, Transaction};
use mneme::poe::{
    initiators, poe_termination_probability, run_regenesis_round, select_committee, EpochConfig, MemberState,
    PoeDriver, RoundContext, RoundOutcome, SummaryParams, Theta,
};
use mneme::Credits;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    keys: Vec<KeyPair>,
    view: LedgerView,
}

fn fixture(members: usize) -> Fixture {
    let keys: Vec<KeyPair> = (1..=members as u64).map(generate_keypair).collect();
    let alloc = keys.iter().map(|k| (k.public_key, 100)).collect();
    let view = LedgerView::new(keys[0].public_key, Genesis::new(PrfKey::derive(1), alloc, 7));
    Fixture { keys, view }
}

/// Two blocks in which every member pays the next one, each spending its
/// genesis allocation once.
fn epoch_blocks(f: &Fixture, salt: u64) -> Vec<Block> {
    let g = f.view.genesis_hash();
    let n = f.keys.len();
    let pks: Vec<PublicKey> = f.keys.iter().map(|k| k.public_key).collect();
    let mut parent = f.view.anchor();
    let mut out = Vec::new();
    for b in 0..n / 4 {
        let txs = (0..4)
            .map(|j| {
                let s = 4 * b + j;
                Transaction::normal(pks[s], pks[(s + 1) % n], 10 + s as Credits, [g], salt * 100 + s as u64)
                    .with_fees(1, 2)
            })
            .collect();
        let block = Block::new(txs, BTreeSet::from([parent]), pks[4 * b], salt * 100 + b as u64);
        parent = block.hash();
        out.push(block);
    }
    out
}

fn context(f: &Fixture, quorum: usize) -> RoundContext {
    let committee: BTreeSet<PublicKey> = f.keys.iter().map(|k| k.public_key).collect();
    RoundContext {
        epoch: 1,
        prev_regenesis: f.view.anchor(),
        config: EpochConfig {
            committee_size: committee.len(),
            quorum,
            ..EpochConfig::default()
        },
        committee,
        randomness: 42,
        reputations: f.view.reputations().clone(),
        forwarders: BTreeSet::new(),
        summary: SummaryParams {
            phi_c: f.view.genesis.phi_c,
            block_size: f.view.genesis.block_size,
            anchor: f.view.anchor(),
            created_at: 500,
        },
    }
}

fn members(f: &Fixture, complete: usize, view: &[Block], deposit: Credits) -> Vec<MemberState> {
    f.keys
        .iter()
        .enumerate()
        .map(|(i, k)| MemberState {
            keys: k.clone(),
            view: (i < complete).then(|| view.to_vec()),
            deposit,
        })
        .collect()
}

#[test]
fn regenesis_prunes_and_conserves_supply() {
    let mut f = fixture(8);
    let blocks = epoch_blocks(&f, 1);
    for b in &blocks {
        f.view.add_block(b.clone()).unwrap();
    }
    let ctx = context(&f, 5);
    let before = f.view.total_supply();
    let count_before = f.view.block_count();
    let RoundOutcome::Regenesis(rb) = run_regenesis_round(&members(&f, 8, &blocks, 0), &ctx) else {
        panic!("round failed");
    };
    assert!(rb.is_verified());
    assert_eq!(rb.valid_signature_count(), 8);
    assert_eq!(f.view.prune(&rb), Ok(blocks.len()));
    assert!(f.view.block_count() <= count_before);
    let burned: i64 = rb.burned.values().map(|c| *c as i64).sum();
    assert_eq!(f.view.total_supply(), before + rb.minted as i64 - burned);
    assert_eq!(f.view.anchor(), rb.hash());
    assert!(blocks.iter().all(|b| f.view.is_summarized(&b.hash())));
    let reps: f64 = f.view.reputations().values().sum();
    assert!((reps - 1.0).abs() < 1e-9);
}

#[test]
fn summarized_blocks_cannot_be_respent() {
    let mut f = fixture(8);
    let blocks = epoch_blocks(&f, 1);
    for b in &blocks {
        f.view.add_block(b.clone()).unwrap();
    }
    let ctx = context(&f, 5);
    let RoundOutcome::Regenesis(rb) = run_regenesis_round(&members(&f, 8, &blocks, 0), &ctx) else {
        panic!("round failed");
    };
    f.view.prune(&rb).unwrap();
    let old = &blocks[0].transactions[0];
    let respend = Transaction::normal(old.sender, old.receiver, 1, old.inputs.iter().copied(), 999);
    assert!(f.view.detect_conflict(&respend));
}

#[test]
fn one_short_of_quorum_fails_and_carries_the_epoch() {
    let f = fixture(8);
    let first = epoch_blocks(&f, 1);
    let ctx = context(&f, 5);
    let mut driver = PoeDriver::default();
    let outcome = driver.run(&members(&f, 4, &first, 0), &first, &ctx);
    assert_eq!(outcome, RoundOutcome::EpochFailure { support: 4, needed: 5 });
    assert_eq!(driver.failures, 1);
    assert_eq!(driver.carried().len(), first.len());

    let second: Vec<Block> = Vec::new();
    let RoundOutcome::Regenesis(rb) = driver.run(&members(&f, 8, &second, 0), &second, &ctx) else {
        panic!("second round failed");
    };
    let covered: BTreeSet<Digest> = first.iter().map(Block::hash).collect();
    assert_eq!(rb.summarized_headers, covered);
    assert!(driver.carried().is_empty());
}

#[test]
fn signers_of_a_losing_proposal_lose_their_deposits() {
    let f = fixture(8);
    let blocks = epoch_blocks(&f, 1);
    let ctx = context(&f, 5);
    let mut ms = members(&f, 8, &blocks, 7);
    for m in ms.iter_mut().skip(6) {
        m.view = Some(blocks[..1].to_vec());
    }
    let RoundOutcome::Regenesis(rb) = run_regenesis_round(&ms, &ctx) else {
        panic!("round failed");
    };
    let losers: BTreeSet<PublicKey> = ms[6..].iter().map(|m| m.keys.public_key).collect();
    assert_eq!(rb.burned.keys().copied().collect::<BTreeSet<_>>(), losers);
    assert!(rb.burned.values().all(|c| *c == 7));
    assert_eq!(rb.valid_signature_count(), 6);
}

#[test]
fn split_committee_without_majority_fails() {
    let f = fixture(8);
    let blocks = epoch_blocks(&f, 1);
    let ctx = context(&f, 5);
    let mut ms = members(&f, 8, &blocks, 0);
    for m in ms.iter_mut().skip(4) {
        m.view = Some(blocks[..1].to_vec());
    }
    assert_eq!(
        run_regenesis_round(&ms, &ctx),
        RoundOutcome::EpochFailure { support: 4, needed: 5 }
    );
}

#[test]
fn committee_frequency_follows_reputation() {
    let reps: BTreeMap<PublicKey, f64> = (1..=5u64).map(|i| (generate_keypair(i).public_key, i as f64)).collect();
    let total: f64 = reps.values().sum();
    let trials = 50_000u64;
    let mut hits: BTreeMap<PublicKey, u64> = BTreeMap::new();
    for s in 0..trials {
        for k in select_committee(&reps, 1, s).unwrap() {
            *hits.entry(k).or_default() += 1;
        }
    }
    for (k, r) in &reps {
        let freq = hits.get(k).copied().unwrap_or(0) as f64 / trials as f64;
        assert!((freq - r / total).abs() < 0.01, "{freq} vs {}", r / total);
    }
}

#[test]
fn termination_tail_matches_monte_carlo() {
    let (k, k_m, theta) = (20usize, 12usize, 0.6);
    let exact = poe_termination_probability(&Theta::Homogeneous(theta), k, k_m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 100_000;
    let hits = (0..trials)
        .filter(|_| (0..k).filter(|_| rng.gen::<f64>() < theta).count() >= k_m)
        .count();
    let mc = hits as f64 / trials as f64;
    assert!((mc - exact).abs() < 0.01, "{mc} vs {exact}");
}

#[test]
fn heterogeneous_theta_tracks_monte_carlo() {
    let thetas: Vec<f64> = (0..100).map(|i| 0.4 + 0.5 * i as f64 / 99.0).collect();
    let approx = poe_termination_probability(&Theta::PerMember(thetas.clone()), 100, 60).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 20_000;
    let hits = (0..trials)
        .filter(|_| thetas.iter().filter(|t| rng.gen::<f64>() < **t).count() >= 60)
        .count();
    let mc = hits as f64 / trials as f64;
    assert!((mc - approx).abs() < 0.03, "{mc} vs {approx}");
}

#[test]
fn invalid_epoch_configs_are_rejected() {
    let base = EpochConfig::default();
    assert!(base.validate().is_ok());
    assert!(EpochConfig {
        quorum: 0,
        ..base.clone()
    }
    .validate()
    .is_err());
    assert!(EpochConfig {
        quorum: base.committee_size + 1,
        ..base.clone()
    }
    .validate()
    .is_err());
    assert!(EpochConfig {
        phi_d: 1.5,
        ..base.clone()
    }
    .validate()
    .is_err());
    assert!(EpochConfig { slots: 0, ..base }.validate().is_err());
}

proptest! {
    #[test]
    fn committees_are_deterministic_subsets(
        weights in prop::collection::vec(0.0f64..5.0, 1..30),
        k in 1usize..10,
        randomness in any::<u64>(),
    ) {
        let reps: BTreeMap<PublicKey, f64> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| (generate_keypair(i as u64 + 1).public_key, *w))
            .collect();
        let positive = reps.values().filter(|w| **w > 0.0).count();
        match select_committee(&reps, k, randomness) {
            Ok(c) => {
                prop_assert_eq!(c.len(), k);
                prop_assert!(c.iter().all(|pk| reps[pk] > 0.0));
                prop_assert_eq!(Ok(c.clone()), select_committee(&reps, k, randomness));
                let init = initiators(&c, randomness);
                prop_assert_eq!(init.len(), k.div_ceil(4));
            }
            Err(_) => prop_assert!(positive < k),
        }
    }

    #[test]
    fn termination_is_monotone_in_theta(a in 0.0f64..1.0, b in 0.0f64..1.0, k in 1usize..60, frac in 0.0f64..1.0) {
        let k_m = ((frac * k as f64) as usize).clamp(1, k);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p = |t| poe_termination_probability(&Theta::Homogeneous(t), k, k_m).unwrap();
        prop_assert!(p(lo) <= p(hi) + 1e-12);
        prop_assert!((0.0..=1.0).contains(&p(lo)));
    }
}
