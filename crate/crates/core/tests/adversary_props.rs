use std::collections::BTreeSet;

use mneme::adversary::{forge_block, p_credit_stealing_bound, simulate_collusion, AdversaryConfig, Strategy};
use mneme::analysis::delivery_trial;
use mneme::crypto::{generate_keypair, KeyPair, PrfKey, PublicKey};
use mneme::geo::Area;
use mneme::ledger::{Block, Genesis, Transaction};
use mneme::netsim::{SimConfig, SimWorld};
use mneme::poc::PocParams;
use mneme::poe::{EpochConfig, MemberState, RoundContext, SummaryParams};

#[test]
fn silence_never_helps_delivery() {
    let fractions = [0.0, 0.5, 0.9, 0.99];
    let seeds = 10u64;
    let means: Vec<f64> = fractions
        .iter()
        .map(|f| {
            (0..seeds)
                .map(|seed| {
                    let cfg = SimConfig {
                        seed,
                        adversary: AdversaryConfig::silent(*f),
                        ..SimConfig::default()
                    };
                    delivery_trial(&cfg, 100).unwrap().final_fraction()
                })
                .sum::<f64>()
                / seeds as f64
        })
        .collect();
    println!("delivery by silent fraction {fractions:?}: {means:?}");
    assert!(means.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{means:?}");
    assert!(means[0] >= 0.99);
}

#[test]
fn silent_nodes_are_the_sampled_fraction() {
    for f in [0.0, 0.25, 0.5] {
        let w = SimWorld::new(SimConfig {
            population: 400,
            adversary: AdversaryConfig::silent(f),
            ..SimConfig::default()
        })
        .unwrap();
        let silent = (0..400).filter(|i| w.is_silent(*i)).count();
        assert_eq!(silent, (f * 400.0f64).round() as usize);
    }
}

struct Committee {
    keys: Vec<KeyPair>,
    genesis: Genesis,
}

fn committee(k: usize) -> Committee {
    let keys: Vec<KeyPair> = (1..=k as u64).map(generate_keypair).collect();
    let genesis = Genesis::new(PrfKey::derive(2), keys.iter().map(|k| (k.public_key, 50)).collect(), 9);
    Committee { keys, genesis }
}

fn context(c: &Committee, quorum: usize) -> RoundContext {
    let members: BTreeSet<PublicKey> = c.keys.iter().map(|k| k.public_key).collect();
    RoundContext {
        epoch: 1,
        prev_regenesis: c.genesis.hash(),
        config: EpochConfig {
            committee_size: members.len(),
            quorum,
            ..EpochConfig::default()
        },
        committee: members,
        randomness: 5,
        reputations: c.genesis.reputations.clone(),
        forwarders: BTreeSet::new(),
        summary: SummaryParams {
            phi_c: 0.5,
            block_size: 4,
            anchor: c.genesis.hash(),
            created_at: 500,
        },
    }
}

fn forged(c: &Committee, colluders: &[KeyPair], thief: PublicKey) -> Block {
    let g = c.genesis.hash();
    let txs = c.keys[..4]
        .iter()
        .enumerate()
        .map(|(i, victim)| Transaction::normal(victim.public_key, thief, 40, [g], 900 + i as u64))
        .collect();
    forge_block(
        colluders,
        txs,
        BTreeSet::from([g]),
        &c.genesis.prf_key,
        10,
        &Area::default(),
        &PocParams::default(),
        &c.genesis.reputations,
    )
    .unwrap()
}

#[test]
fn stealing_needs_a_colluding_quorum() {
    let (k, quorum) = (10usize, 6usize);
    let c = committee(k);
    let thief = generate_keypair(500).public_key;
    let ctx = context(&c, quorum);
    for m in 2..=k {
        let colluders = &c.keys[k - m..];
        let colluding: BTreeSet<PublicKey> = colluders.iter().map(|k| k.public_key).collect();
        let members: Vec<MemberState> = c
            .keys
            .iter()
            .map(|k| MemberState {
                keys: k.clone(),
                view: None,
                deposit: 3,
            })
            .collect();
        let out = simulate_collusion(&members, &colluding, &[], &forged(&c, colluders, thief), &thief, &ctx);
        assert_eq!(out.colluders, m);
        assert_eq!(out.stolen, m >= quorum, "m={m}");
        assert_eq!(out.terminated, m >= quorum || k - m >= quorum, "m={m}");
        if k - m >= quorum {
            assert_eq!(out.burned_colluders, m);
        }
    }
}

#[test]
fn exact_tail_against_the_printed_bound() {
    let mut checked = 0;
    let mut violations = Vec::new();
    for n in [100u64, 200, 500, 1000] {
        for k in (2..=n / 10).step_by(4) {
            for m in (0..=n / 2).step_by(10) {
                let b = p_credit_stealing_bound(n, k, m).unwrap();
                assert!(b.exact >= 0.0 && b.exact <= 1.0);
                checked += 1;
                if b.exact_log2 > b.printed_log2 + 1e-9 {
                    violations.push((n, k, m, b.exact_log2, b.printed_log2));
                }
            }
        }
    }
    println!(
        "exact tail above the printed bound in {}/{checked} cases",
        violations.len()
    );
    for v in violations.iter().take(5) {
        println!(
            "  N={} K={} M={}: exact 2^{:.1}, printed 2^{:.1}",
            v.0, v.1, v.2, v.3, v.4
        );
    }
    let first = p_credit_stealing_bound(100, 10, 10).unwrap();
    assert!(first.exact <= first.printed());
    assert_eq!(p_credit_stealing_bound(100, 10, 0).unwrap().exact, 0.0);
}

#[test]
fn adversary_configs_parse_and_validate() {
    let cfg: AdversaryConfig =
        serde_json::from_str(r#"{"fraction":0.1,"strategy":"wormhole","wormhole_links":[[1,2]]}"#).unwrap();
    assert_eq!(cfg.strategy, Strategy::Wormhole);
    assert!(cfg.validate(100, 5).is_ok());
    assert!(cfg.validate(2, 5).is_err());
    assert!(serde_json::from_str::<AdversaryConfig>(r#"{"fraction":0.1,"typo":1}"#).is_err());
    assert!(AdversaryConfig::silent(1.0).validate(100, 5).is_err());
}
