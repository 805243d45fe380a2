use std::collections::BTreeSet;

use mneme::crypto::Digest;
use mneme::geo::Point;
use mneme::netsim::{
    broadcast, expected_neighbors, flood_all_origins, run_events, EventKind, EventLog, NodeId, Radio, SimConfig,
    SimWorld,
};
use proptest::prelude::*;

fn small(seed: u64) -> SimConfig {
    SimConfig {
        population: 150,
        duration: 60,
        seed,
        speed: 3.0,
        ..SimConfig::default()
    }
}

fn log_bytes(config: SimConfig) -> Vec<u8> {
    let mut log = EventLog::new(Vec::new()).unwrap();
    run_events(config, &mut log).unwrap();
    log.into_inner()
}

#[test]
fn identical_configs_give_identical_logs() {
    let a = log_bytes(small(9));
    assert_eq!(a, log_bytes(small(9)));
    assert_ne!(a, log_bytes(small(10)));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("slot,kind,node_a,node_b,payload_hash\n"));
}

fn pairs_in_range(world: &SimWorld) -> BTreeSet<(NodeId, NodeId)> {
    let pos = world.positions();
    let r = world.radius();
    let mut out = BTreeSet::new();
    for a in 0..pos.len() {
        if !world.node(a as NodeId).active {
            continue;
        }
        for b in a + 1..pos.len() {
            if world.node(b as NodeId).active && pos[a].distance(&pos[b]) <= r {
                out.insert((a as NodeId, b as NodeId));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn meets_and_leaves_bracket_contact(seed in any::<u64>(), churn in prop_oneof![Just(0.0), Just(0.5)]) {
        let mut world = SimWorld::new(SimConfig { churn_rate: churn, ..small(seed) }).unwrap();
        let mut open: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        let apply = |events: &[mneme::netsim::SimEvent], open: &mut BTreeSet<(NodeId, NodeId)>| {
            for e in events {
                assert!(e.a < e.b);
                match e.kind {
                    EventKind::Meet => assert!(open.insert((e.a, e.b)), "double meet"),
                    EventKind::Leave => assert!(open.remove(&(e.a, e.b)), "leave without meet"),
                    EventKind::Forward => {}
                }
            }
        };
        apply(&world.ensure_started(), &mut open);
        prop_assert_eq!(&open, &pairs_in_range(&world));
        for _ in 0..40 {
            let events = world.step();
            apply(&events, &mut open);
            prop_assert_eq!(&open, &pairs_in_range(&world));
        }
    }

    #[test]
    fn informed_set_only_grows(seed in any::<u64>(), p in 0.2f64..=1.0) {
        let mut world = SimWorld::new(SimConfig { forwarding_probability: p, ..small(seed) }).unwrap();
        let curve = broadcast(&mut world, 0, Digest::of(b"m"), 40, &mut |_| {});
        prop_assert!(curve.fractions.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(curve.fractions.len(), 41);
        let informed = curve.informed_at.iter().filter(|t| t.is_some()).count();
        prop_assert!((curve.final_fraction() - informed as f64 / 150.0).abs() < 1e-12);
    }
}

#[test]
fn mean_degree_follows_the_formula() {
    for n in [200usize, 500, 1000] {
        let seeds = 10;
        let total: f64 = (0..seeds)
            .map(|s| {
                let mut w = SimWorld::new(SimConfig {
                    population: n,
                    seed: s,
                    ..SimConfig::default()
                })
                .unwrap();
                w.ensure_started();
                w.mean_degree()
            })
            .sum();
        let mean = total / seeds as f64;
        let expected = expected_neighbors(n as f64, 0.1).unwrap();
        assert!((mean / expected - 1.0).abs() <= 0.10, "N={n}: {mean} vs {expected}");
    }
}

#[test]
fn corner_origins_need_longer_than_central_ones() {
    let mut compared = 0;
    for seed in 0..20u64 {
        let config = SimConfig {
            population: 1000,
            speed: 0.0,
            seed,
            ..SimConfig::default()
        };
        let mut world = SimWorld::new(config).unwrap();
        let pos = world.positions();
        let nearest = |p: Point| {
            (0..pos.len())
                .min_by(|a, b| pos[*a].distance(&p).total_cmp(&pos[*b].distance(&p)))
                .unwrap()
        };
        let corner = nearest(Point::new(0.0, 0.0));
        let center = nearest(Point::new(250.0, 250.0));
        let (origins, _) = flood_all_origins(&mut world, 200, 0);
        let delta = |id: usize| origins.iter().find(|o| o.origin as usize == id).unwrap().delta;
        if let (Some(c), Some(m)) = (delta(corner), delta(center)) {
            assert!(c >= m, "seed {seed}: corner {c} < center {m}");
            compared += 1;
        }
    }
    assert!(compared >= 10, "only {compared} connected layouts");
}

#[test]
fn radios_scale_contact_counts() {
    let count = |radio| {
        let mut w = SimWorld::new(SimConfig {
            population: 300,
            radio,
            ..SimConfig::default()
        })
        .unwrap();
        w.ensure_started();
        w.mean_degree()
    };
    let (bt, wifi, lte) = (
        count(Radio::Bluetooth),
        count(Radio::WifiDirect),
        count(Radio::LteDirect),
    );
    assert!(bt < wifi && wifi < lte);
}
