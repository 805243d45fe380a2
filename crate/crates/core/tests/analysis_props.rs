use mneme::analysis::{
    candlestick, fit_delta, mean_std, poc_feasibility_exhaustive, poc_feasibility_heuristic, probe_static_world,
    signer_distance_run, AnalysisError, Feasibility, ProbeRecord,
};
use mneme::geo::Point;
use mneme::netsim::{run_unique_meets, SimConfig, SimWorld};
use proptest::prelude::*;

fn node() -> impl Strategy<Value = (Point, bool)> {
    (0.0f64..500.0, 0.0f64..500.0, prop::bool::weighted(0.8)).prop_map(|(x, y, c)| (Point::new(x, y), c))
}

fn avg_distance(nodes: &[(Point, bool)], members: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            total += nodes[*a].0.distance(&nodes[*b].0);
            pairs += 1;
        }
    }
    total / pairs as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn heuristic_agrees_with_exhaustive_search(
        nodes in prop::collection::vec(node(), 0..=20),
        m_rs in 2usize..7,
        m_d in 50.0f64..300.0,
    ) {
        let exact = poc_feasibility_exhaustive(&nodes, m_rs, m_d).unwrap();
        let heur = poc_feasibility_heuristic(&nodes, m_rs, m_d).unwrap();
        prop_assert_eq!(exact.is_feasible(), heur.is_feasible());
        for answer in [&exact, &heur] {
            if let Feasibility::Feasible(set) = answer {
                prop_assert!(set.members.len() >= m_rs);
                prop_assert!(set.members.iter().all(|i| nodes[*i].1));
                prop_assert!((avg_distance(&nodes, &set.members) - set.avg_distance).abs() < 1e-9);
                prop_assert!(set.avg_distance >= m_d);
            }
        }
        if let (Feasibility::Feasible(e), Feasibility::Feasible(h)) = (&exact, &heur) {
            prop_assert!(e.avg_distance <= h.avg_distance + 1e-9);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_the_design(
        points in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..20.0, 0.0f64..20.0), 3..30),
        me in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let me = Point::new(me.0, me.1);
        let probes: Vec<ProbeRecord> = points
            .iter()
            .map(|(x, y, out, back)| ProbeRecord {
                a: 0.0,
                b: *out,
                c: *out,
                reply_received: out + back,
                trusted_location: Point::new(*x, *y),
            })
            .collect();
        let fit = match fit_delta(&probes, me) {
            Ok(f) => f,
            Err(AnalysisError::DegenerateDesign) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let (mut r0, mut r1, mut scale) = (0.0, 0.0, 0.0);
        for p in &probes {
            let d = p.trusted_location.distance(&me);
            let r = p.one_way() - fit.model.at(d);
            r0 += r;
            r1 += r * d;
            scale += p.one_way().abs() * (1.0 + d);
        }
        prop_assert!(r0.abs() <= 1e-8 * scale.max(1.0), "{r0}");
        prop_assert!(r1.abs() <= 1e-8 * scale.max(1.0), "{r1}");
    }
}

#[test]
fn step_five_at_the_center() {
    let probes = [0.1, 0.3].map(|d| ProbeRecord {
        a: 0.0,
        b: 2.0 * d + 1.0,
        c: 2.0 * d + 1.0,
        reply_received: 2.0 * (2.0 * d + 1.0),
        trusted_location: Point::new(0.5 + d, 0.5),
    });
    let fit = fit_delta(&probes, Point::new(0.5, 0.5)).unwrap();
    assert!((fit.model.p - 2.0).abs() < 1e-9 && (fit.model.q - 1.0).abs() < 1e-9);
    assert!((fit.delta - 2.0).abs() < 1e-9);
    assert!((fit.delta_corner - (2.0 * 0.5f64.sqrt() + 1.0)).abs() < 1e-9);
}

#[test]
fn out_of_order_probe_is_rejected() {
    let bad = ProbeRecord {
        a: 3.0,
        b: 1.0,
        c: 2.0,
        reply_received: 4.0,
        trusted_location: Point::new(0.1, 0.1),
    };
    assert_eq!(
        fit_delta(&[bad, bad], Point::new(0.0, 0.0)),
        Err(AnalysisError::BadProbe(0))
    );
}

/// The least-squares line follows mean hop time, so the estimate sits below
/// the farthest node in roughly one run in five.
#[test]
#[ignore = "finding: fitted delta bounds the worst delivery slot in about 78% of runs, short of 95%"]
fn fitted_delta_bounds_the_worst_case() {
    let (mut covered, mut runs) = (0, 0);
    for seed in 0..100u64 {
        let cfg = SimConfig {
            population: 1000,
            seed,
            ..SimConfig::default()
        };
        let (probes, me, worst) = probe_static_world(&cfg, 0, 12).unwrap();
        let Some(worst) = worst else { continue };
        let Ok(fit) = fit_delta(&probes, me) else { continue };
        runs += 1;
        if fit.delta >= worst as f64 {
            covered += 1;
        }
    }
    let share = covered as f64 / runs as f64;
    println!("fitted delta covers the worst case in {covered}/{runs} runs");
    assert!(share >= 0.95, "{share}");
}

#[test]
fn denser_signing_keeps_signers_closer_at_equal_count() {
    let count = 20;
    let mut means = Vec::new();
    for rho in [0.1, 0.6] {
        let xs: Vec<f64> = (0..10u64)
            .map(|seed| {
                let mut w = SimWorld::new(SimConfig {
                    seed,
                    ..SimConfig::default()
                })
                .unwrap();
                let c = signer_distance_run(&mut w, 0, rho, 40, 2).unwrap();
                c.avg_by_count[count]
            })
            .collect();
        means.push(mean_std(&xs).0);
    }
    assert!(means[1] < means[0], "{means:?}");
}

#[test]
fn long_epochs_let_everyone_meet_five_percent() {
    let mut w = SimWorld::new(SimConfig {
        seed: 1,
        ..SimConfig::default()
    })
    .unwrap();
    let fractions = run_unique_meets(&mut w, 5000).fractions();
    let [min, q25, mean, q75, max] = candlestick(&fractions).unwrap();
    println!("unique meets after 5000 slots: min {min:.3} q25 {q25:.3} mean {mean:.3} q75 {q75:.3} max {max:.3}");
    assert!(min >= 0.05, "{min}");
}
