//! Executes a scenario seed by seed and writes its tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use mneme::adversary::{forge_block, simulate_collusion, simulate_double_spend, AttackReport, Strategy};
use mneme::analysis::{
    delivery_trial, delta_position_table, delta_rule_trial, event_count_table, mean_std, signer_distance_run,
    signer_distance_table, silent_table, spread_table, termination_trial, unique_meets_table, Table,
};
use mneme::crypto::{Digest, KeyPair, PrfKey, PublicKey};
use mneme::ledger::{Genesis, LedgerView, Transaction};
use mneme::netsim::{
    broadcast, measure_delta, node_keypair, stream_seed, EventCounts, EventLog, NodeId, SimConfig, SimWorld,
    SpreadCurve, UniqueMeets,
};
use mneme::poc::{BlockAction, PocNode};
use mneme::poe::{select_committee, MemberState, RoundContext, SummaryParams};
use mneme::{Credits, Slot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scenario::{Experiment, Scenario, Wait};
use crate::CliError;

/// What one seed produced.
struct SeedOutput {
    seed: u64,
    /// Per-seed CSV rows, without the leading seed column.
    rows: Vec<String>,
    data: SeedData,
    violations: Vec<String>,
}

enum SeedData {
    Spread(Vec<(usize, SpreadCurve)>),
    Events(Vec<(usize, EventCounts)>),
    Delta(Vec<mneme::netsim::OriginDelta>),
    DeltaRule(f64),
    Signer(Vec<mneme::analysis::SignerCurve>),
    Meets(Vec<Vec<f64>>),
    Silent(Vec<f64>),
    Termination(bool),
    Attack { success: bool, violation: bool },
}

/// Files written and headline numbers of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub tables: Vec<Table>,
    pub violations: Vec<String>,
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to a temporary file next to `path` and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn runs_header(experiment: &Experiment) -> &'static str {
    match experiment {
        Experiment::Spread { .. } => "seed,population,slot,fraction",
        Experiment::Events { .. } => "seed,population,meet,leave,forward",
        Experiment::Delta { .. } => "seed,origin,x,y,delta,unreached",
        Experiment::DeltaRule { .. } => "seed,origin,receiver,transfer,accept_at,fraction",
        Experiment::SignerDistance { .. } => "seed,rho,slot,signers,avg_distance",
        Experiment::UniqueMeets { .. } => "seed,duration,node,fraction",
        Experiment::Silent { .. } => "seed,silent_fraction,delivery",
        Experiment::Termination => "seed,initiator,met,decided_at,terminated",
        Experiment::Attack { .. } => "seed,strategy,success,violation,detail",
    }
}

fn opt(v: Option<Slot>) -> String {
    v.map_or("inf".into(), |s| s.to_string())
}

/// Runs every seed of `scenario` on `parallel` workers and writes the
/// merged outputs under `out`.
pub fn run(scenario: &Scenario, out: &Path, parallel: usize) -> Result<RunSummary, CliError> {
    let seeds_dir = out.join("runs");
    fs::create_dir_all(&seeds_dir).map_err(|e| io_err(&seeds_dir, e))?;
    if scenario.event_log {
        let dir = out.join("events");
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let header = runs_header(&scenario.experiment);
    let outputs: Vec<SeedOutput> = pool.install(|| {
        scenario
            .seeds
            .par_iter()
            .map(|seed| {
                let o = run_seed(scenario, *seed, out)?;
                let mut text = String::from(header);
                text.push('\n');
                for r in &o.rows {
                    let _ = writeln!(text, "{seed},{r}");
                }
                write_atomic(&seeds_dir.join(format!("seed-{seed}.csv")), text.as_bytes())?;
                Ok(o)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    merge(scenario, out, header, outputs)
}

fn merge(scenario: &Scenario, out: &Path, header: &str, outputs: Vec<SeedOutput>) -> Result<RunSummary, CliError> {
    let mut files = Vec::new();
    let mut runs = String::from(header);
    runs.push('\n');
    for o in &outputs {
        for r in &o.rows {
            let _ = writeln!(runs, "{},{r}", o.seed);
        }
    }
    let runs_path = out.join("runs.csv");
    write_atomic(&runs_path, runs.as_bytes())?;
    files.push(runs_path);
    let violations: Vec<String> = outputs.iter().flat_map(|o| o.violations.iter().cloned()).collect();
    let tables = aggregate(scenario, &outputs);
    for t in &tables {
        let path = out.join(format!("{}.csv", t.name));
        write_atomic(&path, t.to_csv().as_bytes())?;
        files.push(path);
    }
    Ok(RunSummary {
        files,
        tables,
        violations,
    })
}

fn aggregate(scenario: &Scenario, outputs: &[SeedOutput]) -> Vec<Table> {
    let data = || outputs.iter().map(|o| &o.data);
    match &scenario.experiment {
        Experiment::Spread { .. } => {
            let mut by_pop: BTreeMap<usize, Vec<SpreadCurve>> = BTreeMap::new();
            for d in data() {
                if let SeedData::Spread(curves) = d {
                    for (n, c) in curves {
                        by_pop.entry(*n).or_default().push(c.clone());
                    }
                }
            }
            let mut t = Table::new("spread", &["population", "slot", "mean", "std"]);
            let mut finals = Table::new("spread_final", &["population", "final_mean", "final_std"]);
            for (n, curves) in &by_pop {
                for row in spread_table(curves).rows {
                    t.push(vec![*n as f64, row[0], row[1], row[2]]);
                }
                let (m, s) = mean_std(&curves.iter().map(SpreadCurve::final_fraction).collect::<Vec<_>>());
                finals.push(vec![*n as f64, m, s]);
            }
            vec![t, finals]
        }
        Experiment::Events { .. } => {
            let mut by_pop: BTreeMap<usize, Vec<EventCounts>> = BTreeMap::new();
            for d in data() {
                if let SeedData::Events(counts) = d {
                    for (n, c) in counts {
                        by_pop.entry(*n).or_default().push(*c);
                    }
                }
            }
            vec![event_count_table(&by_pop.into_iter().collect::<Vec<_>>())]
        }
        Experiment::Delta { bins, .. } => {
            let origins: Vec<_> = data()
                .filter_map(|d| match d {
                    SeedData::Delta(o) => Some(o.clone()),
                    _ => None,
                })
                .flatten()
                .collect();
            let mut summary = Table::new("delta", &["seed", "delta"]);
            for o in outputs {
                if let SeedData::Delta(origins) = &o.data {
                    let worst = origins
                        .iter()
                        .map(|x| x.delta.map_or(f64::INFINITY, |d| d as f64))
                        .fold(0.0, f64::max);
                    summary.push(vec![o.seed as f64, worst]);
                }
            }
            vec![delta_position_table(&origins, &scenario.sim.area, *bins), summary]
        }
        Experiment::DeltaRule { multiplier, .. } => {
            let xs: Vec<f64> = data()
                .filter_map(|d| match d {
                    SeedData::DeltaRule(f) => Some(*f),
                    _ => None,
                })
                .collect();
            let (m, s) = mean_std(&xs);
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let mut t = Table::new(
                "delta_rule",
                &["multiplier", "fraction_mean", "fraction_std", "fraction_min"],
            );
            t.push(vec![*multiplier as f64, m, s, min]);
            vec![t]
        }
        Experiment::SignerDistance { rhos, by_count } => {
            let mut per_rho: Vec<Vec<_>> = vec![Vec::new(); rhos.len()];
            for d in data() {
                if let SeedData::Signer(curves) = d {
                    for (i, c) in curves.iter().enumerate() {
                        per_rho[i].push(c.clone());
                    }
                }
            }
            vec![signer_distance_table(rhos, &per_rho, *by_count)]
        }
        Experiment::UniqueMeets { durations } => {
            let mut pooled: Vec<(Slot, Vec<f64>)> = durations.iter().map(|d| (*d, Vec::new())).collect();
            for d in data() {
                if let SeedData::Meets(per_duration) = d {
                    for (i, fr) in per_duration.iter().enumerate() {
                        pooled[i].1.extend_from_slice(fr);
                    }
                }
            }
            vec![unique_meets_table(&pooled)]
        }
        Experiment::Silent { fractions } => {
            let mut rows: Vec<(f64, Vec<f64>)> = fractions.iter().map(|f| (*f, Vec::new())).collect();
            for d in data() {
                if let SeedData::Silent(xs) = d {
                    for (i, x) in xs.iter().enumerate() {
                        rows[i].1.push(*x);
                    }
                }
            }
            vec![silent_table(&rows)]
        }
        Experiment::Termination => {
            let done = data().filter(|d| matches!(d, SeedData::Termination(true))).count();
            let mut t = Table::new(
                "termination",
                &["epoch_slots", "committee", "quorum", "runs", "terminated", "frequency"],
            );
            let runs = outputs.len();
            t.push(vec![
                scenario.poe.slots as f64,
                scenario.poe.committee_size as f64,
                scenario.poe.quorum as f64,
                runs as f64,
                done as f64,
                done as f64 / runs as f64,
            ]);
            vec![t]
        }
        Experiment::Attack { .. } => {
            let (mut successes, mut violations) = (0, 0);
            for d in data() {
                if let SeedData::Attack { success, violation } = d {
                    successes += usize::from(*success);
                    violations += usize::from(*violation);
                }
            }
            let report = AttackReport {
                strategy: scenario.adversary.strategy,
                fraction: scenario.adversary.fraction,
                runs: outputs.len(),
                successes,
                violations,
            };
            let mut t = Table::new("attack", &["fraction", "runs", "successes", "violations"]);
            t.push(vec![
                report.fraction,
                report.runs as f64,
                report.successes as f64,
                report.violations as f64,
            ]);
            vec![t]
        }
    }
}

fn seeded(scenario: &Scenario, seed: u64) -> SimConfig {
    SimConfig {
        seed,
        ..scenario.sim.clone()
    }
}

fn event_log_file(out: &Path, seed: u64, label: &str) -> Result<(tempfile::NamedTempFile, PathBuf), CliError> {
    let dir = out.join("events");
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err(&dir, e))?;
    Ok((tmp, dir.join(format!("seed-{seed}-{label}.csv"))))
}

/// One broadcast in a world of `n` nodes, streaming its events to disk when
/// the scenario asks for event logs.
fn spread_once(
    scenario: &Scenario,
    base: &SimConfig,
    n: usize,
    origin: Option<NodeId>,
    out: &Path,
) -> Result<SpreadCurve, CliError> {
    let seed = base.seed;
    let mut world = SimWorld::new(SimConfig {
        population: n,
        ..base.clone()
    })
    .map_err(CliError::runtime)?;
    let from =
        origin.unwrap_or_else(|| ChaCha8Rng::seed_from_u64(stream_seed(seed, "origin")).gen_range(0..n as NodeId));
    let msg = Digest::of(&seed.to_le_bytes());
    if !scenario.event_log {
        return Ok(broadcast(&mut world, from, msg, base.duration, &mut |_| {}));
    }
    let (tmp, path) = event_log_file(out, seed, &format!("n{n}"))?;
    let mut log = EventLog::new(BufWriter::new(tmp)).map_err(|e| io_err(&path, e))?;
    let mut failed = None;
    let curve = broadcast(&mut world, from, msg, base.duration, &mut |e| {
        if let Err(err) = log.record(e) {
            failed.get_or_insert(err);
        }
    });
    if let Some(err) = failed {
        return Err(io_err(&path, err));
    }
    let tmp = log
        .into_inner()
        .into_inner()
        .map_err(|e| io_err(&path, e.into_error()))?;
    tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;
    Ok(curve)
}

fn run_seed(scenario: &Scenario, seed: u64, out: &Path) -> Result<SeedOutput, CliError> {
    let base = seeded(scenario, seed);
    let duration = base.duration;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let data = match &scenario.experiment {
        Experiment::Spread { populations, origin } => {
            let pops = if populations.is_empty() {
                vec![base.population]
            } else {
                populations.clone()
            };
            let mut curves = Vec::new();
            for n in pops {
                let curve = spread_once(scenario, &base, n, *origin, out)?;
                if curve.fractions.windows(2).any(|w| w[1] < w[0]) && base.churn_rate == 0.0 {
                    violations.push(format!("seed {seed}: informed fraction decreased (N={n})"));
                }
                for (slot, f) in curve.fractions.iter().enumerate() {
                    rows.push(format!("{n},{slot},{f:.6}"));
                }
                curves.push((n, curve));
            }
            SeedData::Spread(curves)
        }
        Experiment::Events { populations } => {
            let pops = if populations.is_empty() {
                vec![base.population]
            } else {
                populations.clone()
            };
            let mut counts = Vec::new();
            for n in pops {
                let c = spread_once(scenario, &base, n, None, out)?.events;
                rows.push(format!("{n},{},{},{}", c.meet, c.leave, c.forward));
                counts.push((n, c));
            }
            SeedData::Events(counts)
        }
        Experiment::Delta { max_slots, .. } => {
            let report = measure_delta(&base, 1, *max_slots).map_err(CliError::runtime)?;
            for o in &report.per_origin {
                let p = scenario.sim.area.normalize(&o.position);
                rows.push(format!(
                    "{},{:.6},{:.6},{},{}",
                    o.origin,
                    p.x,
                    p.y,
                    opt(o.delta),
                    o.unreached
                ));
            }
            SeedData::Delta(report.per_origin)
        }
        Experiment::DeltaRule { multiplier, max_slots } => {
            let t = delta_rule_trial(&base, *multiplier, *max_slots).map_err(CliError::runtime)?;
            rows.push(format!(
                "{},{},{},{},{:.6}",
                t.origin,
                t.receiver,
                opt(t.transfer),
                opt(t.accept_at),
                t.fraction
            ));
            SeedData::DeltaRule(t.fraction)
        }
        Experiment::SignerDistance { rhos, .. } => {
            let mut curves = Vec::new();
            for rho in rhos {
                let mut world = SimWorld::new(base.clone()).map_err(CliError::runtime)?;
                let origin =
                    ChaCha8Rng::seed_from_u64(stream_seed(seed, "origin")).gen_range(0..base.population as NodeId);
                let c = signer_distance_run(&mut world, origin, *rho, duration, scenario.poc.backoff)
                    .map_err(CliError::runtime)?;
                for (slot, (n, d)) in c.signers_by_slot.iter().zip(&c.avg_by_slot).enumerate() {
                    rows.push(format!("{rho},{slot},{n},{d:.6}"));
                }
                curves.push(c);
            }
            SeedData::Signer(curves)
        }
        Experiment::UniqueMeets { durations } => {
            let mut world = SimWorld::new(base.clone()).map_err(CliError::runtime)?;
            let mut meets = UniqueMeets::new(base.population);
            meets.observe(&world.ensure_started());
            let mut sorted = durations.clone();
            sorted.sort_unstable();
            let mut snapshots: BTreeMap<Slot, Vec<f64>> = BTreeMap::new();
            let mut slot = 0;
            for d in sorted {
                while slot < d {
                    meets.observe(&world.step());
                    slot += 1;
                }
                snapshots.insert(d, meets.fractions());
            }
            let per_duration: Vec<Vec<f64>> = durations.iter().map(|d| snapshots[d].clone()).collect();
            for (d, fr) in durations.iter().zip(&per_duration) {
                for (node, f) in fr.iter().enumerate() {
                    rows.push(format!("{d},{node},{f:.6}"));
                }
            }
            SeedData::Meets(per_duration)
        }
        Experiment::Silent { fractions } => {
            let mut xs = Vec::new();
            for f in fractions {
                let cfg = SimConfig {
                    adversary: mneme::adversary::AdversaryConfig::silent(*f),
                    ..base.clone()
                };
                let x = delivery_trial(&cfg, duration)
                    .map_err(CliError::runtime)?
                    .final_fraction();
                rows.push(format!("{f},{x:.6}"));
                xs.push(x);
            }
            SeedData::Silent(xs)
        }
        Experiment::Termination => {
            let t = termination_trial(
                &base,
                scenario.poe.slots,
                scenario.poe.committee_size,
                scenario.poe.quorum,
            )
            .map_err(CliError::runtime)?;
            rows.push(format!(
                "{},{},{},{}",
                t.initiator,
                t.met,
                t.decided_at,
                u8::from(t.terminated)
            ));
            SeedData::Termination(t.terminated)
        }
        Experiment::Attack { wait } => {
            let (success, violation, detail) = run_attack(scenario, &base, *wait)?;
            if violation {
                violations.push(format!("seed {seed}: {detail}"));
            }
            let name = strategy_name(scenario.adversary.strategy);
            rows.push(format!("{name},{},{},{detail}", u8::from(success), u8::from(violation)));
            SeedData::Attack { success, violation }
        }
    };
    Ok(SeedOutput {
        seed,
        rows,
        data,
        violations,
    })
}

fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::None => "none",
        Strategy::Silent => "silent",
        Strategy::DoubleSpend => "double_spend",
        Strategy::Wormhole => "wormhole",
        Strategy::PoeCollusion => "poe_collusion",
        Strategy::FakePoc => "fake_poc",
    }
}

fn keys_of(config: &SimConfig) -> Vec<KeyPair> {
    (0..config.population as NodeId)
        .map(|i| node_keypair(config.seed, i))
        .collect()
}

/// Returns `(attack succeeded, safety invariant broken, detail)`.
fn run_attack(scenario: &Scenario, config: &SimConfig, wait: Wait) -> Result<(bool, bool, String), CliError> {
    match scenario.adversary.strategy {
        Strategy::None => Err(CliError::Config("no adversary strategy".into())),
        Strategy::Silent => {
            let f = delivery_trial(config, config.duration)
                .map_err(CliError::runtime)?
                .final_fraction();
            Ok((f < 0.95, false, format!("delivery={f:.6}")))
        }
        Strategy::DoubleSpend | Strategy::Wormhole => {
            let rule: fn(Slot) -> Slot = match wait {
                Wait::Delta => |d| d,
                Wait::Immediate => |_| 0,
            };
            let o = simulate_double_spend(config, rule).map_err(CliError::runtime)?;
            let guarded = wait == Wait::Delta && o.honest_connected;
            let detail = format!(
                "connected={} delta={} victims={}/{} accepted={}/{}",
                u8::from(o.honest_connected),
                opt(o.honest_connected.then_some(o.delta)),
                o.victims.0,
                o.victims.1,
                u8::from(o.accepted.0),
                u8::from(o.accepted.1)
            );
            Ok((o.violation(), guarded && o.violation(), detail))
        }
        Strategy::PoeCollusion => poe_collusion(scenario, config),
        Strategy::FakePoc => fake_poc(scenario, config),
    }
}

fn malicious_keys(config: &SimConfig, keys: &[KeyPair]) -> Result<(SimWorld, Vec<KeyPair>), CliError> {
    let world = SimWorld::new(config.clone()).map_err(CliError::runtime)?;
    let bad: Vec<KeyPair> = (0..keys.len())
        .filter(|i| world.is_malicious(*i as NodeId))
        .map(|i| keys[i].clone())
        .collect();
    Ok((world, bad))
}

fn genesis_for(keys: &[KeyPair], seed: u64) -> Genesis {
    let alloc: BTreeMap<PublicKey, Credits> = keys.iter().map(|k| (k.public_key, 100)).collect();
    Genesis::new(
        PrfKey::derive(seed),
        alloc,
        Digest::of(&seed.to_le_bytes()).prefix_u64(),
    )
}

/// `block_size` honest transactions paying `thief` from the genesis.
fn theft(keys: &[KeyPair], honest: &[usize], thief: PublicKey, genesis: Digest, block_size: usize) -> Vec<Transaction> {
    (0..block_size)
        .map(|i| {
            Transaction::normal(
                keys[honest[i % honest.len()]].public_key,
                thief,
                10,
                [genesis],
                i as u64,
            )
        })
        .collect()
}

fn poe_collusion(scenario: &Scenario, config: &SimConfig) -> Result<(bool, bool, String), CliError> {
    let keys = keys_of(config);
    let (world, bad) = malicious_keys(config, &keys)?;
    let honest: Vec<usize> = (0..keys.len()).filter(|i| !world.is_malicious(*i as NodeId)).collect();
    let genesis = genesis_for(&keys, config.seed);
    let g = genesis.hash();
    let committee = select_committee(&genesis.reputations, scenario.poe.committee_size, genesis.randomness)
        .map_err(CliError::runtime)?;
    let bad_set: BTreeSet<PublicKey> = bad.iter().map(|k| k.public_key).collect();
    let colluding: BTreeSet<PublicKey> = committee.intersection(&bad_set).copied().collect();
    let thief = bad[0].public_key;
    let forgers = &bad[..scenario.poc.min_signatures.max(2).min(bad.len())];
    let forged = forge_block(
        forgers,
        theft(&keys, &honest, thief, g, scenario.poc.block_size),
        BTreeSet::from([g]),
        &genesis.prf_key,
        1,
        &scenario.sim.area,
        &scenario.poc,
        &genesis.reputations,
    )
    .map_err(CliError::runtime)?;
    let by_key: BTreeMap<PublicKey, &KeyPair> = keys.iter().map(|k| (k.public_key, k)).collect();
    let members: Vec<MemberState> = committee
        .iter()
        .map(|pk| MemberState {
            keys: by_key[pk].clone(),
            view: None,
            deposit: 1,
        })
        .collect();
    let ctx = RoundContext {
        epoch: 1,
        prev_regenesis: g,
        config: scenario.poe.clone(),
        committee: committee.clone(),
        randomness: genesis.randomness,
        reputations: genesis.reputations.clone(),
        forwarders: BTreeSet::new(),
        summary: SummaryParams {
            phi_c: genesis.phi_c,
            block_size: scenario.poc.block_size,
            anchor: g,
            created_at: scenario.poe.slots,
        },
    };
    let out = simulate_collusion(&members, &colluding, &[], &forged, &thief, &ctx);
    let violation = out.stolen && out.colluders < out.quorum;
    let detail = format!(
        "colluders={} honest={} quorum={} terminated={} burned={}",
        out.colluders,
        out.honest,
        out.quorum,
        u8::from(out.terminated),
        out.burned_colluders
    );
    Ok((out.stolen, violation, detail))
}

fn fake_poc(scenario: &Scenario, config: &SimConfig) -> Result<(bool, bool, String), CliError> {
    let keys = keys_of(config);
    let (world, bad) = malicious_keys(config, &keys)?;
    let honest: Vec<usize> = (0..keys.len()).filter(|i| !world.is_malicious(*i as NodeId)).collect();
    let genesis = genesis_for(&keys, config.seed);
    let g = genesis.hash();
    let victim =
        &keys[honest[ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "victim")).gen_range(0..honest.len())]];
    let forgers = &bad[..scenario.poc.min_signatures.max(2).min(bad.len())];
    let block = forge_block(
        forgers,
        theft(&keys, &honest, bad[0].public_key, g, scenario.poc.block_size),
        BTreeSet::from([g]),
        &genesis.prf_key,
        1,
        &scenario.sim.area,
        &scenario.poc,
        &genesis.reputations,
    )
    .map_err(CliError::runtime)?;
    let view = LedgerView::new(victim.public_key, genesis);
    let mut node = PocNode::new(victim.clone(), scenario.poc.clone(), view);
    let action = node.on_block_received(block, 1);
    let accepted = matches!(action, BlockAction::VerifyAndAdd(_));
    let label = match action {
        BlockAction::VerifyAndAdd(_) => "verified",
        BlockAction::SignAndForward(_) => "signed",
        BlockAction::ForwardOnly { .. } => "forwarded",
        BlockAction::Rebroadcast(_) => "rebroadcast",
        BlockAction::Ignore(_) => "ignored",
    };
    Ok((accepted, false, format!("forgers={} outcome={label}", forgers.len())))
}

impl CliError {
    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}
