//! Byzantine strategies and the analytic attack bounds.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};
use thiserror::Error;

use crate::crypto::{Digest, KeyPair, PrfKey, PublicKey};
use crate::geo::{Area, Point};
use crate::ledger::{Block, Signer, Transaction};
use crate::netsim::{stream_seed, EventKind, NodeId, SimConfig, SimEvent, SimWorld};
use crate::poc::{prove_context, ContextProof, PocError, PocParams};
use crate::poe::{run_regenesis_round, MemberState, RoundContext, RoundOutcome};
use crate::{Credits, Slot};

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("domain error: {0}")]
    DomainError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    None,
    Silent,
    DoubleSpend,
    Wormhole,
    PoeCollusion,
    FakePoc,
}

impl Strategy {
    /// Strategies that need enough colluders to sign blocks themselves.
    pub fn forges_blocks(self) -> bool {
        matches!(self, Strategy::FakePoc | Strategy::PoeCollusion)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    /// f = |M| / |N|.
    pub fraction: f64,
    pub strategy: Strategy,
    pub wormhole_links: Vec<(NodeId, NodeId)>,
    #[serde(skip)]
    pub target: Option<PublicKey>,
}

impl AdversaryConfig {
    pub fn silent(fraction: f64) -> Self {
        Self {
            fraction,
            strategy: Strategy::Silent,
            ..Self::default()
        }
    }

    pub fn validate(&self, population: usize, min_signatures: usize) -> Result<(), AdversaryError> {
        if !(0.0..1.0).contains(&self.fraction) {
            return Err(AdversaryError::DomainError(format!(
                "fraction {} outside [0, 1)",
                self.fraction
            )));
        }
        if self.strategy.forges_blocks() && self.malicious_count(population) < min_signatures {
            return Err(AdversaryError::DomainError(format!(
                "strategy {:?} needs at least {min_signatures} colluders",
                self.strategy
            )));
        }
        if let Some((a, b)) = self
            .wormhole_links
            .iter()
            .find(|(a, b)| *a as usize >= population || *b as usize >= population || a == b)
        {
            return Err(AdversaryError::DomainError(format!("bad wormhole link ({a}, {b})")));
        }
        Ok(())
    }

    pub fn malicious_count(&self, population: usize) -> usize {
        ((self.fraction * population as f64).round() as usize).min(population)
    }
}

/// Upper bound `1 / N_a²` on a double spend across disconnected components.
pub fn p_double_spend_bound(n_active: u64) -> Result<f64, AdversaryError> {
    if n_active < 2 {
        return Err(AdversaryError::DomainError(format!(
            "N_a={n_active} must be at least 2"
        )));
    }
    let n = n_active as f64;
    Ok(1.0 / (n * n))
}

/// Committee capture odds, in log2 to survive tiny magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollusionBound {
    /// `log2(C(N_a, K) / 2^M)`.
    pub printed_log2: f64,
    /// `log2(K! / (2^M N_a^K))`, its Stirling-style approximation.
    pub printed_approx_log2: f64,
    /// `log2 P[at least floor(K/2)+1 of the K seats go to colluders]`.
    pub exact_log2: f64,
    pub exact: f64,
}

impl CollusionBound {
    pub fn printed(&self) -> f64 {
        self.printed_log2.exp2()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Natural-log hypergeometric upper tail `P[X >= t]` for `K` draws without
/// replacement from `N` items of which `M` are marked.
pub fn ln_hypergeometric_tail(n: u64, k: u64, m: u64, t: u64) -> f64 {
    let hi = k.min(m);
    if t > hi {
        return f64::NEG_INFINITY;
    }
    let lo = t.max(k.saturating_sub(n - m));
    let denom = ln_binomial(n, k);
    let terms: Vec<f64> = (lo..=hi)
        .map(|j| ln_binomial(m, j) + ln_binomial(n - m, k - j) - denom)
        .collect();
    log_sum_exp(&terms).min(0.0)
}

/// Committee-capture bound `C(N_a, K) / 2^M` next to the exact selection tail.
pub fn p_credit_stealing_bound(n_active: u64, k: u64, m: u64) -> Result<CollusionBound, AdversaryError> {
    if n_active == 0 || k == 0 || k > n_active || m > n_active {
        return Err(AdversaryError::DomainError(format!(
            "need 0 < K <= N_a and M <= N_a, got N_a={n_active}, K={k}, M={m}"
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let threshold = k / 2 + 1;
    let exact_ln = ln_hypergeometric_tail(n_active, k, m, threshold);
    Ok(CollusionBound {
        printed_log2: ln_binomial(n_active, k) / ln2 - m as f64,
        printed_approx_log2: ln_factorial(k) / ln2 - m as f64 - k as f64 * (n_active as f64).log2(),
        exact_log2: exact_ln / ln2,
        exact: exact_ln.exp(),
    })
}

/// What a malicious node does instead of the honest reaction to `event`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deviation {
    Honest,
    /// Keep the message but never relay it.
    DropRelay,
    /// Hand the message to the far wormhole endpoint in the same slot.
    Tunnel(NodeId),
    /// Spend the same input a second time.
    Equivocate,
    /// Sign with a spoofed context proof.
    SpoofContext,
    /// Back a regenesis proposal that pays the colluders.
    BackForgedProposal,
}

pub fn apply_strategy(config: &AdversaryConfig, node: NodeId, malicious: bool, event: &SimEvent) -> Deviation {
    if !malicious {
        return Deviation::Honest;
    }
    match (config.strategy, event.kind) {
        (Strategy::Silent, EventKind::Forward) if event.a == node => Deviation::DropRelay,
        (Strategy::Wormhole, _) => config
            .wormhole_links
            .iter()
            .find_map(|&(a, b)| match node {
                x if x == a => Some(b),
                x if x == b => Some(a),
                _ => None,
            })
            .map_or(Deviation::Honest, Deviation::Tunnel),
        (Strategy::DoubleSpend, EventKind::Meet) => Deviation::Equivocate,
        (Strategy::FakePoc, _) => Deviation::SpoofContext,
        (Strategy::PoeCollusion, _) => Deviation::BackForgedProposal,
        _ => Deviation::Honest,
    }
}

/// Result of one double-spend attempt in a static world.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleSpendOutcome {
    pub seed: u64,
    pub strategy: Strategy,
    pub honest_connected: bool,
    /// Honest flooding bound in slots.
    pub delta: Slot,
    /// The receivers' wait δ.
    pub wait: Slot,
    pub victims: (NodeId, NodeId),
    pub injected_at: (Slot, Slot),
    pub accepted: (bool, bool),
}

impl DoubleSpendOutcome {
    /// Two honest nodes accepted conflicting transactions.
    pub fn violation(&self) -> bool {
        self.accepted.0 && self.accepted.1
    }
}

fn honest_hops(world: &SimWorld, from: NodeId) -> Vec<Option<Slot>> {
    let mut dist = vec![None; world.population()];
    let mut queue = std::collections::VecDeque::from([from]);
    dist[from as usize] = Some(0);
    while let Some(u) = queue.pop_front() {
        if !world.relays(u) && u != from {
            continue;
        }
        let d = dist[u as usize].expect("queued nodes have a distance");
        for &v in world.neighbors(u) {
            if dist[v as usize].is_none() && !world.is_malicious(v) {
                dist[v as usize] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Receivers wait `wait(Δ)` slots before accepting.
pub type WaitRule = fn(Slot) -> Slot;

/// One double-spend attempt against two honest victims in a static world.
///
/// Malicious nodes never relay honest traffic. The attacker hands the two
/// conflicting transactions to the victims directly; honest nodes flood
/// everything they hear one hop per slot. A victim accepts once its wait
/// has elapsed without hearing the conflicting spend.
pub fn simulate_double_spend(config: &SimConfig, wait: WaitRule) -> Result<DoubleSpendOutcome, AdversaryError> {
    let strategy = config.adversary.strategy;
    if !matches!(strategy, Strategy::DoubleSpend | Strategy::Wormhole) {
        return Err(AdversaryError::DomainError(format!(
            "{strategy:?} is not a double-spend strategy"
        )));
    }
    let cfg = SimConfig {
        speed: 0.0,
        churn_rate: 0.0,
        ..config.clone()
    };
    let mut world = SimWorld::new(cfg).map_err(|e| AdversaryError::DomainError(e.to_string()))?;
    world.ensure_started();
    let honest: Vec<NodeId> = (0..world.population() as NodeId)
        .filter(|i| !world.is_malicious(*i))
        .collect();
    if honest.len() < 2 {
        return Err(AdversaryError::DomainError("need two honest nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "double-spend"));
    let v1 = honest[rng.gen_range(0..honest.len())];
    let from_v1 = honest_hops(&world, v1);
    let connected = honest.iter().all(|h| from_v1[*h as usize].is_some());
    let delta = if connected {
        honest
            .iter()
            .map(|h| {
                let d = honest_hops(&world, *h);
                honest.iter().filter_map(|o| d[*o as usize]).max().unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    } else {
        Slot::MAX
    };
    // The second victim is as far from the first as the honest graph allows.
    let v2 = honest
        .iter()
        .copied()
        .filter(|h| *h != v1)
        .max_by_key(|h| (from_v1[*h as usize].map_or(Slot::MAX, |d| d), std::cmp::Reverse(*h)))
        .expect("two honest nodes");
    let gap = from_v1[v2 as usize];
    let t2 = match strategy {
        Strategy::Wormhole => 0,
        _ => rng.gen_range(0..=gap.unwrap_or(delta).min(delta)),
    };
    let (t1, wait): (Slot, Slot) = (0, wait(delta));
    let arrives = |at: Slot, hops: Option<Slot>| hops.map_or(Slot::MAX, |h| at.saturating_add(h));
    let accepted = (
        arrives(t2, gap) > t1.saturating_add(wait),
        arrives(t1, gap) > t2.saturating_add(wait),
    );
    Ok(DoubleSpendOutcome {
        seed: config.seed,
        strategy,
        honest_connected: connected,
        delta,
        wait,
        victims: (v1, v2),
        injected_at: (t1, t2),
        accepted,
    })
}

/// Context proof for a location the colluder is not at, vouched for only
/// by other colluders who claim to stand next to it.
pub fn forge_context_proof(
    colluder: &KeyPair,
    prf: &PrfKey,
    spoofed: Point,
    witnesses: &[&KeyPair],
    now: Slot,
    area: &Area,
    params: &PocParams,
    reputations: &BTreeMap<PublicKey, f64>,
) -> Result<ContextProof, PocError> {
    let near: Vec<(&KeyPair, Point)> = witnesses.iter().map(|k| (*k, spoofed)).collect();
    prove_context(colluder, prf, spoofed, &near, now, area, params, reputations)
}

/// A block signed by `mRS` colluders at spoofed, well-spread locations.
pub fn forge_block(
    colluders: &[KeyPair],
    transactions: Vec<Transaction>,
    parents: BTreeSet<Digest>,
    prf: &PrfKey,
    now: Slot,
    area: &Area,
    params: &PocParams,
    reputations: &BTreeMap<PublicKey, f64>,
) -> Result<Block, PocError> {
    if colluders.len() < 2 {
        return Err(PocError::InvalidParams("need at least two colluders"));
    }
    let mut block = Block::new(transactions, parents, colluders[0].public_key, now);
    let c = area.center();
    let radius = 0.45 * area.width.min(area.height);
    let n = colluders.len();
    for (i, k) in colluders.iter().enumerate() {
        let angle = std::f64::consts::TAU * i as f64 / n as f64;
        let spot = Point::new(c.x + radius * angle.cos(), c.y + radius * angle.sin());
        let witnesses: Vec<&KeyPair> = colluders.iter().filter(|w| w.public_key != k.public_key).collect();
        let proof = forge_context_proof(k, prf, spot, &witnesses, now, area, params, reputations)?;
        block.push_signer(Signer {
            key: k.public_key,
            proof,
        });
    }
    Ok(block)
}

/// Outcome of a committee where colluders back a forged view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollusionOutcome {
    pub colluders: usize,
    pub honest: usize,
    pub quorum: usize,
    /// The regenesis that won carries the forged credit.
    pub stolen: bool,
    pub terminated: bool,
    pub burned_colluders: usize,
}

/// Runs one regenesis round in which every colluding member argues for a
/// view with an extra block paying `thief`.
pub fn simulate_collusion(
    members: &[MemberState],
    colluding: &BTreeSet<PublicKey>,
    honest_view: &[Block],
    forged: &Block,
    thief: &PublicKey,
    ctx: &RoundContext,
) -> CollusionOutcome {
    let mut forged_view = honest_view.to_vec();
    forged_view.push(forged.clone());
    let states: Vec<MemberState> = members
        .iter()
        .map(|m| MemberState {
            view: Some(if colluding.contains(&m.keys.public_key) {
                forged_view.clone()
            } else {
                honest_view.to_vec()
            }),
            ..m.clone()
        })
        .collect();
    let colluders = members
        .iter()
        .filter(|m| colluding.contains(&m.keys.public_key))
        .count();
    let honest = members.len() - colluders;
    let quorum = ctx.config.quorum;
    match run_regenesis_round(&states, ctx) {
        RoundOutcome::Regenesis(rb) => {
            let credited: Credits = rb
                .summary_blocks
                .iter()
                .flat_map(|b| &b.transactions)
                .filter(|t| t.receiver == *thief)
                .map(|t| t.amount)
                .sum();
            let honest_credit: Credits = ctx
                .proposal(honest_view)
                .map(|p| {
                    p.summary_blocks
                        .iter()
                        .flat_map(|b| &b.transactions)
                        .filter(|t| t.receiver == *thief)
                        .map(|t| t.amount)
                        .sum()
                })
                .unwrap_or(0);
            let burned_colluders = rb.burned.keys().filter(|k| colluding.contains(k)).count();
            CollusionOutcome {
                colluders,
                honest,
                quorum,
                stolen: credited > honest_credit,
                terminated: true,
                burned_colluders,
            }
        }
        RoundOutcome::EpochFailure { .. } => CollusionOutcome {
            colluders,
            honest,
            quorum,
            stolen: false,
            terminated: false,
            burned_colluders: 0,
        },
    }
}

/// One row of the attack-outcome table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub strategy: Strategy,
    pub fraction: f64,
    pub runs: usize,
    pub successes: usize,
    pub violations: usize,
}

impl AttackReport {
    pub const HEADER: &'static str = "strategy,fraction,runs,successes,violations";

    pub fn csv_row(&self) -> String {
        let name = serde_json::to_value(self.strategy)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        format!(
            "{name},{},{},{},{}",
            self.fraction, self.runs, self.successes, self.violations
        )
    }
}
