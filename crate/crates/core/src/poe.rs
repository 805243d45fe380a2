//! Proof-of-Equivalence: committee selection, epoch netting through the
//! virtual user, regenesis rounds and the termination probability.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::crypto::{Digest, KeyPair, PublicKey};
use crate::ledger::{Block, BlockKind, RegenesisBlock, Transaction, TxKind, VIRTUAL_USER};
use crate::{Credits, Slot};

/// Smoothing added to every account's fees before normalizing reputations.
pub const REPUTATION_EPSILON: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum PoeError {
    #[error("only {available} accounts with positive reputation, committee needs {needed}")]
    InsufficientPopulation { available: usize, needed: usize },
    #[error("epoch spends input {input} twice")]
    ConflictingEpoch { input: Digest },
    #[error("summary needs {summary} blocks for an epoch of {epoch}")]
    Incompressible { summary: usize, epoch: usize },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("invalid epoch configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpochConfig {
    /// Slots per epoch (T).
    pub slots: Slot,
    /// K_τ.
    pub committee_size: usize,
    /// K_τ^m.
    pub quorum: usize,
    /// Ξ_τ; defaults to three credits per committee seat.
    pub minted: Option<Credits>,
    /// φ_d: share of minted credits paid to forwarders of the regenesis.
    pub phi_d: f64,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            slots: 500,
            committee_size: 8,
            quorum: 5,
            minted: None,
            phi_d: 0.5,
        }
    }
}

impl EpochConfig {
    pub fn validate(&self) -> Result<(), PoeError> {
        if self.slots == 0 {
            return Err(PoeError::InvalidConfig("epoch must last at least one slot"));
        }
        if self.quorum == 0 || self.quorum > self.committee_size {
            return Err(PoeError::InvalidConfig("quorum must lie in 1..=committee_size"));
        }
        if !(0.0..=1.0).contains(&self.phi_d) {
            return Err(PoeError::InvalidConfig("phi_d must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn minted(&self) -> Credits {
        self.minted.unwrap_or(3 * self.committee_size as Credits)
    }
}

/// Reputation-weighted sampling of `k` distinct keys without replacement.
///
/// Keys are visited in sorted order and the generator is seeded from
/// `randomness`, so every node derives the same committee.
pub fn select_committee(
    reputations: &BTreeMap<PublicKey, f64>,
    k: usize,
    randomness: u64,
) -> Result<BTreeSet<PublicKey>, PoeError> {
    let mut pool: Vec<(PublicKey, f64)> = reputations
        .iter()
        .filter(|(_, r)| **r > 0.0 && r.is_finite())
        .map(|(pk, r)| (*pk, *r))
        .collect();
    if pool.len() < k {
        return Err(PoeError::InsufficientPopulation {
            available: pool.len(),
            needed: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(randomness);
    let mut out = BTreeSet::new();
    for _ in 0..k {
        let total: f64 = pool.iter().map(|(_, r)| r).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, (_, r)) in pool.iter().enumerate() {
            if u < *r {
                pick = i;
                break;
            }
            u -= r;
        }
        out.insert(pool.swap_remove(pick).0);
        pool.sort_by(|a, b| a.0.cmp(&b.0));
    }
    Ok(out)
}

/// The committee members allowed to broadcast summary blocks: the
/// `ceil(K/4)` lowest values of `H(pk || randomness)`.
pub fn initiators(committee: &BTreeSet<PublicKey>, randomness: u64) -> Vec<PublicKey> {
    let mut ranked: Vec<(Digest, PublicKey)> = committee
        .iter()
        .map(|pk| {
            let mut bytes = pk.as_bytes().to_vec();
            bytes.extend_from_slice(&randomness.to_le_bytes());
            (Digest::of(&bytes), *pk)
        })
        .collect();
    ranked.sort();
    ranked
        .into_iter()
        .take(committee.len().div_ceil(4))
        .map(|(_, pk)| pk)
        .collect()
}

/// Epoch blocks in canonical order: by creation slot, then hash.
pub fn canonical_order(blocks: &[Block]) -> Vec<&Block> {
    let mut keyed: Vec<(Slot, Digest, &Block)> = blocks.iter().map(|b| (b.created_at, b.hash(), b)).collect();
    keyed.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    keyed.dedup_by(|a, b| a.1 == b.1);
    keyed.into_iter().map(|(_, _, b)| b).collect()
}

/// Parameters the netting step reads from genesis and the current anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryParams {
    pub phi_c: f64,
    pub block_size: usize,
    /// Parent of every summary block: the previous regenesis or genesis.
    pub anchor: Digest,
    pub created_at: Slot,
}

/// Per-account net effect of a set of blocks, virtual user excluded.
pub fn net_deltas(blocks: &[&Block], phi_c: f64) -> BTreeMap<PublicKey, i64> {
    let mut out: BTreeMap<PublicKey, i64> = BTreeMap::new();
    for b in blocks {
        for (pk, d) in b.balance_effects(phi_c) {
            if pk != VIRTUAL_USER {
                *out.entry(pk).or_default() += d;
            }
        }
    }
    out.retain(|_, d| *d != 0);
    out
}

fn check_conflicts(blocks: &[&Block]) -> Result<(), PoeError> {
    let mut spent: BTreeMap<(Digest, PublicKey), Digest> = BTreeMap::new();
    for b in blocks {
        for tx in &b.transactions {
            if tx.kind == TxKind::Netting {
                continue;
            }
            let id = tx.id();
            for input in &tx.inputs {
                if let Some(prev) = spent.insert((*input, tx.sender), id) {
                    if prev != id {
                        return Err(PoeError::ConflictingEpoch { input: *input });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Equal split of `total` over `members`; the indivisible remainder goes
/// one credit each to the lowest keys.
pub fn equal_allocation(total: Credits, members: &BTreeSet<PublicKey>) -> BTreeMap<PublicKey, Credits> {
    let n = members.len() as Credits;
    if n == 0 || total == 0 {
        return BTreeMap::new();
    }
    let (share, rem) = (total / n, total % n);
    members
        .iter()
        .enumerate()
        .map(|(i, pk)| (*pk, share + Credits::from((i as Credits) < rem)))
        .filter(|(_, c)| *c > 0)
        .collect()
}

/// Nets an epoch into summary blocks routed through the virtual user.
/// `allocations` are credits granted on top of the epoch's own flows.
pub fn summarize_with_allocations(
    blocks: &[Block],
    allocations: &BTreeMap<PublicKey, Credits>,
    params: &SummaryParams,
) -> Result<Vec<Block>, PoeError> {
    let ordered = canonical_order(blocks);
    check_conflicts(&ordered)?;
    let mut deltas = net_deltas(&ordered, params.phi_c);
    for (pk, c) in allocations {
        *deltas.entry(*pk).or_default() += *c as i64;
    }
    let t = params.created_at;
    let mut txs: Vec<Transaction> = deltas
        .iter()
        .filter(|(_, d)| **d < 0)
        .map(|(pk, d)| Transaction::netting(*pk, VIRTUAL_USER, d.unsigned_abs(), t))
        .collect();
    txs.extend(
        deltas
            .iter()
            .filter(|(_, d)| **d > 0)
            .map(|(pk, d)| Transaction::netting(VIRTUAL_USER, *pk, *d as Credits, t)),
    );
    Ok(txs
        .chunks(params.block_size.max(1))
        .map(|chunk| Block::summary(chunk.to_vec(), params.anchor, t))
        .collect())
}

/// Nets an epoch, sharing `fees` equally among the committee. Refuses with
/// `Incompressible` when the summary would need more blocks than the epoch.
pub fn summarize_epoch(
    blocks: &[Block],
    committee: &BTreeSet<PublicKey>,
    fees: Credits,
    params: &SummaryParams,
) -> Result<Vec<Block>, PoeError> {
    let summary = summarize_with_allocations(blocks, &equal_allocation(fees, committee), params)?;
    if summary.len() > blocks.len() {
        return Err(PoeError::Incompressible {
            summary: summary.len(),
            epoch: blocks.len(),
        });
    }
    Ok(summary)
}

/// Π^E: an epoch and the summary claimed to be equivalent to it.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceProof {
    pub epoch_blocks: BTreeSet<Digest>,
    pub summary_blocks: Vec<Block>,
    pub allocations: BTreeMap<PublicKey, Credits>,
    pub producer: PublicKey,
}

impl EquivalenceProof {
    pub fn produce(
        producer: PublicKey,
        blocks: &[Block],
        allocations: BTreeMap<PublicKey, Credits>,
        params: &SummaryParams,
    ) -> Result<Self, PoeError> {
        let summary_blocks = summarize_with_allocations(blocks, &allocations, params)?;
        Ok(Self {
            epoch_blocks: blocks.iter().map(Block::hash).collect(),
            summary_blocks,
            allocations,
            producer,
        })
    }

    /// Recomputes both sides independently and compares every account.
    pub fn verify(&self, blocks: &[Block], phi_c: f64) -> Result<bool, PoeError> {
        let by_hash: BTreeMap<Digest, &Block> = blocks.iter().map(|b| (b.hash(), b)).collect();
        let mut epoch = Vec::with_capacity(self.epoch_blocks.len());
        for h in &self.epoch_blocks {
            match by_hash.get(h) {
                Some(b) => epoch.push(*b),
                None => return Ok(false),
            }
        }
        if self.summary_blocks.len() > epoch.len() {
            return Err(PoeError::Incompressible {
                summary: self.summary_blocks.len(),
                epoch: epoch.len(),
            });
        }
        if self
            .summary_blocks
            .iter()
            .any(|b| b.kind != BlockKind::Summary || b.transactions.iter().any(|t| !t.is_well_formed()))
        {
            return Ok(false);
        }
        check_conflicts(&epoch)?;
        let mut expected = net_deltas(&epoch, phi_c);
        for (pk, c) in &self.allocations {
            *expected.entry(*pk).or_default() += *c as i64;
        }
        expected.retain(|_, d| *d != 0);
        let summary: Vec<&Block> = self.summary_blocks.iter().collect();
        Ok(net_deltas(&summary, phi_c) == expected)
    }
}

/// Reputation for the next epoch: `(fees_i + ε) / Σ (fees + ε)` over the
/// active accounts, uniform when nothing distinguishes them.
pub fn update_reputations(
    fees: &BTreeMap<PublicKey, Credits>,
    active: &BTreeSet<PublicKey>,
    epsilon: f64,
) -> BTreeMap<PublicKey, f64> {
    let accounts: BTreeSet<PublicKey> = active.iter().chain(fees.keys()).copied().collect();
    let raw: BTreeMap<PublicKey, f64> = accounts
        .iter()
        .map(|pk| (*pk, fees.get(pk).copied().unwrap_or(0) as f64 + epsilon))
        .collect();
    let total: f64 = raw.values().sum();
    if total <= 0.0 {
        let n = accounts.len().max(1) as f64;
        return accounts.iter().map(|pk| (*pk, 1.0 / n)).collect();
    }
    raw.into_iter().map(|(pk, v)| (pk, v / total)).collect()
}

/// Fees each account earned across `blocks`.
pub fn fees_collected(blocks: &[Block], phi_c: f64) -> BTreeMap<PublicKey, Credits> {
    let mut out: BTreeMap<PublicKey, Credits> = BTreeMap::new();
    for b in blocks {
        for (pk, f) in b.fee_rewards(phi_c) {
            *out.entry(pk).or_default() += f;
        }
    }
    out
}

/// Per-member completeness probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta {
    Homogeneous(f64),
    PerMember(Vec<f64>),
}

fn binomial_upper_tail(theta: f64, k: usize, k_m: usize) -> f64 {
    if theta <= 0.0 {
        return if k_m == 0 { 1.0 } else { 0.0 };
    }
    if theta >= 1.0 {
        return 1.0;
    }
    let (lt, lf) = (theta.ln(), (1.0 - theta).ln());
    let p: f64 = (k_m..=k)
        .map(|j| (ln_binomial(k as u64, j as u64) + j as f64 * lt + (k - j) as f64 * lf).exp())
        .sum();
    p.min(1.0)
}

/// Probability that at least `k_m` of `k` members complete the epoch.
///
/// Homogeneous θ gives the exact binomial tail; distinct per-member values
/// use a normal approximation with continuity correction.
pub fn poe_termination_probability(theta: &Theta, k: usize, k_m: usize) -> Result<f64, PoeError> {
    if k_m == 0 || k_m > k {
        return Err(PoeError::DomainError(format!(
            "need 1 <= K_m <= K, got K={k}, K_m={k_m}"
        )));
    }
    let in_unit = |t: &f64| (0.0..=1.0).contains(t);
    match theta {
        Theta::Homogeneous(t) if in_unit(t) => Ok(binomial_upper_tail(*t, k, k_m)),
        Theta::Homogeneous(t) => Err(PoeError::DomainError(format!("theta {t} outside [0, 1]"))),
        Theta::PerMember(ts) => {
            if ts.len() != k {
                return Err(PoeError::DomainError(format!("{} thetas for K={k}", ts.len())));
            }
            if let Some(bad) = ts.iter().find(|t| !in_unit(t)) {
                return Err(PoeError::DomainError(format!("theta {bad} outside [0, 1]")));
            }
            if ts.windows(2).all(|w| w[0] == w[1]) {
                return Ok(binomial_upper_tail(ts[0], k, k_m));
            }
            let mean: f64 = ts.iter().sum();
            let var: f64 = ts.iter().map(|t| t * (1.0 - t)).sum();
            if var <= 0.0 {
                return Ok(if mean >= k_m as f64 - 0.5 { 1.0 } else { 0.0 });
            }
            let n = Normal::new(mean, var.sqrt()).map_err(|e| PoeError::DomainError(e.to_string()))?;
            Ok(n.sf(k_m as f64 - 0.5))
        }
    }
}

/// The closed-form termination expression `(K/K_m) θ^K (1−θ)^(K−K_m)`.
/// Kept for comparison; it only matches the tail when `K = K_m`.
pub fn printed_termination_formula(theta: f64, k: usize, k_m: usize) -> f64 {
    (k as f64 / k_m as f64) * theta.powi(k as i32) * (1.0 - theta).powi((k - k_m) as i32)
}

/// What one committee member brings to a regenesis round.
#[derive(Debug, Clone)]
pub struct MemberState {
    pub keys: KeyPair,
    /// The member's epoch view, or `None` if it is incomplete and abstains.
    pub view: Option<Vec<Block>>,
    /// Conditional-self deposit forfeited if the member signs a losing proposal.
    pub deposit: Credits,
}

/// Everything except member views that a round depends on.
#[derive(Debug, Clone)]
pub struct RoundContext {
    pub epoch: u64,
    pub prev_regenesis: Digest,
    pub config: EpochConfig,
    pub committee: BTreeSet<PublicKey>,
    pub randomness: u64,
    pub reputations: BTreeMap<PublicKey, f64>,
    /// Nodes that forwarded the deletion messages.
    pub forwarders: BTreeSet<PublicKey>,
    pub summary: SummaryParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome {
    Regenesis(Box<RegenesisBlock>),
    EpochFailure { support: usize, needed: usize },
}

impl RoundContext {
    /// Minted credit allocation: `(1−φ_d)·Ξ` to the committee and the rest
    /// to forwarders (to the committee when nobody forwarded).
    pub fn mint_allocation(&self) -> BTreeMap<PublicKey, Credits> {
        let xi = self.config.minted();
        let to_forwarders = ((self.config.phi_d * xi as f64).floor() as Credits).min(xi);
        let mut out = equal_allocation(xi - to_forwarders, &self.committee);
        let fwd = if self.forwarders.is_empty() {
            &self.committee
        } else {
            &self.forwarders
        };
        for (pk, c) in equal_allocation(to_forwarders, fwd) {
            *out.entry(pk).or_default() += c;
        }
        out
    }

    /// The canonical proposal a member derives from its view.
    pub fn proposal(&self, view: &[Block]) -> Result<RegenesisBlock, PoeError> {
        let summary_blocks = summarize_with_allocations(view, &self.mint_allocation(), &self.summary)?;
        let active: BTreeSet<PublicKey> = self.reputations.keys().copied().collect();
        let reputation_table =
            update_reputations(&fees_collected(view, self.summary.phi_c), &active, REPUTATION_EPSILON);
        let summarized: BTreeSet<Digest> = view.iter().map(Block::hash).collect();
        let mut seed = Vec::new();
        seed.extend_from_slice(&self.randomness.to_le_bytes());
        for h in &summarized {
            seed.extend_from_slice(h.as_bytes());
        }
        Ok(RegenesisBlock {
            epoch: self.epoch,
            prev_regenesis: self.prev_regenesis,
            summarized_headers: summarized,
            summary_blocks,
            reputation_table,
            minted: self.config.minted(),
            burned: BTreeMap::new(),
            committee: self.committee.clone(),
            quorum: self.config.quorum,
            randomness: Digest::of(&seed).prefix_u64(),
            committee_signatures: Vec::new(),
        })
    }
}

/// One agreement round: members with complete views propose, the plurality
/// proposal wins if it reaches the quorum, and members that signed anything
/// else lose their deposits.
pub fn run_regenesis_round(members: &[MemberState], ctx: &RoundContext) -> RoundOutcome {
    let mut groups: BTreeMap<Digest, (RegenesisBlock, Vec<&MemberState>)> = BTreeMap::new();
    for m in members {
        if !ctx.committee.contains(&m.keys.public_key) {
            continue;
        }
        let Some(view) = &m.view else { continue };
        let Ok(p) = ctx.proposal(view) else { continue };
        groups.entry(p.hash()).or_insert_with(|| (p, Vec::new())).1.push(m);
    }
    let best = groups
        .iter()
        .max_by(|a, b| a.1 .1.len().cmp(&b.1 .1.len()).then(b.0.cmp(a.0)))
        .map(|(h, (_, s))| (*h, s.len()));
    let needed = ctx.config.quorum;
    let Some((winner, support)) = best.filter(|(_, s)| *s >= needed) else {
        return RoundOutcome::EpochFailure {
            support: best.map_or(0, |b| b.1),
            needed,
        };
    };
    let mut burned = BTreeMap::new();
    for (h, (_, signers)) in &groups {
        if *h != winner {
            for m in signers {
                if m.deposit > 0 {
                    burned.insert(m.keys.public_key, m.deposit);
                }
            }
        }
    }
    let (mut rb, signers) = groups.remove(&winner).expect("winner exists");
    rb.burned = burned;
    for m in signers {
        rb.sign(&m.keys);
    }
    debug_assert!(rb.valid_signature_count() >= support);
    RoundOutcome::Regenesis(Box::new(rb))
}

/// Carries an unfinished epoch forward so the next committee summarizes
/// both.
#[derive(Debug, Clone, Default)]
pub struct PoeDriver {
    carried: Vec<Block>,
    pub failures: u64,
}

impl PoeDriver {
    pub fn carried(&self) -> &[Block] {
        &self.carried
    }

    /// Scope of the coming round: carried blocks plus `epoch_blocks`.
    pub fn scope(&self, epoch_blocks: &[Block]) -> Vec<Block> {
        let mut all = self.carried.clone();
        all.extend_from_slice(epoch_blocks);
        all
    }

    /// Runs a round where each member's view is extended by the carried
    /// scope. On failure the epoch's blocks are carried again.
    pub fn run(&mut self, members: &[MemberState], epoch_blocks: &[Block], ctx: &RoundContext) -> RoundOutcome {
        let widened: Vec<MemberState> = members
            .iter()
            .map(|m| MemberState {
                view: m.view.as_ref().map(|v| self.scope(v)),
                ..m.clone()
            })
            .collect();
        let outcome = run_regenesis_round(&widened, ctx);
        match &outcome {
            RoundOutcome::Regenesis(_) => self.carried.clear(),
            RoundOutcome::EpochFailure { .. } => {
                self.carried.extend_from_slice(epoch_blocks);
                self.failures += 1;
            }
        }
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;

    #[test]
    fn whole_population_when_k_equals_n() {
        let reps: BTreeMap<PublicKey, f64> = (1..=5).map(|s| (generate_keypair(s).public_key, 0.2)).collect();
        let c = select_committee(&reps, 5, 9).unwrap();
        assert_eq!(c, reps.keys().copied().collect());
        assert_eq!(select_committee(&reps, 5, 9), select_committee(&reps, 5, 9));
        assert_eq!(
            select_committee(&reps, 6, 9),
            Err(PoeError::InsufficientPopulation {
                available: 5,
                needed: 6
            })
        );
    }

    #[test]
    fn three_to_one_reputation_selects_three_quarters() {
        let a = generate_keypair(1).public_key;
        let b = generate_keypair(2).public_key;
        let reps = BTreeMap::from([(a, 3.0), (b, 1.0)]);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|s| select_committee(&reps, 1, *s).unwrap().contains(&a))
            .count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.75).abs() < 0.01, "{freq}");
    }

    #[test]
    fn initiators_are_a_quarter_of_the_committee() {
        let c: BTreeSet<PublicKey> = (1..=10).map(|s| generate_keypair(s).public_key).collect();
        let i = initiators(&c, 4);
        assert_eq!(i.len(), 3);
        assert_eq!(i, initiators(&c, 4));
        assert!(i.iter().all(|k| c.contains(k)));
    }

    #[test]
    fn termination_probability_examples() {
        let p = |t: f64, k, m| poe_termination_probability(&Theta::Homogeneous(t), k, m).unwrap();
        assert_eq!(p(1.0, 10, 7), 1.0);
        assert!((p(0.5, 4, 4) - 0.0625).abs() < 1e-12);
        assert_eq!(p(0.0, 10, 1), 0.0);
        assert!(poe_termination_probability(&Theta::Homogeneous(1.5), 4, 2).is_err());
        assert!(poe_termination_probability(&Theta::Homogeneous(0.5), 4, 5).is_err());
        // Identical per-member values fall back to the exact tail.
        let same = poe_termination_probability(&Theta::PerMember(vec![0.5; 4]), 4, 4).unwrap();
        assert!((same - 0.0625).abs() < 1e-12);
        let het = poe_termination_probability(&Theta::PerMember(vec![0.9, 0.8, 0.7, 0.6]), 4, 2).unwrap();
        assert!(het > 0.9 && het < 1.0);
    }

    #[test]
    fn printed_formula_disagrees_with_the_tail() {
        // Certain completion yields zero under the printed expression.
        assert_eq!(printed_termination_formula(1.0, 10, 5), 0.0);
        assert_eq!(poe_termination_probability(&Theta::Homogeneous(1.0), 10, 5), Ok(1.0));
        assert!((printed_termination_formula(0.5, 4, 4) - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn reputation_updates() {
        let a = generate_keypair(1).public_key;
        let b = generate_keypair(2).public_key;
        let c = generate_keypair(3).public_key;
        let active = BTreeSet::from([a, b, c]);
        let uniform = update_reputations(&BTreeMap::new(), &active, 0.0);
        assert!(uniform.values().all(|r| (r - 1.0 / 3.0).abs() < 1e-12));
        let smoothed = update_reputations(&BTreeMap::new(), &active, REPUTATION_EPSILON);
        assert_eq!(smoothed, uniform);

        let solo = update_reputations(&BTreeMap::from([(a, 10)]), &active, 0.0);
        assert_eq!(solo[&a], 1.0);
        assert_eq!(solo[&b], 0.0);
        let solo_eps = update_reputations(&BTreeMap::from([(a, 10)]), &active, REPUTATION_EPSILON);
        assert!((solo_eps[&a] - 11.0 / 13.0).abs() < 1e-12);
        assert!((solo_eps[&b] - 1.0 / 13.0).abs() < 1e-12);

        let pair = update_reputations(
            &BTreeMap::from([(a, 2), (b, 2)]),
            &BTreeSet::from([a, b]),
            REPUTATION_EPSILON,
        );
        assert_eq!(pair[&a], pair[&b]);
    }

    #[test]
    fn equal_allocation_gives_remainder_to_lowest_keys() {
        let c: BTreeSet<PublicKey> = (1..=3).map(|s| generate_keypair(s).public_key).collect();
        let alloc = equal_allocation(8, &c);
        let ordered: Vec<Credits> = c.iter().map(|k| alloc[k]).collect();
        assert_eq!(ordered, vec![3, 3, 2]);
        assert_eq!(alloc.values().sum::<Credits>(), 8);
    }

    #[test]
    fn empty_epoch_has_empty_summary() {
        let params = SummaryParams {
            phi_c: 0.5,
            block_size: 4,
            anchor: Digest::of(b"g"),
            created_at: 0,
        };
        assert!(summarize_epoch(&[], &BTreeSet::new(), 0, &params).unwrap().is_empty());
    }
}
