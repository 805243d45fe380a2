//! Proof-of-Context: context proofs, transaction acceptance and the
//! per-node block state machine (propose, sign and forward, verify and add).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::codec::{Canonical, Encoder};
use crate::crypto::{
    commit, produce_tag, verify_neighbor_claim, Attestation, Commitment, CryptoError, Digest, KeyPair, LocationMessage,
    PrfKey, PublicKey,
};
use crate::geo::{mean_pairwise_distance, Area, Point};
use crate::ledger::{Block, LedgerError, LedgerView, Signer, Transaction};
use crate::{Credits, Slot};

pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PocError {
    #[error("a context proof needs at least one neighbour")]
    NoNeighbors,
    #[error("need {need} transactions, pool holds {have}")]
    InsufficientTransactions { have: usize, need: usize },
    #[error("average distance needs at least two points")]
    TooFewPoints,
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PocParams {
    /// Transactions per block (B).
    pub block_size: usize,
    /// mRS.
    pub min_signatures: usize,
    /// mD, meters.
    pub min_distance: f64,
    /// mTr.
    pub min_trusted: usize,
    /// δ, slots.
    pub delta: Slot,
    pub min_context_weight: f64,
    /// Slots an unfamiliar node waits before forwarding a proposal unsigned.
    pub backoff: Slot,
    /// Radius within which a neighbour answers yes to a location claim.
    pub attestation_radius: f64,
}

impl Default for PocParams {
    fn default() -> Self {
        Self {
            block_size: 4,
            min_signatures: 5,
            min_distance: 150.0,
            min_trusted: 3,
            delta: 5,
            min_context_weight: 0.3,
            backoff: 2,
            attestation_radius: 50.0,
        }
    }
}

impl PocParams {
    pub fn validate(&self) -> Result<(), PocError> {
        if self.block_size == 0 {
            return Err(PocError::InvalidParams("block_size must be positive"));
        }
        if self.min_signatures == 0 {
            return Err(PocError::InvalidParams("min_signatures must be at least 1"));
        }
        if !(self.min_distance >= 0.0) {
            return Err(PocError::InvalidParams("min_distance must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.min_context_weight) {
            return Err(PocError::InvalidParams("min_context_weight must lie in [0, 1]"));
        }
        if !(self.attestation_radius > 0.0) {
            return Err(PocError::InvalidParams("attestation_radius must be positive"));
        }
        Ok(())
    }
}

/// Mean distance over all unordered pairs of `points`.
pub fn average_pairwise_distance(points: &[Point]) -> Result<f64, PocError> {
    mean_pairwise_distance(points).ok_or(PocError::TooFewPoints)
}

/// Weight a reputation share contributes to a context proof.
///
/// Tables store shares that sum to one; a share equal to the uniform
/// share counts fully and the contribution is capped at one.
pub fn reputation_weight(table: &BTreeMap<PublicKey, f64>, pk: &PublicKey) -> f64 {
    let n = table.len() as f64;
    table.get(pk).map_or(0.0, |share| (share * n).clamp(0.0, 1.0))
}

/// A corroborator's location commitment and the neighbour answers backing it.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextProof {
    pub commitment: Commitment,
    pub attestations: Vec<Attestation>,
    pub weight: f64,
    /// Claimed location, mirrored from the commitment.
    pub location: Point,
}

impl Canonical for ContextProof {
    fn encode(&self, enc: &mut Encoder) {
        self.commitment.encode(enc);
        enc.len_prefix(self.attestations.len());
        for a in &self.attestations {
            a.encode(enc);
        }
        enc.f64(self.weight);
    }
}

/// Builds and signs a commitment to the node's current surroundings.
pub fn make_commitment(
    keys: &KeyPair,
    prf: &PrfKey,
    location: Point,
    neighbor_ids: BTreeSet<PublicKey>,
    now: Slot,
    area: &Area,
) -> Result<Commitment, PocError> {
    let m = LocationMessage::new(&keys.public_key, location, neighbor_ids, now, area)?;
    let tag = produce_tag(prf, &m);
    Ok(commit(keys, prf, &m, tag)?)
}

fn weigh(
    m: &LocationMessage,
    comm_hash: &Digest,
    attestations: &[Attestation],
    reputations: &BTreeMap<PublicKey, f64>,
) -> f64 {
    let mut counted = BTreeSet::new();
    let yes: f64 = attestations
        .iter()
        .filter(|a| {
            a.is_yes()
                && a.commitment_hash == *comm_hash
                && m.neighbor_ids.contains(&a.verifier)
                && counted.insert(a.verifier)
        })
        .map(|a| reputation_weight(reputations, &a.verifier))
        .sum();
    yes / m.neighbor_ids.len() as f64
}

/// Assembles a context proof from neighbour replies.
pub fn build_context_proof(
    commitment: Commitment,
    replies: Vec<Attestation>,
    reputations: &BTreeMap<PublicKey, f64>,
) -> Result<ContextProof, PocError> {
    let (m, _) = commitment.open()?;
    if m.neighbor_ids.is_empty() {
        return Err(PocError::NoNeighbors);
    }
    let h = commitment.hash();
    let attestations: Vec<Attestation> = replies.into_iter().filter(|a| a.commitment_hash == h).collect();
    let weight = weigh(&m, &h, &attestations, reputations);
    Ok(ContextProof {
        commitment,
        attestations,
        weight,
        location: m.location,
    })
}

/// Full round: commit, collect one answer from every listed neighbour, and
/// assemble the proof.
pub fn prove_context(
    keys: &KeyPair,
    prf: &PrfKey,
    location: Point,
    neighbors: &[(&KeyPair, Point)],
    now: Slot,
    area: &Area,
    params: &PocParams,
    reputations: &BTreeMap<PublicKey, f64>,
) -> Result<ContextProof, PocError> {
    let ids = neighbors.iter().map(|(k, _)| k.public_key).collect();
    let comm = make_commitment(keys, prf, location, ids, now, area)?;
    let replies = neighbors
        .iter()
        .map(|(k, at)| verify_neighbor_claim(k, *at, &comm, params.attestation_radius, now))
        .collect::<Result<Vec<_>, _>>()?;
    build_context_proof(comm, replies, reputations)
}

/// Checks signatures, distance consistency, the stored weight and the
/// weight threshold.
pub fn verify_context_proof(proof: &ContextProof, reputations: &BTreeMap<PublicKey, f64>, params: &PocParams) -> bool {
    let comm = &proof.commitment;
    if !comm.verify(&comm.committer) {
        return false;
    }
    let Ok((m, _)) = comm.open() else {
        return false;
    };
    if m.neighbor_ids.is_empty() || m.location != proof.location {
        return false;
    }
    let h = comm.hash();
    let mut verifiers = BTreeSet::new();
    for a in &proof.attestations {
        if a.commitment_hash != h || !a.verify() || !verifiers.insert(a.verifier) {
            return false;
        }
        if a.is_yes()
            && (!m.neighbor_ids.contains(&a.verifier)
                || m.location.distance(&a.verifier_location) >= params.attestation_radius)
        {
            return false;
        }
    }
    let weight = weigh(&m, &h, &proof.attestations, reputations);
    (weight - proof.weight).abs() <= WEIGHT_TOLERANCE && weight >= params.min_context_weight
}

/// Deterministic stand-in for DAG voting between two verified blocks that
/// conflict: more signers wins, then the lower hash.
pub fn choose_between<'a>(a: &'a Block, b: &'a Block) -> &'a Block {
    match a.signers.len().cmp(&b.signers.len()) {
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Equal => {
            if a.hash() <= b.hash() {
                a
            } else {
                b
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxDecision {
    Accepted,
    Pending,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgnoreReason {
    Blacklisted,
    InvalidPoc,
    Malformed,
    Conflict,
    AlreadyKnown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockAction {
    /// Signed with the local context proof; forward the updated block.
    SignAndForward(Block),
    /// Unfamiliar with some transaction: forward unsigned once `at` arrives.
    ForwardOnly {
        block: Block,
        at: Slot,
    },
    /// Nothing to add; pass the block on unchanged.
    Rebroadcast(Block),
    /// Thresholds met; the block is sealed and now part of the local view.
    VerifyAndAdd(Block),
    Ignore(IgnoreReason),
}

#[derive(Debug, Clone)]
struct Heard {
    tx: Transaction,
    first_seen: Slot,
    trusted_signers: BTreeSet<PublicKey>,
}

/// Per-node PoC state.
#[derive(Debug, Clone)]
pub struct PocNode {
    pub keys: KeyPair,
    pub params: PocParams,
    pub view: LedgerView,
    pub trusted: BTreeSet<PublicKey>,
    heard: BTreeMap<Digest, Heard>,
    spends_seen: BTreeMap<(Digest, PublicKey), BTreeSet<Digest>>,
    contact_counts: BTreeMap<PublicKey, u64>,
    blacklist: BTreeSet<Digest>,
    context: Option<ContextProof>,
}

impl PocNode {
    pub fn new(keys: KeyPair, params: PocParams, view: LedgerView) -> Self {
        Self {
            keys,
            params,
            view,
            trusted: BTreeSet::new(),
            heard: BTreeMap::new(),
            spends_seen: BTreeMap::new(),
            contact_counts: BTreeMap::new(),
            blacklist: BTreeSet::new(),
            context: None,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public_key
    }

    pub fn set_context(&mut self, proof: ContextProof) {
        self.context = Some(proof);
    }

    pub fn context(&self) -> Option<&ContextProof> {
        self.context.as_ref()
    }

    pub fn is_blacklisted(&self, h: &Digest) -> bool {
        self.blacklist.contains(h)
    }

    /// Counts a message received from `from`; the most frequent senders
    /// form the trusted set.
    pub fn record_contact(&mut self, from: PublicKey) {
        *self.contact_counts.entry(from).or_default() += 1;
    }

    /// Trusted set = the `mTr·4` most frequent contacts.
    pub fn refresh_trusted(&mut self) {
        let mut by_count: Vec<(u64, PublicKey)> = self.contact_counts.iter().map(|(k, c)| (*c, *k)).collect();
        by_count.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        self.trusted = by_count
            .into_iter()
            .take(self.params.min_trusted * 4)
            .map(|(_, k)| k)
            .collect();
    }

    fn is_conflicted(&self, tx: &Transaction) -> bool {
        let id = tx.id();
        tx.inputs.iter().any(|i| {
            self.spends_seen
                .get(&(*i, tx.sender))
                .is_some_and(|ids| ids.iter().any(|o| *o != id))
        })
    }

    /// Records a transaction heard on the wire; it joins the local pool.
    pub fn hear_transaction(&mut self, tx: &Transaction, now: Slot) -> Digest {
        let id = tx.id();
        for i in &tx.inputs {
            self.spends_seen.entry((*i, tx.sender)).or_default().insert(id);
        }
        let entry = self.heard.entry(id).or_insert_with(|| Heard {
            tx: tx.clone(),
            first_seen: now,
            trusted_signers: BTreeSet::new(),
        });
        if tx.verify_forwarder_chain() {
            let trusted = &self.trusted;
            entry
                .trusted_signers
                .extend(tx.forwarders().filter(|f| trusted.contains(f)).copied());
        }
        id
    }

    /// Acceptance rule for an incoming transaction.
    pub fn accept_transaction(&mut self, tx: &Transaction, now: Slot) -> TxDecision {
        let id = self.hear_transaction(tx, now);
        if self.view.pending_pool().contains_key(&id) {
            return TxDecision::Accepted;
        }
        if self.is_conflicted(tx) || self.view.detect_conflict(tx) {
            return TxDecision::Rejected;
        }
        let h = &self.heard[&id];
        if h.trusted_signers.len() >= self.params.min_trusted && now.saturating_sub(h.first_seen) >= self.params.delta {
            return match self.view.accept_into_pool(tx.clone()) {
                Ok(()) => TxDecision::Accepted,
                Err(_) => TxDecision::Rejected,
            };
        }
        TxDecision::Pending
    }

    pub fn pool_len(&self) -> usize {
        self.heard.len()
    }

    /// Whether every transaction of `block` is in the local pool.
    pub fn is_familiar(&self, block: &Block) -> bool {
        block.transactions.iter().all(|t| self.heard.contains_key(&t.id()))
    }

    fn priority(tx: &Transaction) -> Credits {
        tx.tx_fee + tx.block_fee
    }

    /// Phase P0: packs the B highest-fee pooled transactions.
    pub fn propose_block(&mut self, now: Slot) -> Result<Block, PocError> {
        let need = self.params.block_size;
        let mut by_arrival: Vec<&Heard> = self.heard.values().collect();
        by_arrival.sort_by_key(|h| (h.first_seen, h.tx.id()));
        let mut claimed: BTreeSet<(Digest, PublicKey)> = BTreeSet::new();
        let mut candidates = Vec::new();
        for h in by_arrival {
            let tx = &h.tx;
            let clash = tx.inputs.iter().any(|i| claimed.contains(&(*i, tx.sender)));
            if clash || self.view.detect_conflict(tx) {
                continue;
            }
            claimed.extend(tx.inputs.iter().map(|i| (*i, tx.sender)));
            candidates.push(h);
        }
        if candidates.len() < need {
            return Err(PocError::InsufficientTransactions {
                have: candidates.len(),
                need,
            });
        }
        candidates.sort_by(|a, b| {
            Self::priority(&b.tx)
                .cmp(&Self::priority(&a.tx))
                .then(a.first_seen.cmp(&b.first_seen))
                .then(a.tx.id().cmp(&b.tx.id()))
        });
        let txs = candidates.into_iter().take(need).map(|h| h.tx.clone()).collect();
        let mut block = Block::new(txs, self.view.tips(), self.keys.public_key, now);
        if let Some(proof) = self.context.clone() {
            block.push_signer(Signer {
                key: self.keys.public_key,
                proof,
            });
        }
        Ok(block)
    }

    fn thresholds_met(&self, block: &Block) -> bool {
        block.signers.len() >= self.params.min_signatures && block.avg_signer_distance >= self.params.min_distance
    }

    fn proofs_valid(&self, block: &Block) -> bool {
        let reps = self.view.reputations();
        block
            .signers
            .iter()
            .all(|s| verify_context_proof(&s.proof, reps, &self.params))
    }

    fn verify_and_add(&mut self, mut block: Block) -> BlockAction {
        block.seal(&self.keys);
        match self.view.add_block(block.clone()) {
            Ok(_) => {
                for tx in &block.transactions {
                    self.heard.remove(&tx.id());
                }
                BlockAction::VerifyAndAdd(block)
            }
            Err(LedgerError::Conflict { .. }) => {
                self.blacklist.insert(block.hash());
                BlockAction::Ignore(IgnoreReason::Conflict)
            }
            Err(LedgerError::Duplicate(_)) => BlockAction::Ignore(IgnoreReason::AlreadyKnown),
            Err(_) => BlockAction::Ignore(IgnoreReason::Malformed),
        }
    }

    /// Phases P1 and P2 for a block proposal.
    pub fn on_block_received(&mut self, block: Block, now: Slot) -> BlockAction {
        let h = block.hash();
        if self.blacklist.contains(&h) {
            return BlockAction::Ignore(IgnoreReason::Blacklisted);
        }
        if self.view.contains_block(&h) {
            return BlockAction::Ignore(IgnoreReason::AlreadyKnown);
        }
        if block.check_structure(self.params.block_size).is_err() {
            return BlockAction::Ignore(IgnoreReason::Malformed);
        }
        if !self.proofs_valid(&block) {
            return BlockAction::Ignore(IgnoreReason::InvalidPoc);
        }
        if block
            .transactions
            .iter()
            .any(|t| self.view.detect_conflict(t) || self.is_conflicted(t))
        {
            self.blacklist.insert(h);
            return BlockAction::Ignore(IgnoreReason::Conflict);
        }
        let me = self.keys.public_key;
        let familiar = self.is_familiar(&block);
        let mut block = block;
        if familiar && !block.has_signer(&me) {
            if let Some(proof) = self.context.clone() {
                block.push_signer(Signer { key: me, proof });
                if self.thresholds_met(&block) {
                    return self.verify_and_add(block);
                }
                return BlockAction::SignAndForward(block);
            }
        }
        if self.thresholds_met(&block) {
            return self.verify_and_add(block);
        }
        if !familiar {
            return BlockAction::ForwardOnly {
                block,
                at: now + self.params.backoff,
            };
        }
        BlockAction::Rebroadcast(block)
    }

    /// Handles a block announced as verified by someone else.
    pub fn on_verified_block(&mut self, block: Block) -> BlockAction {
        let h = block.hash();
        if self.blacklist.contains(&h) {
            return BlockAction::Ignore(IgnoreReason::Blacklisted);
        }
        if self.view.contains_block(&h) {
            return BlockAction::Ignore(IgnoreReason::AlreadyKnown);
        }
        if block.check_structure(self.params.block_size).is_err()
            || !block.verify_seal()
            || !self.thresholds_met(&block)
        {
            return BlockAction::Ignore(IgnoreReason::Malformed);
        }
        if !self.proofs_valid(&block) {
            return BlockAction::Ignore(IgnoreReason::InvalidPoc);
        }
        match self.view.add_block(block.clone()) {
            Ok(_) => {
                for tx in &block.transactions {
                    self.heard.remove(&tx.id());
                }
                BlockAction::VerifyAndAdd(block)
            }
            Err(LedgerError::Conflict { .. }) => {
                self.blacklist.insert(h);
                BlockAction::Ignore(IgnoreReason::Conflict)
            }
            Err(_) => BlockAction::Ignore(IgnoreReason::Malformed),
        }
    }
}

/// Messages carried on the simulated wire.
#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Tx(Transaction),
    TxAck { tx_id: Digest, from: PublicKey },
    BlockProposal(Block),
    BlockVerified(Block),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub origin_slot: Slot,
    pub message: WireMessage,
}

impl Canonical for Envelope {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.origin_slot);
        match &self.message {
            WireMessage::Tx(tx) => {
                enc.u8(0);
                tx.encode(enc);
            }
            WireMessage::TxAck { tx_id, from } => {
                enc.u8(1).raw(tx_id.as_bytes()).raw(from.as_bytes());
            }
            WireMessage::BlockProposal(b) => {
                enc.u8(2);
                b.encode(enc);
            }
            WireMessage::BlockVerified(b) => {
                enc.u8(3);
                b.encode(enc);
            }
        }
    }
}

impl Envelope {
    pub fn hash(&self) -> Digest {
        Digest::of_canonical(self)
    }
}
