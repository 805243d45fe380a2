//! The DAG ledger: transactions, blocks, regenesis checkpoints and the
//! per-corroborator view that ties them together.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::codec::{Canonical, Encoder};
use crate::crypto::{Digest, KeyPair, PrfKey, PublicKey, Signature};
use crate::geo::mean_pairwise_distance;
use crate::poc::ContextProof;
use crate::{Credits, Slot};

/// Counterparty of netting transactions. It has no key pair and its balance
/// is excluded from supply totals.
pub const VIRTUAL_USER: PublicKey = PublicKey([0; 32]);

/// Tolerance for the recorded average signer distance.
pub const DISTANCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("input {0} is not in this view")]
    UnknownInput(Digest),
    #[error("regenesis block carries {have} valid committee signatures, {need} required")]
    UnverifiedRegenesis { have: usize, need: usize },
    #[error("regenesis block does not extend the local regenesis chain")]
    RegenesisMismatch,
    #[error("input {input} of {sender:?} already spent by {existing}, rejecting {incoming}")]
    Conflict {
        input: Digest,
        sender: PublicKey,
        existing: Digest,
        incoming: Digest,
    },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("block {0} already in view")]
    Duplicate(Digest),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TxKind {
    Normal,
    /// Deposit that is burned if its owner misbehaves during PoE.
    ConditionalSelf,
    /// Summary transfer to or from the virtual user. Carries no inputs.
    Netting,
}

impl TxKind {
    fn code(self) -> u8 {
        match self {
            TxKind::Normal => 0,
            TxKind::ConditionalSelf => 1,
            TxKind::Netting => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwarderSig {
    pub forwarder: PublicKey,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sender: PublicKey,
    pub receiver: PublicKey,
    pub amount: Credits,
    pub tx_fee: Credits,
    pub block_fee: Credits,
    pub inputs: BTreeSet<Digest>,
    pub forwarder_signatures: Vec<ForwarderSig>,
    pub created_at: Slot,
    pub kind: TxKind,
}

impl Transaction {
    pub fn normal(
        sender: PublicKey,
        receiver: PublicKey,
        amount: Credits,
        inputs: impl IntoIterator<Item = Digest>,
        created_at: Slot,
    ) -> Self {
        Self {
            sender,
            receiver,
            amount,
            tx_fee: 0,
            block_fee: 0,
            inputs: inputs.into_iter().collect(),
            forwarder_signatures: Vec::new(),
            created_at,
            kind: TxKind::Normal,
        }
    }

    pub fn with_fees(mut self, tx_fee: Credits, block_fee: Credits) -> Self {
        self.tx_fee = tx_fee;
        self.block_fee = block_fee;
        self
    }

    pub fn conditional_self(
        owner: PublicKey,
        amount: Credits,
        inputs: impl IntoIterator<Item = Digest>,
        created_at: Slot,
    ) -> Self {
        Self {
            kind: TxKind::ConditionalSelf,
            ..Self::normal(owner, owner, amount, inputs, created_at)
        }
    }

    pub fn netting(sender: PublicKey, receiver: PublicKey, amount: Credits, created_at: Slot) -> Self {
        Self {
            kind: TxKind::Netting,
            ..Self::normal(sender, receiver, amount, [], created_at)
        }
    }

    /// Identifier over every field except the forwarder chain, so relaying
    /// never changes a transaction's identity.
    pub fn id(&self) -> Digest {
        let mut enc = Encoder::new();
        self.encode_body(&mut enc);
        Digest::of(&enc.finish())
    }

    fn encode_body(&self, enc: &mut Encoder) {
        enc.u8(self.kind.code())
            .raw(self.sender.as_bytes())
            .raw(self.receiver.as_bytes())
            .u64(self.amount)
            .u64(self.tx_fee)
            .u64(self.block_fee)
            .len_prefix(self.inputs.len());
        for input in &self.inputs {
            enc.raw(input.as_bytes());
        }
        enc.u64(self.created_at);
    }

    /// Total debited from the sender.
    pub fn total_cost(&self) -> Credits {
        self.amount + self.tx_fee + self.block_fee
    }

    pub fn is_well_formed(&self) -> bool {
        match self.kind {
            TxKind::Normal => !self.inputs.is_empty(),
            TxKind::ConditionalSelf => !self.inputs.is_empty() && self.sender == self.receiver,
            TxKind::Netting => {
                self.inputs.is_empty()
                    && self.tx_fee == 0
                    && self.block_fee == 0
                    && (self.sender == VIRTUAL_USER) != (self.receiver == VIRTUAL_USER)
            }
        }
    }

    fn forward_preimage(&self, prev: Option<&Signature>) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(b"mneme/forward/v1").raw(self.id().as_bytes());
        match prev {
            Some(sig) => enc.raw(&sig.0),
            None => enc.raw(&[0u8; 64]),
        };
        enc.finish()
    }

    /// Appends the forwarder's signature, chained to the previous one.
    pub fn add_forwarder(&mut self, keys: &KeyPair) {
        let msg = self.forward_preimage(self.forwarder_signatures.last().map(|f| &f.signature));
        self.forwarder_signatures.push(ForwarderSig {
            forwarder: keys.public_key,
            signature: keys.sign(&msg),
        });
    }

    /// Checks every link of the forwarder chain in order.
    pub fn verify_forwarder_chain(&self) -> bool {
        let mut prev: Option<&Signature> = None;
        let mut seen = BTreeSet::new();
        for f in &self.forwarder_signatures {
            if !seen.insert(f.forwarder) || !f.forwarder.verify(&self.forward_preimage(prev), &f.signature) {
                return false;
            }
            prev = Some(&f.signature);
        }
        true
    }

    pub fn forwarders(&self) -> impl Iterator<Item = &PublicKey> {
        self.forwarder_signatures.iter().map(|f| &f.forwarder)
    }
}

impl Canonical for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_body(enc);
        enc.len_prefix(self.forwarder_signatures.len());
        for f in &self.forwarder_signatures {
            enc.raw(f.forwarder.as_bytes()).raw(&f.signature.0);
        }
    }
}

/// A D_b entry: a signer together with its context proof.
#[derive(Debug, Clone, PartialEq)]
pub struct Signer {
    pub key: PublicKey,
    pub proof: ContextProof,
}

/// Proof that a block met the signature and dispersion thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub verifier: PublicKey,
    pub signer_count: usize,
    pub avg_signer_distance: f64,
    pub signature: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    Regular,
    /// Output of epoch netting; holds up to B netting transactions.
    Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    pub transactions: Vec<Transaction>,
    pub parents: BTreeSet<Digest>,
    pub signers: Vec<Signer>,
    pub avg_signer_distance: f64,
    pub creator: PublicKey,
    pub created_at: Slot,
    /// Nodes that relayed the block proposal; they share φ_c of the block fees.
    pub forwarders: Vec<PublicKey>,
    pub verification: Option<Verification>,
}

impl Block {
    pub fn new(
        transactions: Vec<Transaction>,
        parents: BTreeSet<Digest>,
        creator: PublicKey,
        created_at: Slot,
    ) -> Self {
        Self {
            kind: BlockKind::Regular,
            transactions,
            parents,
            signers: Vec::new(),
            avg_signer_distance: 0.0,
            creator,
            created_at,
            forwarders: Vec::new(),
            verification: None,
        }
    }

    pub fn summary(transactions: Vec<Transaction>, parent: Digest, created_at: Slot) -> Self {
        Self {
            kind: BlockKind::Summary,
            ..Self::new(transactions, BTreeSet::from([parent]), VIRTUAL_USER, created_at)
        }
    }

    /// Hash of the header. Signer entries and the running distance are
    /// excluded because they grow while the block travels.
    pub fn hash(&self) -> Digest {
        let mut enc = Encoder::new();
        self.encode_header(&mut enc);
        Digest::of(&enc.finish())
    }

    fn encode_header(&self, enc: &mut Encoder) {
        enc.u8(matches!(self.kind, BlockKind::Summary) as u8)
            .raw(self.creator.as_bytes())
            .u64(self.created_at)
            .len_prefix(self.parents.len());
        for p in &self.parents {
            enc.raw(p.as_bytes());
        }
        enc.len_prefix(self.transactions.len());
        for tx in &self.transactions {
            enc.raw(tx.id().as_bytes());
        }
    }

    pub fn signer_keys(&self) -> impl Iterator<Item = &PublicKey> {
        self.signers.iter().map(|s| &s.key)
    }

    pub fn has_signer(&self, pk: &PublicKey) -> bool {
        self.signers.iter().any(|s| &s.key == pk)
    }

    pub fn recompute_avg_signer_distance(&self) -> f64 {
        let points: Vec<_> = self.signers.iter().map(|s| s.proof.location).collect();
        mean_pairwise_distance(&points).unwrap_or(0.0)
    }

    /// Adds a signer and refreshes the running average distance.
    pub fn push_signer(&mut self, signer: Signer) {
        self.signers.push(signer);
        self.avg_signer_distance = self.recompute_avg_signer_distance();
    }

    pub fn total_block_fees(&self) -> Credits {
        self.transactions.iter().map(|t| t.block_fee).sum()
    }

    /// Structural checks that do not need a view.
    pub fn check_structure(&self, block_size: usize) -> Result<(), LedgerError> {
        let bad = |m: String| Err(LedgerError::InvalidBlock(m));
        match self.kind {
            BlockKind::Regular if self.transactions.len() != block_size => {
                return bad(format!(
                    "{} transactions, expected {block_size}",
                    self.transactions.len()
                ));
            }
            BlockKind::Summary if self.transactions.is_empty() || self.transactions.len() > block_size => {
                return bad(format!("summary block with {} transactions", self.transactions.len()));
            }
            _ => {}
        }
        if self.parents.is_empty() {
            return bad("no parents".into());
        }
        for tx in &self.transactions {
            let netting = tx.kind == TxKind::Netting;
            if !tx.is_well_formed() || netting != (self.kind == BlockKind::Summary) {
                return bad(format!("malformed transaction {}", tx.id()));
            }
        }
        let mut spent: BTreeMap<(Digest, PublicKey), Digest> = BTreeMap::new();
        for tx in &self.transactions {
            let id = tx.id();
            for input in &tx.inputs {
                if let Some(prev) = spent.insert((*input, tx.sender), id) {
                    return bad(format!("transactions {prev} and {id} spend the same input"));
                }
            }
        }
        let mut keys = BTreeSet::new();
        for s in &self.signers {
            if !keys.insert(s.key) || s.proof.commitment.committer != s.key {
                return bad(format!("bad signer entry {:?}", s.key));
            }
        }
        if (self.recompute_avg_signer_distance() - self.avg_signer_distance).abs() > DISTANCE_TOLERANCE {
            return bad("recorded signer distance does not match signer locations".into());
        }
        Ok(())
    }

    /// Fees earned by each participant of this block.
    pub fn fee_rewards(&self, phi_c: f64) -> BTreeMap<PublicKey, Credits> {
        let mut out = BTreeMap::new();
        if self.kind == BlockKind::Summary {
            return out;
        }
        for tx in &self.transactions {
            let fwd: Vec<PublicKey> = tx.forwarders().copied().collect();
            let rem_to = fwd.first().copied().unwrap_or(self.creator);
            split_equal(tx.tx_fee, &fwd, rem_to, &mut out);
        }
        let total = self.total_block_fees();
        let to_forwarders = ((phi_c * total as f64).floor() as Credits).min(total);
        let rem_to = self.forwarders.first().copied().unwrap_or(self.creator);
        split_equal(to_forwarders, &self.forwarders, rem_to, &mut out);
        let signers: Vec<PublicKey> = self.signer_keys().copied().collect();
        split_equal(total - to_forwarders, &signers, self.creator, &mut out);
        out
    }

    /// Net balance change for every account touched by this block.
    pub fn balance_effects(&self, phi_c: f64) -> BTreeMap<PublicKey, i64> {
        let mut out: BTreeMap<PublicKey, i64> = BTreeMap::new();
        for tx in &self.transactions {
            *out.entry(tx.sender).or_default() -= tx.total_cost() as i64;
            *out.entry(tx.receiver).or_default() += tx.amount as i64;
        }
        for (pk, fee) in self.fee_rewards(phi_c) {
            *out.entry(pk).or_default() += fee as i64;
        }
        out
    }

    /// Credits this block makes available to `pk` as a transaction input.
    pub fn credit_to(&self, pk: &PublicKey, phi_c: f64) -> Credits {
        let received: Credits = self
            .transactions
            .iter()
            .filter(|t| &t.receiver == pk && t.kind != TxKind::ConditionalSelf)
            .map(|t| t.amount)
            .sum();
        received + self.fee_rewards(phi_c).get(pk).copied().unwrap_or(0)
    }

    fn verification_preimage(&self, signer_count: usize, avg: f64) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(b"mneme/verified/v1")
            .raw(self.hash().as_bytes())
            .u64(signer_count as u64)
            .f64(avg);
        for s in &self.signers {
            enc.raw(s.key.as_bytes());
        }
        enc.finish()
    }

    /// Seals the block as verified by `keys`.
    pub fn seal(&mut self, keys: &KeyPair) {
        let n = self.signers.len();
        let avg = self.avg_signer_distance;
        let signature = keys.sign(&self.verification_preimage(n, avg));
        self.verification = Some(Verification {
            verifier: keys.public_key,
            signer_count: n,
            avg_signer_distance: avg,
            signature,
        });
    }

    pub fn verify_seal(&self) -> bool {
        self.verification.is_some_and(|v| {
            v.signer_count == self.signers.len()
                && v.avg_signer_distance == self.avg_signer_distance
                && v.verifier.verify(
                    &self.verification_preimage(v.signer_count, v.avg_signer_distance),
                    &v.signature,
                )
        })
    }
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_header(enc);
        for tx in &self.transactions {
            tx.encode(enc);
        }
        enc.len_prefix(self.signers.len());
        for s in &self.signers {
            enc.raw(s.key.as_bytes());
            s.proof.encode(enc);
        }
        enc.f64(self.avg_signer_distance);
        enc.len_prefix(self.forwarders.len());
        for f in &self.forwarders {
            enc.raw(f.as_bytes());
        }
        if let Some(v) = &self.verification {
            enc.u8(1)
                .raw(v.verifier.as_bytes())
                .u64(v.signer_count as u64)
                .f64(v.avg_signer_distance)
                .raw(&v.signature.0);
        } else {
            enc.u8(0);
        }
    }
}

/// Splits `total` equally; the indivisible remainder goes to `remainder_to`.
/// With no recipients everything goes to `remainder_to`.
pub fn split_equal(
    total: Credits,
    recipients: &[PublicKey],
    remainder_to: PublicKey,
    out: &mut BTreeMap<PublicKey, Credits>,
) {
    if total == 0 {
        return;
    }
    if recipients.is_empty() {
        *out.entry(remainder_to).or_default() += total;
        return;
    }
    let share = total / recipients.len() as Credits;
    let rem = total % recipients.len() as Credits;
    for r in recipients {
        *out.entry(*r).or_default() += share;
    }
    if rem > 0 {
        *out.entry(remainder_to).or_default() += rem;
    }
}

/// Root of the DAG and the parameters every node reads from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Genesis {
    pub prf_key: PrfKey,
    pub reputations: BTreeMap<PublicKey, f64>,
    pub randomness: u64,
    pub allocations: BTreeMap<PublicKey, Credits>,
    pub phi_c: f64,
    pub block_size: usize,
}

impl Genesis {
    /// Genesis with uniform reputation over the allocated accounts.
    pub fn new(prf_key: PrfKey, allocations: BTreeMap<PublicKey, Credits>, randomness: u64) -> Self {
        let n = allocations.len().max(1) as f64;
        Self {
            prf_key,
            reputations: allocations.keys().map(|k| (*k, 1.0 / n)).collect(),
            randomness,
            allocations,
            phi_c: 0.5,
            block_size: 4,
        }
    }

    pub fn hash(&self) -> Digest {
        Digest::of_canonical(self)
    }
}

impl Canonical for Genesis {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(b"mneme/genesis/v1").raw(&self.prf_key.0).u64(self.randomness);
        enc.len_prefix(self.reputations.len());
        for (k, r) in &self.reputations {
            enc.raw(k.as_bytes()).f64(*r);
        }
        enc.len_prefix(self.allocations.len());
        for (k, a) in &self.allocations {
            enc.raw(k.as_bytes()).u64(*a);
        }
        enc.f64(self.phi_c).u64(self.block_size as u64);
    }
}

/// Committee-signed checkpoint that replaces an epoch of blocks with its
/// balance-equivalent summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RegenesisBlock {
    pub epoch: u64,
    pub prev_regenesis: Digest,
    pub summarized_headers: BTreeSet<Digest>,
    pub summary_blocks: Vec<Block>,
    pub reputation_table: BTreeMap<PublicKey, f64>,
    pub minted: Credits,
    /// Conditional-self deposits destroyed because their owners misbehaved.
    pub burned: BTreeMap<PublicKey, Credits>,
    pub committee: BTreeSet<PublicKey>,
    pub quorum: usize,
    pub randomness: u64,
    pub committee_signatures: Vec<(PublicKey, Signature)>,
}

impl RegenesisBlock {
    /// Hash of everything except the committee signatures.
    pub fn hash(&self) -> Digest {
        let mut enc = Encoder::new();
        enc.raw(b"mneme/regenesis/v1")
            .u64(self.epoch)
            .raw(self.prev_regenesis.as_bytes())
            .len_prefix(self.summarized_headers.len());
        for h in &self.summarized_headers {
            enc.raw(h.as_bytes());
        }
        enc.len_prefix(self.summary_blocks.len());
        for b in &self.summary_blocks {
            b.encode(&mut enc);
        }
        enc.len_prefix(self.reputation_table.len());
        for (k, r) in &self.reputation_table {
            enc.raw(k.as_bytes()).f64(*r);
        }
        enc.u64(self.minted).len_prefix(self.burned.len());
        for (k, c) in &self.burned {
            enc.raw(k.as_bytes()).u64(*c);
        }
        enc.len_prefix(self.committee.len());
        for k in &self.committee {
            enc.raw(k.as_bytes());
        }
        enc.u64(self.quorum as u64).u64(self.randomness);
        Digest::of(&enc.finish())
    }

    pub fn sign(&mut self, keys: &KeyPair) {
        let h = self.hash();
        self.committee_signatures
            .push((keys.public_key, keys.sign(h.as_bytes())));
    }

    /// Distinct committee members whose signature verifies.
    pub fn valid_signature_count(&self) -> usize {
        let h = self.hash();
        self.committee_signatures
            .iter()
            .filter(|(pk, sig)| self.committee.contains(pk) && pk.verify(h.as_bytes(), sig))
            .map(|(pk, _)| *pk)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn is_verified(&self) -> bool {
        self.valid_signature_count() >= self.quorum
    }
}

/// Outcome of offering a block to a view.
#[derive(Debug, Clone, PartialEq)]
pub enum AddOutcome {
    /// Added, together with any orphans it unblocked.
    Added { adopted: Vec<Digest> },
    /// Parked until its parents arrive.
    Orphaned { missing: BTreeSet<Digest> },
}

/// One corroborator's copy of the ledger.
#[derive(Debug, Clone)]
pub struct LedgerView {
    pub owner: PublicKey,
    pub genesis: Genesis,
    genesis_hash: Digest,
    blocks: BTreeMap<Digest, Block>,
    children: BTreeMap<Digest, BTreeSet<Digest>>,
    summarized: BTreeSet<Digest>,
    regenesis_chain: Vec<Digest>,
    reputations: BTreeMap<PublicKey, f64>,
    pending_pool: BTreeMap<Digest, Transaction>,
    accepted_tx_index: BTreeMap<(Digest, PublicKey), Digest>,
    orphans: BTreeMap<Digest, Block>,
    balances: BTreeMap<PublicKey, i64>,
}

impl LedgerView {
    pub fn new(owner: PublicKey, genesis: Genesis) -> Self {
        let balances = genesis.allocations.iter().map(|(k, a)| (*k, *a as i64)).collect();
        Self {
            owner,
            genesis_hash: genesis.hash(),
            reputations: genesis.reputations.clone(),
            genesis,
            blocks: BTreeMap::new(),
            children: BTreeMap::new(),
            summarized: BTreeSet::new(),
            regenesis_chain: Vec::new(),
            pending_pool: BTreeMap::new(),
            accepted_tx_index: BTreeMap::new(),
            orphans: BTreeMap::new(),
            balances,
        }
    }

    pub fn genesis_hash(&self) -> Digest {
        self.genesis_hash
    }

    /// Latest regenesis hash, or the genesis hash before the first one.
    pub fn anchor(&self) -> Digest {
        self.regenesis_chain.last().copied().unwrap_or(self.genesis_hash)
    }

    pub fn regenesis_chain(&self) -> &[Digest] {
        &self.regenesis_chain
    }

    pub fn reputations(&self) -> &BTreeMap<PublicKey, f64> {
        &self.reputations
    }

    pub fn block(&self, h: &Digest) -> Option<&Block> {
        self.blocks.get(h)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&Digest, &Block)> {
        self.blocks.iter()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn contains_block(&self, h: &Digest) -> bool {
        self.blocks.contains_key(h)
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.len()
    }

    /// Whether `h` is a block in the view, a root, or summarized history.
    pub fn knows(&self, h: &Digest) -> bool {
        *h == self.genesis_hash
            || self.blocks.contains_key(h)
            || self.summarized.contains(h)
            || self.regenesis_chain.contains(h)
    }

    pub fn is_summarized(&self, h: &Digest) -> bool {
        self.summarized.contains(h)
    }

    /// Blocks without incoming links. The genesis counts while nothing
    /// points at it.
    pub fn tips(&self) -> BTreeSet<Digest> {
        let mut out: BTreeSet<Digest> = self
            .blocks
            .keys()
            .filter(|h| self.children.get(*h).is_none_or(|c| c.is_empty()))
            .copied()
            .collect();
        if self.children.get(&self.genesis_hash).is_none_or(|c| c.is_empty()) && out.is_empty() {
            out.insert(self.genesis_hash);
        }
        out
    }

    pub fn pending_pool(&self) -> &BTreeMap<Digest, Transaction> {
        &self.pending_pool
    }

    pub fn accepted_tx_index(&self) -> &BTreeMap<(Digest, PublicKey), Digest> {
        &self.accepted_tx_index
    }

    /// True iff some input of `tx` is already claimed by a different
    /// transaction.
    pub fn detect_conflict(&self, tx: &Transaction) -> bool {
        self.first_conflict(tx).is_some()
    }

    fn first_conflict(&self, tx: &Transaction) -> Option<LedgerError> {
        let id = tx.id();
        tx.inputs.iter().find_map(|input| {
            self.accepted_tx_index
                .get(&(*input, tx.sender))
                .filter(|existing| **existing != id)
                .map(|existing| LedgerError::Conflict {
                    input: *input,
                    sender: tx.sender,
                    existing: *existing,
                    incoming: id,
                })
        })
    }

    /// Credits a known input makes available to `who`.
    pub fn input_credit(&self, input: &Digest, who: &PublicKey) -> Result<Credits, LedgerError> {
        if *input == self.genesis_hash {
            return Ok(self.genesis.allocations.get(who).copied().unwrap_or(0));
        }
        if let Some(b) = self.blocks.get(input) {
            return Ok(b.credit_to(who, self.genesis.phi_c));
        }
        if self.knows(input) {
            return Ok(0);
        }
        Err(LedgerError::UnknownInput(*input))
    }

    /// Whether the cited inputs exist, are unspent by another transaction,
    /// and cover the amount plus fees.
    pub fn validate_ownership(&self, tx: &Transaction) -> Result<bool, LedgerError> {
        if tx.kind == TxKind::Netting {
            return Ok(tx.is_well_formed());
        }
        let mut total: Credits = 0;
        for input in &tx.inputs {
            total += self.input_credit(input, &tx.sender)?;
        }
        if !tx.is_well_formed() || self.detect_conflict(tx) {
            return Ok(false);
        }
        Ok(total >= tx.total_cost())
    }

    fn register_spends(&mut self, tx: &Transaction) {
        if tx.kind == TxKind::Netting {
            return;
        }
        let id = tx.id();
        for input in &tx.inputs {
            self.accepted_tx_index.insert((*input, tx.sender), id);
        }
    }

    /// Records an acknowledged transaction in the pending pool.
    pub fn accept_into_pool(&mut self, tx: Transaction) -> Result<(), LedgerError> {
        if let Some(err) = self.first_conflict(&tx) {
            return Err(err);
        }
        self.register_spends(&tx);
        self.pending_pool.insert(tx.id(), tx);
        Ok(())
    }

    pub fn remove_pending(&mut self, id: &Digest) -> Option<Transaction> {
        self.pending_pool.remove(id)
    }

    /// Adds a verified block, or parks it if a parent is missing.
    pub fn add_block(&mut self, block: Block) -> Result<AddOutcome, LedgerError> {
        let h = block.hash();
        if self.blocks.contains_key(&h) || self.orphans.contains_key(&h) {
            return Err(LedgerError::Duplicate(h));
        }
        block.check_structure(self.genesis.block_size)?;
        for tx in &block.transactions {
            if let Some(err) = self.first_conflict(tx) {
                return Err(err);
            }
        }
        let missing: BTreeSet<Digest> = block.parents.iter().filter(|p| !self.knows(p)).copied().collect();
        if !missing.is_empty() {
            self.orphans.insert(h, block);
            return Ok(AddOutcome::Orphaned { missing });
        }
        self.insert_block(h, block);
        let adopted = self.adopt_orphans();
        Ok(AddOutcome::Added { adopted })
    }

    fn insert_block(&mut self, h: Digest, block: Block) {
        for tx in &block.transactions {
            self.register_spends(tx);
            self.pending_pool.remove(&tx.id());
        }
        for (pk, d) in block.balance_effects(self.genesis.phi_c) {
            *self.balances.entry(pk).or_default() += d;
        }
        for p in &block.parents {
            self.children.entry(*p).or_default().insert(h);
        }
        self.blocks.insert(h, block);
    }

    fn adopt_orphans(&mut self) -> Vec<Digest> {
        let mut adopted = Vec::new();
        loop {
            let ready: Vec<Digest> = self
                .orphans
                .iter()
                .filter(|(_, b)| b.parents.iter().all(|p| self.knows(p)))
                .map(|(h, _)| *h)
                .collect();
            if ready.is_empty() {
                return adopted;
            }
            for h in ready {
                let block = self.orphans.remove(&h).expect("listed orphan");
                if block.transactions.iter().any(|tx| self.detect_conflict(tx)) {
                    continue;
                }
                self.insert_block(h, block);
                adopted.push(h);
            }
        }
    }

    /// Signed balance; negative only if the view holds inconsistent history.
    pub fn balance(&self, who: &PublicKey) -> i64 {
        self.balances.get(who).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> &BTreeMap<PublicKey, i64> {
        &self.balances
    }

    /// Sum of all real accounts.
    pub fn total_supply(&self) -> i64 {
        self.balances
            .iter()
            .filter(|(k, _)| **k != VIRTUAL_USER)
            .map(|(_, v)| v)
            .sum()
    }

    /// Bytes needed to store every block in the view.
    pub fn storage_bytes(&self) -> usize {
        self.blocks.values().map(|b| b.canonical_bytes().len()).sum()
    }

    /// Applies a verified regenesis block: deletes the summarized blocks,
    /// installs the summary blocks and burns forfeited deposits.
    pub fn prune(&mut self, rb: &RegenesisBlock) -> Result<usize, LedgerError> {
        let have = rb.valid_signature_count();
        if have < rb.quorum || rb.quorum == 0 {
            return Err(LedgerError::UnverifiedRegenesis {
                have,
                need: rb.quorum.max(1),
            });
        }
        if rb.prev_regenesis != self.anchor() {
            return Err(LedgerError::RegenesisMismatch);
        }
        let mut deleted = 0;
        for h in &rb.summarized_headers {
            if let Some(block) = self.blocks.remove(h) {
                for (pk, d) in block.balance_effects(self.genesis.phi_c) {
                    *self.balances.entry(pk).or_default() -= d;
                }
                for p in &block.parents {
                    if let Some(c) = self.children.get_mut(p) {
                        c.remove(h);
                    }
                }
                deleted += 1;
            }
            self.children.remove(h);
            self.orphans.remove(h);
            self.summarized.insert(*h);
        }
        for sb in &rb.summary_blocks {
            self.insert_block(sb.hash(), sb.clone());
        }
        for (pk, c) in &rb.burned {
            *self.balances.entry(*pk).or_default() -= *c as i64;
        }
        self.reputations = rb.reputation_table.clone();
        self.regenesis_chain.push(rb.hash());
        Ok(deleted)
    }

    /// Structured export for debugging.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            owner: self.owner,
            anchor: self.anchor(),
            blocks: self
                .blocks
                .iter()
                .map(|(h, b)| BlockSummary {
                    hash: *h,
                    kind: b.kind,
                    creator: b.creator,
                    created_at: b.created_at,
                    transactions: b.transactions.len(),
                    signers: b.signers.len(),
                    avg_signer_distance: b.avg_signer_distance,
                })
                .collect(),
            edges: self
                .blocks
                .iter()
                .flat_map(|(h, b)| b.parents.iter().map(move |p| (*h, *p)))
                .collect(),
            tips: self.tips().into_iter().collect(),
            balances: self.balances.clone(),
        }
    }

    /// Topological order of the view's blocks, if one exists.
    pub fn topological_order(&self) -> Option<Vec<Digest>> {
        let mut indeg: BTreeMap<Digest, usize> = BTreeMap::new();
        for (h, b) in &self.blocks {
            indeg.entry(*h).or_default();
            for p in &b.parents {
                if self.blocks.contains_key(p) {
                    *indeg.entry(*h).or_default() += 1;
                }
            }
        }
        let mut ready: Vec<Digest> = indeg.iter().filter(|(_, d)| **d == 0).map(|(h, _)| *h).collect();
        let mut order = Vec::with_capacity(self.blocks.len());
        while let Some(h) = ready.pop() {
            order.push(h);
            for c in self.children.get(&h).into_iter().flatten() {
                if let Some(d) = indeg.get_mut(c) {
                    *d -= 1;
                    if *d == 0 {
                        ready.push(*c);
                    }
                }
            }
        }
        (order.len() == self.blocks.len()).then_some(order)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub hash: Digest,
    pub kind: BlockKind,
    pub creator: PublicKey,
    pub created_at: Slot,
    pub transactions: usize,
    pub signers: usize,
    pub avg_signer_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub owner: PublicKey,
    pub anchor: Digest,
    pub blocks: Vec<BlockSummary>,
    pub edges: Vec<(Digest, Digest)>,
    pub tips: Vec<Digest>,
    pub balances: BTreeMap<PublicKey, i64>,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot is serializable")
    }
}
