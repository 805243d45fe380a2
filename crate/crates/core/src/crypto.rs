//! Identities, signatures, digests and the location-commitment primitives
//! behind Proofs-of-Context.
//!
//! A corroborator scans its neighbourhood and produces a [`LocationMessage`],
//! derives a fixed-size [`Tag`] from it with the network-wide keyed PRF
//! (HMAC-SHA256, keyed from the genesis block), and signs both into a
//! [`Commitment`]. Neighbours answer the commitment with a signed
//! [`Attestation`] that is bound to the commitment digest, so an answer can
//! never be replayed against a different claim.

use std::collections::BTreeSet;
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hmac::{Hmac, Mac};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::geo::{Area, Point};
use crate::Slot;

pub const DIGEST_LEN: usize = 32;

const KEYGEN_DOMAIN: &[u8] = b"mneme/keygen/v1";
const COMMITMENT_DOMAIN: &[u8] = b"mneme/commitment/v1";
const ATTESTATION_DOMAIN: &[u8] = b"mneme/attestation/v1";

#[derive(Debug, Error, PartialEq)]
pub enum CryptoError {
    #[error("tag does not match the location message")]
    TagMismatch,
    #[error("commitment signature does not verify")]
    InvalidCommitment,
    #[error("location {0:?} lies outside the deployment area")]
    OutOfArea(Point),
    #[error("a location message may not list its sender as a neighbour")]
    SelfNeighbor,
    #[error("malformed payload: {0}")]
    Malformed(#[from] DecodeError),
}

/// 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn of_canonical<T: Canonical + ?Sized>(value: &T) -> Self {
        Self::of(&value.canonical_bytes())
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// First eight bytes as an integer; used to derive seeds from digests.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().expect("8 bytes"))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Self(out))
    }
}

/// A corroborator's identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify(message, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pk:{}", &self.to_hex()[..10])
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Self(out))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sig:{}", &hex::encode(&self.0[..6]))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 64];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Self(out))
    }
}

#[derive(Clone)]
pub struct SecretKey(SigningKey);

impl SecretKey {
    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.0.sign(message).to_bytes())
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub secret_key: SecretKey,
}

impl KeyPair {
    pub fn sign(&self, message: &[u8]) -> Signature {
        self.secret_key.sign(message)
    }
}

/// Deterministic key derivation so simulated identities are reproducible.
pub fn generate_keypair(seed: u64) -> KeyPair {
    let mut h = Sha256::new();
    h.update(KEYGEN_DOMAIN);
    h.update(seed.to_le_bytes());
    let secret: [u8; 32] = h.finalize().into();
    let secret_key = SecretKey(SigningKey::from_bytes(&secret));
    KeyPair {
        public_key: secret_key.public_key(),
        secret_key,
    }
}

/// Key of the network-wide pseudo-random function, published in genesis.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrfKey(pub [u8; 32]);

impl PrfKey {
    pub fn derive(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"mneme/prf-key/v1");
        h.update(seed.to_le_bytes());
        Self(h.finalize().into())
    }
}

impl fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrfKey(..)")
    }
}

/// What a corroborator claims about itself at a given slot: where it is and
/// who it can hear.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationMessage {
    pub location: Point,
    pub neighbor_ids: BTreeSet<PublicKey>,
    pub timestamp: Slot,
}

impl LocationMessage {
    pub fn new(
        sender: &PublicKey,
        location: Point,
        neighbor_ids: BTreeSet<PublicKey>,
        timestamp: Slot,
        area: &Area,
    ) -> Result<Self, CryptoError> {
        if !area.contains(&location) {
            return Err(CryptoError::OutOfArea(location));
        }
        if neighbor_ids.contains(sender) {
            return Err(CryptoError::SelfNeighbor);
        }
        Ok(Self {
            location,
            neighbor_ids,
            timestamp,
        })
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let location = Point::new(dec.f64()?, dec.f64()?);
        let n = dec.u32()? as usize;
        let mut neighbor_ids = BTreeSet::new();
        for _ in 0..n {
            neighbor_ids.insert(PublicKey(dec.array()?));
        }
        let timestamp = dec.u64()?;
        Ok(Self {
            location,
            neighbor_ids,
            timestamp,
        })
    }
}

impl Canonical for LocationMessage {
    fn encode(&self, enc: &mut Encoder) {
        enc.f64(self.location.x).f64(self.location.y);
        enc.len_prefix(self.neighbor_ids.len());
        for id in &self.neighbor_ids {
            enc.raw(id.as_bytes());
        }
        enc.u64(self.timestamp);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag(pub [u8; DIGEST_LEN]);

impl Tag {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `tag = HMAC-SHA256(prf_key, canonical(m))`.
pub fn produce_tag(prf: &PrfKey, m: &LocationMessage) -> Tag {
    let mut mac = Hmac::<Sha256>::new_from_slice(&prf.0).expect("HMAC accepts any key length");
    mac.update(&m.canonical_bytes());
    Tag(mac.finalize().into_bytes().into())
}

/// A signed, self-contained location claim.
#[derive(Debug, Clone, PartialEq)]
pub struct Commitment {
    pub committer: PublicKey,
    pub payload: Vec<u8>,
    pub signature: Signature,
}

fn commitment_preimage(committer: &PublicKey, payload: &[u8]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.raw(COMMITMENT_DOMAIN).raw(committer.as_bytes()).bytes(payload);
    enc.finish()
}

/// Signs `(m, tag)` with the committer's secret key.
pub fn commit(keys: &KeyPair, prf: &PrfKey, m: &LocationMessage, tag: Tag) -> Result<Commitment, CryptoError> {
    if produce_tag(prf, m) != tag {
        return Err(CryptoError::TagMismatch);
    }
    if m.neighbor_ids.contains(&keys.public_key) {
        return Err(CryptoError::SelfNeighbor);
    }
    let mut enc = Encoder::new();
    m.encode(&mut enc);
    enc.raw(&tag.0);
    let payload = enc.finish();
    let signature = keys.sign(&commitment_preimage(&keys.public_key, &payload));
    Ok(Commitment {
        committer: keys.public_key,
        payload,
        signature,
    })
}

impl Commitment {
    pub fn verify(&self, pk: &PublicKey) -> bool {
        pk.verify(&commitment_preimage(pk, &self.payload), &self.signature)
    }

    /// Recovers the committed location message and tag.
    pub fn open(&self) -> Result<(LocationMessage, Tag), CryptoError> {
        let mut dec = Decoder::new(&self.payload);
        let m = LocationMessage::decode(&mut dec)?;
        let tag = Tag(dec.array()?);
        dec.finish()?;
        Ok((m, tag))
    }

    pub fn hash(&self) -> Digest {
        Digest::of_canonical(self)
    }
}

impl Canonical for Commitment {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(self.committer.as_bytes())
            .bytes(&self.payload)
            .raw(&self.signature.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
}

/// A neighbour's signed answer to a commitment.
#[derive(Debug, Clone, PartialEq)]
pub struct Attestation {
    pub commitment_hash: Digest,
    pub answer: Answer,
    pub verifier: PublicKey,
    pub verifier_location: Point,
    pub timestamp: Slot,
    pub signature: Signature,
}

impl Attestation {
    fn preimage(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(ATTESTATION_DOMAIN)
            .raw(self.commitment_hash.as_bytes())
            .u8(matches!(self.answer, Answer::Yes) as u8)
            .raw(self.verifier.as_bytes())
            .f64(self.verifier_location.x)
            .f64(self.verifier_location.y)
            .u64(self.timestamp);
        enc.finish()
    }

    /// Verifies the signature under an explicit key.
    pub fn verify_with(&self, pk: &PublicKey) -> bool {
        pk.verify(&self.preimage(), &self.signature)
    }

    /// Verifies the signature under the embedded verifier key.
    pub fn verify(&self) -> bool {
        self.verify_with(&self.verifier)
    }

    pub fn is_yes(&self) -> bool {
        self.answer == Answer::Yes
    }
}

impl Canonical for Attestation {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(&self.preimage()).raw(&self.signature.0);
    }
}

/// Answers a neighbour's location claim.
///
/// The answer is `Yes` iff the claimed location lies strictly within
/// `radius` of the verifier and the claimant listed the verifier among its
/// neighbours.
pub fn verify_neighbor_claim(
    verifier: &KeyPair,
    verifier_location: Point,
    comm: &Commitment,
    radius: f64,
    timestamp: Slot,
) -> Result<Attestation, CryptoError> {
    if !comm.verify(&comm.committer) {
        return Err(CryptoError::InvalidCommitment);
    }
    let (m, _) = comm.open()?;
    let near = m.location.distance(&verifier_location) < radius;
    let listed = m.neighbor_ids.contains(&verifier.public_key);
    let answer = if near && listed { Answer::Yes } else { Answer::No };
    let mut att = Attestation {
        commitment_hash: comm.hash(),
        answer,
        verifier: verifier.public_key,
        verifier_location,
        timestamp,
        signature: Signature([0; 64]),
    };
    att.signature = verifier.sign(&att.preimage());
    Ok(att)
}
