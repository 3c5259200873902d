// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Identifiers, random-oracle hashing, canonical byte encodings and the
//! signature abstraction shared by every other module.
//!
//! Every concatenation fed into the hash is a sequence of length-prefixed
//! fields: a 4-byte big-endian length followed by the field bytes. An
//! [`Identifier`] of width `s` is encoded as its `ceil(s / 8)` big-endian
//! bytes.

use std::collections::HashMap;
use std::fmt;

use ed25519_dalek::{Signer as _, Verifier as _};
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest supported identifier width in bits.
pub const MAX_WIDTH: u16 = 256;

/// Bit width `s` of an identifier space, `1 <= s <= 256`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Width(u16);

impl Width {
    pub const DEFAULT_PROTOCOL: Width = Width(256);
    pub const DEFAULT_SIMULATION: Width = Width(64);

    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_WIDTH as u32 {
            return Err(Error::InvalidParameter(format!(
                "identifier width must be in 1..=256, got {bits}"
            )));
        }
        Ok(Width(bits as u16))
    }

    pub fn bits(self) -> u32 {
        self.0 as u32
    }

    /// Number of bytes in the canonical encoding.
    pub fn byte_len(self) -> usize {
        (self.0 as usize).div_ceil(8)
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An unsigned `s`-bit value used as a numerical ID or name ID.
///
/// The value is kept right-aligned in a 32-byte big-endian buffer so that
/// the derived ordering is unsigned integer ordering.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Identifier {
    width: Width,
    value: [u8; 32],
}

impl Identifier {
    pub fn zero(width: Width) -> Self {
        Identifier {
            width,
            value: [0u8; 32],
        }
    }

    /// The largest value representable in `width` bits.
    pub fn max(width: Width) -> Self {
        let mut value = [0xffu8; 32];
        mask_to_width(&mut value, width);
        Identifier { width, value }
    }

    /// Builds an identifier from a `u64`, truncated to the low `width` bits.
    pub fn from_u64(v: u64, width: Width) -> Self {
        let mut value = [0u8; 32];
        value[24..].copy_from_slice(&v.to_be_bytes());
        mask_to_width(&mut value, width);
        Identifier { width, value }
    }

    /// Parses a canonical big-endian byte string of exactly `width.byte_len()` bytes.
    pub fn from_be_bytes(bytes: &[u8], width: Width) -> Result<Self> {
        if bytes.len() != width.byte_len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} bytes for width {width}, got {}",
                width.byte_len(),
                bytes.len()
            )));
        }
        let mut value = [0u8; 32];
        value[32 - bytes.len()..].copy_from_slice(bytes);
        let mut masked = value;
        mask_to_width(&mut masked, width);
        if masked != value {
            return Err(Error::InvalidParameter(format!(
                "value exceeds {width} bits"
            )));
        }
        Ok(Identifier { width, value })
    }

    pub fn from_hex(s: &str, width: Width) -> Result<Self> {
        let bytes = hex::decode(s)
            .map_err(|e| Error::InvalidParameter(format!("bad hex identifier {s:?}: {e}")))?;
        Self::from_be_bytes(&bytes, width)
    }

    pub fn width(&self) -> Width {
        self.width
    }

    /// Canonical encoding: `ceil(s/8)` big-endian bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.value[32 - self.width.byte_len()..]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.as_bytes())
    }

    /// Low 32 bits of the value. Used as the Skip Graph membership vector
    /// of a name ID.
    pub fn low_u32(&self) -> u32 {
        u32::from_be_bytes(self.value[28..].try_into().expect("4 bytes"))
    }

    /// Low 64 bits of the value.
    pub fn low_u64(&self) -> u64 {
        u64::from_be_bytes(self.value[24..].try_into().expect("8 bytes"))
    }

    /// Interprets the value as a fraction of the identifier space, in `[0, 1)`.
    pub fn unit_position(&self) -> f64 {
        let bytes = &self.value[32 - self.width.byte_len()..];
        let mut acc = 0.0f64;
        let mut scale = 1.0f64;
        for b in bytes.iter().take(8) {
            scale /= 256.0;
            acc += *b as f64 * scale;
        }
        // Bits below the top byte-aligned prefix are left out; widths that are
        // not a multiple of 8 are rescaled to the full space.
        let slack = (self.width.byte_len() * 8) as i32 - self.width.bits() as i32;
        acc * 2f64.powi(slack)
    }
}

fn mask_to_width(value: &mut [u8; 32], width: Width) {
    let bits = width.bits() as usize;
    let zero_bits = 256 - bits;
    let full = zero_bits / 8;
    for b in value.iter_mut().take(full) {
        *b = 0;
    }
    let rem = zero_bits % 8;
    if rem > 0 {
        value[full] &= 0xff >> rem;
    }
}

impl fmt::Debug for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Id({})", self.to_hex())
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Returns the first `width` bits of SHA-256(`payload`), read big-endian.
pub fn hash_to_id(payload: &[u8], width: Width) -> Identifier {
    let digest: [u8; 32] = Sha256::digest(payload).into();
    id_from_digest(&digest, width)
}

/// Fallible variant taking a raw bit count, for callers that have not
/// validated the width yet.
pub fn hash_to_id_bits(payload: &[u8], width_bits: u32) -> Result<Identifier> {
    Ok(hash_to_id(payload, Width::new(width_bits)?))
}

fn id_from_digest(digest: &[u8; 32], width: Width) -> Identifier {
    let shift = 256 - width.bits() as usize;
    let byte_shift = shift / 8;
    let bit_shift = shift % 8;
    let mut value = [0u8; 32];
    for i in (0..32).rev() {
        if i < byte_shift {
            break;
        }
        let src = i - byte_shift;
        let mut b = digest[src] >> bit_shift;
        if bit_shift > 0 && src > 0 {
            b |= digest[src - 1] << (8 - bit_shift);
        }
        value[i] = b;
    }
    Identifier { width, value }
}

/// Builder for the length-prefixed canonical encoding.
#[derive(Default, Clone)]
pub struct CanonicalEncoder {
    buf: Vec<u8>,
}

impl CanonicalEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        CanonicalEncoder {
            buf: Vec::with_capacity(cap),
        }
    }

    /// Appends one field: 4-byte big-endian length, then the bytes.
    pub fn field(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn id(&mut self, id: &Identifier) -> &mut Self {
        self.field(id.as_bytes())
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn hash(&self, width: Width) -> Identifier {
        hash_to_id(&self.buf, width)
    }
}

/// Which signature scheme a key pair belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    /// HMAC-SHA-256 with a per-peer secret. The verify key is the secret
    /// itself, so this is only sound inside a simulation that plays the
    /// ideal signature functionality.
    Mac,
    /// Ed25519 signatures.
    Ed25519,
}

#[derive(Clone)]
enum SigningKey {
    // Keeps the keyed HMAC state so each signature skips the key schedule.
    Mac(Box<Hmac<Sha256>>),
    Ed25519(Box<ed25519_dalek::SigningKey>),
}

/// Shared MAC secret with its keyed HMAC state.
#[derive(Clone)]
pub struct MacKey {
    secret: [u8; 32],
    keyed: Hmac<Sha256>,
}

impl MacKey {
    fn new(secret: [u8; 32]) -> Self {
        MacKey {
            secret,
            keyed: Hmac::<Sha256>::new_from_slice(&secret).expect("hmac accepts any key size"),
        }
    }
}

impl PartialEq for MacKey {
    fn eq(&self, other: &Self) -> bool {
        self.secret == other.secret
    }
}

impl Eq for MacKey {}

/// Public verification key.
#[derive(Clone, PartialEq, Eq)]
pub enum VerifyKey {
    Mac(Box<MacKey>),
    Ed25519(ed25519_dalek::VerifyingKey),
}

impl VerifyKey {
    /// Canonical encoding: one scheme tag byte followed by the key bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(33);
        match self {
            VerifyKey::Mac(k) => {
                out.push(0x01);
                out.extend_from_slice(&k.secret);
            }
            VerifyKey::Ed25519(k) => {
                out.push(0x02);
                out.extend_from_slice(k.as_bytes());
            }
        }
        out
    }

    pub fn verify(&self, message: &[u8], sig: &Signature) -> bool {
        match self {
            VerifyKey::Mac(key) => {
                let mut mac = key.keyed.clone();
                mac.update(message);
                mac.verify_slice(&sig.bytes).is_ok()
            }
            VerifyKey::Ed25519(key) => {
                let Ok(bytes) = <[u8; 64]>::try_from(sig.bytes.as_slice()) else {
                    return false;
                };
                key.verify(message, &ed25519_dalek::Signature::from_bytes(&bytes))
                    .is_ok()
            }
        }
    }
}

impl fmt::Debug for VerifyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyKey::Mac(_) => f.write_str("VerifyKey::Mac(..)"),
            VerifyKey::Ed25519(k) => write!(f, "VerifyKey::Ed25519({})", hex::encode(k.as_bytes())),
        }
    }
}

/// A signature together with the identifier of the peer that produced it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub bytes: Vec<u8>,
    pub signer_id: Identifier,
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Signature({} by {})",
            hex::encode(&self.bytes),
            self.signer_id
        )
    }
}

impl Signature {
    pub fn encode_into(&self, enc: &mut CanonicalEncoder) {
        enc.id(&self.signer_id).field(&self.bytes);
    }
}

/// A signing key, its verification key and the identifier derived from it.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    verify: VerifyKey,
    id: Identifier,
}

impl KeyPair {
    /// Deterministically derives a key pair from 32 seed bytes.
    pub fn from_seed(scheme: SchemeKind, seed: [u8; 32], width: Width) -> Self {
        let (signing, verify) = match scheme {
            SchemeKind::Mac => {
                let key = MacKey::new(seed);
                (
                    SigningKey::Mac(Box::new(key.keyed.clone())),
                    VerifyKey::Mac(Box::new(key)),
                )
            }
            SchemeKind::Ed25519 => {
                let sk = ed25519_dalek::SigningKey::from_bytes(&seed);
                let vk = sk.verifying_key();
                (SigningKey::Ed25519(Box::new(sk)), VerifyKey::Ed25519(vk))
            }
        };
        let (id, _) = derive_peer_identifiers(&verify, width);
        KeyPair {
            signing,
            verify,
            id,
        }
    }

    /// Overrides the derived identifier. Test fixtures use this to place
    /// peers at chosen positions of the identifier space.
    pub fn with_id(mut self, id: Identifier) -> Self {
        self.id = id;
        self
    }

    pub fn scheme(&self) -> SchemeKind {
        match self.signing {
            SigningKey::Mac(_) => SchemeKind::Mac,
            SigningKey::Ed25519(_) => SchemeKind::Ed25519,
        }
    }

    pub fn verify_key(&self) -> &VerifyKey {
        &self.verify
    }

    /// The peer's numerical ID (equal to its name ID).
    pub fn id(&self) -> Identifier {
        self.id
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        let bytes = match &self.signing {
            SigningKey::Mac(keyed) => {
                let mut mac = (**keyed).clone();
                mac.update(message);
                mac.finalize().into_bytes().to_vec()
            }
            SigningKey::Ed25519(sk) => sk.sign(message).to_bytes().to_vec(),
        };
        Signature {
            bytes,
            signer_id: self.id,
        }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("scheme", &self.scheme())
            .field("id", &self.id)
            .finish()
    }
}

/// `numID = nameID = H(canonical(verify_key))`.
pub fn derive_peer_identifiers(verify_key: &VerifyKey, width: Width) -> (Identifier, Identifier) {
    let id = hash_to_id(&verify_key.canonical_bytes(), width);
    (id, id)
}

pub fn sign(key: &KeyPair, message: &[u8]) -> Signature {
    key.sign(message)
}

/// Malformed signature bytes verify as `false`.
pub fn verify(verify_key: &VerifyKey, message: &[u8], sig: &Signature) -> bool {
    verify_key.verify(message, sig)
}

/// Resolves peer identifiers to their verification keys.
pub trait KeyDirectory {
    fn verify_key(&self, id: &Identifier) -> Option<&VerifyKey>;

    /// Verifies `sig` over `message` under the key registered for `sig.signer_id`.
    fn verify_signature(&self, message: &[u8], sig: &Signature) -> bool {
        self.verify_key(&sig.signer_id)
            .map(|k| k.verify(message, sig))
            .unwrap_or(false)
    }
}

/// Holds the full key pairs of every simulated peer. The overlay uses it to
/// produce the per-hop signatures of search proofs.
#[derive(Clone, Debug, Default)]
pub struct Keyring {
    keys: HashMap<Identifier, KeyPair>,
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: KeyPair) -> Identifier {
        let id = key.id();
        self.keys.insert(id, key);
        id
    }

    pub fn get(&self, id: &Identifier) -> Option<&KeyPair> {
        self.keys.get(id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

impl KeyDirectory for Keyring {
    fn verify_key(&self, id: &Identifier) -> Option<&VerifyKey> {
        self.keys.get(id).map(|k| k.verify_key())
    }
}

/// Public-key-only directory.
#[derive(Clone, Debug, Default)]
pub struct PublicDirectory {
    keys: HashMap<Identifier, VerifyKey>,
}

impl PublicDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: Identifier, key: VerifyKey) {
        self.keys.insert(id, key);
    }
}

impl KeyDirectory for PublicDirectory {
    fn verify_key(&self, id: &Identifier) -> Option<&VerifyKey> {
        self.keys.get(id)
    }
}
