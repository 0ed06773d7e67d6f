//! PRF into `F_p`, the hash `G` used for leader selection, and a hash-based
//! commitment scheme.
//!
//! Every integer fed to these primitives goes through [`encode_int`]: a 4-byte
//! big-endian length followed by the big-endian magnitude. Concatenating two
//! encodings is how composite inputs such as `j || 0` are formed. Changing the
//! encoding changes every derived key, so it is part of the protocol.

use std::fmt;

use hmac::{Hmac, Mac};
use num_bigint::BigUint;
use rand::{Rng, RngCore};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::field::{FieldElement, PrimeField};

type HmacSha256 = Hmac<Sha256>;

const PRF_TAG: &[u8] = b"tempora/prf/v1";
const DERIVE_TAG: &[u8] = b"tempora/derive/v1";
const HASH_G_TAG: &[u8] = b"tempora/G/v1";
const COMMIT_TAG: &[u8] = b"tempora/commit/v1";

/// Length in bytes of freshly sampled and derived keys.
pub const KEY_LEN: usize = 32;

/// Length in bytes of [`hash_g`] outputs and commitment digests.
pub const DIGEST_LEN: usize = 32;

/// Length-prefixed big-endian encoding of a non-negative integer.
pub fn encode_int(value: &BigUint) -> Vec<u8> {
    let magnitude = value.to_bytes_be();
    let mut out = Vec::with_capacity(4 + magnitude.len());
    out.extend_from_slice(&(magnitude.len() as u32).to_be_bytes());
    out.extend_from_slice(&magnitude);
    out
}

/// Concatenated [`encode_int`] encodings.
pub fn encode_ints<'a>(values: impl IntoIterator<Item = &'a BigUint>) -> Vec<u8> {
    values.into_iter().flat_map(encode_int).collect()
}

/// Encoding of a small index, e.g. a coordinate position.
pub fn encode_index(i: u64) -> Vec<u8> {
    encode_int(&BigUint::from(i))
}

/// Opaque PRF key material. Never empty.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PrfKey(Vec<u8>);

impl PrfKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Option<Self> {
        (!bytes.is_empty()).then_some(PrfKey(bytes))
    }

    /// Keys derived from group elements such as `mk` or `tk`.
    pub fn from_integer(value: &BigUint) -> Self {
        PrfKey(encode_int(value))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = vec![0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        PrfKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.0).expect("HMAC accepts keys of any length")
    }
}

impl fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrfKey({} bytes)", self.0.len())
    }
}

impl Serialize for PrfKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for PrfKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(de::Error::custom)?;
        PrfKey::from_bytes(bytes).ok_or_else(|| de::Error::custom("empty PRF key"))
    }
}

/// `2 * bits(modulus)` pseudorandom bits, reduced mod `modulus`.
pub fn prf_mod(input: &[u8], key: &PrfKey, modulus: &BigUint) -> BigUint {
    let want = (2 * modulus.bits() as usize).div_ceil(8).max(1);
    let base = key.mac();
    let mut stream = Vec::with_capacity(want.next_multiple_of(DIGEST_LEN));
    let mut counter = 0u32;
    while stream.len() < want {
        let mut mac = base.clone();
        mac.update(PRF_TAG);
        mac.update(&counter.to_be_bytes());
        mac.update(input);
        stream.extend_from_slice(&mac.finalize().into_bytes());
        counter += 1;
    }
    BigUint::from_bytes_be(&stream[..want]) % modulus
}

/// `PRF(input, key)` as an element of `F_p`.
pub fn prf(input: &[u8], key: &PrfKey, field: &PrimeField) -> FieldElement {
    field.element(prf_mod(input, key, field.modulus()))
}

/// `PRF(i, key)` for a coordinate index `i`.
pub fn prf_index(i: u64, key: &PrfKey, field: &PrimeField) -> FieldElement {
    prf(&encode_index(i), key, field)
}

/// Splits a master key into the blinding-key pair `(k, s)`, derived from the
/// inputs 1 and 2 respectively.
pub fn prf_derive_pair(mk: &PrfKey) -> (PrfKey, PrfKey) {
    let derive = |label: u64| {
        let mut mac = mk.mac();
        mac.update(DERIVE_TAG);
        mac.update(&encode_index(label));
        PrfKey(mac.finalize().into_bytes().to_vec())
    };
    (derive(1), derive(2))
}

/// The public hash `G`.
pub fn hash_g(input: &[u8]) -> [u8; DIGEST_LEN] {
    let mut h = Sha256::new();
    h.update(HASH_G_TAG);
    h.update(input);
    h.finalize().into()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Commitment([u8; DIGEST_LEN]);

impl Commitment {
    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Commitment(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, String> {
        let bytes = hex::decode(text).map_err(|e| e.to_string())?;
        let arr: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|b: Vec<u8>| format!("commitment must be {DIGEST_LEN} bytes, got {}", b.len()))?;
        Ok(Commitment(arr))
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.to_hex())
    }
}

impl Serialize for Commitment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Commitment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Commitment::from_hex(&text).map_err(de::Error::custom)
    }
}

/// Commitment to an arbitrary integer message.
pub fn commit_int(message: &BigUint, randomness: &BigUint) -> Commitment {
    let mut h = Sha256::new();
    h.update(COMMIT_TAG);
    h.update(encode_int(message));
    h.update(encode_int(randomness));
    Commitment(h.finalize().into())
}

pub fn commit(message: &FieldElement, randomness: &BigUint) -> Commitment {
    commit_int(message.value(), randomness)
}

pub fn verify_commit(com: &Commitment, message: &FieldElement, randomness: &BigUint) -> bool {
    commit(message, randomness) == *com
}

/// Fresh uniformly random bytes, for callers that need raw entropy.
pub fn random_bytes<R: RngCore + ?Sized>(rng: &mut R) -> [u8; KEY_LEN] {
    let mut out = [0u8; KEY_LEN];
    rng.fill_bytes(&mut out);
    out
}
