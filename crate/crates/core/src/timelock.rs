//! RSA time-lock primitives: key material, the trapdoor shortcut that only the
//! puzzle creator can take, honest sequential squaring for the solver, and a
//! classic RSA time-lock puzzle wrapping an AEAD ciphertext.

use std::ops::ControlFlow;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::encode_int;
use crate::field::{is_probable_prime, random_prime, MILLER_RABIN_ROUNDS};
use crate::wire;

/// Prime generation attempts before [`ClientKeys::generate`] gives up.
pub const KEYGEN_ATTEMPTS: usize = 64;

/// Smallest prime size accepted by [`ClientKeys::generate`].
pub const MIN_PRIME_BITS: u64 = 32;

/// Default spacing of progress callbacks in [`sequential_power_with`].
pub const PROGRESS_EVERY: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimelockError {
    #[error("base must satisfy 0 < r < N")]
    BaseOutOfRange,
    #[error("RSA factors must be distinct primes")]
    BadFactors,
    #[error("prime size {0} is below the minimum of {MIN_PRIME_BITS} bits")]
    PrimeTooSmall(u64),
    #[error("could not generate distinct primes after {KEYGEN_ATTEMPTS} attempts")]
    KeyGeneration,
    #[error("sequential squaring cancelled after {0} steps")]
    Cancelled(u64),
    #[error("authenticated decryption failed; the puzzle was tampered with")]
    Decryption,
}

/// An RSA modulus together with its totient. The totient is the trapdoor and
/// never leaves the client.
#[derive(Clone, PartialEq, Eq)]
pub struct ClientKeys {
    p1: BigUint,
    p2: BigUint,
    n: BigUint,
    phi: BigUint,
}

impl std::fmt::Debug for ClientKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientKeys").field("n", &self.n).finish_non_exhaustive()
    }
}

impl ClientKeys {
    pub fn from_primes(p1: BigUint, p2: BigUint) -> Result<Self, TimelockError> {
        let mut rng = rand_chacha::ChaCha20Rng::from_seed([7u8; 32]);
        if p1 == p2
            || !is_probable_prime(&p1, MILLER_RABIN_ROUNDS, &mut rng)
            || !is_probable_prime(&p2, MILLER_RABIN_ROUNDS, &mut rng)
        {
            return Err(TimelockError::BadFactors);
        }
        let n = &p1 * &p2;
        let phi = (&p1 - 1u8) * (&p2 - 1u8);
        Ok(ClientKeys { p1, p2, n, phi })
    }

    /// Two fresh distinct primes of `prime_bits` bits each.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, prime_bits: u64) -> Result<Self, TimelockError> {
        if prime_bits < MIN_PRIME_BITS {
            return Err(TimelockError::PrimeTooSmall(prime_bits));
        }
        let p1 = random_prime(rng, prime_bits).map_err(|_| TimelockError::KeyGeneration)?;
        for _ in 0..KEYGEN_ATTEMPTS {
            let p2 = random_prime(rng, prime_bits).map_err(|_| TimelockError::KeyGeneration)?;
            if p2 != p1 {
                return Self::from_primes(p1, p2);
            }
        }
        Err(TimelockError::KeyGeneration)
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn totient(&self) -> &BigUint {
        &self.phi
    }

    pub fn factors(&self) -> (&BigUint, &BigUint) {
        (&self.p1, &self.p2)
    }
}

/// Squaring budget derived from a squarings-per-second rate and a delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelockParams {
    pub max_ss: u64,
    pub delta: u64,
}

impl TimelockParams {
    pub fn squarings(&self) -> u64 {
        self.max_ss.saturating_mul(self.delta)
    }
}

/// Uniform base in `[1, N)`.
pub fn random_base<R: Rng + ?Sized>(rng: &mut R, n: &BigUint) -> BigUint {
    rng.gen_biguint_range(&BigUint::one(), n)
}

fn check_base(r: &BigUint, n: &BigUint) -> Result<(), TimelockError> {
    if r.is_zero() || r >= n {
        Err(TimelockError::BaseOutOfRange)
    } else {
        Ok(())
    }
}

/// `r^(2^T) mod N` through the totient: `a = 2^T mod phi(N)`, then `r^a mod N`.
pub fn trapdoor_power(r: &BigUint, t: u64, keys: &ClientKeys) -> Result<BigUint, TimelockError> {
    check_base(r, &keys.n)?;
    let a = BigUint::from(2u8).modpow(&BigUint::from(t), &keys.phi);
    Ok(r.modpow(&a, &keys.n))
}

/// `T` successive squarings of `r` mod `N`.
pub fn sequential_power(r: &BigUint, t: u64, n: &BigUint) -> Result<BigUint, TimelockError> {
    sequential_power_with(r, t, n, PROGRESS_EVERY, |_| ControlFlow::Continue(()))
}

/// Like [`sequential_power`], calling `progress(done)` every `every` squarings
/// and once at the end. Returning `Break` cancels the computation.
pub fn sequential_power_with<F>(
    r: &BigUint,
    t: u64,
    n: &BigUint,
    every: u64,
    mut progress: F,
) -> Result<BigUint, TimelockError>
where
    F: FnMut(u64) -> ControlFlow<()>,
{
    check_base(r, n)?;
    let every = every.max(1);
    let mut acc = r.clone();
    for done in 1..=t {
        acc = (&acc * &acc) % n;
        if (done % every == 0 || done == t) && progress(done).is_break() {
            return Err(TimelockError::Cancelled(done));
        }
    }
    Ok(acc)
}

/// A classic RSA time-lock puzzle: an AEAD ciphertext whose key `k` is
/// published as `o2 = k + r^(2^T) mod N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselinePuzzle {
    #[serde(with = "hex_bytes")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub nonce: Vec<u8>,
    #[serde(with = "wire::decimal")]
    pub o2: BigUint,
    #[serde(with = "wire::decimal")]
    pub r: BigUint,
    pub t: u64,
    #[serde(with = "wire::decimal")]
    pub n: BigUint,
}

mod hex_bytes {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(de::Error::custom)
    }
}

fn aead_for(k: &BigUint) -> ChaCha20Poly1305 {
    let digest = Sha256::digest(encode_int(k));
    ChaCha20Poly1305::new(Key::from_slice(&digest))
}

pub fn baseline_gen_puzzle<R: Rng + ?Sized>(
    message: &[u8],
    keys: &ClientKeys,
    t: u64,
    rng: &mut R,
) -> Result<BaselinePuzzle, TimelockError> {
    let n = keys.modulus();
    let k = rng.gen_biguint_below(n);
    let r = random_base(rng, n);
    let b = trapdoor_power(&r, t, keys)?;
    let o2 = (&k + b) % n;
    let mut nonce = vec![0u8; 12];
    rng.fill_bytes(&mut nonce);
    let ciphertext = aead_for(&k)
        .encrypt(Nonce::from_slice(&nonce), message)
        .expect("encryption into a Vec cannot fail");
    Ok(BaselinePuzzle { ciphertext, nonce, o2, r, t, n: n.clone() })
}

pub fn baseline_solve(puzzle: &BaselinePuzzle) -> Result<Vec<u8>, TimelockError> {
    let b = sequential_power(&puzzle.r, puzzle.t, &puzzle.n)?;
    let k = (&puzzle.o2 + &puzzle.n - (b % &puzzle.n)).mod_floor(&puzzle.n);
    if puzzle.nonce.len() != 12 {
        return Err(TimelockError::Decryption);
    }
    aead_for(&k)
        .decrypt(Nonce::from_slice(&puzzle.nonce), puzzle.ciphertext.as_slice())
        .map_err(|_| TimelockError::Decryption)
}

/// Locks `message` for `t` squarings and immediately solves it again.
pub fn baseline_rsa_tlp_roundtrip<R: Rng + ?Sized>(
    message: &[u8],
    keys: &ClientKeys,
    t: u64,
    rng: &mut R,
) -> Result<Vec<u8>, TimelockError> {
    baseline_solve(&baseline_gen_puzzle(message, keys, t, rng)?)
}
