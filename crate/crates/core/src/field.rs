//! Arithmetic in a prime field `F_p`, plus the arbitrary-precision integer
//! helpers (modular exponentiation, inversion, primality) that the RSA side of
//! the scheme reuses for `Z_N` and `Z_phi(N)`.
//!
//! A [`FieldElement`] carries a cheap handle to its [`PrimeField`], so mixing
//! elements of different fields is caught. The `checked_*` methods report the
//! mismatch as a [`FieldError`]; the operator impls treat it as a bug and panic.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

/// Miller-Rabin rounds used for every primality decision in the crate.
pub const MILLER_RABIN_ROUNDS: usize = 40;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("operands live in different fields (p = {left} vs p = {right})")]
    MismatchedModulus { left: BigUint, right: BigUint },
    #[error("zero has no multiplicative inverse")]
    NonInvertible,
    #[error("modulus must be at least 2")]
    ModulusTooSmall,
    #[error("{0} is not prime")]
    NotPrime(BigUint),
    #[error("value {value} is not a canonical residue mod {modulus}")]
    OutOfRange { value: BigUint, modulus: BigUint },
    #[error("cannot generate a {0}-bit prime")]
    UnsupportedBitLength(u64),
}

/// The public description of `F_p`.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct FieldParams {
    modulus: BigUint,
    bits: u64,
}

impl FieldParams {
    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }
}

/// Shared handle to validated [`FieldParams`].
#[derive(Clone, Debug)]
pub struct PrimeField(Arc<FieldParams>);

impl PartialEq for PrimeField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.modulus == other.0.modulus
    }
}

impl Eq for PrimeField {}

impl PrimeField {
    /// Wraps `p` after a probabilistic primality check.
    pub fn new(p: BigUint) -> Result<Self, FieldError> {
        if p < BigUint::from(2u8) {
            return Err(FieldError::ModulusTooSmall);
        }
        // Fixed-seed witnesses keep construction deterministic.
        let mut rng = ChaCha20Rng::seed_from_u64(0x7f4a_7c15);
        if !is_probable_prime(&p, MILLER_RABIN_ROUNDS, &mut rng) {
            return Err(FieldError::NotPrime(p));
        }
        Ok(Self::new_unchecked(p))
    }

    fn new_unchecked(p: BigUint) -> Self {
        let bits = p.bits();
        PrimeField(Arc::new(FieldParams { modulus: p, bits }))
    }

    /// Samples a uniformly random prime of exactly `bits` bits.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> Result<Self, FieldError> {
        Ok(Self::new_unchecked(random_prime(rng, bits)?))
    }

    pub fn params(&self) -> &FieldParams {
        &self.0
    }

    pub fn modulus(&self) -> &BigUint {
        &self.0.modulus
    }

    pub fn bits(&self) -> u64 {
        self.0.bits
    }

    /// Reduces `value` into the field.
    pub fn element(&self, value: impl Into<BigUint>) -> FieldElement {
        FieldElement { value: value.into() % self.modulus(), field: self.clone() }
    }

    /// Accepts `value` only if it is already a canonical residue.
    pub fn canonical(&self, value: BigUint) -> Result<FieldElement, FieldError> {
        if &value >= self.modulus() {
            return Err(FieldError::OutOfRange { value, modulus: self.modulus().clone() });
        }
        Ok(FieldElement { value, field: self.clone() })
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement { value: BigUint::zero(), field: self.clone() }
    }

    pub fn one(&self) -> FieldElement {
        self.element(1u8)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement { value: rng.gen_biguint_below(self.modulus()), field: self.clone() }
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        loop {
            let e = self.random(rng);
            if !e.is_zero() {
                return e;
            }
        }
    }

    pub(crate) fn ensure_same(&self, other: &PrimeField) -> Result<(), FieldError> {
        if self == other {
            Ok(())
        } else {
            Err(FieldError::MismatchedModulus {
                left: self.modulus().clone(),
                right: other.modulus().clone(),
            })
        }
    }
}

/// A residue in `[0, p)`.
#[derive(Clone)]
pub struct FieldElement {
    value: BigUint,
    field: PrimeField,
}

impl FieldElement {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn into_value(self) -> BigUint {
        self.value
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.value.is_one()
    }

    pub fn checked_add(&self, rhs: &FieldElement) -> Result<FieldElement, FieldError> {
        self.field.ensure_same(&rhs.field)?;
        let mut v = &self.value + &rhs.value;
        if &v >= self.field.modulus() {
            v -= self.field.modulus();
        }
        Ok(self.with_value(v))
    }

    pub fn checked_sub(&self, rhs: &FieldElement) -> Result<FieldElement, FieldError> {
        self.field.ensure_same(&rhs.field)?;
        let v = if self.value >= rhs.value {
            &self.value - &rhs.value
        } else {
            self.field.modulus() - &rhs.value + &self.value
        };
        Ok(self.with_value(v))
    }

    pub fn checked_mul(&self, rhs: &FieldElement) -> Result<FieldElement, FieldError> {
        self.field.ensure_same(&rhs.field)?;
        Ok(self.with_value((&self.value * &rhs.value) % self.field.modulus()))
    }

    pub fn neg(&self) -> FieldElement {
        if self.value.is_zero() {
            self.clone()
        } else {
            self.with_value(self.field.modulus() - &self.value)
        }
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(&self) -> Result<FieldElement, FieldError> {
        if self.value.is_zero() {
            return Err(FieldError::NonInvertible);
        }
        mod_inverse(&self.value, self.field.modulus())
            .map(|v| self.with_value(v))
            .ok_or(FieldError::NonInvertible)
    }

    pub fn pow(&self, exp: &BigUint) -> FieldElement {
        self.with_value(self.value.modpow(exp, self.field.modulus()))
    }

    fn with_value(&self, value: BigUint) -> FieldElement {
        FieldElement { value, field: self.field.clone() }
    }
}

impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value && self.field == other.field
    }
}

impl Eq for FieldElement {}

impl Hash for FieldElement {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.value.hash(state);
    }
}

impl PartialOrd for FieldElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FieldElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .cmp(&other.value)
            .then_with(|| self.field.modulus().cmp(other.field.modulus()))
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.field.modulus())
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.value, f)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&FieldElement> for &FieldElement {
            type Output = FieldElement;
            fn $method(self, rhs: &FieldElement) -> FieldElement {
                self.$checked(rhs).expect("field operands from different fields")
            }
        }
        impl $trait<FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $method(self, rhs: FieldElement) -> FieldElement {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $method(self, rhs: &FieldElement) -> FieldElement {
                (&self).$method(rhs)
            }
        }
        impl $trait<FieldElement> for &FieldElement {
            type Output = FieldElement;
            fn $method(self, rhs: FieldElement) -> FieldElement {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl Neg for &FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement::neg(self)
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement::neg(&self)
    }
}

/// `base^exp mod modulus` by square-and-multiply.
pub fn pow_mod(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> Result<BigUint, FieldError> {
    if modulus < &BigUint::from(2u8) {
        return Err(FieldError::ModulusTooSmall);
    }
    Ok(base.modpow(exp, modulus))
}

/// Inverse of `a` modulo `m` (any modulus), if `gcd(a, m) = 1`.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    if m.is_zero() {
        return None;
    }
    let m_signed = BigInt::from(m.clone());
    let a_signed = BigInt::from(a % m);
    let egcd = a_signed.extended_gcd(&m_signed);
    if !egcd.gcd.is_one() {
        return None;
    }
    egcd.x.mod_floor(&m_signed).to_biguint()
}

/// Miller-Rabin with `rounds` random witnesses, after trial division.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u8);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u8;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let upper = n - 2u8;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &upper);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x.is_one() {
                return false;
            }
        }
        return false;
    }
    true
}

/// Random prime with the top bit set, so its bit length is exactly `bits`.
pub fn random_prime<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> Result<BigUint, FieldError> {
    if bits < 2 {
        return Err(FieldError::UnsupportedBitLength(bits));
    }
    if bits == 2 {
        return Ok(BigUint::from(if rng.gen::<bool>() { 2u8 } else { 3u8 }));
    }
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Ok(candidate);
        }
    }
}
