//! Univariate polynomials over `F_p` in coefficient form ([`DensePoly`]) and
//! point-value form ([`PointValuePoly`]), with Lagrange interpolation and
//! root extraction.
//!
//! Root extraction follows the usual route for finding the `F_p`-rational
//! roots of `f`: compute `x^p mod f`, take `g = gcd(f, x^p - x)` (the product
//! of the distinct linear factors of `f`), then split `g` with random shifts
//! `gcd(g, (x + d)^((p-1)/2) - 1)` until only linear factors remain.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

use crate::field::{FieldElement, PrimeField};

/// Unsuccessful random splits tolerated per factor before giving up.
pub const MAX_SPLIT_ATTEMPTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("x-coordinate {0} appears more than once")]
    DuplicateX(BigUint),
    #[error("x-coordinates must be nonzero")]
    ZeroX,
    #[error("point-value form needs at least one point")]
    Empty,
    #[error("got {xs} x-coordinates but {ys} y-coordinates")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("polynomials are sampled on different x-grids")]
    MismatchedGrid,
    #[error("elements belong to different fields")]
    MismatchedField,
    #[error("the zero polynomial has every element as a root")]
    ZeroPolynomial,
    #[error("equal-degree splitting failed after {0} attempts")]
    SplittingFailed(usize),
}

/// Coefficient form, lowest degree first, no trailing zero coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensePoly {
    field: PrimeField,
    coeffs: Vec<BigUint>,
}

impl DensePoly {
    pub fn zero(field: &PrimeField) -> Self {
        DensePoly { field: field.clone(), coeffs: Vec::new() }
    }

    pub fn one(field: &PrimeField) -> Self {
        Self::constant(&field.one())
    }

    pub fn constant(c: &FieldElement) -> Self {
        Self::from_raw(c.field(), vec![c.value().clone()])
    }

    /// `x - root`.
    pub fn linear_factor(root: &FieldElement) -> Self {
        Self::from_raw(root.field(), vec![root.neg().into_value(), BigUint::one()])
    }

    pub fn from_coefficients(
        field: &PrimeField,
        coeffs: &[FieldElement],
    ) -> Result<Self, PolyError> {
        if coeffs.iter().any(|c| c.field() != field) {
            return Err(PolyError::MismatchedField);
        }
        Ok(Self::from_raw(field, coeffs.iter().map(|c| c.value().clone()).collect()))
    }

    /// Builds from arbitrary integers, reducing each mod `p`.
    pub fn from_integers<I, T>(field: &PrimeField, coeffs: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<BigUint>,
    {
        let p = field.modulus();
        Self::from_raw(field, coeffs.into_iter().map(|c| c.into() % p).collect())
    }

    /// `prod (x - r)` over `roots`.
    pub fn from_roots(field: &PrimeField, roots: &[FieldElement]) -> Self {
        roots.iter().fold(Self::one(field), |acc, r| acc.mul(&Self::linear_factor(r)))
    }

    fn from_raw(field: &PrimeField, mut coeffs: Vec<BigUint>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        DensePoly { field: field.clone(), coeffs }
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coefficient(&self, k: usize) -> FieldElement {
        self.field.element(self.coeffs.get(k).cloned().unwrap_or_default())
    }

    pub fn coefficients(&self) -> Vec<FieldElement> {
        self.coeffs.iter().map(|c| self.field.element(c.clone())).collect()
    }

    pub fn constant_term(&self) -> FieldElement {
        self.coefficient(0)
    }

    pub fn leading_coefficient(&self) -> FieldElement {
        self.coeffs.last().map_or_else(|| self.field.zero(), |c| self.field.element(c.clone()))
    }

    /// Horner evaluation.
    ///
    /// Panics if `x` belongs to another field.
    pub fn evaluate(&self, x: &FieldElement) -> FieldElement {
        assert!(x.field() == &self.field, "evaluation point from a different field");
        let p = self.field.modulus();
        let mut acc = BigUint::zero();
        for c in self.coeffs.iter().rev() {
            acc = (acc * x.value() + c) % p;
        }
        self.field.element(acc)
    }

    pub fn add(&self, rhs: &DensePoly) -> DensePoly {
        let p = self.field.modulus();
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..len)
            .map(|k| {
                let a = self.coeffs.get(k).cloned().unwrap_or_default();
                let b = rhs.coeffs.get(k).cloned().unwrap_or_default();
                (a + b) % p
            })
            .collect();
        Self::from_raw(&self.field, coeffs)
    }

    pub fn sub(&self, rhs: &DensePoly) -> DensePoly {
        self.add(&rhs.scale(&self.field.one().neg()))
    }

    pub fn scale(&self, c: &FieldElement) -> DensePoly {
        let p = self.field.modulus();
        Self::from_raw(&self.field, self.coeffs.iter().map(|a| (a * c.value()) % p).collect())
    }

    pub fn mul(&self, rhs: &DensePoly) -> DensePoly {
        if self.is_zero() || rhs.is_zero() {
            return Self::zero(&self.field);
        }
        Self::from_raw(&self.field, raw_mul(&self.coeffs, &rhs.coeffs, self.field.modulus()))
    }

    /// Scales so the leading coefficient is one; the zero polynomial is returned as is.
    pub fn monic(&self) -> DensePoly {
        match self.coeffs.last() {
            None => self.clone(),
            Some(lead) if lead.is_one() => self.clone(),
            Some(lead) => {
                let inv = self.field.element(lead.clone()).inv().expect("nonzero leading coefficient");
                self.scale(&inv)
            }
        }
    }

    /// Euclidean division; panics on a zero divisor.
    pub fn div_rem(&self, divisor: &DensePoly) -> (DensePoly, DensePoly) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let p = self.field.modulus();
        let lead_inv = divisor.leading_coefficient().inv().expect("nonzero leading coefficient");
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (Self::zero(&self.field), self.clone());
        }
        let mut quot = vec![BigUint::zero(); rem.len() - dd];
        for k in (dd..rem.len()).rev() {
            let c = (&rem[k] * lead_inv.value()) % p;
            if c.is_zero() {
                continue;
            }
            let shift = k - dd;
            for (j, dj) in divisor.coeffs.iter().enumerate() {
                let sub = (&c * dj) % p;
                rem[shift + j] = (&rem[shift + j] + p - sub) % p;
            }
            quot[shift] = c;
        }
        rem.truncate(dd);
        (Self::from_raw(&self.field, quot), Self::from_raw(&self.field, rem))
    }

    /// Monic greatest common divisor; `gcd(0, 0) = 0`.
    pub fn gcd(&self, other: &DensePoly) -> DensePoly {
        let mut a = self.monic();
        let mut b = other.monic();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r.monic();
        }
        a
    }

    /// Samples the polynomial on `xs`.
    pub fn sample(&self, xs: &[FieldElement]) -> Result<PointValuePoly, PolyError> {
        let ys = xs.iter().map(|x| self.evaluate(x)).collect();
        PointValuePoly::new(xs.to_vec(), ys)
    }
}

fn raw_mul(a: &[BigUint], b: &[BigUint], p: &BigUint) -> Vec<BigUint> {
    let mut out = vec![BigUint::zero(); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    for c in out.iter_mut() {
        *c %= p;
    }
    out
}

/// Arithmetic modulo a fixed monic polynomial of degree `d`. An element is
/// `d` coefficients of `limbs` little-endian words each. Products are summed
/// unreduced in wider accumulators and reduced mod p once per coefficient,
/// which keeps big-integer division out of the inner loops.
struct QuotientRing<'a> {
    p: &'a BigUint,
    d: usize,
    limbs: usize,
    // negated low coefficients of the modulus, d * limbs words
    neg_low: Vec<u64>,
}

impl<'a> QuotientRing<'a> {
    fn new(modulus: &'a DensePoly) -> Self {
        debug_assert!(modulus.leading_coefficient().is_one());
        let p = modulus.field.modulus();
        let d = modulus.coeffs.len() - 1;
        let limbs = p.bits().div_ceil(64) as usize;
        let neg_low = modulus.coeffs[..d].iter().flat_map(|c| to_words(&((p - c) % p), limbs)).collect();
        QuotientRing { p, d, limbs, neg_low }
    }

    /// Accumulator width: room for a sum of many products of two coefficients.
    fn wide(&self) -> usize {
        2 * self.limbs + 1
    }

    fn scalar(&self, v: &BigUint) -> Vec<u64> {
        to_words(v, self.limbs)
    }

    fn one(&self) -> Vec<u64> {
        let mut out = vec![0; self.d * self.limbs];
        out[0] = 1;
        out
    }

    fn decode(&self, v: &[u64]) -> Vec<BigUint> {
        v.chunks(self.limbs).map(from_words).collect()
    }

    fn reduce_word(&self, acc: &[u64]) -> Vec<u64> {
        to_words(&(from_words(acc) % self.p), self.limbs)
    }

    /// Folds `n >= d` accumulated coefficients back into a ring element.
    fn reduce(&self, mut acc: Vec<u64>, n: usize) -> Vec<u64> {
        let (l, w) = (self.limbs, self.wide());
        for k in (self.d..n).rev() {
            let top = self.reduce_word(&acc[k * w..(k + 1) * w]);
            if top.iter().all(|&x| x == 0) {
                continue;
            }
            let shift = k - self.d;
            for j in 0..self.d {
                let at = (shift + j) * w;
                mac(&mut acc[at..at + w], &top, &self.neg_low[j * l..(j + 1) * l]);
            }
        }
        let mut out = Vec::with_capacity(self.d * l);
        for k in 0..self.d {
            out.extend(self.reduce_word(&acc[k * w..(k + 1) * w]));
        }
        out
    }

    fn square(&self, a: &[u64]) -> Vec<u64> {
        let (l, w, d) = (self.limbs, self.wide(), self.d);
        let n = 2 * d - 1;
        let coeff = |i: usize| &a[i * l..(i + 1) * l];
        let mut acc = vec![0u64; n * w];
        for i in 0..d {
            for j in i + 1..d {
                let at = (i + j) * w;
                mac(&mut acc[at..at + w], coeff(i), coeff(j));
            }
        }
        for chunk in acc.chunks_mut(w) {
            shl1(chunk);
        }
        for i in 0..d {
            let at = 2 * i * w;
            mac(&mut acc[at..at + w], coeff(i), coeff(i));
        }
        self.reduce(acc, n)
    }

    /// `a * (x + shift)`.
    fn mul_linear(&self, a: &[u64], shift: &[u64]) -> Vec<u64> {
        let (l, w, d) = (self.limbs, self.wide(), self.d);
        let mut acc = vec![0u64; (d + 1) * w];
        for k in 0..d {
            let ak = &a[k * l..(k + 1) * l];
            let up = (k + 1) * w;
            mac(&mut acc[up..up + w], ak, &[1]);
            let at = k * w;
            mac(&mut acc[at..at + w], ak, shift);
        }
        self.reduce(acc, d + 1)
    }

    /// `(x + shift)^exp` in the quotient ring.
    fn pow_linear(&self, shift: &BigUint, exp: &BigUint) -> Vec<u64> {
        let shift = self.scalar(shift);
        let mut acc = self.one();
        for bit in (0..exp.bits()).rev() {
            acc = self.square(&acc);
            if exp.bit(bit) {
                acc = self.mul_linear(&acc, &shift);
            }
        }
        acc
    }
}

fn to_words(v: &BigUint, len: usize) -> Vec<u64> {
    let mut w = v.to_u64_digits();
    w.resize(len, 0);
    w
}

fn from_words(w: &[u64]) -> BigUint {
    BigUint::new(w.iter().flat_map(|&x| [x as u32, (x >> 32) as u32]).collect())
}

/// `acc += a * b`; `acc` must have room for the result.
fn mac(acc: &mut [u64], a: &[u64], b: &[u64]) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        let mut carry = 0u128;
        for (j, &bj) in b.iter().enumerate() {
            let t = acc[i + j] as u128 + (ai as u128) * (bj as u128) + carry;
            acc[i + j] = t as u64;
            carry = t >> 64;
        }
        let mut k = i + b.len();
        while carry != 0 {
            let t = acc[k] as u128 + carry;
            acc[k] = t as u64;
            carry = t >> 64;
            k += 1;
        }
    }
}

fn shl1(words: &mut [u64]) {
    let mut carry = 0;
    for x in words {
        let out = *x >> 63;
        *x = (*x << 1) | carry;
        carry = out;
    }
}

/// All distinct roots of `poly` in `F_p`, sorted ascending.
pub fn find_roots<R: Rng + ?Sized>(
    poly: &DensePoly,
    rng: &mut R,
) -> Result<Vec<FieldElement>, PolyError> {
    if poly.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let field = poly.field().clone();
    let p = field.modulus();
    let f = poly.monic();
    if f.degree() == Some(0) {
        return Ok(Vec::new());
    }

    let mut roots = Vec::new();
    if p == &BigUint::from(2u8) {
        for v in 0u8..2 {
            let x = field.element(v);
            if f.evaluate(&x).is_zero() {
                roots.push(x);
            }
        }
        return Ok(roots);
    }

    // One exponentiation serves twice: h = (x+a)^((p-1)/2) is the first
    // splitting attempt, and (x+a)*h^2 - a = x^p isolates the linear factors.
    let ring = QuotientRing::new(&f);
    let shift = rng.gen_biguint_below(p);
    let h = ring.pow_linear(&shift, &((p - 1u8) >> 1u8));
    let mut x_to_p = ring.decode(&ring.mul_linear(&ring.square(&h), &ring.scalar(&shift)));
    let h = ring.decode(&h);
    if let Some(c0) = x_to_p.first_mut() {
        *c0 = (&*c0 + p - &shift) % p;
    }
    let x = DensePoly::from_raw(&field, vec![BigUint::zero(), BigUint::one()]);
    let frobenius_minus_x = DensePoly::from_raw(&field, x_to_p).sub(&x);
    let split_part = f.gcd(&frobenius_minus_x);

    let mut raw_roots = Vec::new();
    split_linear(&split_part, Some(DensePoly::from_raw(&field, h)), rng, &mut raw_roots)?;
    raw_roots.sort();
    raw_roots.dedup();
    Ok(raw_roots.into_iter().map(|r| field.element(r)).collect())
}

/// Splits a monic product of distinct linear factors.
/// `hint`, if given, is `(x+a)^((p-1)/2)` modulo a multiple of `g` and is
/// tried before any fresh shift.
fn split_linear<R: Rng + ?Sized>(
    g: &DensePoly,
    mut hint: Option<DensePoly>,
    rng: &mut R,
    out: &mut Vec<BigUint>,
) -> Result<(), PolyError> {
    match g.degree() {
        None | Some(0) => return Ok(()),
        Some(1) => {
            out.push(g.constant_term().neg().into_value());
            return Ok(());
        }
        Some(_) => {}
    }
    let field = g.field();
    let p = field.modulus();
    let half = (p - 1u8) >> 1u8;
    let ring = QuotientRing::new(g);
    let one = DensePoly::one(field);
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        let power = match hint.take() {
            Some(h) => h,
            None => DensePoly::from_raw(field, ring.decode(&ring.pow_linear(&rng.gen_biguint_below(p), &half))),
        };
        let candidate = g.gcd(&power.sub(&one));
        let cd = candidate.degree().unwrap_or(0);
        if cd > 0 && Some(cd) < g.degree() {
            let (rest, _) = g.div_rem(&candidate);
            split_linear(&candidate, None, rng, out)?;
            return split_linear(&rest.monic(), None, rng, out);
        }
    }
    Err(PolyError::SplittingFailed(MAX_SPLIT_ATTEMPTS))
}

/// Evaluations `ys[i] = f(xs[i])` on distinct nonzero points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointValuePoly {
    xs: Vec<FieldElement>,
    ys: Vec<FieldElement>,
}

impl PointValuePoly {
    pub fn new(xs: Vec<FieldElement>, ys: Vec<FieldElement>) -> Result<Self, PolyError> {
        if xs.len() != ys.len() {
            return Err(PolyError::LengthMismatch { xs: xs.len(), ys: ys.len() });
        }
        let field = xs.first().ok_or(PolyError::Empty)?.field().clone();
        if xs.iter().chain(ys.iter()).any(|e| e.field() != &field) {
            return Err(PolyError::MismatchedField);
        }
        let mut seen = std::collections::BTreeSet::new();
        for x in &xs {
            if x.is_zero() {
                return Err(PolyError::ZeroX);
            }
            if !seen.insert(x.value()) {
                return Err(PolyError::DuplicateX(x.value().clone()));
            }
        }
        Ok(PointValuePoly { xs, ys })
    }

    pub fn xs(&self) -> &[FieldElement] {
        &self.xs
    }

    pub fn ys(&self) -> &[FieldElement] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn field(&self) -> &PrimeField {
        self.xs[0].field()
    }
}

/// The unique polynomial of degree `< points.len()` through every point.
pub fn interpolate(points: &PointValuePoly) -> DensePoly {
    let field = points.field();
    let xs = points.xs();
    // master = prod (x - x_j)
    let master = DensePoly::from_roots(field, xs);
    let mut acc = DensePoly::zero(field);
    for (i, (xi, yi)) in xs.iter().zip(points.ys()).enumerate() {
        if yi.is_zero() {
            continue;
        }
        let (basis, _) = master.div_rem(&DensePoly::linear_factor(xi));
        let denom = xs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .fold(field.one(), |d, (_, xj)| d * (xi - xj));
        let weight = yi * denom.inv().expect("distinct x-coordinates");
        acc = acc.add(&basis.scale(&weight));
    }
    acc
}

/// Coordinate-wise `sum_j coeffs[j] * polys[j]` on a shared grid.
pub fn pointwise_combine(
    coeffs: &[FieldElement],
    polys: &[PointValuePoly],
) -> Result<PointValuePoly, PolyError> {
    if coeffs.len() != polys.len() {
        return Err(PolyError::LengthMismatch { xs: coeffs.len(), ys: polys.len() });
    }
    let first = polys.first().ok_or(PolyError::Empty)?;
    if polys.iter().any(|q| q.xs != first.xs) {
        return Err(PolyError::MismatchedGrid);
    }
    let field = first.field();
    if coeffs.iter().any(|c| c.field() != field) {
        return Err(PolyError::MismatchedField);
    }
    let ys = (0..first.len())
        .map(|i| {
            coeffs
                .iter()
                .zip(polys)
                .fold(field.zero(), |acc, (c, q)| acc + c * &q.ys[i])
        })
        .collect();
    PointValuePoly::new(first.xs.clone(), ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn f13() -> PrimeField {
        PrimeField::new(BigUint::from(13u8)).unwrap()
    }

    fn poly(f: &PrimeField, c: &[u64]) -> DensePoly {
        DensePoly::from_integers(f, c.iter().copied())
    }

    fn brute_roots(f: &DensePoly) -> Vec<FieldElement> {
        let field = f.field();
        let p: u64 = field.modulus().try_into().unwrap();
        (0..p).map(|v| field.element(v)).filter(|x| f.evaluate(x).is_zero()).collect()
    }

    #[test]
    fn evaluate_examples() {
        let f = f13();
        assert_eq!(poly(&f, &[1, 2]).evaluate(&f.element(2u8)), f.element(5u8));
        let q = poly(&f, &[7, 3, 11]);
        assert_eq!(q.evaluate(&f.zero()), f.element(7u8));
        assert!(DensePoly::zero(&f).evaluate(&f.element(9u8)).is_zero());
    }

    #[test]
    fn interpolate_two_points_matches_brute_force() {
        let f = f13();
        let pts = PointValuePoly::new(
            vec![f.element(1u8), f.element(2u8)],
            vec![f.element(3u8), f.element(5u8)],
        )
        .unwrap();
        // exhaustive search over all a + b x
        let mut hits = Vec::new();
        for a in 0u64..13 {
            for b in 0u64..13 {
                let cand = poly(&f, &[a, b]);
                if pts.xs().iter().zip(pts.ys()).all(|(x, y)| &cand.evaluate(x) == y) {
                    hits.push((a, b));
                }
            }
        }
        assert_eq!(hits, vec![(1, 2)]);
        assert_eq!(interpolate(&pts), poly(&f, &[1, 2]));
    }

    #[test]
    fn interpolate_single_point_is_constant() {
        let f = f13();
        let pts = PointValuePoly::new(vec![f.element(4u8)], vec![f.element(9u8)]).unwrap();
        assert_eq!(interpolate(&pts), poly(&f, &[9]));
    }

    #[test]
    fn point_value_validation() {
        let f = f13();
        let dup = PointValuePoly::new(vec![f.element(1u8), f.element(1u8)], vec![f.one(), f.one()]);
        assert_eq!(dup, Err(PolyError::DuplicateX(BigUint::one())));
        let zero = PointValuePoly::new(vec![f.zero()], vec![f.one()]);
        assert_eq!(zero, Err(PolyError::ZeroX));
        assert_eq!(PointValuePoly::new(vec![], vec![]), Err(PolyError::Empty));
        assert!(matches!(
            PointValuePoly::new(vec![f.one()], vec![]),
            Err(PolyError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn roots_of_split_quadratic() {
        let f = f13();
        let q = poly(&f, &[2, 5, 1]);
        assert_eq!(brute_roots(&q), vec![f.element(3u8), f.element(5u8)]);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(find_roots(&q, &mut rng).unwrap(), vec![f.element(3u8), f.element(5u8)]);
    }

    #[test]
    fn roots_of_linear_and_irreducible() {
        let f = f13();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let lin = DensePoly::linear_factor(&f.element(8u8));
        assert_eq!(find_roots(&lin, &mut rng).unwrap(), vec![f.element(8u8)]);
        // 2 is a non-residue mod 13, so x^2 - 2 has no roots
        let irr = poly(&f, &[11, 0, 1]);
        assert!(brute_roots(&irr).is_empty());
        assert!(find_roots(&irr, &mut rng).unwrap().is_empty());
        assert_eq!(find_roots(&DensePoly::zero(&f), &mut rng), Err(PolyError::ZeroPolynomial));
        assert!(find_roots(&poly(&f, &[5]), &mut rng).unwrap().is_empty());
    }

    #[test]
    fn roots_with_repeats_and_zero_root() {
        let f = f13();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let q = DensePoly::from_roots(&f, &[f.zero(), f.element(4u8), f.element(4u8), f.element(12u8)])
            .scale(&f.element(6u8));
        assert_eq!(find_roots(&q, &mut rng).unwrap(), brute_roots(&q));
    }

    #[test]
    fn roots_over_tiny_fields() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for p in [2u8, 3, 5, 7] {
            let f = PrimeField::new(BigUint::from(p)).unwrap();
            for seed in 0u64..50 {
                let mut coeff_rng = ChaCha20Rng::seed_from_u64(seed);
                let c: Vec<u64> = (0..5).map(|_| coeff_rng.gen_range(0..p as u64)).collect();
                let q = poly(&f, &c);
                if q.is_zero() {
                    continue;
                }
                assert_eq!(find_roots(&q, &mut rng).unwrap(), brute_roots(&q), "p={p} c={c:?}");
            }
        }
    }

    #[test]
    fn combine_examples() {
        let f = f13();
        let xs = vec![f.element(1u8), f.element(2u8), f.element(3u8)];
        let a = poly(&f, &[1, 4]).sample(&xs).unwrap();
        let same = pointwise_combine(&[f.one()], &[a.clone()]).unwrap();
        assert_eq!(same, a);

        let neg = poly(&f, &[12, 9]).sample(&xs).unwrap();
        let sum = pointwise_combine(&[f.one(), f.one()], &[a.clone(), neg]).unwrap();
        assert!(sum.ys().iter().all(FieldElement::is_zero));

        let c1 = poly(&f, &[1]).sample(&xs).unwrap();
        let c2 = poly(&f, &[2]).sample(&xs).unwrap();
        let mix = pointwise_combine(&[f.element(2u8), f.element(3u8)], &[c1, c2]).unwrap();
        assert!(mix.ys().iter().all(|y| y == &f.element(8u8)));

        let other = poly(&f, &[1]).sample(&[f.element(5u8), f.element(6u8), f.element(7u8)]).unwrap();
        assert_eq!(pointwise_combine(&[f.one(), f.one()], &[a, other]), Err(PolyError::MismatchedGrid));
    }

    #[test]
    fn gcd_is_monic_common_factor() {
        let f = f13();
        let a = DensePoly::from_roots(&f, &[f.element(1u8), f.element(2u8)]).scale(&f.element(5u8));
        let b = DensePoly::from_roots(&f, &[f.element(2u8), f.element(7u8)]);
        assert_eq!(a.gcd(&b), DensePoly::linear_factor(&f.element(2u8)));
    }

    fn p61() -> PrimeField {
        PrimeField::new((BigUint::one() << 61u32) - 1u8).unwrap()
    }

    fn known_prime(text: &str) -> PrimeField {
        PrimeField::new(BigUint::parse_bytes(text.as_bytes(), 10).unwrap()).unwrap()
    }

    #[test]
    fn multi_word_fields_recover_planted_roots() {
        // 2^127 - 1, 2^128 - 159 (fills both words) and 2^255 - 19
        let fields = [
            known_prime("170141183460469231731687303715884105727"),
            known_prime("340282366920938463463374607431768211297"),
            known_prime("57896044618658097711785492504343953926634992332820282019728792003956564819949"),
        ];
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for f in &fields {
            for degree in [1usize, 3, 10] {
                let mut planted: Vec<_> = (0..degree).map(|_| f.random(&mut rng)).collect();
                // x^2 + 1 adds roots only when p = 1 mod 4, so compare away from them
                let q = DensePoly::from_roots(f, &planted).mul(&poly(f, &[1, 0, 1]));
                planted.sort();
                planted.dedup();
                let found = find_roots(&q, &mut rng).unwrap();
                let expected: Vec<_> = planted.into_iter().filter(|r| !(r * r + f.one()).is_zero()).collect();
                let others: Vec<_> = found.iter().filter(|r| !(*r * *r + f.one()).is_zero()).cloned().collect();
                assert_eq!(others, expected);
                for r in &found {
                    assert!(q.evaluate(r).is_zero());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn interpolate_inverts_sampling(coeffs in proptest::collection::vec(any::<u64>(), 1..10), start in 1u64..1000) {
            let f = p61();
            let q = poly(&f, &coeffs);
            let xs: Vec<_> = (0..coeffs.len() as u64).map(|k| f.element(start + 7 * k)).collect();
            prop_assert_eq!(interpolate(&q.sample(&xs).unwrap()), q);
        }

        #[test]
        fn found_roots_are_exactly_the_planted_ones(roots in proptest::collection::vec(any::<u64>(), 1..9), seed in any::<u64>()) {
            let f = p61();
            let planted: Vec<_> = roots.iter().map(|r| f.element(*r)).collect();
            let q = DensePoly::from_roots(&f, &planted).scale(&f.element(3u8));
            // an extra irreducible-ish quadratic factor must not add roots
            let q = q.mul(&poly(&f, &[seed | 1, 1, 1]));
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let found = find_roots(&q, &mut rng).unwrap();
            for r in &found {
                prop_assert!(q.evaluate(r).is_zero());
            }
            for r in &planted {
                prop_assert!(found.contains(r));
            }
        }

        #[test]
        fn roots_match_brute_force_mod_101(coeffs in proptest::collection::vec(0u64..101, 2..8), seed in any::<u64>()) {
            let f = PrimeField::new(BigUint::from(101u8)).unwrap();
            let q = poly(&f, &coeffs);
            prop_assume!(!q.is_zero());
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            prop_assert_eq!(find_roots(&q, &mut rng).unwrap(), brute_roots(&q));
        }
    }
}
