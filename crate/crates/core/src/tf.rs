//! The multi-client protocol: setup, puzzle generation, leader election,
//! encrypted linear combination, solving and public verification.
//!
//! Each client `u` hides its message `m_u` in the line `pi_u(x) = x + m_u`,
//! sampled on the server's public x-coordinates and blinded coordinate-wise as
//! `o_i = w_i * (pi_u(x_i) + z_i)`. The blinding factors come from a PRF keyed
//! by a time-locked master key.
//!
//! To combine, a few randomly elected leader clients each pick a secret root,
//! multiply it into the encoding as `(x - root)`, and lock a fresh temporary
//! key that peels off their extra blinding layer. The server learns the
//! coordinates of `theta(x) = prod_u (x - root_u) * sum_u q_u * pi_u(x)` only
//! after solving those temporary keys. Since `theta(0)` is
//! `prod_u (-root_u) * sum_u q_u * m_u`, the combination falls out directly,
//! and the committed roots let anyone check that no coordinate was altered.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::crypto::{
    commit, commit_int, encode_index, encode_int, hash_g, prf_derive_pair, prf_index,
    random_bytes, verify_commit, Commitment, PrfKey,
};
use crate::field::{FieldElement, FieldError, PrimeField};
use crate::ole::{ole_plus_session, OleError, OleInterceptor, OleReceiverInput, OleSenderInput};
use crate::poly::{find_roots, interpolate, DensePoly, PointValuePoly, PolyError};
use crate::timelock::{random_base, sequential_power, trapdoor_power, ClientKeys, TimelockError};

/// Messages and coefficients live in `[0, 2^64)` unless configured otherwise.
pub const DEFAULT_UNIVERSE_BITS: u32 = 64;

/// Smallest field a client accepts by default.
pub const DEFAULT_MIN_FIELD_BITS: u64 = 128;

/// Fresh bases tried before puzzle generation gives up on zero coordinates.
pub const MAX_REGENERATIONS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TfError {
    #[error("need 1 <= leaders <= clients, got {leaders} leaders for {clients} clients")]
    InvalidLeaderCount { leaders: usize, clients: usize },
    #[error("need 1 <= threshold <= leaders, got threshold {threshold} with {leaders} leaders")]
    InvalidThreshold { threshold: usize, leaders: usize },
    #[error("server parameters rejected: {0}")]
    ParamsRejected(String),
    #[error("value {0} lies outside the plaintext universe")]
    OutsideUniverse(BigUint),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("client {client} is missing {what} from client {from}")]
    MissingInbox { client: usize, from: usize, what: &'static str },
    #[error("leaders disagree on the evaluation squaring count")]
    UnequalEvalSquarings,
    #[error("evaluation delay must be shorter than the first puzzle's delay")]
    EvalDelayTooLong,
    #[error("unblinded coordinates do not lie on a line of the form x + m")]
    TamperSuspected,
    #[error("puzzle {0} of the chain does not unblind to a line of the form x + m")]
    ChainTamper(usize),
    #[error("a chain needs at least one puzzle and exactly three x-coordinates")]
    BadChainShape,
    #[error("no extracted root opens the commitment of leader record {0}")]
    SolutionExtractionFailure(usize),
    #[error("the combined polynomial is identically zero")]
    DegenerateCombination,
    #[error("party {0} revealed a coin share that does not match its commitment")]
    OpeningMismatch(usize),
    #[error("could not generate a puzzle with nonzero coordinates")]
    RegenerationLimit,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Timelock(#[from] TimelockError),
    #[error(transparent)]
    Ole(#[from] OleError),
}

/// Public parameters chosen by the server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerParams {
    field: PrimeField,
    xs: Vec<FieldElement>,
    leaders: usize,
    threshold: usize,
    universe_bits: u32,
}

impl ServerParams {
    /// Assembles parameters without judging them; see [`check_server_params`].
    pub fn new(
        field: PrimeField,
        xs: Vec<FieldElement>,
        leaders: usize,
        threshold: usize,
        universe_bits: u32,
    ) -> Result<Self, TfError> {
        if xs.iter().any(|x| x.field() != &field) {
            return Err(FieldError::MismatchedModulus {
                left: field.modulus().clone(),
                right: xs.iter().find(|x| x.field() != &field).unwrap().field().modulus().clone(),
            }
            .into());
        }
        Ok(ServerParams { field, xs, leaders, threshold, universe_bits })
    }

    /// A fresh `field_bits`-bit prime and `leaders + 2` x-coordinates above `2^64`.
    pub fn setup<R: Rng + ?Sized>(
        rng: &mut R,
        field_bits: u64,
        leaders: usize,
        threshold: usize,
    ) -> Result<Self, TfError> {
        Self::setup_with_universe(rng, field_bits, leaders, threshold, DEFAULT_UNIVERSE_BITS)
    }

    pub fn setup_with_universe<R: Rng + ?Sized>(
        rng: &mut R,
        field_bits: u64,
        leaders: usize,
        threshold: usize,
        universe_bits: u32,
    ) -> Result<Self, TfError> {
        check_counts(leaders, threshold)?;
        if field_bits <= u64::from(universe_bits) + 1 {
            return Err(TfError::ParamsRejected(format!(
                "a {field_bits}-bit field leaves no room above a {universe_bits}-bit universe"
            )));
        }
        let field = PrimeField::generate(rng, field_bits)?;
        Self::setup_in_field(rng, field, leaders, threshold, universe_bits)
    }

    /// Picks fresh x-coordinates in an existing field.
    pub fn setup_in_field<R: Rng + ?Sized>(
        rng: &mut R,
        field: PrimeField,
        leaders: usize,
        threshold: usize,
        universe_bits: u32,
    ) -> Result<Self, TfError> {
        check_counts(leaders, threshold)?;
        let bound = BigUint::one() << universe_bits;
        let p = field.modulus();
        let t_bar = leaders + 2;
        if p <= &bound || p - &bound < BigUint::from(t_bar) {
            return Err(TfError::ParamsRejected("field too small for the x-coordinates".into()));
        }
        let mut seen = BTreeSet::new();
        while seen.len() < t_bar {
            seen.insert(rng.gen_biguint_range(&bound, p));
        }
        let mut xs: Vec<_> = seen.into_iter().map(|v| field.element(v)).collect();
        // a random order rather than sorted, like independent draws
        for i in (1..xs.len()).rev() {
            xs.swap(i, rng.gen_range(0..=i));
        }
        Ok(ServerParams { field, xs, leaders, threshold, universe_bits })
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn xs(&self) -> &[FieldElement] {
        &self.xs
    }

    pub fn leaders(&self) -> usize {
        self.leaders
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn universe_bits(&self) -> u32 {
        self.universe_bits
    }

    /// Number of x-coordinates, `leaders + 2`.
    pub fn t_bar(&self) -> usize {
        self.leaders + 2
    }

    pub fn universe_bound(&self) -> BigUint {
        BigUint::one() << self.universe_bits
    }

    pub fn in_universe(&self, v: &FieldElement) -> bool {
        v.value() < &self.universe_bound()
    }
}

fn check_counts(leaders: usize, threshold: usize) -> Result<(), TfError> {
    if leaders == 0 {
        return Err(TfError::InvalidLeaderCount { leaders, clients: 0 });
    }
    if threshold == 0 || threshold > leaders {
        return Err(TfError::InvalidThreshold { threshold, leaders });
    }
    Ok(())
}

/// Why a client would refuse `sp`, or `None` if it is acceptable.
pub fn server_params_problem(sp: &ServerParams, min_field_bits: u64) -> Option<String> {
    if sp.field.bits() < min_field_bits {
        return Some(format!("field has {} bits, need {min_field_bits}", sp.field.bits()));
    }
    if sp.leaders == 0 || sp.threshold == 0 || sp.threshold > sp.leaders {
        return Some("leader count or threshold out of range".into());
    }
    if sp.xs.len() != sp.t_bar() {
        return Some(format!("expected {} x-coordinates, got {}", sp.t_bar(), sp.xs.len()));
    }
    let bound = sp.universe_bound();
    let mut seen = BTreeSet::new();
    for x in &sp.xs {
        if x.is_zero() {
            return Some("x-coordinate is zero".into());
        }
        if x.value() < &bound {
            return Some(format!("x-coordinate {x} lies inside the plaintext universe"));
        }
        if !seen.insert(x.value()) {
            return Some(format!("x-coordinate {x} is repeated"));
        }
    }
    None
}

/// The client-side sanity check on server parameters.
pub fn check_server_params(sp: &ServerParams, min_field_bits: u64) -> bool {
    server_params_problem(sp, min_field_bits).is_none()
}

/// What a client insists on before locking anything.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClientPolicy {
    pub min_field_bits: u64,
}

impl Default for ClientPolicy {
    fn default() -> Self {
        ClientPolicy { min_field_bits: DEFAULT_MIN_FIELD_BITS }
    }
}

/// The PRF key pair `(k, s)` that yields the additive and multiplicative
/// blinding factors `z_i = PRF(i, k)` and `w_i = PRF(i, s)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlindingKeys {
    k: PrfKey,
    s: PrfKey,
}

impl BlindingKeys {
    pub fn from_master(mk: &BigUint) -> Self {
        let (k, s) = prf_derive_pair(&PrfKey::from_integer(mk));
        BlindingKeys { k, s }
    }

    pub fn additive(&self, i: usize, field: &PrimeField) -> FieldElement {
        prf_index(i as u64, &self.k, field)
    }

    pub fn multiplicative(&self, i: usize, field: &PrimeField) -> FieldElement {
        prf_index(i as u64, &self.s, field)
    }

    /// `(z, w)` for coordinates `1..=count`.
    pub fn factors(&self, count: usize, field: &PrimeField) -> (Vec<FieldElement>, Vec<FieldElement>) {
        (1..=count).map(|i| (self.additive(i, field), self.multiplicative(i, field))).unzip()
    }
}

/// `o_i = w_i * (pi_i + z_i)`.
pub fn blind_coordinates(pi: &[FieldElement], z: &[FieldElement], w: &[FieldElement]) -> Vec<FieldElement> {
    pi.iter().zip(z).zip(w).map(|((p, z), w)| w * &(p + z)).collect()
}

/// `pi_i = w_i^-1 * o_i - z_i`.
pub fn unblind_coordinates(
    o: &[FieldElement],
    z: &[FieldElement],
    w: &[FieldElement],
) -> Result<Vec<FieldElement>, TfError> {
    o.iter()
        .zip(z)
        .zip(w)
        .map(|((o, z), w)| Ok(&(w.inv()? * o) - z))
        .collect()
}

/// The encrypted y-coordinates of one client's puzzle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PuzzleVector {
    pub o: Vec<FieldElement>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PuzzlePublicParams {
    pub com: Commitment,
    pub squarings: u64,
    pub base: BigUint,
    pub modulus: BigUint,
}

/// What a client keeps after locking: only the blinding keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientSecret {
    pub keys: BlindingKeys,
}

#[derive(Clone, Debug)]
pub struct GeneratedPuzzle {
    pub puzzle: PuzzleVector,
    pub public: PuzzlePublicParams,
    pub secret: ClientSecret,
}

/// Locks `m` for `squarings` sequential squarings.
pub fn gen_puzzle<R: Rng + ?Sized>(
    m: &FieldElement,
    keys: &ClientKeys,
    sp: &ServerParams,
    squarings: u64,
    policy: &ClientPolicy,
    rng: &mut R,
) -> Result<GeneratedPuzzle, TfError> {
    if let Some(problem) = server_params_problem(sp, policy.min_field_bits) {
        return Err(TfError::ParamsRejected(problem));
    }
    if m.field() != sp.field() {
        return Err(FieldError::MismatchedModulus {
            left: sp.field().modulus().clone(),
            right: m.field().modulus().clone(),
        }
        .into());
    }
    if !sp.in_universe(m) {
        return Err(TfError::OutsideUniverse(m.value().clone()));
    }
    let field = sp.field();
    let pi: Vec<_> = sp.xs().iter().map(|x| x + m).collect();
    for _ in 0..MAX_REGENERATIONS {
        let base = random_base(rng, keys.modulus());
        let mk = trapdoor_power(&base, squarings, keys)?;
        let blinding = BlindingKeys::from_master(&mk);
        let (z, w) = blinding.factors(sp.t_bar(), field);
        if w.iter().any(FieldElement::is_zero) {
            continue;
        }
        let o = blind_coordinates(&pi, &z, &w);
        if o.iter().any(FieldElement::is_zero) {
            continue;
        }
        let public = PuzzlePublicParams {
            com: commit(m, &mk),
            squarings,
            base,
            modulus: keys.modulus().clone(),
        };
        return Ok(GeneratedPuzzle {
            puzzle: PuzzleVector { o },
            public,
            secret: ClientSecret { keys: blinding },
        });
    }
    Err(TfError::RegenerationLimit)
}

/// The published solution of a puzzle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Proof {
    SinglePuzzle { mk: BigUint },
    Combination { openings: Vec<RootOpening> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootOpening {
    pub root: FieldElement,
    pub tk: BigUint,
}

/// Recovers `m` by sequential squaring; the puzzle must unblind to `x + m`.
pub fn solve_single(
    puzzle: &PuzzleVector,
    pp: &PuzzlePublicParams,
    sp: &ServerParams,
) -> Result<(FieldElement, Proof), TfError> {
    let mk = sequential_power(&pp.base, pp.squarings, &pp.modulus)?;
    let m = open_single(puzzle, &mk, sp)?;
    Ok((m, Proof::SinglePuzzle { mk }))
}

/// Unblinds with keys derived from `mk` and reads off the constant term.
pub fn open_single(puzzle: &PuzzleVector, mk: &BigUint, sp: &ServerParams) -> Result<FieldElement, TfError> {
    if puzzle.o.len() != sp.t_bar() {
        return Err(TfError::LengthMismatch { expected: sp.t_bar(), got: puzzle.o.len() });
    }
    let (z, w) = BlindingKeys::from_master(mk).factors(sp.t_bar(), sp.field());
    let pi = unblind_coordinates(&puzzle.o, &z, &w)?;
    let line = interpolate(&PointValuePoly::new(sp.xs().to_vec(), pi)?);
    if line.degree() != Some(1) || !line.leading_coefficient().is_one() {
        return Err(TfError::TamperSuspected);
    }
    Ok(line.constant_term())
}

/// One party's contribution to the shared leader-election seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoinShare {
    pub value: [u8; 32],
    pub nonce: [u8; 32],
}

impl CoinShare {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        CoinShare { value: random_bytes(rng), nonce: random_bytes(rng) }
    }

    pub fn commitment(&self) -> Commitment {
        commit_int(&BigUint::from_bytes_be(&self.value), &BigUint::from_bytes_be(&self.nonce))
    }
}

/// The jointly sampled key `r_hat`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SharedSeed(pub [u8; 32]);

/// XOR of all revealed shares, after checking every reveal against its
/// commitment. Parties are numbered from 1 in the order given.
pub fn coin_combine(commitments: &[Commitment], reveals: &[CoinShare]) -> Result<SharedSeed, TfError> {
    if commitments.len() != reveals.len() {
        return Err(TfError::LengthMismatch { expected: commitments.len(), got: reveals.len() });
    }
    let mut seed = [0u8; 32];
    for (idx, (com, share)) in commitments.iter().zip(reveals).enumerate() {
        if share.commitment() != *com {
            return Err(TfError::OpeningMismatch(idx + 1));
        }
        for (s, v) in seed.iter_mut().zip(share.value) {
            *s ^= v;
        }
    }
    Ok(SharedSeed(seed))
}

/// An all-honest commit-reveal round among `parties` parties.
pub fn coin_toss<R: Rng + ?Sized>(parties: usize, rng: &mut R) -> Result<SharedSeed, TfError> {
    let shares: Vec<_> = (0..parties).map(|_| CoinShare::random(rng)).collect();
    let commitments: Vec<_> = shares.iter().map(CoinShare::commitment).collect();
    coin_combine(&commitments, &shares)
}

/// `leaders` distinct client indices in `1..=n`, as `(G(j || r_hat) mod n) + 1`.
/// A repeated index is retried with a counter appended to the hash input.
pub fn select_leaders(n: usize, leaders: usize, seed: &SharedSeed) -> Result<Vec<usize>, TfError> {
    if leaders == 0 || leaders > n {
        return Err(TfError::InvalidLeaderCount { leaders, clients: n });
    }
    let seed_int = BigUint::from_bytes_be(&seed.0);
    let modulus = BigUint::from(n);
    let mut chosen = Vec::with_capacity(leaders);
    for j in 1..=leaders as u64 {
        let mut retry = 0u64;
        loop {
            let mut input = encode_index(j);
            input.extend(encode_int(&seed_int));
            if retry > 0 {
                input.extend(encode_index(retry));
            }
            let digest = BigUint::from_bytes_be(&hash_g(&input));
            let idx: usize = (digest % &modulus).try_into().expect("index below n");
            if !chosen.contains(&(idx + 1)) {
                chosen.push(idx + 1);
                break;
            }
            retry += 1;
        }
    }
    Ok(chosen)
}

/// One leader's public evaluation record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    pub h: BigUint,
    pub com_root: Commitment,
    pub modulus: BigUint,
    pub squarings: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPublicParams {
    pub records: Vec<EvalRecord>,
}

impl EvalPublicParams {
    /// The shared squaring count `Y`.
    pub fn squarings(&self) -> Result<u64, TfError> {
        let first = self.records.first().map(|r| r.squarings).unwrap_or(0);
        if self.records.iter().any(|r| r.squarings != first) {
            return Err(TfError::UnequalEvalSquarings);
        }
        Ok(first)
    }
}

/// The combined coordinates `g_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPuzzle {
    pub g: Vec<FieldElement>,
}

/// A leader's secret state for one evaluation.
#[derive(Clone, Debug)]
pub struct LeaderSetup {
    pub index: usize,
    pub tk: BigUint,
    pub eval_keys: BlindingKeys,
    pub root: FieldElement,
    /// `gamma'_i = (x_i - root) * w'_i`, sent to every other client.
    pub gamma_blinded: Vec<FieldElement>,
    /// `f_l` for every other client `l`.
    pub f_keys: BTreeMap<usize, PrfKey>,
    pub record: EvalRecord,
}

/// Samples `h`, the temporary key, the root and the mask keys for leader `u`
/// among clients `1..=n`.
pub fn leader_setup<R: Rng + ?Sized>(
    u: usize,
    n: usize,
    keys: &ClientKeys,
    sp: &ServerParams,
    eval_squarings: u64,
    rng: &mut R,
) -> Result<LeaderSetup, TfError> {
    let field = sp.field();
    let (h, tk, eval_keys, w_prime) = loop {
        let h = random_base(rng, keys.modulus());
        let tk = trapdoor_power(&h, eval_squarings, keys)?;
        let eval_keys = BlindingKeys::from_master(&tk);
        let (_, w_prime) = eval_keys.factors(sp.t_bar(), field);
        // w' must be invertible for the solver; a zero occurs with probability ~t_bar/p
        if !w_prime.iter().any(FieldElement::is_zero) {
            break (h, tk, eval_keys, w_prime);
        }
    };
    let f_keys = (1..=n).filter(|&l| l != u).map(|l| (l, PrfKey::random(rng))).collect();
    let root = field.random_nonzero(rng);
    let gamma_blinded = sp.xs().iter().zip(&w_prime).map(|(x, w)| &(x - &root) * w).collect();
    let record = EvalRecord {
        h,
        com_root: commit(&root, &tk),
        modulus: keys.modulus().clone(),
        squarings: eval_squarings,
    };
    Ok(LeaderSetup { index: u, tk, eval_keys, root, gamma_blinded, f_keys, record })
}

/// What a client received from the leaders before computing its grant.
#[derive(Clone, Debug, Default)]
pub struct GrantInbox {
    pub gammas: BTreeMap<usize, Vec<FieldElement>>,
    pub f_keys: BTreeMap<usize, PrfKey>,
}

/// OLE sender inputs `(e_i, e'_i)` for each coordinate, plus the mask `y_i`
/// the client folded in (kept for white-box checks).
#[derive(Clone, Debug)]
pub struct Grant {
    pub sender_inputs: Vec<OleSenderInput>,
    pub masks: Vec<FieldElement>,
}

struct GrantContext<'a> {
    u: usize,
    secret: &'a ClientSecret,
    sp: &'a ServerParams,
    leaders: &'a [usize],
    q: &'a FieldElement,
    inbox: &'a GrantInbox,
}

impl GrantContext<'_> {
    fn gamma(&self, l: usize, own: Option<&LeaderSetup>, i: usize) -> Result<FieldElement, TfError> {
        if let Some(setup) = own.filter(|s| s.index == l) {
            return Ok(setup.gamma_blinded[i].clone());
        }
        let vec = self.inbox.gammas.get(&l).ok_or(TfError::MissingInbox {
            client: self.u,
            from: l,
            what: "blinded root vector",
        })?;
        if vec.len() != self.sp.t_bar() {
            return Err(TfError::LengthMismatch { expected: self.sp.t_bar(), got: vec.len() });
        }
        Ok(vec[i].clone())
    }

    fn received_key(&self, l: usize) -> Result<&PrfKey, TfError> {
        self.inbox.f_keys.get(&l).ok_or(TfError::MissingInbox { client: self.u, from: l, what: "mask key" })
    }

    fn build(&self, own: Option<&LeaderSetup>) -> Result<Grant, TfError> {
        let field = self.sp.field();
        if !self.sp.in_universe(self.q) {
            return Err(TfError::OutsideUniverse(self.q.value().clone()));
        }
        let t_bar = self.sp.t_bar();
        let (z, w) = self.secret.keys.factors(t_bar, field);
        let mut sender_inputs = Vec::with_capacity(t_bar);
        let mut masks = Vec::with_capacity(t_bar);
        for i in 0..t_bar {
            let idx = (i + 1) as u64;
            let mut v = field.one();
            for &l in self.leaders {
                v = v * self.gamma(l, own, i)?;
            }
            let mut y = field.zero();
            for &l in self.leaders.iter().filter(|&&l| l != self.u) {
                y = y + prf_index(idx, self.received_key(l)?, field);
            }
            if let Some(setup) = own {
                for key in setup.f_keys.values() {
                    y = y - prf_index(idx, key, field);
                }
            }
            let qv = self.q * &v;
            let e = &qv * &w[i].inv()?;
            let mut e_prime = &y - &(&qv * &z[i]);
            if let Some(setup) = own {
                e_prime = e_prime + setup.eval_keys.additive(i + 1, field);
            }
            sender_inputs.push(OleSenderInput::new(e, e_prime)?);
            masks.push(y);
        }
        Ok(Grant { sender_inputs, masks })
    }
}

/// Grant of leader `setup.index`.
pub fn leader_grant(
    setup: &LeaderSetup,
    secret: &ClientSecret,
    sp: &ServerParams,
    leaders: &[usize],
    q: &FieldElement,
    inbox: &GrantInbox,
) -> Result<Grant, TfError> {
    GrantContext { u: setup.index, secret, sp, leaders, q, inbox }.build(Some(setup))
}

/// Grant of a client `u` outside the leader set.
pub fn nonleader_grant(
    u: usize,
    secret: &ClientSecret,
    sp: &ServerParams,
    leaders: &[usize],
    q: &FieldElement,
    inbox: &GrantInbox,
) -> Result<Grant, TfError> {
    GrantContext { u, secret, sp, leaders, q, inbox }.build(None)
}

/// Runs the OLE sessions between one client's grant and the server holding
/// that client's puzzle, returning the server's outputs `d_i`.
pub fn run_grant_sessions<S, R>(
    puzzle: &PuzzleVector,
    grant: &Grant,
    first_session: u64,
    client_rng: &mut S,
    server_rng: &mut R,
    hook: &mut dyn OleInterceptor,
) -> Result<Vec<FieldElement>, TfError>
where
    S: Rng + ?Sized,
    R: Rng + ?Sized,
{
    if puzzle.o.len() != grant.sender_inputs.len() {
        return Err(TfError::LengthMismatch { expected: grant.sender_inputs.len(), got: puzzle.o.len() });
    }
    puzzle
        .o
        .iter()
        .zip(&grant.sender_inputs)
        .enumerate()
        .map(|(i, (o, input))| {
            let receiver = OleReceiverInput::new(o.clone());
            let run = ole_plus_session(first_session + i as u64, input, &receiver, client_rng, server_rng, hook)?;
            Ok(run.output)
        })
        .collect()
}

/// `g_i = sum_u d_{i,u}`.
pub fn server_aggregate(contributions: &[Vec<FieldElement>], sp: &ServerParams) -> Result<EvalPuzzle, TfError> {
    let t_bar = sp.t_bar();
    let mut g = vec![sp.field().zero(); t_bar];
    for d in contributions {
        if d.len() != t_bar {
            return Err(TfError::LengthMismatch { expected: t_bar, got: d.len() });
        }
        for (acc, v) in g.iter_mut().zip(d) {
            *acc = &*acc + v;
        }
    }
    Ok(EvalPuzzle { g })
}

/// Solves every leader's temporary key, one squaring chain per thread.
pub fn solve_eval_keys(epp: &EvalPublicParams) -> Result<Vec<BigUint>, TfError> {
    epp.squarings()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = epp
            .records
            .iter()
            .map(|rec| scope.spawn(move || sequential_power(&rec.h, rec.squarings, &rec.modulus)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("squaring thread panicked").map_err(TfError::from))
            .collect()
    })
}

/// `theta_i = (prod_u w'_{i,u})^-1 * (g_i - sum_u z'_{i,u})`, interpolated.
pub fn recover_theta(g: &EvalPuzzle, tks: &[BigUint], sp: &ServerParams) -> Result<DensePoly, TfError> {
    let field = sp.field();
    let t_bar = sp.t_bar();
    if g.g.len() != t_bar {
        return Err(TfError::LengthMismatch { expected: t_bar, got: g.g.len() });
    }
    let layers: Vec<_> = tks.iter().map(|tk| BlindingKeys::from_master(tk).factors(t_bar, field)).collect();
    let theta: Vec<_> = (0..t_bar)
        .map(|i| {
            let mut w_prod = field.one();
            let mut z_sum = field.zero();
            for (z, w) in &layers {
                w_prod = w_prod * &w[i];
                z_sum = z_sum + &z[i];
            }
            Ok(&w_prod.inv()? * &(&g.g[i] - &z_sum))
        })
        .collect::<Result<_, TfError>>()?;
    Ok(interpolate(&PointValuePoly::new(sp.xs().to_vec(), theta)?))
}

/// `theta(0) * prod_u (-root_u)^-1`.
pub fn extract_result(theta: &DensePoly, roots: &[FieldElement]) -> Result<FieldElement, TfError> {
    let field = theta.field();
    let denom = roots.iter().fold(field.one(), |acc, r| acc * r.neg());
    Ok(theta.constant_term() * denom.inv()?)
}

fn root_finding_rng(g: &EvalPuzzle) -> ChaCha20Rng {
    let input: Vec<u8> = g.g.iter().flat_map(|v| encode_int(v.value())).collect();
    ChaCha20Rng::from_seed(hash_g(&input))
}

/// Solves the temporary keys, strips the evaluation layer and returns the
/// combined result together with the opened roots.
pub fn solve_combination(
    g: &EvalPuzzle,
    epp: &EvalPublicParams,
    sp: &ServerParams,
) -> Result<(FieldElement, Proof), TfError> {
    let tks = solve_eval_keys(epp)?;
    solve_combination_with_keys(g, epp, sp, &tks)
}

/// [`solve_combination`] once the temporary keys are known.
pub fn solve_combination_with_keys(
    g: &EvalPuzzle,
    epp: &EvalPublicParams,
    sp: &ServerParams,
    tks: &[BigUint],
) -> Result<(FieldElement, Proof), TfError> {
    if tks.len() != epp.records.len() {
        return Err(TfError::LengthMismatch { expected: epp.records.len(), got: tks.len() });
    }
    let theta = recover_theta(g, tks, sp)?;
    if theta.is_zero() {
        return Err(TfError::DegenerateCombination);
    }
    let roots = find_roots(&theta, &mut root_finding_rng(g))?;
    let mut openings = Vec::with_capacity(tks.len());
    for (idx, (rec, tk)) in epp.records.iter().zip(tks).enumerate() {
        let root = roots
            .iter()
            .find(|r| !r.is_zero() && verify_commit(&rec.com_root, r, tk))
            .ok_or(TfError::SolutionExtractionFailure(idx))?;
        openings.push(RootOpening { root: root.clone(), tk: tk.clone() });
    }
    let chosen: Vec<_> = openings.iter().map(|o| o.root.clone()).collect();
    let res = extract_result(&theta, &chosen)?;
    Ok((res, Proof::Combination { openings }))
}

/// Public check of a combined result against its openings.
pub fn verify_eval(
    res: &FieldElement,
    openings: &[RootOpening],
    g: &EvalPuzzle,
    epp: &EvalPublicParams,
    sp: &ServerParams,
) -> bool {
    if openings.len() != epp.records.len() || epp.squarings().is_err() {
        return false;
    }
    let openings_ok = openings.iter().zip(&epp.records).all(|(op, rec)| {
        op.root.field() == sp.field() && !op.root.is_zero() && verify_commit(&rec.com_root, &op.root, &op.tk)
    });
    if !openings_ok {
        return false;
    }
    let tks: Vec<_> = openings.iter().map(|o| o.tk.clone()).collect();
    let Ok(theta) = recover_theta(g, &tks, sp) else {
        return false;
    };
    if theta.is_zero() || !openings.iter().all(|o| theta.evaluate(&o.root).is_zero()) {
        return false;
    }
    let roots: Vec<_> = openings.iter().map(|o| o.root.clone()).collect();
    matches!(extract_result(&theta, &roots), Ok(r) if &r == res)
}

/// Public check that `(m, mk)` opens a client's commitment.
pub fn verify_client(m: &FieldElement, mk: &BigUint, pp: &PuzzlePublicParams) -> bool {
    verify_commit(&pp.com, m, mk)
}

/// What is being verified.
pub enum VerifyContext<'a> {
    ClientPuzzle { pp: &'a PuzzlePublicParams },
    EvalPuzzle { g: &'a EvalPuzzle, epp: &'a EvalPublicParams },
}

/// Dispatches to [`verify_client`] or [`verify_eval`]; a proof of the wrong
/// kind is rejected.
pub fn verify(m: &FieldElement, proof: &Proof, ctx: VerifyContext<'_>, sp: &ServerParams) -> bool {
    match (proof, ctx) {
        (Proof::SinglePuzzle { mk }, VerifyContext::ClientPuzzle { pp }) => verify_client(m, mk, pp),
        (Proof::Combination { openings }, VerifyContext::EvalPuzzle { g, epp }) => {
            verify_eval(m, openings, g, epp, sp)
        }
        _ => false,
    }
}
