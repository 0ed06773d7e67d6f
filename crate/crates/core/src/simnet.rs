//! Deterministic in-process simulation of the clients, the server and a public
//! verifier exchanging messages over ordered point-to-point channels.
//!
//! Every message passes through an [`AdversaryHook`] that may rewrite or drop
//! it; changes are logged in the report. All randomness comes from the run
//! seed, forked per party, so two runs with the same seed and configuration
//! produce identical reports whether parties are scheduled one after another
//! or on their own threads.
//!
//! The verifier only ever reads messages addressed to it, so
//! [`replay_verification`] can recompute its verdicts from a transcript.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{Commitment, PrfKey};
use crate::field::{FieldElement, PrimeField};
use crate::ole::Honest;
use crate::tf::{
    coin_combine, gen_puzzle, leader_grant, leader_setup, nonleader_grant, run_grant_sessions,
    select_leaders, server_aggregate, solve_combination, solve_single, verify_client, verify_eval,
    ClientPolicy, ClientSecret, CoinShare, EvalPublicParams, EvalPuzzle, EvalRecord, Grant,
    GrantInbox, LeaderSetup, Proof, PuzzlePublicParams, PuzzleVector, RootOpening, ServerParams,
    TfError, DEFAULT_MIN_FIELD_BITS, DEFAULT_UNIVERSE_BITS,
};
use crate::timelock::ClientKeys;
use crate::wire;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyId {
    Client(usize),
    Server,
    Verifier,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Client(i) => write!(f, "client-{i}"),
            PartyId::Server => f.write_str("server"),
            PartyId::Verifier => f.write_str("verifier"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecordWire {
    #[serde(with = "wire::decimal")]
    pub h: BigUint,
    pub com_root: Commitment,
    #[serde(with = "wire::decimal")]
    pub modulus: BigUint,
    pub squarings: u64,
}

impl From<&EvalRecord> for EvalRecordWire {
    fn from(r: &EvalRecord) -> Self {
        EvalRecordWire { h: r.h.clone(), com_root: r.com_root, modulus: r.modulus.clone(), squarings: r.squarings }
    }
}

impl EvalRecordWire {
    pub fn to_record(&self) -> EvalRecord {
        EvalRecord { h: self.h.clone(), com_root: self.com_root, modulus: self.modulus.clone(), squarings: self.squarings }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpeningWire {
    #[serde(with = "wire::decimal")]
    pub root: BigUint,
    #[serde(with = "wire::decimal")]
    pub tk: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    ServerParams {
        #[serde(with = "wire::decimal")]
        p: BigUint,
        #[serde(with = "wire::decimal_vec")]
        xs: Vec<BigUint>,
        leaders: usize,
        threshold: usize,
        universe_bits: u32,
    },
    PuzzlePublish {
        #[serde(with = "wire::decimal_vec")]
        o: Vec<BigUint>,
        com: Commitment,
        squarings: u64,
        #[serde(with = "wire::decimal")]
        base: BigUint,
        #[serde(with = "wire::decimal")]
        modulus: BigUint,
    },
    CoinCommit {
        evaluation: usize,
        com: Commitment,
    },
    CoinReveal {
        evaluation: usize,
        value: String,
        nonce: String,
    },
    FKey {
        evaluation: usize,
        key: PrfKey,
    },
    GammaVec {
        evaluation: usize,
        #[serde(with = "wire::decimal_vec")]
        values: Vec<BigUint>,
    },
    LeaderRecord {
        evaluation: usize,
        record: EvalRecordWire,
    },
    OleSession {
        evaluation: usize,
        coordinate: usize,
    },
    EvalPublish {
        evaluation: usize,
        #[serde(with = "wire::decimal_vec")]
        g: Vec<BigUint>,
        records: Vec<EvalRecordWire>,
    },
    SolutionPublish {
        client: usize,
        #[serde(with = "wire::decimal")]
        m: BigUint,
        #[serde(with = "wire::decimal")]
        mk: BigUint,
    },
    ProofPublish {
        evaluation: usize,
        #[serde(with = "wire::decimal")]
        res: BigUint,
        openings: Vec<OpeningWire>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub payload: Payload,
}

pub enum Intercept {
    Deliver(Envelope),
    Drop,
}

/// Sees every message before delivery.
pub trait AdversaryHook {
    fn intercept(&mut self, envelope: &Envelope) -> Intercept;
}

/// Delivers everything unchanged.
pub struct IdentityHook;

impl AdversaryHook for IdentityHook {
    fn intercept(&mut self, envelope: &Envelope) -> Intercept {
        Intercept::Deliver(envelope.clone())
    }
}

impl<F: FnMut(&Envelope) -> Intercept> AdversaryHook for F {
    fn intercept(&mut self, envelope: &Envelope) -> Intercept {
        self(envelope)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptAction {
    Modified,
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interception {
    pub seq: u64,
    pub action: InterceptAction,
    pub original: Envelope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    PuzzleGeneration,
    LeaderElection,
    Grant,
    Evaluation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub party: PartyId,
    pub phase: Phase,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Sequential,
    Threaded,
}

fn default_universe_bits() -> u32 {
    DEFAULT_UNIVERSE_BITS
}

fn default_min_field_bits() -> u64 {
    DEFAULT_MIN_FIELD_BITS
}

/// Everything a run needs besides the seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub clients: usize,
    pub leaders: usize,
    pub threshold: usize,
    pub field_bits: u64,
    #[serde(default = "default_universe_bits")]
    pub universe_bits: u32,
    #[serde(default = "default_min_field_bits")]
    pub min_field_bits: u64,
    pub rsa_prime_bits: u64,
    #[serde(with = "wire::decimal_vec")]
    pub messages: Vec<BigUint>,
    /// Puzzle squaring count per client.
    pub squarings: Vec<u64>,
    /// Squaring count shared by all leaders' temporary keys.
    pub eval_squarings: u64,
    /// One coefficient vector per evaluation.
    #[serde(with = "wire::decimal_matrix")]
    pub coefficients: Vec<Vec<BigUint>>,
    #[serde(default)]
    pub schedule: Schedule,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid simulation config: {0}")]
pub struct ConfigError(pub String);

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.clients == 0 {
            return err("need at least one client".into());
        }
        if self.leaders == 0 || self.leaders > self.clients {
            return err(format!("leaders must be in 1..={}", self.clients));
        }
        if self.threshold == 0 || self.threshold > self.leaders {
            return err(format!("threshold must be in 1..={}", self.leaders));
        }
        if self.messages.len() != self.clients {
            return err(format!("expected {} messages, got {}", self.clients, self.messages.len()));
        }
        if self.squarings.len() != self.clients {
            return err(format!("expected {} squaring counts, got {}", self.clients, self.squarings.len()));
        }
        let bound = BigUint::from(1u8) << self.universe_bits;
        if self.messages.iter().any(|m| m >= &bound) {
            return err("a message lies outside the plaintext universe".into());
        }
        for (e, q) in self.coefficients.iter().enumerate() {
            if q.len() != self.clients {
                return err(format!("evaluation {e}: expected {} coefficients, got {}", self.clients, q.len()));
            }
            if q.iter().any(|c| c >= &bound) {
                return err(format!("evaluation {e}: a coefficient lies outside the plaintext universe"));
            }
        }
        if self.field_bits <= u64::from(self.universe_bits) + 1 {
            return err("field must be larger than the plaintext universe".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldReport {
    #[serde(with = "wire::decimal")]
    pub p: BigUint,
    #[serde(with = "wire::decimal_vec")]
    pub xs: Vec<BigUint>,
    pub leaders: usize,
    pub threshold: usize,
    pub universe_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleReport {
    pub client: usize,
    #[serde(with = "wire::decimal_vec")]
    pub o: Vec<BigUint>,
    pub com: Commitment,
    pub squarings: u64,
    #[serde(with = "wire::decimal")]
    pub base: BigUint,
    #[serde(with = "wire::decimal")]
    pub modulus: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub evaluation: usize,
    pub shared_seed: String,
    pub leaders: Vec<usize>,
    #[serde(with = "wire::decimal_vec")]
    pub coefficients: Vec<BigUint>,
    #[serde(with = "wire::decimal_vec")]
    pub g: Vec<BigUint>,
    pub records: Vec<EvalRecordWire>,
    #[serde(with = "wire::decimal_opt")]
    pub res: Option<BigUint>,
    pub openings: Vec<OpeningWire>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub client: usize,
    #[serde(with = "wire::decimal_opt")]
    pub m: Option<BigUint>,
    #[serde(with = "wire::decimal_opt")]
    pub mk: Option<BigUint>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub index: usize,
    pub valid: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// One verdict per client puzzle the verifier saw published.
    pub client_puzzles: Vec<Verdict>,
    /// One verdict per published evaluation.
    pub evaluations: Vec<Verdict>,
}

impl VerificationReport {
    pub fn all_valid(&self) -> bool {
        self.client_puzzles.iter().chain(&self.evaluations).all(|v| v.valid)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub field: Option<FieldReport>,
    pub puzzles: Vec<PuzzleReport>,
    pub evaluations: Vec<EvaluationReport>,
    pub solutions: Vec<SolutionReport>,
    pub verification: VerificationReport,
    pub abort: Option<AbortInfo>,
    pub interceptions: Vec<Interception>,
    pub transcript: Vec<Envelope>,
}

impl RunReport {
    /// The transcript as JSON lines, one message per line.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|e| serde_json::to_string(e).expect("envelopes serialize") + "\n")
            .collect()
    }
}

/// Internals that no single party would see, exposed for tests.
#[derive(Clone, Debug, Default)]
pub struct WhiteBox {
    /// `masks[e][u - 1][i]` is client `u`'s mask `y_i` in evaluation `e`.
    pub masks: Vec<Vec<Vec<FieldElement>>>,
    /// Leader roots per evaluation, in leader-index order.
    pub roots: Vec<Vec<FieldElement>>,
    pub server_params: Option<ServerParams>,
}

/// A party's private RNG, forked from the run seed by label.
pub fn fork_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let digest = Sha256::new()
        .chain_update(b"tempora/sim/v1")
        .chain_update(seed.to_be_bytes())
        .chain_update(label.as_bytes())
        .finalize();
    ChaCha20Rng::from_seed(digest.into())
}

struct Network<'h> {
    seq: u64,
    inboxes: BTreeMap<PartyId, VecDeque<Envelope>>,
    transcript: Vec<Envelope>,
    interceptions: Vec<Interception>,
    hook: &'h mut dyn AdversaryHook,
}

impl<'h> Network<'h> {
    /// Returns the delivered copy, if any.
    fn send(&mut self, from: PartyId, to: PartyId, payload: Payload) -> Option<Envelope> {
        self.seq += 1;
        let original = Envelope { seq: self.seq, from, to, payload };
        match self.hook.intercept(&original) {
            Intercept::Deliver(delivered) => {
                if delivered != original {
                    self.interceptions.push(Interception {
                        seq: original.seq,
                        action: InterceptAction::Modified,
                        original,
                    });
                }
                self.transcript.push(delivered.clone());
                self.inboxes.entry(delivered.to).or_default().push_back(delivered.clone());
                Some(delivered)
            }
            Intercept::Drop => {
                self.interceptions.push(Interception { seq: original.seq, action: InterceptAction::Dropped, original });
                None
            }
        }
    }

    /// Removes and returns every pending message for `to` accepted by `pick`,
    /// in arrival order.
    fn take(&mut self, to: PartyId, mut pick: impl FnMut(&Envelope) -> bool) -> Vec<Envelope> {
        let queue = self.inboxes.entry(to).or_default();
        let (taken, kept): (Vec<_>, Vec<_>) = queue.drain(..).partition(|e| pick(e));
        queue.extend(kept);
        taken
    }
}

struct ClientState {
    index: usize,
    rng: ChaCha20Rng,
    sp: Option<ServerParams>,
    keys: Option<ClientKeys>,
    secret: Option<ClientSecret>,
}

fn par_map<I, T, F>(schedule: Schedule, items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync,
{
    match schedule {
        Schedule::Sequential => items.into_iter().map(f).collect(),
        Schedule::Threaded => {
            let f = &f;
            std::thread::scope(|s| {
                let handles: Vec<_> = items.into_iter().map(|item| s.spawn(move || f(item))).collect();
                handles.into_iter().map(|h| h.join().expect("party thread panicked")).collect()
            })
        }
    }
}

fn abort(party: PartyId, phase: Phase, reason: impl fmt::Display) -> AbortInfo {
    AbortInfo { party, phase, reason: reason.to_string() }
}

fn params_payload(sp: &ServerParams) -> Payload {
    Payload::ServerParams {
        p: sp.field().modulus().clone(),
        xs: sp.xs().iter().map(|x| x.value().clone()).collect(),
        leaders: sp.leaders(),
        threshold: sp.threshold(),
        universe_bits: sp.universe_bits(),
    }
}

fn parse_params(payload: &Payload) -> Result<ServerParams, String> {
    let Payload::ServerParams { p, xs, leaders, threshold, universe_bits } = payload else {
        return Err("not a parameter message".into());
    };
    let field = PrimeField::new(p.clone()).map_err(|e| e.to_string())?;
    let xs = canonical_vec(&field, xs)?;
    ServerParams::new(field, xs, *leaders, *threshold, *universe_bits).map_err(|e| e.to_string())
}

fn canonical_vec(field: &PrimeField, values: &[BigUint]) -> Result<Vec<FieldElement>, String> {
    values.iter().map(|v| field.canonical(v.clone()).map_err(|e| e.to_string())).collect()
}

fn puzzle_payload(puzzle: &PuzzleVector, pp: &PuzzlePublicParams) -> Payload {
    Payload::PuzzlePublish {
        o: puzzle.o.iter().map(|v| v.value().clone()).collect(),
        com: pp.com,
        squarings: pp.squarings,
        base: pp.base.clone(),
        modulus: pp.modulus.clone(),
    }
}

fn parse_puzzle(field: &PrimeField, payload: &Payload) -> Result<(PuzzleVector, PuzzlePublicParams), String> {
    let Payload::PuzzlePublish { o, com, squarings, base, modulus } = payload else {
        return Err("not a puzzle message".into());
    };
    let pp = PuzzlePublicParams { com: *com, squarings: *squarings, base: base.clone(), modulus: modulus.clone() };
    Ok((PuzzleVector { o: canonical_vec(field, o)? }, pp))
}

struct Sim<'c, 'h> {
    cfg: &'c SimConfig,
    seed: u64,
    net: Network<'h>,
    clients: Vec<ClientState>,
    report: RunReport,
    white: WhiteBox,
    server_sp: Option<ServerParams>,
    server_puzzles: BTreeMap<usize, (PuzzleVector, PuzzlePublicParams)>,
    evaluations: Vec<(EvalPuzzle, EvalPublicParams)>,
}

impl<'c, 'h> Sim<'c, 'h> {
    fn n(&self) -> usize {
        self.cfg.clients
    }

    fn execute(&mut self) -> Result<(), AbortInfo> {
        self.setup()?;
        self.generate_puzzles()?;
        for e in 0..self.cfg.coefficients.len() {
            self.evaluate(e)?;
        }
        self.solve();
        Ok(())
    }

    fn setup(&mut self) -> Result<(), AbortInfo> {
        let mut rng = fork_rng(self.seed, "server");
        let cfg = self.cfg;
        let sp = ServerParams::setup_with_universe(&mut rng, cfg.field_bits, cfg.leaders, cfg.threshold, cfg.universe_bits)
            .map_err(|e| abort(PartyId::Server, Phase::Setup, e))?;
        self.report.field = Some(FieldReport {
            p: sp.field().modulus().clone(),
            xs: sp.xs().iter().map(|x| x.value().clone()).collect(),
            leaders: sp.leaders(),
            threshold: sp.threshold(),
            universe_bits: sp.universe_bits(),
        });
        for u in 1..=self.n() {
            self.net.send(PartyId::Server, PartyId::Client(u), params_payload(&sp));
        }
        self.net.send(PartyId::Server, PartyId::Verifier, params_payload(&sp));
        self.white.server_params = Some(sp.clone());
        self.server_sp = Some(sp);

        for c in &mut self.clients {
            let party = PartyId::Client(c.index);
            let msgs = self.net.take(party, |e| matches!(e.payload, Payload::ServerParams { .. }));
            let msg = msgs.first().ok_or_else(|| abort(party, Phase::Setup, "no server parameters received"))?;
            c.sp = Some(parse_params(&msg.payload).map_err(|e| abort(party, Phase::Setup, e))?);
        }
        Ok(())
    }

    fn generate_puzzles(&mut self) -> Result<(), AbortInfo> {
        let cfg = self.cfg;
        let policy = ClientPolicy { min_field_bits: cfg.min_field_bits };
        let states: Vec<&mut ClientState> = self.clients.iter_mut().collect();
        let outcomes = par_map(cfg.schedule, states, |c| {
            let sp = c.sp.as_ref().expect("parameters received");
            let keys = ClientKeys::generate(&mut c.rng, cfg.rsa_prime_bits).map_err(|e| e.to_string())?;
            let m = sp.field().element(cfg.messages[c.index - 1].clone());
            let generated = gen_puzzle(&m, &keys, sp, cfg.squarings[c.index - 1], &policy, &mut c.rng)
                .map_err(|e| e.to_string())?;
            c.keys = Some(keys);
            c.secret = Some(generated.secret.clone());
            Ok::<_, String>(generated)
        });
        let mut published = Vec::new();
        for (u, outcome) in (1..).zip(outcomes) {
            let g = outcome.map_err(|e| abort(PartyId::Client(u), Phase::PuzzleGeneration, e))?;
            published.push((u, g));
        }
        for (u, g) in &published {
            self.report.puzzles.push(PuzzleReport {
                client: *u,
                o: g.puzzle.o.iter().map(|v| v.value().clone()).collect(),
                com: g.public.com,
                squarings: g.public.squarings,
                base: g.public.base.clone(),
                modulus: g.public.modulus.clone(),
            });
            let payload = puzzle_payload(&g.puzzle, &g.public);
            self.net.send(PartyId::Client(*u), PartyId::Server, payload.clone());
            self.net.send(PartyId::Client(*u), PartyId::Verifier, payload);
        }

        let sp = self.server_sp.clone().expect("server parameters");
        let msgs = self.net.take(PartyId::Server, |e| matches!(e.payload, Payload::PuzzlePublish { .. }));
        for msg in msgs {
            let PartyId::Client(u) = msg.from else { continue };
            let parsed = parse_puzzle(sp.field(), &msg.payload)
                .map_err(|e| abort(PartyId::Server, Phase::PuzzleGeneration, format!("puzzle from client {u}: {e}")))?;
            self.server_puzzles.insert(u, parsed);
        }
        if let Some(u) = (1..=self.n()).find(|u| !self.server_puzzles.contains_key(u)) {
            return Err(abort(PartyId::Server, Phase::PuzzleGeneration, format!("no puzzle received from client {u}")));
        }
        Ok(())
    }

    fn elect_leaders(&mut self, e: usize) -> Result<(Vec<usize>, [u8; 32]), AbortInfo> {
        let n = self.n();
        let shares: Vec<CoinShare> = self.clients.iter_mut().map(|c| CoinShare::random(&mut c.rng)).collect();
        for (u, share) in (1..).zip(&shares) {
            for v in (1..=n).filter(|&v| v != u) {
                self.net.send(PartyId::Client(u), PartyId::Client(v), Payload::CoinCommit { evaluation: e, com: share.commitment() });
            }
        }
        for (u, share) in (1..).zip(&shares) {
            for v in (1..=n).filter(|&v| v != u) {
                let reveal = Payload::CoinReveal {
                    evaluation: e,
                    value: hex::encode(share.value),
                    nonce: hex::encode(share.nonce),
                };
                self.net.send(PartyId::Client(u), PartyId::Client(v), reveal);
            }
        }
        let mut agreed: Option<(Vec<usize>, [u8; 32])> = None;
        for v in 1..=n {
            let party = PartyId::Client(v);
            let fail = |reason: String| abort(party, Phase::LeaderElection, reason);
            let msgs = self.net.take(party, |m| {
                matches!(m.payload, Payload::CoinCommit { evaluation, .. } | Payload::CoinReveal { evaluation, .. } if evaluation == e)
            });
            let mut commits = BTreeMap::new();
            let mut reveals = BTreeMap::new();
            for m in msgs {
                let PartyId::Client(u) = m.from else { continue };
                match m.payload {
                    Payload::CoinCommit { com, .. } => {
                        commits.insert(u, com);
                    }
                    Payload::CoinReveal { value, nonce, .. } => {
                        let decode = |t: &str| -> Result<[u8; 32], String> {
                            hex::decode(t)
                                .ok()
                                .and_then(|b| b.try_into().ok())
                                .ok_or_else(|| format!("malformed coin reveal from client {u}"))
                        };
                        reveals.insert(u, CoinShare { value: decode(&value).map_err(&fail)?, nonce: decode(&nonce).map_err(&fail)? });
                    }
                    _ => {}
                }
            }
            commits.insert(v, shares[v - 1].commitment());
            reveals.insert(v, shares[v - 1].clone());
            let mut com_list = Vec::with_capacity(n);
            let mut reveal_list = Vec::with_capacity(n);
            for u in 1..=n {
                com_list.push(*commits.get(&u).ok_or_else(|| fail(format!("no coin commitment from client {u}")))?);
                reveal_list.push(reveals.get(&u).ok_or_else(|| fail(format!("no coin reveal from client {u}")))?.clone());
            }
            let seed = coin_combine(&com_list, &reveal_list).map_err(|err| match err {
                TfError::OpeningMismatch(u) => fail(format!("client {u} opened its coin commitment incorrectly")),
                other => fail(other.to_string()),
            })?;
            let leaders = select_leaders(n, self.cfg.leaders, &seed).map_err(|err| fail(err.to_string()))?;
            match &agreed {
                None => agreed = Some((leaders, seed.0)),
                Some((l, s)) if *l == leaders && *s == seed.0 => {}
                Some(_) => return Err(fail("clients disagree on the leader set".into())),
            }
        }
        Ok(agreed.expect("at least one client"))
    }

    fn evaluate(&mut self, e: usize) -> Result<(), AbortInfo> {
        let cfg = self.cfg;
        let n = self.n();
        let (leaders, shared) = self.elect_leaders(e)?;
        let mut report = EvaluationReport {
            evaluation: e,
            shared_seed: hex::encode(shared),
            leaders: leaders.clone(),
            coefficients: cfg.coefficients[e].clone(),
            g: Vec::new(),
            records: Vec::new(),
            res: None,
            openings: Vec::new(),
            error: None,
        };

        let mut setups: BTreeMap<usize, LeaderSetup> = BTreeMap::new();
        {
            let leader_set: BTreeSet<usize> = leaders.iter().copied().collect();
            let states: Vec<&mut ClientState> =
                self.clients.iter_mut().filter(|c| leader_set.contains(&c.index)).collect();
            let outcomes = par_map(cfg.schedule, states, |c| {
                let sp = c.sp.as_ref().expect("parameters");
                let keys = c.keys.as_ref().expect("keys");
                (c.index, leader_setup(c.index, n, keys, sp, cfg.eval_squarings, &mut c.rng))
            });
            for (u, outcome) in outcomes {
                setups.insert(u, outcome.map_err(|err| abort(PartyId::Client(u), Phase::Grant, err))?);
            }
        }
        self.white.roots.push(leaders.iter().map(|u| setups[u].root.clone()).collect());
        for &u in &leaders {
            let s = &setups[&u];
            for l in (1..=n).filter(|&l| l != u) {
                self.net.send(PartyId::Client(u), PartyId::Client(l), Payload::FKey { evaluation: e, key: s.f_keys[&l].clone() });
                let values = s.gamma_blinded.iter().map(|v| v.value().clone()).collect();
                self.net.send(PartyId::Client(u), PartyId::Client(l), Payload::GammaVec { evaluation: e, values });
            }
            self.net.send(PartyId::Client(u), PartyId::Server, Payload::LeaderRecord { evaluation: e, record: (&s.record).into() });
        }

        // each client assembles its inbox, then computes its grant
        let mut inboxes = Vec::with_capacity(n);
        for c in &self.clients {
            let party = PartyId::Client(c.index);
            let field = c.sp.as_ref().expect("parameters").field().clone();
            let msgs = self.net.take(party, |m| {
                matches!(m.payload, Payload::FKey { evaluation, .. } | Payload::GammaVec { evaluation, .. } if evaluation == e)
            });
            let mut inbox = GrantInbox::default();
            for m in msgs {
                let PartyId::Client(from) = m.from else { continue };
                match m.payload {
                    Payload::FKey { key, .. } => {
                        inbox.f_keys.insert(from, key);
                    }
                    Payload::GammaVec { values, .. } => {
                        let gamma = canonical_vec(&field, &values).map_err(|err| abort(party, Phase::Grant, err))?;
                        inbox.gammas.insert(from, gamma);
                    }
                    _ => {}
                }
            }
            inboxes.push(inbox);
        }
        let q = &cfg.coefficients[e];
        let items: Vec<_> = self.clients.iter().zip(&inboxes).collect();
        let grants = par_map(cfg.schedule, items, |(c, inbox)| {
            let sp = c.sp.as_ref().expect("parameters");
            let secret = c.secret.as_ref().expect("secret");
            let qu = sp.field().element(q[c.index - 1].clone());
            match setups.get(&c.index) {
                Some(s) => leader_grant(s, secret, sp, &leaders, &qu, inbox),
                None => nonleader_grant(c.index, secret, sp, &leaders, &qu, inbox),
            }
        });
        let mut client_grants: Vec<Grant> = Vec::with_capacity(n);
        for (u, g) in (1..).zip(grants) {
            client_grants.push(g.map_err(|err| abort(PartyId::Client(u), Phase::Grant, err))?);
        }
        self.white.masks.push(client_grants.iter().map(|g| g.masks.clone()).collect());

        let sp = self.server_sp.clone().expect("server parameters");
        let t_bar = sp.t_bar();
        for u in 1..=n {
            for i in 1..=t_bar {
                self.net.send(PartyId::Client(u), PartyId::Server, Payload::OleSession { evaluation: e, coordinate: i });
            }
        }

        // server side
        let fail = |reason: String| abort(PartyId::Server, Phase::Evaluation, reason);
        let msgs = self.net.take(PartyId::Server, |m| {
            matches!(m.payload, Payload::OleSession { evaluation, .. } | Payload::LeaderRecord { evaluation, .. } if evaluation == e)
        });
        let mut sessions: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut records: BTreeMap<usize, EvalRecordWire> = BTreeMap::new();
        for m in msgs {
            let PartyId::Client(u) = m.from else { continue };
            match m.payload {
                Payload::OleSession { coordinate, .. } => {
                    sessions.entry(u).or_default().insert(coordinate);
                }
                Payload::LeaderRecord { record, .. } => {
                    records.insert(u, record);
                }
                _ => {}
            }
        }
        for u in 1..=n {
            let got = sessions.get(&u).map_or(0, BTreeSet::len);
            if got != t_bar {
                return Err(fail(format!("only {got} of {t_bar} OLE sessions with client {u} took place")));
            }
        }
        if records.len() != cfg.leaders {
            return Err(fail(format!("expected {} leader records, got {}", cfg.leaders, records.len())));
        }
        let epp = EvalPublicParams { records: records.values().map(EvalRecordWire::to_record).collect() };
        epp.squarings().map_err(|err| fail(err.to_string()))?;

        let seed = self.seed;
        let items: Vec<_> = (1..=n).zip(&client_grants).collect();
        let server_puzzles = &self.server_puzzles;
        let outputs = par_map(cfg.schedule, items, |(u, grant)| {
            let mut client_rng = fork_rng(seed, &format!("client-{u}/ole/{e}"));
            let mut server_rng = fork_rng(seed, &format!("server/ole/{e}/client-{u}"));
            let puzzle = &server_puzzles[&u].0;
            run_grant_sessions(puzzle, grant, ((u - 1) * t_bar) as u64, &mut client_rng, &mut server_rng, &mut Honest)
        });
        let mut contributions = Vec::with_capacity(n);
        for (u, d) in (1..).zip(outputs) {
            contributions.push(d.map_err(|err| fail(format!("OLE with client {u}: {err}")))?);
        }
        let g = server_aggregate(&contributions, &sp).map_err(|err| fail(err.to_string()))?;

        let publish = Payload::EvalPublish {
            evaluation: e,
            g: g.g.iter().map(|v| v.value().clone()).collect(),
            records: records.values().cloned().collect(),
        };
        // the server solves from the copy that actually got published
        let delivered = self
            .net
            .send(PartyId::Server, PartyId::Verifier, publish)
            .ok_or_else(|| fail("evaluation puzzle was never published".into()))?;
        let Payload::EvalPublish { g: published_g, records: published_records, .. } = &delivered.payload else {
            return Err(fail("published message is not an evaluation puzzle".into()));
        };
        let g = EvalPuzzle { g: canonical_vec(sp.field(), published_g).map_err(fail)? };
        let epp = EvalPublicParams { records: published_records.iter().map(EvalRecordWire::to_record).collect() };
        report.g = g.g.iter().map(|v| v.value().clone()).collect();
        report.records = published_records.clone();
        self.report.evaluations.push(report);
        self.evaluations.push((g, epp));
        Ok(())
    }

    fn solve(&mut self) {
        let sp = self.server_sp.clone().expect("server parameters");
        let schedule = self.cfg.schedule;
        let singles: Vec<_> = self.server_puzzles.iter().collect();
        let solved = par_map(schedule, singles, |(u, (puzzle, pp))| (*u, solve_single(puzzle, pp, &sp)));
        for (u, outcome) in solved {
            let mut entry = SolutionReport { client: u, m: None, mk: None, error: None };
            match outcome {
                Ok((m, Proof::SinglePuzzle { mk })) => {
                    entry.m = Some(m.value().clone());
                    entry.mk = Some(mk.clone());
                    let payload = Payload::SolutionPublish { client: u, m: m.into_value(), mk };
                    self.net.send(PartyId::Server, PartyId::Verifier, payload);
                }
                Ok(_) => unreachable!("single puzzles yield single proofs"),
                Err(err) => entry.error = Some(err.to_string()),
            }
            self.report.solutions.push(entry);
        }

        let combos: Vec<_> = self.evaluations.iter().collect();
        let solved = par_map(schedule, combos, |(g, epp)| solve_combination(g, epp, &sp));
        for (e, outcome) in solved.into_iter().enumerate() {
            match outcome {
                Ok((res, Proof::Combination { openings })) => {
                    let wire_openings: Vec<_> = openings
                        .iter()
                        .map(|o| OpeningWire { root: o.root.value().clone(), tk: o.tk.clone() })
                        .collect();
                    let rep = &mut self.report.evaluations[e];
                    rep.res = Some(res.value().clone());
                    rep.openings = wire_openings.clone();
                    let payload = Payload::ProofPublish { evaluation: e, res: res.into_value(), openings: wire_openings };
                    self.net.send(PartyId::Server, PartyId::Verifier, payload);
                }
                Ok(_) => unreachable!("combinations yield combination proofs"),
                Err(err) => self.report.evaluations[e].error = Some(err.to_string()),
            }
        }
    }
}

/// Verdicts computed from the verifier's inbox alone.
pub fn verify_inbox(messages: &[Envelope]) -> VerificationReport {
    let mut sp = None;
    let mut puzzles: BTreeMap<usize, &Payload> = BTreeMap::new();
    let mut solutions: BTreeMap<usize, (&BigUint, &BigUint)> = BTreeMap::new();
    let mut evals: BTreeMap<usize, (&Vec<BigUint>, &Vec<EvalRecordWire>)> = BTreeMap::new();
    let mut proofs: BTreeMap<usize, (&BigUint, &Vec<OpeningWire>)> = BTreeMap::new();
    for m in messages.iter().filter(|m| m.to == PartyId::Verifier) {
        match (&m.from, &m.payload) {
            (PartyId::Server, p @ Payload::ServerParams { .. }) => sp = parse_params(p).ok(),
            (PartyId::Client(u), p @ Payload::PuzzlePublish { .. }) => {
                puzzles.insert(*u, p);
            }
            (PartyId::Server, Payload::SolutionPublish { client, m, mk }) => {
                solutions.insert(*client, (m, mk));
            }
            (PartyId::Server, Payload::EvalPublish { evaluation, g, records }) => {
                evals.insert(*evaluation, (g, records));
            }
            (PartyId::Server, Payload::ProofPublish { evaluation, res, openings }) => {
                proofs.insert(*evaluation, (res, openings));
            }
            _ => {}
        }
    }
    let Some(sp) = sp else {
        return VerificationReport::default();
    };
    let field = sp.field();
    let client_puzzles = puzzles
        .iter()
        .map(|(&u, payload)| {
            let valid = (|| {
                let (_, pp) = parse_puzzle(field, payload).ok()?;
                let (m, mk) = solutions.get(&u)?;
                let m = field.canonical((*m).clone()).ok()?;
                Some(verify_client(&m, mk, &pp))
            })()
            .unwrap_or(false);
            Verdict { index: u, valid }
        })
        .collect();
    let evaluations = evals
        .iter()
        .map(|(&e, (g, records))| {
            let valid = (|| {
                let g = EvalPuzzle { g: canonical_vec(field, g).ok()? };
                let epp = EvalPublicParams { records: records.iter().map(EvalRecordWire::to_record).collect() };
                let (res, openings) = proofs.get(&e)?;
                let res = field.canonical((*res).clone()).ok()?;
                let openings = openings
                    .iter()
                    .map(|o| Some(RootOpening { root: field.canonical(o.root.clone()).ok()?, tk: o.tk.clone() }))
                    .collect::<Option<Vec<_>>>()?;
                Some(verify_eval(&res, &openings, &g, &epp, &sp))
            })()
            .unwrap_or(false);
            Verdict { index: e, valid }
        })
        .collect();
    VerificationReport { client_puzzles, evaluations }
}

/// Re-runs the verifier on a recorded transcript.
pub fn replay_verification(transcript: &[Envelope]) -> VerificationReport {
    verify_inbox(transcript)
}

pub fn run_protocol(config: &SimConfig, seed: u64) -> Result<RunReport, ConfigError> {
    run_with_adversary(config, seed, &mut IdentityHook)
}

pub fn run_with_adversary(
    config: &SimConfig,
    seed: u64,
    hook: &mut dyn AdversaryHook,
) -> Result<RunReport, ConfigError> {
    run_white_box(config, seed, hook).map(|(report, _)| report)
}

/// [`run_with_adversary`] that also hands back the internals in [`WhiteBox`].
pub fn run_white_box(
    config: &SimConfig,
    seed: u64,
    hook: &mut dyn AdversaryHook,
) -> Result<(RunReport, WhiteBox), ConfigError> {
    config.validate()?;
    let clients = (1..=config.clients)
        .map(|u| ClientState {
            index: u,
            rng: fork_rng(seed, &format!("client-{u}")),
            sp: None,
            keys: None,
            secret: None,
        })
        .collect();
    let mut sim = Sim {
        cfg: config,
        seed,
        net: Network { seq: 0, inboxes: BTreeMap::new(), transcript: Vec::new(), interceptions: Vec::new(), hook },
        clients,
        report: RunReport {
            seed,
            field: None,
            puzzles: Vec::new(),
            evaluations: Vec::new(),
            solutions: Vec::new(),
            verification: VerificationReport::default(),
            abort: None,
            interceptions: Vec::new(),
            transcript: Vec::new(),
        },
        white: WhiteBox::default(),
        server_sp: None,
        server_puzzles: BTreeMap::new(),
        evaluations: Vec::new(),
    };
    if let Err(info) = sim.execute() {
        sim.report.abort = Some(info);
    }
    let verifier_inbox: Vec<Envelope> = sim.net.take(PartyId::Verifier, |_| true);
    let mut report = sim.report;
    report.verification = if report.abort.is_none() { verify_inbox(&verifier_inbox) } else { VerificationReport::default() };
    report.transcript = sim.net.transcript;
    report.interceptions = sim.net.interceptions;
    Ok((report, sim.white))
}

/// Sum of `q_u * m_u` mod `p`, straight from the configuration.
pub fn expected_result(config: &SimConfig, evaluation: usize, p: &BigUint) -> BigUint {
    let total: BigUint = config.coefficients[evaluation]
        .iter()
        .zip(&config.messages)
        .map(|(q, m)| q * m)
        .sum();
    if p.is_zero() {
        total
    } else {
        total % p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, leaders: usize) -> SimConfig {
        SimConfig {
            clients: n,
            leaders,
            threshold: 1,
            field_bits: 128,
            universe_bits: 64,
            min_field_bits: 128,
            rsa_prime_bits: 64,
            messages: (1..=n as u64).map(|m| BigUint::from(m * 100)).collect(),
            squarings: vec![40; n],
            eval_squarings: 20,
            coefficients: vec![(1..=n as u64).map(BigUint::from).collect()],
            schedule: Schedule::Sequential,
        }
    }

    #[test]
    fn honest_run_verifies() {
        let cfg = config(3, 1);
        let report = run_protocol(&cfg, 7).unwrap();
        assert_eq!(report.abort, None);
        let p = &report.field.as_ref().unwrap().p;
        assert_eq!(report.evaluations[0].res.as_ref(), Some(&expected_result(&cfg, 0, p)));
        assert!(report.verification.all_valid());
        assert_eq!(report.verification.client_puzzles.len(), 3);
        assert_eq!(report.verification.evaluations.len(), 1);
        for (s, m) in report.solutions.iter().zip(&cfg.messages) {
            assert_eq!(s.m.as_ref(), Some(m));
        }
        assert_eq!(replay_verification(&report.transcript), report.verification);
    }

    #[test]
    fn deterministic_across_runs_and_schedules() {
        let mut cfg = config(3, 2);
        let a = run_protocol(&cfg, 11).unwrap();
        let b = run_protocol(&cfg, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        cfg.schedule = Schedule::Threaded;
        let c = run_protocol(&cfg, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
        let d = run_protocol(&cfg, 12).unwrap();
        assert_ne!(a.evaluations[0].shared_seed, d.evaluations[0].shared_seed);
    }

    #[test]
    fn white_box_masks_cancel() {
        let cfg = config(4, 2);
        let (report, white) = run_white_box(&cfg, 3, &mut IdentityHook).unwrap();
        assert!(report.verification.all_valid());
        let sp = white.server_params.unwrap();
        for eval in &white.masks {
            for i in 0..sp.t_bar() {
                let sum = eval.iter().fold(sp.field().zero(), |acc, m| acc + &m[i]);
                assert!(sum.is_zero());
            }
        }
    }

    #[test]
    fn flipped_g_is_rejected() {
        let cfg = config(2, 1);
        let mut hook = |env: &Envelope| {
            let mut env = env.clone();
            if let Payload::EvalPublish { g, .. } = &mut env.payload {
                g[1] += 1u8;
            }
            Intercept::Deliver(env)
        };
        let report = run_with_adversary(&cfg, 5, &mut hook).unwrap();
        assert_eq!(report.abort, None);
        assert_eq!(report.interceptions.len(), 1);
        assert!(report.evaluations[0].error.is_some());
        assert_eq!(report.verification.evaluations, vec![Verdict { index: 0, valid: false }]);
        assert!(report.verification.client_puzzles.iter().all(|v| v.valid));
    }

    #[test]
    fn dropped_mask_key_aborts_grant_phase() {
        let cfg = config(3, 1);
        let mut dropped = false;
        let mut hook = |env: &Envelope| {
            if !dropped && matches!(env.payload, Payload::FKey { .. }) {
                dropped = true;
                return Intercept::Drop;
            }
            Intercept::Deliver(env.clone())
        };
        let report = run_with_adversary(&cfg, 9, &mut hook).unwrap();
        let info = report.abort.unwrap();
        assert_eq!(info.phase, Phase::Grant);
        assert!(matches!(info.party, PartyId::Client(_)));
        assert_eq!(report.interceptions[0].action, InterceptAction::Dropped);
    }

    #[test]
    fn forged_coin_reveal_aborts() {
        let cfg = config(2, 1);
        let mut hook = |env: &Envelope| {
            let mut env = env.clone();
            if let (PartyId::Client(1), Payload::CoinReveal { value, .. }) = (&env.from, &mut env.payload) {
                *value = "00".repeat(32);
            }
            Intercept::Deliver(env)
        };
        let report = run_with_adversary(&cfg, 2, &mut hook).unwrap();
        let info = report.abort.unwrap();
        assert_eq!(info.phase, Phase::LeaderElection);
        assert_eq!(info.party, PartyId::Client(2));
        assert!(info.reason.contains("client 1"));
    }

    #[test]
    fn identity_hook_matches_plain_run() {
        let cfg = config(2, 2);
        let plain = run_protocol(&cfg, 4).unwrap();
        let mut hook = |env: &Envelope| Intercept::Deliver(env.clone());
        let hooked = run_with_adversary(&cfg, 4, &mut hook).unwrap();
        assert_eq!(plain, hooked);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(2, 1);
        cfg.leaders = 3;
        assert!(run_protocol(&cfg, 0).is_err());
        let mut cfg = config(2, 1);
        cfg.messages[0] = BigUint::from(1u8) << 64u32;
        assert!(run_protocol(&cfg, 0).is_err());
        let mut cfg = config(2, 1);
        cfg.coefficients.push(vec![BigUint::from(1u8)]);
        assert!(run_protocol(&cfg, 0).is_err());
    }
}
