//! The single-client multi-instance variant: one client locks `z` messages
//! that open one after another, and can still ask for a verifiable linear
//! combination of all of them before the first one opens.
//!
//! Puzzle `j > 1` squares the base `r_j = PRF(j || 0, mk_{j-1})`, so its
//! squaring chain cannot start until puzzle `j - 1` is solved. Every puzzle
//! uses the same three x-coordinates; with a single root the combined
//! polynomial has degree two.

use std::ops::ControlFlow;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{commit, encode_ints, prf_index, prf_mod, verify_commit, Commitment, PrfKey};
use crate::field::{FieldElement, FieldError};
use crate::ole::{ole_plus_session, Honest, OleReceiverInput, OleSenderInput};
use crate::tf::{
    blind_coordinates, open_single, server_aggregate, server_params_problem, solve_combination,
    verify, BlindingKeys, ClientPolicy, EvalPublicParams, EvalPuzzle, EvalRecord, Proof,
    PuzzleVector, ServerParams, TfError, VerifyContext, MAX_REGENERATIONS,
};
use crate::timelock::{random_base, sequential_power_with, trapdoor_power, ClientKeys, PROGRESS_EVERY};

/// Shape of a chain: the shared x-grid and each puzzle's own squaring count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainParams {
    server: ServerParams,
    squarings: Vec<u64>,
}

impl ChainParams {
    /// `server` must carry exactly three x-coordinates (one leader).
    pub fn new(server: ServerParams, squarings: Vec<u64>) -> Result<Self, TfError> {
        if squarings.is_empty() || server.t_bar() != 3 || server.xs().len() != 3 {
            return Err(TfError::BadChainShape);
        }
        Ok(ChainParams { server, squarings })
    }

    /// Squaring counts `max_ss * (time_j - time_{j-1})` from strictly
    /// increasing release times, measured from `time_0 = 0`.
    pub fn from_schedule(server: ServerParams, max_ss: u64, times: &[u64]) -> Result<Self, TfError> {
        let mut prev = 0;
        let mut squarings = Vec::with_capacity(times.len());
        for &t in times {
            if t <= prev {
                return Err(TfError::BadChainShape);
            }
            squarings.push(max_ss.saturating_mul(t - prev));
            prev = t;
        }
        Self::new(server, squarings)
    }

    pub fn server(&self) -> &ServerParams {
        &self.server
    }

    pub fn squarings(&self) -> &[u64] {
        &self.squarings
    }

    /// Number of chained puzzles.
    pub fn len(&self) -> usize {
        self.squarings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squarings.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainPublicParams {
    pub coms: Vec<Commitment>,
    pub r1: BigUint,
    pub modulus: BigUint,
}

/// The client's view of its own chain.
#[derive(Clone, Debug)]
pub struct ChainSecret {
    pub mks: Vec<BigUint>,
    pub bases: Vec<BigUint>,
    pub keys: Vec<BlindingKeys>,
}

#[derive(Clone, Debug)]
pub struct GeneratedChain {
    pub puzzles: Vec<PuzzleVector>,
    pub public: ChainPublicParams,
    pub secret: ChainSecret,
}

/// `r_j = PRF(j || 0, mk_{j-1}) mod N`, for 1-based `j >= 2`.
pub fn chain_base(j: usize, mk_prev: &BigUint, modulus: &BigUint) -> BigUint {
    let input = encode_ints([&BigUint::from(j), &BigUint::from(0u8)]);
    prf_mod(&input, &PrfKey::from_integer(mk_prev), modulus)
}

pub fn mi_gen_puzzles<R: Rng + ?Sized>(
    ms: &[FieldElement],
    keys: &ClientKeys,
    cp: &ChainParams,
    policy: &ClientPolicy,
    rng: &mut R,
) -> Result<GeneratedChain, TfError> {
    let sp = cp.server();
    if ms.len() != cp.len() {
        return Err(TfError::LengthMismatch { expected: cp.len(), got: ms.len() });
    }
    if let Some(problem) = server_params_problem(sp, policy.min_field_bits) {
        return Err(TfError::ParamsRejected(problem));
    }
    for m in ms {
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
    }
    'attempt: for _ in 0..MAX_REGENERATIONS {
        let r1 = random_base(rng, keys.modulus());
        let mut base = r1.clone();
        let mut secret = ChainSecret { mks: Vec::new(), bases: Vec::new(), keys: Vec::new() };
        let mut puzzles = Vec::with_capacity(cp.len());
        let mut coms = Vec::with_capacity(cp.len());
        for (j, (m, &t)) in ms.iter().zip(cp.squarings()).enumerate() {
            if j > 0 {
                base = chain_base(j + 1, secret.mks.last().expect("previous key"), keys.modulus());
                if base.is_zero() {
                    continue 'attempt;
                }
            }
            let mk = trapdoor_power(&base, t, keys)?;
            let blinding = BlindingKeys::from_master(&mk);
            let (z, w) = blinding.factors(3, sp.field());
            let pi: Vec<_> = sp.xs().iter().map(|x| x + m).collect();
            let o = blind_coordinates(&pi, &z, &w);
            if w.iter().chain(&o).any(FieldElement::is_zero) {
                continue 'attempt;
            }
            coms.push(commit(m, &mk));
            puzzles.push(PuzzleVector { o });
            secret.bases.push(base.clone());
            secret.mks.push(mk);
            secret.keys.push(blinding);
        }
        let public = ChainPublicParams { coms, r1, modulus: keys.modulus().clone() };
        return Ok(GeneratedChain { puzzles, public, secret });
    }
    Err(TfError::RegenerationLimit)
}

/// One solved link: `message` is `None` when the puzzle failed to unblind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainEntry {
    pub message: Option<FieldElement>,
    pub mk: BigUint,
    pub base: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainSolution {
    pub entries: Vec<ChainEntry>,
    /// Squarings actually performed, as reported by the progress callbacks.
    pub squarings: u64,
}

impl ChainSolution {
    /// All messages in order, or the first (1-based) index that failed.
    pub fn messages(&self) -> Result<Vec<FieldElement>, TfError> {
        self.entries
            .iter()
            .enumerate()
            .map(|(j, e)| e.message.clone().ok_or(TfError::ChainTamper(j + 1)))
            .collect()
    }
}

/// Solves the chain in order. A puzzle that fails to unblind does not stop
/// the chain, since its master key is still correct.
pub fn mi_solve_chain(
    puzzles: &[PuzzleVector],
    pp: &ChainPublicParams,
    cp: &ChainParams,
) -> Result<ChainSolution, TfError> {
    if puzzles.len() != cp.len() {
        return Err(TfError::LengthMismatch { expected: cp.len(), got: puzzles.len() });
    }
    let mut entries: Vec<ChainEntry> = Vec::with_capacity(cp.len());
    let mut total = 0u64;
    for (j, (puzzle, &t)) in puzzles.iter().zip(cp.squarings()).enumerate() {
        let base = match entries.last() {
            None => pp.r1.clone(),
            Some(prev) => chain_base(j + 1, &prev.mk, &pp.modulus),
        };
        let mut done = 0;
        let mk = sequential_power_with(&base, t, &pp.modulus, PROGRESS_EVERY, |d| {
            done = d;
            ControlFlow::Continue(())
        })?;
        total += done;
        let message = match open_single(puzzle, &mk, cp.server()) {
            Ok(m) => Some(m),
            Err(TfError::TamperSuspected) => None,
            Err(e) => return Err(e),
        };
        entries.push(ChainEntry { message, mk, base });
    }
    Ok(ChainSolution { entries, squarings: total })
}

/// Output of the client-run evaluation.
#[derive(Clone, Debug)]
pub struct MiEvaluation {
    pub g: EvalPuzzle,
    pub epp: EvalPublicParams,
    pub root: FieldElement,
    /// `y_{i,j}`, indexed `[j][i]`.
    pub masks: Vec<Vec<FieldElement>>,
}

/// Locks a combination with coefficients `q` over the whole chain. The
/// evaluation delay must be shorter than the first puzzle's.
pub fn mi_evaluate<R: Rng + ?Sized>(
    chain: &GeneratedChain,
    keys: &ClientKeys,
    cp: &ChainParams,
    q: &[FieldElement],
    eval_squarings: u64,
    rng: &mut R,
) -> Result<MiEvaluation, TfError> {
    let sp = cp.server();
    let field = sp.field();
    let z = cp.len();
    if q.len() != z || chain.puzzles.len() != z || chain.secret.keys.len() != z {
        return Err(TfError::LengthMismatch { expected: z, got: q.len() });
    }
    if eval_squarings >= cp.squarings()[0] {
        return Err(TfError::EvalDelayTooLong);
    }
    for qj in q {
        if !sp.in_universe(qj) {
            return Err(TfError::OutsideUniverse(qj.value().clone()));
        }
    }
    let (h, tk, eval_keys, w_prime) = loop {
        let h = random_base(rng, keys.modulus());
        let tk = trapdoor_power(&h, eval_squarings, keys)?;
        let eval_keys = BlindingKeys::from_master(&tk);
        let (_, w_prime) = eval_keys.factors(3, field);
        if !w_prime.iter().any(FieldElement::is_zero) {
            break (h, tk, eval_keys, w_prime);
        }
    };
    let root = field.random_nonzero(rng);
    let f_keys: Vec<_> = (1..z).map(|_| PrfKey::random(rng)).collect();

    let mut server_rng = ChaCha20Rng::from_rng(&mut *rng).expect("seeding from an RNG");
    let mut contributions = Vec::with_capacity(z);
    let mut masks = Vec::with_capacity(z);
    for j in 0..z {
        let (zj, wj) = chain.secret.keys[j].factors(3, field);
        let mut inputs = Vec::with_capacity(3);
        let mut ys = Vec::with_capacity(3);
        for i in 0..3 {
            let idx = (i + 1) as u64;
            let y = if j == 0 {
                f_keys.iter().fold(field.zero(), |acc, f| acc - prf_index(idx, f, field))
            } else {
                prf_index(idx, &f_keys[j - 1], field)
            };
            let gamma = &sp.xs()[i] - &root;
            let scale = &gamma * &q[j] * &w_prime[i];
            let e = &scale * &wj[i].inv()?;
            let mut e_prime = &y - &(&scale * &zj[i]);
            // the evaluation layer's additive mask enters exactly once per coordinate
            if j == 0 {
                e_prime = e_prime + eval_keys.additive(i + 1, field);
            }
            inputs.push(OleSenderInput::new(e, e_prime)?);
            ys.push(y);
        }
        let d = chain.puzzles[j]
            .o
            .iter()
            .zip(&inputs)
            .enumerate()
            .map(|(i, (o, input))| {
                let session = (j * 3 + i) as u64;
                let receiver = OleReceiverInput::new(o.clone());
                ole_plus_session(session, input, &receiver, rng, &mut server_rng, &mut Honest).map(|r| r.output)
            })
            .collect::<Result<Vec<_>, _>>()?;
        contributions.push(d);
        masks.push(ys);
    }
    let g = server_aggregate(&contributions, sp)?;
    let record = EvalRecord {
        h,
        com_root: commit(&root, &tk),
        modulus: keys.modulus().clone(),
        squarings: eval_squarings,
    };
    Ok(MiEvaluation { g, epp: EvalPublicParams { records: vec![record] }, root, masks })
}

/// Same procedure as the multi-client solver with a single root.
pub fn mi_solve_combination(
    g: &EvalPuzzle,
    epp: &EvalPublicParams,
    cp: &ChainParams,
) -> Result<(FieldElement, Proof), TfError> {
    if epp.records.len() != 1 {
        return Err(TfError::LengthMismatch { expected: 1, got: epp.records.len() });
    }
    solve_combination(g, epp, cp.server())
}

/// Context for [`mi_verify`].
pub enum ChainVerifyContext<'a> {
    /// Puzzle `index` (1-based) of the chain.
    Puzzle { pp: &'a ChainPublicParams, index: usize },
    Combination { g: &'a EvalPuzzle, epp: &'a EvalPublicParams },
}

pub fn mi_verify(m: &FieldElement, proof: &Proof, ctx: ChainVerifyContext<'_>, cp: &ChainParams) -> bool {
    match (proof, ctx) {
        (Proof::SinglePuzzle { mk }, ChainVerifyContext::Puzzle { pp, index }) => index
            .checked_sub(1)
            .and_then(|j| pp.coms.get(j))
            .is_some_and(|com| verify_commit(com, m, mk)),
        (Proof::Combination { .. }, ChainVerifyContext::Combination { g, epp }) => {
            epp.records.len() == 1 && verify(m, proof, VerifyContext::EvalPuzzle { g, epp }, cp.server())
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tf::{recover_theta, solve_eval_keys};

    fn setup(seed: u64, squarings: Vec<u64>) -> (ChainParams, ClientKeys, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let server = ServerParams::setup(&mut rng, 128, 1, 1).unwrap();
        let keys = ClientKeys::generate(&mut rng, 64).unwrap();
        (ChainParams::new(server, squarings).unwrap(), keys, rng)
    }

    fn elems(cp: &ChainParams, v: &[u64]) -> Vec<FieldElement> {
        v.iter().map(|&x| cp.server().field().element(x)).collect()
    }

    #[test]
    fn schedule_to_squarings() {
        let (cp, _, _) = setup(1, vec![1]);
        let sched = ChainParams::from_schedule(cp.server().clone(), 10, &[3, 5, 9]).unwrap();
        assert_eq!(sched.squarings(), &[30, 20, 40]);
        assert!(ChainParams::from_schedule(cp.server().clone(), 10, &[3, 3]).is_err());
        assert!(ChainParams::new(cp.server().clone(), vec![]).is_err());
    }

    #[test]
    fn chain_round_trip() {
        let (cp, keys, mut rng) = setup(2, vec![30, 20, 10]);
        let ms = elems(&cp, &[7, 8, 9]);
        let chain = mi_gen_puzzles(&ms, &keys, &cp, &ClientPolicy::default(), &mut rng).unwrap();
        let sol = mi_solve_chain(&chain.puzzles, &chain.public, &cp).unwrap();
        assert_eq!(sol.messages().unwrap(), ms);
        assert_eq!(sol.squarings, 60);
        for (j, e) in sol.entries.iter().enumerate() {
            assert_eq!(e.base, chain.secret.bases[j]);
            assert_eq!(e.mk, chain.secret.mks[j]);
            let proof = Proof::SinglePuzzle { mk: e.mk.clone() };
            let ctx = ChainVerifyContext::Puzzle { pp: &chain.public, index: j + 1 };
            assert!(mi_verify(&ms[j], &proof, ctx, &cp));
        }
    }

    #[test]
    fn tampering_one_link_spares_the_others() {
        let (cp, keys, mut rng) = setup(3, vec![10, 10, 10]);
        let ms = elems(&cp, &[1, 2, 3]);
        let mut chain = mi_gen_puzzles(&ms, &keys, &cp, &ClientPolicy::default(), &mut rng).unwrap();
        chain.puzzles[1].o[0] = &chain.puzzles[1].o[0] + &cp.server().field().one();
        let sol = mi_solve_chain(&chain.puzzles, &chain.public, &cp).unwrap();
        assert_eq!(sol.entries[0].message.as_ref(), Some(&ms[0]));
        assert_eq!(sol.entries[1].message, None);
        assert_eq!(sol.entries[2].message.as_ref(), Some(&ms[2]));
        assert_eq!(sol.messages(), Err(TfError::ChainTamper(2)));
    }

    #[test]
    fn combination_over_two_links() {
        let (cp, keys, mut rng) = setup(4, vec![40, 10]);
        let ms = elems(&cp, &[3, 4]);
        let chain = mi_gen_puzzles(&ms, &keys, &cp, &ClientPolicy::default(), &mut rng).unwrap();
        let q = elems(&cp, &[1, 2]);
        let ev = mi_evaluate(&chain, &keys, &cp, &q, 20, &mut rng).unwrap();
        assert_eq!(ev.g.g.len(), 3);
        for i in 0..3 {
            let sum = ev.masks.iter().fold(cp.server().field().zero(), |acc, m| acc + &m[i]);
            assert!(sum.is_zero());
        }
        let (res, proof) = mi_solve_combination(&ev.g, &ev.epp, &cp).unwrap();
        assert_eq!(res, cp.server().field().element(11u8));
        let ctx = ChainVerifyContext::Combination { g: &ev.g, epp: &ev.epp };
        assert!(mi_verify(&res, &proof, ctx, &cp));
        let tks = solve_eval_keys(&ev.epp).unwrap();
        assert_eq!(recover_theta(&ev.g, &tks, cp.server()).unwrap().degree(), Some(2));
        assert_eq!(mi_evaluate(&chain, &keys, &cp, &q, 40, &mut rng).unwrap_err(), TfError::EvalDelayTooLong);
    }
}
