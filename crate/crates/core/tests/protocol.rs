use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use tempora_core::mitf::{
    chain_base, mi_evaluate, mi_gen_puzzles, mi_solve_chain, mi_solve_combination, mi_verify, ChainParams,
    ChainVerifyContext,
};
use tempora_core::simnet::{
    expected_result, replay_verification, run_protocol, run_white_box, IdentityHook, Schedule, SimConfig,
};
use tempora_core::tf::{ClientPolicy, ServerParams};
use tempora_core::timelock::{sequential_power, ClientKeys};

fn sim_config(messages: &[u64], coefficients: &[&[u64]], leaders: usize) -> SimConfig {
    SimConfig {
        clients: messages.len(),
        leaders,
        threshold: 1,
        field_bits: 128,
        universe_bits: 64,
        min_field_bits: 128,
        rsa_prime_bits: 64,
        messages: messages.iter().map(|&m| BigUint::from(m)).collect(),
        squarings: vec![30; messages.len()],
        eval_squarings: 10,
        coefficients: coefficients.iter().map(|q| q.iter().map(|&c| BigUint::from(c)).collect()).collect(),
        schedule: Schedule::Sequential,
    }
}

fn chain_setup(seed: u64, squarings: Vec<u64>) -> (ChainParams, ClientKeys, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let server = ServerParams::setup(&mut rng, 128, 1, 1).unwrap();
    let keys = ClientKeys::generate(&mut rng, 64).unwrap();
    (ChainParams::new(server, squarings).unwrap(), keys, rng)
}

#[test]
fn chain_base_needs_the_previous_master_key() {
    let (cp, keys, mut rng) = chain_setup(21, vec![12, 9, 15, 7]);
    let field = cp.server().field().clone();
    let ms: Vec<_> = [5u64, 6, 7, 8].iter().map(|&m| field.element(BigUint::from(m))).collect();
    let chain = mi_gen_puzzles(&ms, &keys, &cp, &ClientPolicy::default(), &mut rng).unwrap();
    let n = &chain.public.modulus;
    for j in 1..cp.len() {
        let honest = chain_base(j + 1, &chain.secret.mks[j - 1], n);
        assert_eq!(honest, chain.secret.bases[j]);
        // skipping a link, or guessing its key, gives a different base
        let from_first_base = chain_base(j + 1, &chain.public.r1, n);
        let off_by_one = chain_base(j + 1, &(&chain.secret.mks[j - 1] + 1u8), n);
        assert_ne!(from_first_base, chain.secret.bases[j]);
        assert_ne!(off_by_one, chain.secret.bases[j]);
    }
    // the first key really is the base squared the advertised number of times
    assert_eq!(sequential_power(&chain.public.r1, 12, n).unwrap(), chain.secret.mks[0]);
}

#[test]
fn single_link_chain_agrees_with_single_client_protocol() {
    let m = 987_654_321u64;
    let sim = run_protocol(&sim_config(&[m], &[&[1]], 1), 8).unwrap();
    assert!(sim.verification.all_valid());
    assert_eq!(sim.evaluations[0].res, Some(BigUint::from(m)));

    let (cp, keys, mut rng) = chain_setup(8, vec![30]);
    let field = cp.server().field().clone();
    let ms = vec![field.element(BigUint::from(m))];
    let chain = mi_gen_puzzles(&ms, &keys, &cp, &ClientPolicy::default(), &mut rng).unwrap();
    let q = vec![field.one()];
    let eval = mi_evaluate(&chain, &keys, &cp, &q, 10, &mut rng).unwrap();
    let (res, proof) = mi_solve_combination(&eval.g, &eval.epp, &cp).unwrap();
    assert_eq!(res.value(), &BigUint::from(m));
    assert!(mi_verify(&res, &proof, ChainVerifyContext::Combination { g: &eval.g, epp: &eval.epp }, &cp));
}

#[test]
fn combination_can_be_solved_before_or_after_the_chain() {
    let (cp, keys, mut rng) = chain_setup(33, vec![25, 25]);
    let field = cp.server().field().clone();
    let ms: Vec<_> = [40u64, 2].iter().map(|&m| field.element(BigUint::from(m))).collect();
    let q: Vec<_> = [3u64, 5].iter().map(|&c| field.element(BigUint::from(c))).collect();
    let chain = mi_gen_puzzles(&ms, &keys, &cp, &ClientPolicy::default(), &mut rng).unwrap();
    let eval = mi_evaluate(&chain, &keys, &cp, &q, 5, &mut rng).unwrap();

    let first = mi_solve_combination(&eval.g, &eval.epp, &cp).unwrap();
    let solution = mi_solve_chain(&chain.puzzles, &chain.public, &cp).unwrap();
    let second = mi_solve_combination(&eval.g, &eval.epp, &cp).unwrap();
    assert_eq!(first.0, second.0);
    assert_eq!(first.0.value(), &BigUint::from(130u8));
    assert_eq!(solution.messages().unwrap(), ms);
}

#[test]
fn two_evaluations_over_the_same_puzzles() {
    let cfg = sim_config(&[11, 22, 33], &[&[1, 2, 3], &[7, 0, 5]], 2);
    let report = run_protocol(&cfg, 99).unwrap();
    assert_eq!(report.abort, None);
    let p = &report.field.as_ref().unwrap().p;
    assert_eq!(report.evaluations[0].res, Some(BigUint::from(11u32 + 44 + 99)));
    assert_eq!(report.evaluations[1].res, Some(BigUint::from(77u32 + 165)));
    for e in 0..2 {
        assert_eq!(report.evaluations[e].res.as_ref(), Some(&expected_result(&cfg, e, p)));
    }
    assert!(report.verification.all_valid());
}

#[test]
fn replayed_transcript_reproduces_verdicts() {
    let cfg = sim_config(&[1, 2, 3, 4], &[&[4, 3, 2, 1]], 3);
    let report = run_protocol(&cfg, 1234).unwrap();
    let lines = report.transcript_jsonl();
    let parsed: Vec<_> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, report.transcript);
    assert_eq!(replay_verification(&parsed), report.verification);
    assert!(report.verification.all_valid());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulated_result_matches_plain_sum(
        seed in any::<u64>(),
        n in 1usize..=4,
        leaders_pick in 0usize..4,
        threaded in any::<bool>(),
        ms in proptest::collection::vec(any::<u64>(), 4),
        qs in proptest::collection::vec(any::<u64>(), 4),
    ) {
        let leaders = leaders_pick % n + 1;
        let mut cfg = sim_config(&ms[..n], &[&qs[..n]], leaders);
        if threaded {
            cfg.schedule = Schedule::Threaded;
        }
        let (report, white) = run_white_box(&cfg, seed, &mut IdentityHook).unwrap();
        prop_assert_eq!(&report.abort, &None);
        let p = report.field.as_ref().unwrap().p.clone();
        let oracle = ms[..n].iter().zip(&qs[..n]).fold(BigUint::from(0u8), |acc, (m, q)| {
            (acc + BigUint::from(*m) * BigUint::from(*q)) % &p
        });
        prop_assert_eq!(report.evaluations[0].res.clone(), Some(oracle));
        prop_assert!(report.verification.all_valid());
        for (s, m) in report.solutions.iter().zip(&ms) {
            prop_assert_eq!(s.m.clone(), Some(BigUint::from(*m)));
        }
        let sp = white.server_params.unwrap();
        for i in 0..sp.t_bar() {
            let sum = white.masks[0].iter().fold(sp.field().zero(), |acc, y| acc + &y[i]);
            prop_assert!(sum.is_zero());
        }
    }
}
