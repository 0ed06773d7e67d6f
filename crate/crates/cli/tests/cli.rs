use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_bigint::BigUint;
use proptest::prelude::*;

use tempora_cli::files::{parse_json, to_json, KeysFile, ParamsFile, PuzzleFile, SolutionFile};
use tempora_cli::CliError;

fn tfusion(args: &[&str], small_field: bool) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tfusion"));
    cmd.args(args);
    if small_field {
        cmd.env("TF_TEST_SMALL_FIELD", "1");
    } else {
        cmd.env_remove("TF_TEST_SMALL_FIELD");
    }
    cmd.output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

struct Lifecycle {
    _dir: tempfile::TempDir,
    puzzle: PathBuf,
    solution: PathBuf,
}

fn lifecycle(message: &str) -> Lifecycle {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    let keys = dir.path().join("keys.json");
    let puzzle = dir.path().join("puzzle.json");
    let solution = dir.path().join("solution.json");
    let steps: [Vec<&str>; 4] = [
        vec!["setup", "--seed", "1", "--out", path(&params)],
        vec!["keygen", "--prime-bits", "64", "--seed", "2", "--out", path(&keys)],
        vec![
            "genpuzzle", "--params", path(&params), "--keys", path(&keys), "--message", message, "--delta", "500",
            "--seed", "3", "--out", path(&puzzle),
        ],
        vec!["solve", "--puzzle", path(&puzzle), "--out", path(&solution)],
    ];
    for step in &steps {
        let out = tfusion(step, false);
        assert_eq!(out.status.code(), Some(0), "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    Lifecycle { _dir: dir, puzzle, solution }
}

#[test]
fn genpuzzle_solve_verify_chain() {
    let run = lifecycle("123456789");
    let solution: SolutionFile = serde_json::from_str(&std::fs::read_to_string(&run.solution).unwrap()).unwrap();
    assert_eq!(solution.m, BigUint::from(123_456_789u32));
    let out = tfusion(&["verify", "--puzzle", path(&run.puzzle), "--solution", path(&run.solution)], false);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "valid");
}

#[test]
fn edited_puzzle_fails_verification() {
    let run = lifecycle("42");
    let mut doc: PuzzleFile = serde_json::from_str(&std::fs::read_to_string(&run.puzzle).unwrap()).unwrap();
    doc.puzzle.o[1] = (&doc.puzzle.o[1] + 1u8) % &doc.field.p;
    std::fs::write(&run.puzzle, to_json(&doc)).unwrap();
    let out = tfusion(&["verify", "--puzzle", path(&run.puzzle), "--solution", path(&run.solution)], false);
    assert_eq!(out.status.code(), Some(1));

    // a wrong message with the right key also fails
    let run = lifecycle("42");
    let mut sol: SolutionFile = serde_json::from_str(&std::fs::read_to_string(&run.solution).unwrap()).unwrap();
    sol.m += 1u8;
    std::fs::write(&run.solution, to_json(&sol)).unwrap();
    let out = tfusion(&["verify", "--puzzle", path(&run.puzzle), "--solution", path(&run.solution)], false);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_input_exits_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    let out = tfusion(&["solve", "--puzzle", path(&broken), "--out", path(&dir.path().join("s.json"))], false);
    assert_eq!(out.status.code(), Some(2));

    let run = lifecycle("7");
    let text = std::fs::read_to_string(&run.puzzle).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["xs"][2] = serde_json::Value::String("12x".into());
    std::fs::write(&run.puzzle, value.to_string()).unwrap();
    let out = tfusion(&["verify", "--puzzle", path(&run.puzzle), "--solution", path(&run.solution)], false);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"/xs/2\""), "{stderr}");
}

#[test]
fn schema_errors_name_the_field() {
    let err = parse_json::<ParamsFile>(r#"{"version":1,"field":{"p":"13"},"xs":[],"leaders":1,"threshold":1,"extra":0}"#, "t")
        .unwrap_err();
    assert!(matches!(err, CliError::Schema { .. }), "{err}");
    let err = parse_json::<ParamsFile>(r#"{"version":1,"field":{"p":13},"xs":[],"leaders":1,"threshold":1}"#, "t").unwrap_err();
    match err {
        CliError::Schema { pointer, .. } => assert_eq!(pointer, "/field/p"),
        other => panic!("{other}"),
    }
}

#[test]
fn small_fields_need_the_test_switch() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("params.json");
    let args = ["setup", "--field-bits", "40", "--universe-bits", "16", "--seed", "5", "--out", path(&out_path)];
    assert_eq!(tfusion(&args, false).status.code(), Some(2));
    assert_eq!(tfusion(&args, true).status.code(), Some(0));
    let params: ParamsFile = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(params.universe_bits, 16);
    assert!(params.field.p.bits() <= 40);
}

#[test]
fn simulate_prints_a_verified_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{
  "clients": 2, "leaders": 1, "threshold": 1, "field_bits": 128, "rsa_prime_bits": 64,
  "messages": ["5", "6"], "squarings": [40, 50], "eval_squarings": 10,
  "coefficients": [["2", "3"]]
}"#,
    )
    .unwrap();
    let out = tfusion(&["simulate", path(&config), "--seed", "9"], false);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: tempora_core::simnet::RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.evaluations[0].res, Some(BigUint::from(28u8)));
    assert!(report.verification.all_valid());

    std::fs::write(&config, r#"{"clients": 2, "bogus": true}"#).unwrap();
    assert_eq!(tfusion(&["simulate", path(&config), "--seed", "9"], false).status.code(), Some(2));
}

#[test]
fn bench_writes_the_prf_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("prf.csv");
    let out = tfusion(&["bench", "--suite", "prf", "--bits", "256", "--out", path(&csv_path)], false);
    assert_eq!(out.status.code(), Some(0));
    let rows = tempora_cli::bench::read_csv(&std::fs::read_to_string(&csv_path).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.parameter).collect::<Vec<_>>(), [2, 4, 16, 64, 256, 1024]);
    assert!(rows.iter().all(|r| r.trials >= 100 && r.field_bits == 256 && r.operation == "prf"));
    assert_eq!(tfusion(&["bench", "--suite", "prf", "--bits", "192"], false).status.code(), Some(2));
}

fn big() -> impl Strategy<Value = BigUint> {
    proptest::collection::vec(any::<u32>(), 0..6).prop_map(BigUint::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn documents_round_trip(p in big(), xs in proptest::collection::vec(big(), 0..5), o in proptest::collection::vec(big(), 0..5),
                            r in big(), n in big(), t in any::<u64>(), com in any::<[u8; 32]>(), m in big(), mk in big()) {
        let params = ParamsFile {
            version: 1,
            field: tempora_cli::files::FieldSpec { p: p.clone() },
            xs: xs.clone(),
            leaders: 2,
            threshold: 1,
            universe_bits: 64,
        };
        prop_assert_eq!(parse_json::<ParamsFile>(&to_json(&params), "t").unwrap(), params);
        let puzzle = PuzzleFile {
            version: 1,
            field: tempora_cli::files::FieldSpec { p: p.clone() },
            xs,
            universe_bits: 64,
            puzzle: tempora_cli::files::PuzzleBody { o },
            pp: tempora_cli::files::PuzzleParamsBody {
                com: tempora_core::crypto::Commitment::from_bytes(com),
                squarings: t,
                r,
                modulus: n,
            },
        };
        prop_assert_eq!(parse_json::<PuzzleFile>(&to_json(&puzzle), "t").unwrap(), puzzle);
        let keys = KeysFile { version: 1, p1: m.clone(), p2: mk.clone() };
        prop_assert_eq!(parse_json::<KeysFile>(&to_json(&keys), "t").unwrap(), keys);
        let sol = SolutionFile { version: 1, m, mk };
        prop_assert_eq!(parse_json::<SolutionFile>(&to_json(&sol), "t").unwrap(), sol);
    }
}
