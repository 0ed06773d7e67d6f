use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use tempora_core::simnet::{run_protocol, SimConfig};
use tempora_core::tf::{
    gen_puzzle, open_single, solve_single, verify_client, ClientPolicy, Proof, ServerParams, DEFAULT_MIN_FIELD_BITS,
    DEFAULT_UNIVERSE_BITS,
};
use tempora_core::timelock::ClientKeys;
use tempora_core::wire;

use crate::bench::{self, BenchRow, Suite};
use crate::files::{read_json, write_json, KeysFile, ParamsFile, PuzzleFile, SolutionFile, FORMAT_VERSION};
use crate::{small_field_enabled, CliError, Outcome, SMALL_FIELD_ENV};

/// Picks the RNG seed, drawing and logging one when none was given.
pub fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let drawn = rand::random();
        eprintln!("no --seed given, using seed {drawn}");
        drawn
    })
}

fn rng_for(seed: Option<u64>) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(resolve_seed(seed))
}

fn require_small_field(what: &str) -> Result<(), CliError> {
    if small_field_enabled() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{what} needs {SMALL_FIELD_ENV}=1 (test fixtures only)")))
    }
}

fn client_policy() -> ClientPolicy {
    let min_field_bits = if small_field_enabled() { 0 } else { DEFAULT_MIN_FIELD_BITS };
    ClientPolicy { min_field_bits }
}

#[derive(Clone, Debug)]
pub struct SetupArgs {
    pub field_bits: u64,
    pub leaders: usize,
    pub threshold: usize,
    pub universe_bits: Option<u32>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_setup(args: &SetupArgs) -> Result<Outcome, CliError> {
    if args.field_bits < DEFAULT_MIN_FIELD_BITS {
        require_small_field(&format!("a {}-bit field", args.field_bits))?;
    }
    let universe_bits = match args.universe_bits {
        Some(bits) if bits != DEFAULT_UNIVERSE_BITS => {
            require_small_field("--universe-bits")?;
            bits
        }
        _ => DEFAULT_UNIVERSE_BITS,
    };
    let mut rng = rng_for(args.seed);
    let sp = ServerParams::setup_with_universe(&mut rng, args.field_bits, args.leaders, args.threshold, universe_bits)?;
    write_json(&args.out, &ParamsFile::from_params(&sp))?;
    Ok(Outcome::Success)
}

#[derive(Clone, Debug)]
pub struct KeygenArgs {
    pub prime_bits: u64,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_keygen(args: &KeygenArgs) -> Result<Outcome, CliError> {
    let keys = ClientKeys::generate(&mut rng_for(args.seed), args.prime_bits)?;
    write_json(&args.out, &KeysFile::from_keys(&keys))?;
    Ok(Outcome::Success)
}

#[derive(Clone, Debug)]
pub struct GenPuzzleArgs {
    pub params: PathBuf,
    pub keys: PathBuf,
    /// Decimal message.
    pub message: String,
    /// Squaring count.
    pub delta: u64,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_genpuzzle(args: &GenPuzzleArgs) -> Result<Outcome, CliError> {
    let sp = read_json::<ParamsFile>(&args.params)?.to_params()?;
    let keys = read_json::<KeysFile>(&args.keys)?.to_keys()?;
    let m = wire::parse(&args.message).map_err(|e| CliError::Invalid(format!("--message: {e}")))?;
    let m = sp.field().canonical(m).map_err(|e| CliError::Invalid(format!("--message: {e}")))?;
    let generated = gen_puzzle(&m, &keys, &sp, args.delta, &client_policy(), &mut rng_for(args.seed))?;
    write_json(&args.out, &PuzzleFile::new(&sp, &generated))?;
    Ok(Outcome::Success)
}

pub fn cmd_solve(puzzle: &Path, out: &Path) -> Result<Outcome, CliError> {
    let loaded = read_json::<PuzzleFile>(puzzle)?.load()?;
    let (m, proof) = solve_single(&loaded.puzzle, &loaded.public, &loaded.params)?;
    let Proof::SinglePuzzle { mk } = proof else {
        return Err(CliError::Invalid("solver returned a combination proof".into()));
    };
    write_json(out, &SolutionFile { version: FORMAT_VERSION, m: m.into_value(), mk })?;
    Ok(Outcome::Success)
}

/// Checks the commitment opening, and that the claimed key really unlocks
/// this puzzle to the claimed message.
pub fn cmd_verify(puzzle: &Path, solution: &Path) -> Result<Outcome, CliError> {
    let loaded = read_json::<PuzzleFile>(puzzle)?.load()?;
    let solution: SolutionFile = read_json(solution)?;
    if solution.version != FORMAT_VERSION {
        return Err(CliError::Invalid(format!("unsupported solution version {}", solution.version)));
    }
    let Ok(m) = loaded.params.field().canonical(solution.m.clone()) else {
        return Ok(Outcome::VerificationFailed);
    };
    let opens = verify_client(&m, &solution.mk, &loaded.public);
    let consistent = open_single(&loaded.puzzle, &solution.mk, &loaded.params).is_ok_and(|opened| opened == m);
    Ok(if opens && consistent { Outcome::Success } else { Outcome::VerificationFailed })
}

/// Runs the simulation and returns the report as JSON text.
pub fn cmd_simulate(config: &Path, seed: Option<u64>) -> Result<String, CliError> {
    let config: SimConfig = read_json(config)?;
    if config.min_field_bits < DEFAULT_MIN_FIELD_BITS || config.field_bits < DEFAULT_MIN_FIELD_BITS {
        require_small_field("a field below 128 bits")?;
    }
    let report = run_protocol(&config, resolve_seed(seed))?;
    Ok(crate::files::to_json(&report))
}

pub fn cmd_bench(suite: Suite, bits: u64, trials: usize, seed: u64, out: Option<&Path>) -> Result<Vec<BenchRow>, CliError> {
    let rows = bench::run_suite(suite, bits, trials, seed)?;
    match out {
        Some(path) => bench::write_csv_file(&rows, path)?,
        None => bench::write_csv(&rows, &mut std::io::stdout().lock())?,
    }
    Ok(rows)
}
