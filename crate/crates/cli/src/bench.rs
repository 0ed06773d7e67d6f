//! Timing harness for root finding and PRF calls over the reference grids.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use tempora_core::crypto::{prf_index, PrfKey};
use tempora_core::poly::find_roots;
use tempora_core::{DensePoly, PrimeField};

use crate::CliError;

pub const FACTORIZATION_DEGREES: [usize; 5] = [2, 4, 6, 8, 10];
pub const PRF_COUNTS: [usize; 6] = [2, 4, 16, 64, 256, 1024];
pub const FIELD_BITS: [u64; 2] = [128, 256];
pub const MIN_TRIALS: usize = 100;
const WARMUP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Factorization,
    Prf,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Factorization => "factorization",
            Suite::Prf => "prf",
        }
    }

    pub fn grid(self) -> &'static [usize] {
        match self {
            Suite::Factorization => &FACTORIZATION_DEGREES,
            Suite::Prf => &PRF_COUNTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub operation: String,
    pub parameter: usize,
    pub field_bits: u64,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub trials: usize,
}

/// Mean and sample standard deviation, in milliseconds.
fn summarize(samples_ns: &[u128]) -> (f64, f64) {
    let ms: Vec<f64> = samples_ns.iter().map(|&ns| ns as f64 / 1e6).collect();
    let n = ms.len() as f64;
    let mean = ms.iter().sum::<f64>() / n;
    let var = if ms.len() > 1 { ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn factorization_samples(field: &PrimeField, degree: usize, trials: usize, rng: &mut ChaCha20Rng) -> Vec<u128> {
    let mut samples = Vec::with_capacity(trials);
    for trial in 0..WARMUP + trials {
        // a product of random linear factors, like the combined polynomial
        let roots: Vec<_> = (0..degree).map(|_| field.random_nonzero(rng)).collect();
        let poly = DensePoly::from_roots(field, &roots);
        let start = Instant::now();
        let found = find_roots(black_box(&poly), rng).expect("split polynomial factors");
        let elapsed = start.elapsed().as_nanos();
        assert!(found.len() <= degree);
        if trial >= WARMUP {
            samples.push(elapsed);
        }
    }
    samples
}

fn prf_samples(field: &PrimeField, count: usize, trials: usize, rng: &mut ChaCha20Rng) -> Vec<u128> {
    let mut samples = Vec::with_capacity(trials);
    for trial in 0..WARMUP + trials {
        let key = PrfKey::random(rng);
        let start = Instant::now();
        for i in 1..=count as u64 {
            black_box(prf_index(i, black_box(&key), field));
        }
        let elapsed = start.elapsed().as_nanos();
        if trial >= WARMUP {
            samples.push(elapsed);
        }
    }
    samples
}

/// Runs one suite at one field size on the calling thread.
pub fn run_suite(suite: Suite, bits: u64, trials: usize, seed: u64) -> Result<Vec<BenchRow>, CliError> {
    if trials < MIN_TRIALS {
        return Err(CliError::Invalid(format!("at least {MIN_TRIALS} trials per row, got {trials}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ bits);
    let field = PrimeField::generate(&mut rng, bits).map_err(|e| CliError::Invalid(e.to_string()))?;
    let rows = suite
        .grid()
        .iter()
        .map(|&parameter| {
            let samples = match suite {
                Suite::Factorization => factorization_samples(&field, parameter, trials, &mut rng),
                Suite::Prf => prf_samples(&field, parameter, trials, &mut rng),
            };
            let (mean_ms, stddev_ms) = summarize(&samples);
            BenchRow { operation: suite.name().to_string(), parameter, field_bits: bits, mean_ms, stddev_ms, trials }
        })
        .collect();
    Ok(rows)
}

pub fn write_csv(rows: &[BenchRow], out: &mut impl std::io::Write) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::Invalid(e.to_string()))
}

pub fn write_csv_file(rows: &[BenchRow], path: &Path) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    write_csv(rows, &mut file)
}

pub fn read_csv(text: &str) -> Result<Vec<BenchRow>, CliError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_hand_computation() {
        let (mean, sd) = summarize(&[1_000_000, 2_000_000, 3_000_000]);
        assert!((mean - 2.0).abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_and_csv_round_trip() {
        let rows = run_suite(Suite::Prf, 128, MIN_TRIALS, 1).unwrap();
        assert_eq!(rows.iter().map(|r| r.parameter).collect::<Vec<_>>(), PRF_COUNTS);
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("operation,parameter,field_bits,mean_ms,stddev_ms,trials\n"));
        assert_eq!(read_csv(&text).unwrap(), rows);
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(run_suite(Suite::Factorization, 128, 10, 0).is_err());
    }
}
