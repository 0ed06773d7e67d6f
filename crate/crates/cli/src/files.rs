//! On-disk JSON documents. Integers are decimal strings throughout.

use std::path::Path;

use num_bigint::BigUint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use tempora_core::crypto::Commitment;
use tempora_core::tf::{GeneratedPuzzle, PuzzlePublicParams, PuzzleVector, ServerParams, DEFAULT_UNIVERSE_BITS};
use tempora_core::timelock::ClientKeys;
use tempora_core::wire;
use tempora_core::{FieldElement, PrimeField};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// `u64` written as a decimal string, like every other integer in these files.
mod decimal_u64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        let value = tempora_core::wire::parse(&text).map_err(de::Error::custom)?;
        u64::try_from(value).map_err(|_| de::Error::custom(format!("{text} does not fit in 64 bits")))
    }
}

fn default_universe_bits() -> u32 {
    DEFAULT_UNIVERSE_BITS
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(with = "wire::decimal")]
    pub p: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub version: u32,
    pub field: FieldSpec,
    #[serde(with = "wire::decimal_vec")]
    pub xs: Vec<BigUint>,
    pub leaders: usize,
    pub threshold: usize,
    #[serde(default = "default_universe_bits")]
    pub universe_bits: u32,
}

impl ParamsFile {
    pub fn from_params(sp: &ServerParams) -> Self {
        ParamsFile {
            version: FORMAT_VERSION,
            field: FieldSpec { p: sp.field().modulus().clone() },
            xs: sp.xs().iter().map(|x| x.value().clone()).collect(),
            leaders: sp.leaders(),
            threshold: sp.threshold(),
            universe_bits: sp.universe_bits(),
        }
    }

    pub fn to_params(&self) -> Result<ServerParams, CliError> {
        check_version(self.version)?;
        let field = load_field(&self.field)?;
        let xs = canonical(&field, &self.xs, "xs")?;
        Ok(ServerParams::new(field, xs, self.leaders, self.threshold, self.universe_bits)?)
    }
}

/// The two secret RSA primes. Whoever holds this file can skip the delay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysFile {
    pub version: u32,
    #[serde(with = "wire::decimal")]
    pub p1: BigUint,
    #[serde(with = "wire::decimal")]
    pub p2: BigUint,
}

impl KeysFile {
    pub fn from_keys(keys: &ClientKeys) -> Self {
        let (p1, p2) = keys.factors();
        KeysFile { version: FORMAT_VERSION, p1: p1.clone(), p2: p2.clone() }
    }

    pub fn to_keys(&self) -> Result<ClientKeys, CliError> {
        check_version(self.version)?;
        Ok(ClientKeys::from_primes(self.p1.clone(), self.p2.clone())?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuzzleBody {
    #[serde(with = "wire::decimal_vec")]
    pub o: Vec<BigUint>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuzzleParamsBody {
    pub com: Commitment,
    #[serde(rename = "T", with = "decimal_u64")]
    pub squarings: u64,
    #[serde(with = "wire::decimal")]
    pub r: BigUint,
    #[serde(rename = "N", with = "wire::decimal")]
    pub modulus: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuzzleFile {
    pub version: u32,
    pub field: FieldSpec,
    #[serde(with = "wire::decimal_vec")]
    pub xs: Vec<BigUint>,
    #[serde(default = "default_universe_bits")]
    pub universe_bits: u32,
    pub puzzle: PuzzleBody,
    pub pp: PuzzleParamsBody,
}

/// A puzzle file turned back into protocol values.
pub struct LoadedPuzzle {
    pub params: ServerParams,
    pub puzzle: PuzzleVector,
    pub public: PuzzlePublicParams,
}

impl PuzzleFile {
    pub fn new(sp: &ServerParams, generated: &GeneratedPuzzle) -> Self {
        PuzzleFile {
            version: FORMAT_VERSION,
            field: FieldSpec { p: sp.field().modulus().clone() },
            xs: sp.xs().iter().map(|x| x.value().clone()).collect(),
            universe_bits: sp.universe_bits(),
            puzzle: PuzzleBody { o: generated.puzzle.o.iter().map(|v| v.value().clone()).collect() },
            pp: PuzzleParamsBody {
                com: generated.public.com,
                squarings: generated.public.squarings,
                r: generated.public.base.clone(),
                modulus: generated.public.modulus.clone(),
            },
        }
    }

    pub fn load(&self) -> Result<LoadedPuzzle, CliError> {
        check_version(self.version)?;
        let field = load_field(&self.field)?;
        if self.xs.len() < 3 {
            return Err(CliError::Invalid(format!("need at least 3 x-coordinates, got {}", self.xs.len())));
        }
        let xs = canonical(&field, &self.xs, "xs")?;
        let leaders = xs.len() - 2;
        let params = ServerParams::new(field.clone(), xs, leaders, 1, self.universe_bits)?;
        let puzzle = PuzzleVector { o: canonical(&field, &self.puzzle.o, "puzzle.o")? };
        let public = PuzzlePublicParams {
            com: self.pp.com,
            squarings: self.pp.squarings,
            base: self.pp.r.clone(),
            modulus: self.pp.modulus.clone(),
        };
        Ok(LoadedPuzzle { params, puzzle, public })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub version: u32,
    #[serde(with = "wire::decimal")]
    pub m: BigUint,
    #[serde(with = "wire::decimal")]
    pub mk: BigUint,
}

fn check_version(version: u32) -> Result<(), CliError> {
    if version != FORMAT_VERSION {
        return Err(CliError::Invalid(format!("unsupported file version {version}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

fn load_field(spec: &FieldSpec) -> Result<PrimeField, CliError> {
    PrimeField::new(spec.p.clone()).map_err(|e| CliError::Invalid(format!("field.p: {e}")))
}

fn canonical(field: &PrimeField, values: &[BigUint], what: &str) -> Result<Vec<FieldElement>, CliError> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| field.canonical(v.clone()).map_err(|e| CliError::Invalid(format!("{what}[{i}]: {e}"))))
        .collect()
}

/// RFC 6901 pointer for a serde path.
pub fn json_pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for segment in path.iter() {
        out.push('/');
        match segment {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses `text`, reporting failures with the JSON pointer of the offending value.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::Schema {
        origin: origin.to_string(),
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| CliError::Schema { origin: origin.to_string(), pointer: String::new(), message: e.to_string() })?;
    Ok(value)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_json(&text, &path.display().to_string())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(path, to_json(value)).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
