// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse { line: usize, field: String, message: String },

    #[error("layer `{label}`: no output position fits the window ({detail})")]
    NonIntegralOutput { label: String, detail: String },

    #[error("invalid layer `{label}`: {message}")]
    InvalidLayer { label: String, message: String },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("mapspace is empty: {0}")]
    EmptyMapspace(String),

    #[error("illegal mapping: {0}")]
    IllegalMapping(String),

    #[error("layout grammar error in `{text}`: {message}")]
    Grammar { text: String, message: String },

    #[error("layout `{text}` does not match the tensor: {message}")]
    DimensionMismatch { text: String, message: String },

    #[error("coordinate {coord:?} is outside the tensor extents {extents:?}")]
    OutOfRange { coord: [u64; 4], extents: [u64; 4] },

    #[error("BIRRD width must be a power of two >= 4, got {0}")]
    InvalidWidth(usize),

    #[error("reduction spec is malformed: {0}")]
    InvalidReductionSpec(String),

    #[error("no BIRRD configuration realizes the requested reduction: {0}")]
    Unroutable(String),

    #[error("layout transition {from} -> {to} is illegal under {regime}")]
    RegimeViolation { regime: String, from: String, to: String },

    #[error("cycle {cycle}: {count} oActs target BIRRD port {port} at once")]
    WritePortOverflow { cycle: u64, port: usize, count: usize },

    #[error("functional mismatch at (n={n}, m={m}, p={p}, q={q}): simulated {got}, expected {expected}")]
    Mismatch { n: u64, m: u64, p: u64, q: u64, got: i64, expected: i64 },

    #[error("energy table has no entry for `{0}`")]
    MissingEnergyEntry(String),

    #[error("unknown baseline profile `{0}`")]
    UnknownBaseline(String),

    #[error("layer `{0}` not found")]
    LayerNotFound(String),

    #[error("instance too large for cycle-level simulation: {0}")]
    TooLarge(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
