use std::fmt;

use thiserror::Error;

/// Memory tier a LUT (or data tile) is placed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Bank,
    Buffer,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tier::Bank => f.write_str("DRAM bank"),
            Tier::Buffer => f.write_str("local buffer"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("code {code} does not fit in {bitwidth} bits")]
    CodeOutOfRange { code: u32, bitwidth: u8 },
    #[error("packing {p} x {bitwidth}-bit codes needs more than 64 bits")]
    PackTooWide { p: usize, bitwidth: u8 },
    #[error("unsupported bitwidth {0} (expected 1..=8)")]
    InvalidBitwidth(u8),
    #[error("invalid code table: {0}")]
    InvalidCodeTable(String),
    #[error("input is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("codes are not sorted in non-decreasing order")]
    NotSorted,
    #[error("rank {rank} out of range (limit {limit})")]
    RankOutOfRange { rank: u64, limit: u64 },
    #[error("scale must be finite and positive")]
    InvalidScale,
    #[error("LUT entry value {value} does not fit in {bytes} signed bytes")]
    EntryOverflow { value: i64, bytes: u8 },
    #[error("unsupported entry width {0} bytes (expected 1, 2 or 4)")]
    InvalidEntryWidth(u8),
    #[error("packing degree {p} too large for a reordering LUT (max 8)")]
    PTooLarge { p: usize },
    #[error("table with {entries} entries exceeds the in-memory build limit")]
    TableTooLarge { entries: u128 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{tier} capacity exceeded: need {required} bytes, budget is {budget} bytes")]
    CapacityExceeded { tier: Tier, required: u128, budget: u128 },
    #[error("infeasible packing degree: {0}")]
    InfeasibleP(String),
    #[error("activation table has no exact-zero code, needed to pad K={k} to a multiple of p={p}")]
    NoZeroCode { k: usize, p: usize },
    #[error("accumulator overflow at output ({row}, {col})")]
    AccumulatorOverflow { row: usize, col: usize },
    #[error("degenerate tile: {0}")]
    DegenerateTile(String),
    #[error("invalid device configuration: {0}")]
    InvalidConfig(String),
    #[error("bad magic bytes in LUT file")]
    BadMagic,
    #[error("unsupported LUT file version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("LUT entry checksum mismatch or truncated payload")]
    ChecksumMismatch,
    #[error("malformed LUT file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
