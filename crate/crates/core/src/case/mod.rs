//! MATPOWER-style case file handling: parse, validate, build, write back.
//!
//! Only the version-2 matrix sections needed here are supported: `baseMVA`,
//! `bus`, `gen`, `branch` and polynomial `gencost` up to degree two. Extra
//! columns are ignored with a warning.

mod build;
mod parse;
mod write;

pub use build::build_network;
pub use parse::parse_case;
pub use write::write_case;

use thiserror::Error;

/// Matrices of a case file exactly as read, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub name: String,
    pub base_mva: f64,
    pub bus_rows: Vec<Vec<f64>>,
    pub gen_rows: Vec<Vec<f64>>,
    pub branch_rows: Vec<Vec<f64>>,
    pub gencost_rows: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("malformed matrix `{section}`: row {row} has {got} entries, expected {expected}")]
    MalformedMatrix {
        section: String,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-numeric entry `{token}` in section `{section}`")]
    NonNumericEntry { section: String, token: String },
    #[error("baseMVA must be positive, got {0}")]
    NonPositiveBase(f64),
    #[error("no slack bus (type 3) in bus table")]
    NoSlackBus,
    #[error("multiple slack buses flagged: {0:?}")]
    MultipleSlackBuses(Vec<usize>),
    #[error("duplicate bus id {0}")]
    DuplicateBusId(usize),
    #[error("bus id {bus} referenced by {section} row {row} does not exist")]
    UnknownBusId {
        section: String,
        row: usize,
        bus: usize,
    },
    #[error("branch {row} ({from}-{to}) has zero impedance")]
    ZeroImpedanceBranch { row: usize, from: usize, to: usize },
    #[error("bus {bus}: voltage bounds violated (v_min {v_min} > v_max {v_max})")]
    InvalidVoltageBounds { bus: usize, v_min: f64, v_max: f64 },
    #[error("generator {gen}: bound violated after normalization ({which} min {min} > max {max})")]
    InvalidGenBounds {
        gen: usize,
        which: &'static str,
        min: f64,
        max: f64,
    },
    #[error("generator {gen}: unsupported cost model ({reason})")]
    UnsupportedCost { gen: usize, reason: String },
}
