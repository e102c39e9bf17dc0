use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("record {record}: field `{field}`: {reason}")]
    Record {
        record: usize,
        field: String,
        reason: String,
    },

    #[error("record {record}: truncated line ({got} bytes, layout needs {need})")]
    Truncated { record: usize, got: usize, need: usize },

    #[error("cannot decode record {record} as {encoding}")]
    Encoding { record: usize, encoding: String },

    #[error("duplicate person key {key} in {quarter} visit {visit}")]
    DuplicatePerson {
        key: String,
        quarter: String,
        visit: u8,
    },

    #[error("no panel visits in {quarter} with visit number {visit}")]
    OffSchedule { quarter: String, visit: u8 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("revisit quarter fix: {0}")]
    QuarterFix(String),

    #[error("unknown status code {0}")]
    UnknownStatus(u8),

    #[error("record references FSU {0} which is neither mapped nor unmatched")]
    UnmappedFsu(u32),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("flow matrices cannot be averaged: {0}")]
    MatrixMismatch(String),

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("design: {0}")]
    Design(String),

    #[error("logit did not converge after {iterations} iterations (log-likelihood trace: {trace:?})")]
    NotConverged { iterations: usize, trace: Vec<f64> },

    #[error("quasi-complete separation detected on regressor `{0}`")]
    Separation(String),

    #[error("degenerate outcome: {0}")]
    DegenerateOutcome(String),

    #[error("synthetic config: {0}")]
    Config(String),
}
