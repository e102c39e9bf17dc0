//! Linked rotating-panel labour-force microdata: ingestion, validation,
//! cross-year FSU matching, panel assembly, gross flows and the regression
//! models fitted on them.

pub mod econometrics;
pub mod error;
pub mod flows;
pub mod matcher;
pub mod microdata;
pub mod panel;
pub mod synth;
pub mod table;
pub mod validate;

pub use error::{Error, Result};
