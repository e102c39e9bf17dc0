//! Weighted gross flows between labour states, entry/exit rates by cell
//! and earnings-ratio distributions.

pub mod ecdf;
pub mod matrix;
pub mod rates;

pub use ecdf::{earnings_ratio_ecdf, EcdfKind, EcdfSeries, EcdfSummary};
pub use matrix::{average_matrices, flow_matrices, flow_matrix, Averaging, FlowMatrix, Period};
pub use rates::{
    cell_filter, compute_rate_cells, entry_exit_rates, CellFamily, CellGroup, CellKey,
    CellThresholds, RateCell, RateValues,
};
