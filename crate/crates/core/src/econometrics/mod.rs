//! Dummy-variable least squares and logit models with average marginal
//! effects.

pub mod ame;
pub mod design;
pub mod logit;
pub mod ols;
pub mod result;

pub use ame::average_marginal_effects;
pub use design::{build_design, collinear_columns, Design, DesignSpec, Frame, NumericKind, Term};
pub use logit::{logit_fit, Covariance, LogitOptions};
pub use ols::ols_fit;
pub use result::{
    significance_filter, stars, write_coefficients, Coefficient, Model, PValueDist,
    RegressionResult,
};
