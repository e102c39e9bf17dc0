use std::io::Write;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::design::Design;
use crate::error::Result;
use crate::table::{self, RunMeta};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Ols,
    Logit,
}

/// Reference distribution for Wald p-values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PValueDist {
    Normal,
    StudentT { df: f64 },
}

impl PValueDist {
    /// Two-sided p-value of a test statistic.
    pub fn two_sided(self, stat: f64) -> f64 {
        if stat.is_nan() {
            return f64::NAN;
        }
        let tail = match self {
            PValueDist::Normal => Normal::standard().sf(stat.abs()),
            PValueDist::StudentT { df } => StudentsT::new(0.0, 1.0, df)
                .expect("positive degrees of freedom")
                .sf(stat.abs()),
        };
        (2.0 * tail).min(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitStats {
    pub n: usize,
    pub k: usize,
    pub rss: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub iterations: usize,
    pub cluster_robust: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionResult {
    pub model: Model,
    pub coefficients: Vec<Coefficient>,
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub stats: FitStats,
}

impl RegressionResult {
    pub fn get(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

pub(crate) fn coefficient_table(
    design: &Design,
    beta: &DVector<f64>,
    covariance: &DMatrix<f64>,
    dist: PValueDist,
) -> Vec<Coefficient> {
    design
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let se = covariance[(j, j)].max(0.0).sqrt();
            let stat = if se > 0.0 {
                beta[j] / se
            } else if beta[j] == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(beta[j])
            };
            Coefficient {
                term: c.name.clone(),
                estimate: beta[j],
                std_error: se,
                statistic: stat,
                p_value: dist.two_sided(stat),
            }
        })
        .collect()
}

/// Keeps coefficients with p strictly below `alpha`.
pub fn significance_filter(coefficients: &[Coefficient], alpha: f64) -> Vec<Coefficient> {
    coefficients
        .iter()
        .filter(|c| c.p_value < alpha)
        .cloned()
        .collect()
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

pub const COEFFICIENT_HEADER: [&str; 6] = ["term", "estimate", "std_error", "statistic", "p_value", "stars"];

pub fn write_coefficients<W: Write>(out: W, meta: Option<&RunMeta>, coefficients: &[Coefficient]) -> Result<()> {
    let rows = coefficients.iter().map(|c| {
        vec![
            c.term.clone(),
            c.estimate.to_string(),
            c.std_error.to_string(),
            c.statistic.to_string(),
            c.p_value.to_string(),
            stars(c.p_value).to_string(),
        ]
    });
    table::write_rows(out, meta, &COEFFICIENT_HEADER, rows)
}
