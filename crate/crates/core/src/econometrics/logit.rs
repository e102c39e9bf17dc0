use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::design::Design;
use super::ols::inverse_gram_from_r;
use super::result::{coefficient_table, FitStats, Model, PValueDist, RegressionResult};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Covariance {
    /// Inverse observed information.
    #[default]
    Classical,
    /// Sandwich estimator clustered on `Design::clusters`.
    ClusterRobust,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogitOptions {
    pub max_iterations: usize,
    pub score_tolerance: f64,
    pub relative_ll_tolerance: f64,
    /// Coefficient magnitude beyond which a still-improving likelihood is
    /// taken as separation.
    pub separation_bound: f64,
    pub covariance: Covariance,
    pub p_values: PValueDist,
}

impl Default for LogitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            score_tolerance: 1e-8,
            relative_ll_tolerance: 1e-10,
            separation_bound: 30.0,
            covariance: Covariance::Classical,
            p_values: PValueDist::Normal,
        }
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^eta) without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

pub fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Gradient of the log-likelihood, Xᵀ(y − p).
pub fn score(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_iterator(y.len(), eta.iter().zip(y.iter()).map(|(e, yi)| yi - sigmoid(*e)));
    x.transpose() * resid
}

/// R factor of the QR decomposition of diag(√w) X at `beta`.
fn weighted_r(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut a = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let p = sigmoid(*e);
        let sw = (p * (1.0 - p)).sqrt();
        a.row_mut(i).scale_mut(sw);
    }
    a.qr().r()
}

/// Solves (RᵀR) d = g for upper-triangular R.
fn solve_gram(r: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let z = r.transpose().solve_lower_triangular(g)?;
    r.solve_upper_triangular(&z)
}

fn check_outcome(y: &DVector<f64>) -> Result<()> {
    if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::Design(format!("logit outcome must be 0/1, found {v}")));
    }
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::DegenerateOutcome(format!(
            "all {} outcomes are {}",
            y.len(),
            if ones == 0 { 0 } else { 1 }
        )));
    }
    Ok(())
}

/// Maximum-likelihood logit by Newton steps with step halving.
///
/// Stops when the largest score component is below tolerance, or when the
/// relative log-likelihood change has stayed below tolerance for two
/// consecutive steps.
pub fn logit_fit(design: &Design, opts: &LogitOptions) -> Result<RegressionResult> {
    let (x, y) = (&design.x, &design.y);
    check_outcome(y)?;
    let k = design.k();
    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(x, y, &beta);
    let mut trace = vec![ll];
    let mut quiet_steps = 0;
    let mut converged_at = None;

    for it in 0..=opts.max_iterations {
        let g = score(x, y, &beta);
        if g.amax() < opts.score_tolerance || quiet_steps >= 2 {
            converged_at = Some(it);
            break;
        }
        if it == opts.max_iterations {
            break;
        }
        let r = weighted_r(x, &beta);
        let delta = solve_gram(&r, &g).ok_or_else(|| Error::NotConverged {
            iterations: it,
            trace: trace.clone(),
        })?;
        let mut step = 1.0;
        let (mut next, mut ll_next);
        loop {
            next = &beta + &delta * step;
            ll_next = log_likelihood(x, y, &next);
            if ll_next >= ll || step < 1e-10 {
                break;
            }
            step *= 0.5;
        }
        let improving = ll_next > ll;
        let rel = (ll_next - ll).abs() / ll.abs().max(1e-300);
        beta = next;
        ll = ll_next;
        trace.push(ll);
        if improving && beta.amax() > opts.separation_bound {
            let j = beta.iamax();
            return Err(Error::Separation(design.columns[j].name.clone()));
        }
        quiet_steps = if rel < opts.relative_ll_tolerance { quiet_steps + 1 } else { 0 };
    }

    let Some(iterations) = converged_at else {
        return Err(Error::NotConverged {
            iterations: opts.max_iterations,
            trace,
        });
    };

    let r = weighted_r(x, &beta);
    let bread = inverse_gram_from_r(&r)?;
    let covariance = match opts.covariance {
        Covariance::Classical => bread,
        Covariance::ClusterRobust => {
            let clusters = design
                .clusters
                .as_ref()
                .ok_or_else(|| Error::Design("cluster-robust errors need cluster ids".into()))?;
            let eta = x * &beta;
            let mut sums: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
            for i in 0..design.n() {
                let u = y[i] - sigmoid(eta[i]);
                let s = sums.entry(clusters[i].as_str()).or_insert_with(|| DVector::zeros(k));
                *s += x.row(i).transpose() * u;
            }
            let g = sums.len() as f64;
            let mut meat = DMatrix::zeros(k, k);
            for s in sums.values() {
                meat += s * s.transpose();
            }
            let adj = if g > 1.0 { g / (g - 1.0) } else { 1.0 };
            &bread * meat * &bread * adj
        }
    };
    let coefficients = coefficient_table(design, &beta, &covariance, opts.p_values);
    Ok(RegressionResult {
        model: Model::Logit,
        coefficients,
        beta,
        covariance,
        stats: FitStats {
            n: design.n(),
            k,
            rss: None,
            log_likelihood: Some(ll),
            iterations,
            cluster_robust: opts.covariance == Covariance::ClusterRobust,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::design::{build_design, DesignSpec, Frame, Term};

    fn intercept_only(y: Vec<f64>) -> Design {
        let frame = Frame::default().with_numeric("y", y);
        let spec = DesignSpec {
            response: "y".into(),
            terms: vec![],
            intercept: true,
        };
        build_design(&spec, &frame).unwrap()
    }

    #[test]
    fn half_ones_gives_zero_intercept() {
        let fit = logit_fit(&intercept_only(vec![0.0, 1.0, 1.0, 0.0]), &LogitOptions::default()).unwrap();
        assert!(fit.beta[0].abs() < 1e-12);
        // one in four: logit(0.25) = ln(1/3)
        let fit = logit_fit(&intercept_only(vec![0.0, 1.0, 0.0, 0.0]), &LogitOptions::default()).unwrap();
        assert!((fit.beta[0] - (1.0f64 / 3.0).ln()).abs() < 1e-10);
    }

    #[test]
    fn constant_outcome_is_degenerate() {
        let err = logit_fit(&intercept_only(vec![0.0; 5]), &LogitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateOutcome(_)));
    }

    #[test]
    fn perfect_separation_is_reported() {
        let frame = Frame::default()
            .with_numeric("x", vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
            .with_numeric("y", vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let spec = DesignSpec {
            response: "y".into(),
            terms: vec![Term::continuous("x")],
            intercept: true,
        };
        let err = logit_fit(&build_design(&spec, &frame).unwrap(), &LogitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation(ref name) if name == "x"), "{err}");
    }

    #[test]
    fn stable_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
