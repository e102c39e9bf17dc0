use nalgebra::{DMatrix, DVector};

use super::design::Design;
use super::result::{coefficient_table, FitStats, Model, PValueDist, RegressionResult};
use crate::error::{Error, Result};

/// Inverse of an upper-triangular `r`, times its transpose: (RᵀR)⁻¹.
pub(crate) fn inverse_gram_from_r(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = r.nrows();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Design("singular triangular factor".into()))?;
    Ok(&r_inv * r_inv.transpose())
}

/// Least squares by thin QR, with classical standard errors and
/// t-distribution p-values on n − k degrees of freedom.
pub fn ols_fit(design: &Design) -> Result<RegressionResult> {
    let (n, k) = (design.n(), design.k());
    if n <= k {
        return Err(Error::Design(format!(
            "no residual degrees of freedom ({n} rows, {k} columns)"
        )));
    }
    let qr = design.x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * &design.y;
    let beta: DVector<f64> = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Design("singular design".into()))?;
    let resid = &design.y - &design.x * &beta;
    let rss = resid.norm_squared();
    let df = (n - k) as f64;
    let sigma2 = rss / df;
    let covariance = inverse_gram_from_r(&r)? * sigma2;
    let coefficients = coefficient_table(
        design,
        &beta,
        &covariance,
        PValueDist::StudentT { df },
    );
    Ok(RegressionResult {
        model: Model::Ols,
        coefficients,
        beta,
        covariance,
        stats: FitStats {
            n,
            k,
            rss: Some(rss),
            log_likelihood: None,
            iterations: 0,
            cluster_robust: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::design::{build_design, DesignSpec, Frame, Term};

    #[test]
    fn exact_fit_through_origin() {
        let frame = Frame::default()
            .with_numeric("x", vec![1.0, 2.0, 3.0, 4.0])
            .with_numeric("y", vec![2.0, 4.0, 6.0, 8.0]);
        let spec = DesignSpec {
            response: "y".into(),
            terms: vec![Term::continuous("x")],
            intercept: false,
        };
        let fit = ols_fit(&build_design(&spec, &frame).unwrap()).unwrap();
        assert!((fit.coefficients[0].estimate - 2.0).abs() < 1e-14);
        assert!(fit.stats.rss.unwrap() < 1e-24);
    }

    #[test]
    fn textbook_line() {
        // y = 1 + 2x + e with e = (1, -1, -1, 1): intercept 1, slope 2
        let frame = Frame::default()
            .with_numeric("x", vec![0.0, 1.0, 2.0, 3.0])
            .with_numeric("y", vec![2.0, 2.0, 4.0, 8.0]);
        let spec = DesignSpec {
            response: "y".into(),
            terms: vec![Term::continuous("x")],
            intercept: true,
        };
        let fit = ols_fit(&build_design(&spec, &frame).unwrap()).unwrap();
        assert!((fit.coefficients[0].estimate - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1].estimate - 2.0).abs() < 1e-12);
        assert!((fit.stats.rss.unwrap() - 4.0).abs() < 1e-12);
        // var(slope) = sigma^2 / Sxx = (4/2) / 5
        assert!((fit.coefficients[1].std_error - (0.4f64).sqrt()).abs() < 1e-12);
    }
}
