use nalgebra::DVector;

use super::design::{ColumnKind, Design, NumericKind};
use super::logit::sigmoid;
use super::result::{Coefficient, PValueDist, RegressionResult};

/// Average marginal effects of each non-intercept column of a fitted logit.
///
/// Binary indicators and factor-level dummies use the 0→1 counterfactual
/// (for a factor level, every other level of the same term is switched off
/// in both arms). Continuous regressors use the mean of β·p(1−p).
/// Standard errors follow the delta method with the fit's covariance.
pub fn average_marginal_effects(fit: &RegressionResult, design: &Design, p_values: PValueDist) -> Vec<Coefficient> {
    let beta = &fit.beta;
    let (n, k) = (design.n(), design.k());
    let eta = &design.x * beta;
    let mut out = Vec::new();

    for (j, col) in design.columns.iter().enumerate() {
        let mut grad = DVector::zeros(k);
        let mut ame = 0.0;
        match col.kind {
            ColumnKind::Intercept => continue,
            ColumnKind::Numeric(NumericKind::Continuous) => {
                for i in 0..n {
                    let p = sigmoid(eta[i]);
                    let d = p * (1.0 - p);
                    ame += beta[j] * d;
                    // d/dβ [β_j p(1-p)] = e_j p(1-p) + β_j p(1-p)(1-2p) x_i
                    grad.axpy(beta[j] * d * (1.0 - 2.0 * p), &design.x.row(i).transpose(), 1.0);
                    grad[j] += d;
                }
            }
            ColumnKind::Numeric(NumericKind::Binary) | ColumnKind::Level { .. } => {
                let siblings: Vec<usize> = match col.kind {
                    ColumnKind::Level { term } => design.term_columns(term),
                    _ => vec![j],
                };
                for i in 0..n {
                    let own: f64 = siblings.iter().map(|&s| design.x[(i, s)] * beta[s]).sum();
                    let base = eta[i] - own;
                    let p0 = sigmoid(base);
                    let p1 = sigmoid(base + beta[j]);
                    ame += p1 - p0;
                    let (d0, d1) = (p0 * (1.0 - p0), p1 * (1.0 - p1));
                    for m in 0..k {
                        if siblings.contains(&m) {
                            continue;
                        }
                        grad[m] += (d1 - d0) * design.x[(i, m)];
                    }
                    grad[j] += d1;
                }
            }
        }
        let nf = n as f64;
        ame /= nf;
        grad /= nf;
        let var = (grad.transpose() * &fit.covariance * &grad)[(0, 0)];
        let se = var.max(0.0).sqrt();
        let stat = if se > 0.0 { ame / se } else { 0.0 };
        out.push(Coefficient {
            term: col.name.clone(),
            estimate: ame,
            std_error: se,
            statistic: stat,
            p_value: p_values.two_sided(stat),
        });
    }
    out
}
