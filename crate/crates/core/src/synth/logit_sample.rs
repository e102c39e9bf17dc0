use rand::Rng;

use super::rng::{entity_rng, tag};
use crate::econometrics::logit::sigmoid;
use crate::econometrics::{DesignSpec, Frame, Term};

/// A job-loss style logit sample drawn from known coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitSample {
    pub frame: Frame,
    pub spec: DesignSpec,
    /// Generating coefficient per design column name.
    pub truth: Vec<(String, f64)>,
}

pub fn default_logit_truth() -> Vec<(String, f64)> {
    [
        ("(Intercept)", -1.5),
        ("very_young", 0.4),
        ("young", 0.2),
        ("graduate", -0.3),
        ("has_child", 0.5),
        ("married", -0.6),
        ("e_ratio", -1.0),
        ("en_streak=2", -0.4),
        ("en_streak=3", -0.8),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn coef(truth: &[(String, f64)], name: &str) -> f64 {
    truth.iter().find(|(k, _)| k == name).map_or(0.0, |(_, v)| *v)
}

/// Draws `n` rows with one keyed stream per row.
pub fn generate_logit_sample(n: usize, truth: &[(String, f64)], seed: u64) -> LogitSample {
    let mut cols: [Vec<f64>; 7] = Default::default();
    let mut streaks = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = entity_rng(seed, &[tag::LOGIT, i as u64]);
        let u: f64 = r.random();
        let very_young = f64::from(u8::from(u < 0.2));
        let young = f64::from(u8::from((0.2..0.5).contains(&u)));
        let graduate = f64::from(u8::from(r.random::<f64>() < 0.3));
        let has_child = f64::from(u8::from(r.random::<f64>() < 0.25));
        let married = f64::from(u8::from(r.random::<f64>() < 0.6));
        let seen: u8 = r.random_range(1..=3);
        let employed: u8 = r.random_range(0..=seen);
        let e_ratio = (f64::from(employed) - f64::from(seen - employed)) / f64::from(seen);
        let streak: u8 = r.random_range(1..=seen);
        let eta = coef(truth, "(Intercept)")
            + coef(truth, "very_young") * very_young
            + coef(truth, "young") * young
            + coef(truth, "graduate") * graduate
            + coef(truth, "has_child") * has_child
            + coef(truth, "married") * married
            + coef(truth, "e_ratio") * e_ratio
            + match streak {
                2 => coef(truth, "en_streak=2"),
                3 => coef(truth, "en_streak=3"),
                _ => 0.0,
            };
        let y = f64::from(u8::from(r.random::<f64>() < sigmoid(eta)));
        for (c, v) in cols
            .iter_mut()
            .zip([y, very_young, young, graduate, has_child, married, e_ratio])
        {
            c.push(v);
        }
        streaks.push(streak.to_string());
    }
    let [y, very_young, young, graduate, has_child, married, e_ratio] = cols;
    let frame = Frame::default()
        .with_numeric("lost", y)
        .with_numeric("very_young", very_young)
        .with_numeric("young", young)
        .with_numeric("graduate", graduate)
        .with_numeric("has_child", has_child)
        .with_numeric("married", married)
        .with_numeric("e_ratio", e_ratio)
        .with_factor("en_streak", streaks);
    let spec = DesignSpec {
        response: "lost".into(),
        terms: vec![
            Term::binary("very_young"),
            Term::binary("young"),
            Term::binary("graduate"),
            Term::binary("has_child"),
            Term::binary("married"),
            Term::continuous("e_ratio"),
            Term::factor_drop_first("en_streak"),
        ],
        intercept: true,
    };
    LogitSample {
        frame,
        spec,
        truth: truth.to_vec(),
    }
}
