use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::history::{PersonHistory, PersonId};
use super::state::EmpDichotomy;
use crate::microdata::{Sex, YearQuarter};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureConfig {
    pub dichotomy: EmpDichotomy,
    /// Marital status code for "currently married".
    pub married_code: u8,
    /// Lowest general-education code counted as graduate or above.
    pub graduate_min_education: u8,
    /// Very young: age strictly below this.
    pub very_young_below: u16,
    /// Young: from `very_young_below` up to and including this age.
    pub young_max: u16,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            dichotomy: EmpDichotomy::Table3,
            married_code: 2,
            graduate_min_education: 13,
            very_young_below: 21,
            young_max: 30,
        }
    }
}

/// Regressors and outcomes for one person at one visit. Flags are 0/1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub person: PersonId,
    pub sex: Sex,
    pub quarter: YearQuarter,
    pub visit_no: u8,
    pub age: u16,
    pub weight: f64,
    pub very_young: u8,
    pub young: u8,
    pub graduate: u8,
    pub has_child: u8,
    pub married: u8,
    /// Quarters observed employed / not employed, up to and including this one.
    pub employed_count: u8,
    pub not_employed_count: u8,
    pub e_ratio: f64,
    /// Consecutive quarters in the current employment status, capped at 3.
    pub en_streak: u8,
    pub employed: u8,
    pub lost: u8,
    pub gained: u8,
}

impl FeatureRow {
    pub fn visits_observed(&self) -> u8 {
        self.employed_count + self.not_employed_count
    }
}

pub const MAX_STREAK: u8 = 3;

/// One row per observed visit except the last.
pub fn derive_features(history: &PersonHistory, config: &FeatureConfig) -> Vec<FeatureRow> {
    let employed: Vec<bool> = history
        .visits
        .iter()
        .map(|v| v.state.is_employed(config.dichotomy))
        .collect();
    let mut rows = Vec::new();
    let (mut e, mut n, mut streak) = (0u8, 0u8, 0u8);
    for i in 0..history.visits.len().saturating_sub(1) {
        let v = &history.visits[i];
        let now = employed[i];
        if now {
            e += 1;
        } else {
            n += 1;
        }
        streak = if i > 0 && employed[i - 1] == now { streak + 1 } else { 1 };
        let next = employed[i + 1];
        let seen = f64::from(e + n);
        rows.push(FeatureRow {
            person: history.id.clone(),
            sex: history.sex,
            quarter: v.quarter,
            visit_no: v.visit_no,
            age: v.age,
            weight: v.weight,
            very_young: u8::from(v.age < config.very_young_below),
            young: u8::from(v.age >= config.very_young_below && v.age <= config.young_max),
            graduate: u8::from(v.education >= config.graduate_min_education),
            has_child: u8::from(v.household_has_child),
            married: u8::from(v.marital == config.married_code),
            employed_count: e,
            not_employed_count: n,
            e_ratio: (f64::from(e) - f64::from(n)) / seen,
            en_streak: streak.min(MAX_STREAK),
            employed: u8::from(now),
            lost: u8::from(now && !next),
            gained: u8::from(!now && next),
        });
    }
    rows
}

/// Features for every history, in history order.
pub fn derive_all_features(histories: &[PersonHistory], config: &FeatureConfig) -> Vec<FeatureRow> {
    histories
        .par_iter()
        .map(|h| derive_features(h, config))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
