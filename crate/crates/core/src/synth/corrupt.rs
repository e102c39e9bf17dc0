use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rng::{entity_rng, tag};
use crate::error::{Error, Result};
use crate::microdata::{HouseholdId, PersonVisit, Sex, YearQuarter};

/// How many households receive each kind of edit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSpec {
    pub religion_flips: usize,
    pub size_jumps: usize,
    pub sex_changes: usize,
    pub age_drifts: usize,
    /// Size change of exactly the tolerated maximum; must survive validation.
    pub boundary_size_changes: usize,
    /// Age drift of exactly the tolerated maximum; must survive validation.
    pub boundary_age_drifts: usize,
}

impl CorruptionSpec {
    pub fn total(&self) -> usize {
        self.religion_flips
            + self.size_jumps
            + self.sex_changes
            + self.age_drifts
            + self.boundary_size_changes
            + self.boundary_age_drifts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionKind {
    ReligionFlip,
    SizeJump,
    SexChange,
    AgeDrift,
    BoundarySize,
    BoundaryAge,
}

impl InjectionKind {
    /// Whether the household rules must reject the edited household.
    pub fn violates(self) -> bool {
        !matches!(self, InjectionKind::BoundarySize | InjectionKind::BoundaryAge)
    }

    pub fn label(self) -> &'static str {
        match self {
            InjectionKind::ReligionFlip => "religion-flip",
            InjectionKind::SizeJump => "size-jump",
            InjectionKind::SexChange => "sex-change",
            InjectionKind::AgeDrift => "age-drift",
            InjectionKind::BoundarySize => "boundary-size",
            InjectionKind::BoundaryAge => "boundary-age",
        }
    }
}

impl fmt::Display for InjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub household: HouseholdId,
    pub kind: InjectionKind,
}

pub const MAX_SIZE_CHANGE: u16 = 3;
pub const MAX_AGE_CHANGE: u16 = 4;

/// Edits the last observed visit of distinct, randomly chosen households.
/// Only households observed at two or more visits are eligible, and every
/// eligible household must start out clean for the injection log to be
/// exact.
pub fn corrupt(
    mut records: Vec<PersonVisit>,
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<(Vec<PersonVisit>, Vec<Injection>)> {
    if spec.total() == 0 {
        return Ok((records, Vec::new()));
    }
    let mut by_household: BTreeMap<HouseholdId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_household.entry(r.household_id()).or_default().push(i);
    }
    let mut eligible: Vec<HouseholdId> = by_household
        .iter()
        .filter(|(_, ix)| {
            ix.iter()
                .map(|&i| (records[i].year_quarter(), records[i].visit_no))
                .collect::<BTreeSet<_>>()
                .len()
                >= 2
        })
        .map(|(k, _)| k.clone())
        .collect();
    if spec.total() > eligible.len() {
        return Err(Error::Config(format!(
            "{} corruptions requested but only {} households have two or more visits",
            spec.total(),
            eligible.len()
        )));
    }
    eligible.shuffle(&mut entity_rng(seed, &[tag::CORRUPT]));

    let plan = [
        (InjectionKind::ReligionFlip, spec.religion_flips),
        (InjectionKind::SizeJump, spec.size_jumps),
        (InjectionKind::SexChange, spec.sex_changes),
        (InjectionKind::AgeDrift, spec.age_drifts),
        (InjectionKind::BoundarySize, spec.boundary_size_changes),
        (InjectionKind::BoundaryAge, spec.boundary_age_drifts),
    ];
    let mut picks = eligible.into_iter();
    let mut log = Vec::new();
    for (kind, count) in plan {
        for _ in 0..count {
            let household = picks.next().expect("count checked above");
            let ix = &by_household[&household];
            let last: (YearQuarter, u8) = ix
                .iter()
                .map(|&i| (records[i].year_quarter(), records[i].visit_no))
                .max()
                .expect("non-empty household");
            let at_last: Vec<usize> = ix
                .iter()
                .copied()
                .filter(|&i| (records[i].year_quarter(), records[i].visit_no) == last)
                .collect();
            // the lowest-numbered member present at the last visit
            let target = *at_last
                .iter()
                .min_by_key(|&&i| records[i].person_no)
                .expect("non-empty visit");
            match kind {
                InjectionKind::ReligionFlip => {
                    for &i in &at_last {
                        records[i].religion = records[i].religion % 9 + 1;
                    }
                }
                InjectionKind::SizeJump | InjectionKind::BoundarySize => {
                    let min = ix.iter().map(|&i| records[i].hh_size).min().expect("non-empty");
                    let step = if kind == InjectionKind::SizeJump { MAX_SIZE_CHANGE + 1 } else { MAX_SIZE_CHANGE };
                    for &i in &at_last {
                        records[i].hh_size = min + step;
                    }
                }
                InjectionKind::SexChange => {
                    let r = &mut records[target];
                    r.sex = if r.sex == Sex::Male { Sex::Female } else { Sex::Male };
                }
                InjectionKind::AgeDrift | InjectionKind::BoundaryAge => {
                    let person = records[target].person_no;
                    let min = ix
                        .iter()
                        .filter(|&&i| records[i].person_no == person)
                        .map(|&i| records[i].age)
                        .min()
                        .expect("target present");
                    let step = if kind == InjectionKind::AgeDrift { MAX_AGE_CHANGE + 1 } else { MAX_AGE_CHANGE };
                    records[target].age = min + step;
                }
            }
            log.push(Injection { household, kind });
        }
    }
    Ok((records, log))
}
