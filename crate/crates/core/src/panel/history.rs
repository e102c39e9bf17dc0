use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::state::{recode_labor_state, LaborState};
use crate::error::{Error, Result};
use crate::microdata::schedule::VISITS_PER_PANEL;
use crate::microdata::{HouseholdId, PanelLabel, PersonKey, PersonVisit, Sex, YearQuarter};

/// A person as linked across visits.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PersonId {
    pub panel: PanelLabel,
    pub key: PersonKey,
}

impl PersonId {
    pub fn of(r: &PersonVisit) -> Self {
        Self {
            panel: r.panel.clone().unwrap_or_else(|| PanelLabel::new("")),
            key: r.person_key(),
        }
    }

    pub fn household(&self) -> HouseholdId {
        HouseholdId {
            panel: self.panel.clone(),
            key: self.key.household,
        }
    }
}

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.panel, self.key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisitEntry {
    pub quarter: YearQuarter,
    pub visit_no: u8,
    pub state: LaborState,
    pub age: u16,
    pub education: u8,
    pub marital: u8,
    pub industry: Option<u8>,
    pub earnings: Option<f64>,
    pub weight: f64,
    /// Some co-resident member was under five that quarter.
    pub household_has_child: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersonHistory {
    pub id: PersonId,
    pub sex: Sex,
    pub region: u16,
    pub visits: Vec<VisitEntry>,
    /// Quarter and visit number of the first scheduled visit that was missed.
    pub attrit: Option<(YearQuarter, u8)>,
}

impl PersonHistory {
    pub fn last(&self) -> &VisitEntry {
        self.visits.last().expect("histories are never empty")
    }
}

pub const CHILD_AGE_BELOW: u16 = 5;

/// Groups clean, mapped records into per-person histories ordered by
/// person id.
///
/// Visits run over consecutive quarters; a history is cut at its first gap.
/// A missed next visit is marked as attrition only when it falls on or
/// before `window_end` (when given), so panels running past the study
/// window are not counted as lost.
pub fn build_histories(
    records: &[PersonVisit],
    window_end: Option<YearQuarter>,
) -> Result<Vec<PersonHistory>> {
    let mut child: HashMap<(HouseholdId, YearQuarter), bool> = HashMap::new();
    let mut people: BTreeMap<PersonId, Vec<&PersonVisit>> = BTreeMap::new();
    for r in records {
        let flag = child.entry((r.household_id(), r.year_quarter())).or_insert(false);
        *flag |= r.age < CHILD_AGE_BELOW;
        people.entry(PersonId::of(r)).or_default().push(r);
    }

    let people: Vec<(PersonId, Vec<&PersonVisit>)> = people.into_iter().collect();
    people
        .into_par_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|r| (r.year_quarter(), r.visit_no));
            for w in rows.windows(2) {
                if w[0].year_quarter() == w[1].year_quarter() {
                    return Err(Error::DuplicatePerson {
                        key: id.to_string(),
                        quarter: w[1].year_quarter().to_string(),
                        visit: w[1].visit_no,
                    });
                }
            }
            let household = id.household();
            let mut visits: Vec<VisitEntry> = Vec::with_capacity(rows.len());
            for r in &rows {
                let q = r.year_quarter();
                if let Some(prev) = visits.last() {
                    if prev.quarter.next() != q {
                        break;
                    }
                }
                visits.push(VisitEntry {
                    quarter: q,
                    visit_no: r.visit_no,
                    state: recode_labor_state(r.status_code)?,
                    age: r.age,
                    education: r.education,
                    marital: r.marital,
                    industry: r.industry,
                    earnings: r.earnings,
                    weight: r.weight,
                    household_has_child: child[&(household.clone(), q)],
                });
            }
            let last = visits.last().expect("at least one record per person");
            let next = (last.quarter.next(), last.visit_no + 1);
            let attrit = (last.visit_no < VISITS_PER_PANEL
                && window_end.is_none_or(|end| next.0 <= end))
            .then_some(next);
            Ok(PersonHistory {
                sex: rows[0].sex,
                region: rows[0].state,
                id,
                visits,
                attrit,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkingAge {
    pub min: u16,
    pub max: u16,
}

impl Default for WorkingAge {
    fn default() -> Self {
        Self { min: 15, max: 65 }
    }
}

impl WorkingAge {
    pub fn contains(&self, age: u16) -> bool {
        (self.min..=self.max).contains(&age)
    }
}

/// Keeps visits inside the (inclusive) age band. A person whose trailing
/// visits are dropped for age is no longer counted as attrited; histories
/// with no remaining visits disappear.
pub fn filter_working_age(histories: Vec<PersonHistory>, band: WorkingAge) -> Vec<PersonHistory> {
    histories
        .into_iter()
        .filter_map(|mut h| {
            let before = h.visits.len();
            let last_kept = h.visits.iter().rposition(|v| band.contains(v.age))?;
            if last_kept + 1 < before {
                h.attrit = None;
            }
            h.visits.retain(|v| band.contains(v.age));
            Some(h)
        })
        .collect()
}

/// A person observed at quarter `from.quarter`, and at the following
/// quarter unless attrited.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<'a> {
    pub person: &'a PersonId,
    pub sex: Sex,
    pub region: u16,
    pub from: &'a VisitEntry,
    /// `None` means attrited.
    pub to: Option<&'a VisitEntry>,
}

impl Transition<'_> {
    pub fn quarter(&self) -> YearQuarter {
        self.from.quarter
    }

    pub fn destination(&self) -> LaborState {
        self.to.map_or(LaborState::Attrit, |v| v.state)
    }
}

/// Consecutive-quarter pairs from each history, plus a terminal attrition
/// pair where one is marked.
pub fn transitions(histories: &[PersonHistory]) -> Vec<Transition<'_>> {
    let mut out = Vec::new();
    for h in histories {
        for (i, v) in h.visits.iter().enumerate() {
            let to = match h.visits.get(i + 1) {
                Some(n) if n.quarter == v.quarter.next() => Some(Some(n)),
                Some(_) => None,
                None => match h.attrit {
                    Some((q, _)) if q == v.quarter.next() => Some(None),
                    _ => None,
                },
            };
            if let Some(to) = to {
                out.push(Transition {
                    person: &h.id,
                    sex: h.sex,
                    region: h.region,
                    from: v,
                    to,
                });
            }
        }
    }
    out
}
