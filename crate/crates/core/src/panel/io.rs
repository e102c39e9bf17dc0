//! Flat delimited-text forms of histories and feature rows, so later
//! stages can run from files alone.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::features::FeatureRow;
use super::history::{PersonHistory, PersonId, VisitEntry};
use super::state::LaborState;
use crate::error::{Error, Result};
use crate::microdata::{Fsu, HouseholdKey, PanelLabel, PersonKey, Sex, YearQuarter};
use crate::table::{self, RunMeta};

/// One visit of one history. The attrition columns are filled on the last
/// visit of a history that attrits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct HistoryLine {
    panel: PanelLabel,
    fsu: Fsu,
    sub_block: u8,
    stratum2: u8,
    hh_no: u16,
    person_no: u16,
    sex: Sex,
    region: u16,
    quarter: YearQuarter,
    visit_no: u8,
    state: LaborState,
    age: u16,
    education: u8,
    marital: u8,
    industry: Option<u8>,
    earnings: Option<f64>,
    weight: f64,
    has_child: u8,
    attrit_quarter: Option<YearQuarter>,
    attrit_visit: Option<u8>,
}

pub const HISTORY_COLUMNS: [&str; 20] = [
    "panel", "fsu", "sub_block", "stratum2", "hh_no", "person_no", "sex", "region", "quarter",
    "visit_no", "state", "age", "education", "marital", "industry", "earnings", "weight",
    "has_child", "attrit_quarter", "attrit_visit",
];

pub fn write_histories<W: Write>(out: W, meta: Option<&RunMeta>, histories: &[PersonHistory]) -> Result<()> {
    let lines = histories.iter().flat_map(|h| {
        let last = h.visits.len() - 1;
        h.visits.iter().enumerate().map(move |(i, v)| HistoryLine {
            panel: h.id.panel.clone(),
            fsu: h.id.key.household.fsu,
            sub_block: h.id.key.household.sub_block,
            stratum2: h.id.key.household.stratum2,
            hh_no: h.id.key.household.hh_no,
            person_no: h.id.key.person_no,
            sex: h.sex,
            region: h.region,
            quarter: v.quarter,
            visit_no: v.visit_no,
            state: v.state,
            age: v.age,
            education: v.education,
            marital: v.marital,
            industry: v.industry,
            earnings: v.earnings,
            weight: v.weight,
            has_child: u8::from(v.household_has_child),
            attrit_quarter: if i == last { h.attrit.map(|a| a.0) } else { None },
            attrit_visit: if i == last { h.attrit.map(|a| a.1) } else { None },
        })
    });
    table::write_serde(out, meta, &HISTORY_COLUMNS, lines)
}

/// Inverse of [`write_histories`]. Lines of one person must be adjacent.
pub fn read_histories<R: Read>(input: R) -> Result<Vec<PersonHistory>> {
    let lines: Vec<HistoryLine> = table::read_serde(input)?;
    let mut out: Vec<PersonHistory> = Vec::new();
    let mut seen: BTreeSet<PersonId> = BTreeSet::new();
    for l in lines {
        let id = PersonId {
            panel: l.panel.clone(),
            key: PersonKey {
                household: HouseholdKey {
                    fsu: l.fsu,
                    sub_block: l.sub_block,
                    stratum2: l.stratum2,
                    hh_no: l.hh_no,
                },
                person_no: l.person_no,
            },
        };
        let entry = VisitEntry {
            quarter: l.quarter,
            visit_no: l.visit_no,
            state: l.state,
            age: l.age,
            education: l.education,
            marital: l.marital,
            industry: l.industry,
            earnings: l.earnings,
            weight: l.weight,
            household_has_child: l.has_child == 1,
        };
        let attrit = match (l.attrit_quarter, l.attrit_visit) {
            (Some(q), Some(v)) => Some((q, v)),
            (None, None) => None,
            _ => return Err(Error::Data(format!("history of {id}: half-filled attrition columns"))),
        };
        match out.last_mut() {
            Some(h) if h.id == id => {
                if h.attrit.is_some() {
                    return Err(Error::Data(format!("history of {id} continues after attrition")));
                }
                h.visits.push(entry);
                h.attrit = attrit;
            }
            _ => {
                if !seen.insert(id.clone()) {
                    return Err(Error::Data(format!("lines of {id} are not adjacent")));
                }
                out.push(PersonHistory {
                    id,
                    sex: l.sex,
                    region: l.region,
                    visits: vec![entry],
                    attrit,
                });
            }
        }
    }
    Ok(out)
}

/// A feature row with the person id spelled out as a household label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureLine {
    pub household: String,
    pub person_no: u16,
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
    pub employed_count: u8,
    pub not_employed_count: u8,
    pub e_ratio: f64,
    pub en_streak: u8,
    pub employed: u8,
    pub lost: u8,
    pub gained: u8,
}

impl From<&FeatureRow> for FeatureLine {
    fn from(r: &FeatureRow) -> Self {
        Self {
            household: r.person.household().to_string(),
            person_no: r.person.key.person_no,
            sex: r.sex,
            quarter: r.quarter,
            visit_no: r.visit_no,
            age: r.age,
            weight: r.weight,
            very_young: r.very_young,
            young: r.young,
            graduate: r.graduate,
            has_child: r.has_child,
            married: r.married,
            employed_count: r.employed_count,
            not_employed_count: r.not_employed_count,
            e_ratio: r.e_ratio,
            en_streak: r.en_streak,
            employed: r.employed,
            lost: r.lost,
            gained: r.gained,
        }
    }
}

pub const FEATURE_COLUMNS: [&str; 19] = [
    "household", "person_no", "sex", "quarter", "visit_no", "age", "weight", "very_young", "young",
    "graduate", "has_child", "married", "employed_count", "not_employed_count", "e_ratio",
    "en_streak", "employed", "lost", "gained",
];

pub fn write_features<W: Write>(out: W, meta: Option<&RunMeta>, rows: &[FeatureRow]) -> Result<()> {
    table::write_serde(out, meta, &FEATURE_COLUMNS, rows.iter().map(FeatureLine::from))
}

pub fn read_features<R: Read>(input: R) -> Result<Vec<FeatureLine>> {
    table::read_serde(input)
}
