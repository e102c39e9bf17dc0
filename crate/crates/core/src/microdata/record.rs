use std::fmt;

use serde::{Deserialize, Serialize};

use super::quarter::{SurveyYear, YearQuarter};
use super::schedule::PanelLabel;

/// First-stage unit number. Only equality and ordering are meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fsu(pub u32);

impl fmt::Display for Fsu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Sex {
    Male,
    Female,
    Other,
}

impl Sex {
    pub fn code(self) -> u8 {
        match self {
            Sex::Male => 1,
            Sex::Female => 2,
            Sex::Other => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Sex::Male),
            2 => Some(Sex::Female),
            3 => Some(Sex::Other),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
            Sex::Other => "Other",
        }
    }
}

impl From<Sex> for u8 {
    fn from(value: Sex) -> Self {
        value.code()
    }
}

impl TryFrom<u8> for Sex {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Sex::from_code(value).ok_or_else(|| format!("unknown sex code {value}"))
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HouseholdKey {
    pub fsu: Fsu,
    pub sub_block: u8,
    pub stratum2: u8,
    pub hh_no: u16,
}

impl fmt::Display for HouseholdKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.fsu, self.sub_block, self.stratum2, self.hh_no
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PersonKey {
    pub household: HouseholdKey,
    pub person_no: u16,
}

impl fmt::Display for PersonKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.household, self.person_no)
    }
}

/// A household as linked across visits: panel label plus composite key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HouseholdId {
    pub panel: PanelLabel,
    pub key: HouseholdKey,
}

impl fmt::Display for HouseholdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.panel, self.key)
    }
}

/// One person at one quarterly visit.
///
/// `quarter` is the position in the July–June cycle of `survey_year`; the
/// calendar quarter is derived. Field order is the canonical column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonVisit {
    pub survey_year: SurveyYear,
    pub quarter: u8,
    pub visit_no: u8,
    pub panel: Option<PanelLabel>,
    pub fsu: Fsu,
    pub sub_block: u8,
    pub stratum2: u8,
    pub hh_no: u16,
    pub person_no: u16,
    pub state: u16,
    pub district: u16,
    pub sex: Sex,
    pub age: u16,
    pub relation_to_head: u8,
    pub marital: u8,
    pub education: u8,
    pub religion: u8,
    pub social_group: u8,
    pub hh_size: u16,
    pub status_code: u8,
    pub industry: Option<u8>,
    pub earnings: Option<f64>,
    pub weight: f64,
}

impl PersonVisit {
    pub fn year_quarter(&self) -> YearQuarter {
        self.survey_year.calendar_quarter(self.quarter)
    }

    pub fn household_key(&self) -> HouseholdKey {
        HouseholdKey {
            fsu: self.fsu,
            sub_block: self.sub_block,
            stratum2: self.stratum2,
            hh_no: self.hh_no,
        }
    }

    pub fn person_key(&self) -> PersonKey {
        PersonKey {
            household: self.household_key(),
            person_no: self.person_no,
        }
    }

    /// Panel-qualified household identity. Records without a panel label
    /// share the empty label.
    pub fn household_id(&self) -> HouseholdId {
        HouseholdId {
            panel: self.panel.clone().unwrap_or_else(|| PanelLabel::new("")),
            key: self.household_key(),
        }
    }

    pub fn district_key(&self) -> (u16, u16) {
        (self.state, self.district)
    }

    /// Deterministic merge order: person key, then quarter, then visit.
    pub fn sort_key(&self) -> (PersonKey, YearQuarter, u8) {
        (self.person_key(), self.year_quarter(), self.visit_no)
    }
}

/// Sorts records into the deterministic merge order.
pub fn sort_records(records: &mut [PersonVisit]) {
    records.sort_by(|a, b| {
        a.sort_key()
            .cmp(&b.sort_key())
            .then_with(|| a.panel.cmp(&b.panel))
    });
}
