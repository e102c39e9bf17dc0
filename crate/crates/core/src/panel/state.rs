use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labour-market state from current weekly status. Variant order is the
/// row/column order of published flow tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LaborState {
    SelfEmployed,
    Casual,
    Salaried,
    Unemployed,
    NotInLabourForce,
    SickAbsent,
    NotWorking,
    /// Assigned by linkage only, never by a status code.
    Attrit,
}

/// Every two-digit status code with a state.
pub const STATUS_CODES: [u8; 21] = [
    11, 12, 21, 31, 41, 42, 51, 61, 62, 71, 72, 81, 82, 91, 92, 93, 94, 95, 97, 98, 99,
];

impl LaborState {
    pub const OBSERVED: [LaborState; 7] = [
        LaborState::SelfEmployed,
        LaborState::Casual,
        LaborState::Salaried,
        LaborState::Unemployed,
        LaborState::NotInLabourForce,
        LaborState::SickAbsent,
        LaborState::NotWorking,
    ];

    pub const ALL: [LaborState; 8] = [
        LaborState::SelfEmployed,
        LaborState::Casual,
        LaborState::Salaried,
        LaborState::Unemployed,
        LaborState::NotInLabourForce,
        LaborState::SickAbsent,
        LaborState::NotWorking,
        LaborState::Attrit,
    ];

    /// The three employment types used for rate cells.
    pub const EMPLOYMENT_TYPES: [LaborState; 3] = [
        LaborState::SelfEmployed,
        LaborState::Casual,
        LaborState::Salaried,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LaborState::SelfEmployed => "slf-emp",
            LaborState::Casual => "csl-emp",
            LaborState::Salaried => "sal-emp",
            LaborState::Unemployed => "unemp",
            LaborState::NotInLabourForce => "nopart",
            LaborState::SickAbsent => "sck-emp",
            LaborState::NotWorking => "nwrk",
            LaborState::Attrit => "attrit",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn codes(self) -> &'static [u8] {
        match self {
            LaborState::SelfEmployed => &[11, 12, 21],
            LaborState::Casual => &[41, 42, 51],
            LaborState::Salaried => &[31],
            LaborState::SickAbsent => &[61, 71],
            LaborState::NotWorking => &[62, 72],
            LaborState::Unemployed => &[81, 82],
            LaborState::NotInLabourForce => &[91, 92, 93, 94, 95, 97, 98, 99],
            LaborState::Attrit => &[],
        }
    }

    pub fn is_employed(self, dichotomy: EmpDichotomy) -> bool {
        match self {
            LaborState::SelfEmployed | LaborState::Casual | LaborState::Salaried => true,
            LaborState::SickAbsent | LaborState::NotWorking => dichotomy == EmpDichotomy::Table3,
            _ => false,
        }
    }
}

/// Maps a current-weekly-status code to its state.
pub fn recode_labor_state(status_code: u8) -> Result<LaborState> {
    Ok(match status_code {
        11 | 12 | 21 => LaborState::SelfEmployed,
        41 | 42 | 51 => LaborState::Casual,
        31 => LaborState::Salaried,
        61 | 71 => LaborState::SickAbsent,
        62 | 72 => LaborState::NotWorking,
        81 | 82 => LaborState::Unemployed,
        91..=95 | 97..=99 => LaborState::NotInLabourForce,
        other => return Err(Error::UnknownStatus(other)),
    })
}

impl fmt::Display for LaborState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LaborState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LaborState::ALL
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| Error::Data(format!("unknown labour state `{s}`")))
    }
}

impl From<LaborState> for String {
    fn from(value: LaborState) -> Self {
        value.label().to_string()
    }
}

impl TryFrom<String> for LaborState {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

/// Which states count as employment in the two-state job loss/gain models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmpDichotomy {
    /// Working plus "had work but did not work" (sck-emp, nwrk).
    #[default]
    Table3,
    /// Only slf-emp, csl-emp, sal-emp.
    Strict,
}

impl FromStr for EmpDichotomy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table3" => Ok(EmpDichotomy::Table3),
            "strict" => Ok(EmpDichotomy::Strict),
            other => Err(Error::Data(format!("unknown dichotomy `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_examples() {
        assert_eq!(recode_labor_state(31).unwrap(), LaborState::Salaried);
        assert_eq!(recode_labor_state(81).unwrap(), LaborState::Unemployed);
        assert_eq!(recode_labor_state(62).unwrap(), LaborState::NotWorking);
        assert!(matches!(recode_labor_state(96), Err(Error::UnknownStatus(96))));
        assert!(recode_labor_state(0).is_err());
    }

    #[test]
    fn code_lists_partition_the_known_codes() {
        let mut all: Vec<u8> = LaborState::OBSERVED
            .iter()
            .flat_map(|s| s.codes().iter().copied())
            .collect();
        all.sort_unstable();
        let mut known = STATUS_CODES.to_vec();
        known.sort_unstable();
        assert_eq!(all, known);
        for s in LaborState::OBSERVED {
            for &c in s.codes() {
                assert_eq!(recode_labor_state(c).unwrap(), s);
            }
        }
        assert!(LaborState::Attrit.codes().is_empty());
    }

    #[test]
    fn only_known_codes_recode() {
        for c in 0..=u8::MAX {
            assert_eq!(recode_labor_state(c).is_ok(), STATUS_CODES.contains(&c), "{c}");
        }
    }
}
