//! Calendar quarters and the July–June survey cycle.
//!
//! Survey years run from July to June, so cycle quarter 1 of survey year
//! `2017-18` is calendar quarter `2017-Q3` and cycle quarter 4 is `2018-Q2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A calendar quarter such as `2017-Q3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearQuarter {
    year: u16,
    quarter: u8,
}

impl YearQuarter {
    pub fn new(year: u16, quarter: u8) -> Result<Self, Error> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Data(format!("quarter {quarter} outside 1..=4")));
        }
        Ok(Self { year, quarter })
    }

    pub fn year(self) -> u16 {
        self.year
    }

    pub fn quarter(self) -> u8 {
        self.quarter
    }

    /// Linear index, consecutive quarters differ by one.
    pub fn index(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.quarter) - 1
    }

    pub fn from_index(index: i64) -> Self {
        let year = index.div_euclid(4);
        let quarter = index.rem_euclid(4) + 1;
        Self {
            year: year as u16,
            quarter: quarter as u8,
        }
    }

    pub fn offset(self, quarters: i64) -> Self {
        Self::from_index(self.index() + quarters)
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    pub fn survey_year(self) -> SurveyYear {
        // Q3 and Q4 open a survey year; Q1 and Q2 close the previous one.
        if self.quarter >= 3 {
            SurveyYear(self.year)
        } else {
            SurveyYear(self.year - 1)
        }
    }

    /// Position within the July–June cycle (1..=4).
    pub fn cycle_quarter(self) -> u8 {
        (self.index() - self.survey_year().first_quarter().index()) as u8 + 1
    }
}

impl fmt::Display for YearQuarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.quarter)
    }
}

impl FromStr for YearQuarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Data(format!("malformed quarter `{s}`, expected YYYY-Qn"));
        let (year, q) = s.trim().split_once("-Q").ok_or_else(bad)?;
        let year = year.parse().map_err(|_| bad())?;
        let quarter = q.parse().map_err(|_| bad())?;
        Self::new(year, quarter)
    }
}

impl TryFrom<String> for YearQuarter {
    type Error = Error;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<YearQuarter> for String {
    fn from(value: YearQuarter) -> Self {
        value.to_string()
    }
}

/// A July–June survey year, identified by the calendar year it starts in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SurveyYear(pub u16);

impl SurveyYear {
    pub fn start(self) -> u16 {
        self.0
    }

    pub fn first_quarter(self) -> YearQuarter {
        YearQuarter {
            year: self.0,
            quarter: 3,
        }
    }

    pub fn last_quarter(self) -> YearQuarter {
        self.first_quarter().offset(3)
    }

    /// Calendar quarter of cycle quarter `q`. Out-of-range `q` is resolved
    /// arithmetically (cycle quarter 5 is the next year's first quarter).
    pub fn calendar_quarter(self, q: u8) -> YearQuarter {
        self.first_quarter().offset(i64::from(q) - 1)
    }

    pub fn contains(self, yq: YearQuarter) -> bool {
        yq.survey_year() == self
    }

    pub fn next(self) -> Self {
        SurveyYear(self.0 + 1)
    }
}

impl fmt::Display for SurveyYear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}", self.0, (self.0 + 1) % 100)
    }
}

impl FromStr for SurveyYear {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || Error::Data(format!("malformed survey year `{s}`, expected YYYY-YY"));
        let (start, end) = match s.split_once('-') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let start: u16 = start.parse().map_err(|_| bad())?;
        if let Some(end) = end {
            let end: u16 = end.parse().map_err(|_| bad())?;
            if end != (start + 1) % 100 && end != start + 1 {
                return Err(bad());
            }
        }
        Ok(SurveyYear(start))
    }
}

impl TryFrom<String> for SurveyYear {
    type Error = Error;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<SurveyYear> for String {
    fn from(value: SurveyYear) -> Self {
        value.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_maps_july_to_june() {
        let y = SurveyYear(2017);
        assert_eq!(y.calendar_quarter(1).to_string(), "2017-Q3");
        assert_eq!(y.calendar_quarter(2).to_string(), "2017-Q4");
        assert_eq!(y.calendar_quarter(3).to_string(), "2018-Q1");
        assert_eq!(y.calendar_quarter(4).to_string(), "2018-Q2");
        assert_eq!(y.to_string(), "2017-18");
    }

    #[test]
    fn survey_year_round_trip() {
        for idx in 8000..8100 {
            let yq = YearQuarter::from_index(idx);
            let sy = yq.survey_year();
            assert_eq!(sy.calendar_quarter(yq.cycle_quarter()), yq);
        }
        assert_eq!("2019-20".parse::<SurveyYear>().unwrap(), SurveyYear(2019));
        assert_eq!("1999-00".parse::<SurveyYear>().unwrap(), SurveyYear(1999));
        assert!("2019-22".parse::<SurveyYear>().is_err());
    }

    #[test]
    fn parse_and_order() {
        let a: YearQuarter = "2017-Q4".parse().unwrap();
        let b: YearQuarter = "2018-Q1".parse().unwrap();
        assert!(a < b);
        assert_eq!(a.next(), b);
        assert!("2018-Q5".parse::<YearQuarter>().is_err());
        assert!("2018Q1".parse::<YearQuarter>().is_err());
    }
}
