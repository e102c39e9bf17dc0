//! Rotating panel schedule: a new panel starts every quarter and is visited
//! in four consecutive quarters.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::quarter::{SurveyYear, YearQuarter};
use crate::error::{Error, Result};

pub const VISITS_PER_PANEL: u8 = 4;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PanelLabel(pub String);

impl PanelLabel {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Marks households that could not be carried into the next numbering
    /// scheme, keeping them apart from that scheme's households.
    pub fn unlinked(&self, numbering: SurveyYear) -> Self {
        Self(format!("{}{UNLINKED_SEP}{numbering}", self.0))
    }

    /// The schedule label, without any unlinked marker.
    pub fn base(&self) -> PanelLabel {
        match self.0.split_once(UNLINKED_SEP) {
            Some((b, _)) => PanelLabel::new(b),
            None => self.clone(),
        }
    }
}

pub const UNLINKED_SEP: char = '@';

impl fmt::Display for PanelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanelSchedule {
    panels: BTreeMap<PanelLabel, YearQuarter>,
    by_cell: HashMap<(YearQuarter, u8), PanelLabel>,
}

impl PanelSchedule {
    /// Builds a schedule from panel start quarters. Starts must be distinct
    /// and occupy a run of consecutive quarters.
    pub fn from_starts<I, L>(starts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (L, YearQuarter)>,
        L: Into<String>,
    {
        let mut panels = BTreeMap::new();
        let mut by_cell = HashMap::new();
        let mut start_index: Vec<i64> = Vec::new();
        for (label, start) in starts {
            let label = PanelLabel(label.into());
            if panels.insert(label.clone(), start).is_some() {
                return Err(Error::Schedule(format!("panel {label} listed twice")));
            }
            for visit in 1..=VISITS_PER_PANEL {
                let cell = (start.offset(i64::from(visit) - 1), visit);
                if let Some(other) = by_cell.insert(cell, label.clone()) {
                    return Err(Error::Schedule(format!(
                        "panels {other} and {label} both start in {start}"
                    )));
                }
            }
            start_index.push(start.index());
        }
        if panels.is_empty() {
            return Err(Error::Schedule("no panels".into()));
        }
        start_index.sort_unstable();
        if start_index.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Schedule(
                "panel starts must cover consecutive quarters, one new panel each".into(),
            ));
        }
        Ok(Self { panels, by_cell })
    }

    /// The urban schedule of the labour survey: frame 1 panels P11..P18 from
    /// 2017-Q3, frame 2 panels P21..P28 from 2019-Q3.
    pub fn plfs_urban() -> Self {
        let first = YearQuarter::new(2017, 3).expect("valid quarter");
        let labels = (1..=8)
            .map(|j| format!("P1{j}"))
            .chain((1..=8).map(|j| format!("P2{j}")));
        Self::from_starts(labels.enumerate().map(|(i, l)| (l, first.offset(i as i64))))
            .expect("static schedule is well formed")
    }

    /// Parses `LABEL START` lines, e.g. `P11 2017-Q3`. Blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut starts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(label), Some(start), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Schedule(format!("line {}: expected `LABEL START`", n + 1)));
            };
            starts.push((label.to_string(), start.parse()?));
        }
        Self::from_starts(starts)
    }

    pub fn to_text(&self) -> String {
        let mut by_start: Vec<_> = self.panels.iter().collect();
        by_start.sort_by_key(|(_, start)| **start);
        by_start
            .into_iter()
            .map(|(label, start)| format!("{label} {start}\n"))
            .collect()
    }

    /// The unique panel visiting in `quarter` with visit number `visit`.
    pub fn infer_panel(&self, quarter: YearQuarter, visit: u8) -> Result<&PanelLabel> {
        self.by_cell
            .get(&(quarter, visit))
            .ok_or_else(|| Error::OffSchedule {
                quarter: quarter.to_string(),
                visit,
            })
    }

    pub fn start(&self, panel: &PanelLabel) -> Option<YearQuarter> {
        self.panels.get(panel).copied()
    }

    pub fn quarter_of(&self, panel: &PanelLabel, visit: u8) -> Option<YearQuarter> {
        if !(1..=VISITS_PER_PANEL).contains(&visit) {
            return None;
        }
        self.start(panel).map(|s| s.offset(i64::from(visit) - 1))
    }

    pub fn visits(&self, panel: &PanelLabel) -> Vec<(YearQuarter, u8)> {
        (1..=VISITS_PER_PANEL)
            .filter_map(|v| self.quarter_of(panel, v).map(|q| (q, v)))
            .collect()
    }

    pub fn panels(&self) -> impl Iterator<Item = (&PanelLabel, YearQuarter)> {
        self.panels.iter().map(|(l, s)| (l, *s))
    }

    /// Whether `panel` still has a scheduled visit after `quarter`.
    pub fn continues_after(&self, panel: &PanelLabel, quarter: YearQuarter) -> bool {
        self.quarter_of(panel, VISITS_PER_PANEL)
            .is_some_and(|last| last > quarter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yq(s: &str) -> YearQuarter {
        s.parse().unwrap()
    }

    #[test]
    fn infers_panels_from_staggered_pattern() {
        let s = PanelSchedule::plfs_urban();
        assert_eq!(s.infer_panel(yq("2017-Q3"), 1).unwrap().as_str(), "P11");
        assert_eq!(s.infer_panel(yq("2018-Q2"), 4).unwrap().as_str(), "P11");
        assert_eq!(s.infer_panel(yq("2019-Q4"), 1).unwrap().as_str(), "P22");
        assert_eq!(s.infer_panel(yq("2019-Q3"), 1).unwrap().as_str(), "P21");
        assert_eq!(s.infer_panel(yq("2019-Q2"), 1).unwrap().as_str(), "P18");
        assert!(s.infer_panel(yq("2017-Q3"), 2).is_err());
    }

    #[test]
    fn each_quarter_visit_cell_has_one_panel() {
        let s = PanelSchedule::plfs_urban();
        let mut seen = std::collections::HashSet::new();
        for (label, _) in s.panels() {
            let visits = s.visits(label);
            assert_eq!(visits.len(), 4);
            for w in visits.windows(2) {
                assert_eq!(w[0].0.next(), w[1].0);
            }
            for cell in visits {
                assert!(seen.insert(cell));
                assert_eq!(s.infer_panel(cell.0, cell.1).unwrap(), label);
            }
        }
    }

    #[test]
    fn rejects_gaps_and_duplicates() {
        let a = yq("2017-Q3");
        assert!(PanelSchedule::from_starts([("A", a), ("B", a)]).is_err());
        assert!(PanelSchedule::from_starts([("A", a), ("B", a.offset(2))]).is_err());
        assert!(PanelSchedule::from_starts(Vec::<(String, YearQuarter)>::new()).is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = PanelSchedule::plfs_urban();
        assert_eq!(PanelSchedule::parse(&s.to_text()).unwrap(), s);
    }
}
