//! Household and person consistency checks across visits, and attrition
//! tables.
//!
//! A household fails when, over any pair of its visits, religion or social
//! group changes, the reported household size moves by more than the size
//! tolerance, or any member's sex, relation to head, or age (beyond the age
//! tolerance) changes. Failing households are removed whole.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::microdata::{HouseholdId, PanelLabel, PanelSchedule, PersonVisit, YearQuarter};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidationRules {
    pub max_hh_size_change: u16,
    pub max_age_change: u16,
}

impl Default for ValidationRules {
    fn default() -> Self {
        Self {
            max_hh_size_change: 3,
            max_age_change: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    ReligionOrSocialGroup,
    HouseholdSize,
    SexOrRelation,
    AgeDrift,
}

impl Rule {
    pub const ALL: [Rule; 4] = [
        Rule::ReligionOrSocialGroup,
        Rule::HouseholdSize,
        Rule::SexOrRelation,
        Rule::AgeDrift,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Rule::ReligionOrSocialGroup => "R1",
            Rule::HouseholdSize => "R2",
            Rule::SexOrRelation => "R3",
            Rule::AgeDrift => "R4",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::ReligionOrSocialGroup => "religion-or-social-group",
            Rule::HouseholdSize => "household-size",
            Rule::SexOrRelation => "sex-or-relation",
            Rule::AgeDrift => "age-drift",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id(), self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub household: HouseholdId,
    pub rule: Rule,
    pub detail: String,
}

/// Reported household size differs from the members present at a visit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeWarning {
    pub household: HouseholdId,
    pub quarter: YearQuarter,
    pub reported: u16,
    pub members: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub households_checked: usize,
    /// Sorted by household, then rule.
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<SizeWarning>,
}

impl ValidationReport {
    pub fn rejected(&self) -> BTreeSet<HouseholdId> {
        self.rejections.iter().map(|r| r.household.clone()).collect()
    }

    pub fn households_removed(&self) -> usize {
        self.rejected().len()
    }

    /// Number of households failing each rule.
    pub fn counts(&self) -> BTreeMap<Rule, usize> {
        let mut counts: BTreeMap<Rule, usize> = Rule::ALL.iter().map(|r| (*r, 0)).collect();
        for r in &self.rejections {
            *counts.entry(r.rule).or_default() += 1;
        }
        counts
    }

    pub fn is_clean(&self) -> bool {
        self.rejections.is_empty()
    }
}

/// Groups records by panel-qualified household, in key order.
pub fn group_households(records: &[PersonVisit]) -> BTreeMap<HouseholdId, Vec<usize>> {
    let mut groups: BTreeMap<HouseholdId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.household_id()).or_default().push(i);
    }
    groups
}

fn spread<T: Ord + Copy>(values: impl Iterator<Item = T>) -> Option<(T, T)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Checks one household's visits. Returns at most one rejection per rule.
pub fn check_household(
    id: &HouseholdId,
    visits: &[&PersonVisit],
    rules: &ValidationRules,
) -> (Vec<Rejection>, Vec<SizeWarning>) {
    let mut out = Vec::new();
    let reject = |rule: Rule, detail: String| Rejection {
        household: id.clone(),
        rule,
        detail,
    };

    let religions: BTreeSet<u8> = visits.iter().map(|r| r.religion).collect();
    let groups: BTreeSet<u8> = visits.iter().map(|r| r.social_group).collect();
    if religions.len() > 1 || groups.len() > 1 {
        out.push(reject(
            Rule::ReligionOrSocialGroup,
            format!("religion {religions:?} social_group {groups:?}"),
        ));
    }

    if let Some((lo, hi)) = spread(visits.iter().map(|r| r.hh_size)) {
        if hi - lo > rules.max_hh_size_change {
            out.push(reject(Rule::HouseholdSize, format!("hh_size {lo}..{hi}")));
        }
    }

    let mut persons: BTreeMap<u16, Vec<&PersonVisit>> = BTreeMap::new();
    for r in visits {
        persons.entry(r.person_no).or_default().push(r);
    }
    let mut sex_rel = None;
    let mut age = None;
    for (pno, rs) in &persons {
        if sex_rel.is_none() {
            let sexes: BTreeSet<u8> = rs.iter().map(|r| r.sex.code()).collect();
            let rels: BTreeSet<u8> = rs.iter().map(|r| r.relation_to_head).collect();
            if sexes.len() > 1 || rels.len() > 1 {
                sex_rel = Some(format!("person {pno}: sex {sexes:?} relation {rels:?}"));
            }
        }
        if age.is_none() {
            if let Some((lo, hi)) = spread(rs.iter().map(|r| r.age)) {
                if hi - lo > rules.max_age_change {
                    age = Some(format!("person {pno}: age {lo}..{hi}"));
                }
            }
        }
    }
    if let Some(d) = sex_rel {
        out.push(reject(Rule::SexOrRelation, d));
    }
    if let Some(d) = age {
        out.push(reject(Rule::AgeDrift, d));
    }

    let mut per_visit: BTreeMap<(YearQuarter, u8), (u16, BTreeSet<u16>)> = BTreeMap::new();
    for r in visits {
        let e = per_visit
            .entry((r.year_quarter(), r.visit_no))
            .or_insert((r.hh_size, BTreeSet::new()));
        e.1.insert(r.person_no);
    }
    let warnings = per_visit
        .into_iter()
        .filter(|(_, (reported, members))| usize::from(*reported) != members.len())
        .map(|((quarter, _), (reported, members))| SizeWarning {
            household: id.clone(),
            quarter,
            reported,
            members: members.len(),
        })
        .collect();
    (out, warnings)
}

/// Applies the household rules, dropping every record of failing
/// households. Clean records keep their input order.
pub fn validate_households(
    records: Vec<PersonVisit>,
    rules: &ValidationRules,
) -> (Vec<PersonVisit>, ValidationReport) {
    let groups: Vec<(HouseholdId, Vec<usize>)> = group_households(&records).into_iter().collect();
    let results: Vec<(Vec<Rejection>, Vec<SizeWarning>)> = groups
        .par_iter()
        .map(|(id, idx)| {
            let visits: Vec<&PersonVisit> = idx.iter().map(|&i| &records[i]).collect();
            check_household(id, &visits, rules)
        })
        .collect();

    let mut report = ValidationReport {
        households_checked: groups.len(),
        ..Default::default()
    };
    for (rej, warn) in results {
        report.rejections.extend(rej);
        report.warnings.extend(warn);
    }
    if !report.warnings.is_empty() {
        log::warn!(
            "{} household visits report a size different from the members listed",
            report.warnings.len()
        );
    }
    let rejected = report.rejected();
    let clean = records
        .into_iter()
        .filter(|r| rejected.is_empty() || !rejected.contains(&r.household_id()))
        .collect();
    (clean, report)
}

/// Percentage of first-visit households missing at each later visit, by
/// panel. Households marked unlinked count under their base panel. Cells
/// exist only for visits inside the study window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttritionTable {
    pub cells: BTreeMap<(PanelLabel, u8), f64>,
    pub first_visit_households: BTreeMap<PanelLabel, usize>,
}

impl AttritionTable {
    pub fn get(&self, panel: &str, visit: u8) -> Option<f64> {
        self.cells.get(&(PanelLabel::new(panel), visit)).copied()
    }

    /// Panels with at least one cell, in label order.
    pub fn panels(&self) -> Vec<PanelLabel> {
        let set: BTreeSet<PanelLabel> = self.cells.keys().map(|(p, _)| p.clone()).collect();
        set.into_iter().collect()
    }

    /// Visit-by-panel layout; absent cells are empty strings.
    pub fn to_rows(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let panels = self.panels();
        let mut headers = vec!["visit".to_string()];
        headers.extend(panels.iter().map(|p| p.0.clone()));
        let rows = (2..=4u8)
            .map(|v| {
                let mut row = vec![v.to_string()];
                row.extend(panels.iter().map(|p| {
                    self.cells
                        .get(&(p.clone(), v))
                        .map(|x| format!("{x:.1}"))
                        .unwrap_or_default()
                }));
                row
            })
            .collect();
        (headers, rows)
    }
}

pub fn attrition_table(
    records: &[PersonVisit],
    schedule: &PanelSchedule,
    window: (YearQuarter, YearQuarter),
) -> AttritionTable {
    let mut visits: BTreeMap<HouseholdId, BTreeSet<u8>> = BTreeMap::new();
    for r in records {
        visits.entry(r.household_id()).or_default().insert(r.visit_no);
    }
    let mut by_panel: BTreeMap<PanelLabel, Vec<&BTreeSet<u8>>> = BTreeMap::new();
    for (id, v) in &visits {
        if v.contains(&1) {
            by_panel.entry(id.panel.base()).or_default().push(v);
        }
    }
    let mut table = AttritionTable::default();
    for (panel, hh) in by_panel {
        let n = hh.len();
        table.first_visit_households.insert(panel.clone(), n);
        for v in 2..=4u8 {
            let Some(q) = schedule.quarter_of(&panel, v) else {
                continue;
            };
            if q < window.0 || q > window.1 {
                continue;
            }
            let missing = hh.iter().filter(|s| !s.contains(&v)).count();
            table
                .cells
                .insert((panel.clone(), v), 100.0 * missing as f64 / n as f64);
        }
    }
    table
}
