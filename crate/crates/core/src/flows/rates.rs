use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::error::Result;
use crate::microdata::{Sex, YearQuarter};
use crate::panel::{LaborState, Transition, VisitEntry};
use crate::table::{self, fmt_opt, RunMeta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellFamily {
    Industry,
    Region,
    RegionIndustry,
}

impl CellFamily {
    pub fn label(self) -> &'static str {
        match self {
            CellFamily::Industry => "industry",
            CellFamily::Region => "state",
            CellFamily::RegionIndustry => "state-industry",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellGroup {
    Industry(u8),
    Region(u16),
    RegionIndustry(u16, u8),
}

impl CellGroup {
    pub fn region(self) -> Option<u16> {
        match self {
            CellGroup::Region(r) | CellGroup::RegionIndustry(r, _) => Some(r),
            CellGroup::Industry(_) => None,
        }
    }

    pub fn industry(self) -> Option<u8> {
        match self {
            CellGroup::Industry(i) | CellGroup::RegionIndustry(_, i) => Some(i),
            CellGroup::Region(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub sex: Sex,
    pub emp_type: LaborState,
    pub group: CellGroup,
    /// The earlier quarter of the pair.
    pub quarter: YearQuarter,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateValues {
    pub entry: Option<f64>,
    pub exit: Option<f64>,
    pub gross: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCell {
    pub key: CellKey,
    pub mass_t: f64,
    pub mass_next: f64,
    pub entering: f64,
    pub exiting: f64,
    /// Mean of the two occupancies; the quantity thresholds apply to.
    pub weight_mass: f64,
    pub rates: RateValues,
}

/// Rates from occupancy masses at t and t+1 and the masses moving in and
/// out. Undefined when the mean occupancy is zero.
pub fn rate_values(mass_t: f64, mass_next: f64, entering: f64, exiting: f64) -> RateValues {
    let denom = 0.5 * (mass_t + mass_next);
    if denom <= 0.0 {
        return RateValues::default();
    }
    let entry = entering / denom;
    let exit = exiting / denom;
    RateValues {
        entry: Some(entry),
        exit: Some(exit),
        gross: Some(entry + exit),
    }
}

/// Rates for one cell from weighted membership at t and at t+1. Members
/// are keyed by any person identifier; mass entering is weighted at t+1,
/// mass exiting at t.
pub fn entry_exit_rates<K: Ord>(at_t: &BTreeMap<K, f64>, at_next: &BTreeMap<K, f64>) -> RateValues {
    let mass_t: f64 = at_t.values().sum();
    let mass_next: f64 = at_next.values().sum();
    let entering: f64 = at_next
        .iter()
        .filter(|(k, _)| !at_t.contains_key(k))
        .map(|(_, w)| w)
        .sum();
    let exiting: f64 = at_t
        .iter()
        .filter(|(k, _)| !at_next.contains_key(k))
        .map(|(_, w)| w)
        .sum();
    let r = rate_values(mass_t, mass_next, entering, exiting);
    if r.entry.is_none() {
        log::debug!("empty cell: rates undefined");
    }
    r
}

fn group_of(family: CellFamily, region: u16, v: &VisitEntry) -> Option<CellGroup> {
    match family {
        CellFamily::Region => Some(CellGroup::Region(region)),
        CellFamily::Industry => v.industry.map(CellGroup::Industry),
        CellFamily::RegionIndustry => v.industry.map(|i| CellGroup::RegionIndustry(region, i)),
    }
}

fn key_of(p: &Transition<'_>, family: CellFamily, v: &VisitEntry) -> Option<CellKey> {
    if !LaborState::EMPLOYMENT_TYPES.contains(&v.state) {
        return None;
    }
    Some(CellKey {
        sex: p.sex,
        emp_type: v.state,
        group: group_of(family, p.region, v)?,
        quarter: p.quarter(),
    })
}

#[derive(Default)]
struct Tally {
    mass_t: f64,
    mass_next: f64,
    entering: f64,
    exiting: f64,
}

/// Entry, exit and gross-flow rates for every cell of `family`, using only
/// persons observed in both quarters. Persons without an industry code
/// are left out of industry cells.
pub fn compute_rate_cells(pairs: &[Transition<'_>], family: CellFamily) -> Vec<RateCell> {
    let mut tallies: BTreeMap<CellKey, Tally> = BTreeMap::new();
    for p in pairs {
        let Some(to) = p.to else { continue };
        let before = key_of(p, family, p.from);
        let after = key_of(p, family, to);
        if let Some(k) = before {
            let t = tallies.entry(k).or_default();
            t.mass_t += p.from.weight;
            if after != before {
                t.exiting += p.from.weight;
            }
        }
        if let Some(k) = after {
            let t = tallies.entry(k).or_default();
            t.mass_next += to.weight;
            if after != before {
                t.entering += to.weight;
            }
        }
    }
    tallies
        .into_iter()
        .map(|(key, t)| {
            let rates = rate_values(t.mass_t, t.mass_next, t.entering, t.exiting);
            if rates.entry.is_none() {
                log::debug!("cell {key:?} has zero occupancy; rates omitted");
            }
            RateCell {
                key,
                mass_t: t.mass_t,
                mass_next: t.mass_next,
                entering: t.entering,
                exiting: t.exiting,
                weight_mass: 0.5 * (t.mass_t + t.mass_next),
                rates,
            }
        })
        .collect()
}

/// Minimum total sampling multiplier per cell, by sex. Cells must exceed
/// the threshold strictly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellThresholds {
    pub female: f64,
    pub male: f64,
    pub other: f64,
}

impl Default for CellThresholds {
    fn default() -> Self {
        Self {
            female: 5e7,
            male: 1e8,
            other: 1e8,
        }
    }
}

impl CellThresholds {
    pub fn for_sex(&self, sex: Sex) -> f64 {
        match sex {
            Sex::Female => self.female,
            Sex::Male => self.male,
            Sex::Other => self.other,
        }
    }
}

pub fn cell_filter(cells: Vec<RateCell>, thresholds: &CellThresholds) -> Vec<RateCell> {
    cells
        .into_iter()
        .filter(|c| c.weight_mass > thresholds.for_sex(c.key.sex))
        .collect()
}

pub const RATE_HEADER: [&str; 12] = [
    "sex", "emp_type", "family", "state", "industry", "quarter", "mass_t", "mass_next",
    "weight_mass", "entry_rate", "exit_rate", "gross_flow",
];

pub fn write_rate_cells<W: Write>(
    out: W,
    meta: Option<&RunMeta>,
    family: CellFamily,
    cells: &[RateCell],
) -> Result<()> {
    let rows = cells.iter().map(|c| {
        vec![
            c.key.sex.label().to_string(),
            c.key.emp_type.label().to_string(),
            family.label().to_string(),
            c.key.group.region().map(|r| r.to_string()).unwrap_or_default(),
            c.key.group.industry().map(|i| format!("{i:02}")).unwrap_or_default(),
            c.key.quarter.to_string(),
            c.mass_t.to_string(),
            c.mass_next.to_string(),
            c.weight_mass.to_string(),
            fmt_opt(c.rates.entry),
            fmt_opt(c.rates.exit),
            fmt_opt(c.rates.gross),
        ]
    });
    table::write_rows(out, meta, &RATE_HEADER, rows)
}

/// Cells present in `cells`, grouped by their group and averaged over
/// quarters: (sex, type, group) → (mean entry, mean exit).
pub fn average_over_quarters(cells: &[RateCell]) -> BTreeMap<(Sex, LaborState, CellGroup), (f64, f64)> {
    let mut acc: BTreeMap<(Sex, LaborState, CellGroup), (f64, f64, usize)> = BTreeMap::new();
    for c in cells {
        if let (Some(e), Some(x)) = (c.rates.entry, c.rates.exit) {
            let a = acc
                .entry((c.key.sex, c.key.emp_type, c.key.group))
                .or_insert((0.0, 0.0, 0));
            a.0 += e;
            a.1 += x;
            a.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, (e, x, n))| (k, (e / n as f64, x / n as f64)))
        .collect()
}

/// Distinct quarters present among rate cells.
pub fn quarters(cells: &[RateCell]) -> BTreeSet<YearQuarter> {
    cells.iter().map(|c| c.key.quarter).collect()
}
