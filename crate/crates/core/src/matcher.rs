//! Cross-year FSU renumbering inference.
//!
//! Within each (state, district), every (old FSU, new FSU) pair is scored by
//! the number of households that sit at the same sub-block / stratum /
//! household-number slot in both years and agree on panel, religion, social
//! group and on each member's sex, relation to head and education. Only
//! households larger than two count. Each old FSU takes its top-scoring new
//! FSU; a new FSU chosen by several old FSUs, or an old FSU whose top score
//! is shared, is dropped as a conflict. Old FSUs without an agreeing
//! household are unmatched and treated as attrited.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::microdata::{
    Fsu, HouseholdId, PanelLabel, PanelSchedule, PersonVisit, Sex, YearQuarter,
};
use crate::table::{self, RunMeta};
use crate::validate::{validate_households, ValidationReport, ValidationRules};

pub type DistrictKey = (u16, u16);
/// (sub_block, stratum2, hh_no)
pub type Slot = (u8, u8, u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MemberTraits {
    pub sex: Sex,
    pub relation: u8,
    pub education: u8,
}

/// A household at one visit, as used for scoring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HouseholdSnapshot {
    pub panel: PanelLabel,
    pub religion: u8,
    pub social_group: u8,
    pub hh_size: u16,
    pub members: BTreeMap<u16, MemberTraits>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FsuContents {
    pub households: BTreeMap<(Slot, PanelLabel), HouseholdSnapshot>,
}

/// How members of two household snapshots are put in correspondence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MemberAlignment {
    /// Members with the same person number must agree; at least one shared.
    #[default]
    PersonNo,
    /// The multisets of member trait tuples must be equal.
    Multiset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchConfig {
    /// Households must be strictly larger than this to contribute.
    pub min_household_size_exclusive: u16,
    /// Smallest score a best match may have.
    pub min_score: u32,
    pub alignment: MemberAlignment,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            min_household_size_exclusive: 2,
            min_score: 1,
            alignment: MemberAlignment::PersonNo,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotVisit {
    First,
    Last,
}

/// Per-district FSU contents, each household taken at its first or last
/// visit in `records`.
pub fn snapshots(
    records: &[PersonVisit],
    which: SnapshotVisit,
) -> BTreeMap<DistrictKey, BTreeMap<Fsu, FsuContents>> {
    let mut chosen: BTreeMap<HouseholdId, (YearQuarter, u8)> = BTreeMap::new();
    for r in records {
        let at = (r.year_quarter(), r.visit_no);
        chosen
            .entry(r.household_id())
            .and_modify(|cur| {
                let better = match which {
                    SnapshotVisit::First => at < *cur,
                    SnapshotVisit::Last => at > *cur,
                };
                if better {
                    *cur = at;
                }
            })
            .or_insert(at);
    }

    let mut out: BTreeMap<DistrictKey, BTreeMap<Fsu, FsuContents>> = BTreeMap::new();
    let mut sorted: Vec<&PersonVisit> = records.iter().collect();
    sorted.sort_by_key(|r| (r.household_id(), r.person_no));
    for r in sorted {
        let id = r.household_id();
        if chosen[&id] != (r.year_quarter(), r.visit_no) {
            continue;
        }
        let slot = (r.sub_block, r.stratum2, r.hh_no);
        let hh = out
            .entry(r.district_key())
            .or_default()
            .entry(r.fsu)
            .or_default()
            .households
            .entry((slot, id.panel.clone()))
            .or_insert_with(|| HouseholdSnapshot {
                panel: id.panel.clone(),
                religion: r.religion,
                social_group: r.social_group,
                hh_size: r.hh_size,
                members: BTreeMap::new(),
            });
        hh.members.insert(
            r.person_no,
            MemberTraits {
                sex: r.sex,
                relation: r.relation_to_head,
                education: r.education,
            },
        );
    }
    out
}

fn members_agree(a: &HouseholdSnapshot, b: &HouseholdSnapshot, alignment: MemberAlignment) -> bool {
    match alignment {
        MemberAlignment::PersonNo => {
            let mut shared = 0;
            for (pno, ta) in &a.members {
                if let Some(tb) = b.members.get(pno) {
                    if ta != tb {
                        return false;
                    }
                    shared += 1;
                }
            }
            shared > 0
        }
        MemberAlignment::Multiset => {
            let mut ma: Vec<_> = a.members.values().collect();
            let mut mb: Vec<_> = b.members.values().collect();
            ma.sort();
            mb.sort();
            ma == mb
        }
    }
}

/// Whether two snapshots of the same slot count as the same household.
pub fn households_agree(
    old: &HouseholdSnapshot,
    new: &HouseholdSnapshot,
    config: &MatchConfig,
) -> bool {
    old.hh_size > config.min_household_size_exclusive
        && new.hh_size > config.min_household_size_exclusive
        && old.panel == new.panel
        && old.religion == new.religion
        && old.social_group == new.social_group
        && members_agree(old, new, config.alignment)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateScore {
    pub district: DistrictKey,
    pub fsu_old: Fsu,
    pub fsu_new: Fsu,
    pub score: u32,
    pub eligible_households: u32,
}

pub fn score_candidate(
    district: DistrictKey,
    fsu_old: Fsu,
    old: &FsuContents,
    fsu_new: Fsu,
    new: &FsuContents,
    config: &MatchConfig,
) -> CandidateScore {
    let mut score = 0;
    let mut eligible = 0;
    for (key, h) in &old.households {
        if h.hh_size <= config.min_household_size_exclusive {
            continue;
        }
        eligible += 1;
        if let Some(n) = new.households.get(key) {
            if households_agree(h, n, config) {
                score += 1;
            }
        }
    }
    CandidateScore {
        district,
        fsu_old,
        fsu_new,
        score,
        eligible_households: eligible,
    }
}

/// Scores the full cross product of old and new FSUs within each district.
/// Output is ordered by district, old FSU, new FSU.
pub fn score_all(
    old: &BTreeMap<DistrictKey, BTreeMap<Fsu, FsuContents>>,
    new: &BTreeMap<DistrictKey, BTreeMap<Fsu, FsuContents>>,
    config: &MatchConfig,
) -> Vec<CandidateScore> {
    let districts: Vec<(&DistrictKey, &BTreeMap<Fsu, FsuContents>)> = old.iter().collect();
    let per_district: Vec<Vec<CandidateScore>> = districts
        .par_iter()
        .map(|(d, olds)| {
            let Some(news) = new.get(d) else {
                return Vec::new();
            };
            let mut out = Vec::with_capacity(olds.len() * news.len());
            for (fo, co) in olds.iter() {
                for (fnew, cn) in news {
                    out.push(score_candidate(**d, *fo, co, *fnew, cn, config));
                }
            }
            out
        })
        .collect();
    per_district.into_iter().flatten().collect()
}

/// Old FSUs whose top choices were ambiguous, together with the new FSUs
/// involved. Old and new sets form one connected cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConflictSet {
    /// Old FSU and its best score.
    pub olds: BTreeMap<Fsu, u32>,
    pub news: BTreeSet<Fsu>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FsuMapping {
    /// old → (new, score)
    pub accepted: BTreeMap<Fsu, (Fsu, u32)>,
    pub conflicts: Vec<ConflictSet>,
    /// old → best score (below the acceptance threshold)
    pub unmatched: BTreeMap<Fsu, u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MappingStatus {
    Accepted,
    Conflict,
    Unmatched,
}

impl MappingStatus {
    pub fn label(self) -> &'static str {
        match self {
            MappingStatus::Accepted => "accepted",
            MappingStatus::Conflict => "conflict",
            MappingStatus::Unmatched => "unmatched",
        }
    }
}

/// One line of the mapping file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingRow {
    pub fsu_old: Fsu,
    pub fsu_new: Option<Fsu>,
    pub score: u32,
    pub status: MappingStatus,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Clusters ambiguous (old, new) edges into connected conflict sets.
fn cluster_conflicts(edges: &[(Fsu, Fsu)], best: &BTreeMap<Fsu, u32>) -> Vec<ConflictSet> {
    let olds: BTreeSet<Fsu> = edges.iter().map(|e| e.0).collect();
    let news: BTreeSet<Fsu> = edges.iter().map(|e| e.1).collect();
    let old_ix: BTreeMap<Fsu, usize> = olds.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let new_ix: BTreeMap<Fsu, usize> = news
        .iter()
        .enumerate()
        .map(|(i, f)| (*f, i + olds.len()))
        .collect();
    let mut uf = UnionFind::new(olds.len() + news.len());
    for (o, n) in edges {
        uf.union(old_ix[o], new_ix[n]);
    }
    let mut sets: BTreeMap<usize, ConflictSet> = BTreeMap::new();
    for o in &olds {
        let root = uf.find(old_ix[o]);
        sets.entry(root)
            .or_insert_with(|| ConflictSet {
                olds: BTreeMap::new(),
                news: BTreeSet::new(),
            })
            .olds
            .insert(*o, best.get(o).copied().unwrap_or(0));
    }
    for n in &news {
        let root = uf.find(new_ix[n]);
        if let Some(s) = sets.get_mut(&root) {
            s.news.insert(*n);
        }
    }
    let mut out: Vec<ConflictSet> = sets.into_values().collect();
    out.sort_by_key(|s| *s.olds.keys().next().expect("non-empty"));
    out
}

/// Selects best matches from candidate scores. `old_fsus` lists every old
/// FSU to be placed, including those without any candidate.
pub fn infer_mapping(
    scores: &[CandidateScore],
    old_fsus: &BTreeSet<Fsu>,
    config: &MatchConfig,
) -> FsuMapping {
    let mut by_old: BTreeMap<Fsu, Vec<&CandidateScore>> = BTreeMap::new();
    for s in scores {
        by_old.entry(s.fsu_old).or_default().push(s);
    }

    let mut best_score: BTreeMap<Fsu, u32> = BTreeMap::new();
    let mut unmatched = BTreeMap::new();
    let mut ambiguous: Vec<(Fsu, Fsu)> = Vec::new();
    // (district, new) → old FSUs choosing it uniquely
    let mut chosen: BTreeMap<(DistrictKey, Fsu), Vec<(Fsu, u32)>> = BTreeMap::new();

    for old in old_fsus {
        let mut cands: Vec<&CandidateScore> = by_old.get(old).cloned().unwrap_or_default();
        cands.sort_by(|a, b| b.score.cmp(&a.score).then(a.fsu_new.cmp(&b.fsu_new)));
        let top = cands.first().map_or(0, |c| c.score);
        best_score.insert(*old, top);
        if top < config.min_score.max(1) {
            unmatched.insert(*old, top);
            continue;
        }
        let tied: Vec<&CandidateScore> = cands.iter().take_while(|c| c.score == top).copied().collect();
        if tied.len() > 1 {
            ambiguous.extend(tied.iter().map(|c| (*old, c.fsu_new)));
        } else {
            let c = tied[0];
            chosen
                .entry((c.district, c.fsu_new))
                .or_default()
                .push((*old, top));
        }
    }

    let mut accepted = BTreeMap::new();
    for ((_, new), olds) in chosen {
        if olds.len() == 1 {
            accepted.insert(olds[0].0, (new, olds[0].1));
        } else {
            ambiguous.extend(olds.iter().map(|(o, _)| (*o, new)));
        }
    }
    ambiguous.sort_unstable();
    FsuMapping {
        accepted,
        conflicts: cluster_conflicts(&ambiguous, &best_score),
        unmatched,
    }
}

impl FsuMapping {
    pub fn conflicted_olds(&self) -> BTreeSet<Fsu> {
        self.conflicts
            .iter()
            .flat_map(|c| c.olds.keys().copied())
            .collect()
    }

    pub fn is_injective(&self) -> bool {
        let news: BTreeSet<Fsu> = self.accepted.values().map(|v| v.0).collect();
        news.len() == self.accepted.len()
    }

    /// Mapping-file rows ordered by old FSU, then new FSU.
    pub fn rows(&self) -> Vec<MappingRow> {
        let mut rows: Vec<MappingRow> = self
            .accepted
            .iter()
            .map(|(o, (n, s))| MappingRow {
                fsu_old: *o,
                fsu_new: Some(*n),
                score: *s,
                status: MappingStatus::Accepted,
            })
            .collect();
        for c in &self.conflicts {
            for (o, s) in &c.olds {
                for n in &c.news {
                    rows.push(MappingRow {
                        fsu_old: *o,
                        fsu_new: Some(*n),
                        score: *s,
                        status: MappingStatus::Conflict,
                    });
                }
            }
        }
        rows.extend(self.unmatched.iter().map(|(o, s)| MappingRow {
            fsu_old: *o,
            fsu_new: None,
            score: *s,
            status: MappingStatus::Unmatched,
        }));
        rows.sort_by_key(|r| (r.fsu_old, r.fsu_new));
        rows
    }

    pub fn from_rows(rows: &[MappingRow]) -> Result<Self> {
        let mut m = FsuMapping::default();
        let mut edges = Vec::new();
        let mut best = BTreeMap::new();
        for r in rows {
            match (r.status, r.fsu_new) {
                (MappingStatus::Accepted, Some(n)) => {
                    if m.accepted.insert(r.fsu_old, (n, r.score)).is_some() {
                        return Err(Error::Data(format!("FSU {} accepted twice", r.fsu_old)));
                    }
                }
                (MappingStatus::Conflict, Some(n)) => {
                    edges.push((r.fsu_old, n));
                    best.insert(r.fsu_old, r.score);
                }
                (MappingStatus::Unmatched, None) => {
                    m.unmatched.insert(r.fsu_old, r.score);
                }
                _ => {
                    return Err(Error::Data(format!(
                        "mapping row for FSU {} has inconsistent status/new FSU",
                        r.fsu_old
                    )))
                }
            }
        }
        m.conflicts = cluster_conflicts(&edges, &best);
        if !m.is_injective() {
            return Err(Error::Data("accepted mapping is not one-to-one".into()));
        }
        Ok(m)
    }

    pub fn write<W: Write>(&self, out: W, meta: Option<&RunMeta>) -> Result<()> {
        table::write_rows(
            out,
            meta,
            &["fsu_old", "fsu_new", "score", "status"],
            self.rows().into_iter().map(|r| {
                vec![
                    r.fsu_old.to_string(),
                    r.fsu_new.map(|f| f.to_string()).unwrap_or_default(),
                    r.score.to_string(),
                    r.status.label().to_string(),
                ]
            }),
        )
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let (headers, rows) = table::read_rows(input)?;
        if headers != ["fsu_old", "fsu_new", "score", "status"] {
            return Err(Error::Data(format!("unexpected mapping header {headers:?}")));
        }
        let parse_fsu = |s: &str| {
            s.parse::<u32>()
                .map(Fsu)
                .map_err(|_| Error::Data(format!("bad FSU `{s}`")))
        };
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let status = match row[3].as_str() {
                "accepted" => MappingStatus::Accepted,
                "conflict" => MappingStatus::Conflict,
                "unmatched" => MappingStatus::Unmatched,
                other => return Err(Error::Data(format!("bad status `{other}`"))),
            };
            out.push(MappingRow {
                fsu_old: parse_fsu(&row[0])?,
                fsu_new: if row[1].is_empty() {
                    None
                } else {
                    Some(parse_fsu(&row[1])?)
                },
                score: row[2]
                    .parse()
                    .map_err(|_| Error::Data(format!("bad score `{}`", row[2])))?,
                status,
            });
        }
        Self::from_rows(&out)
    }
}

/// Scores and matches old-year FSUs due for revisit (`old_due`) against
/// every FSU of the new year.
pub fn match_years(
    old_due: &[PersonVisit],
    new: &[PersonVisit],
    config: &MatchConfig,
) -> (Vec<CandidateScore>, FsuMapping) {
    let old = snapshots(old_due, SnapshotVisit::Last);
    let new = snapshots(new, SnapshotVisit::First);
    let scores = score_all(&old, &new, config);
    let olds: BTreeSet<Fsu> = old.values().flat_map(|m| m.keys().copied()).collect();
    let mapping = infer_mapping(&scores, &olds, config);
    (scores, mapping)
}

/// Splits old-year records into panels continuing after `year_end` and
/// panels that completed within the year.
pub fn split_due_for_revisit(
    records: Vec<PersonVisit>,
    schedule: &PanelSchedule,
    year_end: YearQuarter,
) -> (Vec<PersonVisit>, Vec<PersonVisit>) {
    records.into_iter().partition(|r| {
        r.panel
            .as_ref()
            .is_some_and(|p| schedule.continues_after(p, year_end))
    })
}

/// Rewrites old FSU numbers to the inferred new ones. Households in
/// conflicted or unmatched FSUs keep their numbers and are returned as
/// attrited after the old year.
pub fn apply_mapping(
    records: Vec<PersonVisit>,
    mapping: &FsuMapping,
) -> Result<(Vec<PersonVisit>, Vec<HouseholdId>)> {
    let dropped: BTreeSet<Fsu> = mapping
        .conflicted_olds()
        .into_iter()
        .chain(mapping.unmatched.keys().copied())
        .collect();
    let mut attrited = BTreeSet::new();
    let mut out = records;
    for r in &mut out {
        if let Some((new, _)) = mapping.accepted.get(&r.fsu) {
            r.fsu = *new;
        } else if dropped.contains(&r.fsu) {
            attrited.insert(r.household_id());
        } else {
            return Err(Error::UnmappedFsu(r.fsu.0));
        }
    }
    Ok((out, attrited.into_iter().collect()))
}

/// Result of re-running the household rules on households linked across
/// the two years by the mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MappingCheck {
    pub households_old_year: usize,
    pub households_linked: usize,
    pub failures: Vec<HouseholdId>,
    pub report: ValidationReport,
}

pub fn validate_mapping(
    rewritten_old: &[PersonVisit],
    new: &[PersonVisit],
    rules: &ValidationRules,
) -> MappingCheck {
    let old_ids: BTreeSet<HouseholdId> = rewritten_old.iter().map(|r| r.household_id()).collect();
    let new_ids: BTreeSet<HouseholdId> = new.iter().map(|r| r.household_id()).collect();
    let linked: BTreeSet<&HouseholdId> = old_ids.intersection(&new_ids).collect();
    let combined: Vec<PersonVisit> = rewritten_old
        .iter()
        .chain(new)
        .filter(|r| linked.contains(&r.household_id()))
        .cloned()
        .collect();
    let (_, report) = validate_households(combined, rules);
    MappingCheck {
        households_old_year: old_ids.len(),
        households_linked: linked.len(),
        failures: report.rejected().into_iter().collect(),
        report,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(panel: &str, size: u16, members: &[(u16, u8)]) -> HouseholdSnapshot {
        HouseholdSnapshot {
            panel: PanelLabel::new(panel),
            religion: 1,
            social_group: 1,
            hh_size: size,
            members: members
                .iter()
                .map(|&(p, edu)| {
                    (
                        p,
                        MemberTraits {
                            sex: if p % 2 == 0 { Sex::Female } else { Sex::Male },
                            relation: p as u8,
                            education: edu,
                        },
                    )
                })
                .collect(),
        }
    }

    fn contents(hh: Vec<(u16, HouseholdSnapshot)>) -> FsuContents {
        FsuContents {
            households: hh
                .into_iter()
                .map(|(n, h)| (((1, 1, n), h.panel.clone()), h))
                .collect(),
        }
    }

    fn score(old: &FsuContents, new: &FsuContents) -> u32 {
        score_candidate((1, 1), Fsu(1), old, Fsu(2), new, &MatchConfig::default()).score
    }

    #[test]
    fn identical_contents_score_every_large_household() {
        let c = contents((1..=10).map(|n| (n, snap("P12", 3, &[(1, 5), (2, 6), (3, 1)]))).collect());
        assert_eq!(score(&c, &c), 10);
    }

    #[test]
    fn households_of_two_never_count() {
        let c = contents((1..=10).map(|n| (n, snap("P12", 2, &[(1, 5), (2, 6)]))).collect());
        assert_eq!(score(&c, &c), 0);
        let s = score_candidate((1, 1), Fsu(1), &c, Fsu(1), &c, &MatchConfig::default());
        assert_eq!(s.eligible_households, 0);
    }

    #[test]
    fn one_education_change_costs_one_household() {
        let a = snap("P12", 3, &[(1, 5), (2, 6), (3, 1)]);
        let b = snap("P12", 4, &[(1, 7), (2, 7), (3, 2), (4, 1)]);
        let c = snap("P12", 5, &[(1, 9), (2, 3), (3, 1)]);
        let old = contents(vec![(1, a.clone()), (2, b.clone()), (3, c.clone())]);
        let mut b2 = b;
        b2.members.get_mut(&3).unwrap().education = 3;
        let new = contents(vec![(1, a), (2, b2), (3, c)]);
        // households 1 and 3 agree on every rule; household 2 differs in one member
        assert_eq!(score(&old, &new), 2);
    }

    #[test]
    fn panel_religion_and_slot_must_match() {
        let a = snap("P12", 3, &[(1, 5), (2, 6), (3, 1)]);
        let old = contents(vec![(1, a.clone())]);
        let mut other_panel = a.clone();
        other_panel.panel = PanelLabel::new("P13");
        assert_eq!(score(&old, &contents(vec![(1, other_panel)])), 0);
        let mut other_rel = a.clone();
        other_rel.religion = 2;
        assert_eq!(score(&old, &contents(vec![(1, other_rel)])), 0);
        assert_eq!(score(&old, &contents(vec![(2, a)])), 0);
    }

    #[test]
    fn multiset_alignment_ignores_person_numbers() {
        let a = snap("P12", 3, &[(1, 5), (2, 6), (3, 1)]);
        let mut b = a.clone();
        let m1 = b.members.remove(&1).unwrap();
        b.members.insert(9, m1);
        let config = MatchConfig {
            alignment: MemberAlignment::Multiset,
            ..Default::default()
        };
        assert!(households_agree(&a, &b, &config));
        let mut c = a.clone();
        c.members.clear();
        c.members.insert(7, a.members[&1]);
        assert!(households_agree(&a, &c, &MatchConfig::default()) == false);
    }

    fn cs(old: u32, new: u32, score: u32) -> CandidateScore {
        CandidateScore {
            district: (1, 1),
            fsu_old: Fsu(old),
            fsu_new: Fsu(new),
            score,
            eligible_households: 10,
        }
    }

    #[test]
    fn collisions_drop_all_pairs_involved() {
        let scores = vec![cs(1, 10, 5), cs(1, 11, 1), cs(2, 10, 4), cs(2, 11, 2), cs(3, 12, 3)];
        let olds: BTreeSet<Fsu> = [1, 2, 3, 4].into_iter().map(Fsu).collect();
        let m = infer_mapping(&scores, &olds, &MatchConfig::default());
        assert_eq!(m.accepted.len(), 1);
        assert_eq!(m.accepted[&Fsu(3)], (Fsu(12), 3));
        assert_eq!(m.conflicts.len(), 1);
        assert_eq!(m.conflicts[0].olds.keys().copied().collect::<Vec<_>>(), vec![Fsu(1), Fsu(2)]);
        assert_eq!(m.conflicts[0].news, [Fsu(10)].into_iter().collect());
        assert_eq!(m.unmatched.keys().copied().collect::<Vec<_>>(), vec![Fsu(4)]);
    }

    #[test]
    fn ties_are_conflicts_and_zero_scores_unmatched() {
        let scores = vec![cs(1, 10, 3), cs(1, 11, 3), cs(2, 12, 0), cs(3, 13, 2)];
        let olds: BTreeSet<Fsu> = [1, 2, 3].into_iter().map(Fsu).collect();
        let m = infer_mapping(&scores, &olds, &MatchConfig::default());
        assert_eq!(m.accepted.len(), 1);
        assert_eq!(m.conflicts[0].news.len(), 2);
        assert!(m.unmatched.contains_key(&Fsu(2)));
    }

    #[test]
    fn mapping_file_round_trip() {
        let scores = vec![
            cs(1, 10, 3),
            cs(1, 11, 3),
            cs(2, 11, 4),
            cs(3, 11, 4),
            cs(4, 14, 2),
            cs(5, 15, 0),
        ];
        let olds: BTreeSet<Fsu> = (1..=5).map(Fsu).collect();
        let m = infer_mapping(&scores, &olds, &MatchConfig::default());
        let mut buf = Vec::new();
        m.write(&mut buf, None).unwrap();
        let back = FsuMapping::read(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn apply_mapping_flags_unmatched_and_rejects_unknown() {
        let m = FsuMapping {
            accepted: [(Fsu(117), (Fsu(4031), 5))].into_iter().collect(),
            conflicts: vec![],
            unmatched: [(Fsu(118), 0)].into_iter().collect(),
        };
        let (out, attr) = apply_mapping(Vec::new(), &FsuMapping::default()).unwrap();
        assert!(out.is_empty() && attr.is_empty());
        let mut r = crate::test_support::visit();
        r.fsu = Fsu(117);
        let mut r2 = r.clone();
        r2.fsu = Fsu(118);
        let (out, attr) = apply_mapping(vec![r.clone(), r2.clone()], &m).unwrap();
        assert_eq!(out[0].fsu, Fsu(4031));
        assert_eq!(out[1].fsu, Fsu(118));
        assert_eq!(attr, vec![r2.household_id()]);
        let mut r3 = r;
        r3.fsu = Fsu(9);
        assert!(matches!(apply_mapping(vec![r3], &m), Err(Error::UnmappedFsu(9))));
    }
}
