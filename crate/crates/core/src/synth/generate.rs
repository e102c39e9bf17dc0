use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{entity_rng, tag};
use crate::error::{Error, Result};
use crate::microdata::schedule::VISITS_PER_PANEL;
use crate::microdata::{Fsu, PanelLabel, PanelSchedule, PersonVisit, Sex, SurveyYear};
use crate::panel::LaborState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationMode {
    Identity,
    #[default]
    Random,
}

/// Parameters of a synthetic two-year rotating panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Calendar year in which the first survey year starts.
    pub first_year: u16,
    pub districts: u16,
    pub fsus_per_district: u16,
    pub households_per_fsu: u16,
    /// The first this-many households of every FSU have three or more members.
    pub min_large_households: u16,
    /// Share of the remaining households with one or two members.
    pub small_household_share: f64,
    pub max_household_size: u16,
    pub permutation: PermutationMode,
    /// Share of FSUs due for revisit whose second-year contents are replaced
    /// by unrelated households.
    pub churn_fraction: f64,
    /// Probability that a household present at a visit is absent from all
    /// later visits.
    pub household_dropout: f64,
    /// Initial state distribution over the seven observed states.
    pub initial: Vec<f64>,
    /// Rows and columns in state order, attrit last; the attrit row must be
    /// absorbing.
    pub kernel: Vec<Vec<f64>>,
    /// Household weights are log-uniform on this range.
    pub weight_range: [f64; 2],
    /// Write first-year revisit quarters as 3, 4, 5.
    pub miscode_revisit_quarters: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 20_171_801,
            first_year: 2017,
            districts: 40,
            fsus_per_district: 16,
            households_per_fsu: 8,
            min_large_households: 3,
            small_household_share: 0.25,
            max_household_size: 7,
            permutation: PermutationMode::Random,
            churn_fraction: 0.0,
            household_dropout: 0.03,
            initial: vec![0.15, 0.08, 0.15, 0.03, 0.55, 0.02, 0.02],
            kernel: default_kernel(),
            weight_range: [200.0, 20_000.0],
            miscode_revisit_quarters: false,
        }
    }
}

pub fn default_kernel() -> Vec<Vec<f64>> {
    vec![
        vec![0.90, 0.02, 0.02, 0.01, 0.02, 0.005, 0.005, 0.02],
        vec![0.03, 0.82, 0.05, 0.03, 0.04, 0.005, 0.005, 0.02],
        vec![0.02, 0.03, 0.90, 0.01, 0.01, 0.005, 0.005, 0.02],
        vec![0.05, 0.10, 0.08, 0.55, 0.20, 0.0, 0.0, 0.02],
        vec![0.01, 0.01, 0.01, 0.02, 0.93, 0.0, 0.0, 0.02],
        vec![0.30, 0.10, 0.30, 0.02, 0.05, 0.20, 0.01, 0.02],
        vec![0.30, 0.10, 0.30, 0.02, 0.05, 0.01, 0.20, 0.02],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ]
}

/// State codes of PLFS states cycled over districts; Maharashtra (27) first.
const STATE_CODES: [u16; 10] = [27, 29, 24, 33, 9, 19, 32, 36, 28, 23];
const INDUSTRIES: [u8; 10] = [1, 10, 14, 25, 41, 47, 49, 56, 85, 86];
/// Panels whose visits can fall inside the two survey years.
const PANELS: usize = 8;
const OLD_FSU_BASE: u32 = 10_000;
const NEW_FSU_BASE: u32 = 500_000;

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn check_distribution(name: &str, row: &[f64]) -> Result<()> {
    for p in row {
        check_prob(name, *p)?;
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.districts == 0 || self.fsus_per_district == 0 || self.households_per_fsu == 0 {
            return Err(Error::Config("districts, FSUs and households must all be positive".into()));
        }
        if self.min_large_households > self.households_per_fsu {
            return Err(Error::Config("more large households requested than households per FSU".into()));
        }
        if self.max_household_size < 3 {
            return Err(Error::Config("max_household_size must be at least 3".into()));
        }
        let fsus = u32::from(self.districts) * u32::from(self.fsus_per_district);
        if fsus >= NEW_FSU_BASE - OLD_FSU_BASE {
            return Err(Error::Config(format!("{fsus} FSUs exceed the numbering range")));
        }
        check_prob("small_household_share", self.small_household_share)?;
        check_prob("churn_fraction", self.churn_fraction)?;
        check_prob("household_dropout", self.household_dropout)?;
        if self.initial.len() != LaborState::OBSERVED.len() {
            return Err(Error::Config("initial distribution needs 7 entries".into()));
        }
        check_distribution("initial", &self.initial)?;
        if self.kernel.len() != LaborState::ALL.len() {
            return Err(Error::Config("kernel needs 8 rows".into()));
        }
        for (i, row) in self.kernel.iter().enumerate() {
            if row.len() != LaborState::ALL.len() {
                return Err(Error::Config(format!("kernel row {i} needs 8 entries")));
            }
            check_distribution(&format!("kernel row {}", LaborState::ALL[i]), row)?;
        }
        if self.kernel[LaborState::Attrit.index()][LaborState::Attrit.index()] != 1.0 {
            return Err(Error::Config("attrit row of the kernel must be absorbing".into()));
        }
        let [lo, hi] = self.weight_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("bad weight range [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn total_fsus(&self) -> u32 {
        u32::from(self.districts) * u32::from(self.fsus_per_district)
    }
}

/// True identity of one FSU in both numbering schemes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsuTruth {
    pub state: u16,
    pub district: u16,
    pub panel: PanelLabel,
    pub fsu_old: Fsu,
    pub fsu_new: Fsu,
    pub churned: bool,
}

/// Generated state of one original person at one scheduled visit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub panel: PanelLabel,
    pub fsu_old: Fsu,
    pub hh_no: u16,
    pub person_no: u16,
    pub visit_no: u8,
    pub quarter: String,
    /// `attrit` at the first missed visit; later visits are not listed.
    pub state: LaborState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub fsus: Vec<FsuTruth>,
    pub paths: Vec<PathStep>,
    pub kernel: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn fsu_new(&self, old: Fsu) -> Option<Fsu> {
        self.fsus.iter().find(|f| f.fsu_old == old).map(|f| f.fsu_new)
    }
}

/// The four visit files of a synthetic two-year run.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub year1: SurveyYear,
    pub year2: SurveyYear,
    pub year1_first_visit: Vec<PersonVisit>,
    pub year1_revisit: Vec<PersonVisit>,
    pub year2_first_visit: Vec<PersonVisit>,
    pub year2_revisit: Vec<PersonVisit>,
    pub truth: GroundTruth,
}

impl SynthOutput {
    pub fn year1(&self) -> Vec<PersonVisit> {
        self.year1_first_visit.iter().chain(&self.year1_revisit).cloned().collect()
    }

    pub fn year2(&self) -> Vec<PersonVisit> {
        self.year2_first_visit.iter().chain(&self.year2_revisit).cloned().collect()
    }
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last state with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

struct Person {
    sex: Sex,
    relation: u8,
    base_age: u16,
    /// Quarters until the next birthday at visit 1, 0..4.
    birthday_phase: u16,
    marital: u8,
    education: u8,
    industry: u8,
    base_earnings: f64,
    /// Ratio applied to earnings while in nwrk.
    nwrk_ratio: f64,
    /// States at visits 1..=4; `Attrit` from the first missed visit on.
    states: [LaborState; 4],
    codes: [u8; 4],
}

struct Household {
    religion: u8,
    social_group: u8,
    weight: f64,
    /// Last visit at which the household is present.
    last_visit: u8,
    persons: Vec<Person>,
}

fn gen_household(config: &SynthConfig, rng: &mut ChaCha8Rng, person_rng: impl Fn(u16) -> ChaCha8Rng, large: bool) -> Household {
    let size = if !large && rng.random::<f64>() < config.small_household_share {
        rng.random_range(1..=2)
    } else {
        rng.random_range(3..=config.max_household_size)
    };
    let [lo, hi] = config.weight_range;
    let weight = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    let mut last_visit = VISITS_PER_PANEL;
    for v in 2..=VISITS_PER_PANEL {
        if rng.random::<f64>() < config.household_dropout {
            last_visit = v - 1;
            break;
        }
    }
    let religion = rng.random_range(1..=4);
    let social_group = rng.random_range(1..=4);
    let head_age: u16 = rng.random_range(25..=70);
    let persons = (1..=size)
        .map(|p| {
            let mut r = person_rng(p);
            let (relation, base_age) = match p {
                1 => (1, head_age),
                2 => (2, head_age.saturating_sub(r.random_range(0..=6)).max(18)),
                _ => {
                    let rel = if r.random::<f64>() < 0.8 { 3 } else { 5 };
                    let max_age = head_age.saturating_sub(18).max(1);
                    (rel, r.random_range(0..=max_age))
                }
            };
            let sex = match relation {
                1 => if r.random::<f64>() < 0.85 { Sex::Male } else { Sex::Female },
                2 => Sex::Female,
                _ => if r.random::<bool>() { Sex::Male } else { Sex::Female },
            };
            let marital = if relation <= 2 || (base_age >= 22 && r.random::<bool>()) { 2 } else { 1 };
            let education = if base_age < 6 { 1 } else { r.random_range(1..=14) };
            let mut states = [LaborState::Attrit; 4];
            let mut codes = [0u8; 4];
            let mut s = LaborState::OBSERVED[draw_index(&mut r, &config.initial)];
            for v in 0..4 {
                if v > 0 {
                    s = LaborState::ALL[draw_index(&mut r, &config.kernel[s.index()])];
                }
                states[v] = s;
                if s != LaborState::Attrit {
                    let cs = s.codes();
                    codes[v] = cs[r.random_range(0..cs.len())];
                }
            }
            let nwrk_ratio = if r.random::<bool>() {
                1.0
            } else {
                (r.random::<f64>() * 100.0).round() / 100.0
            };
            Person {
                sex,
                relation,
                base_age,
                birthday_phase: r.random_range(0..4),
                marital,
                education,
                industry: INDUSTRIES[r.random_range(0..INDUSTRIES.len())],
                base_earnings: (3000.0f64.ln() + r.random::<f64>() * (50_000.0f64.ln() - 3000.0f64.ln())).exp().round(),
                nwrk_ratio,
                states,
                codes,
            }
        })
        .collect();
    Household {
        religion,
        social_group,
        weight,
        last_visit,
        persons,
    }
}

fn earnings_for(p: &Person, state: LaborState, code: u8) -> Option<f64> {
    match state {
        LaborState::SelfEmployed if code == 21 => Some(0.0),
        LaborState::SelfEmployed | LaborState::Casual | LaborState::Salaried => Some(p.base_earnings),
        LaborState::NotWorking => Some((p.base_earnings * p.nwrk_ratio).round()),
        LaborState::SickAbsent => Some(p.base_earnings),
        _ => None,
    }
}

fn industry_for(p: &Person, state: LaborState) -> Option<u8> {
    match state {
        LaborState::Unemployed | LaborState::NotInLabourForce | LaborState::Attrit => None,
        _ => Some(p.industry),
    }
}

/// Builds the two-year synthetic panel deterministically from `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let schedule = PanelSchedule::plfs_urban();
    let panels: Vec<PanelLabel> = schedule.panels().take(PANELS).map(|(l, _)| l.clone()).collect();
    let year1 = SurveyYear(config.first_year);
    let year2 = year1.next();
    let n_fsu = config.total_fsus();

    let mut new_ids: Vec<u32> = (0..n_fsu).map(|i| NEW_FSU_BASE + i).collect();
    match config.permutation {
        PermutationMode::Identity => new_ids = (0..n_fsu).map(|i| OLD_FSU_BASE + i).collect(),
        PermutationMode::Random => new_ids.shuffle(&mut entity_rng(config.seed, &[tag::PERMUTATION])),
    }

    let fsus_per = u32::from(config.fsus_per_district);
    let districts: Vec<u16> = (0..config.districts).collect();
    let per_district: Vec<(Vec<FsuTruth>, Vec<PathStep>, Vec<PersonVisit>)> = districts
        .par_iter()
        .map(|&d| {
            let state = STATE_CODES[usize::from(d) % STATE_CODES.len()];
            let district = d / STATE_CODES.len() as u16 + 1;
            let mut truths = Vec::new();
            let mut paths = Vec::new();
            let mut records = Vec::new();
            for f in 0..fsus_per {
                let g = u32::from(d) * fsus_per + f;
                let panel = &panels[f as usize % PANELS];
                let start = schedule.start(panel).expect("known panel");
                let fsu_old = Fsu(OLD_FSU_BASE + g);
                let fsu_new = Fsu(new_ids[g as usize]);
                let due = schedule.continues_after(panel, year1.last_quarter()) && year1.contains(start);
                let churned = due
                    && entity_rng(config.seed, &[tag::CHURN_PICK, u64::from(g)]).random::<f64>()
                        < config.churn_fraction;
                truths.push(FsuTruth {
                    state,
                    district,
                    panel: panel.clone(),
                    fsu_old,
                    fsu_new,
                    churned,
                });
                let build = |hh_tag: u64, person_tag: u64, h: u16| {
                    let mut hr = entity_rng(config.seed, &[hh_tag, u64::from(g), u64::from(h)]);
                    gen_household(
                        config,
                        &mut hr,
                        |p| entity_rng(config.seed, &[person_tag, u64::from(g), u64::from(h), u64::from(p)]),
                        h < config.min_large_households,
                    )
                };
                for h in 0..config.households_per_fsu {
                    let original = build(tag::HOUSEHOLD, tag::PERSON, h);
                    let replacement = churned.then(|| build(tag::CHURNED, tag::CHURNED + 100, h));
                    for v in 1..=VISITS_PER_PANEL {
                        let q = start.offset(i64::from(v) - 1);
                        let in_year1 = year1.contains(q);
                        if !in_year1 && !year2.contains(q) {
                            continue;
                        }
                        let hh = match (&replacement, in_year1) {
                            (Some(r), false) => r,
                            _ => &original,
                        };
                        let is_original = std::ptr::eq(hh, &original);
                        let present = v <= hh.last_visit;
                        for (pi, p) in hh.persons.iter().enumerate() {
                            let s = p.states[usize::from(v) - 1];
                            let person_no = pi as u16 + 1;
                            if is_original {
                                let first_missing = !present || s == LaborState::Attrit;
                                let prev_present = v == 1
                                    || (v - 1 <= hh.last_visit
                                        && p.states[usize::from(v) - 2] != LaborState::Attrit);
                                if !first_missing || prev_present {
                                    paths.push(PathStep {
                                        panel: panel.clone(),
                                        fsu_old,
                                        hh_no: h + 1,
                                        person_no,
                                        visit_no: v,
                                        quarter: q.to_string(),
                                        state: if first_missing { LaborState::Attrit } else { s },
                                    });
                                }
                            }
                            if !present || s == LaborState::Attrit {
                                continue;
                            }
                            let sy = q.survey_year();
                            let code = p.codes[usize::from(v) - 1];
                            records.push(PersonVisit {
                                survey_year: sy,
                                quarter: q.cycle_quarter(),
                                visit_no: v,
                                panel: Some(panel.clone()),
                                fsu: if in_year1 { fsu_old } else { fsu_new },
                                sub_block: 1 + (h % 2) as u8,
                                stratum2: 1 + (h % 3) as u8,
                                hh_no: h + 1,
                                person_no,
                                state,
                                district,
                                sex: p.sex,
                                age: p.base_age + (p.birthday_phase + u16::from(v) - 1) / 4,
                                relation_to_head: p.relation,
                                marital: p.marital,
                                education: p.education,
                                religion: hh.religion,
                                social_group: hh.social_group,
                                hh_size: hh.persons.len() as u16,
                                status_code: code,
                                industry: industry_for(p, s),
                                earnings: earnings_for(p, s, code),
                                weight: hh.weight,
                            });
                        }
                    }
                }
            }
            (truths, paths, records)
        })
        .collect();

    let mut out = SynthOutput {
        year1,
        year2,
        year1_first_visit: Vec::new(),
        year1_revisit: Vec::new(),
        year2_first_visit: Vec::new(),
        year2_revisit: Vec::new(),
        truth: GroundTruth {
            fsus: Vec::new(),
            paths: Vec::new(),
            kernel: config.kernel.clone(),
        },
    };
    for (truths, paths, records) in per_district {
        out.truth.fsus.extend(truths);
        out.truth.paths.extend(paths);
        for mut r in records {
            match (r.survey_year == year1, r.visit_no == 1) {
                (true, true) => out.year1_first_visit.push(r),
                (true, false) => {
                    if config.miscode_revisit_quarters {
                        r.quarter += 1;
                    }
                    out.year1_revisit.push(r)
                }
                (false, true) => out.year2_first_visit.push(r),
                (false, false) => out.year2_revisit.push(r),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> SynthConfig {
        SynthConfig {
            districts: 4,
            fsus_per_district: 8,
            households_per_fsu: 4,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(generate(&small()).unwrap().year1(), generate(&other).unwrap().year1());
    }

    #[test]
    fn identity_mode_keeps_fsu_numbers() {
        let out = generate(&SynthConfig {
            permutation: PermutationMode::Identity,
            ..small()
        })
        .unwrap();
        assert!(out.truth.fsus.iter().all(|f| f.fsu_old == f.fsu_new));
        let y1: BTreeSet<Fsu> = out.year1().iter().map(|r| r.fsu).collect();
        // panels started in the first year keep their FSU numbers
        let revisited: BTreeSet<Fsu> = out
            .year2_revisit
            .iter()
            .filter(|r| ["P12", "P13", "P14"].contains(&r.panel.as_ref().unwrap().as_str()))
            .map(|r| r.fsu)
            .collect();
        assert!(!revisited.is_empty());
        assert!(revisited.is_subset(&y1));
    }

    #[test]
    fn absorbing_kernel_keeps_states() {
        let mut kernel = vec![vec![0.0; 8]; 8];
        for (i, row) in kernel.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let out = generate(&SynthConfig {
            kernel,
            household_dropout: 0.0,
            ..small()
        })
        .unwrap();
        let mut by_person: std::collections::BTreeMap<_, BTreeSet<LaborState>> = Default::default();
        for s in &out.truth.paths {
            by_person
                .entry((s.fsu_old, s.hh_no, s.person_no))
                .or_default()
                .insert(s.state);
        }
        assert!(by_person.values().all(|s| s.len() == 1));
    }

    #[test]
    fn miscoding_shifts_only_first_year_revisits() {
        let out = generate(&SynthConfig {
            miscode_revisit_quarters: true,
            ..small()
        })
        .unwrap();
        let qs: BTreeSet<u8> = out.year1_revisit.iter().map(|r| r.quarter).collect();
        assert_eq!(qs, [3, 4, 5].into_iter().collect());
        let q2: BTreeSet<u8> = out.year2_revisit.iter().map(|r| r.quarter).collect();
        assert_eq!(q2, [1, 2, 3, 4].into_iter().collect());
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        assert!(generate(&SynthConfig { households_per_fsu: 0, ..small() }).is_err());
        let mut bad = small();
        bad.kernel[0][0] = 0.5;
        assert!(matches!(generate(&bad), Err(Error::Config(_))));
    }
}
