//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero when any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use panelflow::econometrics::{
    average_marginal_effects, build_design, logit_fit, ols_fit, DesignSpec, Frame, LogitOptions,
    PValueDist, Term,
};
use panelflow::flows::rates::entry_exit_rates;
use panelflow::flows::{compute_rate_cells, flow_matrix, CellFamily};
use panelflow::matcher::{apply_mapping, match_years, split_due_for_revisit, validate_mapping, MatchConfig};
use panelflow::microdata::{
    Fsu, HouseholdId, HouseholdKey, PanelLabel, PanelSchedule, PersonKey, PersonVisit, Sex, YearQuarter,
};
use panelflow::panel::{
    derive_features, transitions, EmpDichotomy, FeatureConfig, LaborState, PersonHistory, PersonId,
    VisitEntry,
};
use panelflow::synth::{
    corrupt, default_kernel, default_logit_truth, generate, generate_logit_sample, CorruptionSpec,
    PermutationMode, SynthConfig,
};
use panelflow::validate::{validate_households, ValidationRules};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "renumbering recovery", renumbering_recovery),
        (2, "post-mapping validation", post_mapping_validation),
        (3, "validator exactness", validator_exactness),
        (4, "flow matrices", flow_matrices),
        (5, "rate formulas", rate_formulas),
        (6, "least squares", least_squares),
        (7, "logit", logit),
        (8, "average marginal effects", marginal_effects),
        (9, "feature derivation", feature_derivation),
        (10, "determinism", determinism),
    ];
    let quiet = std::env::args().any(|a| a == "--list");
    if quiet {
        return;
    }
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in criteria {
        let t = Instant::now();
        let outcome = panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn start() -> YearQuarter {
    "2017-Q3".parse().unwrap()
}

// ----------------------------------------------------------------- 1

fn renumbering_config(churn: f64) -> SynthConfig {
    SynthConfig {
        seed: 4320,
        districts: 200,
        fsus_per_district: 20,
        households_per_fsu: 8,
        min_large_households: 3,
        permutation: PermutationMode::Random,
        churn_fraction: churn,
        ..Default::default()
    }
}

fn renumbering_recovery() -> Outcome {
    let schedule = PanelSchedule::plfs_urban();
    let config = MatchConfig::default();

    let out = generate(&renumbering_config(0.0)).map_err(|e| e.to_string())?;
    let (due, _) = split_due_for_revisit(out.year1(), &schedule, out.year1.last_quarter());
    let due_fsus: BTreeSet<Fsu> = due.iter().map(|r| r.fsu).collect();
    let t = Instant::now();
    let (_, mapping) = match_years(&due, &out.year2(), &config);
    let elapsed = t.elapsed().as_secs_f64();
    ensure(mapping.conflicts.is_empty(), || format!("{} conflicts", mapping.conflicts.len()))?;
    ensure(mapping.unmatched.is_empty(), || format!("{} unmatched", mapping.unmatched.len()))?;
    let correct = mapping
        .accepted
        .iter()
        .filter(|(o, (n, _))| out.truth.fsu_new(**o) == Some(*n))
        .count();
    ensure(correct == due_fsus.len(), || format!("{correct}/{} recovered", due_fsus.len()))?;
    ensure(elapsed < 60.0, || format!("matching took {elapsed:.1}s"))?;

    let out = generate(&renumbering_config(0.1)).map_err(|e| e.to_string())?;
    let (due, _) = split_due_for_revisit(out.year1(), &schedule, out.year1.last_quarter());
    let due_fsus: BTreeSet<Fsu> = due.iter().map(|r| r.fsu).collect();
    let churned: BTreeSet<Fsu> = out
        .truth
        .fsus
        .iter()
        .filter(|f| f.churned && due_fsus.contains(&f.fsu_old))
        .map(|f| f.fsu_old)
        .collect();
    let (_, mapping) = match_years(&due, &out.year2(), &config);
    let wrong = mapping
        .accepted
        .iter()
        .filter(|(o, (n, _))| churned.contains(o) || out.truth.fsu_new(**o) != Some(*n))
        .count();
    ensure(wrong == 0, || format!("{wrong} wrong accepted pairs under churn"))?;
    let unmatched: BTreeSet<Fsu> = mapping.unmatched.keys().copied().collect();
    ensure(churned.is_subset(&unmatched), || "a churned FSU was not unmatched".into())?;
    ensure(!churned.is_empty(), || "no churned FSUs were generated".into())?;
    Ok(format!(
        "{}/{} FSUs recovered, 0 conflicts, matched in {elapsed:.2}s; churn run: {} churned FSUs all unmatched, {} accepted, {} conflicts, 0 wrong",
        correct,
        correct,
        churned.len(),
        mapping.accepted.len(),
        mapping.conflicts.len(),
    ))
}

// ----------------------------------------------------------------- 2

/// Every pair of records of every linked household, checked directly.
fn cross_tab_failures(old: &[PersonVisit], new: &[PersonVisit], rules: &ValidationRules) -> BTreeSet<HouseholdId> {
    let old_ids: BTreeSet<HouseholdId> = old.iter().map(PersonVisit::household_id).collect();
    let new_ids: BTreeSet<HouseholdId> = new.iter().map(PersonVisit::household_id).collect();
    let mut groups: BTreeMap<HouseholdId, Vec<&PersonVisit>> = BTreeMap::new();
    for r in old.iter().chain(new) {
        let id = r.household_id();
        if old_ids.contains(&id) && new_ids.contains(&id) {
            groups.entry(id).or_default().push(r);
        }
    }
    let mut out = BTreeSet::new();
    for (id, rs) in groups {
        let bad = rs.iter().any(|a| {
            rs.iter().any(|b| {
                a.religion != b.religion
                    || a.social_group != b.social_group
                    || a.hh_size.abs_diff(b.hh_size) > rules.max_hh_size_change
                    || (a.person_no == b.person_no
                        && (a.sex != b.sex
                            || a.relation_to_head != b.relation_to_head
                            || a.age.abs_diff(b.age) > rules.max_age_change))
            })
        });
        if bad {
            out.insert(id);
        }
    }
    out
}

fn post_mapping_validation() -> Outcome {
    let config = SynthConfig {
        seed: 2526,
        districts: 60,
        fsus_per_district: 20,
        households_per_fsu: 8,
        ..Default::default()
    };
    let out = generate(&config).map_err(|e| e.to_string())?;
    let schedule = PanelSchedule::plfs_urban();
    let (due, _) = split_due_for_revisit(out.year1(), &schedule, out.year1.last_quarter());
    let (_, mapping) = match_years(&due, &out.year2(), &MatchConfig::default());
    let (rewritten, _) = apply_mapping(due, &mapping).map_err(|e| e.to_string())?;
    let rules = ValidationRules::default();
    let mut year2 = out.year2();
    let clean = validate_mapping(&rewritten, &year2, &rules);
    ensure(clean.failures.is_empty(), || format!("{} failures on clean data", clean.failures.len()))?;

    // corrupt one linked household in each of 25 mapped FSUs
    let linked: BTreeSet<HouseholdId> = {
        let old: BTreeSet<HouseholdId> = rewritten.iter().map(PersonVisit::household_id).collect();
        year2.iter().map(PersonVisit::household_id).filter(|h| old.contains(h)).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut news: Vec<Fsu> = mapping.accepted.values().map(|(n, _)| *n).collect();
    for i in (1..news.len()).rev() {
        news.swap(i, rng.random_range(0..=i));
    }
    let targets: Vec<HouseholdId> = news
        .iter()
        .take(25)
        .filter_map(|f| linked.iter().find(|h| h.key.fsu == *f).cloned())
        .collect();
    ensure(targets.len() == 25, || format!("only {} target households", targets.len()))?;
    for (k, h) in targets.iter().enumerate() {
        let r = year2
            .iter_mut()
            .find(|r| r.household_id() == *h)
            .expect("target household has records");
        match k % 6 {
            0 => r.religion += 1,
            1 => r.hh_size += 4,
            2 => r.sex = if r.sex == Sex::Male { Sex::Female } else { Sex::Male },
            3 => r.age += 9,
            4 => r.education = r.education.wrapping_add(1),
            _ => r.hh_size += 1,
        }
    }
    let check = validate_mapping(&rewritten, &year2, &rules);
    let got: BTreeSet<HouseholdId> = check.failures.iter().cloned().collect();
    let oracle = cross_tab_failures(&rewritten, &year2, &rules);
    ensure(got == oracle, || {
        format!(
            "failure sets differ: {} only in pipeline, {} only in oracle",
            got.difference(&oracle).count(),
            oracle.difference(&got).count()
        )
    })?;
    ensure(got.iter().all(|h| targets.contains(h)), || "a failure outside the corrupted households".into())?;
    Ok(format!(
        "{} linked households, 0 failures before corruption; {} of 25 corrupted households fail, equal to the oracle set",
        clean.households_linked,
        got.len()
    ))
}

// ----------------------------------------------------------------- 3

fn validator_exactness() -> Outcome {
    let out = generate(&SynthConfig {
        seed: 303,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let spec = CorruptionSpec {
        religion_flips: 15,
        size_jumps: 15,
        sex_changes: 15,
        age_drifts: 15,
        boundary_size_changes: 15,
        boundary_age_drifts: 15,
    };
    let (records, log) = corrupt(out.year1(), &spec, 303).map_err(|e| e.to_string())?;
    let (clean, report) = validate_households(records, &ValidationRules::default());
    let expected: BTreeSet<HouseholdId> = log.iter().filter(|i| i.kind.violates()).map(|i| i.household.clone()).collect();
    let rejected = report.rejected();
    ensure(rejected == expected, || {
        format!(
            "rejected {} households, expected {} ({} missing, {} extra)",
            rejected.len(),
            expected.len(),
            expected.difference(&rejected).count(),
            rejected.difference(&expected).count()
        )
    })?;
    let kept: BTreeSet<HouseholdId> = clean.iter().map(PersonVisit::household_id).collect();
    let boundary: Vec<&HouseholdId> = log.iter().filter(|i| !i.kind.violates()).map(|i| &i.household).collect();
    ensure(boundary.iter().all(|h| kept.contains(*h)), || "a boundary household was rejected".into())?;
    Ok(format!(
        "rejected set equals the {} injected violations; {} boundary households retained",
        expected.len(),
        boundary.len()
    ))
}

// ----------------------------------------------------------------- 4

fn person(id: u32) -> PersonId {
    PersonId {
        panel: PanelLabel::new("P11"),
        key: PersonKey {
            household: HouseholdKey {
                fsu: Fsu(id / 8),
                sub_block: 1,
                stratum2: 1,
                hh_no: (id % 8) as u16,
            },
            person_no: 1,
        },
    }
}

fn visit(q: YearQuarter, visit_no: u8, state: LaborState, weight: f64) -> VisitEntry {
    VisitEntry {
        quarter: q,
        visit_no,
        state,
        age: 35,
        education: 10,
        marital: 2,
        industry: Some(10),
        earnings: None,
        weight,
        household_has_child: false,
    }
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Person pairs drawn from `kernel`, origins uniform over observed states.
fn kernel_population(n: u32, kernel: &[Vec<f64>], seed: u64) -> Vec<PersonHistory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let from = LaborState::OBSERVED[rng.random_range(0..7)];
            let to = LaborState::ALL[draw(&mut rng, &kernel[from.index()])];
            let weight = rng.random_range(1.0..3.0);
            let mut visits = vec![visit(start(), 1, from, weight)];
            let attrit = if to == LaborState::Attrit {
                Some((start().next(), 2))
            } else {
                visits.push(visit(start().next(), 2, to, weight));
                None
            };
            PersonHistory {
                id: person(id),
                sex: Sex::Male,
                region: 27,
                visits,
                attrit,
            }
        })
        .collect()
}

fn kernel_error(hs: &[PersonHistory], kernel: &[Vec<f64>]) -> Result<f64, String> {
    let pairs = transitions(hs);
    let m = flow_matrix(&pairs, Sex::Male, start()).ok_or("no matrix")?;
    let mut worst: f64 = 0.0;
    for i in 0..7 {
        for j in 0..8 {
            let p = m.probabilities[i][j].ok_or_else(|| format!("row {i} empty"))?;
            worst = worst.max((p - 100.0 * kernel[i][j]).abs());
        }
    }
    Ok(worst)
}

fn flow_matrices() -> Outcome {
    let kernel = default_kernel();
    let hs = kernel_population(50_000, &kernel, 50);
    let pairs = transitions(&hs);
    ensure(pairs.len() == 50_000, || format!("{} pairs", pairs.len()))?;
    let m = flow_matrix(&pairs, Sex::Male, start()).ok_or("no matrix")?;
    let mut worst_sum: f64 = 0.0;
    for i in 0..m.probabilities.len() {
        if let Some(s) = m.probability_row_sum(i) {
            worst_sum = worst_sum.max((s - 100.0).abs());
        }
    }
    ensure(worst_sum <= 1e-9, || format!("row sum off by {worst_sum:e}"))?;
    let err_large = kernel_error(&hs, &kernel)?;
    ensure(err_large <= 2.0, || format!("max deviation {err_large:.3}pp from the kernel"))?;
    let err_small = kernel_error(&kernel_population(5_000, &kernel, 51), &kernel)?;

    let mut scaled = hs.clone();
    for h in &mut scaled {
        for v in &mut h.visits {
            v.weight *= 8.0;
        }
    }
    let ms = flow_matrix(&transitions(&scaled), Sex::Male, start()).ok_or("no matrix")?;
    ensure(ms.shares == m.shares && ms.probabilities == m.probabilities, || "scaling by 8 changed the matrix".into())?;
    Ok(format!(
        "row sums within {worst_sum:.1e} of 100; max kernel error {err_large:.3}pp at 50k pairs ({err_small:.3}pp at 5k); scaling by 8 bit-identical"
    ))
}

// ----------------------------------------------------------------- 5

fn rate_instance(rng: &mut ChaCha8Rng) -> (BTreeMap<u32, f64>, BTreeMap<u32, f64>) {
    let universe = rng.random_range(1..12u32);
    let mut at_t = BTreeMap::new();
    let mut at_next = BTreeMap::new();
    for id in 0..universe {
        if rng.random::<bool>() {
            at_t.insert(id, f64::from(rng.random_range(1u32..100)));
        }
        if rng.random::<bool>() {
            at_next.insert(id, f64::from(rng.random_range(1u32..100)));
        }
    }
    (at_t, at_next)
}

/// Entry and exit rates by set enumeration.
fn rate_oracle(at_t: &BTreeMap<u32, f64>, at_next: &BTreeMap<u32, f64>) -> Option<(f64, f64)> {
    let t: BTreeSet<u32> = at_t.keys().copied().collect();
    let next: BTreeSet<u32> = at_next.keys().copied().collect();
    let mass = |ids: &BTreeSet<u32>, w: &BTreeMap<u32, f64>| ids.iter().map(|i| w[i]).sum::<f64>();
    let denom = 0.5 * (mass(&t, at_t) + mass(&next, at_next));
    if denom == 0.0 {
        return None;
    }
    let entering: BTreeSet<u32> = next.difference(&t).copied().collect();
    let exiting: BTreeSet<u32> = t.difference(&next).copied().collect();
    Some((mass(&entering, at_next) / denom, mass(&exiting, at_t) / denom))
}

/// Everyone observed in both quarters; cell members are salaried, the
/// rest are out of the labour force.
fn rate_histories(at_t: &BTreeMap<u32, f64>, at_next: &BTreeMap<u32, f64>, universe: u32) -> Vec<PersonHistory> {
    (0..universe)
        .map(|id| {
            let state = |m: &BTreeMap<u32, f64>| {
                if m.contains_key(&id) {
                    LaborState::Salaried
                } else {
                    LaborState::NotInLabourForce
                }
            };
            PersonHistory {
                id: person(id),
                sex: Sex::Female,
                region: 27,
                visits: vec![
                    visit(start(), 1, state(at_t), at_t.get(&id).copied().unwrap_or(7.0)),
                    visit(start().next(), 2, state(at_next), at_next.get(&id).copied().unwrap_or(7.0)),
                ],
                attrit: None,
            }
        })
        .collect()
}

fn rate_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut checked = 0;
    for case in 0..1000 {
        let (at_t, at_next) = rate_instance(&mut rng);
        let oracle = rate_oracle(&at_t, &at_next);
        let direct = entry_exit_rates(&at_t, &at_next);
        let universe = at_t.keys().chain(at_next.keys()).max().map_or(0, |m| m + 1);
        let hs = rate_histories(&at_t, &at_next, universe);
        let pairs = transitions(&hs);
        let cell = compute_rate_cells(&pairs, CellFamily::Region)
            .into_iter()
            .find(|c| c.key.emp_type == LaborState::Salaried);
        match oracle {
            None => {
                ensure(direct.entry.is_none(), || format!("case {case}: rates defined on an empty cell"))?;
                ensure(cell.is_none(), || format!("case {case}: a cell without members"))?;
            }
            Some((entry, exit)) => {
                let cell = cell.ok_or_else(|| format!("case {case}: cell missing"))?;
                for r in [direct, cell.rates] {
                    ensure(r.entry == Some(entry) && r.exit == Some(exit), || {
                        format!("case {case}: ({:?}, {:?}) vs oracle ({entry}, {exit})", r.entry, r.exit)
                    })?;
                    let g = r.gross.unwrap();
                    ensure(g == entry + exit, || format!("case {case}: gross {g} is not entry + exit"))?;
                    ensure((0.0..=2.0).contains(&entry) && (0.0..=2.0).contains(&exit) && g <= 2.0, || {
                        format!("case {case}: rates out of bounds")
                    })?;
                }
                checked += 1;
            }
        }
    }
    let at_t: BTreeMap<char, f64> = [('a', 1.0), ('b', 1.0)].into();
    let at_next: BTreeMap<char, f64> = [('b', 1.0), ('c', 1.0), ('d', 1.0)].into();
    let hand = entry_exit_rates(&at_t, &at_next);
    ensure(hand.entry == Some(0.8) && hand.exit == Some(0.4), || format!("hand example gave {hand:?}"))?;
    Ok(format!("{checked} non-empty instances (of 1000) equal the enumeration oracle exactly; hand example (0.8, 0.4)"))
}

// ----------------------------------------------------------------- 6

fn least_squares() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let (mut worst_beta, mut worst_orth): (f64, f64) = (0.0, 0.0);
    for case in 0..100 {
        let k = rng.random_range(1..=40usize);
        let n = rng.random_range(k + 5..=500);
        let mut frame = Frame::default();
        let mut terms = Vec::new();
        for j in 0..k - 1 {
            let name = format!("x{j:02}");
            frame = frame.with_numeric(&name, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
            terms.push(Term::continuous(&name));
        }
        frame = frame.with_numeric("y", (0..n).map(|_| rng.random_range(-5.0..5.0)).collect());
        let spec = DesignSpec {
            response: "y".into(),
            terms,
            intercept: true,
        };
        let design = build_design(&spec, &frame).map_err(|e| format!("case {case}: {e}"))?;
        let fit = ols_fit(&design).map_err(|e| format!("case {case}: {e}"))?;
        let xtx = design.x.transpose() * &design.x;
        let xty = design.x.transpose() * &design.y;
        let oracle = xtx.cholesky().ok_or("normal matrix not positive definite")?.solve(&xty);
        worst_beta = worst_beta.max((&fit.beta - &oracle).amax());
        let resid = &design.y - &design.x * &fit.beta;
        worst_orth = worst_orth.max((design.x.transpose() * resid).amax());
    }
    ensure(worst_beta <= 1e-8, || format!("coefficients differ by {worst_beta:e}"))?;
    ensure(worst_orth <= 1e-8, || format!("X'e reaches {worst_orth:e}"))?;

    // hand-built dummy design: group dummies without an intercept, and
    // state-by-sex dummies with state 27 left out for each sex
    let mut groups = Vec::new();
    let mut states = Vec::new();
    let mut sexes = Vec::new();
    let mut y = Vec::new();
    let truth = |g: &str, s: &str, x: &str| {
        (if g == "A" { 1.0 } else { 2.5 })
            + match (s, x) {
                ("29", "Female") => -0.75,
                ("29", "Male") => 0.5,
                _ => 0.0,
            }
    };
    for g in ["A", "B"] {
        for s in ["27", "29"] {
            for x in ["Female", "Male"] {
                for _ in 0..3 {
                    groups.push(g.to_string());
                    states.push(s.to_string());
                    sexes.push(x.to_string());
                    y.push(truth(g, s, x));
                }
            }
        }
    }
    let frame = Frame::default()
        .with_factor("group", groups)
        .with_factor("state", states)
        .with_factor("sex", sexes)
        .with_numeric("y", y);
    let spec = DesignSpec {
        response: "y".into(),
        terms: vec![
            Term::factors(&["group"]),
            Term::factors(&["state", "sex"]).omitting(&["27", "Female"]).omitting(&["27", "Male"]),
        ],
        intercept: false,
    };
    let design = build_design(&spec, &frame).map_err(|e| e.to_string())?;
    let names = design.column_names();
    let want = ["group=A", "group=B", "state=29:sex=Female", "state=29:sex=Male"];
    ensure(names == want, || format!("columns {names:?}"))?;
    let fit = ols_fit(&design).map_err(|e| e.to_string())?;
    let expect = DVector::from_vec(vec![1.0, 2.5, -0.75, 0.5]);
    let hand_err = (&fit.beta - &expect).amax();
    ensure(hand_err <= 1e-12, || format!("hand design off by {hand_err:e}"))?;
    Ok(format!(
        "100 random designs within {worst_beta:.1e} of the normal equations, X'e at most {worst_orth:.1e}; hand design has no intercept, omits the baseline for both sexes, recovers its coefficients"
    ))
}

// ----------------------------------------------------------------- 7

fn oracle_design(frame: &Frame) -> (Vec<String>, DMatrix<f64>, DVector<f64>) {
    let n = frame.len();
    let names: Vec<String> = [
        "(Intercept)",
        "very_young",
        "young",
        "graduate",
        "has_child",
        "married",
        "e_ratio",
        "en_streak=2",
        "en_streak=3",
    ]
    .map(String::from)
    .to_vec();
    let streak = &frame.factors["en_streak"];
    let x = DMatrix::from_fn(n, names.len(), |i, j| match names[j].as_str() {
        "(Intercept)" => 1.0,
        "en_streak=2" => f64::from(u8::from(streak[i] == "2")),
        "en_streak=3" => f64::from(u8::from(streak[i] == "3")),
        other => frame.numerics[other][i],
    });
    let y = DVector::from_column_slice(&frame.numerics["lost"]);
    (names, x, y)
}

fn neg_mean_ll(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> (f64, DVector<f64>) {
    let eta = x * b;
    let n = x.nrows() as f64;
    let mut f = 0.0;
    let mut resid = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        let e = eta[i];
        let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
        f += log1pexp - y[i] * e;
        resid[i] = 1.0 / (1.0 + (-e).exp()) - y[i];
    }
    (f / n, x.transpose() * resid / n)
}

/// BFGS with backtracking on the mean negative log-likelihood.
fn bfgs(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let k = x.ncols();
    let mut b = DVector::zeros(k);
    let mut h = DMatrix::<f64>::identity(k, k);
    let (mut f, mut g) = neg_mean_ll(x, y, &b);
    for _ in 0..2000 {
        if g.amax() < 1e-13 {
            break;
        }
        let d = -(&h * &g);
        let mut step = 1.0;
        let (mut b_next, mut f_next, mut g_next);
        loop {
            b_next = &b + &d * step;
            (f_next, g_next) = neg_mean_ll(x, y, &b_next);
            if f_next <= f + 1e-4 * step * g.dot(&d) || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        if f_next > f || (f_next == f && g_next.amax() >= g.amax()) {
            // at the rounding floor
            break;
        }
        let s = &b_next - &b;
        let yv = &g_next - &g;
        let sy = s.dot(&yv);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(k, k);
            let left = &i - &s * yv.transpose() * rho;
            let right = &i - &yv * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
        }
        b = b_next;
        f = f_next;
        g = g_next;
    }
    b
}

fn logit() -> Outcome {
    let truth = default_logit_truth();
    let sample = generate_logit_sample(20_000, &truth, 7);
    let design = build_design(&sample.spec, &sample.frame).map_err(|e| e.to_string())?;
    let fit = logit_fit(&design, &LogitOptions::default()).map_err(|e| e.to_string())?;

    let eta = &design.x * &fit.beta;
    let resid = DVector::from_fn(design.n(), |i, _| design.y[i] - 1.0 / (1.0 + (-eta[i]).exp()));
    let score = (design.x.transpose() * resid).amax();
    ensure(score < 1e-8, || format!("score max-norm {score:e}"))?;

    let (names, x, y) = oracle_design(&sample.frame);
    let oracle = bfgs(&x, &y);
    let info = {
        let e = &x * &oracle;
        let mut m = DMatrix::<f64>::zeros(x.ncols(), x.ncols());
        for i in 0..x.nrows() {
            let p = 1.0 / (1.0 + (-e[i]).exp());
            let row = x.row(i).transpose();
            m += &row * row.transpose() * (p * (1.0 - p));
        }
        m
    };
    let cov = info.try_inverse().ok_or("singular information")?;
    let fitted = design.column_names();
    let (mut worst_gap, mut worst_z): (f64, f64) = (0.0, 0.0);
    for (j, name) in names.iter().enumerate() {
        let pos = fitted.iter().position(|c| c == name).ok_or_else(|| format!("no column {name}"))?;
        worst_gap = worst_gap.max((fit.beta[pos] - oracle[j]).abs());
        let t = truth.iter().find(|(k, _)| k == name).map_or(0.0, |(_, v)| *v);
        worst_z = worst_z.max((oracle[j] - t).abs() / cov[(j, j)].sqrt());
    }
    ensure(worst_gap <= 1e-6, || format!("estimate differs from the BFGS maximizer by {worst_gap:e}"))?;
    ensure(worst_z <= 3.0, || format!("a coefficient lies {worst_z:.2} SEs from truth"))?;
    Ok(format!(
        "score {score:.1e}; within {worst_gap:.1e} of the BFGS maximizer; largest distance from truth {worst_z:.2} SEs ({} iterations)",
        fit.stats.iterations
    ))
}

// ----------------------------------------------------------------- 8

fn mean_prob(x: &DMatrix<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).sum::<f64>() / x.nrows() as f64
}

/// AME of column `j` by counterfactuals or central differences;
/// `siblings` are the other columns of the same factor.
fn ame_oracle(x: &DMatrix<f64>, beta: &DVector<f64>, j: usize, siblings: &[usize], continuous: bool) -> f64 {
    if continuous {
        let h = 1e-5;
        let mut up = x.clone();
        let mut down = x.clone();
        for i in 0..x.nrows() {
            up[(i, j)] += h;
            down[(i, j)] -= h;
        }
        (mean_prob(&up, beta) - mean_prob(&down, beta)) / (2.0 * h)
    } else {
        let mut one = x.clone();
        let mut zero = x.clone();
        for i in 0..x.nrows() {
            for &s in siblings {
                one[(i, s)] = 0.0;
                zero[(i, s)] = 0.0;
            }
            one[(i, j)] = 1.0;
            zero[(i, j)] = 0.0;
        }
        mean_prob(&one, beta) - mean_prob(&zero, beta)
    }
}

fn marginal_effects() -> Outcome {
    let sample = generate_logit_sample(5_000, &default_logit_truth(), 8);
    let design = build_design(&sample.spec, &sample.frame).map_err(|e| e.to_string())?;
    let fit = logit_fit(&design, &LogitOptions::default()).map_err(|e| e.to_string())?;
    let ame = average_marginal_effects(&fit, &design, PValueDist::Normal);
    let names = design.column_names();
    let streak_cols: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("en_streak="))
        .map(|(i, _)| i)
        .collect();
    let (mut worst_est, mut worst_se): (f64, f64) = (0.0, 0.0);
    for a in &ame {
        let j = names.iter().position(|n| *n == a.term).ok_or("unknown term")?;
        let continuous = a.term == "e_ratio";
        let siblings: Vec<usize> = if streak_cols.contains(&j) { streak_cols.clone() } else { vec![j] };
        let est = ame_oracle(&design.x, &fit.beta, j, &siblings, continuous);
        worst_est = worst_est.max((a.estimate - est).abs());

        // delta method with a numerical gradient
        let h = 1e-5;
        let grad = DVector::from_fn(design.k(), |m, _| {
            let mut up = fit.beta.clone();
            let mut down = fit.beta.clone();
            up[m] += h;
            down[m] -= h;
            (ame_oracle(&design.x, &up, j, &siblings, continuous) - ame_oracle(&design.x, &down, j, &siblings, continuous))
                / (2.0 * h)
        });
        let se = (grad.transpose() * &fit.covariance * &grad)[0].sqrt();
        worst_se = worst_se.max((a.std_error - se).abs());
    }
    ensure(ame.len() == design.k() - 1, || format!("{} effects for {} columns", ame.len(), design.k()))?;
    ensure(worst_est <= 1e-6, || format!("effects differ from the oracle by {worst_est:e}"))?;
    ensure(worst_se <= 1e-6, || format!("standard errors differ from the oracle by {worst_se:e}"))?;

    let mut zeroed = fit.clone();
    for name in ["married", "e_ratio", "en_streak=3"] {
        let j = names.iter().position(|n| n == name).unwrap();
        zeroed.beta[j] = 0.0;
    }
    let z = average_marginal_effects(&zeroed, &design, PValueDist::Normal);
    for name in ["married", "e_ratio", "en_streak=3"] {
        let e = z.iter().find(|c| c.term == name).unwrap().estimate;
        ensure(e == 0.0, || format!("zero coefficient on {name} gave effect {e}"))?;
    }
    Ok(format!(
        "{} effects within {worst_est:.1e} of counterfactual and finite-difference oracles, SEs within {worst_se:.1e}; zero coefficients give zero effects",
        ame.len()
    ))
}

// ----------------------------------------------------------------- 9

fn feature_derivation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let config = FeatureConfig::default();
    let mut rows = 0;
    for id in 0..10_000u32 {
        let len = rng.random_range(1..=4);
        let states: Vec<LaborState> = (0..len).map(|_| LaborState::OBSERVED[rng.random_range(0..7)]).collect();
        let h = PersonHistory {
            id: person(id),
            sex: Sex::Male,
            region: 27,
            visits: states
                .iter()
                .enumerate()
                .map(|(i, s)| visit(start().offset(i as i64), i as u8 + 1, *s, 1.0))
                .collect(),
            attrit: None,
        };
        let got = derive_features(&h, &config);
        let employed: Vec<bool> = states
            .iter()
            .map(|s| {
                matches!(
                    s,
                    LaborState::SelfEmployed
                        | LaborState::Casual
                        | LaborState::Salaried
                        | LaborState::SickAbsent
                        | LaborState::NotWorking
                )
            })
            .collect();
        ensure(config.dichotomy == EmpDichotomy::Table3, || "unexpected default dichotomy".into())?;
        ensure(got.len() == len - 1, || format!("history {id}: {} rows", got.len()))?;
        for (i, r) in got.iter().enumerate() {
            let e = employed[..=i].iter().filter(|b| **b).count() as f64;
            let n = (i + 1) as f64 - e;
            let ratio = (e - n) / (i + 1) as f64;
            let mut streak = 0;
            for k in (0..=i).rev() {
                if employed[k] != employed[i] {
                    break;
                }
                streak += 1;
            }
            let streak = streak.min(3);
            let lost = u8::from(employed[i] && !employed[i + 1]);
            let gained = u8::from(!employed[i] && employed[i + 1]);
            ensure(r.e_ratio == ratio && u32::from(r.en_streak) == streak, || {
                format!("history {id} row {i}: ({}, {}) vs ({ratio}, {streak})", r.e_ratio, r.en_streak)
            })?;
            ensure(r.lost == lost && r.gained == gained, || format!("history {id} row {i}: outcomes differ"))?;
            ensure(r.lost + r.gained <= 1, || format!("history {id} row {i}: lost and gained"))?;
            rows += 1;
        }
    }
    Ok(format!("{rows} feature rows from 10000 histories equal the brute-force scan"))
}

// ----------------------------------------------------------------- 10

fn panelflow(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_panelflow"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("panelflow {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = dir.path().join("synth.toml");
    std::fs::write(
        &spec,
        "[synth]\nseed = 10\n",
    )
    .map_err(|e| e.to_string())?;
    let bundle = dir.path().join("bundle");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    panelflow(&["synth", "--manifest", &s(&spec), "--out", &s(&bundle)])?;
    let manifest = s(&bundle.join("manifest.toml"));
    let (a, b) = (bundle.join("run1"), bundle.join("run4"));
    panelflow(&["pipeline", "--manifest", &manifest, "--out", &s(&a), "--threads", "1"])?;
    panelflow(&["pipeline", "--manifest", &manifest, "--out", &s(&b), "--threads", "4"])?;
    let (ta, tb) = (tree(&a), tree(&b));
    ensure(ta.keys().eq(tb.keys()), || "the two runs wrote different files".into())?;
    let differing: Vec<&String> = ta.iter().filter(|(k, v)| tb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("files differ: {differing:?}"))?;
    ensure(ta.len() > 20, || format!("only {} artifacts", ta.len()))?;
    Ok(format!("{} artifacts byte-identical under --threads 1 and 4", ta.len()))
}
