//! Pipeline stages. Each stage reads the artifacts of earlier stages from
//! the output directory and writes its own into `<out>/<stage>/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use panelflow::econometrics::{
    average_marginal_effects, build_design, logit_fit, ols_fit, significance_filter, stars,
    write_coefficients, Coefficient, Covariance, DesignSpec, Frame, LogitOptions, PValueDist,
    RegressionResult, Term,
};
use panelflow::flows::ecdf::{write_ecdf, write_zero_tally};
use panelflow::flows::rates::write_rate_cells;
use panelflow::flows::matrix::write_matrices;
use panelflow::flows::{
    average_matrices, cell_filter, compute_rate_cells, earnings_ratio_ecdf, flow_matrices,
    CellFamily, FlowMatrix,
};
use panelflow::matcher::{apply_mapping, match_years, split_due_for_revisit, validate_mapping};
use panelflow::microdata::{
    assign_panels, fix_revisit_quarters, parse_visit_file, sort_records, write_visit_file,
    HouseholdId, PanelSchedule, PersonVisit, RevisitCoding, SchemaConfig, Sex, SurveyYear,
    YearQuarter,
};
use panelflow::panel::{
    build_histories, derive_all_features, filter_working_age, read_features, read_histories,
    transitions, write_features, write_histories, FeatureLine, PersonHistory,
};
use panelflow::synth::{corrupt, generate, write_ground_truth, CorruptionSpec, SynthConfig};
use panelflow::table::{self, fmt_opt, read_visits, write_visits, RunMeta};
use panelflow::validate::{attrition_table, validate_households};

use crate::manifest::{InputFile, InputKind, LoadedManifest, Manifest, PValues, Thresholds};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Validate,
    MatchFsu,
    BuildPanel,
    Flows,
    Rates,
    Regress,
    Ecdf,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Validate,
        Stage::MatchFsu,
        Stage::BuildPanel,
        Stage::Flows,
        Stage::Rates,
        Stage::Regress,
        Stage::Ecdf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Validate => "validate",
            Stage::MatchFsu => "match-fsu",
            Stage::BuildPanel => "build-panel",
            Stage::Flows => "flows",
            Stage::Rates => "rates",
            Stage::Regress => "regress",
            Stage::Ecdf => "ecdf",
        }
    }

    fn enabled(self, m: &Manifest) -> bool {
        let s = &m.stages;
        match self {
            Stage::Ingest => s.ingest,
            Stage::Validate => s.validate,
            Stage::MatchFsu => s.match_fsu,
            Stage::BuildPanel => s.build_panel,
            Stage::Flows => s.flows,
            Stage::Rates => s.rates,
            Stage::Regress => s.regress,
            Stage::Ecdf => s.ecdf,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a finished stage reports back.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageOutcome {
    pub households_removed: usize,
}

/// A manifest plus command-line overrides and the output directory.
#[derive(Clone, Debug)]
pub struct Run {
    pub manifest: LoadedManifest,
    pub out: PathBuf,
}

impl Run {
    /// Checks inputs before any stage runs.
    pub fn new(manifest: LoadedManifest, out: PathBuf) -> Result<Self> {
        manifest.check_inputs(&out)?;
        Ok(Self { manifest, out })
    }

    fn m(&self) -> &Manifest {
        &self.manifest.manifest
    }

    fn meta(&self, stage: &str) -> RunMeta {
        RunMeta {
            tool: format!("panelflow {VERSION} {stage}"),
            manifest_sha256: self.manifest.sha256.clone(),
            seed: self.m().seed,
        }
    }

    fn schedule(&self) -> Result<PanelSchedule> {
        match &self.m().schedule {
            Some(p) => {
                let path = self.manifest.resolve(p);
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                Ok(PanelSchedule::parse(&text)?)
            }
            None => Ok(PanelSchedule::plfs_urban()),
        }
    }

    fn thresholds(&self) -> &Thresholds {
        &self.m().thresholds
    }

    fn artifact(&self, stage: Stage, file: &str) -> PathBuf {
        self.out.join(stage.name()).join(file)
    }

    fn open(&self, stage: Stage, file: &str) -> Result<BufReader<File>> {
        let path = self.artifact(stage, file);
        let f = File::open(&path)
            .with_context(|| format!("missing {} artifact {}; run that stage first", stage, path.display()))?;
        Ok(BufReader::new(f))
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        let dir = self.out.join(stage.name());
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        let failed = self.out.join("failed").join(stage.name());
        log::info!("stage {stage}");
        let result = match stage {
            Stage::Ingest => self.ingest(&dir).map(|_| StageOutcome::default()),
            Stage::Validate => self.validate(&dir),
            Stage::MatchFsu => self.match_fsu(&dir).map(|_| StageOutcome::default()),
            Stage::BuildPanel => self.build_panel(&dir).map(|_| StageOutcome::default()),
            Stage::Flows => self.flows(&dir).map(|_| StageOutcome::default()),
            Stage::Rates => self.rates(&dir).map(|_| StageOutcome::default()),
            Stage::Regress => self.regress(&dir).map(|_| StageOutcome::default()),
            Stage::Ecdf => self.ecdf(&dir).map(|_| StageOutcome::default()),
        };
        if failed.exists() {
            fs::remove_dir_all(&failed)?;
        }
        match result {
            Ok(o) => Ok(o),
            Err(e) => {
                fs::create_dir_all(failed.parent().expect("failed dir has a parent"))?;
                fs::rename(&dir, &failed)?;
                Err(e.context(format!("stage {stage} failed; partial output moved to {}", failed.display())))
            }
        }
    }

    /// Runs every enabled stage in order, stopping at the first failure.
    pub fn run_pipeline(&self) -> Result<()> {
        for stage in Stage::ALL {
            if stage.enabled(self.m()) {
                self.run_stage(stage)?;
            } else {
                log::info!("stage {stage} disabled; reusing existing artifacts");
            }
        }
        Ok(())
    }

    fn years(&self) -> Vec<SurveyYear> {
        self.manifest.survey_years()
    }

    fn ingest(&self, dir: &Path) -> Result<()> {
        let schema = SchemaConfig::from_path(&self.manifest.schema_path()?)?;
        let schedule = self.schedule()?;
        let meta = self.meta("ingest");
        let mut by_year: BTreeMap<SurveyYear, Vec<PersonVisit>> = BTreeMap::new();
        let mut flag_rows = Vec::new();
        let mut coding_rows = Vec::new();
        for input in &self.m().inputs {
            let InputFile { path, survey_year, kind } = input;
            let label = path.display().to_string();
            let full = self.manifest.resolve(path);
            let file = File::open(&full).with_context(|| format!("opening {}", full.display()))?;
            let parsed = parse_visit_file(BufReader::new(file), &schema, Some(*survey_year))
                .with_context(|| format!("parsing {label}"))?;
            for f in &parsed.flags {
                flag_rows.push(vec![label.clone(), f.record.to_string(), f.field.clone(), f.value.clone()]);
            }
            let records = match kind {
                InputKind::FirstVisit => {
                    if let Some(r) = parsed.records.iter().find(|r| r.survey_year != *survey_year) {
                        bail!("{label}: record of survey year {} in a {survey_year} file", r.survey_year);
                    }
                    coding_rows.push(vec![label, survey_year.to_string(), "first-visit".into()]);
                    parsed.records
                }
                InputKind::Revisit => {
                    let (records, coding) = fix_revisit_quarters(parsed.records, *survey_year)
                        .with_context(|| format!("repairing {label}"))?;
                    let coding = match coding {
                        RevisitCoding::Unaffected => "unaffected",
                        RevisitCoding::Shifted => "shifted",
                        RevisitCoding::AlreadyCorrect => "already-correct",
                    };
                    coding_rows.push(vec![label, survey_year.to_string(), coding.into()]);
                    records
                }
            };
            by_year.entry(*survey_year).or_default().extend(records);
        }
        for (year, mut records) in by_year {
            assign_panels(&mut records, &schedule)?;
            sort_records(&mut records);
            for w in records.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if a.household_id() == b.household_id()
                    && a.person_no == b.person_no
                    && a.year_quarter() == b.year_quarter()
                {
                    bail!(
                        "duplicate person {} in {} visit {}",
                        b.person_key(),
                        b.year_quarter(),
                        b.visit_no
                    );
                }
            }
            write_visits(create(dir, &format!("visits_{year}.csv"))?, Some(&meta), &records)?;
        }
        table::write_rows(
            create(dir, "code_flags.csv")?,
            Some(&meta),
            &["file", "record", "field", "value"],
            flag_rows,
        )?;
        table::write_rows(
            create(dir, "revisit_coding.csv")?,
            Some(&meta),
            &["file", "survey_year", "coding"],
            coding_rows,
        )?;
        Ok(())
    }

    fn validate(&self, dir: &Path) -> Result<StageOutcome> {
        let rules = self.thresholds().rules();
        let meta = self.meta("validate");
        let (mut rejections, mut warnings, mut summary) = (Vec::new(), Vec::new(), Vec::new());
        let mut removed = 0;
        for year in self.years() {
            let records = read_visits(self.open(Stage::Ingest, &format!("visits_{year}.csv"))?)?;
            let (clean, report) = validate_households(records, &rules);
            removed += report.households_removed();
            for r in &report.rejections {
                rejections.push(vec![
                    year.to_string(),
                    r.household.to_string(),
                    r.rule.id().into(),
                    r.rule.name().into(),
                    r.detail.clone(),
                ]);
            }
            for w in &report.warnings {
                warnings.push(vec![
                    year.to_string(),
                    w.household.to_string(),
                    w.quarter.to_string(),
                    w.reported.to_string(),
                    w.members.to_string(),
                ]);
            }
            let mut row = vec![
                year.to_string(),
                report.households_checked.to_string(),
                report.households_removed().to_string(),
            ];
            row.extend(report.counts().values().map(usize::to_string));
            summary.push(row);
            write_visits(create(dir, &format!("clean_{year}.csv"))?, Some(&meta), &clean)?;
        }
        table::write_rows(
            create(dir, "rejections.csv")?,
            Some(&meta),
            &["survey_year", "household", "rule", "rule_name", "detail"],
            rejections,
        )?;
        table::write_rows(
            create(dir, "size_warnings.csv")?,
            Some(&meta),
            &["survey_year", "household", "quarter", "reported_size", "members_present"],
            warnings,
        )?;
        table::write_rows(
            create(dir, "summary.csv")?,
            Some(&meta),
            &["survey_year", "households_checked", "households_removed", "R1", "R2", "R3", "R4"],
            summary,
        )?;
        Ok(StageOutcome {
            households_removed: removed,
        })
    }

    fn match_fsu(&self, dir: &Path) -> Result<()> {
        let years = self.years();
        let schedule = self.schedule()?;
        let config = self.m().matching.config();
        let rules = self.thresholds().rules();
        let meta = self.meta("match-fsu");
        let read_clean = |y: SurveyYear| -> Result<Vec<PersonVisit>> {
            Ok(read_visits(self.open(Stage::Validate, &format!("clean_{y}.csv"))?)?)
        };

        let mut current = read_clean(years[0])?;
        let mut linked: Vec<PersonVisit> = Vec::new();
        let (mut failures, mut summary) = (Vec::new(), Vec::new());
        for pair in years.windows(2) {
            let (old_y, new_y) = (pair[0], pair[1]);
            let new = read_clean(new_y)?;
            if new_y != old_y.next() {
                log::warn!("no matching between non-consecutive years {old_y} and {new_y}");
                linked.append(&mut current);
                current = new;
                continue;
            }
            let (due, completed) = split_due_for_revisit(current, &schedule, old_y.last_quarter());
            let (scores, mapping) = match_years(&due, &new, &config);
            table::write_rows(
                create(dir, &format!("scores_{old_y}.csv"))?,
                Some(&meta),
                &["state", "district", "fsu_old", "fsu_new", "score", "eligible_households"],
                scores.iter().filter(|s| s.score > 0).map(|s| {
                    vec![
                        s.district.0.to_string(),
                        s.district.1.to_string(),
                        s.fsu_old.to_string(),
                        s.fsu_new.to_string(),
                        s.score.to_string(),
                        s.eligible_households.to_string(),
                    ]
                }),
            )?;
            mapping.write(create(dir, &format!("mapping_{old_y}.csv"))?, Some(&meta))?;

            let fsus_due = due.iter().map(|r| r.fsu).collect::<BTreeSet<_>>().len();
            let (mut rewritten, attrited) = apply_mapping(due, &mapping)?;
            let attrited: BTreeSet<HouseholdId> = attrited.into_iter().collect();
            let check = validate_mapping(&rewritten, &new, &rules);
            for r in &check.report.rejections {
                failures.push(vec![
                    old_y.to_string(),
                    r.household.to_string(),
                    r.rule.id().into(),
                    r.rule.name().into(),
                    r.detail.clone(),
                ]);
            }
            let failed: BTreeSet<HouseholdId> = check.failures.iter().cloned().collect();
            for r in &mut rewritten {
                if attrited.contains(&r.household_id()) {
                    r.panel = r.panel.as_ref().map(|p| p.unlinked(old_y));
                }
            }
            summary.push(vec![
                old_y.to_string(),
                new_y.to_string(),
                fsus_due.to_string(),
                mapping.accepted.len().to_string(),
                mapping.conflicted_olds().len().to_string(),
                mapping.unmatched.len().to_string(),
                check.households_old_year.to_string(),
                check.households_linked.to_string(),
                failed.len().to_string(),
                attrited.len().to_string(),
            ]);
            linked.extend(completed);
            linked.extend(rewritten.into_iter().filter(|r| !failed.contains(&r.household_id())));
            current = new.into_iter().filter(|r| !failed.contains(&r.household_id())).collect();
        }
        linked.append(&mut current);
        sort_records(&mut linked);
        table::write_rows(
            create(dir, "mapping_failures.csv")?,
            Some(&meta),
            &["old_year", "household", "rule", "rule_name", "detail"],
            failures,
        )?;
        table::write_rows(
            create(dir, "summary.csv")?,
            Some(&meta),
            &[
                "old_year",
                "new_year",
                "fsus_due",
                "accepted",
                "conflicted",
                "unmatched",
                "households_old_year",
                "households_linked",
                "households_failed",
                "households_unlinked",
            ],
            summary,
        )?;
        write_visits(create(dir, "linked.csv")?, Some(&meta), &linked)?;
        Ok(())
    }

    fn window(&self, records: &[PersonVisit]) -> Result<(YearQuarter, YearQuarter)> {
        if let Some(w) = &self.m().study_window {
            if w.start > w.end {
                bail!("study window starts after it ends");
            }
            return Ok((w.start, w.end));
        }
        let quarters = records.iter().map(PersonVisit::year_quarter);
        match (quarters.clone().min(), quarters.max()) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => bail!("no linked records"),
        }
    }

    fn build_panel(&self, dir: &Path) -> Result<()> {
        let meta = self.meta("build-panel");
        let records = read_visits(self.open(Stage::MatchFsu, "linked.csv")?)?;
        let window = self.window(&records)?;
        let records: Vec<PersonVisit> = records
            .into_iter()
            .filter(|r| (window.0..=window.1).contains(&r.year_quarter()))
            .collect();
        let histories = build_histories(&records, Some(window.1))?;
        write_histories(create(dir, "histories.csv")?, Some(&meta), &histories)?;

        let band = self.thresholds().working_age();
        let features: Vec<_> = derive_all_features(&histories, &self.m().regression.features()?)
            .into_iter()
            .filter(|f| band.contains(f.age))
            .collect();
        write_features(create(dir, "features.csv")?, Some(&meta), &features)?;

        let attrition = attrition_table(&records, &self.schedule()?, window);
        let (headers, rows) = attrition.to_rows();
        let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
        table::write_rows(create(dir, "attrition.csv")?, Some(&meta), &headers, rows)?;
        table::write_rows(
            create(dir, "first_visit_households.csv")?,
            Some(&meta),
            &["panel", "households"],
            attrition
                .first_visit_households
                .iter()
                .map(|(p, n)| vec![p.to_string(), n.to_string()]),
        )?;
        Ok(())
    }

    fn working_age_histories(&self) -> Result<Vec<PersonHistory>> {
        let all = read_histories(self.open(Stage::BuildPanel, "histories.csv")?)?;
        Ok(filter_working_age(all, self.thresholds().working_age()))
    }

    fn flows(&self, dir: &Path) -> Result<()> {
        let meta = self.meta("flows");
        let histories = self.working_age_histories()?;
        let pairs = transitions(&histories);
        let quarterly = flow_matrices(&pairs);
        write_matrices(create(dir, "quarterly.csv")?, Some(&meta), &quarterly)?;
        let mode = self.m().regression.averaging.into();
        let mut averages = Vec::new();
        for sex in [Sex::Female, Sex::Male, Sex::Other] {
            let of_sex: Vec<FlowMatrix> = quarterly.iter().filter(|m| m.sex == sex).cloned().collect();
            if !of_sex.is_empty() {
                averages.push(average_matrices(&of_sex, mode)?);
            }
        }
        write_matrices(create(dir, "average.csv")?, Some(&meta), &averages)?;
        Ok(())
    }

    fn rates(&self, dir: &Path) -> Result<()> {
        let meta = self.meta("rates");
        let histories = self.working_age_histories()?;
        let pairs = transitions(&histories);
        for family in [CellFamily::Industry, CellFamily::Region, CellFamily::RegionIndustry] {
            let cells = compute_rate_cells(&pairs, family);
            let name = format!("{}.csv", family.label().replace('-', "_"));
            write_rate_cells(create(dir, &name)?, Some(&meta), family, &cells)?;
            if family == CellFamily::RegionIndustry {
                let kept = cell_filter(cells, &self.thresholds().cells());
                write_rate_cells(create(dir, "regression_cells.csv")?, Some(&meta), family, &kept)?;
            }
        }
        Ok(())
    }

    fn regress(&self, dir: &Path) -> Result<()> {
        let meta = self.meta("regress");
        let alpha = self.thresholds().alpha;
        let mut fits = Vec::new();

        let ols = self.fit_rates()?;
        write_coefficients(create(dir, "ols.csv")?, Some(&meta), &ols.coefficients)?;
        write_coefficients(
            create(dir, "ols_significant.csv")?,
            Some(&meta),
            &significance_filter(&ols.coefficients, alpha),
        )?;
        fits.push(fit_row("ols", "all", "gross_flow", &ols));

        let features = read_features(self.open(Stage::BuildPanel, "features.csv")?)?;
        let sexes: BTreeSet<Sex> = features.iter().map(|f| f.sex).collect();
        let mut ame_rows = Vec::new();
        let mut significant_rows = Vec::new();
        for sex in sexes {
            for outcome in ["lost", "gained"] {
                let rows: Vec<&FeatureLine> = features
                    .iter()
                    .filter(|f| f.sex == sex && (f.employed == 1) == (outcome == "lost"))
                    .collect();
                if rows.is_empty() {
                    log::warn!("no rows for the {} {outcome} model", sex.label());
                    continue;
                }
                let tag = format!("{}_{outcome}", sex.label().to_lowercase());
                let (fit, ames) = self
                    .fit_features(&rows, outcome)
                    .with_context(|| format!("logit for {} {outcome}", sex.label()))?;
                write_coefficients(create(dir, &format!("logit_{tag}.csv"))?, Some(&meta), &fit.coefficients)?;
                write_coefficients(create(dir, &format!("ame_{tag}.csv"))?, Some(&meta), &ames)?;
                fits.push(fit_row("logit", sex.label(), outcome, &fit));
                for a in &ames {
                    let row = ame_row(sex, outcome, a);
                    if a.p_value < alpha {
                        significant_rows.push(row.clone());
                    }
                    ame_rows.push(row);
                }
            }
        }
        let header = ["term", "sex", "outcome", "ame", "std_error", "p_value", "stars"];
        table::write_rows(create(dir, "ame.csv")?, Some(&meta), &header, ame_rows)?;
        table::write_rows(create(dir, "ame_significant.csv")?, Some(&meta), &header, significant_rows)?;
        table::write_rows(
            create(dir, "fits.csv")?,
            Some(&meta),
            &["model", "sex", "outcome", "n", "k", "rss", "log_likelihood", "iterations", "covariance"],
            fits,
        )?;
        Ok(())
    }

    /// Gross-flow rates on industry-by-type-by-sex dummies, state-by-sex
    /// dummies less the baseline state, and period dummies; no intercept.
    fn fit_rates(&self) -> Result<RegressionResult> {
        let (headers, rows) = table::read_rows(self.open(Stage::Rates, "regression_cells.csv")?)?;
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("regression_cells.csv lacks column {name}"))
        };
        let (sex, emp, state, industry, quarter, gross) = (
            col("sex")?,
            col("emp_type")?,
            col("state")?,
            col("industry")?,
            col("quarter")?,
            col("gross_flow")?,
        );
        let rows: Vec<&Vec<String>> = rows.iter().filter(|r| r[gross] != "NA").collect();
        if rows.is_empty() {
            bail!("no rate cells pass the cell filter");
        }
        let pick = |i: usize| rows.iter().map(|r| r[i].clone()).collect::<Vec<_>>();
        let y = rows
            .iter()
            .map(|r| r[gross].parse::<f64>().with_context(|| format!("bad gross_flow `{}`", r[gross])))
            .collect::<Result<Vec<_>>>()?;
        let frame = Frame::default()
            .with_factor("industry", pick(industry))
            .with_factor("emp_type", pick(emp))
            .with_factor("sex", pick(sex))
            .with_factor("state", pick(state))
            .with_factor("period", pick(quarter))
            .with_numeric("gross_flow", y);
        let base = self.m().regression.baseline_state.to_string();
        let mut state_sex = Term::factors(&["state", "sex"]);
        for s in [Sex::Male, Sex::Female, Sex::Other] {
            state_sex = state_sex.omitting(&[&base, s.label()]);
        }
        let spec = DesignSpec {
            response: "gross_flow".into(),
            terms: vec![
                Term::factors(&["industry", "emp_type", "sex"]),
                state_sex,
                Term::factor_drop_first("period"),
            ],
            intercept: false,
        };
        Ok(ols_fit(&build_design(&spec, &frame)?)?)
    }

    fn fit_features(&self, rows: &[&FeatureLine], outcome: &str) -> Result<(RegressionResult, Vec<Coefficient>)> {
        let num = |f: fn(&FeatureLine) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let fac = |f: fn(&FeatureLine) -> String| rows.iter().map(|r| f(r)).collect::<Vec<String>>();
        let y = if outcome == "lost" { num(|r| f64::from(r.lost)) } else { num(|r| f64::from(r.gained)) };
        let reg = &self.m().regression;
        let mut frame = Frame::default()
            .with_numeric("very_young", num(|r| f64::from(r.very_young)))
            .with_numeric("young", num(|r| f64::from(r.young)))
            .with_numeric("graduate", num(|r| f64::from(r.graduate)))
            .with_numeric("has_child", num(|r| f64::from(r.has_child)))
            .with_numeric("married", num(|r| f64::from(r.married)))
            .with_numeric("e_ratio", num(|r| r.e_ratio))
            .with_factor("en_streak", fac(|r| r.en_streak.to_string()))
            .with_factor("period", fac(|r| r.quarter.to_string()))
            .with_factor("visit", fac(|r| r.visit_no.to_string()))
            .with_numeric(outcome, y);
        if reg.cluster_robust {
            frame.clusters = Some(fac(|r| r.household.clone()));
        }
        let spec = DesignSpec {
            response: outcome.into(),
            terms: vec![
                Term::binary("very_young"),
                Term::binary("young"),
                Term::binary("graduate"),
                Term::binary("has_child"),
                Term::binary("married"),
                Term::continuous("e_ratio"),
                Term::factor_drop_first("en_streak"),
                Term::factor_drop_first("period"),
                Term::factor_drop_first("visit"),
            ],
            intercept: true,
        };
        let design = build_design(&spec, &frame)?;
        let p_values = match reg.logit_p_values {
            PValues::Normal => PValueDist::Normal,
            PValues::StudentT => PValueDist::StudentT {
                df: (design.n() - design.k()) as f64,
            },
        };
        let opts = LogitOptions {
            covariance: if reg.cluster_robust { Covariance::ClusterRobust } else { Covariance::Classical },
            p_values,
            ..LogitOptions::default()
        };
        let fit = logit_fit(&design, &opts)?;
        let ames = average_marginal_effects(&fit, &design, p_values);
        Ok((fit, ames))
    }

    fn ecdf(&self, dir: &Path) -> Result<()> {
        let meta = self.meta("ecdf");
        let histories = self.working_age_histories()?;
        let summary = earnings_ratio_ecdf(&transitions(&histories));
        write_ecdf(create(dir, "ecdf.csv")?, Some(&meta), &summary)?;
        write_zero_tally(create(dir, "zero_before.csv")?, Some(&meta), &summary)?;
        Ok(())
    }
}

fn fit_row(model: &str, sex: &str, outcome: &str, fit: &RegressionResult) -> Vec<String> {
    vec![
        model.into(),
        sex.into(),
        outcome.into(),
        fit.stats.n.to_string(),
        fit.stats.k.to_string(),
        fmt_opt(fit.stats.rss),
        fmt_opt(fit.stats.log_likelihood),
        fit.stats.iterations.to_string(),
        if fit.stats.cluster_robust { "cluster-robust (household)" } else { "classical" }.into(),
    ]
}

fn ame_row(sex: Sex, outcome: &str, a: &Coefficient) -> Vec<String> {
    vec![
        a.term.clone(),
        sex.label().into(),
        outcome.into(),
        a.estimate.to_string(),
        a.std_error.to_string(),
        a.p_value.to_string(),
        stars(a.p_value).into(),
    ]
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes a synthetic bundle into `out`: the four visit files under
/// `data/`, their schema, the ground truth under `truth/`, and a manifest
/// that runs the pipeline on them into `results/`.
pub fn synth(manifest: Option<&LoadedManifest>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut config = manifest
        .and_then(|m| m.manifest.synth.clone())
        .unwrap_or_default();
    if let Some(s) = seed {
        config.seed = s;
    }
    let spec = manifest
        .and_then(|m| m.manifest.corruption)
        .unwrap_or_default();
    let miscode = config.miscode_revisit_quarters;
    let mut data = generate(&SynthConfig {
        miscode_revisit_quarters: false,
        ..config.clone()
    })?;
    let mut injections = Vec::new();
    if spec.total() > 0 {
        let split = data.year1_first_visit.len();
        let (mut year1, log) = corrupt(data.year1(), &spec, config.seed)?;
        data.year1_revisit = year1.split_off(split);
        data.year1_first_visit = year1;
        injections = log;
    }
    if miscode {
        for r in &mut data.year1_revisit {
            r.quarter += 1;
        }
    }

    let bundle = Manifest {
        schema: Some("schema.toml".into()),
        output_dir: Some("results".into()),
        seed: Some(config.seed),
        inputs: [
            (data.year1, InputKind::FirstVisit),
            (data.year1, InputKind::Revisit),
            (data.year2, InputKind::FirstVisit),
            (data.year2, InputKind::Revisit),
        ]
        .into_iter()
        .map(|(year, kind)| InputFile {
            path: PathBuf::from("data").join(file_name(year, kind)),
            survey_year: year,
            kind,
        })
        .collect(),
        thresholds: Thresholds {
            female_cell_mass: 0.0,
            male_cell_mass: 0.0,
            other_cell_mass: 0.0,
            ..Thresholds::default()
        },
        synth: Some(config.clone()),
        corruption: (spec != CorruptionSpec::default()).then_some(spec),
        ..Manifest::default()
    };
    let bundle_text = toml::to_string(&bundle)?;
    let meta = RunMeta {
        tool: format!("panelflow {VERSION} synth"),
        manifest_sha256: match manifest {
            Some(m) => m.sha256.clone(),
            None => LoadedManifest::from_manifest(bundle.clone())?.sha256,
        },
        seed: Some(config.seed),
    };

    fs::create_dir_all(out.join("data"))?;
    let schema = SchemaConfig::synthetic_fixed_width();
    fs::write(out.join("schema.toml"), schema.to_toml())?;
    for (records, year, kind) in [
        (&data.year1_first_visit, data.year1, InputKind::FirstVisit),
        (&data.year1_revisit, data.year1, InputKind::Revisit),
        (&data.year2_first_visit, data.year2, InputKind::FirstVisit),
        (&data.year2_revisit, data.year2, InputKind::Revisit),
    ] {
        write_visit_file(records, &schema, create(&out.join("data"), &file_name(year, kind))?)?;
    }
    write_ground_truth(&out.join("truth"), Some(&meta), &data.truth, &injections)?;
    fs::write(out.join("manifest.toml"), bundle_text)?;
    Ok(())
}

fn file_name(year: SurveyYear, kind: InputKind) -> String {
    let kind = match kind {
        InputKind::FirstVisit => "first_visit",
        InputKind::Revisit => "revisit",
    };
    format!("{year}_{kind}.txt")
}
