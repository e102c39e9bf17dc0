//! The TOML run manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use panelflow::flows::{Averaging, CellThresholds};
use panelflow::matcher::{MatchConfig, MemberAlignment};
use panelflow::microdata::{SurveyYear, YearQuarter};
use panelflow::panel::{EmpDichotomy, FeatureConfig, WorkingAge};
use panelflow::synth::{CorruptionSpec, SynthConfig};
use panelflow::validate::ValidationRules;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    FirstVisit,
    Revisit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: PathBuf,
    pub survey_year: SurveyYear,
    pub kind: InputKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub ingest: bool,
    pub validate: bool,
    pub match_fsu: bool,
    pub build_panel: bool,
    pub flows: bool,
    pub rates: bool,
    pub regress: bool,
    pub ecdf: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            ingest: true,
            validate: true,
            match_fsu: true,
            build_panel: true,
            flows: true,
            rates: true,
            regress: true,
            ecdf: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub max_hh_size_change: u16,
    pub max_age_change: u16,
    pub female_cell_mass: f64,
    pub male_cell_mass: f64,
    pub other_cell_mass: f64,
    pub alpha: f64,
    pub min_age: u16,
    pub max_age: u16,
}

impl Default for Thresholds {
    fn default() -> Self {
        let rules = ValidationRules::default();
        let cells = CellThresholds::default();
        let ages = WorkingAge::default();
        Self {
            max_hh_size_change: rules.max_hh_size_change,
            max_age_change: rules.max_age_change,
            female_cell_mass: cells.female,
            male_cell_mass: cells.male,
            other_cell_mass: cells.other,
            alpha: 0.05,
            min_age: ages.min,
            max_age: ages.max,
        }
    }
}

impl Thresholds {
    pub fn rules(&self) -> ValidationRules {
        ValidationRules {
            max_hh_size_change: self.max_hh_size_change,
            max_age_change: self.max_age_change,
        }
    }

    pub fn cells(&self) -> CellThresholds {
        CellThresholds {
            female: self.female_cell_mass,
            male: self.male_cell_mass,
            other: self.other_cell_mass,
        }
    }

    pub fn working_age(&self) -> WorkingAge {
        WorkingAge {
            min: self.min_age,
            max: self.max_age,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    #[default]
    PersonNo,
    Multiset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Matching {
    pub alignment: Alignment,
    pub min_score: u32,
    pub min_household_size_exclusive: u16,
}

impl Default for Matching {
    fn default() -> Self {
        let c = MatchConfig::default();
        Self {
            alignment: Alignment::PersonNo,
            min_score: c.min_score,
            min_household_size_exclusive: c.min_household_size_exclusive,
        }
    }
}

impl Matching {
    pub fn config(&self) -> MatchConfig {
        MatchConfig {
            min_household_size_exclusive: self.min_household_size_exclusive,
            min_score: self.min_score,
            alignment: match self.alignment {
                Alignment::PersonNo => MemberAlignment::PersonNo,
                Alignment::Multiset => MemberAlignment::Multiset,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: YearQuarter,
    pub end: YearQuarter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValues {
    #[default]
    Normal,
    StudentT,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingMode {
    #[default]
    Unweighted,
    OccupancyWeighted,
}

impl From<AveragingMode> for Averaging {
    fn from(m: AveragingMode) -> Self {
        match m {
            AveragingMode::Unweighted => Averaging::Unweighted,
            AveragingMode::OccupancyWeighted => Averaging::OccupancyWeighted,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Regression {
    /// State code whose state-by-sex dummies are omitted.
    pub baseline_state: u16,
    pub emp_dichotomy: String,
    /// Household-clustered sandwich errors for the logit models. Off by
    /// default; not part of the reference estimator.
    pub cluster_robust: bool,
    pub logit_p_values: PValues,
    pub averaging: AveragingMode,
    pub married_code: u8,
    pub graduate_min_education: u8,
}

impl Default for Regression {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self {
            baseline_state: 27,
            emp_dichotomy: "table3".into(),
            cluster_robust: false,
            logit_p_values: PValues::Normal,
            averaging: AveragingMode::Unweighted,
            married_code: f.married_code,
            graduate_min_education: f.graduate_min_education,
        }
    }
}

impl Regression {
    pub fn dichotomy(&self) -> Result<EmpDichotomy> {
        Ok(self.emp_dichotomy.parse()?)
    }

    pub fn features(&self) -> Result<FeatureConfig> {
        Ok(FeatureConfig {
            dichotomy: self.dichotomy()?,
            married_code: self.married_code,
            graduate_min_education: self.graduate_min_education,
            ..FeatureConfig::default()
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: Option<PathBuf>,
    /// Panel start quarters as `LABEL YYYY-Qn` lines; the urban PLFS
    /// schedule when absent.
    pub schedule: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub inputs: Vec<InputFile>,
    #[serde(default)]
    pub stages: StageToggles,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub matching: Matching,
    pub study_window: Option<Window>,
    #[serde(default)]
    pub regression: Regression,
    pub synth: Option<SynthConfig>,
    pub corruption: Option<CorruptionSpec>,
}

/// A parsed manifest with its paths resolved against its directory.
#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub sha256: String,
    pub base: PathBuf,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("manifest is not UTF-8")?;
        let manifest: Manifest =
            toml::from_str(text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            manifest,
            sha256: hex::encode(Sha256::digest(&bytes)),
            base,
        })
    }

    /// A manifest that exists only in memory, hashed by its TOML form.
    pub fn from_manifest(manifest: Manifest) -> Result<Self> {
        let text = toml::to_string(&manifest)?;
        Ok(Self {
            manifest,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
            base: PathBuf::new(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn schema_path(&self) -> Result<PathBuf> {
        match &self.manifest.schema {
            Some(p) => Ok(self.resolve(p)),
            None => bail!("manifest names no schema"),
        }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf> {
        match (flag, &self.manifest.output_dir) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.resolve(p)),
            (None, None) => bail!("no output directory: pass --out or set output_dir"),
        }
    }

    /// Survey years with inputs, ascending.
    pub fn survey_years(&self) -> Vec<SurveyYear> {
        let mut years: Vec<SurveyYear> = self.manifest.inputs.iter().map(|i| i.survey_year).collect();
        years.sort();
        years.dedup();
        years
    }

    /// Every referenced input must exist, and none may live under `out`.
    pub fn check_inputs(&self, out: &Path) -> Result<()> {
        let schema = self.schema_path()?;
        let mut paths = vec![schema];
        if let Some(s) = &self.manifest.schedule {
            paths.push(self.resolve(s));
        }
        if self.manifest.inputs.is_empty() {
            bail!("manifest lists no input files");
        }
        paths.extend(self.manifest.inputs.iter().map(|i| self.resolve(&i.path)));
        let out_abs = absolute(out);
        for p in &paths {
            if !p.is_file() {
                bail!("input {} does not exist", p.display());
            }
            if absolute(p).starts_with(&out_abs) {
                bail!("input {} lies inside the output directory {}", p.display(), out.display());
            }
        }
        Ok(())
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p)
        .or_else(|_| std::path::absolute(p))
        .unwrap_or_else(|_| p.to_path_buf())
}
