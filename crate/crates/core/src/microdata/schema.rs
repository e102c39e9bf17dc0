//! External layout description for visit files.
//!
//! A schema is a TOML document mapping every canonical field to a byte range
//! (fixed-width) or a column (delimited):
//!
//! ```toml
//! layout = "fixed-width"
//! encoding = "utf-8"
//! record_width = 80
//!
//! [fields]
//! fsu = { range = [1, 6] }
//! status_code = { range = [50, 51], codes = "status" }
//!
//! [codes]
//! status = [11, 12, 21, 31]
//! ```
//!
//! Ranges are 1-based and inclusive. Delimited layouts use
//! `{ column = "name" }` or `{ column = 3 }` (1-based) instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    SurveyYear,
    Quarter,
    VisitNo,
    Panel,
    Fsu,
    SubBlock,
    Stratum2,
    HhNo,
    PersonNo,
    State,
    District,
    Sex,
    Age,
    RelationToHead,
    Marital,
    Education,
    Religion,
    SocialGroup,
    HhSize,
    StatusCode,
    Industry,
    Earnings,
    Weight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Int,
    Float,
    Text,
}

impl Field {
    pub const ALL: [Field; 23] = [
        Field::SurveyYear,
        Field::Quarter,
        Field::VisitNo,
        Field::Panel,
        Field::Fsu,
        Field::SubBlock,
        Field::Stratum2,
        Field::HhNo,
        Field::PersonNo,
        Field::State,
        Field::District,
        Field::Sex,
        Field::Age,
        Field::RelationToHead,
        Field::Marital,
        Field::Education,
        Field::Religion,
        Field::SocialGroup,
        Field::HhSize,
        Field::StatusCode,
        Field::Industry,
        Field::Earnings,
        Field::Weight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::SurveyYear => "survey_year",
            Field::Quarter => "quarter",
            Field::VisitNo => "visit_no",
            Field::Panel => "panel",
            Field::Fsu => "fsu",
            Field::SubBlock => "sub_block",
            Field::Stratum2 => "stratum2",
            Field::HhNo => "hh_no",
            Field::PersonNo => "person_no",
            Field::State => "state",
            Field::District => "district",
            Field::Sex => "sex",
            Field::Age => "age",
            Field::RelationToHead => "relation_to_head",
            Field::Marital => "marital",
            Field::Education => "education",
            Field::Religion => "religion",
            Field::SocialGroup => "social_group",
            Field::HhSize => "hh_size",
            Field::StatusCode => "status_code",
            Field::Industry => "industry",
            Field::Earnings => "earnings",
            Field::Weight => "weight",
        }
    }

    pub fn value_type(self) -> ValueType {
        match self {
            Field::SurveyYear | Field::Panel => ValueType::Text,
            Field::Earnings | Field::Weight => ValueType::Float,
            _ => ValueType::Int,
        }
    }

    /// Fields that may be left unmapped. A missing survey year must then be
    /// supplied by the caller; a missing panel is inferred from the schedule.
    pub fn optional(self) -> bool {
        matches!(
            self,
            Field::SurveyYear | Field::Panel | Field::Industry | Field::Earnings
        )
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown field `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    FixedWidth,
    Delimited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    Utf8,
    Ascii,
    Latin1,
}

impl Encoding {
    pub fn decode(self, bytes: &[u8]) -> Option<String> {
        match self {
            Encoding::Utf8 => std::str::from_utf8(bytes).ok().map(str::to_owned),
            Encoding::Ascii => bytes
                .is_ascii()
                .then(|| String::from_utf8_lossy(bytes).into_owned()),
            Encoding::Latin1 => Some(bytes.iter().map(|&b| char::from(b)).collect()),
        }
    }

    pub fn encode(self, text: &str) -> Option<Vec<u8>> {
        match self {
            Encoding::Utf8 => Some(text.as_bytes().to_vec()),
            Encoding::Ascii => text.is_ascii().then(|| text.as_bytes().to_vec()),
            Encoding::Latin1 => text
                .chars()
                .map(|c| u8::try_from(u32::from(c)).ok())
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Encoding::Utf8 => "utf-8",
            Encoding::Ascii => "ascii",
            Encoding::Latin1 => "latin-1",
        }
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "utf-8" | "utf8" => Ok(Encoding::Utf8),
            "ascii" | "us-ascii" => Ok(Encoding::Ascii),
            "latin-1" | "latin1" | "iso-8859-1" => Ok(Encoding::Latin1),
            other => Err(Error::Schema(format!("unsupported encoding `{other}`"))),
        }
    }
}

/// Where a field lives in a record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    /// 0-based start, exclusive end, in bytes.
    Bytes { start: usize, end: usize },
    ColumnName(String),
    /// 0-based column index.
    ColumnIndex(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSpec {
    pub source: Source,
    pub codes: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemaConfig {
    pub layout: Layout,
    pub encoding: Encoding,
    pub delimiter: u8,
    pub header: bool,
    pub record_width: Option<usize>,
    pub fields: BTreeMap<Field, FieldSpec>,
    pub codes: BTreeMap<String, BTreeSet<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    layout: Layout,
    #[serde(default = "default_encoding")]
    encoding: String,
    delimiter: Option<String>,
    #[serde(default)]
    header: bool,
    record_width: Option<usize>,
    fields: BTreeMap<String, RawField>,
    #[serde(default)]
    codes: BTreeMap<String, Vec<i64>>,
}

fn default_encoding() -> String {
    "utf-8".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    range: Option<[usize; 2]>,
    column: Option<RawColumn>,
    #[serde(rename = "type")]
    value_type: Option<ValueType>,
    codes: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawColumn {
    Index(usize),
    Name(String),
}

impl SchemaConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawSchema =
            toml::from_str(text).map_err(|e| Error::Schema(e.message().to_string()))?;
        let encoding = raw.encoding.parse()?;
        let delimiter = match raw.delimiter.as_deref() {
            None => b',',
            Some("\\t") | Some("\t") => b'\t',
            Some(d) if d.len() == 1 => d.as_bytes()[0],
            Some(d) => return Err(Error::Schema(format!("delimiter `{d}` is not one byte"))),
        };

        let mut fields = BTreeMap::new();
        for (name, rf) in raw.fields {
            let field: Field = name.parse()?;
            if let Some(t) = rf.value_type {
                if t != field.value_type() {
                    return Err(Error::Schema(format!(
                        "field `{name}` declared {t:?}, expected {:?}",
                        field.value_type()
                    )));
                }
            }
            let source = match (raw.layout, rf.range, rf.column) {
                (Layout::FixedWidth, Some([a, b]), None) => {
                    if a == 0 || b < a {
                        return Err(Error::Schema(format!(
                            "field `{name}`: range [{a}, {b}] is not 1-based inclusive"
                        )));
                    }
                    Source::Bytes { start: a - 1, end: b }
                }
                (Layout::Delimited, None, Some(RawColumn::Index(i))) => {
                    if i == 0 {
                        return Err(Error::Schema(format!("field `{name}`: columns are 1-based")));
                    }
                    Source::ColumnIndex(i - 1)
                }
                (Layout::Delimited, None, Some(RawColumn::Name(n))) => {
                    if !raw.header {
                        return Err(Error::Schema(format!(
                            "field `{name}`: named columns need `header = true`"
                        )));
                    }
                    Source::ColumnName(n)
                }
                (Layout::FixedWidth, _, _) => {
                    return Err(Error::Schema(format!("field `{name}` needs `range` only")))
                }
                (Layout::Delimited, _, _) => {
                    return Err(Error::Schema(format!("field `{name}` needs `column` only")))
                }
            };
            if let Some(c) = &rf.codes {
                if !raw.codes.contains_key(c) {
                    return Err(Error::Schema(format!(
                        "field `{name}` references unknown code list `{c}`"
                    )));
                }
            }
            fields.insert(
                field,
                FieldSpec {
                    source,
                    codes: rf.codes,
                },
            );
        }

        let schema = SchemaConfig {
            layout: raw.layout,
            encoding,
            delimiter,
            header: raw.header,
            record_width: raw.record_width,
            fields,
            codes: raw
                .codes
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        for f in Field::ALL {
            if !f.optional() && !self.fields.contains_key(&f) {
                return Err(Error::Schema(format!("required field `{f}` is not mapped")));
            }
        }
        let mut seen_columns = BTreeSet::new();
        let mut ranges: Vec<(usize, usize, Field)> = Vec::new();
        for (f, spec) in &self.fields {
            match &spec.source {
                Source::Bytes { start, end } => ranges.push((*start, *end, *f)),
                Source::ColumnName(n) => {
                    if !seen_columns.insert(n.clone()) {
                        return Err(Error::Schema(format!("column `{n}` mapped twice")));
                    }
                }
                Source::ColumnIndex(i) => {
                    if !seen_columns.insert(format!("#{i}")) {
                        return Err(Error::Schema(format!("column {} mapped twice", i + 1)));
                    }
                }
            }
        }
        ranges.sort_unstable();
        for w in ranges.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Schema(format!(
                    "byte ranges of `{}` and `{}` overlap",
                    w[0].2, w[1].2
                )));
            }
        }
        if let (Some(width), Some(last)) = (self.record_width, ranges.last()) {
            if last.1 > width {
                return Err(Error::Schema(format!(
                    "field `{}` ends past record_width {width}",
                    last.2
                )));
            }
        }
        Ok(())
    }

    /// Minimum line length in bytes a fixed-width record must have.
    pub fn min_width(&self) -> usize {
        self.record_width.unwrap_or_else(|| {
            self.fields
                .values()
                .filter_map(|s| match s.source {
                    Source::Bytes { end, .. } => Some(end),
                    _ => None,
                })
                .max()
                .unwrap_or(0)
        })
    }

    /// Renders the schema back to TOML.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let layout = match self.layout {
            Layout::FixedWidth => "fixed-width",
            Layout::Delimited => "delimited",
        };
        out.push_str(&format!("layout = \"{layout}\"\n"));
        out.push_str(&format!("encoding = \"{}\"\n", self.encoding.name()));
        if self.layout == Layout::Delimited {
            let d = if self.delimiter == b'\t' {
                "\\t".to_string()
            } else {
                char::from(self.delimiter).to_string()
            };
            out.push_str(&format!("delimiter = \"{d}\"\nheader = {}\n", self.header));
        }
        if let Some(w) = self.record_width {
            out.push_str(&format!("record_width = {w}\n"));
        }
        out.push_str("\n[fields]\n");
        let mut fields: Vec<_> = self.fields.iter().collect();
        fields.sort_by_key(|(f, s)| match s.source {
            Source::Bytes { start, .. } => (start, **f),
            Source::ColumnIndex(i) => (i, **f),
            Source::ColumnName(_) => (usize::MAX, **f),
        });
        for (f, spec) in fields {
            let src = match &spec.source {
                Source::Bytes { start, end } => format!("range = [{}, {}]", start + 1, end),
                Source::ColumnName(n) => format!("column = \"{n}\""),
                Source::ColumnIndex(i) => format!("column = {}", i + 1),
            };
            let codes = spec
                .codes
                .as_ref()
                .map(|c| format!(", codes = \"{c}\""))
                .unwrap_or_default();
            out.push_str(&format!("{} = {{ {src}{codes} }}\n", f.name()));
        }
        if !self.codes.is_empty() {
            out.push_str("\n[codes]\n");
            for (name, values) in &self.codes {
                let list: Vec<String> = values.iter().map(i64::to_string).collect();
                out.push_str(&format!("{name} = [{}]\n", list.join(", ")));
            }
        }
        out
    }

    /// Fixed-width layout used by the synthetic generator.
    pub fn synthetic_fixed_width() -> Self {
        let widths: [(Field, usize); 23] = [
            (Field::SurveyYear, 7),
            (Field::Quarter, 1),
            (Field::VisitNo, 1),
            (Field::Panel, 3),
            (Field::State, 2),
            (Field::District, 3),
            (Field::Fsu, 6),
            (Field::SubBlock, 1),
            (Field::Stratum2, 1),
            (Field::HhNo, 3),
            (Field::PersonNo, 2),
            (Field::HhSize, 2),
            (Field::Religion, 1),
            (Field::SocialGroup, 1),
            (Field::RelationToHead, 1),
            (Field::Sex, 1),
            (Field::Age, 3),
            (Field::Marital, 1),
            (Field::Education, 2),
            (Field::StatusCode, 2),
            (Field::Industry, 2),
            (Field::Earnings, 12),
            (Field::Weight, 24),
        ];
        let mut fields = BTreeMap::new();
        let mut pos = 0;
        for (f, w) in widths {
            let codes = match f {
                Field::StatusCode => Some("status".to_string()),
                Field::Sex => Some("sex".to_string()),
                _ => None,
            };
            fields.insert(
                f,
                FieldSpec {
                    source: Source::Bytes {
                        start: pos,
                        end: pos + w,
                    },
                    codes,
                },
            );
            pos += w;
        }
        let mut codes = BTreeMap::new();
        codes.insert(
            "status".to_string(),
            crate::panel::state::STATUS_CODES
                .iter()
                .map(|&c| i64::from(c))
                .collect(),
        );
        codes.insert("sex".to_string(), [1, 2, 3].into_iter().collect());
        SchemaConfig {
            layout: Layout::FixedWidth,
            encoding: Encoding::Utf8,
            delimiter: b',',
            header: false,
            record_width: Some(pos),
            fields,
            codes,
        }
    }
}
