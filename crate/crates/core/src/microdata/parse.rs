//! Schema-driven reading and writing of visit files.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use super::quarter::SurveyYear;
use super::record::{Fsu, PersonVisit, Sex};
use super::schedule::PanelLabel;
use super::schema::{Field, Layout, SchemaConfig, Source};
use crate::error::{Error, Result};

/// A value outside its field's code list. Parsing keeps the record; the
/// validator decides what to do with it.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CodeFlag {
    pub record: usize,
    pub field: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedFile {
    pub records: Vec<PersonVisit>,
    pub flags: Vec<CodeFlag>,
}

/// Parses a visit file. Record numbers in errors and flags are 1-based data
/// rows (headers excluded). `survey_year` is used when the schema does not
/// map that field.
pub fn parse_visit_file<R: Read>(
    mut input: R,
    schema: &SchemaConfig,
    survey_year: Option<SurveyYear>,
) -> Result<ParsedFile> {
    if !schema.fields.contains_key(&Field::SurveyYear) && survey_year.is_none() {
        return Err(Error::Schema(
            "survey_year is neither mapped nor supplied by the caller".into(),
        ));
    }
    let mut out = ParsedFile::default();
    match schema.layout {
        Layout::FixedWidth => {
            let mut bytes = Vec::new();
            input.read_to_end(&mut bytes)?;
            let need = schema.min_width();
            let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
            if lines.last().is_some_and(|l| l.is_empty()) {
                lines.pop();
            }
            for (i, line) in lines.into_iter().enumerate() {
                let record = i + 1;
                let line = line.strip_suffix(b"\r").unwrap_or(line);
                let width_ok = match schema.record_width {
                    Some(w) => line.len() == w,
                    None => line.len() >= need,
                };
                if !width_ok {
                    return Err(Error::Truncated {
                        record,
                        got: line.len(),
                        need,
                    });
                }
                let raw = |source: &Source| -> Result<Option<String>> {
                    let Source::Bytes { start, end } = *source else {
                        unreachable!("fixed-width schema holds byte ranges only")
                    };
                    let text = schema.encoding.decode(&line[start..end]).ok_or_else(|| {
                        Error::Encoding {
                            record,
                            encoding: schema.encoding.name().into(),
                        }
                    })?;
                    Ok(non_blank(text))
                };
                let values = collect_values(schema, raw)?;
                push_record(&mut out, schema, record, &values, survey_year)?;
            }
        }
        Layout::Delimited => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(schema.delimiter)
                .has_headers(schema.header)
                .flexible(true)
                .from_reader(input);
            let mut name_index = BTreeMap::new();
            if schema.header {
                for (i, h) in reader.byte_headers()?.iter().enumerate() {
                    let h = schema.encoding.decode(h).ok_or_else(|| Error::Encoding {
                        record: 0,
                        encoding: schema.encoding.name().into(),
                    })?;
                    name_index.insert(h.trim().to_string(), i);
                }
            }
            for (f, spec) in &schema.fields {
                if let Source::ColumnName(n) = &spec.source {
                    if !name_index.contains_key(n) {
                        return Err(Error::Schema(format!(
                            "column `{n}` for field `{f}` not in header"
                        )));
                    }
                }
            }
            for (i, row) in reader.byte_records().enumerate() {
                let record = i + 1;
                let row = row?;
                let raw = |source: &Source| -> Result<Option<String>> {
                    let idx = match source {
                        Source::ColumnIndex(i) => *i,
                        Source::ColumnName(n) => name_index[n],
                        Source::Bytes { .. } => unreachable!("delimited schema holds columns"),
                    };
                    let Some(cell) = row.get(idx) else {
                        return Err(Error::Truncated {
                            record,
                            got: row.len(),
                            need: idx + 1,
                        });
                    };
                    let text = schema.encoding.decode(cell).ok_or_else(|| Error::Encoding {
                        record,
                        encoding: schema.encoding.name().into(),
                    })?;
                    Ok(non_blank(text))
                };
                let values = collect_values(schema, raw)?;
                push_record(&mut out, schema, record, &values, survey_year)?;
            }
        }
    }

    let mut seen = HashSet::with_capacity(out.records.len());
    for r in &out.records {
        if !seen.insert((r.person_key(), r.year_quarter(), r.visit_no)) {
            return Err(Error::DuplicatePerson {
                key: r.person_key().to_string(),
                quarter: r.year_quarter().to_string(),
                visit: r.visit_no,
            });
        }
    }
    Ok(out)
}

fn non_blank(text: String) -> Option<String> {
    let t = text.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn collect_values<F>(schema: &SchemaConfig, mut raw: F) -> Result<BTreeMap<Field, Option<String>>>
where
    F: FnMut(&Source) -> Result<Option<String>>,
{
    schema
        .fields
        .iter()
        .map(|(f, spec)| Ok((*f, raw(&spec.source)?)))
        .collect()
}

fn push_record(
    out: &mut ParsedFile,
    schema: &SchemaConfig,
    record: usize,
    values: &BTreeMap<Field, Option<String>>,
    default_year: Option<SurveyYear>,
) -> Result<()> {
    let bad = |field: Field, reason: String| Error::Record {
        record,
        field: field.name().into(),
        reason,
    };
    let text = |f: Field| values.get(&f).cloned().flatten();
    let int = |f: Field| -> Result<Option<i64>> {
        match text(f) {
            None => Ok(None),
            Some(t) => t
                .parse::<i64>()
                .map(Some)
                .map_err(|_| bad(f, format!("`{t}` is not an integer"))),
        }
    };
    let required_int = |f: Field| -> Result<i64> {
        int(f)?.ok_or_else(|| bad(f, "blank required field".into()))
    };
    fn narrow<T: TryFrom<i64>>(v: i64, f: Field, bad: &dyn Fn(Field, String) -> Error) -> Result<T> {
        T::try_from(v).map_err(|_| bad(f, format!("{v} out of range")))
    }
    let float = |f: Field| -> Result<Option<f64>> {
        match text(f) {
            None => Ok(None),
            Some(t) => match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(bad(f, format!("`{t}` is not a finite number"))),
            },
        }
    };

    for (f, spec) in &schema.fields {
        if let (Some(list), Some(Some(v))) = (&spec.codes, values.get(f)) {
            let known = v
                .parse::<i64>()
                .is_ok_and(|n| schema.codes.get(list).is_some_and(|c| c.contains(&n)));
            if !known {
                out.flags.push(CodeFlag {
                    record,
                    field: f.name().into(),
                    value: v.clone(),
                });
            }
        }
    }

    let survey_year = match text(Field::SurveyYear) {
        Some(t) => t
            .parse::<SurveyYear>()
            .map_err(|e| bad(Field::SurveyYear, e.to_string()))?,
        None => default_year.ok_or_else(|| bad(Field::SurveyYear, "blank".into()))?,
    };
    let b = &bad;
    let sex_code: u8 = narrow(required_int(Field::Sex)?, Field::Sex, b)?;
    let sex = Sex::from_code(sex_code)
        .ok_or_else(|| bad(Field::Sex, format!("undecodable sex code {sex_code}")))?;
    let visit_no: u8 = narrow(required_int(Field::VisitNo)?, Field::VisitNo, b)?;
    if !(1..=4).contains(&visit_no) {
        return Err(bad(Field::VisitNo, format!("visit {visit_no} outside 1..=4")));
    }
    let weight = float(Field::Weight)?.ok_or_else(|| bad(Field::Weight, "blank".into()))?;
    if weight < 0.0 {
        return Err(bad(Field::Weight, format!("negative weight {weight}")));
    }
    let industry = match int(Field::Industry)? {
        Some(v) => Some(narrow(v, Field::Industry, b)?),
        None => None,
    };

    out.records.push(PersonVisit {
        survey_year,
        quarter: narrow(required_int(Field::Quarter)?, Field::Quarter, b)?,
        visit_no,
        panel: text(Field::Panel).map(PanelLabel),
        fsu: Fsu(narrow(required_int(Field::Fsu)?, Field::Fsu, b)?),
        sub_block: narrow(required_int(Field::SubBlock)?, Field::SubBlock, b)?,
        stratum2: narrow(required_int(Field::Stratum2)?, Field::Stratum2, b)?,
        hh_no: narrow(required_int(Field::HhNo)?, Field::HhNo, b)?,
        person_no: narrow(required_int(Field::PersonNo)?, Field::PersonNo, b)?,
        state: narrow(required_int(Field::State)?, Field::State, b)?,
        district: narrow(required_int(Field::District)?, Field::District, b)?,
        sex,
        age: narrow(required_int(Field::Age)?, Field::Age, b)?,
        relation_to_head: narrow(required_int(Field::RelationToHead)?, Field::RelationToHead, b)?,
        marital: narrow(required_int(Field::Marital)?, Field::Marital, b)?,
        education: narrow(required_int(Field::Education)?, Field::Education, b)?,
        religion: narrow(required_int(Field::Religion)?, Field::Religion, b)?,
        social_group: narrow(required_int(Field::SocialGroup)?, Field::SocialGroup, b)?,
        hh_size: narrow(required_int(Field::HhSize)?, Field::HhSize, b)?,
        status_code: narrow(required_int(Field::StatusCode)?, Field::StatusCode, b)?,
        industry,
        earnings: float(Field::Earnings)?,
        weight,
    });
    Ok(())
}

fn field_text(r: &PersonVisit, f: Field) -> Option<String> {
    Some(match f {
        Field::SurveyYear => r.survey_year.to_string(),
        Field::Quarter => r.quarter.to_string(),
        Field::VisitNo => r.visit_no.to_string(),
        Field::Panel => return r.panel.as_ref().map(|p| p.0.clone()),
        Field::Fsu => r.fsu.0.to_string(),
        Field::SubBlock => r.sub_block.to_string(),
        Field::Stratum2 => r.stratum2.to_string(),
        Field::HhNo => r.hh_no.to_string(),
        Field::PersonNo => r.person_no.to_string(),
        Field::State => r.state.to_string(),
        Field::District => r.district.to_string(),
        Field::Sex => r.sex.code().to_string(),
        Field::Age => r.age.to_string(),
        Field::RelationToHead => r.relation_to_head.to_string(),
        Field::Marital => r.marital.to_string(),
        Field::Education => r.education.to_string(),
        Field::Religion => r.religion.to_string(),
        Field::SocialGroup => r.social_group.to_string(),
        Field::HhSize => r.hh_size.to_string(),
        Field::StatusCode => format!("{:02}", r.status_code),
        Field::Industry => return r.industry.map(|i| format!("{i:02}")),
        Field::Earnings => return r.earnings.map(|e| e.to_string()),
        Field::Weight => r.weight.to_string(),
    })
}

/// Writes records under `schema`; the inverse of [`parse_visit_file`].
pub fn write_visit_file<W: Write>(
    records: &[PersonVisit],
    schema: &SchemaConfig,
    mut out: W,
) -> Result<()> {
    match schema.layout {
        Layout::FixedWidth => {
            let width = schema.min_width();
            for (i, r) in records.iter().enumerate() {
                let mut line = vec![b' '; width];
                for (f, spec) in &schema.fields {
                    let Source::Bytes { start, end } = spec.source else {
                        unreachable!("fixed-width schema holds byte ranges only")
                    };
                    let Some(text) = field_text(r, *f) else {
                        continue;
                    };
                    let bytes = schema.encoding.encode(&text).ok_or_else(|| Error::Encoding {
                        record: i + 1,
                        encoding: schema.encoding.name().into(),
                    })?;
                    let w = end - start;
                    if bytes.len() > w {
                        return Err(Error::Record {
                            record: i + 1,
                            field: f.name().into(),
                            reason: format!("`{text}` wider than {w} bytes"),
                        });
                    }
                    // numbers right-aligned, text left-aligned
                    let offset = if f.value_type() == super::schema::ValueType::Text {
                        start
                    } else {
                        end - bytes.len()
                    };
                    line[offset..offset + bytes.len()].copy_from_slice(&bytes);
                }
                out.write_all(&line)?;
                out.write_all(b"\n")?;
            }
        }
        Layout::Delimited => {
            let mut columns: Vec<(usize, Field, String)> = Vec::new();
            let max_index = schema
                .fields
                .values()
                .filter_map(|s| match s.source {
                    Source::ColumnIndex(i) => Some(i),
                    _ => None,
                })
                .max();
            let mut next = max_index.map_or(0, |m| m + 1);
            for f in Field::ALL {
                let Some(spec) = schema.fields.get(&f) else {
                    continue;
                };
                match &spec.source {
                    Source::ColumnIndex(i) => columns.push((*i, f, f.name().into())),
                    Source::ColumnName(n) => {
                        columns.push((next, f, n.clone()));
                        next += 1;
                    }
                    Source::Bytes { .. } => unreachable!("delimited schema holds columns"),
                }
            }
            columns.sort_by_key(|c| c.0);
            let width = next;
            let mut writer = csv::WriterBuilder::new()
                .delimiter(schema.delimiter)
                .from_writer(&mut out);
            let encode = |text: &str, record: usize| {
                schema.encoding.encode(text).ok_or_else(|| Error::Encoding {
                    record,
                    encoding: schema.encoding.name().into(),
                })
            };
            if schema.header {
                let mut header = vec![Vec::new(); width];
                for (i, _, name) in &columns {
                    header[*i] = encode(name, 0)?;
                }
                writer.write_record(&header)?;
            }
            for (n, r) in records.iter().enumerate() {
                let mut row = vec![Vec::new(); width];
                for (i, f, _) in &columns {
                    if let Some(t) = field_text(r, *f) {
                        row[*i] = encode(&t, n + 1)?;
                    }
                }
                writer.write_record(&row)?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}
