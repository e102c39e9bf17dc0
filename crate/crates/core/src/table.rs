//! Delimited-text artifacts with a run-metadata header line.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;
use crate::microdata::PersonVisit;

/// Provenance written as a `#` comment line at the top of every artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMeta {
    pub tool: String,
    pub manifest_sha256: String,
    pub seed: Option<u64>,
}

impl RunMeta {
    pub fn header_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# {} manifest_sha256={} seed={}\n",
            self.tool, self.manifest_sha256, seed
        )
    }
}

pub const VISIT_COLUMNS: [&str; 23] = [
    "survey_year",
    "quarter",
    "visit_no",
    "panel",
    "fsu",
    "sub_block",
    "stratum2",
    "hh_no",
    "person_no",
    "state",
    "district",
    "sex",
    "age",
    "relation_to_head",
    "marital",
    "education",
    "religion",
    "social_group",
    "hh_size",
    "status_code",
    "industry",
    "earnings",
    "weight",
];

/// Writes `rows` with an explicit header so empty tables still carry one.
pub fn write_serde<W, T, I>(mut out: W, meta: Option<&RunMeta>, headers: &[&str], rows: I) -> Result<()>
where
    W: Write,
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    if let Some(m) = meta {
        out.write_all(m.header_line().as_bytes())?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(headers)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows<W, I>(mut out: W, meta: Option<&RunMeta>, headers: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(m) = meta {
        out.write_all(m.header_line().as_bytes())?;
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(headers)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(input)
}

pub fn read_serde<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut r = reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Reads rows as header-keyed string maps.
pub fn read_rows<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = reader(input);
    let headers = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    Ok((headers, rows))
}

pub fn write_visits<W: Write>(out: W, meta: Option<&RunMeta>, records: &[PersonVisit]) -> Result<()> {
    write_serde(out, meta, &VISIT_COLUMNS, records)
}

pub fn read_visits<R: Read>(input: R) -> Result<Vec<PersonVisit>> {
    read_serde(input)
}

/// Formats a float for artifacts: shortest round-trip form, `NA` for absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}
