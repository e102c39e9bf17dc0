//! Ground-truth bundle as delimited text.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::corrupt::Injection;
use super::generate::GroundTruth;
use crate::error::Result;
use crate::panel::LaborState;
use crate::table::{self, RunMeta};

pub fn write_ground_truth(dir: &Path, meta: Option<&RunMeta>, truth: &GroundTruth, injections: &[Injection]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    table::write_rows(
        BufWriter::new(File::create(dir.join("permutation.csv"))?),
        meta,
        &["state", "district", "panel", "fsu_old", "fsu_new", "churned"],
        truth.fsus.iter().map(|f| {
            vec![
                f.state.to_string(),
                f.district.to_string(),
                f.panel.to_string(),
                f.fsu_old.to_string(),
                f.fsu_new.to_string(),
                f.churned.to_string(),
            ]
        }),
    )?;
    table::write_rows(
        BufWriter::new(File::create(dir.join("paths.csv"))?),
        meta,
        &["panel", "fsu_old", "hh_no", "person_no", "visit_no", "quarter", "state"],
        truth.paths.iter().map(|p| {
            vec![
                p.panel.to_string(),
                p.fsu_old.to_string(),
                p.hh_no.to_string(),
                p.person_no.to_string(),
                p.visit_no.to_string(),
                p.quarter.clone(),
                p.state.label().to_string(),
            ]
        }),
    )?;
    let mut header = vec!["origin"];
    header.extend(LaborState::ALL.iter().map(|s| s.label()));
    table::write_rows(
        BufWriter::new(File::create(dir.join("kernel.csv"))?),
        meta,
        &header,
        truth.kernel.iter().enumerate().map(|(i, row)| {
            let mut r = vec![LaborState::ALL[i].label().to_string()];
            r.extend(row.iter().map(|p| p.to_string()));
            r
        }),
    )?;
    table::write_rows(
        BufWriter::new(File::create(dir.join("injections.csv"))?),
        meta,
        &["household", "kind"],
        injections
            .iter()
            .map(|i| vec![i.household.to_string(), i.kind.label().to_string()]),
    )?;
    Ok(())
}
