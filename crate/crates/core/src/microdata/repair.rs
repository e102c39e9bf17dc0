//! Repairs for known coding defects in released visit files.

use super::quarter::SurveyYear;
use super::record::PersonVisit;
use super::schedule::PanelSchedule;
use crate::error::{Error, Result};

/// Survey years whose revisit file records cycle quarters shifted by one.
pub const MISCODED_REVISIT_YEARS: [SurveyYear; 1] = [SurveyYear(2017)];

/// How a revisit batch was found to be coded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RevisitCoding {
    /// Year is not affected; records were passed through.
    Unaffected,
    /// Quarters 3, 4, 5 were rewritten to 2, 3, 4.
    Shifted,
    /// The batch already used quarters 2, 3, 4; nothing rewritten.
    AlreadyCorrect,
}

/// Rewrites the shifted quarter numbers of the 2017-18 revisit file.
///
/// In that file revisits are recorded in quarters 3, 4, 5 instead of 2, 3,
/// 4. A batch is recognised as already corrected when it contains a
/// quarter 2 record, a third visit in quarter 3, or a fourth visit in
/// quarter 4, none of which can occur under the shifted coding; this makes
/// the repair idempotent.
pub fn fix_revisit_quarters(
    records: Vec<PersonVisit>,
    survey_year: SurveyYear,
) -> Result<(Vec<PersonVisit>, RevisitCoding)> {
    if let Some(r) = records.iter().find(|r| r.survey_year != survey_year) {
        return Err(Error::QuarterFix(format!(
            "record of survey year {} in a {survey_year} batch",
            r.survey_year
        )));
    }
    if !MISCODED_REVISIT_YEARS.contains(&survey_year) {
        return Ok((records, RevisitCoding::Unaffected));
    }

    let corrected = records.iter().any(|r| {
        r.quarter == 2 || (r.visit_no == 3 && r.quarter == 3) || (r.visit_no == 4 && r.quarter == 4)
    });
    let shifted = records.iter().any(|r| r.quarter == 5);
    if corrected && shifted {
        return Err(Error::QuarterFix(format!(
            "{survey_year} revisit batch mixes shifted and corrected quarter codes"
        )));
    }

    if corrected {
        if let Some(r) = records.iter().find(|r| !(2..=4).contains(&r.quarter)) {
            return Err(Error::QuarterFix(format!(
                "revisit record {} has quarter {}",
                r.person_key(),
                r.quarter
            )));
        }
        return Ok((records, RevisitCoding::AlreadyCorrect));
    }

    let mut out = records;
    for r in &mut out {
        if !(3..=5).contains(&r.quarter) {
            return Err(Error::QuarterFix(format!(
                "revisit record {} has quarter {}, expected 3, 4 or 5",
                r.person_key(),
                r.quarter
            )));
        }
        r.quarter -= 1;
    }
    Ok((out, RevisitCoding::Shifted))
}

/// Fills in missing panel labels from the schedule and checks supplied
/// labels against it.
pub fn assign_panels(records: &mut [PersonVisit], schedule: &PanelSchedule) -> Result<()> {
    for r in records.iter_mut() {
        let inferred = schedule.infer_panel(r.year_quarter(), r.visit_no)?;
        match &r.panel {
            None => r.panel = Some(inferred.clone()),
            Some(p) if p == inferred => {}
            Some(p) => {
                return Err(Error::Data(format!(
                    "record {} labelled {p} but schedule puts visit {} of {} in {inferred}",
                    r.person_key(),
                    r.visit_no,
                    r.year_quarter()
                )))
            }
        }
    }
    Ok(())
}
