//! Visit-file ingestion: layouts, canonical records, panel schedule and
//! coding repairs.

pub mod parse;
pub mod quarter;
pub mod record;
pub mod repair;
pub mod schedule;
pub mod schema;

pub use parse::{parse_visit_file, write_visit_file, CodeFlag, ParsedFile};
pub use quarter::{SurveyYear, YearQuarter};
pub use record::{sort_records, Fsu, HouseholdId, HouseholdKey, PersonKey, PersonVisit, Sex};
pub use repair::{assign_panels, fix_revisit_quarters, RevisitCoding};
pub use schedule::{PanelLabel, PanelSchedule};
pub use schema::{Encoding, Field, Layout, SchemaConfig};
