//! Person histories over linked visits, labour-state recoding and the
//! per-visit features used by the job loss/gain models.

pub mod features;
pub mod history;
pub mod io;
pub mod state;

pub use features::{derive_features, derive_all_features, FeatureConfig, FeatureRow};
pub use history::{
    build_histories, filter_working_age, transitions, PersonHistory, PersonId, Transition,
    VisitEntry, WorkingAge,
};
pub use io::{read_features, read_histories, write_features, write_histories, FeatureLine};
pub use state::{recode_labor_state, EmpDichotomy, LaborState};
