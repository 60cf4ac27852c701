//! Reference generation, the closed-loop runner and its artifacts.

mod config;
mod identify;
mod metrics;
mod profile;
mod run;

pub use config::{IdentifySection, NoiseSection, RunConfig, RunSection};
pub use identify::{holdout_data, identification_data, identify_model, Identification};
pub use metrics::{
    compute_metrics, count_violations, timing_stats, CommandedRange, Metrics, StateErrors,
    TimingStats, Violations, VIOLATION_TOL,
};
pub use profile::{
    arc_reference, racing_reference, Arc, ReferenceProfile, ReferenceTable, Segment, BUNDLED_RACING,
};
pub use run::{
    check_profile, csv_header, export, run_closed_loop, ExportFormat, RunLog, StepRecord,
    TIMING_COLUMNS,
};
