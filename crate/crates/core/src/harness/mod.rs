//! Experiment driver: replication studies, limiting-law checks, manifests and CSV I/O.

pub mod config;
pub mod io;
pub mod sclt;
pub mod study;

pub use io::{ingest_csv, read_dataset, write_csv, write_dataset};
pub use sclt::{run_sclt_check, ScltReport};
pub use study::{
    emit_power_curves, run_study, study_csv, Axis, CellReport, ExperimentGrid, Method,
    MethodSummary, StudyReport,
};
