//! Batch runs: configs, seeded ensembles, artifacts and the audit battery.

pub mod config;
pub mod io;
pub mod runner;
pub mod summary;
pub mod verify;

pub use config::{
    resolve_threads, EnsembleConfig, GridConfig, Prepared, ProblemNumbers, RunConfig, StudyConfig, VerifyConfig,
    SCHEMA_VERSION, THREADS_ENV,
};
pub use io::{fmt_f64, write_run, write_sample_csv, write_study, Manifest, CODE_VERSION, SCHEMA_MD};
pub use runner::{run_ensemble, run_sample, sample_file, with_threads, EnsembleRun, SampleOutcome, SampleRecord, SampleRun};
pub use summary::{summarize, FunctionalStats, Summary, TauHistogram};
pub use verify::{audits, run_verify, Audit, AuditResult, VerifyContext, VerifyReport};
