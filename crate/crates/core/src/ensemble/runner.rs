//! Seeded ensembles over a worker pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::config::{Prepared, RunConfig};
use crate::ensemble::summary::{summarize, Summary};
use crate::error::{Error, Result};
use crate::models::y_series;
use crate::solver::{
    maximal_continuation, picard_solve, ContinuationOptions, DegeneracyCertificate, PicardStatus, StoppingRecord,
    Trajectory,
};
use crate::stochastic::{sample_wiener, SeedLineage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleOutcome {
    /// Reached the horizon.
    Converged,
    /// Stopped at the last threshold time `τ_n`.
    StoppedAtTau,
    Degenerate,
    Overflow,
    NonContraction,
    MaxIterations,
    /// The solver raised an error; see `error`.
    Failed,
}

impl From<PicardStatus> for SampleOutcome {
    fn from(s: PicardStatus) -> Self {
        match s {
            PicardStatus::Completed => Self::Converged,
            PicardStatus::Stopped => Self::StoppedAtTau,
            PicardStatus::Degenerate => Self::Degenerate,
            PicardStatus::Overflow => Self::Overflow,
            PicardStatus::NonContraction => Self::NonContraction,
            PicardStatus::MaxIterations => Self::MaxIterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub lineage: SeedLineage,
    /// Seed of the sample's generator, derived from the lineage.
    pub stream_key: u64,
    pub outcome: SampleOutcome,
    pub final_time: f64,
    pub steps: usize,
    pub total_iterations: usize,
    pub stopping: Vec<StoppingRecord>,
    pub degenerate: Option<DegeneracyCertificate>,
    pub suggestion: Option<String>,
    pub error: Option<String>,
    /// Path of the trajectory CSV relative to the output directory.
    pub file: Option<String>,
}

pub struct SampleRun {
    pub record: SampleRecord,
    pub trajectory: Option<Trajectory>,
    /// `⟨u, φ⟩` of the observed component, when the model defines one.
    pub y: Option<Vec<f64>>,
}

pub fn sample_file(index: usize) -> String {
    format!("samples/{index:04}.csv")
}

fn solve(prepared: &Prepared, index: usize) -> Result<(Trajectory, SampleRecord)> {
    let cfg = &prepared.config;
    let spec = &prepared.model.spec;
    let lineage = SeedLineage {
        master_seed: cfg.ensemble.master_seed,
        sample_index: index as u64,
    };
    let w = sample_wiener(spec.noise.modes(), prepared.grid, lineage.master_seed, lineage.sample_index)?;
    let mut record = SampleRecord {
        index,
        lineage,
        stream_key: lineage.key(),
        outcome: SampleOutcome::Converged,
        final_time: 0.0,
        steps: 0,
        total_iterations: 0,
        stopping: Vec::new(),
        degenerate: None,
        suggestion: None,
        error: None,
        file: None,
    };
    let traj = if cfg.thresholds.is_empty() {
        let out = picard_solve(spec, &w, &cfg.solver)?;
        record.outcome = out.diagnostics.status.into();
        record.total_iterations = out.diagnostics.total_iterations();
        record.degenerate = out.diagnostics.degenerate.clone();
        record.suggestion = out.diagnostics.suggestion.clone();
        record.stopping.push(out.stopping);
        out.trajectory
    } else {
        let out = maximal_continuation(
            spec,
            &w,
            &cfg.thresholds,
            &ContinuationOptions {
                picard: cfg.solver,
                verify_index: None,
            },
        )?;
        record.outcome = out.final_status.into();
        record.total_iterations = out.segments.iter().map(|d| d.total_iterations()).sum();
        record.degenerate = out.segments.iter().find_map(|d| d.degenerate.clone());
        record.suggestion = out.segments.iter().find_map(|d| d.suggestion.clone());
        record.stopping = out.records;
        out.trajectory
    };
    record.final_time = traj.last_time();
    record.steps = traj.last_index();
    Ok((traj, record))
}

/// Runs sample `index`; solver errors become a `Failed` record.
pub fn run_sample(prepared: &Prepared, index: usize) -> SampleRun {
    match solve(prepared, index) {
        Ok((traj, mut record)) => {
            record.file = Some(sample_file(index));
            let y = prepared.model.observable.and_then(|c| y_series(&traj, c).ok());
            SampleRun {
                record,
                trajectory: Some(traj),
                y,
            }
        }
        Err(e) => {
            let lineage = SeedLineage {
                master_seed: prepared.config.ensemble.master_seed,
                sample_index: index as u64,
            };
            SampleRun {
                record: SampleRecord {
                    index,
                    lineage,
                    stream_key: lineage.key(),
                    outcome: SampleOutcome::Failed,
                    final_time: prepared.grid.t0(),
                    steps: 0,
                    total_iterations: 0,
                    stopping: Vec::new(),
                    degenerate: None,
                    suggestion: None,
                    error: Some(e.to_string()),
                    file: None,
                },
                trajectory: None,
                y: None,
            }
        }
    }
}

pub struct EnsembleRun {
    pub config: RunConfig,
    pub samples: Vec<SampleRun>,
    pub summary: Summary,
    pub threads: usize,
}

/// Runs `f` inside a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every sample on a pool of `threads` workers. Results are ordered by
/// sample index, so the output does not depend on the worker count.
pub fn run_ensemble(prepared: &Prepared, threads: usize) -> Result<EnsembleRun> {
    let n = prepared.config.ensemble.samples;
    let samples: Vec<SampleRun> = with_threads(threads, || (0..n).into_par_iter().map(|i| run_sample(prepared, i)).collect())?;
    let summary = summarize(prepared, &samples);
    Ok(EnsembleRun {
        config: prepared.config.clone(),
        samples,
        summary,
        threads: threads.max(1),
    })
}
