//! Artifact files: manifest, summary, per-sample CSVs and plot series.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::config::{RunConfig, SCHEMA_VERSION};
use crate::ensemble::runner::{EnsembleRun, SampleRecord};
use crate::error::Result;
use crate::models::BlowupStudyReport;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column reference written next to every set of artifacts.
pub const SCHEMA_MD: &str = "# Output schema

All floats are written with 17 significant digits (`{:.16e}`); JSON numbers
round-trip exactly.

## manifest.json

- `schema_version`, `code_version`
- `config`: the run config with every default filled in, including model parameters
- `dimension`, `components`, `noise_modes`, `grid_points`
- `samples[]`: `index`, `lineage {master_seed, sample_index}`, `stream_key`,
  `outcome` (converged | stopped-at-tau | degenerate | overflow | non-contraction |
  max-iterations | failed), `final_time`, `steps`, `total_iterations`, `stopping[]`,
  `degenerate`, `suggestion`, `error`, `file`
- `artifacts[]`: every file written, relative to the output directory

## summary.json

Mean norm curves over the samples alive at each time, outcome counts,
`τ_n` histograms and, for models with a ground-state functional, its mean and
standard error.

## samples/NNNN.csv

`t,component,mode,coefficient`: one row per grid time, component and mode.

## plotdata/norms.csv

`t,alive,mean_z_norm,mean_y_norm`

## plotdata/functional.csv

`t,alive,mean,std_error` of `y(t) = <u(t), phi>` (blow-up models only).

## plotdata/tau_histogram.csv

`threshold,bin_low,bin_high,count`

## plotdata/tau_ladder.csv

`threshold,hits,mean_tau` (`mean_tau` empty when no sample reached the threshold).

## study.json, plotdata/study_mean_y.csv, plotdata/study_tau_ladder.csv

Written by `blowup-study`. `study_mean_y.csv` has columns
`t,mean,std_error,lower,upper,comparison` where `lower`/`upper` are the mean
minus/plus the configured number of standard errors and `comparison` is the
scalar comparison solution (`inf` after it blows up).
`study_tau_ladder.csv` has `threshold,hits,mean_tau`.

## verify.json

Written by `verify`: one entry per audit with `name`, `gating`, `passed` and
audit-specific details.
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub dimension: usize,
    pub components: usize,
    pub noise_modes: usize,
    pub grid_points: usize,
    pub samples: Vec<SampleRecord>,
    pub artifacts: Vec<String>,
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn create(out: &Path, rel: &str) -> Result<BufWriter<File>> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(out: &Path, rel: &str, value: &T) -> Result<()> {
    let mut w = create(out, rel)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_rows(out: &Path, rel: &str, header: &str, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = create(out, rel)?;
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{}", r.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the trajectory of one sample to `rel`.
pub fn write_sample_csv(out: &Path, rel: &str, run: &crate::solver::Trajectory) -> Result<()> {
    let mut w = create(out, rel)?;
    run.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes every artifact of an ensemble run and returns the manifest.
pub fn write_run(run: &EnsembleRun, spec: &crate::solver::ProblemSpec, out: &Path) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let mut artifacts = Vec::new();
    for s in &run.samples {
        if let (Some(t), Some(f)) = (&s.trajectory, &s.record.file) {
            write_sample_csv(out, f, t)?;
            artifacts.push(f.clone());
        }
    }
    let sm = &run.summary;
    write_rows(
        out,
        "plotdata/norms.csv",
        "t,alive,mean_z_norm,mean_y_norm",
        (0..sm.times.len()).map(|j| {
            vec![
                fmt_f64(sm.times[j]),
                sm.alive[j].to_string(),
                fmt_f64(sm.mean_z_norm[j]),
                fmt_f64(sm.mean_y_norm[j]),
            ]
        }),
    )?;
    artifacts.push("plotdata/norms.csv".into());
    if let Some(f) = &sm.functional {
        write_rows(
            out,
            "plotdata/functional.csv",
            "t,alive,mean,std_error",
            (0..sm.times.len()).map(|j| {
                vec![
                    fmt_f64(sm.times[j]),
                    sm.alive[j].to_string(),
                    fmt_f64(f.mean[j]),
                    fmt_f64(f.std_error[j]),
                ]
            }),
        )?;
        artifacts.push("plotdata/functional.csv".into());
    }
    write_rows(
        out,
        "plotdata/tau_histogram.csv",
        "threshold,bin_low,bin_high,count",
        sm.tau_histograms.iter().flat_map(|h| {
            h.bins
                .iter()
                .map(move |(lo, hi, c)| vec![fmt_f64(h.threshold), fmt_f64(*lo), fmt_f64(*hi), c.to_string()])
        }),
    )?;
    artifacts.push("plotdata/tau_histogram.csv".into());
    write_rows(
        out,
        "plotdata/tau_ladder.csv",
        "threshold,hits,mean_tau",
        sm.tau_histograms.iter().map(|h| {
            vec![
                fmt_f64(h.threshold),
                h.hits.to_string(),
                h.mean_tau.map(fmt_f64).unwrap_or_default(),
            ]
        }),
    )?;
    artifacts.push("plotdata/tau_ladder.csv".into());
    write_json(out, "summary.json", sm)?;
    artifacts.push("summary.json".into());
    fs::write(out.join("SCHEMA.md"), SCHEMA_MD)?;
    artifacts.push("SCHEMA.md".into());
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config: run.config.clone(),
        dimension: spec.dim(),
        components: spec.components,
        noise_modes: spec.noise.modes(),
        grid_points: run.config.time_grid()?.len(),
        samples: run.samples.iter().map(|s| s.record.clone()).collect(),
        artifacts,
    };
    write_json(out, "manifest.json", &manifest)?;
    Ok(manifest)
}

/// Writes `study.json` and the study plot series.
pub fn write_study(report: &BlowupStudyReport, out: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out)?;
    write_json(out, "study.json", report)?;
    let bands = report.bands;
    write_rows(
        out,
        "plotdata/study_mean_y.csv",
        "t,mean,std_error,lower,upper,comparison",
        (0..report.times.len()).map(|j| {
            let m = report.mean_y[j];
            let se = report.std_error_y[j];
            vec![
                fmt_f64(report.times[j]),
                fmt_f64(m),
                fmt_f64(se),
                fmt_f64(m - bands * se),
                fmt_f64(m + bands * se),
                fmt_f64(report.ode_y[j]),
            ]
        }),
    )?;
    write_rows(
        out,
        "plotdata/study_tau_ladder.csv",
        "threshold,hits,mean_tau",
        report
            .tau_ladder
            .iter()
            .map(|(n, t, hits)| vec![fmt_f64(*n), hits.to_string(), t.map(fmt_f64).unwrap_or_default()]),
    )?;
    fs::write(out.join("SCHEMA.md"), SCHEMA_MD)?;
    Ok(vec![
        "study.json".into(),
        "plotdata/study_mean_y.csv".into(),
        "plotdata/study_tau_ladder.csv".into(),
        "SCHEMA.md".into(),
    ])
}
