//! `qspde`: run seeded ensembles, audits and blow-up studies from a JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use qspde::ensemble::{
    io::write_json, resolve_threads, run_ensemble, run_sample, run_verify, sample_file, write_run, write_sample_csv,
    with_threads, write_study, Manifest, Prepared, RunConfig,
};
use qspde::models::{blowup_study, degenerate_witness, BlowupExample, StudyOptions};
use qspde::Error;

const DEFAULT_OUT: &str = "qspde-out";

#[derive(Parser)]
#[command(name = "qspde", version, about = "Pathwise mild solutions of quasilinear SPDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; the QSPDE_THREADS environment variable takes precedence.
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensemble and write manifest, summary, samples and plot data.
    Run(Common),
    /// Run the audit battery; exits 1 when a gating audit fails.
    Verify(Common),
    /// Blow-up study against the comparison equation, or the degeneracy witness; exits 1 when a check fails.
    BlowupStudy(Common),
    /// Re-run one sample and compare it with the stored CSV.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sample: usize,
    },
}

/// Failures that map to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(e: Error) -> anyhow::Error {
    match e {
        Error::Config(m) => ConfigError(m).into(),
        other => ConfigError(other.to_string()).into(),
    }
}

fn load(common: &Common, fallback_manifest: bool) -> anyhow::Result<(Prepared, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(config_error)?,
        None if fallback_manifest => {
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let text = std::fs::read_to_string(dir.join("manifest.json"))
                .map_err(|e| ConfigError(format!("no --config and no readable manifest in {}: {e}", dir.display())))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| ConfigError(e.to_string()))?;
            m.config
        }
        None => return Err(ConfigError("--config is required".into()).into()),
    };
    if let Some(s) = common.seed {
        cfg.ensemble.master_seed = s;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let prepared = cfg.prepare().map_err(config_error)?;
    Ok((prepared, out))
}

fn threads(common: &Common) -> anyhow::Result<usize> {
    resolve_threads(common.threads).map_err(config_error)
}

fn cmd_run(common: &Common) -> anyhow::Result<bool> {
    let (prepared, out) = load(common, false)?;
    let n = threads(common)?;
    let run = run_ensemble(&prepared, n)?;
    let manifest = write_run(&run, &prepared.model.spec, &out).with_context(|| format!("writing {}", out.display()))?;
    for (k, v) in &run.summary.outcomes {
        println!("{k}: {v}");
    }
    println!("{} samples on {n} threads; {} artifacts in {}", manifest.samples.len(), manifest.artifacts.len(), out.display());
    Ok(true)
}

fn cmd_verify(common: &Common) -> anyhow::Result<bool> {
    let (prepared, out) = load(common, false)?;
    let report = run_verify(&prepared)?;
    write_json(&out, "verify.json", &report)?;
    for a in &report.audits {
        let tag = if a.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}{}", a.name, if a.gating { "" } else { " (informational)" });
    }
    println!("verify report written to {}", out.join("verify.json").display());
    Ok(report.passed)
}

fn cmd_blowup_study(common: &Common) -> anyhow::Result<bool> {
    let (prepared, out) = load(common, false)?;
    let cfg = &prepared.config;
    let n = threads(common)?;
    if cfg.model == "degenerate3" {
        let picard = qspde::solver::PicardOptions {
            audit_phi: cfg.solver.audit_phi.or(Some(cfg.verify.sector_angle)),
            ..cfg.solver
        };
        let w = with_threads(n, || degenerate_witness(&prepared.model, cfg.grid.h, 0, cfg.ensemble.master_seed, picard))??;
        write_json(&out, "witness.json", &w)?;
        match &w.certificate {
            Some(c) => println!("certificate at t = {} ({})", c.time, c.reason),
            None => println!("no certificate up to t = {}", w.final_time),
        }
        let ok = w.within(cfg.study.zero_factor);
        if let Some(t1) = w.envelope_root {
            println!("{} certificate no later than {} × envelope root {t1}", pass(ok), cfg.study.zero_factor);
        }
        return Ok(ok);
    }
    let example = match cfg.model.as_str() {
        "blowup1" => BlowupExample::Quadratic,
        "blowup2" => BlowupExample::SignChange,
        other => bail!(ConfigError(format!("blowup-study needs blowup1, blowup2 or degenerate3, got {other}"))),
    };
    let defaults = StudyOptions::default();
    let opts = StudyOptions {
        samples: cfg.ensemble.samples,
        h: cfg.grid.h,
        master_seed: cfg.ensemble.master_seed,
        n_sequence: if cfg.thresholds.is_empty() { defaults.n_sequence } else { cfg.thresholds.clone() },
        picard: qspde::solver::PicardOptions {
            window: cfg.solver.window.or(defaults.picard.window),
            ..cfg.solver
        },
        level: cfg.study.level,
        margin: cfg.study.margin,
        zero_factor: cfg.study.zero_factor,
        bands: cfg.study.bands,
    };
    let report = with_threads(n, || blowup_study(&prepared.model, &opts))??;
    write_study(&report, &out)?;
    println!("{example:?} study, {} samples", report.samples);
    for a in &report.assertions {
        println!("{} {}: {}", pass(a.passed), a.name, a.detail);
    }
    Ok(report.passed())
}

fn cmd_replay(common: &Common, sample: usize) -> anyhow::Result<bool> {
    let (prepared, out) = load(common, true)?;
    if sample >= prepared.config.ensemble.samples {
        bail!(ConfigError(format!("sample {sample} is outside the ensemble of {}", prepared.config.ensemble.samples)));
    }
    let run = run_sample(&prepared, sample);
    let Some(traj) = &run.trajectory else {
        println!("sample {sample} failed: {}", run.record.error.unwrap_or_default());
        return Ok(false);
    };
    let rel = format!("replay/{sample:04}.csv");
    write_sample_csv(&out, &rel, traj)?;
    let stored = out.join(sample_file(sample));
    if stored.exists() {
        let same = std::fs::read(&stored)? == std::fs::read(out.join(&rel))?;
        println!("{} replay of sample {sample} {} {}", pass(same), if same { "matches" } else { "differs from" }, stored.display());
        return Ok(same);
    }
    println!("replayed sample {sample} into {}", out.join(rel).display());
    Ok(true)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Verify(c) => cmd_verify(c),
        Command::BlowupStudy(c) => cmd_blowup_study(c),
        Command::Replay { common, sample } => cmd_replay(common, *sample),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
