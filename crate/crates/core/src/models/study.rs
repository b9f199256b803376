//! Monte Carlo studies of the blow-up examples against their comparison equations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::models::ode::{ode_comparison, ComparisonKind, OdeBound};
use crate::models::{y_series, BuiltModel};
use crate::solver::{
    maximal_continuation, picard_solve, ContinuationOptions, DegeneracyCertificate, PicardOptions, PicardStatus,
    StoppingRecord, TauInfinity,
};
use crate::stats::{mean, std_error};
use crate::stochastic::sample_wiener;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyOptions {
    pub samples: usize,
    pub h: f64,
    pub master_seed: u64,
    /// Stopping thresholds `n_k`, strictly increasing.
    pub n_sequence: Vec<f64>,
    pub picard: PicardOptions,
    /// Level the mean functional must reach (quadratic example).
    pub level: f64,
    /// The level must be reached before `T* + margin`.
    pub margin: f64,
    /// The sign change must happen before `zero_factor · t₁`.
    pub zero_factor: f64,
    /// Width of the comparison band in standard errors.
    pub bands: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            samples: 50,
            h: 1e-4,
            master_seed: 0,
            n_sequence: (1..=12).map(|k| 2f64.powi(k + 1)).collect(),
            picard: PicardOptions {
                window: Some(5e-4),
                ..PicardOptions::default()
            },
            level: 100.0,
            margin: 0.15,
            zero_factor: 1.2,
            bands: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub index: usize,
    pub final_time: f64,
    pub final_status: PicardStatus,
    pub tau_infinity: TauInfinity,
    pub records: Vec<StoppingRecord>,
    pub blowup_indicated: bool,
    /// Largest nodal value of `u` at the last state.
    pub final_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupStudyReport {
    pub kind: ComparisonKind,
    pub samples: usize,
    pub h: f64,
    /// Band width in standard errors.
    pub bands: f64,
    /// Times at which every sample is still alive.
    pub times: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub std_error_y: Vec<f64>,
    pub ode_y: Vec<f64>,
    pub ode: OdeBound,
    /// Per-sample `y` at the last state, with its time.
    pub final_y: Vec<(f64, f64)>,
    pub sample_summaries: Vec<SampleSummary>,
    /// Mean `τ_n` over samples that hit each threshold.
    pub tau_ladder: Vec<(f64, Option<f64>, usize)>,
    pub assertions: Vec<Assertion>,
}

impl BlowupStudyReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

struct SampleRun {
    summary: SampleSummary,
    times: Vec<f64>,
    y: Vec<f64>,
}

fn run_sample(model: &BuiltModel, grid: TimeGrid, opts: &StudyOptions, index: usize) -> Result<SampleRun> {
    let spec = &model.spec;
    let comp = model.observable.unwrap_or(0);
    let w = sample_wiener(spec.noise.modes(), grid, opts.master_seed, index as u64)?;
    let out = maximal_continuation(
        spec,
        &w,
        &opts.n_sequence,
        &ContinuationOptions {
            picard: opts.picard,
            verify_index: None,
        },
    )?;
    let traj = &out.trajectory;
    let n = spec.basis.len();
    let last = traj.last().expect("nonempty trajectory");
    let final_sup = spec
        .basis
        .to_nodes(&last.as_slice()[comp * n..(comp + 1) * n])
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SampleRun {
        summary: SampleSummary {
            index,
            final_time: traj.last_time(),
            final_status: out.final_status,
            tau_infinity: out.tau_infinity,
            blowup_indicated: out.blowup_indicated(),
            records: out.records.clone(),
            final_sup,
        },
        times: traj.times(),
        y: y_series(traj, comp)?,
    })
}

/// Runs the ensemble, aggregates `y(t) = ⟨u(t), φ⟩` and checks it against the comparison equation.
pub fn blowup_study(model: &BuiltModel, opts: &StudyOptions) -> Result<BlowupStudyReport> {
    let cmp = model
        .comparison
        .ok_or_else(|| Error::InvalidArgument("the study needs a model with a comparison equation".into()))?;
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("the study needs at least one sample".into()));
    }
    if !(opts.bands >= 0.0 && opts.zero_factor > 0.0 && opts.margin >= 0.0) {
        return Err(Error::InvalidArgument("bands, margin and zero factor must be nonnegative".into()));
    }
    let spec = &model.spec;
    let grid = TimeGrid::with_horizon(spec.horizon, opts.h)?;
    let runs: Vec<SampleRun> = (0..opts.samples)
        .into_par_iter()
        .map(|i| run_sample(model, grid, opts, i))
        .collect::<Result<_>>()?;

    let common = runs.iter().map(|r| r.y.len()).min().expect("nonempty");
    let times = runs[0].times[..common].to_vec();
    let mut mean_y = Vec::with_capacity(common);
    let mut std_error_y = Vec::with_capacity(common);
    let mut column = vec![0.0; runs.len()];
    for j in 0..common {
        for (c, r) in column.iter_mut().zip(&runs) {
            *c = r.y[j];
        }
        mean_y.push(mean(&column));
        std_error_y.push(if runs.len() > 1 { std_error(&column) } else { 0.0 });
    }
    let ode = ode_comparison(cmp.kind, cmp.lambda1, cmp.y0, cmp.k, Some(cmp.phi_l2_squared), spec.horizon)?;
    let ode_y: Vec<f64> = times.iter().map(|&t| ode.value(t)).collect();

    let mut assertions = Vec::new();
    match cmp.kind {
        ComparisonKind::Blowup => {
            let deadline = ode.event_time.map(|t| t + opts.margin);
            let crossing = times.iter().zip(&mean_y).find(|(_, y)| **y >= opts.level).map(|(t, _)| *t);
            assertions.push(Assertion {
                name: "level-crossing".into(),
                passed: matches!((crossing, deadline), (Some(c), Some(d)) if c < d),
                detail: format!(
                    "mean y reaches {} at {:?}; comparison blow-up {:?}, deadline {:?}",
                    opts.level, crossing, ode.event_time, deadline
                ),
            });
            let end = ode.event_time.unwrap_or(f64::INFINITY);
            let mut worst = f64::INFINITY;
            let mut worst_t = 0.0;
            for j in 0..common {
                if times[j] >= end || !ode_y[j].is_finite() {
                    break;
                }
                let slack = mean_y[j] - (ode_y[j] - opts.bands * std_error_y[j]) + 1e-9 * ode_y[j].abs().max(1.0);
                if slack < worst {
                    worst = slack;
                    worst_t = times[j];
                }
            }
            assertions.push(Assertion {
                name: "above-comparison".into(),
                passed: worst >= 0.0,
                detail: format!(
                    "smallest margin of mean y over the comparison minus {} standard errors: {worst:.6e} at t = {worst_t}",
                    opts.bands
                ),
            });
        }
        ComparisonKind::SignChange => {
            let deadline = ode.event_time.map(|t| opts.zero_factor * t);
            let zero = times.iter().zip(&mean_y).find(|(_, y)| **y < 0.0).map(|(t, _)| *t);
            assertions.push(Assertion {
                name: "sign-change".into(),
                passed: matches!((zero, deadline), (Some(z), Some(d)) if z < d),
                detail: format!(
                    "mean y turns negative at {:?}; envelope root {:?}, deadline {:?}",
                    zero, ode.event_time, deadline
                ),
            });
        }
    }

    let tau_ladder = opts
        .n_sequence
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let taus: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.summary.records.get(k).filter(|rec| rec.hit).map(|rec| rec.tau))
                .collect();
            (n, (!taus.is_empty()).then(|| mean(&taus)), taus.len())
        })
        .collect();

    Ok(BlowupStudyReport {
        kind: cmp.kind,
        samples: opts.samples,
        h: opts.h,
        bands: opts.bands,
        times,
        mean_y,
        std_error_y,
        ode_y,
        ode,
        final_y: runs
            .iter()
            .map(|r| (*r.times.last().expect("nonempty"), *r.y.last().expect("nonempty")))
            .collect(),
        sample_summaries: runs.into_iter().map(|r| r.summary).collect(),
        tau_ladder,
        assertions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub certificate: Option<DegeneracyCertificate>,
    pub status: PicardStatus,
    /// Root of the envelope of the sign-change comparison.
    pub envelope_root: Option<f64>,
    pub final_time: f64,
    /// `y(t)` of the `u` component along the computed path.
    pub times: Vec<f64>,
    pub y: Vec<f64>,
}

impl WitnessReport {
    /// Whether a certificate exists no later than `factor · t₁`.
    pub fn within(&self, factor: f64) -> bool {
        match (&self.certificate, self.envelope_root) {
            (Some(c), Some(t1)) => c.time <= factor * t1,
            _ => false,
        }
    }
}

/// Runs the three-component system until the `w` operator leaves the sector.
pub fn degenerate_witness(model: &BuiltModel, h: f64, sample: usize, master_seed: u64, picard: PicardOptions) -> Result<WitnessReport> {
    let spec = &model.spec;
    let cmp = model.comparison;
    let phi = picard
        .audit_phi
        .ok_or_else(|| Error::InvalidArgument("the witness needs a sector angle for the audit".into()))?;
    let grid = TimeGrid::with_horizon(spec.horizon, h)?;
    let w = sample_wiener(spec.noise.modes(), grid, master_seed, sample as u64)?;
    let out = picard_solve(
        spec,
        &w,
        &PicardOptions {
            audit_phi: Some(phi),
            ..picard
        },
    )?;
    let envelope_root = cmp.and_then(|c| {
        ode_comparison(c.kind, c.lambda1, c.y0, c.k, Some(c.phi_l2_squared), spec.horizon)
            .ok()
            .and_then(|o| o.event_time)
    });
    let traj = &out.trajectory;
    Ok(WitnessReport {
        certificate: out.diagnostics.degenerate.clone(),
        status: out.diagnostics.status,
        envelope_root,
        final_time: traj.last_time(),
        times: traj.times(),
        y: y_series(traj, model.observable.unwrap_or(0))?,
    })
}
