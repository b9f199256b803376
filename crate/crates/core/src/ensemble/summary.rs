//! Ensemble aggregates: mean norm curves, `τ_n` histograms, functional statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::config::Prepared;
use crate::ensemble::runner::SampleRun;
use crate::stats::{mean, std_error};

pub const TAU_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauHistogram {
    pub threshold: f64,
    pub hits: usize,
    pub mean_tau: Option<f64>,
    /// `(low, high, count)` over `[t₀, T]`.
    pub bins: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalStats {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub samples: usize,
    pub outcomes: BTreeMap<String, usize>,
    pub times: Vec<f64>,
    /// Samples still running at each time.
    pub alive: Vec<usize>,
    pub mean_z_norm: Vec<f64>,
    pub mean_y_norm: Vec<f64>,
    /// `⟨u, φ⟩` over the alive samples, for models that track it.
    pub functional: Option<FunctionalStats>,
    pub tau_histograms: Vec<TauHistogram>,
}

pub fn summarize(prepared: &Prepared, samples: &[SampleRun]) -> Summary {
    let grid = prepared.grid;
    let cfg = &prepared.config;
    let mut outcomes = BTreeMap::new();
    for s in samples {
        let key = serde_json::to_value(s.record.outcome)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *outcomes.entry(key).or_insert(0) += 1;
    }
    let longest = samples
        .iter()
        .filter_map(|s| s.trajectory.as_ref().map(|t| t.len()))
        .max()
        .unwrap_or(0);
    let mut times = Vec::with_capacity(longest);
    let mut alive = Vec::with_capacity(longest);
    let mut mean_z = Vec::with_capacity(longest);
    let mut mean_y = Vec::with_capacity(longest);
    let track = prepared.model.observable.is_some();
    let mut fmean = Vec::new();
    let mut fse = Vec::new();
    let mut zs = Vec::with_capacity(samples.len());
    let mut ys = Vec::with_capacity(samples.len());
    let mut fs = Vec::with_capacity(samples.len());
    for j in 0..longest {
        zs.clear();
        ys.clear();
        fs.clear();
        for s in samples {
            if let Some(t) = &s.trajectory {
                if j < t.len() {
                    zs.push(t.z_norms()[j]);
                    ys.push(t.y_norms()[j]);
                    if let Some(y) = &s.y {
                        fs.push(y[j]);
                    }
                }
            }
        }
        times.push(grid.time(j));
        alive.push(zs.len());
        mean_z.push(mean(&zs));
        mean_y.push(mean(&ys));
        if track {
            fmean.push(mean(&fs));
            fse.push(if fs.len() > 1 { std_error(&fs) } else { 0.0 });
        }
    }
    let span = grid.end() - grid.t0();
    let tau_histograms = cfg
        .thresholds
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let taus: Vec<f64> = samples
                .iter()
                .filter_map(|s| s.record.stopping.get(k).filter(|r| r.hit).map(|r| r.tau))
                .collect();
            let mut bins: Vec<(f64, f64, usize)> = (0..TAU_BINS)
                .map(|b| {
                    let lo = grid.t0() + span * b as f64 / TAU_BINS as f64;
                    let hi = grid.t0() + span * (b + 1) as f64 / TAU_BINS as f64;
                    (lo, hi, 0)
                })
                .collect();
            for t in &taus {
                let b = (((t - grid.t0()) / span * TAU_BINS as f64).floor() as usize).min(TAU_BINS - 1);
                bins[b].2 += 1;
            }
            TauHistogram {
                threshold: n,
                hits: taus.len(),
                mean_tau: (!taus.is_empty()).then(|| mean(&taus)),
                bins,
            }
        })
        .collect();
    Summary {
        model: cfg.model.clone(),
        samples: samples.len(),
        outcomes,
        times,
        alive,
        mean_z_norm: mean_z,
        mean_y_norm: mean_y,
        functional: track.then_some(FunctionalStats {
            mean: fmean,
            std_error: fse,
        }),
        tau_histograms,
    }
}
