//! Monte Carlo estimates of `P(τ_n > ε)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::solver::picard::{picard_solve, PicardOptions};
use crate::solver::problem::ProblemSpec;
use crate::stats::wilson_interval;
use crate::stochastic::sample_wiener;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRequest {
    pub threshold: f64,
    pub h: f64,
    pub samples: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimePoint {
    pub eps: f64,
    pub survived: usize,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeReport {
    pub threshold: f64,
    pub samples: usize,
    /// Sorted by increasing `ε`.
    pub points: Vec<LifetimePoint>,
    /// `τ_n` per sample; `None` when the threshold was not reached.
    pub taus: Vec<Option<f64>>,
    /// Fractions do not decrease as `ε` decreases.
    pub monotone: bool,
}

/// Runs `samples` paths up to `max ε` and counts `τ_n > ε` for every `ε` in `eps`.
///
/// Samples run on the current rayon pool; sample `i` uses lineage `(master_seed, i)`.
pub fn lifetime_probability(
    spec: &ProblemSpec,
    eps: &[f64],
    req: &LifetimeRequest,
    opts: &PicardOptions,
) -> Result<LifetimeReport> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidArgument("every ε must lie in (0, 1)".into()));
    }
    if req.samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut eps = eps.to_vec();
    eps.sort_by(f64::total_cmp);
    let horizon = *eps.last().expect("nonempty");
    let grid = TimeGrid::with_horizon(horizon, req.h)?;
    let modes = spec.noise.modes();
    let opts = PicardOptions {
        threshold: Some(req.threshold),
        ..*opts
    };
    let taus = (0..req.samples)
        .into_par_iter()
        .map(|i| {
            let w = sample_wiener(modes, grid, req.master_seed, i as u64)?;
            let out = picard_solve(spec, &w, &opts)?;
            if out.diagnostics.status.is_failure() {
                return Err(Error::Degenerate {
                    time: out.stopping.tau,
                    reason: format!("Picard iteration failed on sample {i}"),
                });
            }
            Ok(out.stopping.hit.then_some(out.stopping.tau))
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<LifetimePoint> = eps
        .iter()
        .map(|&e| {
            // Grid times compare with a relative slack so that τ = ε on the grid counts as not surviving.
            let survived = taus
                .iter()
                .filter(|t| t.is_none_or(|t| t > e * (1.0 + 1e-12)))
                .count();
            let (lo, hi) = wilson_interval(survived, req.samples, Z95);
            LifetimePoint {
                eps: e,
                survived,
                fraction: survived as f64 / req.samples as f64,
                wilson_low: lo,
                wilson_high: hi,
            }
        })
        .collect();
    let monotone = points.windows(2).all(|p| p[0].fraction >= p[1].fraction);
    Ok(LifetimeReport {
        threshold: req.threshold,
        samples: req.samples,
        points,
        taus,
        monotone,
    })
}
