//! Pathwise Hölder exponent estimates for grid-indexed series.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::stats::{log_log_fit, pairwise_sum};

/// Minimum series length accepted by [`holder_estimate`].
pub const MIN_SERIES_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    pub estimator: String,
    /// `None` when the series does not move (exponent unbounded).
    pub exponent: Option<f64>,
    pub p: f64,
    /// Range of the estimate over disjoint sub-blocks of the series.
    pub band: Option<(f64, f64)>,
    pub degenerate: bool,
}

/// Exponent of `‖X(t+τ) − X(t)‖ ~ τ^γ`, before capping to `[0, 1]`.
pub trait HolderEstimator: Named + Send + Sync {
    fn raw_exponent(&self, series: &[DVector<f64>], h: f64, weights: Option<&DVector<f64>>, p: f64) -> Option<f64>;
}

fn dist(a: &DVector<f64>, b: &DVector<f64>, w: Option<&DVector<f64>>) -> f64 {
    match w {
        None => (a - b).norm(),
        Some(w) => a
            .iter()
            .zip(b.iter())
            .zip(w.iter())
            .map(|((x, y), wk)| wk * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

fn dyadic_gaps(len: usize) -> Vec<usize> {
    let mut gaps = Vec::new();
    let mut g = 1;
    while g * 8 <= len {
        gaps.push(g);
        g *= 2;
    }
    gaps
}

/// Regression of the log of the largest increment at dyadic lags.
#[derive(Debug, Clone, Copy, Default)]
pub struct DyadicMax;

impl Named for DyadicMax {
    fn name(&self) -> &'static str {
        "dyadic-max"
    }
}

impl HolderEstimator for DyadicMax {
    fn raw_exponent(&self, series: &[DVector<f64>], h: f64, weights: Option<&DVector<f64>>, _p: f64) -> Option<f64> {
        let mut lags = Vec::new();
        let mut maxes = Vec::new();
        for g in dyadic_gaps(series.len()) {
            let m = (0..series.len() - g)
                .map(|i| dist(&series[i + g], &series[i], weights))
                .fold(0.0, f64::max);
            lags.push(g as f64 * h);
            maxes.push(m);
        }
        if maxes.iter().all(|m| *m == 0.0) {
            return None;
        }
        log_log_fit(&lags, &maxes).map(|f| f.slope)
    }
}

/// Regression of the `p`-th moment of increments (Sobolev–Slobodeckij form).
#[derive(Debug, Clone, Copy, Default)]
pub struct Variogram;

impl Named for Variogram {
    fn name(&self) -> &'static str {
        "variogram"
    }
}

impl HolderEstimator for Variogram {
    fn raw_exponent(&self, series: &[DVector<f64>], h: f64, weights: Option<&DVector<f64>>, p: f64) -> Option<f64> {
        let mut lags = Vec::new();
        let mut moments = Vec::new();
        for g in dyadic_gaps(series.len()) {
            let v: Vec<f64> = (0..series.len() - g)
                .map(|i| dist(&series[i + g], &series[i], weights).powf(p))
                .collect();
            lags.push(g as f64 * h);
            moments.push(pairwise_sum(&v) / v.len() as f64);
        }
        if moments.iter().all(|m| *m == 0.0) {
            return None;
        }
        log_log_fit(&lags, &moments).map(|f| f.slope / p)
    }
}

pub fn holder_estimators() -> Registry<dyn HolderEstimator> {
    let reg: Registry<dyn HolderEstimator> = Registry::new("Hölder estimator");
    reg.with(Arc::new(DyadicMax)).with(Arc::new(Variogram))
}

/// Exponent estimate with a band from the four disjoint quarters of the series
/// (or halves, when quarters would be shorter than [`MIN_SERIES_LEN`]).
pub fn holder_estimate(
    series: &[DVector<f64>],
    h: f64,
    weights: Option<&DVector<f64>>,
    p: f64,
    estimator: &dyn HolderEstimator,
) -> Result<RegularityEstimate> {
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::InvalidArgument(format!(
            "Hölder estimates need at least {MIN_SERIES_LEN} samples, got {}",
            series.len()
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("moment order p must be ≥ 1, got {p}")));
    }
    let cap = |x: f64| x.clamp(0.0, 1.0);
    let exponent = estimator.raw_exponent(series, h, weights, p).map(cap);
    let blocks = if series.len() / 4 >= MIN_SERIES_LEN {
        4
    } else if series.len() / 2 >= MIN_SERIES_LEN {
        2
    } else {
        1
    };
    let band = if exponent.is_some() && blocks > 1 {
        let len = series.len() / blocks;
        let ests: Vec<f64> = (0..blocks)
            .filter_map(|b| estimator.raw_exponent(&series[b * len..(b + 1) * len], h, weights, p))
            .map(cap)
            .collect();
        if ests.is_empty() {
            None
        } else {
            let lo = ests.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ests.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some((lo, hi))
        }
    } else {
        None
    };
    Ok(RegularityEstimate {
        estimator: estimator.name().to_string(),
        degenerate: exponent.is_none(),
        exponent,
        p,
        band,
    })
}
