//! Uniform time grids shared by evolution families, noise paths and solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    h: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, h: f64, steps: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidArgument(format!("grid needs finite t0 and h > 0, got t0 = {t0}, h = {h}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(Self { t0, h, steps })
    }

    /// Grid on `[0, horizon]` with step close to `h`; the step is adjusted
    /// down so that the horizon is hit exactly.
    pub fn with_horizon(horizon: f64, h: f64) -> Result<Self> {
        if !(horizon > 0.0) || !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("need horizon > 0 and h > 0, got {horizon}, {h}")));
        }
        let steps = (horizon / h - 1e-9).ceil().max(1.0) as usize;
        Self::new(0.0, horizon / steps as f64, steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of steps `K`; there are `K + 1` grid points.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    /// Grid index of `t`, which must coincide with a grid point.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.h;
        let i = x.round();
        if !(x - i).abs().lt(&1e-7) || i < 0.0 || i > self.steps as f64 {
            return Err(Error::OffGrid(t));
        }
        Ok(i as usize)
    }

    /// Grid with step `h / factor` over the same interval.
    pub fn refine(&self, factor: usize) -> Self {
        Self {
            t0: self.t0,
            h: self.h / factor as f64,
            steps: self.steps * factor,
        }
    }

    /// First `steps` steps of this grid.
    pub fn truncate(&self, steps: usize) -> Result<Self> {
        Self::new(self.t0, self.h, steps.min(self.steps))
    }

    /// Same step, starting at grid index `start`.
    pub fn suffix(&self, start: usize) -> Result<Self> {
        if start >= self.steps {
            return Err(Error::InvalidArgument(format!("suffix start {start} leaves no steps")));
        }
        Self::new(self.time(start), self.h, self.steps - start)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps
            && (self.h - other.h).abs() <= 1e-12 * self.h
            && (self.t0 - other.t0).abs() <= 1e-12 * self.h.max(self.t0.abs())
    }
}
