//! Left-point Itô sums `J_j = Σ_{i<j} σ(t_i, u_i) ΔW_i`.

use nalgebra::{DMatrix, DVector};

use super::noise::NoiseOperator;
use super::wiener::WienerPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// The states an integrand may look at while step `current` is evaluated:
/// indices `0..=current` only.
pub struct Prefix<'a> {
    states: &'a [DVector<f64>],
    current: usize,
}

impl<'a> Prefix<'a> {
    pub fn new(states: &'a [DVector<f64>], current: usize) -> Self {
        Self { states, current }
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn state(&self, k: usize) -> Result<&'a DVector<f64>> {
        if k > self.current || k >= self.states.len() {
            return Err(Error::NotAdapted {
                requested: k,
                available: self.current.min(self.states.len().saturating_sub(1)),
            });
        }
        Ok(&self.states[k])
    }

    pub fn latest(&self) -> Result<&'a DVector<f64>> {
        self.state(self.current)
    }
}

/// Grid-indexed values of a stochastic integral, `values[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoIntegral {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
}

impl ItoIntegral {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn at(&self, j: usize) -> &DVector<f64> {
        &self.values[j]
    }

    /// Piecewise linear interpolant between grid values.
    pub fn interpolate(&self, t: f64) -> Result<DVector<f64>> {
        let x = (t - self.grid.t0()) / self.grid.h();
        if !(x >= -1e-9 && x <= self.grid.steps() as f64 + 1e-9) {
            return Err(Error::InvalidArgument(format!("time {t} is outside the grid")));
        }
        let i = (x.floor().max(0.0) as usize).min(self.grid.steps() - 1);
        let w = (x - i as f64).clamp(0.0, 1.0);
        Ok(&self.values[i] * (1.0 - w) + &self.values[i + 1] * w)
    }
}

/// `J(σ)` along `path`. When `states` is given, step `i` evaluates
/// `σ(t_i, states[i])`; otherwise σ is evaluated at the zero state.
pub fn ito_integral(sigma: &dyn NoiseOperator, path: &WienerPath, states: Option<&[DVector<f64>]>) -> Result<ItoIntegral> {
    if sigma.modes() != path.modes() {
        return Err(Error::GridMismatch(format!(
            "noise has {} modes, path has {}",
            sigma.modes(),
            path.modes()
        )));
    }
    if let Some(s) = states {
        if s.len() < path.grid().steps() {
            return Err(Error::NotAdapted {
                requested: path.grid().steps() - 1,
                available: s.len().saturating_sub(1),
            });
        }
    }
    let zero = DVector::zeros(sigma.dim());
    ito_integral_adapted(path, sigma.dim(), |i, prefix| {
        let u = match states {
            Some(_) => prefix.latest()?,
            None => &zero,
        };
        Ok(sigma.matrix(path.grid().time(i), u))
    }, states.unwrap_or(&[]))
}

/// `J` for a general adapted integrand. The callback gets the step index and a
/// [`Prefix`] view that refuses to reveal later states.
pub fn ito_integral_adapted<F>(path: &WienerPath, dim: usize, mut integrand: F, states: &[DVector<f64>]) -> Result<ItoIntegral>
where
    F: FnMut(usize, &Prefix) -> Result<DMatrix<f64>>,
{
    let grid = *path.grid();
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = DVector::zeros(dim);
    values.push(acc.clone());
    for i in 0..grid.steps() {
        let prefix = Prefix::new(states, i);
        let s = integrand(i, &prefix)?;
        if s.nrows() != dim || s.ncols() != path.modes() {
            return Err(Error::GridMismatch(format!(
                "integrand is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                dim,
                path.modes()
            )));
        }
        acc += s * DVector::from_column_slice(path.step(i));
        values.push(acc.clone());
    }
    Ok(ItoIntegral { grid, values })
}
