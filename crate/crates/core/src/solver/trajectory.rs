//! Solution paths on a time grid, with cached scale norms.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::spectral::{sobolev_norm_coeffs, Field, SpectralBasis};

/// States at `t_0, …, t_{len-1}` of a grid; may stop before the grid ends.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    basis: Arc<SpectralBasis>,
    components: usize,
    mu_z: f64,
    mu_y: f64,
    states: Vec<DVector<f64>>,
    z_norms: Vec<f64>,
    y_norms: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, basis: Arc<SpectralBasis>, components: usize, mu_z: f64, mu_y: f64) -> Self {
        Self {
            grid,
            basis,
            components,
            mu_z,
            mu_y,
            states: Vec::with_capacity(grid.len()),
            z_norms: Vec::with_capacity(grid.len()),
            y_norms: Vec::with_capacity(grid.len()),
        }
    }

    pub fn from_states(
        grid: TimeGrid,
        basis: Arc<SpectralBasis>,
        components: usize,
        mu_z: f64,
        mu_y: f64,
        states: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let mut t = Self::new(grid, basis, components, mu_z, mu_y);
        for s in states {
            t.push(s)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, state: DVector<f64>) -> Result<()> {
        if self.states.len() >= self.grid.len() {
            return Err(Error::GridMismatch("trajectory already covers its grid".into()));
        }
        if state.len() != self.basis.len() * self.components {
            return Err(Error::GridMismatch(format!(
                "state of length {} in a trajectory of dimension {}",
                state.len(),
                self.basis.len() * self.components
            )));
        }
        self.z_norms.push(sobolev_norm_coeffs(&self.basis, &state, self.mu_z));
        self.y_norms.push(sobolev_norm_coeffs(&self.basis, &state, self.mu_y));
        self.states.push(state);
        Ok(())
    }

    /// Keeps states `0..=last`.
    pub fn truncate(&mut self, last: usize) {
        let n = (last + 1).min(self.states.len());
        self.states.truncate(n);
        self.z_norms.truncate(n);
        self.y_norms.truncate(n);
    }

    /// Appends `other` minus its first state, which must equal this one's last.
    pub fn extend_from(&mut self, other: &Trajectory) -> Result<()> {
        for s in other.states.iter().skip(1) {
            self.push(s.clone())?;
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Whether every grid point has a state.
    pub fn is_complete(&self) -> bool {
        self.states.len() == self.grid.len()
    }

    pub fn last_index(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn last_time(&self) -> f64 {
        self.grid.time(self.last_index())
    }

    pub fn time(&self, i: usize) -> f64 {
        self.grid.time(i)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|i| self.grid.time(i)).collect()
    }

    pub fn state(&self, i: usize) -> &DVector<f64> {
        &self.states[i]
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn last(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    pub fn field(&self, i: usize) -> Result<Field> {
        Field::from_coeffs(self.basis.clone(), self.components, self.states[i].clone())
    }

    pub fn z_norms(&self) -> &[f64] {
        &self.z_norms
    }

    pub fn y_norms(&self) -> &[f64] {
        &self.y_norms
    }

    pub fn mu_z(&self) -> f64 {
        self.mu_z
    }

    pub fn mu_y(&self) -> f64 {
        self.mu_y
    }

    pub fn sup_z(&self) -> f64 {
        self.z_norms.iter().copied().fold(0.0, f64::max)
    }

    /// First index whose `Z` norm reaches `n`.
    pub fn first_exceedance(&self, n: f64) -> Option<usize> {
        self.z_norms.iter().position(|z| *z >= n)
    }

    /// `sup_j ‖u_j − v_j‖_Y` over the common prefix.
    pub fn sup_y_distance(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(other.states.iter())
            .map(|(a, b)| sobolev_norm_coeffs(&self.basis, &(a - b), self.mu_y))
            .fold(0.0, f64::max)
    }

    /// `sup_j ‖u_j − v_j‖` (coefficient Euclidean norm) over the common prefix.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(other.states.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// CSV `t,component,mode,coefficient`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,component,mode,coefficient")?;
        let n = self.basis.len();
        for (i, s) in self.states.iter().enumerate() {
            let t = self.grid.time(i);
            for (k, c) in s.iter().enumerate() {
                writeln!(w, "{t:.16e},{},{},{c:.16e}", k / n, k % n)?;
            }
        }
        Ok(())
    }

    /// CSV `t,z_norm,y_norm`.
    pub fn write_norms_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,z_norm,y_norm")?;
        for i in 0..self.states.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.grid.time(i), self.z_norms[i], self.y_norms[i])?;
        }
        Ok(())
    }
}
