//! Truncated cylindrical Wiener paths with reproducible per-sample streams.

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Where a path came from: enough to regenerate it bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub sample_index: u64,
}

impl SeedLineage {
    /// 64-bit key of the sample's generator.
    pub fn key(&self) -> u64 {
        let mut s = self.master_seed ^ splitmix64(self.sample_index.wrapping_add(0x632B_E59B_D9B4_E019));
        s = splitmix64(s);
        splitmix64(s ^ self.sample_index)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `increments[i * M + m] = W_m(t_{i+1}) − W_m(t_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerPath {
    grid: TimeGrid,
    modes: usize,
    lineage: Option<SeedLineage>,
    increments: Vec<f64>,
}

/// Draws a path with `M` modes on `grid`.
///
/// Each sample owns a ChaCha8 generator keyed by its lineage. Step `i` reads
/// stream `i` of that generator, so increments depend only on
/// `(master_seed, sample_index, i, m)`.
pub fn sample_wiener(modes: usize, grid: TimeGrid, master_seed: u64, sample_index: u64) -> Result<WienerPath> {
    if modes == 0 {
        return Err(Error::InvalidArgument("a Wiener path needs at least one mode".into()));
    }
    let lineage = SeedLineage {
        master_seed,
        sample_index,
    };
    let sd = grid.h().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(lineage.key());
    let mut increments = Vec::with_capacity(grid.steps() * modes);
    for i in 0..grid.steps() {
        rng.set_stream(i as u64);
        rng.set_word_pos(0);
        for _ in 0..modes {
            let z: f64 = rng.sample(StandardNormal);
            increments.push(sd * z);
        }
    }
    Ok(WienerPath {
        grid,
        modes,
        lineage: Some(lineage),
        increments,
    })
}

impl WienerPath {
    pub fn from_increments(grid: TimeGrid, modes: usize, increments: Vec<f64>) -> Result<Self> {
        if modes == 0 || increments.len() != grid.steps() * modes {
            return Err(Error::InvalidArgument(format!(
                "expected {} increments for {} steps × {} modes, got {}",
                grid.steps() * modes,
                grid.steps(),
                modes,
                increments.len()
            )));
        }
        if increments.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Wiener increments"));
        }
        Ok(Self {
            grid,
            modes,
            lineage: None,
            increments,
        })
    }

    pub fn zero(grid: TimeGrid, modes: usize) -> Self {
        Self {
            grid,
            modes: modes.max(1),
            lineage: None,
            increments: vec![0.0; grid.steps() * modes.max(1)],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn lineage(&self) -> Option<SeedLineage> {
        self.lineage
    }

    /// The `M` increments of step `i`.
    pub fn step(&self, i: usize) -> &[f64] {
        &self.increments[i * self.modes..(i + 1) * self.modes]
    }

    pub fn increment(&self, i: usize, m: usize) -> f64 {
        self.increments[i * self.modes + m]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W(t_j)` for all modes.
    pub fn value(&self, j: usize) -> DVector<f64> {
        let mut w = DVector::zeros(self.modes);
        for i in 0..j.min(self.grid.steps()) {
            for (m, d) in self.step(i).iter().enumerate() {
                w[m] += d;
            }
        }
        w
    }

    /// Path on the grid with step `factor·h`, summing groups of increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.steps().is_multiple_of(factor) {
            return Err(Error::GridMismatch(format!(
                "{} steps cannot be grouped by {factor}",
                self.grid.steps()
            )));
        }
        let steps = self.grid.steps() / factor;
        let grid = TimeGrid::new(self.grid.t0(), self.grid.h() * factor as f64, steps)?;
        let mut inc = vec![0.0; steps * self.modes];
        for i in 0..self.grid.steps() {
            let c = i / factor;
            for m in 0..self.modes {
                inc[c * self.modes + m] += self.increment(i, m);
            }
        }
        Ok(Self {
            grid,
            modes: self.modes,
            lineage: self.lineage,
            increments: inc,
        })
    }

    /// Path whose mode `m` is this path's mode `perm[m]`.
    pub fn permute_modes(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.modes];
        if perm.len() != self.modes || perm.iter().any(|&p| p >= self.modes || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("mode permutation is not a bijection".into()));
        }
        let mut inc = Vec::with_capacity(self.increments.len());
        for i in 0..self.grid.steps() {
            let row = self.step(i);
            inc.extend(perm.iter().map(|&p| row[p]));
        }
        Ok(Self {
            grid: self.grid,
            modes: self.modes,
            lineage: self.lineage,
            increments: inc,
        })
    }

    /// Path restricted to steps `start..` (for restarts).
    pub fn suffix(&self, start: usize) -> Result<Self> {
        let grid = self.grid.suffix(start)?;
        Ok(Self {
            grid,
            modes: self.modes,
            lineage: self.lineage,
            increments: self.increments[start * self.modes..].to_vec(),
        })
    }

    /// CSV with columns `t,mode,increment`; `t` is the left end of the step.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mode,increment")?;
        for i in 0..self.grid.steps() {
            let t = self.grid.time(i);
            for (m, d) in self.step(i).iter().enumerate() {
                writeln!(w, "{t:.16e},{m},{d:.16e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn same_lineage_same_path() {
        let g = TimeGrid::new(0.0, 1e-3, 50).unwrap();
        let a = sample_wiener(3, g, 7, 11).unwrap();
        let b = sample_wiener(3, g, 7, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_wiener(3, g, 7, 12).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn mean_and_variance_match_step() {
        // 10⁶ draws: the standard error of the mean is 10⁻³√h, so the band is 3σ.
        let h = 1e-2;
        let g = TimeGrid::new(0.0, h, 100_000).unwrap();
        let p = sample_wiener(10, g, 2024, 0).unwrap();
        let inc = p.increments();
        assert_eq!(inc.len(), 1_000_000);
        assert!(stats::mean(inc).abs() < 3e-3 * h.sqrt());
        assert!((stats::variance(inc) / h - 1.0).abs() < 0.02);
    }

    #[test]
    fn steps_are_independent_streams() {
        // Step i depends only on (key, i): a longer grid shares the prefix.
        let short = sample_wiener(2, TimeGrid::new(0.0, 0.1, 5).unwrap(), 1, 1).unwrap();
        let long = sample_wiener(2, TimeGrid::new(0.0, 0.1, 9).unwrap(), 1, 1).unwrap();
        assert_eq!(short.increments(), &long.increments()[..10]);
    }

    #[test]
    fn coarsen_sums_pairs() {
        let g = TimeGrid::new(0.0, 0.5, 4).unwrap();
        let p = WienerPath::from_increments(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = p.coarsen(2).unwrap();
        assert_eq!(c.increments(), &[3.0, 7.0]);
        assert_eq!(c.grid().h(), 1.0);
        assert!(p.coarsen(3).is_err());
    }

    #[test]
    fn permutation_and_csv() {
        let g = TimeGrid::new(0.0, 0.5, 2).unwrap();
        let p = WienerPath::from_increments(g, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.permute_modes(&[1, 0]).unwrap().increments(), &[2.0, 1.0, 4.0, 3.0]);
        assert!(p.permute_modes(&[0, 0]).is_err());
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("t,mode,increment\n0.0000000000000000e0,0,1.0000000000000000e0"));
    }
}
