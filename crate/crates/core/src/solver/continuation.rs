//! Maximal solutions by restarting the Picard solver at successive `τ_n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::picard::{picard_solve, PicardDiagnostics, PicardOptions, PicardStatus, StoppingRecord};
use crate::solver::problem::ProblemSpec;
use crate::solver::trajectory::Trajectory;
use crate::spectral::Field;
use crate::stochastic::WienerPath;

/// Factor by which successive threshold gaps must shrink to indicate blow-up.
pub const BLOWUP_GAP_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TauInfinity {
    /// Every threshold was reached; the last `τ_n`.
    AllHit { tau: f64 },
    /// Some threshold was not reached before the horizon.
    Survived { horizon: f64 },
    /// The run ended early (degenerate operator, overflow, or solver failure).
    Aborted { time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCheck {
    pub threshold: f64,
    /// `sup ‖u_direct − u_segments‖_Y / sup ‖u‖_Y` on the shared prefix.
    pub relative_gap: f64,
    pub limit: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationOptions {
    pub picard: PicardOptions,
    /// Compare the segments up to this threshold index with a direct run from time zero.
    pub verify_index: Option<usize>,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            picard: PicardOptions::default(),
            verify_index: Some(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub trajectory: Trajectory,
    pub records: Vec<StoppingRecord>,
    pub segments: Vec<PicardDiagnostics>,
    pub tau_infinity: TauInfinity,
    pub uniqueness: Option<UniquenessCheck>,
    pub final_status: PicardStatus,
}

impl ContinuationOutcome {
    /// `τ_{n_{k+1}} − τ_{n_k}` over consecutive hit thresholds.
    pub fn gaps(&self) -> Vec<f64> {
        let hits: Vec<f64> = self.records.iter().filter(|r| r.hit).map(|r| r.tau).collect();
        hits.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// All thresholds hit with gaps eventually shrinking by [`BLOWUP_GAP_FACTOR`].
    pub fn blowup_indicated(&self) -> bool {
        if !matches!(self.tau_infinity, TauInfinity::AllHit { .. }) {
            return false;
        }
        let gaps: Vec<f64> = self.gaps().into_iter().filter(|g| *g > 0.0).collect();
        gaps.len() >= 2 && gaps.windows(2).rev().take(2).all(|w| w[0] >= BLOWUP_GAP_FACTOR * w[1])
    }
}

/// Runs one Picard segment per threshold of `n_sequence`, each started from the
/// previous segment's endpoint, and concatenates them.
pub fn maximal_continuation(
    spec: &ProblemSpec,
    w: &WienerPath,
    n_sequence: &[f64],
    opts: &ContinuationOptions,
) -> Result<ContinuationOutcome> {
    if n_sequence.is_empty() || n_sequence.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidArgument("threshold sequence must be nonempty and strictly increasing".into()));
    }
    spec.validate()?;
    let grid = *w.grid();
    let mut traj = Trajectory::new(grid, spec.basis.clone(), spec.components, spec.mu_z(), spec.mu_y());
    traj.push(spec.u0.coeffs().clone())?;
    let mut records = Vec::with_capacity(n_sequence.len());
    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut status = PicardStatus::Completed;
    let mut aborted = false;
    for &n in n_sequence {
        if traj.z_norms()[start] >= n {
            records.push(StoppingRecord {
                threshold: Some(n),
                tau: grid.time(start),
                index: start,
                hit: true,
            });
            continue;
        }
        if start >= grid.steps() {
            records.push(StoppingRecord {
                threshold: Some(n),
                tau: grid.time(start),
                index: start,
                hit: false,
            });
            continue;
        }
        let seg_spec = spec.with_initial(Field::from_coeffs(
            spec.basis.clone(),
            spec.components,
            traj.state(start).clone(),
        )?);
        let seg_w = if start == 0 { w.clone() } else { w.suffix(start)? };
        let out = picard_solve(
            &seg_spec,
            &seg_w,
            &PicardOptions {
                threshold: Some(n),
                ..opts.picard
            },
        )?;
        traj.extend_from(&out.trajectory)?;
        status = out.diagnostics.status;
        segments.push(out.diagnostics);
        let global = start + out.stopping.index;
        records.push(StoppingRecord {
            threshold: Some(n),
            tau: grid.time(global),
            index: global,
            hit: out.stopping.hit,
        });
        start = global;
        if !out.stopping.hit {
            if status != PicardStatus::Completed {
                aborted = true;
            }
            break;
        }
    }
    let tau_infinity = if aborted {
        TauInfinity::Aborted { time: traj.last_time() }
    } else if records.len() == n_sequence.len() && records.iter().all(|r| r.hit) {
        TauInfinity::AllHit {
            tau: records.last().expect("nonempty").tau,
        }
    } else {
        TauInfinity::Survived { horizon: grid.end() }
    };
    let uniqueness = match opts.verify_index {
        Some(k) if k < records.len() && records[k].hit && k > 0 => {
            let direct = picard_solve(
                spec,
                w,
                &PicardOptions {
                    threshold: Some(n_sequence[k]),
                    ..opts.picard
                },
            )?;
            let upto = records[k].index.min(direct.trajectory.last_index());
            let mut a = traj.clone();
            a.truncate(upto);
            let mut b = direct.trajectory;
            b.truncate(upto);
            let scale = a.y_norms().iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let relative_gap = a.sup_y_distance(&b) / scale;
            let limit = 10.0 * opts.picard.tol;
            Some(UniquenessCheck {
                threshold: n_sequence[k],
                relative_gap,
                limit,
                violated: relative_gap > limit,
            })
        }
        _ => None,
    };
    Ok(ContinuationOutcome {
        trajectory: traj,
        records,
        segments,
        tau_infinity,
        uniqueness,
        final_status: status,
    })
}
