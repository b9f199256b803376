//! Picard iteration for the quasilinear problem on windows of length `T̃`.
//!
//! Each iterate solves the linear problem whose operator, drift and noise are
//! frozen along the previous iterate. Windows are chained: the converged end
//! state of one window starts the next.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::step_propagator;
use crate::grid::TimeGrid;
use crate::operator::{audit_sectoriality_with, AuditOptions, EXP_OVERFLOW_LIMIT};
use crate::solver::problem::{Dependence, ProblemSpec};
use crate::solver::trajectory::Trajectory;
use crate::spectral::sobolev_norm_coeffs;
use crate::stochastic::WienerPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardOptions {
    /// Converged when `sup ‖u^{j+1} − u^j‖_Y ≤ tol · sup ‖u^{j+1}‖_Y`.
    pub tol: f64,
    pub max_iter: usize,
    /// Window length `T̃`; `None` iterates on the whole grid at once.
    pub window: Option<f64>,
    /// Stop at `τ_n`, the first grid time with `‖u‖_Z ≥ n`.
    pub threshold: Option<f64>,
    /// Audit every frozen operator against this sector angle.
    pub audit_phi: Option<f64>,
    /// Track whether iterates stay in the solution set.
    pub check_membership: bool,
    /// Consecutive ratios `≥ 1` that count as failure to contract.
    pub noncontraction_run: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            window: None,
            threshold: None,
            audit_phi: None,
            check_membership: true,
            noncontraction_run: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PicardStatus {
    /// Reached the end of the grid.
    Completed,
    /// Stopped at the threshold time `τ_n`.
    Stopped,
    /// A frozen operator left the sector.
    Degenerate,
    /// States or propagators exceeded the overflow limit.
    Overflow,
    NonContraction,
    MaxIterations,
}

impl PicardStatus {
    pub fn is_failure(&self) -> bool {
        matches!(self, Self::NonContraction | Self::MaxIterations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub start_index: usize,
    pub end_index: usize,
    pub iterations: usize,
    /// `d_j = sup ‖u^{j+1} − u^j‖_Y`.
    pub differences: Vec<f64>,
    /// `d_j / d_{j−1}`, starting with the second difference.
    pub ratios: Vec<f64>,
    /// Per iterate: stayed in the solution set.
    pub in_set: Vec<bool>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyCertificate {
    pub time: f64,
    pub index: usize,
    pub eigenvalue: [f64; 2],
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardDiagnostics {
    pub window: f64,
    pub windows: Vec<WindowReport>,
    pub status: PicardStatus,
    /// Some iterate left the solution set; the run continued.
    pub left_solution_set: bool,
    pub degenerate: Option<DegeneracyCertificate>,
    pub suggestion: Option<String>,
}

impl PicardDiagnostics {
    pub fn total_iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iterations).sum()
    }

    pub fn max_iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iterations).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    pub threshold: Option<f64>,
    /// `τ_n`, or the last computed time when the threshold was not reached.
    pub tau: f64,
    pub index: usize,
    pub hit: bool,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    pub diagnostics: PicardDiagnostics,
    pub stopping: StoppingRecord,
}

type StepMats = (DMatrix<f64>, DMatrix<f64>);

/// Exponential and `hφ₁` factors, cached according to how the operator depends on its inputs.
struct StepCache {
    dependence: Dependence,
    constant: Option<StepMats>,
    by_step: Vec<Option<StepMats>>,
}

impl StepCache {
    fn new(dependence: Dependence, steps: usize) -> Self {
        Self {
            dependence,
            constant: None,
            by_step: if dependence == Dependence::TimeOnly {
                vec![None; steps]
            } else {
                Vec::new()
            },
        }
    }

    fn get(&mut self, spec: &ProblemSpec, k: usize, t: f64, h: f64, v: &DVector<f64>) -> Result<(StepMats, Option<DMatrix<f64>>)> {
        let compute = |v: &DVector<f64>| -> Result<(StepMats, DMatrix<f64>)> {
            let a = spec.generator.snapshot(t, v)?;
            let (p, phi) = step_propagator(a.matrix(), h, true)?;
            Ok(((p, phi.expect("requested")), a.into_matrix()))
        };
        match self.dependence {
            Dependence::Constant => {
                if self.constant.is_none() {
                    let (m, a) = compute(v)?;
                    self.constant = Some(m);
                    return Ok((self.constant.clone().expect("set"), Some(a)));
                }
                Ok((self.constant.clone().expect("set"), None))
            }
            Dependence::TimeOnly => {
                if self.by_step[k].is_none() {
                    let (m, a) = compute(v)?;
                    self.by_step[k] = Some(m);
                    return Ok((self.by_step[k].clone().expect("set"), Some(a)));
                }
                Ok((self.by_step[k].clone().expect("set"), None))
            }
            Dependence::Full => {
                let (m, a) = compute(v)?;
                Ok((m, Some(a)))
            }
        }
    }
}

struct Context<'a> {
    spec: &'a ProblemSpec,
    w: &'a WienerPath,
    grid: TimeGrid,
    opts: &'a PicardOptions,
    mu_y: f64,
    mu_z: f64,
    k_bound: f64,
    cache: StepCache,
}

enum WindowEnd {
    Converged,
    NonContraction,
    MaxIterations,
}

struct WindowResult {
    states: Vec<DVector<f64>>,
    report: WindowReport,
    end: WindowEnd,
    /// Generators of the final sweep, for the sector audit.
    generators: Vec<Option<DMatrix<f64>>>,
}

impl Context<'_> {
    fn y_norm(&self, x: &DVector<f64>) -> f64 {
        sobolev_norm_coeffs(&self.spec.basis, x, self.mu_y)
    }

    fn in_solution_set(&self, states: &[DVector<f64>]) -> bool {
        let u0 = self.spec.u0.coeffs();
        let r = self.spec.radii.r;
        if states
            .iter()
            .any(|s| sobolev_norm_coeffs(&self.spec.basis, &(s - u0), self.mu_z) > r)
        {
            return false;
        }
        holder_seminorm(states, self.grid.h(), self.spec.delta, |x| self.y_norm(x)) <= self.k_bound
    }

    /// One sweep of the Picard map on steps `start..end` from the frozen iterate `v`.
    fn sweep(
        &mut self,
        start: usize,
        v: &[DVector<f64>],
        gens: &mut [Option<DMatrix<f64>>],
    ) -> Result<std::result::Result<Vec<DVector<f64>>, usize>> {
        let h = self.grid.h();
        let mut out = Vec::with_capacity(v.len());
        out.push(v[0].clone());
        for i in 0..v.len() - 1 {
            let k = start + i;
            let t = self.grid.time(k);
            let ((p, hphi), a) = match self.cache.get(self.spec, k, t, h, &v[i]) {
                Ok(x) => x,
                Err(Error::Overflow { .. }) => return Ok(Err(i)),
                Err(e) => return Err(e),
            };
            if a.is_some() {
                gens[i] = a;
            }
            let f = self.spec.drift.eval(t, &v[i])?;
            let mut next = &p * &out[i] + &hphi * f;
            if !self.spec.noise.is_zero() {
                next += self.spec.noise.apply(t, &v[i], self.w.step(k));
            }
            let norm = next.norm();
            if !norm.is_finite() || norm > EXP_OVERFLOW_LIMIT {
                return Ok(Err(i));
            }
            out.push(next);
        }
        Ok(Ok(out))
    }

    fn solve_window(&mut self, start: usize, mut end: usize, u_start: &DVector<f64>) -> Result<WindowResult> {
        let mut v = vec![u_start.clone(); end - start + 1];
        let mut report = WindowReport {
            start_index: start,
            end_index: end,
            iterations: 0,
            differences: Vec::new(),
            ratios: Vec::new(),
            in_set: Vec::new(),
            converged: false,
        };
        let mut gens: Vec<Option<DMatrix<f64>>> = vec![None; end - start];
        let mut run = 0usize;
        for _ in 0..self.opts.max_iter {
            let new = match self.sweep(start, &v, &mut gens)? {
                Ok(s) => s,
                Err(i) => {
                    // Shrink the window to the steps before the failing one.
                    end = start + i;
                    v.truncate(i + 1);
                    gens.truncate(i);
                    report.end_index = end;
                    if i == 0 {
                        report.converged = true;
                        return Ok(WindowResult {
                            states: v,
                            report,
                            end: WindowEnd::Converged,
                            generators: gens,
                        });
                    }
                    continue;
                }
            };
            report.iterations += 1;
            let d = new
                .iter()
                .zip(v.iter())
                .map(|(a, b)| self.y_norm(&(a - b)))
                .fold(0.0, f64::max);
            let scale = new.iter().map(|x| self.y_norm(x)).fold(0.0, f64::max);
            if let Some(prev) = report.differences.last().copied() {
                let ratio = if prev > 0.0 { d / prev } else { 0.0 };
                report.ratios.push(ratio);
                run = if ratio >= 1.0 { run + 1 } else { 0 };
            }
            report.differences.push(d);
            if self.opts.check_membership {
                report.in_set.push(self.in_solution_set(&new));
            }
            v = new;
            if d <= self.opts.tol * scale || d == 0.0 {
                report.converged = true;
                return Ok(WindowResult {
                    states: v,
                    report,
                    end: WindowEnd::Converged,
                    generators: gens,
                });
            }
            if run >= self.opts.noncontraction_run {
                return Ok(WindowResult {
                    states: v,
                    report,
                    end: WindowEnd::NonContraction,
                    generators: gens,
                });
            }
        }
        Ok(WindowResult {
            states: v,
            report,
            end: WindowEnd::MaxIterations,
            generators: gens,
        })
    }
}

/// `max_{i<j} ‖x_j − x_i‖ / (t_j − t_i)^δ`, on a strided subsample for long series.
pub fn holder_seminorm(
    states: &[DVector<f64>],
    h: f64,
    delta: f64,
    norm: impl Fn(&DVector<f64>) -> f64,
) -> f64 {
    let stride = (states.len() / 256).max(1);
    let idx: Vec<usize> = (0..states.len()).step_by(stride).collect();
    let mut best: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let dt = (j - i) as f64 * h;
            best = best.max(norm(&(&states[j] - &states[i])) / dt.powf(delta));
        }
    }
    best
}

/// Solves the problem along `w` (whose grid sets times and horizon).
pub fn picard_solve(spec: &ProblemSpec, w: &WienerPath, opts: &PicardOptions) -> Result<PicardOutcome> {
    spec.validate()?;
    if spec.noise.modes() != w.modes() {
        return Err(Error::InvalidArgument(format!(
            "noise has {} modes, path has {}",
            spec.noise.modes(),
            w.modes()
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 || opts.noncontraction_run == 0 {
        return Err(Error::InvalidArgument("Picard needs tol > 0, max_iter ≥ 1 and a non-contraction run ≥ 1".into()));
    }
    let grid = *w.grid();
    let window_steps = match opts.window {
        None => grid.steps(),
        Some(tw) if tw > 0.0 => ((tw / grid.h()).round() as usize).clamp(1, grid.steps()),
        Some(tw) => return Err(Error::InvalidArgument(format!("window length must be positive, got {tw}"))),
    };
    let mut ctx = Context {
        spec,
        w,
        grid,
        opts,
        mu_y: spec.mu_y(),
        mu_z: spec.mu_z(),
        k_bound: spec.holder_bound(),
        cache: StepCache::new(spec.generator.dependence(), grid.steps()),
    };
    let mut traj = Trajectory::new(grid, spec.basis.clone(), spec.components, ctx.mu_z, ctx.mu_y);
    traj.push(spec.u0.coeffs().clone())?;
    let mut diag = PicardDiagnostics {
        window: window_steps as f64 * grid.h(),
        windows: Vec::new(),
        status: PicardStatus::Completed,
        left_solution_set: false,
        degenerate: None,
        suggestion: None,
    };
    let threshold_hit = |traj: &Trajectory| opts.threshold.and_then(|n| traj.first_exceedance(n));
    let mut stop_at = threshold_hit(&traj);
    let mut start = 0;
    while stop_at.is_none() && start < grid.steps() {
        let end = (start + window_steps).min(grid.steps());
        let u_start = traj.state(start).clone();
        let res = ctx.solve_window(start, end, &u_start)?;
        diag.left_solution_set |= res.report.in_set.iter().any(|x| !x);
        diag.windows.push(res.report);
        match res.end {
            WindowEnd::Converged => {}
            WindowEnd::NonContraction | WindowEnd::MaxIterations => {
                diag.status = if matches!(res.end, WindowEnd::NonContraction) {
                    PicardStatus::NonContraction
                } else {
                    PicardStatus::MaxIterations
                };
                diag.suggestion = Some(format!(
                    "reduce the window length (currently {:.3e}) or the time step (currently {:.3e})",
                    window_steps as f64 * grid.h(),
                    grid.h()
                ));
                break;
            }
        }
        // Sector audit on the converged window's operators.
        let mut keep = res.states.len() - 1;
        if let Some(phi) = opts.audit_phi {
            for (i, g) in res.generators.iter().enumerate().take(keep) {
                let Some(g) = g else { continue };
                let snap = crate::operator::OperatorSnapshot::new(spec.basis.clone(), spec.components, g.clone())?;
                let report = audit_sectoriality_with(
                    &snap,
                    phi,
                    0,
                    &AuditOptions {
                        check_resolvent: false,
                        ..AuditOptions::default()
                    },
                );
                if !report.pass_a1 {
                    let z = report.offending_eigenvalue.unwrap_or([f64::NAN, f64::NAN]);
                    diag.degenerate = Some(DegeneracyCertificate {
                        time: grid.time(start + i),
                        index: start + i,
                        eigenvalue: z,
                        reason: format!(
                            "operator eigenvalue {:.6e} {:+.6e}i lies outside the sector of half-angle {phi}",
                            z[0], z[1]
                        ),
                    });
                    keep = i;
                    break;
                }
            }
        }
        for s in res.states.iter().skip(1).take(keep) {
            traj.push(s.clone())?;
        }
        stop_at = threshold_hit(&traj);
        if stop_at.is_some() {
            break;
        }
        if diag.degenerate.is_some() {
            diag.status = PicardStatus::Degenerate;
            break;
        }
        if keep == 0 {
            // Only an overflow on the first step of a window leaves nothing to keep.
            diag.status = PicardStatus::Overflow;
            break;
        }
        start += keep;
    }
    let stopping = match stop_at {
        Some(i) => {
            traj.truncate(i);
            diag.status = PicardStatus::Stopped;
            diag.degenerate = None;
            StoppingRecord {
                threshold: opts.threshold,
                tau: grid.time(i),
                index: i,
                hit: true,
            }
        }
        None => StoppingRecord {
            threshold: opts.threshold,
            tau: traj.last_time(),
            index: traj.last_index(),
            hit: false,
        },
    };
    Ok(PicardOutcome {
        trajectory: traj,
        diagnostics: diag,
        stopping,
    })
}
