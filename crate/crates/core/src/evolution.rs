//! Two-parameter evolution families `U(t, s)` built from frozen-coefficient
//! exponential products on a uniform grid.
//!
//! `U(t_j, t_i) = P_{j-1} ⋯ P_i` with `P_k = e^{-h A_k}`, where `A_k` is the
//! generator frozen somewhere in `[t_k, t_{k+1}]` by a [`PropagatorScheme`].
//! Only the `K` step propagators are stored. Products are formed on demand,
//! optionally accelerated by block products every `√K` steps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::operator::matfun::{self, exp_and_phi1, spectral_norm, MatrixFunction};
use crate::operator::{audit_sectoriality_with, fractional_power, AuditOptions, OperatorSnapshot};
use crate::registry::{Named, Registry};
use crate::spectral::{Field, SpectralBasis};
use crate::stats::log_log_fit;

/// A time-dependent generator `t ↦ A(t)` in the positive convention.
pub type GeneratorPath<'a> = dyn Fn(f64) -> Result<OperatorSnapshot> + Sync + 'a;

/// Chooses where the generator is frozen on each step.
pub trait PropagatorScheme: Named + Send + Sync {
    fn freeze_time(&self, t0: f64, t1: f64) -> f64;
}

/// First order: `A_k = A(t_k)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeftFrozen;

impl Named for LeftFrozen {
    fn name(&self) -> &'static str {
        "left-frozen"
    }
}

impl PropagatorScheme for LeftFrozen {
    fn freeze_time(&self, t0: f64, _t1: f64) -> f64 {
        t0
    }
}

/// Second order for commuting paths: `A_k = A((t_k + t_{k+1})/2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MidpointFrozen;

impl Named for MidpointFrozen {
    fn name(&self) -> &'static str {
        "midpoint-frozen"
    }
}

impl PropagatorScheme for MidpointFrozen {
    fn freeze_time(&self, t0: f64, t1: f64) -> f64 {
        0.5 * (t0 + t1)
    }
}

pub fn propagator_schemes() -> Registry<dyn PropagatorScheme> {
    let reg: Registry<dyn PropagatorScheme> = Registry::new("propagator scheme");
    reg.with(Arc::new(LeftFrozen)).with(Arc::new(MidpointFrozen))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyOptions {
    /// Audit every frozen generator against this sector angle; `None` waives it.
    pub audit_phi: Option<f64>,
    /// Also store `h φ₁(-h A_k)` for exponential-integrator drift terms.
    pub with_phi1: bool,
    /// Store block products every `⌈√K⌉` steps.
    pub checkpoints: bool,
}


#[derive(Debug, Clone)]
struct Step {
    generator: DMatrix<f64>,
    propagator: DMatrix<f64>,
    hphi1: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
struct Checkpoints {
    stride: usize,
    /// `blocks[m] = P_{(m+1)s-1} ⋯ P_{ms}`.
    blocks: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct EvolutionFamily {
    grid: TimeGrid,
    basis: Arc<SpectralBasis>,
    components: usize,
    steps: Vec<Step>,
    checkpoints: Option<Checkpoints>,
}

/// `e^{-hA}` and optionally `h φ₁(-hA)`.
pub fn step_propagator(a: &DMatrix<f64>, h: f64, with_phi1: bool) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    if with_phi1 {
        let (e, phi) = exp_and_phi1(&(a * -h))?;
        let norm = matfun::one_norm(&e);
        if !(norm <= matfun::EXP_OVERFLOW_LIMIT) {
            return Err(Error::Overflow {
                norm,
                limit: matfun::EXP_OVERFLOW_LIMIT,
            });
        }
        Ok((e, Some(phi * h)))
    } else {
        Ok((matfun::Auto::default().exp_neg(a, h)?, None))
    }
}

/// Left-frozen family with default options.
pub fn build_family(path: &GeneratorPath, grid: TimeGrid) -> Result<EvolutionFamily> {
    EvolutionFamily::build(path, grid, &LeftFrozen, FamilyOptions::default())
}

impl EvolutionFamily {
    pub fn build(
        path: &GeneratorPath,
        grid: TimeGrid,
        scheme: &dyn PropagatorScheme,
        opts: FamilyOptions,
    ) -> Result<Self> {
        let snapshots = (0..grid.steps())
            .map(|k| path(scheme.freeze_time(grid.time(k), grid.time(k + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_generators(grid, &snapshots, opts)
    }

    /// Family from one frozen generator per step.
    pub fn from_generators(grid: TimeGrid, generators: &[OperatorSnapshot], opts: FamilyOptions) -> Result<Self> {
        if generators.len() != grid.steps() {
            return Err(Error::GridMismatch(format!(
                "{} generators for {} steps",
                generators.len(),
                grid.steps()
            )));
        }
        let basis = generators[0].basis().clone();
        let components = generators[0].components();
        let h = grid.h();
        let mut steps: Vec<Step> = Vec::with_capacity(generators.len());
        for (k, g) in generators.iter().enumerate() {
            if g.dim() != basis.len() * components {
                return Err(Error::GridMismatch("generator dimensions differ along the path".into()));
            }
            if let Some(phi) = opts.audit_phi {
                let report = audit_sectoriality_with(
                    g,
                    phi,
                    0,
                    &AuditOptions {
                        check_resolvent: false,
                        ..AuditOptions::default()
                    },
                );
                if !report.pass_a1 {
                    let z = report.offending_eigenvalue.unwrap_or([f64::NAN, f64::NAN]);
                    return Err(Error::Degenerate {
                        time: grid.time(k),
                        reason: format!("eigenvalue {} {:+}i leaves the sector", z[0], z[1]),
                    });
                }
            }
            // Constant stretches of the path reuse the previous exponential.
            if let Some(prev) = steps.last() {
                if prev.generator == *g.matrix() && (prev.hphi1.is_some() || !opts.with_phi1) {
                    let s = prev.clone();
                    steps.push(s);
                    continue;
                }
            }
            let (p, hphi1) = step_propagator(g.matrix(), h, opts.with_phi1)?;
            steps.push(Step {
                generator: g.matrix().clone(),
                propagator: p,
                hphi1,
            });
        }
        let mut fam = Self {
            grid,
            basis,
            components,
            steps,
            checkpoints: None,
        };
        if opts.checkpoints {
            fam.build_checkpoints();
        }
        Ok(fam)
    }

    fn build_checkpoints(&mut self) {
        let k = self.steps.len();
        let stride = ((k as f64).sqrt().ceil() as usize).max(1);
        let dim = self.dim();
        let mut blocks = Vec::new();
        let mut m = 0;
        while (m + 1) * stride <= k {
            let mut prod = DMatrix::<f64>::identity(dim, dim);
            for s in m * stride..(m + 1) * stride {
                prod = &self.steps[s].propagator * prod;
            }
            blocks.push(prod);
            m += 1;
        }
        self.checkpoints = Some(Checkpoints { stride, blocks });
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

    pub fn dim(&self) -> usize {
        self.basis.len() * self.components
    }

    pub fn generator(&self, k: usize) -> &DMatrix<f64> {
        &self.steps[k].generator
    }

    pub fn propagator(&self, k: usize) -> &DMatrix<f64> {
        &self.steps[k].propagator
    }

    /// `h φ₁(-h A_k)` when the family was built with it.
    pub fn hphi1(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.steps[k].hphi1.as_ref()
    }

    fn check_indices(&self, j: usize, i: usize) -> Result<()> {
        if i > j || j > self.steps.len() {
            return Err(Error::InvalidArgument(format!(
                "evolution needs s ≤ t on the grid, got indices t = {j}, s = {i}"
            )));
        }
        Ok(())
    }

    /// `U(t_j, t_i) x` on coefficient vectors.
    pub fn apply_idx(&self, j: usize, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_indices(j, i)?;
        let mut y = x.clone();
        let mut k = i;
        if let Some(cp) = &self.checkpoints {
            while k < j && !k.is_multiple_of(cp.stride) {
                y = &self.steps[k].propagator * y;
                k += 1;
            }
            while k + cp.stride <= j && k / cp.stride < cp.blocks.len() {
                y = &cp.blocks[k / cp.stride] * y;
                k += cp.stride;
            }
        }
        while k < j {
            y = &self.steps[k].propagator * y;
            k += 1;
        }
        Ok(y)
    }

    /// `U(t, s) x`; both times must be grid points with `s ≤ t`.
    pub fn apply(&self, t: f64, s: f64, x: &Field) -> Result<Field> {
        let j = self.grid.index_of(t)?;
        let i = self.grid.index_of(s)?;
        if x.coeffs().len() != self.dim() {
            return Err(Error::GridMismatch("field dimension does not match the family".into()));
        }
        let y = self.apply_idx(j, i, x.coeffs())?;
        Field::from_coeffs(self.basis.clone(), self.components, y)
    }

    /// The matrix `U(t_j, t_i)`.
    pub fn matrix_idx(&self, j: usize, i: usize) -> Result<DMatrix<f64>> {
        self.check_indices(j, i)?;
        let dim = self.dim();
        let mut m = DMatrix::<f64>::identity(dim, dim);
        for k in i..j {
            m = &self.steps[k].propagator * m;
        }
        Ok(m)
    }

    /// Every `U(t_j, t_i)` for fixed `i` and `j = i, …, K`, by forward accumulation.
    pub fn matrices_from(&self, i: usize) -> Result<Vec<DMatrix<f64>>> {
        self.check_indices(i, i)?;
        let dim = self.dim();
        let mut out = Vec::with_capacity(self.steps.len() + 1 - i);
        let mut m = DMatrix::<f64>::identity(dim, dim);
        out.push(m.clone());
        for k in i..self.steps.len() {
            m = &self.steps[k].propagator * m;
            out.push(m.clone());
        }
        Ok(out)
    }

    /// `max ‖U(t_j, t_i)‖` over all grid pairs.
    pub fn uniform_bound(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..=self.steps.len() {
            if let Ok(ms) = self.matrices_from(i) {
                for m in ms {
                    best = best.max(spectral_norm(&m));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingFit {
    pub alpha: f64,
    pub beta: f64,
    pub expected_slope: f64,
    pub slope: f64,
    pub c_est: f64,
    pub r_squared: f64,
    pub gaps: Vec<f64>,
    pub norms: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub fits: Vec<SmoothingFit>,
}

impl SmoothingReport {
    pub fn passed(&self) -> bool {
        self.fits.iter().all(|f| f.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingOptions {
    pub points: usize,
    /// Smallest gap is `max(3h, lo · β'/λ_max)`.
    pub lo: f64,
    /// Largest gap is `min(span, hi · β'/λ_min)`.
    pub hi: f64,
    pub tolerance: f64,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        Self {
            points: 12,
            lo: 2.0,
            hi: 1.0 / 12.0,
            tolerance: 0.1,
        }
    }
}

/// Fits `log ‖A^β(t) U(t,s) A^{-α}(s)‖` against `log(t − s)` for each
/// `(α, β)` pair, with `s` at the start of the grid.
pub fn smoothing_audit(fam: &EvolutionFamily, path: &GeneratorPath, pairs: &[(f64, f64)]) -> Result<SmoothingReport> {
    smoothing_audit_with(fam, path, pairs, &SmoothingOptions::default())
}

pub fn smoothing_audit_with(
    fam: &EvolutionFamily,
    path: &GeneratorPath,
    pairs: &[(f64, f64)],
    opts: &SmoothingOptions,
) -> Result<SmoothingReport> {
    let grid = fam.grid();
    let h = grid.h();
    let a0 = path(grid.t0())?;
    let eig = matfun::eigenvalues(a0.matrix());
    let lmin = eig.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let lmax = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let span = grid.end() - grid.t0();
    let us = fam.matrices_from(0)?;
    let mut fits = Vec::with_capacity(pairs.len());
    for &(alpha, beta) in pairs {
        let bp = (beta - alpha).max(0.25);
        let lo = (3.0 * h).max(opts.lo * bp / lmax);
        let hi = span.min(opts.hi * bp / lmin).max(lo * 8.0).min(span);
        let mut idx: Vec<usize> = (0..opts.points)
            .map(|p| {
                let g = lo * (hi / lo).powf(p as f64 / (opts.points - 1) as f64);
                ((g / h).round() as usize).clamp(1, grid.steps())
            })
            .collect();
        idx.dedup();
        let s_neg = fractional_power(&a0, -alpha)?.into_matrix();
        let mut gaps = Vec::with_capacity(idx.len());
        let mut norms = Vec::with_capacity(idx.len());
        for &j in &idx {
            let t = grid.time(j);
            let at = fractional_power(&path(t)?, beta)?.into_matrix();
            norms.push(spectral_norm(&(at * &us[j] * &s_neg)));
            gaps.push(t - grid.t0());
        }
        let expected = alpha - beta;
        let (slope, c_est, r2) = match log_log_fit(&gaps, &norms) {
            Some(f) => (f.slope, f.intercept.exp(), f.r_squared),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        fits.push(SmoothingFit {
            alpha,
            beta,
            expected_slope: expected,
            slope,
            c_est,
            r_squared: r2,
            pass: gaps.len() >= 8 && slope >= expected - opts.tolerance,
            gaps,
            norms,
        });
    }
    Ok(SmoothingReport { fits })
}

/// Both sides of `U²(t,s) − U¹(t,s) = ∫_s^t U¹(t,τ)(A¹(τ) − A²(τ))U²(τ,s) dτ`.
#[derive(Debug, Clone)]
pub struct FamilyDifference {
    pub direct: Field,
    pub integral: Field,
}

impl FamilyDifference {
    /// `‖direct − integral‖ / ‖direct‖`.
    pub fn relative_gap(&self) -> f64 {
        let d = self.direct.coeffs();
        let diff = (d - self.integral.coeffs()).norm();
        if d.norm() == 0.0 {
            diff
        } else {
            diff / d.norm()
        }
    }
}

/// The direct difference and its integral representation, the integral by
/// the trapezoidal rule on the shared grid.
pub fn family_difference(
    fam1: &EvolutionFamily,
    fam2: &EvolutionFamily,
    path1: &GeneratorPath,
    path2: &GeneratorPath,
    t: f64,
    s: f64,
    x: &Field,
) -> Result<FamilyDifference> {
    if !fam1.grid().same_as(fam2.grid()) || fam1.dim() != fam2.dim() {
        return Err(Error::GridMismatch("families live on different grids".into()));
    }
    let grid = fam1.grid();
    let j = grid.index_of(t)?;
    let i = grid.index_of(s)?;
    if i > j {
        return Err(Error::InvalidArgument("need s ≤ t".into()));
    }
    let direct = fam2.apply_idx(j, i, x.coeffs())? - fam1.apply_idx(j, i, x.coeffs())?;
    let mut integral = DVector::<f64>::zeros(fam1.dim());
    let mut u2 = x.coeffs().clone();
    for k in i..=j {
        let tau = grid.time(k);
        let d = path1(tau)?.matrix() - path2(tau)?.matrix();
        let g = fam1.apply_idx(j, k, &(d * &u2))?;
        let w = if (k == i || k == j) && i != j { 0.5 } else { 1.0 };
        if i != j {
            integral += g * (w * grid.h());
        }
        if k < j {
            u2 = fam2.propagator(k) * u2;
        }
    }
    Ok(FamilyDifference {
        direct: Field::from_coeffs(fam1.basis.clone(), fam1.components, direct)?,
        integral: Field::from_coeffs(fam1.basis.clone(), fam1.components, integral)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, BoundaryCondition, Domain};
    use std::f64::consts::PI;

    fn heat_path(n: usize) -> (Arc<SpectralBasis>, impl Fn(f64) -> Result<OperatorSnapshot> + Sync) {
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, n).unwrap();
        let bb = b.clone();
        (b, move |t: f64| Ok(OperatorSnapshot::shifted_laplacian(bb.clone(), 1, 1.0, 1.0 + t)))
    }

    #[test]
    fn registry_has_both_schemes() {
        assert_eq!(propagator_schemes().names(), vec!["left-frozen", "midpoint-frozen"]);
    }

    #[test]
    fn identity_and_cocycle() {
        let (b, path) = heat_path(8);
        let grid = TimeGrid::new(0.0, 0.01, 30).unwrap();
        let fam = build_family(&path, grid).unwrap();
        let x = Field::from_fn(b.clone(), 1, |_, x, _| x * (PI - x));
        let same = fam.apply(0.1, 0.1, &x).unwrap();
        assert_eq!(same.coeffs(), x.coeffs());
        let direct = fam.apply(0.3, 0.05, &x).unwrap();
        let two = fam.apply(0.3, 0.2, &fam.apply(0.2, 0.05, &x).unwrap()).unwrap();
        assert!((direct.coeffs() - two.coeffs()).norm() < 1e-12);
    }

    #[test]
    fn checkpoints_agree_with_plain_products() {
        let (b, path) = heat_path(6);
        let grid = TimeGrid::new(0.0, 0.01, 50).unwrap();
        let plain = build_family(&path, grid).unwrap();
        let opts = FamilyOptions {
            checkpoints: true,
            ..FamilyOptions::default()
        };
        let cp = EvolutionFamily::build(&path, grid, &LeftFrozen, opts).unwrap();
        let x = Field::mode(b, 1, 0, 0);
        for (j, i) in [(50, 0), (37, 3), (10, 9), (49, 7)] {
            let a = plain.apply_idx(j, i, x.coeffs()).unwrap();
            let c = cp.apply_idx(j, i, x.coeffs()).unwrap();
            assert!((a - c).norm() < 1e-14);
        }
    }

    #[test]
    fn off_grid_and_reversed_times_rejected() {
        let (b, path) = heat_path(4);
        let fam = build_family(&path, TimeGrid::new(0.0, 0.1, 10).unwrap()).unwrap();
        let x = Field::zeros(b, 1);
        assert!(matches!(fam.apply(0.25, 0.0, &x), Err(Error::OffGrid(_))));
        assert!(fam.apply(0.1, 0.2, &x).is_err());
    }

    #[test]
    fn heat_mode_decay() {
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, 4).unwrap();
        let bb = b.clone();
        let path = move |_t: f64| Ok(OperatorSnapshot::shifted_laplacian(bb.clone(), 1, 0.0, 1.0));
        let fam = build_family(&path, TimeGrid::new(0.0, 0.05, 20).unwrap()).unwrap();
        let e1 = Field::mode(b, 1, 0, 0);
        let y = fam.apply(1.0, 0.0, &e1).unwrap();
        assert!((y.coeffs()[0] - (-1f64).exp()).abs() < 1e-13);
        assert!(y.coeffs().rows(1, 3).norm() < 1e-15);
    }

    #[test]
    fn audit_rejects_anti_dissipative_generator() {
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, 3).unwrap();
        let bb = b.clone();
        let path = move |_t: f64| Ok(OperatorSnapshot::shifted_laplacian(bb.clone(), 1, 0.0, -1.0));
        let opts = FamilyOptions {
            audit_phi: Some(PI / 4.0),
            ..FamilyOptions::default()
        };
        let r = EvolutionFamily::build(&path, TimeGrid::new(0.0, 0.1, 3).unwrap(), &LeftFrozen, opts);
        assert!(matches!(r, Err(Error::Degenerate { .. })));
    }

    #[test]
    fn difference_identity_vanishes_for_equal_paths() {
        let (b, path) = heat_path(4);
        let grid = TimeGrid::new(0.0, 0.01, 10).unwrap();
        let fam = build_family(&path, grid).unwrap();
        let x = Field::mode(b, 1, 0, 0);
        let d = family_difference(&fam, &fam, &path, &path, 0.1, 0.0, &x).unwrap();
        assert_eq!(d.direct.coeffs().norm(), 0.0);
        assert_eq!(d.integral.coeffs().norm(), 0.0);
    }
}
