//! Audit battery behind the `verify` command.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ensemble::config::{Prepared, VerifyConfig};
use crate::error::{Error, Result};
use crate::evolution::{smoothing_audit, EvolutionFamily, FamilyOptions, LeftFrozen};
use crate::grid::TimeGrid;
use crate::operator::{audit_sectoriality_with, estimate_at_modulus, AuditOptions, ModulusEstimate, OperatorSnapshot};
use crate::registry::{Named, Registry};
use crate::solver::{ibp_identity_audit, linear_pathwise_mild, LinearOptions};
use crate::spectral::{build_basis, BoundaryCondition, Domain, Field, SpectralBasis};
use crate::stats::median;
use crate::stochastic::{sample_wiener, AdditiveNoise};

/// Largest number of steps used for family-based audits.
pub const VERIFY_MAX_STEPS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub name: String,
    pub gating: bool,
    pub passed: bool,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub model: String,
    pub passed: bool,
    pub audits: Vec<AuditResult>,
}

pub struct VerifyContext<'a> {
    pub prepared: &'a Prepared,
    /// Run grid coarsened to at most [`VERIFY_MAX_STEPS`] steps.
    pub grid: TimeGrid,
}

impl VerifyContext<'_> {
    /// The model's generator frozen at the initial state.
    pub fn frozen(&self, t: f64) -> Result<OperatorSnapshot> {
        let spec = &self.prepared.model.spec;
        spec.generator.snapshot(t, spec.u0.coeffs())
    }

    fn family(&self, opts: FamilyOptions) -> Result<EvolutionFamily> {
        EvolutionFamily::build(&|t| self.frozen(t), self.grid, &LeftFrozen, opts)
    }
}

pub trait Audit: Named + Send + Sync {
    /// Whether a failure makes `verify` exit nonzero.
    fn gating(&self) -> bool {
        true
    }
    fn enabled(&self, cfg: &VerifyConfig) -> bool;
    fn run(&self, ctx: &VerifyContext) -> Result<(bool, Value)>;
}

pub struct SectorAudit;

impl Named for SectorAudit {
    fn name(&self) -> &'static str {
        "sector"
    }
}

impl Audit for SectorAudit {
    fn enabled(&self, cfg: &VerifyConfig) -> bool {
        cfg.sector_audit
    }

    fn run(&self, ctx: &VerifyContext) -> Result<(bool, Value)> {
        let phi = ctx.prepared.config.verify.sector_angle;
        let mut rows = Vec::new();
        let mut ok = true;
        for k in 0..5 {
            let t = ctx.grid.time(k * ctx.grid.steps() / 4);
            let r = audit_sectoriality_with(&ctx.frozen(t)?, phi, 16, &AuditOptions::default());
            ok &= r.passed();
            rows.push(json!({
                "t": t, "phi_est": r.phi_est, "m_est": r.m_est, "pass_a1": r.pass_a1, "pass_a2": r.pass_a2,
                "offending_eigenvalue": r.offending_eigenvalue,
            }));
        }
        Ok((ok, json!({ "phi_declared": phi, "times": rows })))
    }
}

pub struct SmoothingAudit;

impl Named for SmoothingAudit {
    fn name(&self) -> &'static str {
        "smoothing"
    }
}

impl Audit for SmoothingAudit {
    fn enabled(&self, cfg: &VerifyConfig) -> bool {
        cfg.smoothing_audit
    }

    fn run(&self, ctx: &VerifyContext) -> Result<(bool, Value)> {
        let fam = ctx.family(FamilyOptions::default())?;
        let r = smoothing_audit(&fam, &|t| ctx.frozen(t), &[(0.0, 0.5), (0.0, 1.0), (0.5, 0.75)])?;
        let fits: Vec<Value> = r
            .fits
            .iter()
            .map(|f| json!({"alpha": f.alpha, "beta": f.beta, "expected_slope": f.expected_slope, "slope": f.slope, "pass": f.pass}))
            .collect();
        Ok((r.passed(), json!({ "fits": fits })))
    }
}

pub struct ModulusFit;

impl Named for ModulusFit {
    fn name(&self) -> &'static str {
        "at-modulus"
    }
}

impl Audit for ModulusFit {
    fn enabled(&self, cfg: &VerifyConfig) -> bool {
        cfg.at_modulus_fit
    }

    fn run(&self, ctx: &VerifyContext) -> Result<(bool, Value)> {
        let nu = ctx.prepared.model.spec.exponents.nu;
        let est = estimate_at_modulus(&|t| ctx.frozen(t), nu, &ctx.grid.times())?;
        let ok = match &est {
            ModulusEstimate::Constant { .. } => true,
            ModulusEstimate::Fitted { modulus, .. } => modulus.is_some(),
            ModulusEstimate::Insufficient { .. } => false,
        };
        Ok((ok, serde_json::to_value(&est)?))
    }
}

pub struct CocycleCheck;

impl Named for CocycleCheck {
    fn name(&self) -> &'static str {
        "cocycle"
    }
}

impl Audit for CocycleCheck {
    fn enabled(&self, cfg: &VerifyConfig) -> bool {
        cfg.cocycle
    }

    fn run(&self, ctx: &VerifyContext) -> Result<(bool, Value)> {
        let fam = ctx.family(FamilyOptions {
            checkpoints: true,
            ..FamilyOptions::default()
        })?;
        let k = ctx.grid.steps();
        let identity = (fam.matrix_idx(k / 2, k / 2)? - DMatrix::identity(fam.dim(), fam.dim())).abs().max();
        let mut worst: f64 = 0.0;
        for (i, j, l) in [(0, k / 3, k), (k / 4, k / 2, 3 * k / 4), (0, 1, k / 2)] {
            let whole = fam.matrix_idx(l, i)?;
            let split = fam.matrix_idx(l, j)? * fam.matrix_idx(j, i)?;
            let scale = whole.norm().max(1e-300);
            worst = worst.max((whole - split).norm() / scale);
        }
        Ok((identity == 0.0 && worst < 1e-10, json!({ "identity_error": identity, "cocycle_error": worst })))
    }
}

/// Median sup error of the pathwise solution of `du = −(1−Δ)u dt + σ dW` against the
/// per-mode conditional expectation of the exact solution given the same increments.
pub fn ou_oracle_error(basis: &Arc<SpectralBasis>, grid: TimeGrid, samples: usize, master_seed: u64) -> Result<f64> {
    let n = basis.len();
    let a: Vec<f64> = basis.eigenvalues().iter().map(|l| 1.0 + l).collect();
    let g: Vec<f64> = a.iter().map(|x| 1.0 / x).collect();
    let noise = AdditiveNoise::diagonal(n, &g)?;
    let b = basis.clone();
    let path = move |_t: f64| Ok(OperatorSnapshot::shifted_laplacian(b.clone(), 1, 1.0, 1.0));
    let zero = |_t: f64| Ok(DVector::zeros(n));
    let u0 = Field::from_coeffs(basis.clone(), 1, DVector::from_element(n, 0.5))?;
    let h = grid.h();
    let mut errs = Vec::with_capacity(samples);
    for s in 0..samples {
        let w = sample_wiener(n, grid, master_seed, s as u64)?;
        let traj = linear_pathwise_mild(&path, &zero, &noise, &w, &u0, &LinearOptions::default())?;
        let mut x = u0.coeffs().clone();
        let mut sup: f64 = (traj.state(0) - &x).norm();
        for j in 0..grid.steps() {
            for m in 0..n {
                let z = a[m] * h;
                x[m] = (-z).exp() * x[m] + (-z).exp_m1() / -z * g[m] * w.increment(j, m);
            }
            sup = sup.max((traj.state(j + 1) - &x).norm());
        }
        errs.push(sup);
    }
    Ok(median(&errs))
}

pub struct OuOracle;

impl Named for OuOracle {
    fn name(&self) -> &'static str {
        "ou-oracle"
    }
}

impl Audit for OuOracle {
    fn enabled(&self, cfg: &VerifyConfig) -> bool {
        cfg.ou_oracle
    }

    fn run(&self, ctx: &VerifyContext) -> Result<(bool, Value)> {
        let b = build_basis(Domain::interval(std::f64::consts::PI), BoundaryCondition::Dirichlet, 16)?;
        let fine = TimeGrid::with_horizon(1.0, 5e-4)?;
        let coarse = TimeGrid::with_horizon(1.0, 1e-3)?;
        let seed = ctx.prepared.config.ensemble.master_seed;
        let e_h = ou_oracle_error(&b, coarse, 20, seed)?;
        let e_h2 = ou_oracle_error(&b, fine, 20, seed)?;
        let ratio = e_h2 / e_h;
        Ok((
            e_h < 5e-3 && (0.35..=0.65).contains(&ratio),
            json!({ "median_error_h": e_h, "median_error_half_h": e_h2, "ratio": ratio }),
        ))
    }
}

/// `A(t) = R(ωt) diag(d₁, d₂) R(ωt)ᵀ` on a two-mode basis.
pub fn rotating_generator(basis: Arc<SpectralBasis>, omega: f64, d: [f64; 2]) -> impl Fn(f64) -> Result<OperatorSnapshot> + Sync {
    move |t: f64| {
        let (s, c) = (omega * t).sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let m = &r * DMatrix::from_diagonal(&DVector::from_column_slice(&d)) * r.transpose();
        OperatorSnapshot::new(basis.clone(), 1, m)
    }
}

pub struct IbpAudit;

impl Named for IbpAudit {
    fn name(&self) -> &'static str {
        "ibp"
    }
}

impl Audit for IbpAudit {
    fn enabled(&self, cfg: &VerifyConfig) -> bool {
        cfg.ibp_audit
    }

    fn run(&self, ctx: &VerifyContext) -> Result<(bool, Value)> {
        let b = build_basis(Domain::interval(std::f64::consts::PI), BoundaryCondition::Dirichlet, 2)?;
        let path = rotating_generator(b, 2.0 * std::f64::consts::PI, [1.0, 3.0]);
        let grid = TimeGrid::with_horizon(1.0, 1e-4)?;
        let g = AdditiveNoise::diagonal(2, &[0.5, 0.5])?;
        let w = sample_wiener(2, grid, ctx.prepared.config.ensemble.master_seed, 0)?;
        let r = ibp_identity_audit(&path, &g, &w, &DVector::from_column_slice(&[1.0, 0.0]))?;
        Ok((r.strong_residual < 1e-2 && r.em_difference < 5e-2, serde_json::to_value(&r)?))
    }
}

pub fn audits() -> Registry<dyn Audit> {
    let entries: [Arc<dyn Audit>; 6] = [
        Arc::new(SectorAudit),
        Arc::new(SmoothingAudit),
        Arc::new(ModulusFit),
        Arc::new(CocycleCheck),
        Arc::new(OuOracle),
        Arc::new(IbpAudit),
    ];
    entries.into_iter().fold(Registry::new("audit"), |r, e| r.with(e))
}

/// Runs every enabled audit; audit errors count as failures.
pub fn run_verify(prepared: &Prepared) -> Result<VerifyReport> {
    let run_grid = prepared.grid;
    let factor = run_grid.steps().div_ceil(VERIFY_MAX_STEPS).max(1);
    let steps = run_grid.steps() / factor;
    if steps < 4 {
        return Err(Error::Config("verification needs a grid with at least 4 steps".into()));
    }
    let grid = TimeGrid::new(run_grid.t0(), run_grid.h() * factor as f64, steps)?;
    let ctx = VerifyContext { prepared, grid };
    let mut out = Vec::new();
    for a in audits().iter() {
        if !a.enabled(&prepared.config.verify) {
            continue;
        }
        let (passed, details) = match a.run(&ctx) {
            Ok(r) => r,
            Err(e) => (false, json!({ "error": e.to_string() })),
        };
        out.push(AuditResult {
            name: a.name().into(),
            gating: a.gating(),
            passed,
            details,
        });
    }
    Ok(VerifyReport {
        model: prepared.config.model.clone(),
        passed: out.iter().all(|r| r.passed || !r.gating),
        audits: out,
    })
}
