//! Numerical audits of sectoriality and of time regularity of operator paths.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::matfun::{self, eigenvalues, inverse, spectral_norm};
use super::{fractional_power, OperatorSnapshot};
use crate::error::{Error, Result};
use crate::stats::log_log_fit;

type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Angular offset of the test rays beyond the declared sector.
    pub margin: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Largest resolvent constant accepted as a pass.
    pub m_limit: f64,
    /// When false only the spectrum is checked (cheap per-step monitoring).
    pub check_resolvent: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            margin: 0.05,
            r_min: 1e-2,
            r_max: 1e3,
            m_limit: 1e4,
            check_resolvent: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub phi_declared: f64,
    /// Largest `|arg λ|` over the spectrum.
    pub phi_est: f64,
    /// Worst sampled `‖(λI − A)⁻¹‖ (|λ| + 1)`; NaN when not sampled.
    pub m_est: f64,
    /// The same ratio with the resolvent norm replaced by `1/dist(λ, spectrum)`.
    /// Equals `m_est` for normal operators and bounds it from below otherwise.
    pub m_spectral: f64,
    pub worst_lambda: [f64; 2],
    pub pass_a1: bool,
    pub pass_a2: bool,
    /// Eigenvalue furthest from the sector when the spectral check fails.
    pub offending_eigenvalue: Option<[f64; 2]>,
}

impl SectorReport {
    pub fn passed(&self) -> bool {
        self.pass_a1 && self.pass_a2
    }
}

/// Spectrum-in-sector and resolvent checks with default options.
pub fn audit_sectoriality(a: &OperatorSnapshot, phi: f64, ray_samples: usize) -> SectorReport {
    audit_sectoriality_with(a, phi, ray_samples, &AuditOptions::default())
}

pub fn audit_sectoriality_with(
    a: &OperatorSnapshot,
    phi: f64,
    ray_samples: usize,
    opts: &AuditOptions,
) -> SectorReport {
    let m = a.matrix();
    let eig = eigenvalues(m);
    let finite = eig.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let phi_ok = phi > 0.0 && phi < PI / 2.0;

    let mut phi_est: f64 = 0.0;
    let mut worst: Option<C64> = None;
    let mut worst_arg = -1.0;
    for z in &eig {
        let arg = if z.norm() < matfun::INVERTIBILITY_EPS { PI } else { z.arg().abs() };
        phi_est = phi_est.max(arg);
        if arg > worst_arg {
            worst_arg = arg;
            worst = Some(*z);
        }
    }
    let pass_a1 = finite && phi_ok && phi_est < phi;

    let mut m_est = f64::NAN;
    let mut m_spectral: f64 = 0.0;
    let mut worst_lambda = [f64::NAN, f64::NAN];
    let mut pass_a2 = false;
    if finite && phi_ok && ray_samples > 0 {
        let normal = matfun::is_symmetric(m);
        let mc = m.map(|x| C64::new(x, 0.0));
        let n = m.nrows();
        let mut worst_ratio: f64 = 0.0;
        let theta = (phi + opts.margin).min(PI);
        for lam in sample_points(theta, ray_samples, opts.r_min, opts.r_max) {
            let dist = eig.iter().map(|z| (lam - z).norm()).fold(f64::INFINITY, f64::min);
            let geom = (lam.norm() + 1.0) / dist;
            m_spectral = m_spectral.max(geom);
            if !opts.check_resolvent {
                continue;
            }
            let ratio = if normal {
                geom
            } else {
                let shifted = DMatrix::<C64>::from_diagonal_element(n, n, lam) - &mc;
                let smin = shifted.singular_values().iter().copied().fold(f64::INFINITY, f64::min);
                (lam.norm() + 1.0) / smin
            };
            if !(ratio <= worst_ratio) {
                worst_ratio = ratio;
                worst_lambda = [lam.re, lam.im];
            }
        }
        if opts.check_resolvent {
            m_est = worst_ratio;
            pass_a2 = m_est.is_finite() && m_est <= opts.m_limit;
        } else {
            pass_a2 = true;
        }
    }

    SectorReport {
        eigenvalues: eig.iter().map(|z| [z.re, z.im]).collect(),
        phi_declared: phi,
        phi_est,
        m_est,
        m_spectral,
        worst_lambda,
        pass_a1,
        pass_a2,
        offending_eigenvalue: if pass_a1 { None } else { worst.map(|z| [z.re, z.im]) },
    }
}

/// Points on the rays `arg λ = ±θ` and on the negative real axis.
fn sample_points(theta: f64, count: usize, r_min: f64, r_max: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(3 * count);
    for i in 0..count {
        let r = if count == 1 {
            r_min
        } else {
            r_min * (r_max / r_min).powf(i as f64 / (count - 1) as f64)
        };
        out.push(C64::from_polar(r, theta));
        out.push(C64::from_polar(r, -theta));
        out.push(C64::new(-r, 0.0));
    }
    out
}

/// Hölder modulus with exponents satisfying `ν + δ > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderModulus {
    nu: f64,
    delta: f64,
    l_est: f64,
}

impl HolderModulus {
    pub fn new(nu: f64, delta: f64, l_est: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) || !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidExponents(format!(
                "ν and δ must lie in (0, 1], got ν = {nu}, δ = {delta}"
            )));
        }
        if nu + delta <= 1.0 {
            return Err(Error::InvalidExponents(format!(
                "ν + δ must exceed 1, got ν = {nu}, δ = {delta}"
            )));
        }
        if !(l_est >= 0.0) {
            return Err(Error::InvalidArgument(format!("Hölder constant must be ≥ 0, got {l_est}")));
        }
        Ok(Self { nu, delta, l_est })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn l_est(&self) -> f64 {
        self.l_est
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusEstimate {
    /// The path does not move; `L = 0` and `δ` is undefined.
    Constant { nu: f64 },
    Fitted {
        nu: f64,
        delta_est: f64,
        l_est: f64,
        r_squared: f64,
        /// Present when the fitted exponents satisfy the modulus constraints.
        modulus: Option<HolderModulus>,
    },
    /// Fewer than two distinct positive samples.
    Insufficient { nu: f64 },
}

impl ModulusEstimate {
    pub fn delta(&self) -> Option<f64> {
        match self {
            ModulusEstimate::Fitted { delta_est, .. } => Some(*delta_est),
            _ => None,
        }
    }
}

/// Fits `‖A^ν(t)(A(t)⁻¹ − A(s)⁻¹)‖ ≈ L |t − s|^δ` over pairs of grid times.
/// At most 32 times are used, evenly subsampled.
pub fn estimate_at_modulus(
    path: &dyn Fn(f64) -> Result<OperatorSnapshot>,
    nu: f64,
    grid: &[f64],
) -> Result<ModulusEstimate> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidExponents(format!("ν must lie in (0, 1], got {nu}")));
    }
    let times = subsample(grid, 32);
    let mut pow = Vec::with_capacity(times.len());
    let mut inv = Vec::with_capacity(times.len());
    for &t in &times {
        let a = path(t)?;
        inv.push(inverse(a.matrix())?);
        pow.push(fractional_power(&a, nu)?.into_matrix());
    }
    let mut gaps = Vec::new();
    let mut vals = Vec::new();
    let mut max_val: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..times.len() {
        scale = scale.max(spectral_norm(&(&pow[i] * &inv[i])));
        for j in 0..times.len() {
            if i == j {
                continue;
            }
            let v = spectral_norm(&(&pow[i] * (&inv[i] - &inv[j])));
            max_val = max_val.max(v);
            gaps.push((times[i] - times[j]).abs());
            vals.push(v);
        }
    }
    if max_val <= 1e-13 * scale.max(1.0) {
        return Ok(ModulusEstimate::Constant { nu });
    }
    let Some(fit) = log_log_fit(&gaps, &vals) else {
        return Ok(ModulusEstimate::Insufficient { nu });
    };
    let delta_est = fit.slope;
    let l_est = fit.intercept.exp();
    let modulus = HolderModulus::new(nu, delta_est.min(1.0), l_est).ok();
    Ok(ModulusEstimate::Fitted {
        nu,
        delta_est,
        l_est,
        r_squared: fit.r_squared,
        modulus,
    })
}

fn subsample(grid: &[f64], max: usize) -> Vec<f64> {
    if grid.len() <= max {
        return grid.to_vec();
    }
    (0..max)
        .map(|i| grid[i * (grid.len() - 1) / (max - 1)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, BoundaryCondition, Domain};
    use nalgebra::DVector;

    fn snapshot(diag: &[f64]) -> OperatorSnapshot {
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, diag.len()).unwrap();
        OperatorSnapshot::diagonal(b, 1, diag).unwrap()
    }

    #[test]
    fn positive_diagonal_passes() {
        let d: Vec<f64> = (1..=6).map(|k| k as f64).collect();
        let r = audit_sectoriality(&snapshot(&d), PI / 4.0, 12);
        assert!(r.pass_a1 && r.pass_a2);
        assert!(r.m_est >= 1.0);
        assert_eq!(r.phi_est, 0.0);
    }

    #[test]
    fn negative_spectrum_fails_a1() {
        let r = audit_sectoriality(&snapshot(&[-1.0]), PI / 4.0, 12);
        assert!(!r.pass_a1);
        assert_eq!(r.offending_eigenvalue, Some([-1.0, 0.0]));
    }

    #[test]
    fn declared_angle_out_of_range_fails() {
        let r = audit_sectoriality(&snapshot(&[1.0]), 2.0, 12);
        assert!(!r.pass_a1);
    }

    #[test]
    fn non_normal_resolvent_exceeds_spectral_bound() {
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, 2).unwrap();
        let a = OperatorSnapshot::new(b, 1, DMatrix::from_row_slice(2, 2, &[1.0, 50.0, 0.0, 1.0])).unwrap();
        let r = audit_sectoriality(&a, PI / 4.0, 16);
        assert!(r.pass_a1);
        assert!(r.m_est > 2.0 * r.m_spectral);
    }

    #[test]
    fn constant_path_reports_constant() {
        let a = snapshot(&[1.0, 2.0, 3.0]);
        let grid: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let est = estimate_at_modulus(&|_| Ok(a.clone()), 0.5, &grid).unwrap();
        assert_eq!(est, ModulusEstimate::Constant { nu: 0.5 });
    }

    #[test]
    fn linear_scaling_path_is_lipschitz() {
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, 8).unwrap();
        let base: Vec<f64> = b.eigenvalues().iter().map(|l| 1.0 + l).collect();
        let path = |t: f64| {
            let d = DVector::from_iterator(8, base.iter().map(|v| (1.0 + t) * v));
            OperatorSnapshot::new(b.clone(), 1, DMatrix::from_diagonal(&d))
        };
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let est = estimate_at_modulus(&path, 0.5, &grid).unwrap();
        let d = est.delta().unwrap();
        assert!((d - 1.0).abs() < 0.1, "delta {d}");
    }

    #[test]
    fn modulus_constraint_enforced() {
        assert!(HolderModulus::new(0.5, 0.6, 1.0).is_ok());
        let err = HolderModulus::new(0.3, 0.5, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidExponents(_)));
        assert!(err.to_string().contains("must exceed 1"));
    }
}
