//! Discretized sectorial operators acting on spectral coefficients.
//!
//! An [`OperatorSnapshot`] stores the *positive* sectorial operator `A`, the
//! one whose semigroup `e^{-τA}` decays for parabolic problems. The PDE drift
//! is `-A`. Helpers that take a drift matrix negate it on the way in.

mod audit;
pub mod matfun;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectral::{Field, SpectralBasis};

pub use audit::{
    audit_sectoriality, audit_sectoriality_with, estimate_at_modulus, AuditOptions, HolderModulus,
    ModulusEstimate, SectorReport,
};
pub use matfun::{
    matrix_functions, MatrixFunction, PowerOutcome, DEFAULT_EIGVEC_COND_LIMIT, EXP_OVERFLOW_LIMIT,
    INVERTIBILITY_EPS,
};

#[derive(Debug, Clone)]
pub struct OperatorSnapshot {
    basis: Arc<SpectralBasis>,
    components: usize,
    matrix: DMatrix<f64>,
}

impl OperatorSnapshot {
    /// Wraps a matrix already in the positive-sectorial convention.
    pub fn new(basis: Arc<SpectralBasis>, components: usize, matrix: DMatrix<f64>) -> Result<Self> {
        let dim = basis.len() * components;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::InvalidArgument(format!(
                "operator must be {dim}x{dim}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator snapshot"));
        }
        Ok(Self {
            basis,
            components,
            matrix,
        })
    }

    /// Builds the snapshot for the drift `du = D u dt`, i.e. stores `-D`.
    pub fn from_drift(basis: Arc<SpectralBasis>, components: usize, drift: DMatrix<f64>) -> Result<Self> {
        Self::new(basis, components, -drift)
    }

    pub fn identity(basis: Arc<SpectralBasis>, components: usize) -> Self {
        let dim = basis.len() * components;
        Self {
            basis,
            components,
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn diagonal(basis: Arc<SpectralBasis>, components: usize, diag: &[f64]) -> Result<Self> {
        Self::new(basis, components, DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `scale · (shift·I − Δ)` on every component.
    pub fn shifted_laplacian(basis: Arc<SpectralBasis>, components: usize, shift: f64, scale: f64) -> Self {
        let n = basis.len();
        let diag = DVector::from_fn(n * components, |i, _| scale * (shift + basis.eigenvalues()[i % n]));
        Self {
            basis,
            components,
            matrix: DMatrix::from_diagonal(&diag),
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Same basis and block layout, different matrix.
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(self.basis.clone(), self.components, matrix)
    }

    /// `(row block, column block)` of size `N × N`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.basis.len();
        self.matrix.view((i * n, j * n), (n, n)).into_owned()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    pub fn apply_field(&self, f: &Field) -> Result<Field> {
        Field::from_coeffs(self.basis.clone(), self.components, self.apply(f.coeffs()))
    }

    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self {
            basis: self.basis.clone(),
            components: self.components,
            matrix: m,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            components: self.components,
            matrix: &self.matrix * c,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matfun::is_diagonal(&self.matrix)
    }

    pub fn is_symmetric(&self) -> bool {
        matfun::is_symmetric(&self.matrix)
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = matfun::inverse(&self.matrix)?;
        self.with_matrix(inv)
    }

    /// Smallest real part of the spectrum.
    pub fn min_real_eigenvalue(&self) -> f64 {
        matfun::eigenvalues(&self.matrix)
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `A^β` for `β ∈ [-1, 1]`, picking the method automatically.
pub fn fractional_power(a: &OperatorSnapshot, beta: f64) -> Result<OperatorSnapshot> {
    fractional_power_with_info(a, beta).map(|o| o.0)
}

/// Like [`fractional_power`], also reporting which method ran and the
/// eigenvector conditioning seen on the way.
pub fn fractional_power_with_info(a: &OperatorSnapshot, beta: f64) -> Result<(OperatorSnapshot, PowerOutcome)> {
    if !(-1.0..=1.0).contains(&beta) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("power exponent must lie in [-1, 1], got {beta}")));
    }
    let out = matfun::Auto::default().power_with_info(a.matrix(), beta)?;
    Ok((a.with_matrix(out.matrix.clone())?, out))
}

/// Shifts by `+I` when the spectrum comes closer than `0.5` to the origin
/// (Neumann-type operators), then takes the power.
pub fn shifted_fractional_power(a: &OperatorSnapshot, beta: f64) -> Result<OperatorSnapshot> {
    if a.min_real_eigenvalue() < 0.5 {
        fractional_power(&a.shifted(1.0), beta)
    } else {
        fractional_power(a, beta)
    }
}

/// `e^{-τA}`.
pub fn operator_exp(a: &OperatorSnapshot, tau: f64) -> Result<OperatorSnapshot> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("exponential time must be ≥ 0, got {tau}")));
    }
    let m = matfun::Auto::default().exp_neg(a.matrix(), tau)?;
    a.with_matrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, BoundaryCondition, Domain};
    use std::f64::consts::PI;

    fn basis(n: usize) -> Arc<SpectralBasis> {
        build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, n).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.abs().max()
    }

    #[test]
    fn diagonal_power() {
        let a = OperatorSnapshot::diagonal(basis(2), 1, &[1.0, 4.0]).unwrap();
        let p = fractional_power(&a, 0.5).unwrap();
        assert!(max_abs(&(p.matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])))) < 1e-14);
    }

    #[test]
    fn zero_power_is_identity() {
        let a = OperatorSnapshot::new(
            basis(2),
            1,
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -1.0, 2.0]),
        )
        .unwrap();
        let p = fractional_power(&a, 0.0).unwrap();
        assert_eq!(p.matrix(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn defective_square_root() {
        // Verified by squaring: [[√2, 1/(2√2)], [0, √2]]² = [[2, 1], [0, 2]].
        let a = OperatorSnapshot::new(basis(2), 1, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0])).unwrap();
        let (p, info) = fractional_power_with_info(&a, 0.5).unwrap();
        let s2 = 2f64.sqrt();
        let expect = DMatrix::from_row_slice(2, 2, &[s2, 1.0 / (2.0 * s2), 0.0, s2]);
        assert!(max_abs(&(p.matrix() - &expect)) < 1e-12, "{}", p.matrix());
        assert!(max_abs(&(p.matrix() * p.matrix() - a.matrix())) < 1e-12);
        assert_eq!(info.method, "schur");
    }

    #[test]
    fn power_rejects_singular_and_out_of_range() {
        let a = OperatorSnapshot::diagonal(basis(2), 1, &[0.0, 1.0]).unwrap();
        assert!(matches!(fractional_power(&a, 0.5), Err(Error::NotInvertible { .. })));
        let b = OperatorSnapshot::diagonal(basis(2), 1, &[1.0, 1.0]).unwrap();
        assert!(fractional_power(&b, 1.5).is_err());
    }

    #[test]
    fn exp_examples() {
        let a = OperatorSnapshot::diagonal(basis(2), 1, &[1.0, 4.0]).unwrap();
        let e = operator_exp(&a, 1.0).unwrap();
        assert!((e.matrix()[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e.matrix()[(1, 1)] - (-4f64).exp()).abs() < 1e-15);
        let e0 = operator_exp(&a, 0.0).unwrap();
        assert_eq!(e0.matrix(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn exp_overflow_signalled() {
        let a = OperatorSnapshot::diagonal(basis(2), 1, &[-40.0, 1.0]).unwrap();
        assert!(matches!(operator_exp(&a, 1.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn snapshot_shape_checked() {
        assert!(OperatorSnapshot::new(basis(3), 1, DMatrix::identity(2, 2)).is_err());
        let m = DMatrix::from_element(3, 3, f64::NAN);
        assert!(OperatorSnapshot::new(basis(3), 1, m).is_err());
    }

    #[test]
    fn smoothing_slope_of_semigroup() {
        // ‖A^{1/2} e^{-τA}‖ ~ C τ^{-1/2} for A = I - Δ.
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, 200).unwrap();
        let a = OperatorSnapshot::shifted_laplacian(b, 1, 1.0, 1.0);
        let half = fractional_power(&a, 0.5).unwrap();
        let taus: Vec<f64> = (0..10).map(|i| 1e-4 * 10f64.powf(3.0 * i as f64 / 9.0)).collect();
        let norms: Vec<f64> = taus
            .iter()
            .map(|&t| {
                let e = operator_exp(&a, t).unwrap();
                (half.matrix() * e.matrix()).diagonal().abs().max()
            })
            .collect();
        let fit = crate::stats::log_log_fit(&taus, &norms).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.05, "slope {}", fit.slope);
    }

    #[test]
    fn shifted_power_handles_neumann_zero_mode() {
        let b = build_basis(Domain::interval(PI), BoundaryCondition::Neumann, 4).unwrap();
        let a = OperatorSnapshot::shifted_laplacian(b, 1, 0.0, 1.0);
        assert!(fractional_power(&a, 0.5).is_err());
        let p = shifted_fractional_power(&a, 0.5).unwrap();
        assert!((p.matrix()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((p.matrix()[(1, 1)] - 2f64.sqrt()).abs() < 1e-14);
    }
}
