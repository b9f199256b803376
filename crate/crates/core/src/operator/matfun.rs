//! Dense matrix functions: exponentials, `φ₁`, and real powers.
//!
//! Powers go through one of three methods, all registered under a name:
//! `symmetric-eigen` (orthogonal diagonalization), `eigen` (complex Schur plus
//! triangular eigenvectors, rejected when the eigenvector matrix is badly
//! conditioned) and `schur` (inverse scaling and squaring on the triangular
//! factor, robust for defective matrices). `auto` picks among them.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

type C64 = Complex<f64>;

/// Eigenvalues closer than this to zero make a matrix non-invertible.
pub const INVERTIBILITY_EPS: f64 = 1e-12;
/// `‖e^{-τA}‖` above this is reported as overflow.
pub const EXP_OVERFLOW_LIMIT: f64 = 1e12;
/// Eigenvector matrices with condition number above this are not trusted.
pub const DEFAULT_EIGVEC_COND_LIMIT: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct PowerOutcome {
    pub matrix: DMatrix<f64>,
    pub method: &'static str,
    pub eigvec_cond: Option<f64>,
}

/// A method for evaluating `A^β` and `e^{-τA}`.
pub trait MatrixFunction: Named + Send + Sync {
    fn power_with_info(&self, a: &DMatrix<f64>, beta: f64) -> Result<PowerOutcome>;

    fn power(&self, a: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
        self.power_with_info(a, beta).map(|o| o.matrix)
    }

    /// `e^{-τA}` with the overflow check applied.
    fn exp_neg(&self, a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
        let m = exp_and_phi1(&(a * -tau))?.0;
        check_overflow(&m)?;
        Ok(m)
    }
}

pub fn matrix_functions() -> Registry<dyn MatrixFunction> {
    let reg: Registry<dyn MatrixFunction> = Registry::new("matrix-function method");
    reg.with(Arc::new(Auto::default()))
        .with(Arc::new(SymmetricEigenMethod))
        .with(Arc::new(EigenMethod::default()))
        .with(Arc::new(SchurMethod))
}

#[derive(Debug, Clone, Copy)]
pub struct Auto {
    pub eigvec_cond_limit: f64,
}

impl Default for Auto {
    fn default() -> Self {
        Self {
            eigvec_cond_limit: DEFAULT_EIGVEC_COND_LIMIT,
        }
    }
}

impl Named for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }
}

impl MatrixFunction for Auto {
    fn power_with_info(&self, a: &DMatrix<f64>, beta: f64) -> Result<PowerOutcome> {
        if beta == 0.0 {
            return Ok(identity_outcome(a.nrows(), self.name()));
        }
        if is_symmetric(a) {
            return SymmetricEigenMethod.power_with_info(a, beta);
        }
        let eig = EigenMethod {
            eigvec_cond_limit: self.eigvec_cond_limit,
        };
        match eig.power_with_info(a, beta) {
            Ok(out) => Ok(out),
            Err(Error::Degenerate { .. }) => {
                let mut out = SchurMethod.power_with_info(a, beta)?;
                out.eigvec_cond = eig.last_condition(a);
                Ok(out)
            }
            Err(e) => Err(e),
        }
    }

    fn exp_neg(&self, a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
        if tau == 0.0 {
            return Ok(DMatrix::identity(a.nrows(), a.ncols()));
        }
        let m = if is_diagonal(a) {
            DMatrix::from_diagonal(&a.diagonal().map(|d| (-tau * d).exp()))
        } else if is_symmetric(a) {
            let e = a.clone().symmetric_eigen();
            let d = e.eigenvalues.map(|l| (-tau * l).exp());
            &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
        } else {
            exp_and_phi1(&(a * -tau))?.0
        };
        check_overflow(&m)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SymmetricEigenMethod;

impl Named for SymmetricEigenMethod {
    fn name(&self) -> &'static str {
        "symmetric-eigen"
    }
}

impl MatrixFunction for SymmetricEigenMethod {
    fn power_with_info(&self, a: &DMatrix<f64>, beta: f64) -> Result<PowerOutcome> {
        if beta == 0.0 {
            return Ok(identity_outcome(a.nrows(), self.name()));
        }
        if !is_symmetric(a) {
            return Err(Error::InvalidArgument("symmetric-eigen needs a symmetric matrix".into()));
        }
        if is_diagonal(a) {
            let d = a.diagonal();
            check_spectrum(d.iter().map(|&x| C64::new(x, 0.0)))?;
            return Ok(PowerOutcome {
                matrix: DMatrix::from_diagonal(&d.map(|x| x.powf(beta))),
                method: self.name(),
                eigvec_cond: Some(1.0),
            });
        }
        let e = a.clone().symmetric_eigen();
        check_spectrum(e.eigenvalues.iter().map(|&x| C64::new(x, 0.0)))?;
        let d = e.eigenvalues.map(|x| x.powf(beta));
        Ok(PowerOutcome {
            matrix: &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose(),
            method: self.name(),
            eigvec_cond: Some(1.0),
        })
    }
}

/// Diagonalization through complex Schur and triangular eigenvectors.
#[derive(Debug, Clone, Copy)]
pub struct EigenMethod {
    pub eigvec_cond_limit: f64,
}

impl Default for EigenMethod {
    fn default() -> Self {
        Self {
            eigvec_cond_limit: DEFAULT_EIGVEC_COND_LIMIT,
        }
    }
}

impl Named for EigenMethod {
    fn name(&self) -> &'static str {
        "eigen"
    }
}

impl EigenMethod {
    fn decompose(&self, a: &DMatrix<f64>) -> (DMatrix<C64>, Vec<C64>, f64) {
        let (q, t) = complex_schur(a);
        let n = t.nrows();
        let eig: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
        let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        // Eigenvectors of the upper triangular factor by back substitution.
        let mut y = DMatrix::<C64>::zeros(n, n);
        for k in 0..n {
            y[(k, k)] = C64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = C64::new(0.0, 0.0);
                for j in i + 1..=k {
                    s += t[(i, j)] * y[(j, k)];
                }
                let mut d = t[(i, i)] - t[(k, k)];
                if d.norm() < 1e-14 * scale {
                    d = C64::new(1e-14 * scale, 0.0);
                }
                y[(i, k)] = -s / d;
            }
            let nrm = y.column(k).norm();
            y.column_mut(k).unscale_mut(nrm);
        }
        let v = &q * y;
        let cond = condition_number(&v);
        (v, eig, cond)
    }

    fn last_condition(&self, a: &DMatrix<f64>) -> Option<f64> {
        Some(self.decompose(a).2)
    }
}

impl MatrixFunction for EigenMethod {
    fn power_with_info(&self, a: &DMatrix<f64>, beta: f64) -> Result<PowerOutcome> {
        if beta == 0.0 {
            return Ok(identity_outcome(a.nrows(), self.name()));
        }
        let (v, eig, cond) = self.decompose(a);
        check_spectrum(eig.iter().copied())?;
        if !(cond <= self.eigvec_cond_limit) {
            return Err(Error::Degenerate {
                time: f64::NAN,
                reason: format!("eigenvector condition number {cond:e} exceeds {:e}", self.eigvec_cond_limit),
            });
        }
        let vinv = v.clone().try_inverse().ok_or(Error::Degenerate {
            time: f64::NAN,
            reason: "eigenvector matrix is singular".into(),
        })?;
        let d = DVector::from_iterator(eig.len(), eig.iter().map(|z| z.powf(beta)));
        let m = &v * DMatrix::from_diagonal(&d) * vinv;
        Ok(PowerOutcome {
            matrix: real_part(&m, a)?,
            method: self.name(),
            eigvec_cond: Some(cond),
        })
    }
}

/// Inverse scaling and squaring on the complex Schur factor.
#[derive(Debug, Clone, Copy)]
pub struct SchurMethod;

impl Named for SchurMethod {
    fn name(&self) -> &'static str {
        "schur"
    }
}

impl MatrixFunction for SchurMethod {
    fn power_with_info(&self, a: &DMatrix<f64>, beta: f64) -> Result<PowerOutcome> {
        if beta == 0.0 {
            return Ok(identity_outcome(a.nrows(), self.name()));
        }
        let (q, t) = complex_schur(a);
        check_spectrum((0..t.nrows()).map(|i| t[(i, i)]))?;
        let tp = triangular_power(&t, beta)?;
        let m = &q * tp * q.adjoint();
        Ok(PowerOutcome {
            matrix: real_part(&m, a)?,
            method: self.name(),
            eigvec_cond: None,
        })
    }
}

fn identity_outcome(n: usize, method: &'static str) -> PowerOutcome {
    PowerOutcome {
        matrix: DMatrix::identity(n, n),
        method,
        eigvec_cond: None,
    }
}

fn complex_schur(a: &DMatrix<f64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let ac = a.map(|x| C64::new(x, 0.0));
    ac.schur().unpack()
}

fn condition_number(v: &DMatrix<C64>) -> f64 {
    let sv = v.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Rejects singular spectra and eigenvalues on the closed negative real axis,
/// where the principal power is undefined.
fn check_spectrum(eig: impl Iterator<Item = C64>) -> Result<()> {
    let mut min_abs = f64::INFINITY;
    let mut bad_branch = None;
    for z in eig {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::NonFinite("eigenvalues"));
        }
        min_abs = min_abs.min(z.norm());
        if z.re < 0.0 && z.im.abs() <= 1e-12 * z.norm() {
            bad_branch = Some(z);
        }
    }
    if min_abs < INVERTIBILITY_EPS {
        return Err(Error::NotInvertible {
            min_abs_eigenvalue: min_abs,
        });
    }
    if let Some(z) = bad_branch {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue {} lies on the negative real axis; shift the operator first",
            z.re
        )));
    }
    Ok(())
}

fn real_part(m: &DMatrix<C64>, reference: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let re = m.map(|z| z.re);
    let im = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = re.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if im > 1e-6 * scale && reference.iter().all(|x| x.is_finite()) {
        return Err(Error::Degenerate {
            time: f64::NAN,
            reason: format!("matrix power has imaginary residue {im:e}"),
        });
    }
    if re.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix power"));
    }
    Ok(re)
}

fn one_norm_c(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Principal square root of an upper triangular matrix.
fn triangular_sqrt(t: &DMatrix<C64>) -> DMatrix<C64> {
    let n = t.nrows();
    let mut r = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = t[(j, j)].sqrt();
        for i in (0..j).rev() {
            let mut s = C64::new(0.0, 0.0);
            for k in i + 1..j {
                s += r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = (t[(i, j)] - s) / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// `T^p` for upper triangular `T` with spectrum off the negative real axis.
fn triangular_power(t: &DMatrix<C64>, p: f64) -> Result<DMatrix<C64>> {
    let n = t.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let mut r = t.clone();
    let mut s = 0u32;
    while one_norm_c(&(&r - &id)) > 0.25 {
        r = triangular_sqrt(&r);
        s += 1;
        if s > 64 {
            return Err(Error::Degenerate {
                time: f64::NAN,
                reason: "square-root iteration did not approach the identity".into(),
            });
        }
    }
    // R = T^{1/2^s} and R^p = (I - X)^p = Σ_k binom(p, k) (-X)^k.
    let q = p;
    let x = &id - &r;
    let mut sum = id.clone();
    let mut term = id;
    for k in 1..400 {
        let c = (k as f64 - 1.0 - q) / k as f64;
        term = (&term * &x) * C64::new(c, 0.0);
        sum += &term;
        if one_norm_c(&term) <= 1e-18 * one_norm_c(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    Ok(sum)
}

pub fn is_diagonal(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    for j in 0..a.ncols() {
        for i in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Symmetric to relative tolerance `1e-13`.
pub fn is_symmetric(a: &DMatrix<f64>) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-13 * scale {
                return false;
            }
        }
    }
    true
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    if is_diagonal(a) {
        return a.diagonal().iter().map(|&x| C64::new(x, 0.0)).collect();
    }
    if is_symmetric(a) {
        return a.clone().symmetric_eigenvalues().iter().map(|&x| C64::new(x, 0.0)).collect();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if is_diagonal(a) {
        let d = a.diagonal();
        let min = d.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        if min < INVERTIBILITY_EPS {
            return Err(Error::NotInvertible { min_abs_eigenvalue: min });
        }
        return Ok(DMatrix::from_diagonal(&d.map(|x| 1.0 / x)));
    }
    let lu = a.clone().lu();
    match lu.try_inverse() {
        Some(m) if m.iter().all(|x| x.is_finite()) => Ok(m),
        _ => Err(Error::NotInvertible {
            min_abs_eigenvalue: eigenvalues(a).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min),
        }),
    }
}

pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if is_diagonal(m) {
        return m.diagonal().iter().map(|x| x.abs()).fold(0.0, f64::max);
    }
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

fn check_overflow(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow {
            norm: f64::INFINITY,
            limit: EXP_OVERFLOW_LIMIT,
        });
    }
    let norm = one_norm(m);
    if norm > EXP_OVERFLOW_LIMIT {
        return Err(Error::Overflow {
            norm,
            limit: EXP_OVERFLOW_LIMIT,
        });
    }
    Ok(())
}

/// Scalar `φ₁(x) = (e^x − 1)/x`, with `φ₁(0) = 1`.
pub fn phi1_scalar(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// `(e^M, φ₁(M))` where `φ₁(M) = Σ M^k/(k+1)!`.
///
/// Diagonal and symmetric inputs use their spectra. Everything else goes
/// through a Taylor sum at `‖M/2^s‖ ≤ 1/2` followed by the doublings
/// `e^{2X} = (e^X)²` and `φ₁(2X) = ½ φ₁(X)(e^X + I)`.
pub fn exp_and_phi1(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix exponential argument"));
    }
    if is_diagonal(m) {
        let d = m.diagonal();
        return Ok((
            DMatrix::from_diagonal(&d.map(f64::exp)),
            DMatrix::from_diagonal(&d.map(phi1_scalar)),
        ));
    }
    if is_symmetric(m) {
        let e = m.clone().symmetric_eigen();
        let v = &e.eigenvectors;
        let ex = v * DMatrix::from_diagonal(&e.eigenvalues.map(f64::exp)) * v.transpose();
        let ph = v * DMatrix::from_diagonal(&e.eigenvalues.map(phi1_scalar)) * v.transpose();
        return Ok((ex, ph));
    }
    let norm = one_norm(m);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = m / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    // Horner for φ₁(X) = I + X/2 (I + X/3 (I + ... )).
    const DEG: usize = 16;
    let mut phi = id.clone();
    for k in (2..=DEG + 1).rev() {
        phi = &id + (&x * &phi) / k as f64;
    }
    let mut e = &id + &x * &phi;
    for _ in 0..s {
        phi = (&phi * (&e + &id)) * 0.5;
        e = &e * &e;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                norm: f64::INFINITY,
                limit: EXP_OVERFLOW_LIMIT,
            });
        }
    }
    Ok((e, phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.abs().max()
    }

    #[test]
    fn registry_names() {
        let r = matrix_functions();
        assert_eq!(r.names(), vec!["auto", "eigen", "schur", "symmetric-eigen"]);
    }

    #[test]
    fn nilpotent_exp_and_phi() {
        // M = [[0, 1], [0, 0]]: e^M = I + M, φ₁(M) = I + M/2.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let (e, p) = exp_and_phi1(&m).unwrap();
        assert!(max_abs(&(e - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]))) < 1e-15);
        assert!(max_abs(&(p - DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]))) < 1e-15);
    }

    #[test]
    fn jordan_block_exp_closed_form() {
        // exp of [[-a, b], [0, -a]] is e^{-a}[[1, b], [0, 1]].
        let (a, b) = (7.5, 3.0);
        let m = DMatrix::from_row_slice(2, 2, &[-a, b, 0.0, -a]);
        let (e, p) = exp_and_phi1(&m).unwrap();
        let ea = (-a).exp();
        assert!((e[(0, 0)] - ea).abs() < 1e-14);
        assert!((e[(0, 1)] - b * ea).abs() < 1e-14);
        // φ₁ by its defining identity M φ₁(M) = e^M − I.
        let resid = &m * &p - (&e - DMatrix::identity(2, 2));
        assert!(max_abs(&resid) < 1e-13);
    }

    #[test]
    fn rotation_exp() {
        let th = 2.3;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        let (e, _) = exp_and_phi1(&m).unwrap();
        assert!((e[(0, 0)] - th.cos()).abs() < 1e-14);
        assert!((e[(1, 0)] - th.sin()).abs() < 1e-14);
    }

    #[test]
    fn general_power_agrees_between_methods() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, -0.3, 3.0, 0.2, 0.1, 0.4, 2.0]);
        let e = EigenMethod::default().power(&a, 0.4).unwrap();
        let s = SchurMethod.power(&a, 0.4).unwrap();
        assert!(max_abs(&(&e - &s)) < 1e-11, "{e}{s}");
        // A^{1/2} A^{1/2} = A.
        let h = SchurMethod.power(&a, 0.5).unwrap();
        assert!(max_abs(&(&h * &h - &a)) < 1e-12);
        // A^{-1} agrees with the inverse.
        let inv = Auto::default().power(&a, -1.0).unwrap();
        assert!(max_abs(&(&inv * &a - DMatrix::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn auto_falls_back_on_defective() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0]);
        let out = Auto::default().power_with_info(&a, 0.5).unwrap();
        assert_eq!(out.method, "schur");
        assert!(max_abs(&(&out.matrix * &out.matrix - &a)) < 1e-11);
    }

    #[test]
    fn negative_axis_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        assert!(matches!(
            SymmetricEigenMethod.power(&a, 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn phi1_scalar_limits() {
        assert_eq!(phi1_scalar(0.0), 1.0);
        assert!((phi1_scalar(1.0) - (1f64.exp() - 1.0)).abs() < 1e-15);
        assert!((phi1_scalar(-50.0) - 1.0 / 50.0).abs() < 1e-15);
    }
}
