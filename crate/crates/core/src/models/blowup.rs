//! Blow-up and ill-posedness examples on a Dirichlet interval.
//!
//! The coupled system is `dU = (A U + F(U))dt + σ(u)dW` with
//! `A = [[1, 1/2], [0, 1]]Δ` and `v(0) = φ`, so that `v(t) = e^{kt}φ`. Three
//! variants are provided:
//!
//! * quadratic: `F = (u² + λ₁v/2, (λ₁+k)v)`, reduced to `du = (Δu + u²)dt + σ dW`;
//! * sign change: `F = (u(2λ₁ − u), (λ₁+k)v)`, reduced to
//!   `du = (Δu − (λ₁/2)e^{kt}φ + 2λ₁u − u²)dt + σ dW`;
//! * degenerate: the sign-change system plus `dw = uΔw dt`, whose operator
//!   `−uΔ` stops being sectorial once `u` turns negative.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ProblemTemplate;
use crate::operator::OperatorSnapshot;
use crate::solver::{ConstantGenerator, Dependence, DriftMap, FnGenerator, GeneratorMap, LocalConstants, ProblemSpec, Trajectory};
use crate::spectral::{build_basis, BoundaryCondition, Domain, Field, SpectralBasis};
use crate::stochastic::{TanhNoise, ZeroNoise};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupExample {
    Quadratic,
    SignChange,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupParams {
    /// Target `⟨u₀, φ⟩`; `u₀ = sφ` with `s = y₀ / ∫φ²`.
    pub y0: f64,
    /// Growth rate of `v = e^{kt}φ`.
    pub k: f64,
    /// Amplitude of `σ(u)e_m = σ₀ tanh(û_m) e_m`.
    pub sigma0: f64,
    /// Number of lowest `u`-modes driven by noise.
    pub noise_modes: usize,
    /// Solve the full coupled system instead of substituting `v`.
    pub coupled: bool,
    pub length: f64,
}

impl Default for BlowupParams {
    fn default() -> Self {
        Self {
            y0: 2.0,
            k: 2.0,
            sigma0: 0.0,
            noise_modes: 4,
            coupled: false,
            length: std::f64::consts::PI,
        }
    }
}

impl BlowupParams {
    pub fn validate(&self, example: BlowupExample, lambda1: f64) -> Result<()> {
        if !(self.y0 >= 0.0 && self.y0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "y0 must be nonnegative so that u₀ ≥ 0, got {}",
                self.y0
            )));
        }
        if example != BlowupExample::Quadratic && !(self.k > lambda1) {
            return Err(Error::InvalidArgument(format!(
                "k must exceed the first eigenvalue λ₁ = {lambda1}, got k = {}",
                self.k
            )));
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma0 must be nonnegative, got {}", self.sigma0)));
        }
        if self.noise_modes == 0 {
            return Err(Error::InvalidArgument("noise_modes must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn blowup_basis(params: &BlowupParams, n: usize) -> Result<Arc<SpectralBasis>> {
    build_basis(Domain::interval(params.length), BoundaryCondition::Dirichlet, n)
}

/// `sφ` with `⟨sφ, φ⟩ = y₀`.
pub fn ground_state_initial(basis: &Arc<SpectralBasis>, y0: f64) -> Result<Field> {
    let phi = basis.phi_coefficients()?;
    let s = y0 / basis.phi_l2_squared()?;
    Field::from_coeffs(basis.clone(), 1, phi * s)
}

/// `⟨u_c(t_j), φ⟩` along a trajectory.
pub fn y_series(traj: &Trajectory, component: usize) -> Result<Vec<f64>> {
    let phi0 = traj.basis().phi_coefficients()?[0];
    let n = traj.basis().len();
    Ok(traj.states().iter().map(|s| s[component * n] * phi0).collect())
}

/// `(u²)` projected, for a single component block.
fn square(basis: &SpectralBasis, u: &DVector<f64>) -> DVector<f64> {
    let nodal = basis.to_nodes(u.as_slice());
    basis.project(&nodal.map(|x| x * x))
}

/// Galerkin matrix of `−uΔ`: `G[j,k] = λ_k ∫ u e_j e_k`.
pub fn multiplier_laplacian(basis: &SpectralBasis, u: &[f64]) -> DMatrix<f64> {
    let q = basis.quadrature();
    let un = basis.to_nodes(u);
    let mut weighted = q.eval.clone();
    for i in 0..q.len() {
        weighted.row_mut(i).scale_mut(q.weights[i] * un[i]);
    }
    let mut g = q.eval.transpose() * weighted;
    for (k, lam) in basis.eigenvalues().iter().enumerate() {
        g.column_mut(k).scale_mut(*lam);
    }
    g
}

struct BlowupDrift {
    example: BlowupExample,
    basis: Arc<SpectralBasis>,
    components: usize,
    lambda1: f64,
    k: f64,
    phi: DVector<f64>,
}

impl DriftMap for BlowupDrift {
    fn eval(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.basis.len();
        let u = x.rows(0, n).into_owned();
        let u2 = square(&self.basis, &u);
        let mut out = DVector::zeros(x.len());
        let fu = match (self.example, self.components) {
            (BlowupExample::Quadratic, 1) => u2,
            (BlowupExample::Quadratic, _) => u2 + x.rows(n, n) * (0.5 * self.lambda1),
            (_, 1) => &u * (2.0 * self.lambda1) - u2 - &self.phi * (0.5 * self.lambda1 * (self.k * t).exp()),
            (_, _) => &u * (2.0 * self.lambda1) - u2,
        };
        out.rows_mut(0, n).copy_from(&fu);
        if self.components > 1 {
            let fv = x.rows(n, n) * (self.lambda1 + self.k);
            out.rows_mut(n, n).copy_from(&fv);
        }
        Ok(out)
    }

    fn constants(&self, n: f64) -> LocalConstants {
        LocalConstants {
            lipschitz: 2.0 * self.lambda1 + self.k + 2.0 * n,
            growth: 2.0 * self.lambda1 + self.k + n,
        }
    }
}

fn coupled_block(basis: &SpectralBasis) -> DMatrix<f64> {
    let n = basis.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (k, lam) in basis.eigenvalues().iter().enumerate() {
        m[(k, k)] = *lam;
        m[(k, n + k)] = 0.5 * lam;
        m[(n + k, n + k)] = *lam;
    }
    m
}

/// Wires one of the examples into a [`ProblemSpec`].
pub fn build_blowup_spec(
    example: BlowupExample,
    params: &BlowupParams,
    basis: &Arc<SpectralBasis>,
    template: ProblemTemplate,
) -> Result<ProblemSpec> {
    if basis.bc() != BoundaryCondition::Dirichlet {
        return Err(Error::InvalidArgument("the blow-up examples use a Dirichlet basis".into()));
    }
    let lambda1 = basis.lambda_min();
    params.validate(example, lambda1)?;
    let n = basis.len();
    let components = match example {
        BlowupExample::Degenerate => 3,
        _ if params.coupled => 2,
        _ => 1,
    };
    let phi = basis.phi_coefficients()?;
    let u0 = ground_state_initial(basis, params.y0)?;
    let mut init = DVector::zeros(n * components);
    init.rows_mut(0, n).copy_from(u0.coeffs());
    for c in 1..components {
        init.rows_mut(c * n, n).copy_from(&phi);
    }
    let generator: Arc<dyn GeneratorMap> = match components {
        1 => Arc::new(ConstantGenerator(OperatorSnapshot::diagonal(basis.clone(), 1, basis.eigenvalues())?)),
        2 => Arc::new(ConstantGenerator(OperatorSnapshot::new(basis.clone(), 2, coupled_block(basis))?)),
        _ => {
            let b = basis.clone();
            let uv = coupled_block(basis);
            Arc::new(FnGenerator::new(Dependence::Full, move |_t, x| {
                let mut m = DMatrix::zeros(3 * n, 3 * n);
                m.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&uv);
                let g = multiplier_laplacian(&b, &x.as_slice()[..n]);
                m.view_mut((2 * n, 2 * n), (n, n)).copy_from(&g);
                OperatorSnapshot::new(b.clone(), 3, m)
            }))
        }
    };
    let dim = n * components;
    let noise: Arc<dyn crate::stochastic::NoiseOperator> = if params.sigma0 > 0.0 {
        Arc::new(TanhNoise::new(dim, params.sigma0, vec![1.0; params.noise_modes.min(n)])?)
    } else {
        Arc::new(ZeroNoise {
            dim,
            modes: params.noise_modes.min(n),
        })
    };
    let spec = ProblemSpec {
        basis: basis.clone(),
        components,
        generator,
        drift: Arc::new(BlowupDrift {
            example,
            basis: basis.clone(),
            components,
            lambda1,
            k: params.k,
            phi,
        }),
        noise,
        u0: Field::from_coeffs(basis.clone(), components, init)?,
        exponents: template.exponents,
        radii: template.radii,
        delta: template.delta,
        holder_k: template.holder_k,
        horizon: template.horizon,
    };
    spec.validate()?;
    let nodal = basis.to_nodes(&spec.u0.coeffs().as_slice()[..n]);
    if nodal.iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidArgument("initial u must be nonnegative on the quadrature nodes".into()));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn initial_state_hits_target_functional() {
        let b = blowup_basis(&BlowupParams::default(), 8).unwrap();
        let u0 = ground_state_initial(&b, 2.0).unwrap();
        let y = crate::spectral::inner_product_with_phi(&u0, 0).unwrap();
        assert!((y - 2.0).abs() < 1e-14);
        // u₀ = (16/π)·sin(x)/2.
        assert!((u0.value_at(0, PI / 2.0, 0.0) - 8.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn multiplier_matrix_of_constant_is_laplacian() {
        let b = blowup_basis(&BlowupParams::default(), 6).unwrap();
        let one = b.project(&DVector::from_element(b.quadrature().len(), 1.0));
        let g = multiplier_laplacian(&b, one.as_slice());
        // Projection of 1 is only a truncated sine series, so compare through the nodal product.
        let u = vec![0.0; 6];
        assert!(multiplier_laplacian(&b, &u).abs().max() == 0.0);
        assert!(g[(0, 0)] > 0.0);
    }

    #[test]
    fn rejects_small_k() {
        let b = blowup_basis(&BlowupParams::default(), 4).unwrap();
        let p = BlowupParams {
            k: 1.0,
            ..BlowupParams::default()
        };
        let t = ProblemTemplate::default();
        assert!(build_blowup_spec(BlowupExample::SignChange, &p, &b, t).is_err());
        assert!(build_blowup_spec(BlowupExample::Quadratic, &p, &b, t).is_ok());
    }

    #[test]
    fn reduced_drift_substitutes_v() {
        // At t = 0 the coupled u-drift plus −(1/2)Λv equals the reduced u-drift.
        let b = blowup_basis(&BlowupParams::default(), 6).unwrap();
        let t = ProblemTemplate::default();
        for ex in [BlowupExample::Quadratic, BlowupExample::SignChange] {
            let red = build_blowup_spec(ex, &BlowupParams::default(), &b, t).unwrap();
            let cp = build_blowup_spec(
                ex,
                &BlowupParams {
                    coupled: true,
                    ..BlowupParams::default()
                },
                &b,
                t,
            )
            .unwrap();
            let x = cp.u0.coeffs().clone();
            let fc = cp.drift.eval(0.0, &x).unwrap();
            let ac = cp.generator.snapshot(0.0, &x).unwrap();
            let coupled_u = (fc - ac.matrix() * &x).rows(0, 6).into_owned();
            let xr = red.u0.coeffs().clone();
            let reduced_u = red.drift.eval(0.0, &xr).unwrap() - red.generator.snapshot(0.0, &xr).unwrap().matrix() * &xr;
            assert!((coupled_u - reduced_u).norm() < 1e-12);
        }
    }
}
