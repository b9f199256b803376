//! Stochastic Shigesada–Kawasaki–Teramoto cross-diffusion system.
//!
//! `dU = (div(𝒜(U)∇U) + F(U))dt + σ dW` with Neumann conditions, where
//! `𝒜(U) = [[k₁ + 2cu + av, au], [bv, k₂ + 2dv + bu]]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::OperatorSnapshot;
use crate::solver::{Dependence, DriftMap, FnGenerator, LocalConstants, ProblemSpec};
use crate::spectral::{BoundaryCondition, Field, SpectralBasis};
use crate::stochastic::{noise_profile, AdditiveNoise};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SktParams {
    pub k1: f64,
    pub k2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub delta11: f64,
    pub delta21: f64,
    pub gamma11: f64,
    pub gamma12: f64,
    pub gamma21: f64,
    pub gamma22: f64,
    /// Noise amplitude; mode `m` of each component gets `σ₀ (1+λ_m)^{-s_q}`.
    pub sigma0: f64,
    pub s_q: f64,
}

impl Default for SktParams {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            a: 0.1,
            b: 0.1,
            c: 1.0,
            d: 1.0,
            delta11: 0.1,
            delta21: 0.1,
            gamma11: 0.1,
            gamma12: 0.1,
            gamma21: 0.1,
            gamma22: 0.1,
            sigma0: 0.01,
            s_q: 2.0,
        }
    }
}

impl SktParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("delta11", self.delta11),
            ("delta21", self.delta21),
            ("gamma11", self.gamma11),
            ("gamma12", self.gamma12),
            ("gamma21", self.gamma21),
            ("gamma22", self.gamma22),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {x}")));
            }
        }
        for (name, x) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d), ("sigma0", self.sigma0)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {x}")));
            }
        }
        if !(self.s_q > 0.0) {
            return Err(Error::InvalidArgument(format!("noise decay s_q must be positive, got {}", self.s_q)));
        }
        Ok(())
    }

    /// Parameters of the system with the two species exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            k1: self.k2,
            k2: self.k1,
            a: self.b,
            b: self.a,
            c: self.d,
            d: self.c,
            delta11: self.delta21,
            delta21: self.delta11,
            gamma11: self.gamma22,
            gamma22: self.gamma11,
            gamma12: self.gamma21,
            gamma21: self.gamma12,
            ..*self
        }
    }

    /// `𝒜(u, v)`.
    pub fn diffusion_matrix(&self, u: f64, v: f64) -> [[f64; 2]; 2] {
        [
            [self.k1 + 2.0 * self.c * u + self.a * v, self.a * u],
            [self.b * v, self.k2 + 2.0 * self.d * v + self.b * u],
        ]
    }
}

/// Smallest eigenvalue of the symmetric part of a 2×2 matrix.
fn min_sym_eig(m: [[f64; 2]; 2]) -> f64 {
    let p = m[0][0];
    let q = m[1][1];
    let r = 0.5 * (m[0][1] + m[1][0]);
    0.5 * (p + q) - (0.25 * (p - q) * (p - q) + r * r).sqrt()
}

fn require_neumann(basis: &SpectralBasis) -> Result<()> {
    if basis.bc() != BoundaryCondition::Neumann {
        return Err(Error::InvalidArgument("the SKT system is posed with Neumann conditions".into()));
    }
    Ok(())
}

/// Galerkin matrix of `−div(𝒜(U)∇·)` on the two-component Neumann basis,
/// `K_{pq}[j,k] = ∫ 𝒜_{pq}(U) ∇e_j·∇e_k`, in the positive convention.
pub fn skt_operator(params: &SktParams, basis: &Arc<SpectralBasis>, u: &DVector<f64>) -> Result<OperatorSnapshot> {
    require_neumann(basis)?;
    let n = basis.len();
    if u.len() != 2 * n {
        return Err(Error::InvalidArgument(format!("SKT state needs {} coefficients, got {}", 2 * n, u.len())));
    }
    let q = basis.quadrature();
    let un = &q.eval * u.rows(0, n);
    let vn = &q.eval * u.rows(n, n);
    let nq = q.len();
    let mut coef = [[DVector::zeros(nq), DVector::zeros(nq)], [DVector::zeros(nq), DVector::zeros(nq)]];
    for i in 0..nq {
        let m = params.diffusion_matrix(un[i], vn[i]);
        let s = min_sym_eig(m);
        if !(s > 0.0) {
            return Err(Error::Degenerate {
                time: f64::NAN,
                reason: format!(
                    "diffusion matrix loses positive definiteness at x = {:.6} (min eigenvalue of its symmetric part {s:.6e})",
                    q.xs[i]
                ),
            });
        }
        for p in 0..2 {
            for r in 0..2 {
                coef[p][r][i] = q.weights[i] * m[p][r];
            }
        }
    }
    let grads: Vec<&DMatrix<f64>> = std::iter::once(&q.grad_x).chain(q.grad_y.iter()).collect();
    let mut mat = DMatrix::zeros(2 * n, 2 * n);
    for p in 0..2 {
        for r in 0..2 {
            let mut block = DMatrix::zeros(n, n);
            for g in &grads {
                // gᵀ diag(w 𝒜_{pr}) g
                let mut scaled = (*g).clone();
                for i in 0..nq {
                    scaled.row_mut(i).scale_mut(coef[p][r][i]);
                }
                block += g.transpose() * scaled;
            }
            mat.view_mut((p * n, r * n), (n, n)).copy_from(&block);
        }
    }
    OperatorSnapshot::new(basis.clone(), 2, mat)
}

/// `F(U) = (δ₁₁u − γ₁₁u² − γ₁₂uv, δ₂₁v − γ₂₁uv − γ₂₂v²)` by nodal products and projection.
pub fn skt_nonlinearity(params: &SktParams, basis: &SpectralBasis, u: &DVector<f64>) -> Result<DVector<f64>> {
    let n = basis.len();
    if u.len() != 2 * n {
        return Err(Error::InvalidArgument(format!("SKT state needs {} coefficients, got {}", 2 * n, u.len())));
    }
    let q = basis.quadrature();
    let un = &q.eval * u.rows(0, n);
    let vn = &q.eval * u.rows(n, n);
    let f1 = un.zip_map(&vn, |x, y| params.delta11 * x - params.gamma11 * x * x - params.gamma12 * x * y);
    let f2 = un.zip_map(&vn, |x, y| params.delta21 * y - params.gamma21 * x * y - params.gamma22 * y * y);
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&basis.project(&f1));
    out.rows_mut(n, n).copy_from(&basis.project(&f2));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityCertificate {
    /// `a² < 8cb` and `b² < 8da`.
    pub strong: bool,
    /// `ab < 64cd`.
    pub weak: bool,
    /// Smallest eigenvalue of `sym 𝒜(u, v)` over the sampled box.
    pub min_eigenvalue: f64,
    pub argmin: [f64; 2],
}

/// Sufficient conditions for uniform ellipticity plus a sweep of `sym 𝒜` over
/// `[u_lo, u_hi] × [v_lo, v_hi]` on a `samples × samples` lattice.
pub fn check_ellipticity(params: &SktParams, u_box: (f64, f64), v_box: (f64, f64), samples: usize) -> Result<EllipticityCertificate> {
    if !(u_box.0 >= 0.0 && v_box.0 >= 0.0 && u_box.0 <= u_box.1 && v_box.0 <= v_box.1) {
        return Err(Error::InvalidArgument("ellipticity box must be nonnegative and ordered".into()));
    }
    let SktParams { a, b, c, d, .. } = *params;
    let strong = a * a < 8.0 * c * b && b * b < 8.0 * d * a;
    let weak = a * b < 64.0 * c * d;
    let s = samples.max(2);
    let mut min_eigenvalue = f64::INFINITY;
    let mut argmin = [0.0, 0.0];
    for i in 0..s {
        for j in 0..s {
            let u = u_box.0 + (u_box.1 - u_box.0) * i as f64 / (s - 1) as f64;
            let v = v_box.0 + (v_box.1 - v_box.0) * j as f64 / (s - 1) as f64;
            let e = min_sym_eig(params.diffusion_matrix(u, v));
            if e < min_eigenvalue {
                min_eigenvalue = e;
                argmin = [u, v];
            }
        }
    }
    Ok(EllipticityCertificate {
        strong,
        weak,
        min_eigenvalue,
        argmin,
    })
}

struct SktDrift {
    params: SktParams,
    basis: Arc<SpectralBasis>,
}

impl DriftMap for SktDrift {
    fn eval(&self, _t: f64, u: &DVector<f64>) -> Result<DVector<f64>> {
        // The operator carries a +I shift, so the drift gives it back.
        Ok(skt_nonlinearity(&self.params, &self.basis, u)? + u)
    }

    fn constants(&self, n: f64) -> LocalConstants {
        let p = &self.params;
        let g = p.gamma11.max(p.gamma12).max(p.gamma21).max(p.gamma22);
        let lin = p.delta11.max(p.delta21) + 1.0;
        LocalConstants {
            lipschitz: lin + 4.0 * g * n,
            growth: lin + 2.0 * g * n,
        }
    }
}

/// Default SKT initial data `u₀ = A(1 + cos x)`, `v₀ = A(1 − cos x)` on an interval.
pub fn skt_default_initial(basis: &Arc<SpectralBasis>, amplitude: f64) -> Result<Field> {
    require_neumann(basis)?;
    Ok(Field::from_fn(basis.clone(), 2, |c, x, _y| {
        let len = match basis.domain() {
            crate::spectral::Domain::Interval { length } => length,
            crate::spectral::Domain::Rectangle { lx, .. } => lx,
        };
        let e = (std::f64::consts::PI * x / len).cos();
        if c == 0 {
            amplitude * (1.0 + e)
        } else {
            amplitude * (1.0 - e)
        }
    }))
}

/// Wires the SKT system into a [`ProblemSpec`] with additive noise on all `2N` modes.
///
/// The Neumann operator has a zero eigenvalue, so the generator is `A(U) + I` and
/// the drift gets `U` back, which leaves the equation unchanged.
pub fn skt_problem(
    params: &SktParams,
    basis: &Arc<SpectralBasis>,
    u0: Field,
    template: crate::models::ProblemTemplate,
) -> Result<ProblemSpec> {
    params.validate()?;
    require_neumann(basis)?;
    let n = basis.len();
    let p = *params;
    let b = basis.clone();
    let generator = FnGenerator::new(Dependence::Full, move |t, u| {
        skt_operator(&p, &b, u)
            .map(|a| a.shifted(1.0))
            .map_err(|e| match e {
                Error::Degenerate { reason, .. } => Error::Degenerate { time: t, reason },
                other => other,
            })
    });
    let profile: Vec<f64> = noise_profile(basis, 2, params.s_q).iter().map(|q| params.sigma0 * q).collect();
    let noise = AdditiveNoise::diagonal(2 * n, &profile)?;
    let spec = ProblemSpec {
        basis: basis.clone(),
        components: 2,
        generator: Arc::new(generator),
        drift: Arc::new(SktDrift {
            params: p,
            basis: basis.clone(),
        }),
        noise: Arc::new(noise),
        u0,
        exponents: template.exponents,
        radii: template.radii,
        delta: template.delta,
        holder_k: template.holder_k,
        horizon: template.horizon,
    };
    spec.validate()?;
    Ok(spec)
}
