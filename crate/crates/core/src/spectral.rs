//! Spatial discretization: Laplacian eigenbases on intervals and rectangles,
//! coefficient fields, Sobolev-scale norms and pseudo-spectral quadrature.
//!
//! Everything downstream works on coefficient vectors in the L²-normalized
//! eigenbasis of the reference Laplacian. Norms on the spaces X, Y, Z are
//! realized through the fixed operator `I - Δ`:
//!
//! ```text
//! ‖u‖_μ² = Σ_components Σ_k (1 + λ_k)^{2μ} |û_k|²
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

impl Domain {
    pub fn interval(length: f64) -> Self {
        Domain::Interval { length }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Interval { length } => length.is_finite() && length > 0.0,
            Domain::Rectangle { lx, ly } => lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "domain lengths must be positive and finite: {self:?}"
            )))
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { length } => length,
            Domain::Rectangle { lx, ly } => lx * ly,
        }
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::Interval { length: PI }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

/// Wave numbers of one eigenfunction; `ky` is zero on intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub kx: usize,
    pub ky: usize,
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Quadrature grid with eigenfunction (and gradient) values at the nodes.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub weights: Vec<f64>,
    /// `eval[(q, k)] = e_k(x_q)`.
    pub eval: DMatrix<f64>,
    /// `∂_x e_k(x_q)`.
    pub grad_x: DMatrix<f64>,
    /// `∂_y e_k(x_q)`, present on rectangles.
    pub grad_y: Option<DMatrix<f64>>,
    /// `projector = evalᵀ · diag(weights)`: nodal values to Galerkin coefficients.
    pub projector: DMatrix<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Oversampling factor of the quadrature relative to the highest wave number.
/// Six points per wave number keeps Gauss–Legendre exact to rounding for
/// cubic products of band-limited fields.
pub const DEFAULT_QUADRATURE_FACTOR: usize = 6;

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    domain: Domain,
    bc: BoundaryCondition,
    modes: Vec<Mode>,
    eigenvalues: Vec<f64>,
    quadrature: Quadrature,
}

/// Builds the first `n` eigenpairs of `-Δ` on `domain` under `bc`.
pub fn build_basis(domain: Domain, bc: BoundaryCondition, n: usize) -> Result<Arc<SpectralBasis>> {
    SpectralBasis::new(domain, bc, n, DEFAULT_QUADRATURE_FACTOR).map(Arc::new)
}

impl SpectralBasis {
    pub fn new(domain: Domain, bc: BoundaryCondition, n: usize, quad_factor: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("mode count must be at least 1".into()));
        }
        domain.validate()?;
        let first = match bc {
            BoundaryCondition::Dirichlet => 1,
            BoundaryCondition::Neumann => 0,
        };
        let modes: Vec<Mode> = match domain {
            Domain::Interval { .. } => (0..n).map(|i| Mode { kx: first + i, ky: 0 }).collect(),
            Domain::Rectangle { lx, ly } => {
                // Enumerate a box large enough to contain the n lowest pairs.
                let kmax = first + n;
                let mut all = Vec::with_capacity(kmax * kmax);
                for kx in first..first + kmax {
                    for ky in first..first + kmax {
                        let lam = (kx as f64 * PI / lx).powi(2) + (ky as f64 * PI / ly).powi(2);
                        all.push((lam, Mode { kx, ky }));
                    }
                }
                all.sort_by(|a, b| {
                    a.0.total_cmp(&b.0)
                        .then(a.1.kx.cmp(&b.1.kx))
                        .then(a.1.ky.cmp(&b.1.ky))
                });
                all.into_iter().take(n).map(|(_, m)| m).collect()
            }
        };
        let eigenvalues = modes.iter().map(|m| Self::eigenvalue_of(domain, *m)).collect();
        let quadrature = Self::build_quadrature(domain, bc, &modes, quad_factor.max(4));
        Ok(Self {
            domain,
            bc,
            modes,
            eigenvalues,
            quadrature,
        })
    }

    fn eigenvalue_of(domain: Domain, m: Mode) -> f64 {
        match domain {
            Domain::Interval { length } => (m.kx as f64 * PI / length).powi(2),
            Domain::Rectangle { lx, ly } => {
                (m.kx as f64 * PI / lx).powi(2) + (m.ky as f64 * PI / ly).powi(2)
            }
        }
    }

    /// One-dimensional factor of an eigenfunction and its derivative.
    fn factor(bc: BoundaryCondition, k: usize, length: f64, x: f64) -> (f64, f64) {
        let w = k as f64 * PI / length;
        match bc {
            BoundaryCondition::Dirichlet => {
                let c = (2.0 / length).sqrt();
                (c * (w * x).sin(), c * w * (w * x).cos())
            }
            BoundaryCondition::Neumann => {
                if k == 0 {
                    ((1.0 / length).sqrt(), 0.0)
                } else {
                    let c = (2.0 / length).sqrt();
                    (c * (w * x).cos(), -c * w * (w * x).sin())
                }
            }
        }
    }

    fn build_quadrature(domain: Domain, bc: BoundaryCondition, modes: &[Mode], factor: usize) -> Quadrature {
        let n = modes.len();
        match domain {
            Domain::Interval { length } => {
                let kmax = modes.iter().map(|m| m.kx).max().unwrap_or(1).max(1);
                let q = factor * kmax + 8;
                let (z, w) = gauss_legendre(q);
                let xs: Vec<f64> = z.iter().map(|t| t * length).collect();
                let weights: Vec<f64> = w.iter().map(|t| t * length).collect();
                let mut eval = DMatrix::zeros(q, n);
                let mut grad_x = DMatrix::zeros(q, n);
                for (j, m) in modes.iter().enumerate() {
                    for (i, &x) in xs.iter().enumerate() {
                        let (v, d) = Self::factor(bc, m.kx, length, x);
                        eval[(i, j)] = v;
                        grad_x[(i, j)] = d;
                    }
                }
                let projector = Self::projector(&eval, &weights);
                Quadrature {
                    ys: vec![0.0; q],
                    xs,
                    weights,
                    eval,
                    grad_x,
                    grad_y: None,
                    projector,
                }
            }
            Domain::Rectangle { lx, ly } => {
                let kx = modes.iter().map(|m| m.kx).max().unwrap_or(1).max(1);
                let ky = modes.iter().map(|m| m.ky).max().unwrap_or(1).max(1);
                let (qx, qy) = (factor * kx + 8, factor * ky + 8);
                let (zx, wx) = gauss_legendre(qx);
                let (zy, wy) = gauss_legendre(qy);
                let total = qx * qy;
                let mut xs = Vec::with_capacity(total);
                let mut ys = Vec::with_capacity(total);
                let mut weights = Vec::with_capacity(total);
                for i in 0..qx {
                    for j in 0..qy {
                        xs.push(zx[i] * lx);
                        ys.push(zy[j] * ly);
                        weights.push(wx[i] * lx * wy[j] * ly);
                    }
                }
                let mut eval = DMatrix::zeros(total, n);
                let mut grad_x = DMatrix::zeros(total, n);
                let mut grad_y = DMatrix::zeros(total, n);
                for (c, m) in modes.iter().enumerate() {
                    for q in 0..total {
                        let (fx, dfx) = Self::factor(bc, m.kx, lx, xs[q]);
                        let (fy, dfy) = Self::factor(bc, m.ky, ly, ys[q]);
                        eval[(q, c)] = fx * fy;
                        grad_x[(q, c)] = dfx * fy;
                        grad_y[(q, c)] = fx * dfy;
                    }
                }
                let projector = Self::projector(&eval, &weights);
                Quadrature {
                    xs,
                    ys,
                    weights,
                    eval,
                    grad_x,
                    grad_y: Some(grad_y),
                    projector,
                }
            }
        }
    }

    fn projector(eval: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
        let mut p = eval.transpose();
        for (q, w) in weights.iter().enumerate() {
            p.column_mut(q).scale_mut(*w);
        }
        p
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// Value of eigenfunction `k` at `(x, y)`; `y` is ignored on intervals.
    pub fn eval_mode(&self, k: usize, x: f64, y: f64) -> f64 {
        let m = self.modes[k];
        match self.domain {
            Domain::Interval { length } => Self::factor(self.bc, m.kx, length, x).0,
            Domain::Rectangle { lx, ly } => {
                Self::factor(self.bc, m.kx, lx, x).0 * Self::factor(self.bc, m.ky, ly, y).0
            }
        }
    }

    /// `∫_G e_k dx` in closed form.
    pub fn mode_integral(&self, k: usize) -> f64 {
        let m = self.modes[k];
        let one = |kk: usize, len: f64| -> f64 {
            match self.bc {
                BoundaryCondition::Dirichlet => {
                    if kk % 2 == 1 {
                        (2.0 / len).sqrt() * 2.0 * len / (kk as f64 * PI)
                    } else {
                        0.0
                    }
                }
                BoundaryCondition::Neumann => {
                    if kk == 0 {
                        len.sqrt()
                    } else {
                        0.0
                    }
                }
            }
        };
        match self.domain {
            Domain::Interval { length } => one(m.kx, length),
            Domain::Rectangle { lx, ly } => one(m.kx, lx) * one(m.ky, ly),
        }
    }

    /// Per-coefficient weights `(1 + λ_k)^{2μ}` repeated for each component.
    pub fn sobolev_weights(&self, mu: f64, components: usize) -> DVector<f64> {
        let n = self.len();
        DVector::from_fn(n * components, |i, _| (1.0 + self.eigenvalues[i % n]).powf(2.0 * mu))
    }

    /// Nodal values of the coefficient block `coeffs` (one component).
    pub fn to_nodes(&self, coeffs: &[f64]) -> DVector<f64> {
        &self.quadrature.eval * DVector::from_column_slice(coeffs)
    }

    /// Galerkin projection of nodal values back onto the basis.
    pub fn project(&self, nodal: &DVector<f64>) -> DVector<f64> {
        &self.quadrature.projector * nodal
    }

    /// Coefficients of `φ`, the positive Dirichlet ground state scaled to unit integral.
    pub fn phi_coefficients(&self) -> Result<DVector<f64>> {
        self.require_dirichlet()?;
        let mut c = DVector::zeros(self.len());
        c[0] = 1.0 / self.mode_integral(0);
        Ok(c)
    }

    /// `∫_G φ² dx`.
    pub fn phi_l2_squared(&self) -> Result<f64> {
        self.require_dirichlet()?;
        Ok(1.0 / self.mode_integral(0).powi(2))
    }

    fn require_dirichlet(&self) -> Result<()> {
        match self.bc {
            BoundaryCondition::Dirichlet => Ok(()),
            BoundaryCondition::Neumann => Err(Error::InvalidArgument(
                "the ground-state functional φ needs a Dirichlet basis".into(),
            )),
        }
    }
}

/// A vector-valued field in coefficient space: `components` blocks of `N` coefficients.
#[derive(Debug, Clone)]
pub struct Field {
    basis: Arc<SpectralBasis>,
    components: usize,
    coeffs: DVector<f64>,
}

impl Field {
    pub fn zeros(basis: Arc<SpectralBasis>, components: usize) -> Self {
        let n = basis.len() * components;
        Self {
            basis,
            components,
            coeffs: DVector::zeros(n),
        }
    }

    pub fn from_coeffs(basis: Arc<SpectralBasis>, components: usize, coeffs: DVector<f64>) -> Result<Self> {
        if components == 0 || coeffs.len() != basis.len() * components {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients for {} component(s), got {}",
                basis.len() * components,
                components,
                coeffs.len()
            )));
        }
        Ok(Self {
            basis,
            components,
            coeffs,
        })
    }

    /// The single eigenmode `e_k` in component `comp`.
    pub fn mode(basis: Arc<SpectralBasis>, components: usize, comp: usize, k: usize) -> Self {
        let mut f = Self::zeros(basis, components);
        let n = f.basis.len();
        f.coeffs[comp * n + k] = 1.0;
        f
    }

    /// Projects pointwise functions (one per component) onto the basis.
    pub fn from_fn<F>(basis: Arc<SpectralBasis>, components: usize, f: F) -> Self
    where
        F: Fn(usize, f64, f64) -> f64,
    {
        let quad = basis.quadrature();
        let n = basis.len();
        let mut coeffs = DVector::zeros(n * components);
        for c in 0..components {
            let nodal = DVector::from_fn(quad.len(), |q, _| f(c, quad.xs[q], quad.ys[q]));
            coeffs.rows_mut(c * n, n).copy_from(&basis.project(&nodal));
        }
        Self {
            basis,
            components,
            coeffs,
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<f64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.basis.len();
        &self.coeffs.as_slice()[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.norm()
    }

    /// Nodal values of component `c` on the quadrature grid.
    pub fn nodal(&self, c: usize) -> DVector<f64> {
        self.basis.to_nodes(self.component(c))
    }

    /// Pointwise value of component `c` at `(x, y)`.
    pub fn value_at(&self, c: usize, x: f64, y: f64) -> f64 {
        self.component(c)
            .iter()
            .enumerate()
            .map(|(k, a)| a * self.basis.eval_mode(k, x, y))
            .sum()
    }

    /// Maximum over quadrature nodes of component `c`.
    pub fn max_on_nodes(&self, c: usize) -> f64 {
        self.nodal(c).max()
    }
}

/// `(Σ (1+λ_k)^{2μ} |û_k|²)^{1/2}` over all components of a raw coefficient vector.
pub fn sobolev_norm_coeffs(basis: &SpectralBasis, coeffs: &DVector<f64>, mu: f64) -> f64 {
    let n = basis.len();
    coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| (1.0 + basis.eigenvalues()[i % n]).powf(2.0 * mu) * a * a)
        .sum::<f64>()
        .sqrt()
}

/// Sobolev-scale norm `‖field‖_{H^{2μ}}` through the reference operator `I - Δ`.
pub fn sobolev_norm(field: &Field, mu: f64) -> Result<f64> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidArgument(format!("sobolev exponent must be ≥ 0, got {mu}")));
    }
    if !field.is_finite() {
        return Err(Error::NonFinite("sobolev_norm"));
    }
    Ok(sobolev_norm_coeffs(&field.basis, &field.coeffs, mu))
}

/// `⟨u_c, φ⟩` for component `c`, with `φ` the unit-integral Dirichlet ground state.
pub fn inner_product_with_phi(field: &Field, component: usize) -> Result<f64> {
    if component >= field.components {
        return Err(Error::InvalidArgument(format!(
            "component {component} out of range ({} components)",
            field.components
        )));
    }
    let phi = field.basis.phi_coefficients()?;
    Ok(field.component(component)[0] * phi[0])
}
