//! Noise coefficients `σ(t, u)` mapping the `M` Wiener modes into coefficient space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

/// Local Lipschitz constant `L_σ(n)` and linear growth constant `l_σ(n)` on the
/// ball of radius `n`, as declared by the noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    pub lipschitz: f64,
    pub growth: f64,
}

/// `σ(t, u)` as a `dim × M` matrix. Implementations see only the state they
/// are handed, which the solver takes from the already computed prefix.
pub trait NoiseOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn modes(&self) -> usize;
    fn matrix(&self, t: f64, u: &DVector<f64>) -> DMatrix<f64>;

    /// `σ(t, u) ΔW`.
    fn apply(&self, t: f64, u: &DVector<f64>, dw: &[f64]) -> DVector<f64> {
        self.matrix(t, u) * DVector::from_column_slice(dw)
    }

    fn state_dependent(&self) -> bool {
        true
    }

    fn is_zero(&self) -> bool {
        false
    }

    fn constants(&self, n: f64) -> NoiseConstants;

    fn label(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroNoise {
    pub dim: usize,
    pub modes: usize,
}

impl NoiseOperator for ZeroNoise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        self.modes
    }
    fn matrix(&self, _t: f64, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.modes)
    }
    fn apply(&self, _t: f64, _u: &DVector<f64>, _dw: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn state_dependent(&self) -> bool {
        false
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn constants(&self, _n: f64) -> NoiseConstants {
        NoiseConstants {
            lipschitz: 0.0,
            growth: 0.0,
        }
    }
    fn label(&self) -> &'static str {
        "zero"
    }
}

/// State-independent `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveNoise {
    sigma: DMatrix<f64>,
    diagonal: Option<Vec<f64>>,
}

impl AdditiveNoise {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("noise matrix"));
        }
        Ok(Self { sigma, diagonal: None })
    }

    /// Mode `m` drives coefficient `m` with amplitude `amps[m]`.
    pub fn diagonal(dim: usize, amps: &[f64]) -> Result<Self> {
        if amps.len() > dim || amps.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "diagonal noise needs 1..={dim} amplitudes, got {}",
                amps.len()
            )));
        }
        let mut sigma = DMatrix::zeros(dim, amps.len());
        for (m, a) in amps.iter().enumerate() {
            sigma[(m, m)] = *a;
        }
        let mut out = Self::new(sigma)?;
        out.diagonal = Some(amps.to_vec());
        Ok(out)
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            sigma: &self.sigma * c,
            diagonal: self.diagonal.as_ref().map(|d| d.iter().map(|x| c * x).collect()),
        }
    }
}

impl NoiseOperator for AdditiveNoise {
    fn dim(&self) -> usize {
        self.sigma.nrows()
    }
    fn modes(&self) -> usize {
        self.sigma.ncols()
    }
    fn matrix(&self, _t: f64, _u: &DVector<f64>) -> DMatrix<f64> {
        self.sigma.clone()
    }
    fn apply(&self, _t: f64, _u: &DVector<f64>, dw: &[f64]) -> DVector<f64> {
        match &self.diagonal {
            Some(d) => {
                let mut out = DVector::zeros(self.sigma.nrows());
                for (m, a) in d.iter().enumerate() {
                    out[m] = a * dw[m];
                }
                out
            }
            None => &self.sigma * DVector::from_column_slice(dw),
        }
    }
    fn state_dependent(&self) -> bool {
        false
    }
    fn is_zero(&self) -> bool {
        self.sigma.iter().all(|x| *x == 0.0)
    }
    fn constants(&self, _n: f64) -> NoiseConstants {
        NoiseConstants {
            lipschitz: 0.0,
            growth: self.sigma.norm(),
        }
    }
    fn label(&self) -> &'static str {
        "additive"
    }
}

/// Bounded multiplicative noise `σ(u) e_m = σ₀ amp_m tanh(û_m) e_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TanhNoise {
    dim: usize,
    sigma0: f64,
    amps: Vec<f64>,
}

impl TanhNoise {
    pub fn new(dim: usize, sigma0: f64, amps: Vec<f64>) -> Result<Self> {
        if amps.is_empty() || amps.len() > dim {
            return Err(Error::InvalidArgument(format!(
                "tanh noise needs 1..={dim} mode amplitudes, got {}",
                amps.len()
            )));
        }
        if !sigma0.is_finite() || amps.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("tanh noise amplitudes"));
        }
        Ok(Self { dim, sigma0, amps })
    }
}

impl NoiseOperator for TanhNoise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        self.amps.len()
    }
    fn matrix(&self, _t: f64, u: &DVector<f64>) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.amps.len());
        for (m, a) in self.amps.iter().enumerate() {
            s[(m, m)] = self.sigma0 * a * u[m].tanh();
        }
        s
    }
    fn apply(&self, _t: f64, u: &DVector<f64>, dw: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (m, a) in self.amps.iter().enumerate() {
            out[m] = self.sigma0 * a * u[m].tanh() * dw[m];
        }
        out
    }
    fn is_zero(&self) -> bool {
        self.sigma0 == 0.0 || self.amps.iter().all(|a| *a == 0.0)
    }
    fn constants(&self, _n: f64) -> NoiseConstants {
        let m = self.amps.iter().fold(0.0f64, |acc, a| acc.max(a.abs())) * self.sigma0.abs();
        NoiseConstants {
            lipschitz: m,
            growth: m,
        }
    }
    fn label(&self) -> &'static str {
        "tanh"
    }
}

type NoiseFn = dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// `σ` given by a user callback, with declared constants.
pub struct CallbackNoise {
    dim: usize,
    modes: usize,
    f: Box<NoiseFn>,
    constants: NoiseConstants,
}

impl CallbackNoise {
    pub fn new(
        dim: usize,
        modes: usize,
        constants: NoiseConstants,
        f: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            modes,
            f: Box::new(f),
            constants,
        }
    }
}

impl NoiseOperator for CallbackNoise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        self.modes
    }
    fn matrix(&self, t: f64, u: &DVector<f64>) -> DMatrix<f64> {
        (self.f)(t, u)
    }
    fn constants(&self, _n: f64) -> NoiseConstants {
        self.constants
    }
    fn label(&self) -> &'static str {
        "callback"
    }
}

/// `q_k = (1 + λ_k)^{-s_q}` for every coefficient index, repeated per component.
pub fn noise_profile(basis: &SpectralBasis, components: usize, s_q: f64) -> Vec<f64> {
    let n = basis.len();
    (0..n * components)
        .map(|i| (1.0 + basis.eigenvalues()[i % n]).powf(-s_q))
        .collect()
}

/// Hilbert–Schmidt norm `(Σ_m ‖σ e_m‖²_w)^{1/2}` with coefficient weights `w`
/// (for instance Sobolev weights of the target space); unweighted when `None`.
pub fn hilbert_schmidt_norm(sigma: &DMatrix<f64>, weights: Option<&DVector<f64>>) -> f64 {
    let mut s = 0.0;
    for m in 0..sigma.ncols() {
        for k in 0..sigma.nrows() {
            let w = weights.map_or(1.0, |w| w[k]);
            s += w * sigma[(k, m)] * sigma[(k, m)];
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, BoundaryCondition, Domain};

    #[test]
    fn diagonal_apply_matches_matrix() {
        let n = AdditiveNoise::diagonal(4, &[1.0, 2.0, 3.0]).unwrap();
        let u = DVector::zeros(4);
        let dw = [0.5, -1.0, 2.0];
        let a = n.apply(0.0, &u, &dw);
        let b = n.matrix(0.0, &u) * DVector::from_column_slice(&dw);
        assert_eq!(a, b);
        assert_eq!(a[3], 0.0);
    }

    #[test]
    fn tanh_noise_is_bounded() {
        let n = TanhNoise::new(3, 0.05, vec![1.0, 1.0]).unwrap();
        let u = DVector::from_vec(vec![1e6, -1e6, 3.0]);
        let m = n.matrix(0.0, &u);
        assert!((m[(0, 0)] - 0.05).abs() < 1e-15);
        assert!((m[(1, 1)] + 0.05).abs() < 1e-15);
        assert_eq!(n.constants(10.0).growth, 0.05);
    }

    #[test]
    fn profile_is_hilbert_schmidt_in_target_space() {
        // With s_q = 2 and weights (1+λ)^{2μ}, μ = 0.625: Σ (1+k²)^{1.25 - 4} converges.
        let hs = |n: usize| {
            let b = build_basis(Domain::default(), BoundaryCondition::Dirichlet, n).unwrap();
            let q = noise_profile(&b, 1, 2.0);
            let s = AdditiveNoise::diagonal(n, &q).unwrap();
            hilbert_schmidt_norm(s.sigma(), Some(&b.sobolev_weights(0.625, 1)))
        };
        let (a, b) = (hs(32), hs(64));
        // First term: q₁² (1 + 1)^{1.25} = 2^{-2.75}.
        assert!(a > 2f64.powf(-2.75).sqrt());
        assert!((b * b - a * a) / (b * b) < 1e-5);
    }
}
