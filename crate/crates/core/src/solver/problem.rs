//! Problem data for quasilinear equations `du = (−A(u)u + F(t,u))dt + σ(t,u)dW`.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::OperatorSnapshot;
use crate::spectral::{sobolev_norm, Field, SpectralBasis};
use crate::stochastic::NoiseOperator;

/// How a coefficient depends on its arguments; lets solvers cache work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dependence {
    Constant,
    TimeOnly,
    Full,
}

/// `(t, u) ↦ A(t, u)` in the positive-sectorial convention.
pub trait GeneratorMap: Send + Sync {
    fn snapshot(&self, t: f64, u: &DVector<f64>) -> Result<OperatorSnapshot>;
    fn dependence(&self) -> Dependence {
        Dependence::Full
    }
}

/// Local Lipschitz constant `L(n)` and growth constant `l(n)` on the ball of radius `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConstants {
    pub lipschitz: f64,
    pub growth: f64,
}

pub trait DriftMap: Send + Sync {
    fn eval(&self, t: f64, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn dependence(&self) -> Dependence {
        Dependence::Full
    }
    /// Declared constants; NaN when the model does not state them.
    fn constants(&self, _n: f64) -> LocalConstants {
        LocalConstants {
            lipschitz: f64::NAN,
            growth: f64::NAN,
        }
    }
}

/// A fixed operator.
#[derive(Debug, Clone)]
pub struct ConstantGenerator(pub OperatorSnapshot);

impl GeneratorMap for ConstantGenerator {
    fn snapshot(&self, _t: f64, _u: &DVector<f64>) -> Result<OperatorSnapshot> {
        Ok(self.0.clone())
    }
    fn dependence(&self) -> Dependence {
        Dependence::Constant
    }
}

type GenFn = dyn Fn(f64, &DVector<f64>) -> Result<OperatorSnapshot> + Send + Sync;

/// Generator given by a closure.
pub struct FnGenerator {
    f: Box<GenFn>,
    dependence: Dependence,
}

impl FnGenerator {
    pub fn new(
        dependence: Dependence,
        f: impl Fn(f64, &DVector<f64>) -> Result<OperatorSnapshot> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Box::new(f),
            dependence,
        }
    }
}

impl GeneratorMap for FnGenerator {
    fn snapshot(&self, t: f64, u: &DVector<f64>) -> Result<OperatorSnapshot> {
        (self.f)(t, u)
    }
    fn dependence(&self) -> Dependence {
        self.dependence
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroDrift {
    pub dim: usize,
}

impl DriftMap for ZeroDrift {
    fn eval(&self, _t: f64, _u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }
    fn dependence(&self) -> Dependence {
        Dependence::Constant
    }
    fn constants(&self, _n: f64) -> LocalConstants {
        LocalConstants {
            lipschitz: 0.0,
            growth: 0.0,
        }
    }
}

type DriftFn = dyn Fn(f64, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync;

pub struct FnDrift {
    f: Box<DriftFn>,
    dependence: Dependence,
    constants: Option<Box<dyn Fn(f64) -> LocalConstants + Send + Sync>>,
}

impl FnDrift {
    pub fn new(
        dependence: Dependence,
        f: impl Fn(f64, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Box::new(f),
            dependence,
            constants: None,
        }
    }

    pub fn with_constants(mut self, c: impl Fn(f64) -> LocalConstants + Send + Sync + 'static) -> Self {
        self.constants = Some(Box::new(c));
        self
    }
}

impl DriftMap for FnDrift {
    fn eval(&self, t: f64, u: &DVector<f64>) -> Result<DVector<f64>> {
        (self.f)(t, u)
    }
    fn dependence(&self) -> Dependence {
        self.dependence
    }
    fn constants(&self, n: f64) -> LocalConstants {
        match &self.constants {
            Some(c) => c(n),
            None => LocalConstants {
                lipschitz: f64::NAN,
                growth: f64::NAN,
            },
        }
    }
}

/// Interpolation exponents: `Y` carries index `α`, `Z` carries index `β`,
/// and `ν` is the order of the time-regularity condition on the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.625,
            nu: 1.0,
        }
    }
}

impl Exponents {
    pub fn validate(&self) -> Result<()> {
        let Exponents { alpha, beta, nu } = *self;
        if ![alpha, beta, nu].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidExponents("exponents must be finite".into()));
        }
        if !(0.0 <= alpha && alpha < beta && beta < nu && nu <= 1.0) {
            return Err(Error::InvalidExponents(format!(
                "need 0 ≤ α < β < ν ≤ 1, got α = {alpha}, β = {beta}, ν = {nu}"
            )));
        }
        if !(beta + nu > 1.0 + alpha) {
            return Err(Error::InvalidExponents(format!(
                "need β + ν > 1 + α, got β + ν = {}, 1 + α = {}",
                beta + nu,
                1.0 + alpha
            )));
        }
        if beta < 0.5 {
            return Err(Error::InvalidExponents(format!("need β ≥ 1/2, got β = {beta}")));
        }
        Ok(())
    }
}

/// Radii of the solution set: `r` bounds `sup ‖v(t) − u₀‖_Z`, `R` bounds `‖u₀‖_Z`-type balls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radii {
    pub big_r: f64,
    pub r: f64,
}

impl Radii {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.r && self.r < self.big_r) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < r < R, got r = {}, R = {}",
                self.r, self.big_r
            )));
        }
        Ok(())
    }
}

/// Largest Hölder exponent of Brownian-driven integrals.
pub const NOISE_HOLDER_EXPONENT: f64 = 0.5;

#[derive(Clone)]
pub struct ProblemSpec {
    pub basis: Arc<SpectralBasis>,
    pub components: usize,
    pub generator: Arc<dyn GeneratorMap>,
    pub drift: Arc<dyn DriftMap>,
    pub noise: Arc<dyn NoiseOperator>,
    pub u0: Field,
    pub exponents: Exponents,
    pub radii: Radii,
    /// Hölder exponent of the solution set.
    pub delta: f64,
    /// Hölder seminorm bound `k`; `None` means `10 (‖u₀‖_Z + 1)`.
    pub holder_k: Option<f64>,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.basis.len() * self.components
    }

    pub fn validate(&self) -> Result<()> {
        self.exponents.validate()?;
        self.radii.validate()?;
        let upper = (self.exponents.beta - self.exponents.alpha).min(NOISE_HOLDER_EXPONENT);
        if !(self.delta > 0.0 && self.delta < upper) {
            return Err(Error::InvalidExponents(format!(
                "need 0 < δ < min(β − α, noise Hölder exponent {NOISE_HOLDER_EXPONENT}) = {upper}, got δ = {}",
                self.delta
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.u0.components() != self.components || self.u0.coeffs().len() != self.dim() {
            return Err(Error::InvalidArgument("initial field does not match the problem layout".into()));
        }
        if !self.u0.is_finite() {
            return Err(Error::NonFinite("initial field"));
        }
        if self.noise.dim() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "noise maps into dimension {}, problem has {}",
                self.noise.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Index of the `Z` scale.
    pub fn mu_z(&self) -> f64 {
        self.exponents.beta
    }

    /// Index of the `Y` scale.
    pub fn mu_y(&self) -> f64 {
        self.exponents.alpha
    }

    pub fn z_norm0(&self) -> f64 {
        sobolev_norm(&self.u0, self.mu_z()).unwrap_or(f64::NAN)
    }

    pub fn holder_bound(&self) -> f64 {
        self.holder_k.unwrap_or(10.0 * (self.z_norm0() + 1.0))
    }

    /// Same problem started from `u0`.
    pub fn with_initial(&self, u0: Field) -> Self {
        let mut s = self.clone();
        s.u0 = u0;
        s
    }
}
