//! Small user-configurable problems with known structure.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ProblemTemplate;
use crate::operator::OperatorSnapshot;
use crate::solver::{Dependence, FnDrift, FnGenerator, LocalConstants, ProblemSpec};
use crate::spectral::{sobolev_norm_coeffs, Field, SpectralBasis};
use crate::stochastic::{noise_profile, AdditiveNoise, NoiseOperator, ZeroNoise};

/// `A(t) = scale (1 + rate t)(shift − Δ)`, constant force on mode 0, additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearParams {
    pub scale: f64,
    pub rate: f64,
    pub shift: f64,
    pub force: f64,
    pub sigma0: f64,
    pub s_q: f64,
    /// Coefficient of the first mode in `u₀`.
    pub initial: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            scale: 1.0,
            rate: 0.0,
            shift: 1.0,
            force: 0.0,
            sigma0: 0.1,
            s_q: 1.0,
            initial: 1.0,
        }
    }
}

/// `A(u) = (1 + κ‖u‖²_Z)(shift − Δ)` with a constant force on mode 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasilinearParams {
    pub kappa: f64,
    pub shift: f64,
    pub force: f64,
    pub sigma0: f64,
    pub s_q: f64,
    pub initial: f64,
}

impl Default for QuasilinearParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            shift: 1.0,
            force: 40.0,
            sigma0: 0.0,
            s_q: 1.0,
            initial: 0.0,
        }
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {x}")))
    }
}

fn additive(basis: &SpectralBasis, sigma0: f64, s_q: f64) -> Result<Arc<dyn NoiseOperator>> {
    if sigma0 < 0.0 || !sigma0.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma0 must be nonnegative, got {sigma0}")));
    }
    if sigma0 == 0.0 {
        return Ok(Arc::new(ZeroNoise {
            dim: basis.len(),
            modes: basis.len(),
        }));
    }
    let amps: Vec<f64> = noise_profile(basis, 1, s_q).iter().map(|q| sigma0 * q).collect();
    Ok(Arc::new(AdditiveNoise::diagonal(basis.len(), &amps)?))
}

fn forcing(n: usize, force: f64) -> impl Fn(f64, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync {
    move |_t, _u| {
        let mut f = DVector::zeros(n);
        f[0] = force;
        Ok(f)
    }
}

fn assemble(
    basis: &Arc<SpectralBasis>,
    generator: FnGenerator,
    force: f64,
    noise: Arc<dyn NoiseOperator>,
    initial: f64,
    template: ProblemTemplate,
) -> Result<ProblemSpec> {
    let n = basis.len();
    let u0 = Field::from_coeffs(basis.clone(), 1, DVector::from_fn(n, |k, _| if k == 0 { initial } else { 0.0 }))?;
    let spec = ProblemSpec {
        basis: basis.clone(),
        components: 1,
        generator: Arc::new(generator),
        drift: Arc::new(FnDrift::new(Dependence::Constant, forcing(n, force)).with_constants(move |_n| LocalConstants {
            lipschitz: 0.0,
            growth: force.abs(),
        })),
        noise,
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

pub fn custom_linear(params: &LinearParams, basis: &Arc<SpectralBasis>, template: ProblemTemplate) -> Result<ProblemSpec> {
    // A negative scale gives an anti-dissipative generator; the sector audit rejects it.
    if params.scale == 0.0 || !params.scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be finite and nonzero, got {}", params.scale)));
    }
    finite("rate", params.rate)?;
    finite("force", params.force)?;
    finite("initial", params.initial)?;
    if !(params.shift + basis.lambda_min() > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shift + λ_min must be positive, got {}",
            params.shift + basis.lambda_min()
        )));
    }
    if params.rate < 0.0 && 1.0 + params.rate * template.horizon <= 0.0 {
        return Err(Error::InvalidArgument("the time factor 1 + rate·t must stay positive on the horizon".into()));
    }
    let p = *params;
    let b = basis.clone();
    let generator = FnGenerator::new(Dependence::TimeOnly, move |t, _u| {
        Ok(OperatorSnapshot::shifted_laplacian(b.clone(), 1, p.shift, p.scale * (1.0 + p.rate * t)))
    });
    let noise = additive(basis, params.sigma0, params.s_q)?;
    assemble(basis, generator, params.force, noise, params.initial, template)
}

pub fn custom_quasilinear(
    params: &QuasilinearParams,
    basis: &Arc<SpectralBasis>,
    template: ProblemTemplate,
) -> Result<ProblemSpec> {
    if !(params.kappa >= 0.0 && params.kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must be nonnegative, got {}", params.kappa)));
    }
    finite("force", params.force)?;
    finite("initial", params.initial)?;
    if !(params.shift + basis.lambda_min() > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shift + λ_min must be positive, got {}",
            params.shift + basis.lambda_min()
        )));
    }
    let p = *params;
    let b = basis.clone();
    let mu = template.exponents.beta;
    let generator = FnGenerator::new(Dependence::Full, move |_t, u| {
        let z = sobolev_norm_coeffs(&b, u, mu);
        Ok(OperatorSnapshot::shifted_laplacian(b.clone(), 1, p.shift, 1.0 + p.kappa * z * z))
    });
    let noise = additive(basis, params.sigma0, params.s_q)?;
    assemble(basis, generator, params.force, noise, params.initial, template)
}
