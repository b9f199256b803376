//! Concrete problems: SKT cross-diffusion, the blow-up examples and small custom models.
//!
//! Each model is a [`Model`] trait object in [`models()`], built from JSON
//! parameters so configs can select and tune it by name.

pub mod blowup;
pub mod custom;
pub mod ode;
pub mod skt;
pub mod study;

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::solver::{Exponents, ProblemSpec, Radii};
use crate::spectral::{build_basis, BoundaryCondition, Domain};

pub use blowup::{
    blowup_basis, build_blowup_spec, ground_state_initial, multiplier_laplacian, y_series, BlowupExample, BlowupParams,
};
pub use custom::{custom_linear, custom_quasilinear, LinearParams, QuasilinearParams};
pub use ode::{ode_comparison, ComparisonKind, OdeBound};
pub use skt::{check_ellipticity, skt_default_initial, skt_nonlinearity, skt_operator, skt_problem, EllipticityCertificate, SktParams};
pub use study::{blowup_study, degenerate_witness, Assertion, BlowupStudyReport, StudyOptions, WitnessReport};

/// Problem-level numbers shared by every model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemTemplate {
    pub exponents: Exponents,
    pub radii: Radii,
    pub delta: f64,
    pub holder_k: Option<f64>,
    pub horizon: f64,
}

impl Default for ProblemTemplate {
    fn default() -> Self {
        Self {
            exponents: Exponents::default(),
            radii: Radii { big_r: 10.0, r: 5.0 },
            delta: 0.1,
            holder_k: None,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSetup {
    pub modes: usize,
    pub template: ProblemTemplate,
}

/// Inputs of the scalar comparison equation attached to a blow-up model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSetup {
    pub kind: ComparisonKind,
    pub lambda1: f64,
    pub y0: f64,
    pub k: Option<f64>,
    pub phi_l2_squared: f64,
}

pub struct BuiltModel {
    pub spec: ProblemSpec,
    /// Parameters with every default filled in.
    pub params: Value,
    /// Component whose ground-state functional `⟨u, φ⟩` is tracked.
    pub observable: Option<usize>,
    pub comparison: Option<ComparisonSetup>,
}

pub trait Model: Named + Send + Sync {
    fn description(&self) -> &'static str;
    fn build(&self, params: &Value, setup: &ModelSetup) -> Result<BuiltModel>;
}

fn parse<T: DeserializeOwned + Serialize>(model: &str, params: &Value) -> Result<(T, Value)> {
    let v = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    let p: T = serde_json::from_value(v).map_err(|e| Error::InvalidArgument(format!("{model} parameters: {e}")))?;
    let echo = serde_json::to_value(&p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((p, echo))
}

/// Removes numeric keys that are not part of the parameter struct, with defaults.
fn split_extras(params: &Value, keys: &[(&str, f64)]) -> Result<(Value, Vec<f64>)> {
    let mut rest = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    let obj = rest
        .as_object_mut()
        .ok_or_else(|| Error::InvalidArgument("model parameters must be a JSON object".into()))?;
    let mut out = Vec::with_capacity(keys.len());
    for (k, default) in keys {
        out.push(match obj.remove(*k) {
            None => *default,
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::InvalidArgument(format!("parameter {k} must be a number")))?,
        });
    }
    Ok((rest, out))
}

fn merge(mut echo: Value, extras: &[(&str, f64)]) -> Value {
    if let Some(obj) = echo.as_object_mut() {
        for (k, v) in extras {
            obj.insert((*k).to_string(), Value::from(*v));
        }
    }
    echo
}

pub struct Skt;

impl Named for Skt {
    fn name(&self) -> &'static str {
        "skt"
    }
}

impl Model for Skt {
    fn description(&self) -> &'static str {
        "SKT cross-diffusion system with Neumann conditions"
    }

    fn build(&self, params: &Value, setup: &ModelSetup) -> Result<BuiltModel> {
        let (rest, extra) = split_extras(params, &[("amplitude", 0.1), ("length", std::f64::consts::PI)])?;
        let (p, echo): (SktParams, _) = parse(self.name(), &rest)?;
        let basis = build_basis(Domain::interval(extra[1]), BoundaryCondition::Neumann, setup.modes)?;
        // u₀ = A(1 + cos x), v₀ = A(1 − cos x).
        let u0 = skt_default_initial(&basis, extra[0])?;
        Ok(BuiltModel {
            spec: skt_problem(&p, &basis, u0, setup.template)?,
            params: merge(echo, &[("amplitude", extra[0]), ("length", extra[1])]),
            observable: None,
            comparison: None,
        })
    }
}

pub struct Blowup(pub BlowupExample);

impl Named for Blowup {
    fn name(&self) -> &'static str {
        match self.0 {
            BlowupExample::Quadratic => "blowup1",
            BlowupExample::SignChange => "blowup2",
            BlowupExample::Degenerate => "degenerate3",
        }
    }
}

impl Model for Blowup {
    fn description(&self) -> &'static str {
        match self.0 {
            BlowupExample::Quadratic => "quadratic blow-up on a Dirichlet interval",
            BlowupExample::SignChange => "ground-state functional forced through zero",
            BlowupExample::Degenerate => "three-component system whose w-operator loses sectoriality",
        }
    }

    fn build(&self, params: &Value, setup: &ModelSetup) -> Result<BuiltModel> {
        let (p, echo): (BlowupParams, _) = parse(self.name(), params)?;
        let basis = blowup_basis(&p, setup.modes)?;
        let spec = build_blowup_spec(self.0, &p, &basis, setup.template)?;
        let kind = match self.0 {
            BlowupExample::Quadratic => ComparisonKind::Blowup,
            _ => ComparisonKind::SignChange,
        };
        Ok(BuiltModel {
            spec,
            params: echo,
            observable: Some(0),
            comparison: Some(ComparisonSetup {
                kind,
                lambda1: basis.lambda_min(),
                y0: p.y0,
                k: (kind == ComparisonKind::SignChange).then_some(p.k),
                phi_l2_squared: basis.phi_l2_squared()?,
            }),
        })
    }
}

pub struct CustomLinear;

impl Named for CustomLinear {
    fn name(&self) -> &'static str {
        "custom-linear"
    }
}

impl Model for CustomLinear {
    fn description(&self) -> &'static str {
        "time-dependent linear generator with additive noise"
    }

    fn build(&self, params: &Value, setup: &ModelSetup) -> Result<BuiltModel> {
        let (rest, extra) = split_extras(params, &[("length", std::f64::consts::PI)])?;
        let (p, echo): (LinearParams, _) = parse(self.name(), &rest)?;
        let basis = build_basis(Domain::interval(extra[0]), BoundaryCondition::Dirichlet, setup.modes)?;
        Ok(BuiltModel {
            spec: custom_linear(&p, &basis, setup.template)?,
            params: merge(echo, &[("length", extra[0])]),
            observable: None,
            comparison: None,
        })
    }
}

pub struct CustomQuasilinear;

impl Named for CustomQuasilinear {
    fn name(&self) -> &'static str {
        "custom-quasilinear"
    }
}

impl Model for CustomQuasilinear {
    fn description(&self) -> &'static str {
        "diffusion scaled by the state's Z norm, with a constant force"
    }

    fn build(&self, params: &Value, setup: &ModelSetup) -> Result<BuiltModel> {
        let (rest, extra) = split_extras(params, &[("length", std::f64::consts::PI)])?;
        let (p, echo): (QuasilinearParams, _) = parse(self.name(), &rest)?;
        let basis = build_basis(Domain::interval(extra[0]), BoundaryCondition::Dirichlet, setup.modes)?;
        Ok(BuiltModel {
            spec: custom_quasilinear(&p, &basis, setup.template)?,
            params: merge(echo, &[("length", extra[0])]),
            observable: None,
            comparison: None,
        })
    }
}

pub fn models() -> Registry<dyn Model> {
    let entries: [Arc<dyn Model>; 6] = [
        Arc::new(Skt),
        Arc::new(Blowup(BlowupExample::Quadratic)),
        Arc::new(Blowup(BlowupExample::SignChange)),
        Arc::new(Blowup(BlowupExample::Degenerate)),
        Arc::new(CustomLinear),
        Arc::new(CustomQuasilinear),
    ];
    entries.into_iter().fold(Registry::new("model"), |r, e| r.with(e))
}
