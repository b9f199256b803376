//! Pathwise mild solutions: the linear formula, Picard iteration, stopping
//! times and maximal continuation.

pub mod continuation;
pub mod ibp;
pub mod lifetime;
pub mod linear;
pub mod picard;
pub mod problem;
pub mod trajectory;

pub use continuation::{maximal_continuation, ContinuationOptions, ContinuationOutcome, TauInfinity, UniquenessCheck};
pub use ibp::{ibp_identity_audit, IbpReport};
pub use lifetime::{lifetime_probability, LifetimePoint, LifetimeReport, LifetimeRequest};
pub use linear::{linear_pathwise_mild, mild_states, mild_terms, LinearOptions, MildRoute, MildTerms};
pub use picard::{
    holder_seminorm, picard_solve, DegeneracyCertificate, PicardDiagnostics, PicardOptions, PicardOutcome,
    PicardStatus, StoppingRecord, WindowReport,
};
pub use problem::{
    ConstantGenerator, Dependence, DriftMap, Exponents, FnDrift, FnGenerator, GeneratorMap, LocalConstants,
    ProblemSpec, Radii, ZeroDrift,
};
pub use trajectory::Trajectory;
