//! Wiener paths, noise coefficients, Itô sums and regularity estimates.

pub mod holder;
pub mod ito;
pub mod noise;
pub mod wiener;

pub use holder::{holder_estimate, holder_estimators, DyadicMax, HolderEstimator, RegularityEstimate, Variogram};
pub use ito::{ito_integral, ito_integral_adapted, ItoIntegral, Prefix};
pub use noise::{
    hilbert_schmidt_norm, noise_profile, AdditiveNoise, CallbackNoise, NoiseConstants, NoiseOperator, TanhNoise,
    ZeroNoise,
};
pub use wiener::{sample_wiener, SeedLineage, WienerPath};
