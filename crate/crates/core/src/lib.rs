//! Information theory over unnormalized measures.
//!
//! Probability vectors are a special case of a more general object: a finite
//! vector of non-negative weights with arbitrary total mass, read as the mean
//! values of independent counts. This crate implements the computations that
//! become available once normalization is dropped:
//!
//! - [`measure`]: finite-support measures, their algebra, and the
//!   codelength/Kraft-sum correspondence;
//! - [`divergence`]: the extended divergence
//!   `D(λ‖μ) = Σ λᵢ ln(λᵢ/μᵢ) − (λᵢ − μᵢ)` and general f-divergences with
//!   explicit boundary conventions;
//! - [`counts`]: exact truncated-grid distributions on `ℕ₀^k`, binomial
//!   thinning, convolution powers, and the thin-convolve experiments;
//! - [`gof`]: exact goodness-of-fit staircases for the signed log-likelihood
//!   statistic, classical vs. Poissonized sampling;
//! - [`projection`]: minimization of f-divergences over convex constraint
//!   sets with verified first-order certificates;
//! - [`altmin`]: cyclic projections onto mean-value constraints, their
//!   unnormalized simplification, and Gram-Schmidt acceleration;
//! - [`orthopoly`]: Charlier/Krawtchouk orthonormal polynomials and the
//!   quadratic projection-inequality scan;
//! - [`dutchbook`]: the arbitrage-or-measure dichotomy decided by linear
//!   programming with independently verified certificates.
//!
//! All numerics are generic over the scalar type through [`scalar::Scalar`]
//! (any `num_traits::Float` with the usual conversions); the `*64` aliases
//! below fix `f64`, which is what the command-line tools and the acceptance
//! tolerances use.

pub mod altmin;
pub mod counts;
pub mod divergence;
pub mod dutchbook;
mod error;
pub mod gof;
mod linalg;
pub mod measure;
pub mod orthopoly;
pub mod projection;
pub mod scalar;
mod simplex;
pub mod special;

pub use error::{Error, Result};

pub use divergence::{f_divergence, kl_extended, kl_poisson_product, ExtendedReal, FDivergenceSpec};
pub use measure::{CodelengthFn, KraftReport, Measure};

/// `f64` instantiations of the core types; the precision used by the CLI.
pub type Measure64 = measure::Measure<f64>;
pub type CodelengthFn64 = measure::CodelengthFn<f64>;
pub type ExtendedReal64 = divergence::ExtendedReal<f64>;
pub type FDivergenceSpec64 = divergence::FDivergenceSpec<f64>;
pub type CountDistribution64 = counts::CountDistribution<f64>;
pub type ConstraintSet64 = projection::ConstraintSet<f64>;
pub type ProjectionResult64 = projection::ProjectionResult<f64>;
pub type AltMinTrace64 = altmin::AltMinTrace<f64>;
pub type OrthoPoly64 = orthopoly::OrthoPoly<f64>;
pub type PayoffSystem64 = dutchbook::PayoffSystem<f64>;
pub type QQTable64 = gof::QQTable<f64>;

/// Single-precision aliases for the measure algebra; the heavier numerical
/// experiments are only meaningful at `f64` tolerances.
pub type Measure32 = measure::Measure<f32>;
pub type CountDistribution32 = counts::CountDistribution<f32>;
