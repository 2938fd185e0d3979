//! Conic particle gradient descent for sparse optimization over nonnegative
//! measures, with mini-batch random-feature estimates of the differential.
//!
//! The problem is `min_nu 1/2 |y - Phi nu|^2 + lambda |nu|_TV` over
//! nonnegative measures, with `nu` represented as a weighted particle cloud.
//! A [`model::FeatureModel`] supplies the kernel, the data inner products and
//! unbiased stochastic surrogates for them; [`optimizer::run`] drives the
//! iteration and [`diagnostics`] evaluates and certifies the result.

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod gradient;
pub mod measure;
pub mod model;
pub mod optimizer;
mod special;

pub use error::{Error, Result};
pub use geometry::{Domain, Point};
pub use measure::ParticleMeasure;
pub use model::FeatureModel;
