//! Problem definitions: exact kernel and data inner products together with
//! unbiased stochastic surrogates.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::RngCore;

use crate::geometry::Domain;

pub mod fourier;
pub mod gmm;
pub mod relu;

pub use fourier::FourierModel;
pub use gmm::{GmmModel, MixingLaw};
pub use relu::ReluModel;

/// A realization of one of the model's random variables `U` or `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    /// Placeholder for a variable the model does not use.
    None,
    /// A data index.
    Index(usize),
    /// A point of the parameter space (offset or frequency).
    Vector(Vec<f64>),
}

impl Draw {
    pub fn index(&self) -> usize {
        match self {
            Draw::Index(i) => *i,
            other => panic!("expected an index draw, got {other:?}"),
        }
    }

    pub fn vector(&self) -> &[f64] {
        match self {
            Draw::Vector(v) => v,
            other => panic!("expected a vector draw, got {other:?}"),
        }
    }
}

/// Hypotheses a model fails to meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFlag {
    /// The essential infimum of `g` is not positive, so the per-particle weight
    /// radius is unavailable.
    GInfNotPositive,
    /// The feature map is only differentiable almost everywhere.
    GradientAlmostEverywhere,
}

impl fmt::Display for ModelFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFlag::GInfNotPositive => {
                write!(f, "hypothesis g_inf > 0 not met; weight radius unavailable")
            }
            ModelFlag::GradientAlmostEverywhere => {
                write!(f, "feature gradient defined almost everywhere only")
            }
        }
    }
}

/// Conservative uniform bounds over the domain and all draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBounds {
    pub g_inf: f64,
    pub g_sup: f64,
    pub h_sup: f64,
    pub grad_g_sup: f64,
    pub grad_h_sup: f64,
    /// Finite-difference proxy of the Lipschitz constant of `t -> phi_t`.
    pub kernel_lip: f64,
    /// Upper bound on `K(t, t)`.
    pub kernel_diag_sup: f64,
    pub flags: Vec<ModelFlag>,
}

impl ModelBounds {
    pub fn has_flag(&self, flag: ModelFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Spikes generating the observation, plus optional noise atoms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub spikes: Vec<(f64, Vec<f64>)>,
    pub noise: Vec<(f64, Vec<f64>)>,
}

/// Capability interface shared by all problem definitions.
///
/// Gradients are accumulated: `add_*` methods add `scale` times the gradient
/// into `out`.
pub trait FeatureModel: Send + Sync {
    fn dim(&self) -> usize;

    fn domain(&self) -> Domain;

    fn kernel(&self, t: &[f64], s: &[f64]) -> f64;

    fn add_grad_kernel_t(&self, t: &[f64], s: &[f64], scale: f64, out: &mut [f64]);

    fn inner_y(&self, t: &[f64]) -> f64;

    fn add_grad_inner_y(&self, t: &[f64], scale: f64, out: &mut [f64]);

    fn y_norm_sq(&self) -> f64;

    fn sample_u(&self, rng: &mut dyn RngCore) -> Draw;

    fn sample_v(&self, rng: &mut dyn RngCore) -> Draw;

    /// Draws `(U, V)` for one sample; independent unless a model couples them.
    fn sample_uv(&self, rng: &mut dyn RngCore) -> (Draw, Draw) {
        let u = self.sample_u(rng);
        let v = self.sample_v(rng);
        (u, v)
    }

    fn g(&self, t: &[f64], s: &[f64], u: &Draw) -> f64;

    fn add_grad_g_t(&self, t: &[f64], s: &[f64], u: &Draw, scale: f64, out: &mut [f64]);

    fn h(&self, t: &[f64], v: &Draw) -> f64;

    fn add_grad_h_t(&self, t: &[f64], v: &Draw, scale: f64, out: &mut [f64]);

    fn bounds(&self) -> ModelBounds;

    /// Scalar evaluations charged for one `kernel` call (and its gradient).
    fn kernel_cost(&self) -> u64 {
        1
    }

    /// Scalar evaluations charged for one `inner_y` call (and its gradient).
    fn inner_y_cost(&self) -> u64 {
        1
    }

    /// Maps a position back into the domain. Returns the factor by which the
    /// particle weight must be multiplied so that the represented feature is
    /// unchanged (1 unless the model is homogeneous).
    fn project(&self, t: &mut [f64]) -> f64 {
        self.domain().project(t);
        1.0
    }

    /// Whether the feature map is smooth on the cube of half-width `h` around `t`.
    fn smooth_near(&self, _t: &[f64], _h: f64) -> bool {
        true
    }

    fn grad_kernel_t(&self, t: &[f64], s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_grad_kernel_t(t, s, 1.0, &mut out);
        out
    }

    fn grad_inner_y(&self, t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_grad_inner_y(t, 1.0, &mut out);
        out
    }

    fn grad_g_t(&self, t: &[f64], s: &[f64], u: &Draw) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_grad_g_t(t, s, u, 1.0, &mut out);
        out
    }

    fn grad_h_t(&self, t: &[f64], v: &Draw) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_grad_h_t(t, v, 1.0, &mut out);
        out
    }
}

/// Wraps a model and tallies scalar feature evaluations.
pub struct CountingModel<'a> {
    inner: &'a dyn FeatureModel,
    count: AtomicU64,
}

impl<'a> CountingModel<'a> {
    pub fn new(inner: &'a dyn FeatureModel) -> Self {
        CountingModel {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    fn charge(&self, n: u64) {
        self.count.fetch_add(n, Ordering::Relaxed);
    }
}

impl FeatureModel for CountingModel<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn domain(&self) -> Domain {
        self.inner.domain()
    }

    fn kernel(&self, t: &[f64], s: &[f64]) -> f64 {
        self.charge(self.inner.kernel_cost());
        self.inner.kernel(t, s)
    }

    fn add_grad_kernel_t(&self, t: &[f64], s: &[f64], scale: f64, out: &mut [f64]) {
        self.charge(self.inner.kernel_cost());
        self.inner.add_grad_kernel_t(t, s, scale, out)
    }

    fn inner_y(&self, t: &[f64]) -> f64 {
        self.charge(self.inner.inner_y_cost());
        self.inner.inner_y(t)
    }

    fn add_grad_inner_y(&self, t: &[f64], scale: f64, out: &mut [f64]) {
        self.charge(self.inner.inner_y_cost());
        self.inner.add_grad_inner_y(t, scale, out)
    }

    fn y_norm_sq(&self) -> f64 {
        self.inner.y_norm_sq()
    }

    fn sample_u(&self, rng: &mut dyn RngCore) -> Draw {
        self.inner.sample_u(rng)
    }

    fn sample_v(&self, rng: &mut dyn RngCore) -> Draw {
        self.inner.sample_v(rng)
    }

    fn sample_uv(&self, rng: &mut dyn RngCore) -> (Draw, Draw) {
        self.inner.sample_uv(rng)
    }

    fn g(&self, t: &[f64], s: &[f64], u: &Draw) -> f64 {
        self.charge(1);
        self.inner.g(t, s, u)
    }

    fn add_grad_g_t(&self, t: &[f64], s: &[f64], u: &Draw, scale: f64, out: &mut [f64]) {
        self.charge(1);
        self.inner.add_grad_g_t(t, s, u, scale, out)
    }

    fn h(&self, t: &[f64], v: &Draw) -> f64 {
        self.charge(1);
        self.inner.h(t, v)
    }

    fn add_grad_h_t(&self, t: &[f64], v: &Draw, scale: f64, out: &mut [f64]) {
        self.charge(1);
        self.inner.add_grad_h_t(t, v, scale, out)
    }

    fn bounds(&self) -> ModelBounds {
        self.inner.bounds()
    }

    fn kernel_cost(&self) -> u64 {
        self.inner.kernel_cost()
    }

    fn inner_y_cost(&self) -> u64 {
        self.inner.inner_y_cost()
    }

    fn project(&self, t: &mut [f64]) -> f64 {
        self.inner.project(t)
    }

    fn smooth_near(&self, t: &[f64], h: f64) -> bool {
        self.inner.smooth_near(t, h)
    }
}
