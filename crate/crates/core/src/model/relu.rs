//! Two-layer ReLU regression: a particle `(w, t)` is a hidden unit
//! `x -> w relu(<t, x>)`.
//!
//! The Hilbert space is `R^N` with `<a, b> = (1/N) sum_i a_i b_i`, so
//! `phi_t = (relu(<t, x_i>))_i`. Both random variables are the same uniform
//! data index.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{Draw, FeatureModel, GroundTruth, ModelBounds, ModelFlag};
use crate::error::{Error, Result};
use crate::geometry::{dot, norm, Domain};

#[derive(Debug, Clone)]
pub struct ReluModel {
    dim: usize,
    radius: f64,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    n: usize,
    y_norm_sq: f64,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl ReluModel {
    /// `inputs` is row-major with `dim` columns, one row per target.
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if targets.is_empty() {
            return Err(Error::invalid("data", "at least one sample is required"));
        }
        if inputs.len() != targets.len() * dim {
            return Err(Error::ParticleCountMismatch {
                expected: targets.len() * dim,
                got: inputs.len(),
            });
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
        }
        let n = targets.len();
        let y_norm_sq = targets.iter().map(|y| y * y).sum::<f64>() / n as f64;
        Ok(ReluModel {
            dim,
            radius,
            inputs,
            targets,
            n,
            y_norm_sq,
        })
    }

    /// Gaussian inputs and a teacher network `y = sum_j w_j relu(<t_j, x>)` plus
    /// Gaussian noise of standard deviation `noise`.
    pub fn synthetic<R: Rng + ?Sized>(
        teacher: &GroundTruth,
        n: usize,
        noise: f64,
        radius: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = teacher
            .spikes
            .first()
            .map(|(_, t)| t.len())
            .ok_or_else(|| Error::invalid("spikes", "teacher has no unit"))?;
        let mut inputs = Vec::with_capacity(n * dim);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let clean: f64 = teacher.spikes.iter().map(|(w, t)| w * relu(dot(t, &x))).sum();
            let e: f64 = StandardNormal.sample(rng);
            targets.push(clean + noise * e);
            inputs.extend(x);
        }
        Self::new(inputs, targets, dim, radius)
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }
}

impl FeatureModel for ReluModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> Domain {
        Domain::Ball { radius: self.radius }
    }

    fn kernel(&self, t: &[f64], s: &[f64]) -> f64 {
        self.rows()
            .map(|x| relu(dot(t, x)) * relu(dot(s, x)))
            .sum::<f64>()
            / self.n as f64
    }

    fn add_grad_kernel_t(&self, t: &[f64], s: &[f64], scale: f64, out: &mut [f64]) {
        let scale = scale / self.n as f64;
        for x in self.rows() {
            if dot(t, x) > 0.0 {
                let c = scale * relu(dot(s, x));
                out.iter_mut().zip(x).for_each(|(o, xi)| *o += c * xi);
            }
        }
    }

    fn inner_y(&self, t: &[f64]) -> f64 {
        self.rows()
            .zip(&self.targets)
            .map(|(x, y)| y * relu(dot(t, x)))
            .sum::<f64>()
            / self.n as f64
    }

    fn add_grad_inner_y(&self, t: &[f64], scale: f64, out: &mut [f64]) {
        let scale = scale / self.n as f64;
        for (x, y) in self.rows().zip(&self.targets) {
            if dot(t, x) > 0.0 {
                out.iter_mut().zip(x).for_each(|(o, xi)| *o += scale * y * xi);
            }
        }
    }

    fn y_norm_sq(&self) -> f64 {
        self.y_norm_sq
    }

    fn sample_u(&self, rng: &mut dyn RngCore) -> Draw {
        Draw::Index(rng.random_range(0..self.n))
    }

    fn sample_v(&self, rng: &mut dyn RngCore) -> Draw {
        self.sample_u(rng)
    }

    fn sample_uv(&self, rng: &mut dyn RngCore) -> (Draw, Draw) {
        let u = self.sample_u(rng);
        (u.clone(), u)
    }

    fn g(&self, t: &[f64], s: &[f64], u: &Draw) -> f64 {
        let x = self.input(u.index());
        relu(dot(t, x)) * relu(dot(s, x))
    }

    fn add_grad_g_t(&self, t: &[f64], s: &[f64], u: &Draw, scale: f64, out: &mut [f64]) {
        let x = self.input(u.index());
        if dot(t, x) > 0.0 {
            let c = scale * relu(dot(s, x));
            out.iter_mut().zip(x).for_each(|(o, xi)| *o += c * xi);
        }
    }

    fn h(&self, t: &[f64], v: &Draw) -> f64 {
        let i = v.index();
        self.targets[i] * relu(dot(t, self.input(i)))
    }

    fn add_grad_h_t(&self, t: &[f64], v: &Draw, scale: f64, out: &mut [f64]) {
        let i = v.index();
        let x = self.input(i);
        if dot(t, x) > 0.0 {
            let c = scale * self.targets[i];
            out.iter_mut().zip(x).for_each(|(o, xi)| *o += c * xi);
        }
    }

    fn bounds(&self) -> ModelBounds {
        let r = self.radius;
        let max_x = self.rows().map(norm).fold(0.0, f64::max);
        let max_yx = self
            .rows()
            .zip(&self.targets)
            .map(|(x, y)| y.abs() * norm(x))
            .fold(0.0, f64::max);
        let mean_x2 = self.rows().map(|x| dot(x, x)).sum::<f64>() / self.n as f64;
        ModelBounds {
            g_inf: 0.0,
            g_sup: (r * max_x).powi(2),
            h_sup: r * max_yx,
            grad_g_sup: r * max_x * max_x,
            grad_h_sup: max_yx,
            kernel_lip: mean_x2.sqrt(),
            kernel_diag_sup: r * r * mean_x2,
            flags: vec![ModelFlag::GInfNotPositive, ModelFlag::GradientAlmostEverywhere],
        }
    }

    fn kernel_cost(&self) -> u64 {
        self.n as u64
    }

    fn inner_y_cost(&self) -> u64 {
        self.n as u64
    }

    /// Radial projection onto the ball; the weight absorbs the lost norm since
    /// `w relu(<t, x>) = (w |t| / R) relu(<R t / |t|, x>)`.
    fn project(&self, t: &mut [f64]) -> f64 {
        let n = norm(t);
        if n > self.radius {
            let scale = self.radius / n;
            t.iter_mut().for_each(|v| *v *= scale);
            n / self.radius
        } else {
            1.0
        }
    }

    fn smooth_near(&self, t: &[f64], h: f64) -> bool {
        self.rows().all(|x| {
            let reach = h * x.iter().map(|v| v.abs()).sum::<f64>();
            dot(t, x).abs() > reach
        })
    }
}
