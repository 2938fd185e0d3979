//! Exact and mini-batch evaluations of the differential `J'_nu` and of its
//! spatial gradient.
//!
//! For `nu = sum_j eps_j w_j delta_{t_j}`,
//! `J'_nu(t) = sum_j eps_j w_j K(t, t_j) - <phi_t, y> + lambda`.

use rand::RngCore;

use crate::error::Result;
use crate::measure::{ParticleMeasure, ParticleSampler};
use crate::model::{Draw, FeatureModel};

/// One realization `(T, U, V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub t_index: usize,
    pub u: Draw,
    pub v: Draw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub samples: Vec<NoiseSample>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draws `m` independent samples; `T` follows `nu / |nu|`.
pub fn draw_batch(
    model: &dyn FeatureModel,
    nu: &ParticleMeasure,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<Minibatch> {
    if m == 0 {
        return Err(crate::error::Error::invalid("batch", "batch size must be at least 1"));
    }
    let sampler = ParticleSampler::new(nu)?;
    let samples = (0..m)
        .map(|_| {
            let t_index = sampler.sample(rng);
            let (u, v) = model.sample_uv(rng);
            NoiseSample { t_index, u, v }
        })
        .collect();
    Ok(Minibatch { samples })
}

pub fn j_prime_exact(model: &dyn FeatureModel, nu: &ParticleMeasure, t: &[f64], lambda: f64) -> f64 {
    let fit: f64 = (0..nu.len())
        .map(|j| nu.signed_weight(j) * model.kernel(t, nu.position(j)))
        .sum();
    fit - model.inner_y(t) + lambda
}

pub fn grad_j_prime_exact(model: &dyn FeatureModel, nu: &ParticleMeasure, t: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    add_grad_j_prime_exact(model, nu, t, &mut out);
    out
}

pub(crate) fn add_grad_j_prime_exact(
    model: &dyn FeatureModel,
    nu: &ParticleMeasure,
    t: &[f64],
    out: &mut [f64],
) {
    for j in 0..nu.len() {
        model.add_grad_kernel_t(t, nu.position(j), nu.signed_weight(j), out);
    }
    model.add_grad_inner_y(t, -1.0, out);
}

pub fn j_prime_hat(
    model: &dyn FeatureModel,
    nu: &ParticleMeasure,
    t: &[f64],
    lambda: f64,
    batch: &Minibatch,
) -> f64 {
    let tv = nu.tv_norm();
    let m = batch.len() as f64;
    let sum: f64 = batch
        .samples
        .iter()
        .map(|z| {
            let s = nu.position(z.t_index);
            tv * nu.sign(z.t_index) * model.g(t, s, &z.u) - model.h(t, &z.v)
        })
        .sum();
    sum / m + lambda
}

pub fn d_hat(model: &dyn FeatureModel, nu: &ParticleMeasure, t: &[f64], batch: &Minibatch) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    add_d_hat(model, nu, t, batch, &mut out);
    out
}

pub(crate) fn add_d_hat(
    model: &dyn FeatureModel,
    nu: &ParticleMeasure,
    t: &[f64],
    batch: &Minibatch,
    out: &mut [f64],
) {
    let tv = nu.tv_norm();
    let inv_m = 1.0 / batch.len() as f64;
    for z in &batch.samples {
        let s = nu.position(z.t_index);
        model.add_grad_g_t(t, s, &z.u, inv_m * tv * nu.sign(z.t_index), out);
        model.add_grad_h_t(t, &z.v, -inv_m, out);
    }
}
