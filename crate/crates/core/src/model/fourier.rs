//! Sparse deconvolution on the torus `[-pi, pi)^d` with the Dirichlet kernel.
//!
//! The spectral measure is uniform on the integer frequencies
//! `{-fc, ..., fc}^d`, so `K(t, t') = prod_i D(t_i - t'_i)` with
//! `D(x) = (1 + 2 sum_{u=1}^{fc} cos(u x)) / (2 fc + 1)`. The observation is a
//! finite combination of features, hence `h` is deterministic.

use rand::{Rng, RngCore};

use super::{Draw, FeatureModel, GroundTruth, ModelBounds};
use crate::error::{Error, Result};
use crate::geometry::{dot, wrap_angle, Domain};

#[derive(Debug, Clone)]
pub struct FourierModel {
    dim: usize,
    fc: u32,
    // atoms (coefficient, position) of y, truth followed by noise
    atoms: Vec<(f64, Vec<f64>)>,
    y_norm_sq: f64,
    truth: GroundTruth,
}

impl FourierModel {
    pub fn new(dim: usize, fc: u32, truth: GroundTruth) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        let mut atoms = Vec::new();
        for (w, t) in truth.spikes.iter().chain(&truth.noise) {
            if t.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.len(),
                });
            }
            if !w.is_finite() || t.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("atoms", "atoms must be finite"));
            }
            atoms.push((*w, t.iter().map(|x| wrap_angle(*x)).collect::<Vec<_>>()));
        }
        let mut model = FourierModel {
            dim,
            fc,
            atoms,
            y_norm_sq: 0.0,
            truth,
        };
        let mut acc = 0.0;
        for (a, s) in &model.atoms {
            for (b, r) in &model.atoms {
                acc += a * b * model.kernel(s, r);
            }
        }
        model.y_norm_sq = acc;
        Ok(model)
    }

    pub fn cutoff(&self) -> u32 {
        self.fc
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// The Dirichlet profile `D`.
    pub fn dirichlet(&self, x: f64) -> f64 {
        let sum: f64 = (1..=self.fc).map(|u| (u as f64 * x).cos()).sum();
        (1.0 + 2.0 * sum) / (2 * self.fc + 1) as f64
    }

    pub fn dirichlet_deriv(&self, x: f64) -> f64 {
        let sum: f64 = (1..=self.fc).map(|u| u as f64 * (u as f64 * x).sin()).sum();
        -2.0 * sum / (2 * self.fc + 1) as f64
    }

    fn add_grad_profile(&self, t: &[f64], s: &[f64], scale: f64, out: &mut [f64]) {
        for i in 0..t.len() {
            let mut g = self.dirichlet_deriv(t[i] - s[i]);
            for j in 0..t.len() {
                if j != i {
                    g *= self.dirichlet(t[j] - s[j]);
                }
            }
            out[i] += scale * g;
        }
    }
}

impl FeatureModel for FourierModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> Domain {
        Domain::Torus
    }

    fn kernel(&self, t: &[f64], s: &[f64]) -> f64 {
        t.iter().zip(s).map(|(a, b)| self.dirichlet(a - b)).product()
    }

    fn add_grad_kernel_t(&self, t: &[f64], s: &[f64], scale: f64, out: &mut [f64]) {
        self.add_grad_profile(t, s, scale, out);
    }

    fn inner_y(&self, t: &[f64]) -> f64 {
        self.atoms.iter().map(|(a, s)| a * self.kernel(t, s)).sum()
    }

    fn add_grad_inner_y(&self, t: &[f64], scale: f64, out: &mut [f64]) {
        for (a, s) in &self.atoms {
            self.add_grad_profile(t, s, scale * a, out);
        }
    }

    fn y_norm_sq(&self) -> f64 {
        self.y_norm_sq
    }

    fn sample_u(&self, rng: &mut dyn RngCore) -> Draw {
        let fc = self.fc as i64;
        Draw::Vector(
            (0..self.dim)
                .map(|_| rng.random_range(-fc..=fc) as f64)
                .collect(),
        )
    }

    fn sample_v(&self, _rng: &mut dyn RngCore) -> Draw {
        Draw::None
    }

    fn g(&self, t: &[f64], s: &[f64], u: &Draw) -> f64 {
        let diff: f64 = u
            .vector()
            .iter()
            .zip(t.iter().zip(s))
            .map(|(w, (a, b))| w * (a - b))
            .sum();
        diff.cos()
    }

    fn add_grad_g_t(&self, t: &[f64], s: &[f64], u: &Draw, scale: f64, out: &mut [f64]) {
        let u = u.vector();
        let phase = dot(u, t) - dot(u, s);
        let sine = phase.sin();
        for (o, w) in out.iter_mut().zip(u) {
            *o -= scale * w * sine;
        }
    }

    fn h(&self, t: &[f64], _v: &Draw) -> f64 {
        self.inner_y(t)
    }

    fn add_grad_h_t(&self, t: &[f64], _v: &Draw, scale: f64, out: &mut [f64]) {
        self.add_grad_inner_y(t, scale, out);
    }

    fn bounds(&self) -> ModelBounds {
        let d = self.dim as f64;
        let fc = self.fc as f64;
        let mass: f64 = self.atoms.iter().map(|(a, _)| a.abs()).sum();
        ModelBounds {
            g_inf: if self.fc == 0 { 1.0 } else { -1.0 },
            g_sup: 1.0,
            h_sup: mass,
            grad_g_sup: fc * d.sqrt(),
            grad_h_sup: mass * (d * fc * (fc + 1.0) / 3.0).sqrt(),
            // |phi_t - phi_s|^2 = 2 - 2K(t - s) <= E|U|^2 |t - s|^2
            kernel_lip: (d * fc * (fc + 1.0) / 3.0).sqrt(),
            kernel_diag_sup: 1.0,
            flags: Vec::new(),
        }
    }

    fn inner_y_cost(&self) -> u64 {
        self.atoms.len() as u64
    }
}
