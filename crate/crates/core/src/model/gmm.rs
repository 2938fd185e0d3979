//! Gaussian mixture deconvolution through a kernel mean embedding.
//!
//! Samples `x_i` come from `sigma * mu` with a known mixing law `sigma`. The
//! features are `phi_t = gamma_m * sigma(. - t)` in the RKHS of the Gaussian
//! `gamma_m` of standard deviation `m`, so that
//! `K(t, t') = (gamma_m * sigma * sigma)(t - t')` and
//! `<phi_t, y> = (1/N) sum_i ktilde(t - x_i)` with `ktilde = gamma_m * sigma`.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::{Draw, FeatureModel, GroundTruth, ModelBounds, ModelFlag};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::special::{normal_pdf, normal_pdf_deriv, std_normal_mass, std_normal_pdf};

/// Half-width of the truncated mixing law, in units of `s`.
pub const TRUNCATION: f64 = 3.0;

const QUAD_NODES: usize = 64;

/// Per-coordinate law of the mixing density `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingLaw {
    Gaussian,
    /// Gaussian restricted to `[-3s, 3s]` and renormalized.
    Truncated,
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    dim: usize,
    radius: f64,
    m: f64,
    s: f64,
    law: MixingLaw,
    data: Vec<f64>,
    n: usize,
    y_norm_sq: f64,
    // sigma-weighted Gauss-Legendre rule on [-3s, 3s]
    quad: Vec<(f64, f64)>,
}

impl GmmModel {
    /// `data` is row-major with `dim` columns.
    pub fn new(data: Vec<f64>, dim: usize, m: f64, s: f64, radius: f64, law: MixingLaw) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::invalid("data", "at least one sample is required"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("data", "samples must be finite"));
        }
        for (name, v) in [("m", m), ("s", s), ("radius", radius)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        let n = data.len() / dim;
        let quad = match law {
            MixingLaw::Gaussian => Vec::new(),
            MixingLaw::Truncated => truncated_rule(s),
        };
        let mut model = GmmModel {
            dim,
            radius,
            m,
            s,
            law,
            data,
            n,
            y_norm_sq: 0.0,
            quad,
        };
        model.y_norm_sq = model.compute_y_norm_sq();
        Ok(model)
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn bandwidth(&self) -> f64 {
        self.m
    }

    pub fn mixing_std(&self) -> f64 {
        self.s
    }

    pub fn law(&self) -> MixingLaw {
        self.law
    }

    fn compute_y_norm_sq(&self) -> f64 {
        let var = self.m * self.m;
        let gamma = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| normal_pdf(x - y, var)).product()
        };
        let mut off = 0.0;
        for i in 0..self.n {
            let xi = self.sample(i);
            for j in (i + 1)..self.n {
                off += gamma(xi, self.sample(j));
            }
        }
        let diag = self.n as f64 * normal_pdf(0.0, var).powi(self.dim as i32);
        (diag + 2.0 * off) / (self.n as f64 * self.n as f64)
    }

    /// One-dimensional `ktilde = gamma_m * sigma`.
    pub fn ktilde_1d(&self, x: f64) -> f64 {
        let (m, s) = (self.m, self.s);
        match self.law {
            MixingLaw::Gaussian => normal_pdf(x, m * m + s * s),
            MixingLaw::Truncated => {
                let (v, mu, tau, c) = self.truncated_params(x);
                normal_pdf(x, v) * std_normal_mass((c - mu) / tau, (-c - mu) / tau) / truncated_mass()
            }
        }
    }

    pub fn ktilde_1d_deriv(&self, x: f64) -> f64 {
        let (m, s) = (self.m, self.s);
        match self.law {
            MixingLaw::Gaussian => normal_pdf_deriv(x, m * m + s * s),
            MixingLaw::Truncated => {
                let (v, mu, tau, c) = self.truncated_params(x);
                let (a, b) = ((c - mu) / tau, (-c - mu) / tau);
                let mass = std_normal_mass(a, b);
                let dmass = s * s / (v * tau) * (std_normal_pdf(b) - std_normal_pdf(a));
                (normal_pdf_deriv(x, v) * mass + normal_pdf(x, v) * dmass) / truncated_mass()
            }
        }
    }

    // product of N(x - u; 0, m^2) and N(u; 0, s^2) is N(x; 0, v) N(u; mu, tau^2)
    fn truncated_params(&self, x: f64) -> (f64, f64, f64, f64) {
        let (m, s) = (self.m, self.s);
        let v = m * m + s * s;
        (v, x * s * s / v, m * s / v.sqrt(), TRUNCATION * s)
    }

    /// One-dimensional kernel profile `gamma_m * sigma * sigma`.
    pub fn kernel_1d(&self, x: f64) -> f64 {
        match self.law {
            MixingLaw::Gaussian => normal_pdf(x, self.m * self.m + 2.0 * self.s * self.s),
            // evaluate at |x| so the quadrature sum is exactly even
            MixingLaw::Truncated => self.quad.iter().map(|(u, w)| w * self.ktilde_1d(x.abs() - u)).sum(),
        }
    }

    pub fn kernel_1d_deriv(&self, x: f64) -> f64 {
        match self.law {
            MixingLaw::Gaussian => normal_pdf_deriv(x, self.m * self.m + 2.0 * self.s * self.s),
            MixingLaw::Truncated => {
                let d: f64 = self
                    .quad
                    .iter()
                    .map(|(u, w)| w * self.ktilde_1d_deriv(x.abs() - u))
                    .sum();
                if x < 0.0 {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// `ktilde(t - s)` over all coordinates.
    pub fn ktilde(&self, t: &[f64], s: &[f64]) -> f64 {
        t.iter().zip(s).map(|(a, b)| self.ktilde_1d(a - b)).product()
    }

    fn add_grad_ktilde(&self, t: &[f64], s: &[f64], scale: f64, out: &mut [f64]) {
        add_product_grad(t, s, scale, out, |x| self.ktilde_1d(x), |x| self.ktilde_1d_deriv(x));
    }

    fn sample_offset(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        sample_mixing(self.s, self.law, self.dim, rng)
    }
}

// Gauss-Legendre nodes on [-3s, 3s] with weights folded into the truncated density.
fn truncated_rule(s: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(QUAD_NODES).expect("nonzero"));
    let half = TRUNCATION * s;
    rule.as_node_weight_pairs()
        .iter()
        .map(|(x, w)| {
            let u = half * x;
            (u, half * w * normal_pdf(u, s * s) / truncated_mass())
        })
        .collect()
}

fn truncated_mass() -> f64 {
    std_normal_mass(TRUNCATION, -TRUNCATION)
}

/// Adds `scale * grad_t prod_i f(t_i - s_i)` into `out`.
fn add_product_grad(
    t: &[f64],
    s: &[f64],
    scale: f64,
    out: &mut [f64],
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) {
    if t.len() == 1 {
        out[0] += scale * df(t[0] - s[0]);
        return;
    }
    for i in 0..t.len() {
        let mut g = df(t[i] - s[i]);
        for j in 0..t.len() {
            if j != i {
                g *= f(t[j] - s[j]);
            }
        }
        out[i] += scale * g;
    }
}

/// One draw from the mixing law in `dim` coordinates.
pub fn sample_mixing(s: f64, law: MixingLaw, dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let normal = Normal::new(0.0, s).expect("positive standard deviation");
    (0..dim)
        .map(|_| loop {
            let u: f64 = normal.sample(rng);
            if law == MixingLaw::Gaussian || u.abs() <= TRUNCATION * s {
                break u;
            }
        })
        .collect()
}

/// Draws `n` samples of `sigma * mu` for a spike train `mu`, row-major.
pub fn sample_mixture<R: Rng + ?Sized>(
    truth: &GroundTruth,
    s: f64,
    law: MixingLaw,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("n", "at least one sample is required"));
    }
    let dim = truth
        .spikes
        .first()
        .map(|(_, t)| t.len())
        .ok_or_else(|| Error::invalid("spikes", "ground truth has no spike"))?;
    let weights: Vec<f64> = truth.spikes.iter().map(|(w, _)| *w).collect();
    let pick = rand::distr::weighted::WeightedIndex::new(&weights)
        .map_err(|e| Error::invalid("spikes", e.to_string()))?;
    let mut out = Vec::with_capacity(n * dim);
    let mut rng = rng;
    for _ in 0..n {
        let j = pick.sample(&mut rng);
        let noise = sample_mixing(s, law, dim, &mut rng);
        out.extend(truth.spikes[j].1.iter().zip(&noise).map(|(a, b)| a + b));
    }
    Ok(out)
}

impl FeatureModel for GmmModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> Domain {
        Domain::Ball { radius: self.radius }
    }

    fn kernel(&self, t: &[f64], s: &[f64]) -> f64 {
        t.iter().zip(s).map(|(a, b)| self.kernel_1d(a - b)).product()
    }

    fn add_grad_kernel_t(&self, t: &[f64], s: &[f64], scale: f64, out: &mut [f64]) {
        add_product_grad(t, s, scale, out, |x| self.kernel_1d(x), |x| self.kernel_1d_deriv(x));
    }

    fn inner_y(&self, t: &[f64]) -> f64 {
        self.data
            .chunks_exact(self.dim)
            .map(|x| self.ktilde(t, x))
            .sum::<f64>()
            / self.n as f64
    }

    fn add_grad_inner_y(&self, t: &[f64], scale: f64, out: &mut [f64]) {
        let scale = scale / self.n as f64;
        for x in self.data.chunks_exact(self.dim) {
            self.add_grad_ktilde(t, x, scale, out);
        }
    }

    fn y_norm_sq(&self) -> f64 {
        self.y_norm_sq
    }

    fn sample_u(&self, rng: &mut dyn RngCore) -> Draw {
        Draw::Vector(self.sample_offset(rng))
    }

    fn sample_v(&self, rng: &mut dyn RngCore) -> Draw {
        Draw::Index(rng.random_range(0..self.n))
    }

    fn g(&self, t: &[f64], s: &[f64], u: &Draw) -> f64 {
        let u = u.vector();
        t.iter()
            .zip(s)
            .zip(u)
            .map(|((a, b), c)| self.ktilde_1d(a - b - c))
            .product()
    }

    fn add_grad_g_t(&self, t: &[f64], s: &[f64], u: &Draw, scale: f64, out: &mut [f64]) {
        let shifted: Vec<f64> = s.iter().zip(u.vector()).map(|(b, c)| b + c).collect();
        self.add_grad_ktilde(t, &shifted, scale, out);
    }

    fn h(&self, t: &[f64], v: &Draw) -> f64 {
        self.ktilde(t, self.sample(v.index()))
    }

    fn add_grad_h_t(&self, t: &[f64], v: &Draw, scale: f64, out: &mut [f64]) {
        self.add_grad_ktilde(t, self.sample(v.index()), scale, out);
    }

    fn bounds(&self) -> ModelBounds {
        let d = self.dim as f64;
        let dim = self.dim as i32;
        let peak_1d = self.ktilde_1d(0.0);
        let peak = peak_1d.powi(dim);
        let mut flags = Vec::new();
        let (g_inf, slope_1d) = match self.law {
            MixingLaw::Gaussian => {
                flags.push(ModelFlag::GInfNotPositive);
                let v = self.m * self.m + self.s * self.s;
                (0.0, (-0.5f64).exp() / (v * (2.0 * std::f64::consts::PI).sqrt()))
            }
            MixingLaw::Truncated => {
                let reach = 2.0 * self.radius + TRUNCATION * self.s;
                let m2 = self.m * self.m;
                (
                    self.ktilde_1d(reach).powi(dim),
                    (-0.5f64).exp() / (m2 * (2.0 * std::f64::consts::PI).sqrt()),
                )
            }
        };
        let grad_sup = d.sqrt() * slope_1d * peak_1d.powi(dim - 1);
        let k0 = self.kernel_1d(0.0).powi(dim);
        let eps = 1e-3;
        let k_eps = self.kernel_1d(eps) * self.kernel_1d(0.0).powi(dim - 1);
        ModelBounds {
            g_inf,
            g_sup: peak,
            h_sup: peak,
            grad_g_sup: grad_sup,
            grad_h_sup: grad_sup,
            kernel_lip: (2.0 * (k0 - k_eps)).max(0.0).sqrt() / eps,
            kernel_diag_sup: k0,
            flags,
        }
    }

    fn kernel_cost(&self) -> u64 {
        match self.law {
            MixingLaw::Gaussian => 1,
            MixingLaw::Truncated => self.quad.len() as u64,
        }
    }

    fn inner_y_cost(&self) -> u64 {
        self.n as u64
    }
}
