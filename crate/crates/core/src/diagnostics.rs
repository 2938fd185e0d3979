//! Objective values, first-order certificates, finite-difference checks and a
//! grid-restricted reference solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gradient::{grad_j_prime_exact, j_prime_exact};
use crate::measure::{grid_for_domain, ParticleMeasure};
use crate::model::{FeatureModel, ModelBounds};

/// Telemetry for one recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub objective: f64,
    pub tv: f64,
    pub local_j2: f64,
    pub local_g2: f64,
    pub evals: u64,
    pub wall_ns: u128,
}

/// `J(nu) = 1/2 |y - Phi nu|^2 + lambda |nu|_TV`, expanded through the kernel.
pub fn objective(model: &dyn FeatureModel, nu: &ParticleMeasure, lambda: f64) -> f64 {
    let p = nu.len();
    let mut linear = 0.0;
    let mut quad = 0.0;
    for i in 0..p {
        let ti = nu.position(i);
        let wi = nu.signed_weight(i);
        linear += nu.weight(i) * lambda - wi * model.inner_y(ti);
        quad += wi * wi * model.kernel(ti, ti);
        for j in (i + 1)..p {
            quad += 2.0 * wi * nu.signed_weight(j) * model.kernel(ti, nu.position(j));
        }
    }
    0.5 * model.y_norm_sq() + linear + 0.5 * quad
}

/// Derivative of the objective in the weight of particle `j`.
fn weight_derivative(nu: &ParticleMeasure, j: usize, j_prime: f64, lambda: f64) -> f64 {
    nu.sign(j) * (j_prime - lambda) + lambda
}

/// `(sum_j w_j J'(t_j)^2, sum_j w_j |grad J'(t_j)|^2)`.
pub fn local_sq_norms(model: &dyn FeatureModel, nu: &ParticleMeasure, lambda: f64) -> (f64, f64) {
    let mut j2 = 0.0;
    let mut g2 = 0.0;
    for j in 0..nu.len() {
        let t = nu.position(j);
        let jp = weight_derivative(nu, j, j_prime_exact(model, nu, t, lambda), lambda);
        let grad = grad_j_prime_exact(model, nu, t);
        j2 += nu.weight(j) * jp * jp;
        g2 += nu.weight(j) * grad.iter().map(|v| v * v).sum::<f64>();
    }
    (j2, g2)
}

/// Uniform bounds on the differential: `|J'| <= C0 (|nu| + 1)`, the stochastic
/// estimate is bounded by `C1 (|nu| + 1)`, and `C2 = C0 + C1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentialBounds {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn differential_bounds(bounds: &ModelBounds, y_norm_sq: f64, lambda: f64) -> DifferentialBounds {
    let k0 = bounds.kernel_diag_sup;
    let c0 = (lambda + k0.sqrt() * y_norm_sq.max(0.0).sqrt()).max(k0);
    let c1 = bounds.g_sup.max(bounds.h_sup + lambda);
    DifferentialBounds { c0, c1, c2: c0 + c1 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub grid_min: f64,
    pub support_max_abs: f64,
    pub grid_step: f64,
}

impl KktReport {
    pub fn certified(&self, tol: f64) -> bool {
        self.grid_min >= -tol && self.support_max_abs <= tol
    }
}

pub const DEFAULT_MASS_THRESHOLD: f64 = 1e-6;

pub fn kkt_certificate(
    model: &dyn FeatureModel,
    nu: &ParticleMeasure,
    lambda: f64,
    grid_step: f64,
    mass_threshold: f64,
) -> Result<KktReport> {
    let grid = grid_for_domain(model.domain(), model.dim(), grid_step, 1.0)?;
    let grid_min = grid
        .iter()
        .map(|(_, t)| j_prime_exact(model, nu, t, lambda))
        .fold(f64::INFINITY, f64::min);
    let cut = mass_threshold * nu.tv_norm();
    let support_max_abs = (0..nu.len())
        .filter(|&j| nu.weight(j) > cut)
        .map(|j| weight_derivative(nu, j, j_prime_exact(model, nu, nu.position(j), lambda), lambda).abs())
        .fold(0.0, f64::max);
    Ok(KktReport {
        grid_min,
        support_max_abs,
        grid_step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdCheck {
    Checked(f64),
    /// The feature map is not smooth around the point.
    Skipped,
}

/// Largest relative discrepancy between central differences of `J'` and its
/// analytic gradient.
pub fn finite_diff_check(model: &dyn FeatureModel, nu: &ParticleMeasure, t: &[f64], h: f64) -> FdCheck {
    if !model.smooth_near(t, h) {
        return FdCheck::Skipped;
    }
    let grad = grad_j_prime_exact(model, nu, t);
    let mut worst: f64 = 0.0;
    let mut probe = t.to_vec();
    for i in 0..t.len() {
        probe[i] = t[i] + h;
        let up = j_prime_exact(model, nu, &probe, 0.0);
        probe[i] = t[i] - h;
        let down = j_prime_exact(model, nu, &probe, 0.0);
        probe[i] = t[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / (1.0 + grad[i].abs()));
    }
    FdCheck::Checked(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    /// Lawson-Hanson active set on the grid quadratic program.
    ActiveSet,
    /// Projected gradient with step `1/L`, `L` from power iteration.
    ProximalGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub j_star: f64,
    pub measure: ParticleMeasure,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nonnegative quadratic program `min 1/2 w'Kw - c'w, w >= 0` on a grid.
struct GridProblem {
    gram: DMatrix<f64>,
    c: DVector<f64>,
}

impl GridProblem {
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.gram * w - &self.c
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.gram * w)) - self.c.dot(w)
    }

    // max(-min grad, max |grad| on the support)
    fn residual(&self, w: &DVector<f64>) -> f64 {
        let grad = self.gradient(w);
        let mut r: f64 = 0.0;
        for (i, g) in grad.iter().enumerate() {
            r = r.max(-g);
            if w[i] > 0.0 {
                r = r.max(g.abs());
            }
        }
        r
    }
}

/// Solves the objective restricted to measures supported on the lattice of
/// step `grid_step`. Returns the best iterate with `converged = false` when the
/// KKT residual does not reach `tol` within `max_iter` iterations.
pub fn oracle_grid_blasso(
    model: &dyn FeatureModel,
    lambda: f64,
    grid_step: f64,
    tol: f64,
    max_iter: usize,
    method: OracleMethod,
) -> Result<OracleSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be positive, got {tol}")));
    }
    let grid = grid_for_domain(model.domain(), model.dim(), grid_step, 0.0)?;
    let n = grid.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = model.kernel(grid.position(i), grid.position(j));
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    let c = DVector::from_iterator(n, (0..n).map(|i| model.inner_y(grid.position(i)) - lambda));
    let problem = GridProblem { gram, c };
    let (w, iterations) = match method {
        OracleMethod::ActiveSet => active_set(&problem, tol, max_iter),
        OracleMethod::ProximalGradient => proximal_gradient(&problem, tol, max_iter),
    };
    let kkt_residual = problem.residual(&w);
    let measure = grid.with_state(w.iter().copied().collect(), grid.positions().to_vec());
    Ok(OracleSolution {
        j_star: 0.5 * model.y_norm_sq() + problem.value(&w),
        measure,
        kkt_residual,
        iterations,
        converged: kkt_residual <= tol,
    })
}

fn solve_restricted(problem: &GridProblem, set: &[usize]) -> DVector<f64> {
    let k = set.len();
    let sub = DMatrix::from_fn(k, k, |a, b| problem.gram[(set[a], set[b])]);
    let rhs = DVector::from_iterator(k, set.iter().map(|&i| problem.c[i]));
    if let Some(chol) = sub.clone().cholesky() {
        let z = chol.solve(&rhs);
        if z.iter().all(|v| v.is_finite()) {
            return z;
        }
    }
    sub.pseudo_inverse(1e-14)
        .map(|pinv| pinv * &rhs)
        .unwrap_or_else(|_| DVector::zeros(k))
}

fn active_set(problem: &GridProblem, tol: f64, max_iter: usize) -> (DVector<f64>, usize) {
    let n = problem.c.len();
    let mut w = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let mut best = (f64::INFINITY, w.clone());
    let mut polished = false;
    for iter in 1..=max_iter {
        let residual = problem.residual(&w);
        if residual < best.0 {
            best = (residual, w.clone());
        }
        if residual <= tol {
            return (w, iter);
        }
        let grad = problem.gradient(&w);
        let entering = (0..n)
            .filter(|i| !passive.contains(i))
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        match entering {
            Some(i) if grad[i] < -tol => {
                passive.push(i);
                polished = false;
            }
            // the violation sits on the support; re-solve once, then give up
            _ if polished => return (best.1, iter),
            _ => polished = true,
        }
        for _ in 0..=n {
            let z = solve_restricted(problem, &passive);
            if z.iter().all(|v| *v > 0.0) {
                w.fill(0.0);
                for (&i, v) in passive.iter().zip(z.iter()) {
                    w[i] = *v;
                }
                break;
            }
            // move toward z until the first coordinate hits zero
            let mut step = f64::INFINITY;
            let mut leaving = 0;
            for (k, (&i, v)) in passive.iter().zip(z.iter()).enumerate() {
                if *v <= 0.0 {
                    let ratio = w[i] / (w[i] - v);
                    if ratio < step {
                        step = ratio;
                        leaving = k;
                    }
                }
            }
            for (&i, v) in passive.iter().zip(z.iter()) {
                w[i] += step * (v - w[i]);
            }
            w[passive[leaving]] = 0.0;
            for &i in &passive {
                if w[i] <= 0.0 {
                    w[i] = 0.0;
                }
            }
            passive.retain(|&i| w[i] > 0.0);
            if passive.is_empty() {
                break;
            }
        }
    }
    (best.1, max_iter)
}

fn largest_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..50 {
        let next = gram * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&next);
        v = next / norm;
    }
    // power iteration approaches from below; pad so that 1/L stays a valid step
    lambda.max((gram * &v).norm()) * 1.01
}

fn proximal_gradient(problem: &GridProblem, tol: f64, max_iter: usize) -> (DVector<f64>, usize) {
    let n = problem.c.len();
    let l = largest_eigenvalue(&problem.gram);
    let mut w = DVector::zeros(n);
    if l == 0.0 {
        return (w, 0);
    }
    let mut best = (problem.residual(&w), w.clone());
    for iter in 1..=max_iter {
        let grad = problem.gradient(&w);
        w -= grad / l;
        w.apply(|v| *v = v.max(0.0));
        if iter % 10 == 0 || iter == max_iter {
            let r = problem.residual(&w);
            if r < best.0 {
                best = (r, w.clone());
            }
            if r <= tol {
                return (w, iter);
            }
        }
    }
    (best.1, max_iter)
}
