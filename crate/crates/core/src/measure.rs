//! Discrete nonnegative measures stored as weighted particle clouds.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Domain};

/// `sum_j eps_j w_j delta_{t_j}` with `w_j >= 0` and fixed signs `eps_j`.
///
/// Positions are stored row-major in a flat buffer of length `len() * dim()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleMeasure {
    dim: usize,
    weights: Vec<f64>,
    positions: Vec<f64>,
    signs: Option<Vec<i8>>,
}

impl ParticleMeasure {
    pub fn new(dim: usize, weights: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if positions.len() != weights.len() * dim {
            return Err(Error::ParticleCountMismatch {
                expected: weights.len() * dim,
                got: positions.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(
                "weights",
                format!("weights must be finite and nonnegative, got {w}"),
            ));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("positions", "positions must be finite"));
        }
        Ok(ParticleMeasure {
            dim,
            weights,
            positions,
            signs: None,
        })
    }

    pub fn empty(dim: usize) -> Self {
        ParticleMeasure {
            dim,
            weights: Vec::new(),
            positions: Vec::new(),
            signs: None,
        }
    }

    pub fn dirac(weight: f64, position: &[f64]) -> Result<Self> {
        Self::new(position.len(), vec![weight], position.to_vec())
    }

    pub fn from_atoms<'a>(
        dim: usize,
        atoms: impl IntoIterator<Item = (f64, &'a [f64])>,
    ) -> Result<Self> {
        let mut weights = Vec::new();
        let mut positions = Vec::new();
        for (w, t) in atoms {
            if t.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.len(),
                });
            }
            weights.push(w);
            positions.extend_from_slice(t);
        }
        Self::new(dim, weights, positions)
    }

    /// Attaches particle signs (each `+1` or `-1`), fixed for the lifetime of a run.
    pub fn with_signs(mut self, signs: Vec<i8>) -> Result<Self> {
        if signs.len() != self.weights.len() {
            return Err(Error::ParticleCountMismatch {
                expected: self.weights.len(),
                got: signs.len(),
            });
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::invalid("signs", "signs must be +1 or -1"));
        }
        self.signs = if signs.iter().all(|s| *s == 1) {
            None
        } else {
            Some(signs)
        };
        Ok(self)
    }

    /// Rebuilds a measure with the same signs but new weights and positions.
    pub(crate) fn with_state(&self, weights: Vec<f64>, positions: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), self.weights.len());
        debug_assert_eq!(positions.len(), self.positions.len());
        ParticleMeasure {
            dim: self.dim,
            weights,
            positions,
            signs: self.signs.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j * self.dim..(j + 1) * self.dim]
    }

    pub fn signs(&self) -> Option<&[i8]> {
        self.signs.as_deref()
    }

    pub fn sign(&self, j: usize) -> f64 {
        match &self.signs {
            Some(s) => s[j] as f64,
            None => 1.0,
        }
    }

    /// Signed weight `eps_j * w_j`.
    pub fn signed_weight(&self, j: usize) -> f64 {
        self.sign(j) * self.weights[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.weights
            .iter()
            .copied()
            .zip(self.positions.chunks_exact(self.dim))
    }

    pub fn tv_norm(&self) -> f64 {
        tv_norm(self)
    }

    /// Concatenates two particle lists.
    pub fn concat(&self, other: &ParticleMeasure) -> Result<ParticleMeasure> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let signs = match (&self.signs, &other.signs) {
            (None, None) => None,
            _ => Some(
                (0..self.len())
                    .map(|j| self.sign(j) as i8)
                    .chain((0..other.len()).map(|j| other.sign(j) as i8))
                    .collect(),
            ),
        };
        Ok(ParticleMeasure {
            dim: self.dim,
            weights,
            positions,
            signs,
        })
    }
}

/// Total variation norm: the sum of the particle weights.
pub fn tv_norm(nu: &ParticleMeasure) -> f64 {
    nu.weights.iter().sum()
}

/// Draws particle indices with probability `w_j / sum(w)`.
#[derive(Debug, Clone)]
pub struct ParticleSampler {
    index: WeightedIndex<f64>,
}

impl ParticleSampler {
    pub fn new(nu: &ParticleMeasure) -> Result<Self> {
        if !(tv_norm(nu) > 0.0) {
            return Err(Error::NullMeasure);
        }
        let index = WeightedIndex::new(nu.weights()).map_err(|_| Error::NullMeasure)?;
        Ok(ParticleSampler { index })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }
}

pub fn sample_particle_index<R: Rng + ?Sized>(nu: &ParticleMeasure, rng: &mut R) -> Result<usize> {
    Ok(ParticleSampler::new(nu)?.sample(rng))
}

fn lattice_1d(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + k as f64 * step).collect()
}

fn cartesian(axis: &[f64], dim: usize, mut keep: impl FnMut(&[f64]) -> bool) -> Vec<f64> {
    let n = axis.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    loop {
        for (c, &i) in point.iter_mut().zip(&idx) {
            *c = axis[i];
        }
        if keep(&point) {
            out.extend_from_slice(&point);
        }
        let mut axis_id = dim;
        loop {
            if axis_id == 0 {
                return out;
            }
            axis_id -= 1;
            idx[axis_id] += 1;
            if idx[axis_id] < n {
                break;
            }
            idx[axis_id] = 0;
        }
    }
}

fn uniform_weights(dim: usize, positions: Vec<f64>, total_mass: f64, step: f64) -> Result<ParticleMeasure> {
    let p = positions.len() / dim;
    if p == 0 {
        return Err(Error::EmptyGrid { step });
    }
    ParticleMeasure::new(dim, vec![total_mass / p as f64; p], positions)
}

fn check_grid_args(step: f64, total_mass: f64, dim: usize) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("grid_step", format!("must be positive, got {step}")));
    }
    if !(total_mass >= 0.0 && total_mass.is_finite()) {
        return Err(Error::invalid(
            "total_mass",
            format!("must be nonnegative, got {total_mass}"),
        ));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "must be at least 1"));
    }
    Ok(())
}

/// Uniform measure on the lattice `-R + k*step` (per axis) restricted to the
/// closed ball of radius `radius`.
pub fn grid_init(radius: f64, dim: usize, step: f64, total_mass: f64) -> Result<ParticleMeasure> {
    check_grid_args(step, total_mass, dim)?;
    if !(radius > 0.0) {
        return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
    }
    let span = 2.0 * radius / step;
    // a step dividing 2R up to rounding still reaches +R
    let count = (span + 1e-9).floor() as usize + 1;
    let axis: Vec<f64> = lattice_1d(-radius, step, count)
        .into_iter()
        .map(|x| if (x - radius).abs() < 1e-9 * radius.max(1.0) { radius } else { x })
        .collect();
    let slack = 1e-12 * radius.max(1.0);
    let positions = cartesian(&axis, dim, |pt| {
        pt.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + slack
    });
    uniform_weights(dim, positions, total_mass, step)
}

/// Uniform measure on the lattice `-pi + k*step` of the torus `[-pi, pi)^d`.
pub fn grid_init_torus(dim: usize, step: f64, total_mass: f64) -> Result<ParticleMeasure> {
    check_grid_args(step, total_mass, dim)?;
    let span = 2.0 * PI / step;
    let mut count = (span - 1e-9).ceil() as usize;
    count = count.max(1);
    let axis = lattice_1d(-PI, step, count);
    let positions = cartesian(&axis, dim, |_| true);
    uniform_weights(dim, positions, total_mass, step)
}

/// Grid initializer dispatching on the domain.
pub fn grid_for_domain(domain: Domain, dim: usize, step: f64, total_mass: f64) -> Result<ParticleMeasure> {
    match domain {
        Domain::Ball { radius } => grid_init(radius, dim, step, total_mass),
        Domain::Torus => grid_init_torus(dim, step, total_mass),
    }
}

/// Running per-particle averages of weights and positions along a trajectory.
///
/// On a periodic domain positions are unwrapped between consecutive records so
/// that a particle crossing the seam is averaged along its actual path.
#[derive(Debug, Clone)]
pub struct CesaroTracker {
    count: usize,
    weight_sums: Vec<f64>,
    position_sums: Vec<f64>,
    periodic: bool,
    last_unwrapped: Vec<f64>,
    template: ParticleMeasure,
}

impl CesaroTracker {
    /// Starts a tracker with `nu` as the state at iteration 0.
    pub fn new(nu: &ParticleMeasure, periodic: bool) -> Self {
        CesaroTracker {
            count: 0,
            weight_sums: nu.weights().to_vec(),
            position_sums: nu.positions().to_vec(),
            periodic,
            last_unwrapped: if periodic { nu.positions().to_vec() } else { Vec::new() },
            template: nu.clone(),
        }
    }

    /// Number of iterations recorded after the initial state.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn weight_sums(&self) -> &[f64] {
        &self.weight_sums
    }

    pub fn position_sums(&self) -> &[f64] {
        &self.position_sums
    }

    pub fn record(&mut self, nu: &ParticleMeasure) -> Result<()> {
        if nu.len() != self.template.len() {
            return Err(Error::ParticleCountMismatch {
                expected: self.template.len(),
                got: nu.len(),
            });
        }
        if nu.dim() != self.template.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.template.dim(),
                got: nu.dim(),
            });
        }
        for (s, w) in self.weight_sums.iter_mut().zip(nu.weights()) {
            *s += w;
        }
        if self.periodic {
            for ((s, last), x) in self
                .position_sums
                .iter_mut()
                .zip(self.last_unwrapped.iter_mut())
                .zip(nu.positions())
            {
                *last += wrap_angle(x - *last);
                *s += *last;
            }
        } else {
            for (s, x) in self.position_sums.iter_mut().zip(nu.positions()) {
                *s += x;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn average(&self) -> ParticleMeasure {
        let n = (self.count + 1) as f64;
        let weights = self.weight_sums.iter().map(|s| s / n).collect();
        let mut positions: Vec<f64> = self.position_sums.iter().map(|s| s / n).collect();
        if self.periodic {
            positions.iter_mut().for_each(|x| *x = wrap_angle(*x));
        }
        self.template.with_state(weights, positions)
    }
}

/// Per-particle Cesaro average over a recorded sequence of measures.
pub fn cesaro_average<'a>(
    states: impl IntoIterator<Item = &'a ParticleMeasure>,
    periodic: bool,
) -> Result<ParticleMeasure> {
    let mut it = states.into_iter();
    let first = it.next().ok_or(Error::NothingRecorded)?;
    let mut tracker = CesaroTracker::new(first, periodic);
    for nu in it {
        tracker.record(nu)?;
    }
    Ok(tracker.average())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn tv_norm_examples() {
        let nu = ParticleMeasure::new(1, vec![0.5, 0.3, 0.2], vec![0.0, 0.1, 0.2]).unwrap();
        assert!(close(tv_norm(&nu), 1.0));
        assert_eq!(tv_norm(&ParticleMeasure::empty(2)), 0.0);
        let nu = ParticleMeasure::new(1, vec![1.5, 2.5], vec![0.0, 0.0]).unwrap();
        assert_eq!(tv_norm(&nu), 4.0);
    }

    #[test]
    fn rejects_negative_weights() {
        assert!(ParticleMeasure::new(1, vec![-0.1], vec![0.0]).is_err());
        assert!(ParticleMeasure::new(2, vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let nu = ParticleMeasure::new(1, vec![1.0, 3.0], vec![0.0, 1.0]).unwrap();
        let sampler = ParticleSampler::new(&nu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let ones = (0..draws).filter(|_| sampler.sample(&mut rng) == 1).count();
        let freq = ones as f64 / draws as f64;
        assert!((0.745..=0.755).contains(&freq), "{freq}");
    }

    #[test]
    fn sampling_singleton_and_zero_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = ParticleMeasure::dirac(1.0, &[0.3]).unwrap();
        assert_eq!(sample_particle_index(&single, &mut rng).unwrap(), 0);
        let nu = ParticleMeasure::new(1, vec![0.0, 2.0], vec![0.0, 1.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_particle_index(&nu, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn sampling_null_measure_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nu = ParticleMeasure::new(1, vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(sample_particle_index(&nu, &mut rng), Err(Error::NullMeasure));
        assert_eq!(
            sample_particle_index(&ParticleMeasure::empty(1), &mut rng),
            Err(Error::NullMeasure)
        );
    }

    #[test]
    fn sampling_error_message() {
        assert_eq!(Error::NullMeasure.to_string(), "cannot sample from null measure");
    }

    #[test]
    fn grid_1d() {
        let nu = grid_init(1.0, 1, 0.5, 1.0).unwrap();
        assert_eq!(nu.positions(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(nu.weights().iter().all(|w| close(*w, 0.2)));
    }

    #[test]
    fn grid_2d_filters_corners() {
        let nu = grid_init(1.0, 2, 1.0, 1.0).unwrap();
        assert_eq!(nu.len(), 5);
        let mut pts: Vec<(i32, i32)> = nu
            .iter()
            .map(|(_, t)| (t[0] as i32, t[1] as i32))
            .collect();
        pts.sort();
        assert_eq!(pts, vec![(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]);
        assert!(nu.weights().iter().all(|w| close(*w, 0.2)));
    }

    #[test]
    fn grid_coarse() {
        let nu = grid_init(1.0, 1, 2.0, 3.0).unwrap();
        assert_eq!(nu.positions(), &[-1.0, 1.0]);
        assert_eq!(nu.weights(), &[1.5, 1.5]);
    }

    #[test]
    fn grid_rejects_bad_step() {
        assert!(grid_init(1.0, 1, 0.0, 1.0).is_err());
        assert!(grid_init(1.0, 1, -1.0, 1.0).is_err());
        assert!(grid_init(1.0, 1, 0.5, -1.0).is_err());
    }

    #[test]
    fn grid_endpoint_with_inexact_step() {
        // 2 / 0.1 is not exactly 20 in floating point
        let nu = grid_init(1.0, 1, 0.1, 1.0).unwrap();
        assert_eq!(nu.len(), 21);
        assert_eq!(*nu.positions().last().unwrap(), 1.0);
    }

    #[test]
    fn torus_grid_excludes_seam_duplicate() {
        let nu = grid_init_torus(1, PI / 2.0, 1.0).unwrap();
        assert_eq!(nu.len(), 4);
        assert!(nu.positions().iter().all(|x| *x < PI));
    }

    #[test]
    fn cesaro_constant_sequence() {
        let nu = ParticleMeasure::new(1, vec![0.4, 0.6], vec![-0.2, 0.7]).unwrap();
        let avg = cesaro_average([&nu, &nu], false).unwrap();
        assert_eq!(avg, nu);
    }

    #[test]
    fn cesaro_arithmetic_mean() {
        let a = ParticleMeasure::dirac(1.0, &[0.0]).unwrap();
        let b = ParticleMeasure::dirac(3.0, &[1.0]).unwrap();
        let avg = cesaro_average([&a, &b], false).unwrap();
        assert!(close(avg.weight(0), 2.0));
        assert!(close(avg.position(0)[0], 0.5));

        let c = ParticleMeasure::dirac(4.0, &[0.0]).unwrap();
        let one = ParticleMeasure::dirac(1.0, &[0.0]).unwrap();
        let avg = cesaro_average([&one, &one, &c], false).unwrap();
        assert!(close(avg.weight(0), 2.0));
    }

    #[test]
    fn cesaro_mismatched_counts() {
        let a = ParticleMeasure::dirac(1.0, &[0.0]).unwrap();
        let b = ParticleMeasure::new(1, vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            cesaro_average([&a, &b], false),
            Err(Error::ParticleCountMismatch { .. })
        ));
        assert_eq!(cesaro_average(std::iter::empty(), false), Err(Error::NothingRecorded));
    }

    #[test]
    fn cesaro_periodic_unwraps_across_seam() {
        let a = ParticleMeasure::dirac(1.0, &[PI - 0.1]).unwrap();
        let b = ParticleMeasure::dirac(1.0, &[-PI + 0.1]).unwrap();
        let avg = cesaro_average([&a, &b], true).unwrap();
        let x = avg.position(0)[0];
        assert!(close(x.abs(), PI) || close(x, -PI), "{x}");
    }

    #[test]
    fn signs_are_validated() {
        let nu = ParticleMeasure::new(1, vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(nu.clone().with_signs(vec![1, 0]).is_err());
        let signed = nu.with_signs(vec![1, -1]).unwrap();
        assert_eq!(signed.signed_weight(1), -1.0);
    }
}
