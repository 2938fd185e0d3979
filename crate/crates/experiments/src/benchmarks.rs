//! Canonical one-dimensional Gaussian mixture problems.

use fastpart::model::gmm::sample_mixture;
use fastpart::model::{GroundTruth, MixingLaw};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A named mixture with its sampling noise and default solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub truth: GroundTruth,
    /// Standard deviation of the mixing law.
    pub s: f64,
    pub n: usize,
    /// Bandwidth of the embedding kernel.
    pub m: f64,
    pub radius: f64,
    pub lambda: f64,
}

fn spikes(atoms: &[(f64, f64)]) -> GroundTruth {
    GroundTruth {
        spikes: atoms.iter().map(|&(w, t)| (w, vec![t])).collect(),
        noise: Vec::new(),
    }
}

pub const NAMES: [&str; 3] = ["gmm3a", "gmm3b", "gmm5"];

pub fn benchmark(name: &str) -> Option<BenchmarkProblem> {
    let (truth, s, n) = match name {
        "gmm3a" => (spikes(&[(0.3, -0.5), (0.4, 0.0), (0.3, 0.6)]), 0.08, 2000),
        "gmm3b" => (spikes(&[(0.25, -0.3), (0.5, 0.0), (0.25, 0.25)]), 0.08, 2000),
        "gmm5" => (
            spikes(&[(0.15, -0.7), (0.2, -0.35), (0.3, 0.0), (0.2, 0.3), (0.15, 0.65)]),
            0.06,
            3000,
        ),
        _ => return None,
    };
    let name = NAMES.into_iter().find(|n| *n == name)?;
    Some(BenchmarkProblem {
        name,
        truth,
        s,
        n,
        m: 0.1,
        radius: 1.0,
        lambda: 0.05,
    })
}

/// Draws `n` samples (the problem's default when `None`) from the mixture.
pub fn gen_data(
    problem: &BenchmarkProblem,
    seed: u64,
    n: Option<usize>,
    law: MixingLaw,
) -> fastpart::Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_mixture(&problem.truth, problem.s, law, n.unwrap_or(problem.n), &mut rng)
}
