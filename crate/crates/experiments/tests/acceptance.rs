//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Pass criterion numbers as arguments to run a subset.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use fastpart::diagnostics::{
    finite_diff_check, objective, oracle_grid_blasso, FdCheck, OracleMethod, OracleSolution,
};
use fastpart::geometry::project_ball;
use fastpart::gradient::{d_hat, draw_batch, grad_j_prime_exact, j_prime_exact, j_prime_hat};
use fastpart::measure::grid_init;
use fastpart::model::gmm::sample_mixture;
use fastpart::model::{Draw, FeatureModel, FourierModel, GmmModel, GroundTruth, MixingLaw};
use fastpart::optimizer::{compute_radii, run, run_with_observer, Init, Mode, RunConfig, RunOutcome};
use fastpart::ParticleMeasure;
use fastpart_experiments::benchmarks::{benchmark, gen_data, NAMES};
use fastpart_experiments::commands::{build_problem, resolve_run, OracleCache, Problem};
use fastpart_experiments::config::ExperimentConfig;
use fastpart_experiments::io::{write_measure, write_trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

/// A run configuration exercised by some criterion, replayed by the
/// reproducibility check.
struct Replay {
    label: String,
    model: Arc<dyn FeatureModel>,
    cfg: RunConfig,
    trace: String,
}

type Replays = Mutex<Vec<Replay>>;

fn trace_text(trace: &[fastpart::diagnostics::TraceRecord]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&path, trace).unwrap();
    std::fs::read_to_string(path).unwrap()
}

/// Drops the trailing `wall_ns` column.
fn without_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn remember(replays: &Replays, label: &str, model: Arc<dyn FeatureModel>, cfg: &RunConfig, outcome: &RunOutcome) {
    replays.lock().unwrap().push(Replay {
        label: label.to_string(),
        model,
        cfg: cfg.clone(),
        trace: trace_text(&outcome.trace),
    });
}

fn gmm3a(law: MixingLaw) -> (GmmModel, f64) {
    let p = benchmark("gmm3a").unwrap();
    let data = gen_data(&p, 0, None, law).unwrap();
    (GmmModel::new(data, 1, p.m, p.s, p.radius, law).unwrap(), p.lambda)
}

fn oracle(model: &dyn FeatureModel, lambda: f64) -> OracleSolution {
    oracle_grid_blasso(model, lambda, 1e-3, 1e-6, 10_000, OracleMethod::ActiveSet).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
    project_ball(&v, radius).0
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, dim: usize, radius: f64) -> ParticleMeasure {
    let weights = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let positions = (0..n).flat_map(|_| random_point(rng, dim, radius)).collect();
    ParticleMeasure::new(dim, weights, positions).unwrap()
}

fn gmm_2d(law: MixingLaw) -> GmmModel {
    let truth = GroundTruth {
        spikes: vec![(0.5, vec![-0.4, 0.2]), (0.5, vec![0.3, -0.1])],
        noise: vec![],
    };
    let data = sample_mixture(&truth, 0.1, law, 300, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    GmmModel::new(data, 2, 0.2, 0.1, 1.0, law).unwrap()
}

fn fourier_2d() -> FourierModel {
    let truth = GroundTruth {
        spikes: vec![(1.0, vec![0.5, -1.0]), (0.7, vec![-2.0, 2.5])],
        noise: vec![(-0.05, vec![1.5, 0.3])],
    };
    FourierModel::new(2, 2, truth).unwrap()
}

/// Radius of the sampling region for random points.
fn sample_radius(model: &dyn FeatureModel) -> f64 {
    if model.domain().is_periodic() {
        std::f64::consts::PI
    } else {
        model.domain().outer_radius(model.dim())
    }
}

// 1. Total mass stays below the a priori radius.
fn tv_bounded(replays: &Replays) -> Verdict {
    let start = Instant::now();
    let truth = GroundTruth {
        spikes: vec![(0.6, vec![-0.2]), (0.4, vec![0.25])],
        noise: vec![],
    };
    let s = 0.5;
    let data = sample_mixture(&truth, s, MixingLaw::Truncated, 400, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let model: Arc<dyn FeatureModel> = Arc::new(GmmModel::new(data, 1, 1.0, s, 0.5, MixingLaw::Truncated).unwrap());
    let lambda = 0.2;
    let init = Init::Grid {
        step: 0.1,
        total_mass: 1.0,
    };
    let nu0 = fastpart::optimizer::initial_measure(model.as_ref(), &init).unwrap();
    let radii = compute_radii(&model.bounds(), lambda, &nu0);
    if !radii.hypothesis_met || !radii.big_r0.is_finite() {
        return Verdict::new(false, format!("radius unavailable: {radii:?}"));
    }
    let results: Vec<(usize, usize, f64)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = RunConfig::new(0.5 + 0.5 * (seed % 2) as f64, 0.05, 2000, lambda, init.clone());
            cfg.seed = seed;
            cfg.trace_every = if seed == 0 { 50 } else { 0 };
            let mut exceed = 0;
            let mut max_tv: f64 = 0.0;
            let outcome = run_with_observer(&cfg, model.as_ref(), |state, _| {
                let tv = state.nu.tv_norm();
                max_tv = max_tv.max(tv);
                if tv > radii.big_r0 + 1e-12 {
                    exceed += 1;
                }
            })
            .unwrap();
            if seed == 0 {
                remember(replays, "tv-bounded", model.clone(), &cfg, &outcome);
            }
            let guards = &outcome.safeguards;
            let guard_failures = if guards.tv_checked { guards.tv_violations } else { usize::MAX };
            (exceed, guard_failures, max_tv)
        })
        .collect();
    let elapsed = start.elapsed();
    let exceed: usize = results.iter().map(|r| r.0).sum();
    let guard: usize = results.iter().map(|r| r.1).fold(0, usize::saturating_add);
    let max_tv = results.iter().map(|r| r.2).fold(0.0, f64::max);
    Verdict::new(
        exceed == 0 && guard == 0 && elapsed < Duration::from_secs(60),
        format!(
            "200 runs, max tv {max_tv:.4} vs R0 {:.4} (r0 {:.4}), {exceed} excursions, {guard} safeguard hits",
            radii.big_r0, radii.r0
        ),
    )
}

// 2. With lambda above h_sup every weight decays.
fn null_regime(replays: &Replays) -> Verdict {
    let (model, _) = gmm3a(MixingLaw::Gaussian);
    let model: Arc<dyn FeatureModel> = Arc::new(model);
    let lambda = 1.05 * model.bounds().h_sup;
    let results: Vec<(usize, f64, bool)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let init = Init::Grid {
                step: 0.05,
                total_mass: 1.0,
            };
            let mut cfg = RunConfig::new(0.005, 0.01, 5000, lambda, init);
            cfg.seed = seed;
            cfg.trace_every = if seed == 0 { 100 } else { 0 };
            let nu0 = fastpart::optimizer::initial_measure(model.as_ref(), &cfg.init).unwrap();
            let mut prev = nu0.weights().to_vec();
            let mut increases = 0;
            let outcome = run_with_observer(&cfg, model.as_ref(), |state, _| {
                let w = state.nu.weights();
                increases += w.iter().zip(&prev).filter(|(a, b)| a > b).count();
                prev.copy_from_slice(w);
            })
            .unwrap();
            if seed == 0 {
                remember(replays, "null-regime", model.clone(), &cfg, &outcome);
            }
            let g = &outcome.safeguards;
            let ratio = outcome.final_measure.tv_norm() / nu0.tv_norm();
            (increases, ratio, g.monotone_checked && g.monotone_violations == 0)
        })
        .collect();
    let increases: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let guards = results.iter().all(|r| r.2);
    Verdict::new(
        increases == 0 && worst <= 1e-3 && guards,
        format!("50 runs, {increases} weight increases, worst final/initial mass {worst:.3e}"),
    )
}

/// Running mean and variance.
#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn standard_error(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

fn unbiasedness_failures(seed: u64) -> (usize, usize) {
    let models: Vec<Box<dyn FeatureModel>> = vec![Box::new(gmm_2d(MixingLaw::Gaussian)), Box::new(fourier_2d())];
    let lambda = 0.1;
    let mut cases = Vec::new();
    for mi in 0..models.len() {
        for pair in 0..20u64 {
            cases.push((mi, pair));
        }
    }
    let fails: Vec<(usize, usize)> = cases
        .par_iter()
        .map(|&(mi, pair)| {
            let model = models[mi].as_ref();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + 100 * mi as u64 + pair);
            let r = sample_radius(model);
            let nu = random_measure(&mut rng, 3, model.dim(), r);
            let t = random_point(&mut rng, model.dim(), r);
            let mut jm = Moments::default();
            let mut dm = vec![Moments::default(); model.dim()];
            for _ in 0..100_000 {
                let batch = draw_batch(model, &nu, 1, &mut rng).unwrap();
                jm.push(j_prime_hat(model, &nu, &t, lambda, &batch));
                for (m, x) in dm.iter_mut().zip(d_hat(model, &nu, &t, &batch)) {
                    m.push(x);
                }
            }
            let exact_j = j_prime_exact(model, &nu, &t, lambda);
            let exact_d = grad_j_prime_exact(model, &nu, &t);
            let mut fails = usize::from((jm.mean - exact_j).abs() > 4.0 * jm.standard_error());
            for (m, e) in dm.iter().zip(exact_d) {
                fails += usize::from((m.mean - e).abs() > 4.0 * m.standard_error());
            }
            (fails, 1 + model.dim())
        })
        .collect();
    fails.iter().fold((0, 0), |(f, n), &(a, b)| (f + a, n + b))
}

// 3. Minibatch estimators are unbiased.
fn unbiased() -> Verdict {
    let (fails, checks) = unbiasedness_failures(1);
    if fails <= 2 {
        return Verdict::new(true, format!("{fails} of {checks} checks outside 4 SE"));
    }
    let (again, _) = unbiasedness_failures(2);
    Verdict::new(
        again <= 2,
        format!("{fails} of {checks} checks outside 4 SE; rerun: {again}"),
    )
}

// 4. Analytic gradients and the objective expansion.
fn gradients() -> Verdict {
    let (g1, lambda) = gmm3a(MixingLaw::Gaussian);
    let (g1t, _) = gmm3a(MixingLaw::Truncated);
    let models: Vec<(&str, Box<dyn FeatureModel>)> = vec![
        ("gmm", Box::new(g1)),
        ("gmm-truncated", Box::new(g1t)),
        ("gmm-2d", Box::new(gmm_2d(MixingLaw::Gaussian))),
        ("fourier-2d", Box::new(fourier_2d())),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_fd: f64 = 0.0;
    let mut worst_expansion: f64 = 0.0;
    let mut worst_consistency: f64 = 0.0;
    let mut skipped = 0;
    for (_, model) in &models {
        let model = model.as_ref();
        let r = sample_radius(model);
        let d = model.dim();
        for _ in 0..100 {
            let nu = random_measure(&mut rng, 4, d, r);
            let t = random_point(&mut rng, d, r);
            match finite_diff_check(model, &nu, &t, 1e-5) {
                FdCheck::Checked(e) => worst_fd = worst_fd.max(e),
                FdCheck::Skipped => skipped += 1,
            }

            // weight perturbation on the shared support
            let dw: Vec<f64> = (0..nu.len()).map(|_| rng.random_range(-0.05..0.05)).collect();
            let moved: Vec<f64> = nu.weights().iter().zip(&dw).map(|(a, b)| a + b).collect();
            let nu2 = ParticleMeasure::new(d, moved, nu.positions().to_vec()).unwrap();
            let mut predicted = 0.0;
            for i in 0..nu.len() {
                predicted += dw[i] * j_prime_exact(model, &nu, nu.position(i), lambda);
                for j in 0..nu.len() {
                    predicted += 0.5 * dw[i] * dw[j] * model.kernel(nu.position(i), nu.position(j));
                }
            }
            let actual = objective(model, &nu2, lambda) - objective(model, &nu, lambda);
            worst_expansion = worst_expansion.max((actual - predicted).abs() / actual.abs().max(1e-300));

            // weight and position derivatives of the objective
            let h = 1e-6;
            let j = rng.random_range(0..nu.len());
            let shifted = |dw: f64, dt: Option<(usize, f64)>| {
                let mut w = nu.weights().to_vec();
                w[j] += dw;
                let mut p = nu.positions().to_vec();
                if let Some((i, x)) = dt {
                    p[j * d + i] += x;
                }
                objective(model, &ParticleMeasure::new(d, w, p).unwrap(), lambda)
            };
            let fd = (shifted(h, None) - shifted(-h, None)) / (2.0 * h);
            let an = j_prime_exact(model, &nu, nu.position(j), lambda);
            worst_consistency = worst_consistency.max((fd - an).abs() / (1.0 + an.abs()));
            let grad = grad_j_prime_exact(model, &nu, nu.position(j));
            for i in 0..d {
                let fd = (shifted(0.0, Some((i, h))) - shifted(0.0, Some((i, -h)))) / (2.0 * h);
                let an = nu.weight(j) * grad[i];
                worst_consistency = worst_consistency.max((fd - an).abs() / (1.0 + an.abs()));
            }
        }
    }
    Verdict::new(
        worst_fd <= 1e-5 && skipped == 0 && worst_expansion <= 1e-10 && worst_consistency <= 1e-5,
        format!(
            "finite differences {worst_fd:.2e}, expansion {worst_expansion:.2e}, objective gradients {worst_consistency:.2e}"
        ),
    )
}

fn kernel_rate_slope(model: &dyn FeatureModel, t: &[f64], s: &[f64], seed: u64) -> f64 {
    let exact = model.kernel(t, s);
    let sizes = [100usize, 1_000, 10_000, 100_000];
    let reps = 200;
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let sq: f64 = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((i * reps + r) as u64);
                    let sum: f64 = (0..m)
                        .map(|_| {
                            let u: Draw = model.sample_u(&mut rng);
                            model.g(t, s, &u)
                        })
                        .sum();
                    (sum / m as f64 - exact).powi(2)
                })
                .sum();
            ((m as f64).ln(), (sq / reps as f64).sqrt().ln())
        })
        .collect();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = points.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let cov: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    cov / var
}

// 5. Random feature kernel estimates converge at rate m^{-1/2}.
fn kernel_rate() -> Verdict {
    let (g, _) = gmm3a(MixingLaw::Gaussian);
    let slopes = [
        ("gmm", kernel_rate_slope(&g, &[0.1], &[-0.05], 5)),
        ("gmm-2d", kernel_rate_slope(&gmm_2d(MixingLaw::Truncated), &[0.1, 0.2], &[-0.3, 0.0], 6)),
        ("fourier-2d", kernel_rate_slope(&fourier_2d(), &[0.3, -1.0], &[1.2, 2.0], 7)),
    ];
    let pass = slopes.iter().all(|(_, s)| (-0.65..=-0.35).contains(s));
    let detail = slopes
        .iter()
        .map(|(n, s)| format!("{n} {s:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::new(pass, format!("slopes {detail}"))
}

const GMM3A_GLOBAL: &str = "\
[model]
benchmark = gmm3a

[solver]
schedule = global
K = 20000
tv_star = oracle
init_mass = tv_star
grid_step = 0.04
cesaro = true
trace_target = cesaro

[oracle]
grid_step = 0.001
tol = 1e-6
";

fn experiment(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new(".")).unwrap()
}

// 6. Averaged iterates approach the optimum on the global schedule.
fn global_convergence(replays: &Replays) -> Verdict {
    let start = Instant::now();
    let base = experiment(GMM3A_GLOBAL);
    let problem = build_problem(&base.model).unwrap();
    let model = problem.model.clone();
    let mut cache = OracleCache::new(&base.oracle);
    let lambda = problem.default_lambda.unwrap();
    let sol = cache.get(model.as_ref(), lambda).unwrap().clone();
    if !sol.converged {
        return Verdict::new(false, format!("oracle residual {:.2e}", sol.kkt_residual));
    }
    let half_y = 0.5 * model.y_norm_sq();
    let gaps = |k: usize| -> Vec<f64> {
        (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let mut spec = base.solver.clone();
                spec.iterations = k;
                spec.seed = seed;
                let mut cache = OracleCache::new(&base.oracle);
                let (cfg, _) = resolve_run(&spec, &problem, &mut cache, k).unwrap();
                let outcome = run(&cfg, model.as_ref()).unwrap();
                if seed == 0 && k == 20_000 {
                    remember(replays, "global", model.clone(), &cfg, &outcome);
                }
                objective(model.as_ref(), outcome.cesaro.as_ref().unwrap(), lambda) - sol.j_star
            })
            .collect()
    };
    let short = median(gaps(1250));
    let long = median(gaps(20_000));
    let elapsed = start.elapsed();
    let halved = long <= 0.5 * short;
    let small = long <= 1e-2 * half_y;
    Verdict::new(
        halved && small && elapsed < Duration::from_secs(600),
        format!(
            "median gap {short:.3e} at K=1250, {long:.3e} at K=20000; ratio {:.3} (<= 0.5: {halved}); \
             final gap vs 1e-2 * |y|^2/2 = {:.3e} (met: {small}); J* = {:.6e}",
            long / short,
            1e-2 * half_y,
            sol.j_star
        ),
    )
}

const GMM3A_LOCAL: &str = "\
[model]
benchmark = gmm3a

[solver]
schedule = local
K = 10000
grid_step = 0.1
";

// 7. Local stationarity measures decay on the local schedule.
fn local_decay(replays: &Replays) -> Verdict {
    let base = experiment(GMM3A_LOCAL);
    let problem = build_problem(&base.model).unwrap();
    let model = problem.model.clone();
    let stat = |k: usize| -> f64 {
        let per_seed: Vec<f64> = (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let mut spec = base.solver.clone();
                spec.iterations = k;
                spec.seed = seed;
                let mut cache = OracleCache::new(&base.oracle);
                let (cfg, _) = resolve_run(&spec, &problem, &mut cache, 1).unwrap();
                let outcome = run(&cfg, model.as_ref()).unwrap();
                if seed == 0 && k == 10_000 {
                    remember(replays, "local", model.clone(), &cfg, &outcome);
                }
                let rows: Vec<f64> = outcome.trace[1..].iter().map(|r| r.local_j2 + r.local_g2).collect();
                mean(&rows)
            })
            .collect();
        mean(&per_seed)
    };
    let short = stat(2500);
    let long = stat(10_000);
    Verdict::new(
        long <= 0.6 * short,
        format!("mean local norm {short:.3e} at K=2500, {long:.3e} at K=10000 (ratio {:.3})", long / short),
    )
}

const GMM3A_COST: &str = "\
[model]
benchmark = gmm3a

[solver]
alpha = 0.05
eta = 0.001
K = 3000
grid_step = 0.0408163265306122

[variant.deterministic]
mode = deterministic
K = 300

[variant.stochastic]
mode = stochastic
";

// 8. The stochastic solver reaches a fixed accuracy with fewer evaluations.
fn cost_advantage(replays: &Replays) -> Verdict {
    let base = experiment(GMM3A_COST);
    let p = benchmark("gmm3a").unwrap();
    let results: Vec<Option<(u64, u64)>> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let data = gen_data(&p, seed, None, MixingLaw::Gaussian).unwrap();
            let model: Arc<dyn FeatureModel> =
                Arc::new(GmmModel::new(data, 1, p.m, p.s, p.radius, MixingLaw::Gaussian).unwrap());
            let problem = Problem {
                model: model.clone(),
                default_lambda: Some(p.lambda),
            };
            let j_star = oracle(model.as_ref(), p.lambda).j_star;
            let mut evals = Vec::new();
            for (name, spec) in &base.variants {
                let mut spec = spec.clone();
                spec.seed = seed;
                let mut cache = OracleCache::new(&base.oracle);
                // every deterministic step costs as much as a trace row; sample the stochastic trace sparsely
                let every = if spec.mode == Mode::Deterministic { 1 } else { 10 };
                let (cfg, _) = resolve_run(&spec, &problem, &mut cache, every).unwrap();
                assert_eq!(fastpart::optimizer::initial_measure(model.as_ref(), &cfg.init).unwrap().len(), 50);
                let outcome = run(&cfg, model.as_ref()).unwrap();
                if seed == 0 {
                    remember(replays, &format!("cost-{name}"), model.clone(), &cfg, &outcome);
                }
                let j0 = outcome.trace[0].objective;
                let threshold = j_star + 0.05 * (j0 - j_star);
                evals.push(outcome.trace.iter().find(|r| r.objective <= threshold).map(|r| r.evals));
            }
            Some((evals[0]?, evals[1]?))
        })
        .collect();
    let ratios: Vec<f64> = results
        .iter()
        .map(|r| r.map_or(f64::NAN, |(det, sto)| det as f64 / sto as f64))
        .collect();
    let wins = ratios.iter().filter(|r| **r >= 2.0).count();
    let reached = ratios.iter().filter(|r| r.is_finite()).count();
    Verdict::new(
        wins >= 8,
        format!(
            "deterministic/stochastic evaluations to threshold >= 2 in {wins} of 10 seeds \
             (both reached it in {reached}, median ratio {:.1})",
            median(ratios.iter().copied().filter(|r| r.is_finite()).collect())
        ),
    )
}

fn fastpart_cli(args: &[&str], cwd: &Path) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_fastpart"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

// 9. Oracle solutions certify and initial grids do not.
fn certification() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut codes = Vec::new();
    for name in NAMES {
        let sub = dir.path().join(name);
        std::fs::create_dir_all(&sub).unwrap();
        let cfg = format!(
            "[model]\nbenchmark = {name}\n[solver]\nalpha = 0.1\neta = 0.01\nK = 1\ngrid_step = 0.05\n\
             [oracle]\ngrid_step = 0.001\ntol = 1e-6\n[certify]\ntol = 1e-5\n"
        );
        std::fs::write(sub.join("cfg.ini"), cfg).unwrap();
        let oracle = fastpart_cli(&["oracle", "cfg.ini", "--quiet"], &sub);
        assert!(oracle.status.success(), "{}", String::from_utf8_lossy(&oracle.stderr));
        let grid = grid_init(1.0, 1, 0.05, 1.0).unwrap();
        write_measure(&sub.join("grid.csv"), &grid, false).unwrap();
        let on_oracle = fastpart_cli(&["certify", "cfg.ini", "out/oracle_measure.csv", "--quiet"], &sub);
        let on_grid = fastpart_cli(&["certify", "cfg.ini", "grid.csv", "--quiet"], &sub);
        codes.push((name, on_oracle.status.code(), on_grid.status.code()));
    }
    let pass = codes.iter().all(|(_, a, b)| *a == Some(0) && *b == Some(3));
    let detail = codes
        .iter()
        .map(|(n, a, b)| format!("{n}: oracle {}, grid {}", a.unwrap_or(-1), b.unwrap_or(-1)))
        .collect::<Vec<_>>()
        .join("; ");
    Verdict::new(pass, detail)
}

// 10. Traces are reproducible byte for byte apart from wall time.
fn reproducibility(replays: &Replays) -> Verdict {
    let replays = replays.lock().unwrap();
    let mut mismatched = Vec::new();
    for r in replays.iter() {
        let again = run(&r.cfg, r.model.as_ref()).unwrap();
        if without_wall_time(&trace_text(&again.trace)) != without_wall_time(&r.trace) {
            mismatched.push(r.label.clone());
        }
    }
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.ini"), GMM3A_GLOBAL.replace("K = 20000", "K = 2000")).unwrap();
    let mut traces = Vec::new();
    for out in ["a", "b"] {
        let res = fastpart_cli(&["run", "cfg.ini", "--out-dir", out, "--trace-every", "10", "--quiet"], dir.path());
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        traces.push(without_wall_time(&std::fs::read_to_string(dir.path().join(out).join("trace.csv")).unwrap()));
    }
    if traces[0] != traces[1] {
        mismatched.push("cli".into());
    }
    Verdict::new(
        mismatched.is_empty() && !replays.is_empty(),
        format!("{} configurations replayed plus the command line; mismatches: {mismatched:?}", replays.len()),
    )
}

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let replays: Replays = Mutex::new(Vec::new());
    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "total mass bounded", Box::new(|| tv_bounded(&replays))),
        (2, "null solution regime", Box::new(|| null_regime(&replays))),
        (3, "estimator unbiasedness", Box::new(unbiased)),
        (4, "gradient correctness", Box::new(gradients)),
        (5, "kernel Monte Carlo rate", Box::new(kernel_rate)),
        (6, "global convergence", Box::new(|| global_convergence(&replays))),
        (7, "local decay", Box::new(|| local_decay(&replays))),
        (8, "cost advantage", Box::new(|| cost_advantage(&replays))),
        (9, "KKT certification", Box::new(certification)),
        (10, "reproducibility", Box::new(|| reproducibility(&replays))),
    ];
    let mut failed = 0;
    for (id, name, check) in &criteria {
        if !selected.is_empty() && !selected.contains(id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {name}: {} [{secs:.1}s]", v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
