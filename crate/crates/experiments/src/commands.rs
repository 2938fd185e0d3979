//! The `run`, `compare`, `certify`, `oracle` and `gen-data` commands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fastpart::diagnostics::{
    differential_bounds, kkt_certificate, objective, oracle_grid_blasso, KktReport, OracleSolution,
};
use fastpart::model::gmm::GmmModel;
use fastpart::model::{FourierModel, MixingLaw, ReluModel};
use fastpart::optimizer::{
    compute_radii, initial_measure, run, schedules, BatchSchedule, Init, RunConfig, RunOutcome, RunStatus,
    ScheduleKind,
};
use fastpart::FeatureModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::benchmarks::{benchmark, gen_data};
use crate::config::{
    BatchSpec, ExperimentConfig, GmmSource, MassSpec, ModelSpec, OracleSpec, ScheduleSpec, SolverSpec, Threshold,
    TvStarSpec,
};
use crate::error::{CliError, CliResult};
use crate::io::{read_dataset, read_measure, write_dataset, write_measure, write_summary, write_trace, SummaryRow};

/// Command-line overrides shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out_dir: Option<PathBuf>,
    pub trace_every: Option<usize>,
    pub quiet: bool,
}

impl Options {
    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone())
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            // a closed pipe is not an error of the command
            let _ = writeln!(std::io::stdout(), "{}", text.as_ref());
        }
    }
}

fn warn(text: impl AsRef<str>) {
    eprintln!("warning: {}", text.as_ref());
}

/// A model together with the regularization its source recommends.
pub struct Problem {
    pub model: Arc<dyn FeatureModel>,
    pub default_lambda: Option<f64>,
}

pub fn build_problem(spec: &ModelSpec) -> CliResult<Problem> {
    match spec {
        ModelSpec::Gmm {
            source,
            n,
            data_seed,
            s,
            m,
            radius,
            truncate,
        } => {
            let law = if *truncate { MixingLaw::Truncated } else { MixingLaw::Gaussian };
            let (data, dim, defaults) = match source {
                GmmSource::Benchmark(name) => {
                    let p = benchmark(name)
                        .ok_or_else(|| CliError::field("model", "benchmark", format!("unknown benchmark `{name}`")))?;
                    let data = gen_data(&p, *data_seed, *n, law)?;
                    (data, 1, Some((p.s, p.m, p.radius, p.lambda)))
                }
                GmmSource::File(path) => {
                    let (mut data, dim) = read_dataset(path)?;
                    if let Some(n) = n {
                        data.truncate(n * dim);
                    }
                    (data, dim, None)
                }
            };
            let pick = |v: Option<f64>, d: Option<f64>, name: &str| {
                v.or(d).ok_or_else(|| CliError::field("model", name, "required with a data file"))
            };
            let s = pick(*s, defaults.map(|d| d.0), "s")?;
            let m = pick(*m, defaults.map(|d| d.1).or(Some(0.1)), "m")?;
            let radius = pick(*radius, defaults.map(|d| d.2).or(Some(1.0)), "radius")?;
            Ok(Problem {
                model: Arc::new(GmmModel::new(data, dim, m, s, radius, law)?),
                default_lambda: defaults.map(|d| d.3),
            })
        }
        ModelSpec::Fourier { dim, fc, truth } => Ok(Problem {
            model: Arc::new(FourierModel::new(*dim, *fc, truth.clone())?),
            default_lambda: None,
        }),
        ModelSpec::Relu {
            n,
            data_seed,
            teacher,
            noise_std,
            radius,
            ..
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*data_seed);
            Ok(Problem {
                model: Arc::new(ReluModel::synthetic(teacher, *n, *noise_std, *radius, &mut rng)?),
                default_lambda: None,
            })
        }
    }
}

/// Lazily solved grid reference problem, shared across variants with equal `lambda`.
pub struct OracleCache<'a> {
    spec: &'a OracleSpec,
    solved: Vec<(f64, OracleSolution)>,
}

impl<'a> OracleCache<'a> {
    pub fn new(spec: &'a OracleSpec) -> Self {
        OracleCache { spec, solved: Vec::new() }
    }

    pub fn get(&mut self, model: &dyn FeatureModel, lambda: f64) -> CliResult<&OracleSolution> {
        let idx = match self.solved.iter().position(|(l, _)| *l == lambda) {
            Some(i) => i,
            None => {
                let sol = oracle_grid_blasso(
                    model,
                    lambda,
                    self.spec.grid_step,
                    self.spec.tol,
                    self.spec.max_iter,
                    self.spec.method,
                )?;
                if !sol.converged {
                    warn(format!(
                        "oracle stopped after {} iterations with KKT residual {:.3e}",
                        sol.iterations, sol.kkt_residual
                    ));
                }
                self.solved.push((lambda, sol));
                self.solved.len() - 1
            }
        };
        Ok(&self.solved[idx].1)
    }
}

fn lambda_of(spec: &SolverSpec, problem: &Problem) -> CliResult<f64> {
    spec.lambda
        .or(problem.default_lambda)
        .ok_or_else(|| CliError::field("solver", "lambda", "missing required key"))
}

/// Turns a solver section into a run configuration. Returns warnings about
/// heuristic choices alongside.
pub fn resolve_run(
    spec: &SolverSpec,
    problem: &Problem,
    oracle: &mut OracleCache,
    trace_every: usize,
) -> CliResult<(RunConfig, Vec<String>)> {
    let model = problem.model.as_ref();
    let lambda = lambda_of(spec, problem)?;
    let tv_star = match spec.tv_star {
        None => None,
        Some(TvStarSpec::Value(v)) => Some(v),
        Some(TvStarSpec::Oracle) => {
            let tv = oracle.get(model, lambda)?.measure.tv_norm();
            if !(tv > 0.0) {
                return Err(CliError::field("solver", "tv_star", "the reference solution is the zero measure"));
            }
            Some(tv)
        }
    };
    let total_mass = match spec.init_mass {
        MassSpec::Value(v) => v,
        MassSpec::TvStar => tv_star.expect("validated at parse time"),
    };
    let init = Init::Grid {
        step: spec.grid_step,
        total_mass,
    };
    let mut warnings = Vec::new();
    let (alpha, eta, default_batch) = match spec.schedule {
        ScheduleSpec::Manual { alpha, eta } => (alpha, eta, BatchSpec::Constant(1)),
        ScheduleSpec::Global | ScheduleSpec::Local => {
            let nu0 = initial_measure(model, &init)?;
            let bounds = model.bounds();
            let radii = compute_radii(&bounds, lambda, &nu0);
            let tv0 = nu0.tv_norm();
            let big_r0 = if radii.hypothesis_met && radii.big_r0.is_finite() {
                radii.big_r0
            } else {
                let r = tv0.max(tv_star.unwrap_or(tv0));
                warnings.push(format!(
                    "no a priori mass radius for this model; using R0 = max(|nu0|, tv_star) = {r:.6e}"
                ));
                r
            };
            let c1 = differential_bounds(&bounds, model.y_norm_sq(), lambda).c1;
            let (kind, batch) = if spec.schedule == ScheduleSpec::Global {
                (ScheduleKind::Global, BatchSpec::Constant(1))
            } else {
                (ScheduleKind::Local, BatchSpec::Sqrt)
            };
            let s = schedules(kind, model.dim(), tv_star.unwrap_or(tv0), big_r0, spec.iterations, c1)?;
            warnings.extend(s.warning);
            (s.alpha, s.eta, batch)
        }
    };
    let mut cfg = RunConfig::new(alpha, eta, spec.iterations, lambda, init);
    cfg.batch = match spec.batch.unwrap_or(default_batch) {
        BatchSpec::Constant(m) => BatchSchedule::Constant(m),
        BatchSpec::Sqrt => BatchSchedule::sqrt_budget(spec.iterations),
    };
    cfg.mode = spec.mode;
    cfg.seed = spec.seed;
    cfg.stream = spec.stream;
    cfg.cesaro = spec.cesaro;
    cfg.trace_target = spec.trace_target;
    cfg.strict = spec.strict;
    cfg.trace_every = trace_every;
    cfg.validate()?;
    Ok((cfg, warnings))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_outcome(dir: &Path, outcome: &RunOutcome) -> CliResult<()> {
    create_dir(dir)?;
    write_trace(&dir.join("trace.csv"), &outcome.trace)?;
    write_measure(&dir.join("final_measure.csv"), &outcome.final_measure, false)?;
    if let Some(avg) = &outcome.cesaro {
        write_measure(&dir.join("cesaro_measure.csv"), avg, false)?;
    }
    Ok(())
}

fn report_outcome(opts: &Options, label: &str, outcome: &RunOutcome, lambda: f64, model: &dyn FeatureModel) {
    let final_j = objective(model, &outcome.final_measure, lambda);
    opts.say(format!(
        "{label}: K={} evals={} J={final_j:.10e} |nu|={:.6e}",
        outcome.iterations,
        outcome.evals,
        outcome.final_measure.tv_norm()
    ));
    if let Some(avg) = &outcome.cesaro {
        opts.say(format!("{label}: averaged J={:.10e}", objective(model, avg, lambda)));
    }
    if let RunStatus::MassExtinct { iteration } = outcome.status {
        warn(format!("{label}: total mass vanished at iteration {iteration}"));
    }
    for flag in &outcome.bounds.flags {
        warn(format!("{label}: {flag}"));
    }
    let g = &outcome.safeguards;
    if g.total() > 0 {
        warn(format!(
            "{label}: {} safeguard violations; first at {}",
            g.total(),
            g.first_violation.as_deref().unwrap_or("?")
        ));
    }
}

fn trace_every(cfg: &ExperimentConfig, opts: &Options) -> usize {
    opts.trace_every.unwrap_or(cfg.output.trace_every)
}

pub fn cmd_run(config: &Path, opts: &Options) -> CliResult<()> {
    let cfg = ExperimentConfig::load(config)?;
    let problem = build_problem(&cfg.model)?;
    let mut oracle = OracleCache::new(&cfg.oracle);
    let (run_cfg, warnings) = resolve_run(&cfg.solver, &problem, &mut oracle, trace_every(&cfg, opts))?;
    warnings.iter().for_each(warn);
    let outcome = run(&run_cfg, problem.model.as_ref())?;
    write_outcome(&opts.out_dir(&cfg), &outcome)?;
    report_outcome(opts, "run", &outcome, run_cfg.lambda, problem.model.as_ref());
    Ok(())
}

pub fn cmd_compare(config: &Path, opts: &Options) -> CliResult<()> {
    let cfg = ExperimentConfig::load(config)?;
    if cfg.variants.len() < 2 {
        return Err(CliError::Config(format!(
            "compare needs at least two [variant.NAME] sections, found {}",
            cfg.variants.len()
        )));
    }
    let problem = build_problem(&cfg.model)?;
    let model = problem.model.as_ref();
    let mut oracle = OracleCache::new(&cfg.oracle);
    let threshold = match cfg.threshold {
        Threshold::Absolute(t) => t,
        Threshold::Fraction(f) => {
            let lambda = lambda_of(&cfg.solver, &problem)?;
            let (base, _) = resolve_run(&cfg.solver, &problem, &mut oracle, 0)?;
            let j0 = objective(model, &initial_measure(model, &base.init)?, lambda);
            let j_star = oracle.get(model, lambda)?.j_star;
            j_star + f * (j0 - j_star)
        }
    };
    opts.say(format!("threshold J={threshold:.10e}"));
    let out = opts.out_dir(&cfg);
    let mut rows = Vec::new();
    for (name, spec) in &cfg.variants {
        let (run_cfg, warnings) = resolve_run(spec, &problem, &mut oracle, trace_every(&cfg, opts).max(1))?;
        warnings.iter().for_each(|w| warn(format!("{name}: {w}")));
        let outcome = run(&run_cfg, model)?;
        write_outcome(&out.join(name), &outcome)?;
        report_outcome(opts, name, &outcome, run_cfg.lambda, model);
        rows.push(SummaryRow {
            variant: name.clone(),
            evals_to_threshold: outcome.trace.iter().find(|r| r.objective <= threshold).map(|r| r.evals),
            final_objective: outcome.trace.last().map_or(f64::NAN, |r| r.objective),
        });
    }
    create_dir(&out)?;
    write_summary(&out.join("summary.csv"), &rows)
}

pub fn cmd_certify(config: &Path, measure: &Path, opts: &Options) -> CliResult<KktReport> {
    let cfg = ExperimentConfig::load(config)?;
    let problem = build_problem(&cfg.model)?;
    let model = problem.model.as_ref();
    let lambda = lambda_of(&cfg.solver, &problem)?;
    let nu = read_measure(measure, model.dim())?;
    let report = kkt_certificate(model, &nu, lambda, cfg.certify.grid_step, cfg.certify.mass_threshold)?;
    opts.say(format!("grid_min={:.6e}", report.grid_min));
    opts.say(format!("support_max_abs={:.6e}", report.support_max_abs));
    opts.say(format!("grid_step={}", report.grid_step));
    if report.certified(cfg.certify.tol) {
        opts.say(format!("certified at tol {}", cfg.certify.tol));
        Ok(report)
    } else {
        Err(CliError::NotCertified)
    }
}

pub fn cmd_oracle(config: &Path, opts: &Options) -> CliResult<()> {
    let cfg = ExperimentConfig::load(config)?;
    let problem = build_problem(&cfg.model)?;
    let model = problem.model.as_ref();
    let lambda = lambda_of(&cfg.solver, &problem)?;
    let mut oracle = OracleCache::new(&cfg.oracle);
    let sol = oracle.get(model, lambda)?;
    let out = opts.out_dir(&cfg);
    create_dir(&out)?;
    write_measure(&out.join("oracle_measure.csv"), &sol.measure, true)?;
    opts.say(format!("J*={:.12e}", sol.j_star));
    opts.say(format!("kkt_residual={:.3e}", sol.kkt_residual));
    opts.say(format!("iterations={} converged={}", sol.iterations, sol.converged));
    opts.say(format!("|mu*|={:.6e}", sol.measure.tv_norm()));
    Ok(())
}

pub fn cmd_gen_data(
    problem: &str,
    seed: u64,
    n: Option<usize>,
    truncate: bool,
    output: &Path,
    opts: &Options,
) -> CliResult<()> {
    let p = benchmark(problem).ok_or_else(|| {
        CliError::Config(format!(
            "unknown problem `{problem}`; expected one of {}",
            crate::benchmarks::NAMES.join(", ")
        ))
    })?;
    if n == Some(0) {
        return Err(CliError::Config("the number of samples must be at least 1".into()));
    }
    let law = if truncate { MixingLaw::Truncated } else { MixingLaw::Gaussian };
    let data = gen_data(&p, seed, n, law)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_dataset(output, &data, 1, seed, problem)?;
    opts.say(format!("wrote {} samples to {}", data.len(), output.display()));
    Ok(())
}
