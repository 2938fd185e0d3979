//! The particle iteration: multiplicative weight updates and projected position
//! steps, driven either by mini-batch estimates or by exact differentials.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{differential_bounds, local_sq_norms, objective, TraceRecord};
use crate::error::{Error, Result};
use crate::geometry::norm;
use crate::gradient::{add_d_hat, add_grad_j_prime_exact, draw_batch, j_prime_exact, j_prime_hat};
use crate::measure::{grid_for_domain, CesaroTracker, ParticleMeasure};
use crate::model::{CountingModel, FeatureModel, ModelBounds};

/// Total mass below which the iterate is considered extinct.
pub const EXTINCTION_MASS: f64 = 1e-300;

const SAFEGUARD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Stochastic,
    Deterministic,
}

/// Mini-batch size as a function of the iteration index.
#[derive(Clone)]
pub enum BatchSchedule {
    Constant(usize),
    Custom(Arc<dyn Fn(usize) -> usize + Send + Sync>),
}

impl BatchSchedule {
    pub fn size(&self, k: usize) -> usize {
        match self {
            BatchSchedule::Constant(m) => *m,
            BatchSchedule::Custom(f) => f(k),
        }
    }

    /// `ceil(sqrt(K))` at every iteration.
    pub fn sqrt_budget(iterations: usize) -> Self {
        BatchSchedule::Constant((iterations as f64).sqrt().ceil() as usize)
    }
}

impl fmt::Debug for BatchSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSchedule::Constant(m) => write!(f, "Constant({m})"),
            BatchSchedule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Measure(ParticleMeasure),
    /// Uniform weights on the lattice of the given step.
    Grid { step: f64, total_mass: f64 },
}

/// Which measure the trace describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceTarget {
    Iterate,
    Cesaro,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub alpha: f64,
    pub eta: f64,
    pub iterations: usize,
    pub batch: BatchSchedule,
    pub lambda: f64,
    pub seed: u64,
    /// Replicate index; selects an independent stream for the same seed.
    pub stream: u64,
    pub init: Init,
    pub mode: Mode,
    pub cesaro: bool,
    /// Record every n-th iteration (plus the first and last); 0 disables tracing.
    pub trace_every: usize,
    pub trace_target: TraceTarget,
    /// Abort on the first safeguard violation instead of counting it.
    pub strict: bool,
}

impl RunConfig {
    pub fn new(alpha: f64, eta: f64, iterations: usize, lambda: f64, init: Init) -> Self {
        RunConfig {
            alpha,
            eta,
            iterations,
            batch: BatchSchedule::Constant(1),
            lambda,
            seed: 0,
            stream: 0,
            init,
            mode: Mode::Stochastic,
            cesaro: false,
            trace_every: 1,
            trace_target: TraceTarget::Iterate,
            strict: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("eta", self.eta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(
                "lambda",
                format!("must be nonnegative, got {}", self.lambda),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("K", "at least one iteration is required"));
        }
        if self.trace_target == TraceTarget::Cesaro && !self.cesaro {
            return Err(Error::invalid("trace_target", "tracing the average requires cesaro"));
        }
        if let BatchSchedule::Constant(0) = self.batch {
            return Err(Error::invalid("batch", "batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Per-particle and total mass radii. `r0` is infinite when `g_inf <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radii {
    pub r0: f64,
    /// `max(|nu_0|, p r0)`.
    pub big_r0: f64,
    /// `sum_j max(w_j^0, r0)`; equals `big_r0` for equal initial weights.
    pub particle_bound: f64,
    pub hypothesis_met: bool,
}

pub fn compute_radii(bounds: &ModelBounds, lambda: f64, nu0: &ParticleMeasure) -> Radii {
    let excess = (bounds.h_sup - lambda).max(0.0);
    let hypothesis_met = bounds.g_inf > 0.0;
    let r0 = if !hypothesis_met {
        f64::INFINITY
    } else if excess == 0.0 {
        0.0
    } else {
        excess / bounds.g_inf * excess.exp()
    };
    let tv0 = nu0.tv_norm();
    let big_r0 = tv0.max(nu0.len() as f64 * r0);
    let particle_bound = if r0.is_finite() {
        nu0.weights().iter().map(|w| w.max(r0)).sum()
    } else {
        f64::INFINITY
    };
    Radii {
        r0,
        big_r0,
        particle_bound,
        hypothesis_met,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Fixed steps targeting the averaged iterate, batch size 1.
    Global,
    /// `alpha = eta = 1/sqrt(K)` with batch size `ceil(sqrt(K))`.
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub alpha: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub warning: Option<String>,
}

/// Step sizes for a budget of `iterations`. `c1` is the bound on the stochastic
/// differential, used to check the local schedule's step condition.
pub fn schedules(
    kind: ScheduleKind,
    dim: usize,
    tv_star: f64,
    big_r0: f64,
    iterations: usize,
    c1: f64,
) -> Result<Schedule> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    if iterations == 0 {
        return Err(Error::invalid("K", "must be positive"));
    }
    let k = iterations as f64;
    match kind {
        ScheduleKind::Global => {
            for (name, v) in [("tv_star", tv_star), ("R0", big_r0)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
                }
            }
            let d = dim as f64;
            Ok(Schedule {
                alpha: (d * tv_star / (big_r0.powi(3) * k)).sqrt(),
                eta: (d * big_r0 / (k.powi(3) * tv_star)).sqrt(),
                batch_size: 1,
                warning: None,
            })
        }
        ScheduleKind::Local => {
            let step = 1.0 / k.sqrt();
            let product = step * c1 * (big_r0 + 1.0);
            let warning = (!(product < 1.0)).then(|| {
                format!("step condition alpha*C1*(R0+1) < 1 violated: {product:.6e}")
            });
            Ok(Schedule {
                alpha: step,
                eta: step,
                batch_size: k.sqrt().ceil() as usize,
                warning,
            })
        }
    }
}

/// Loop state of a run.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub k: usize,
    pub nu: ParticleMeasure,
    pub rng: ChaCha8Rng,
    pub evals: u64,
    pub cesaro: Option<CesaroTracker>,
}

impl IterateState {
    pub fn new(nu: ParticleMeasure, seed: u64, stream: u64, cesaro: bool, periodic: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let cesaro = cesaro.then(|| CesaroTracker::new(&nu, periodic));
        IterateState {
            k: 0,
            nu,
            rng,
            evals: 0,
            cesaro,
        }
    }
}

/// What one step did, for the runtime safeguards.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Largest `|t_j^{k+1} - t_j^k| - eta |D_j|`.
    pub increment_excess: f64,
    pub any_weight_increased: bool,
    pub lost_positivity: bool,
    pub all_contained: bool,
    /// Some projection rescaled a weight.
    pub rescaled: bool,
    /// Largest `|J'_hat|` over the particles.
    pub max_abs_estimate: f64,
    pub tv_before: f64,
    pub tv_after: f64,
}

/// Advances `state` by one iteration. Both updates read the state at step `k`.
pub fn step(state: &mut IterateState, model: &dyn FeatureModel, cfg: &RunConfig) -> Result<StepReport> {
    let counting = CountingModel::new(model);
    let nu = &state.nu;
    let tv = nu.tv_norm();
    let batch = match cfg.mode {
        Mode::Stochastic => {
            if tv < EXTINCTION_MASS {
                return Err(Error::MassExtinct { iteration: state.k });
            }
            Some(draw_batch(&counting, nu, cfg.batch.size(state.k), &mut state.rng)?)
        }
        Mode::Deterministic => None,
    };
    let dim = nu.dim();
    let domain = model.domain();
    let mut weights = Vec::with_capacity(nu.len());
    let mut positions = Vec::with_capacity(nu.positions().len());
    let mut report = StepReport {
        increment_excess: f64::NEG_INFINITY,
        any_weight_increased: false,
        lost_positivity: false,
        all_contained: true,
        rescaled: false,
        max_abs_estimate: 0.0,
        tv_before: tv,
        tv_after: 0.0,
    };
    let mut direction = vec![0.0; dim];
    for j in 0..nu.len() {
        let t = nu.position(j);
        direction.iter_mut().for_each(|v| *v = 0.0);
        let jp = match &batch {
            Some(b) => {
                add_d_hat(&counting, nu, t, b, &mut direction);
                j_prime_hat(&counting, nu, t, cfg.lambda, b)
            }
            None => {
                add_grad_j_prime_exact(&counting, nu, t, &mut direction);
                j_prime_exact(&counting, nu, t, cfg.lambda)
            }
        };
        report.max_abs_estimate = report.max_abs_estimate.max(jp.abs());
        let sign = nu.sign(j);
        let w = nu.weight(j);
        let mut w_new = w * (-cfg.alpha * (sign * (jp - cfg.lambda) + cfg.lambda)).exp();
        let start = positions.len();
        positions.extend(t.iter().zip(&direction).map(|(x, g)| x - cfg.eta * sign * g));
        let factor = counting.project(&mut positions[start..]);
        if factor != 1.0 {
            report.rescaled = true;
            w_new *= factor;
        }
        let moved = domain.distance(&positions[start..], t);
        report.increment_excess = report.increment_excess.max(moved - cfg.eta * norm(&direction));
        report.all_contained &= domain.contains(&positions[start..], SAFEGUARD_SLACK);
        report.any_weight_increased |= w_new > w;
        report.lost_positivity |= w > 0.0 && !(w_new > 0.0);
        weights.push(w_new);
    }
    let next = nu.with_state(weights, positions);
    report.tv_after = next.tv_norm();
    state.evals += counting.count();
    if let Some(tracker) = state.cesaro.as_mut() {
        tracker.record(&next)?;
    }
    state.nu = next;
    state.k += 1;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    MassExtinct { iteration: usize },
}

/// Counts of runtime safeguard violations over a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SafeguardReport {
    /// Whether the total-mass radius was checked (needs `g_inf > 0`, `alpha <= 1`).
    pub tv_checked: bool,
    /// Whether monotone weights were checked (needs `lambda >= h_sup`, `g >= 0`).
    pub monotone_checked: bool,
    pub tv_violations: usize,
    pub monotone_violations: usize,
    pub increment_violations: usize,
    pub containment_violations: usize,
    pub positivity_violations: usize,
    pub estimate_bound_violations: usize,
    pub max_tv: f64,
    pub first_violation: Option<String>,
}

impl SafeguardReport {
    pub fn total(&self) -> usize {
        self.tv_violations
            + self.monotone_violations
            + self.increment_violations
            + self.containment_violations
            + self.positivity_violations
            + self.estimate_bound_violations
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_measure: ParticleMeasure,
    pub cesaro: Option<ParticleMeasure>,
    pub trace: Vec<TraceRecord>,
    pub evals: u64,
    pub iterations: usize,
    pub radii: Radii,
    pub bounds: ModelBounds,
    pub safeguards: SafeguardReport,
    pub status: RunStatus,
}

/// Builds the initial measure described by `init`.
pub fn initial_measure(model: &dyn FeatureModel, init: &Init) -> Result<ParticleMeasure> {
    let nu = match init {
        Init::Measure(nu) => nu.clone(),
        Init::Grid { step, total_mass } => grid_for_domain(model.domain(), model.dim(), *step, *total_mass)?,
    };
    if nu.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: nu.dim(),
        });
    }
    Ok(nu)
}

pub fn run(cfg: &RunConfig, model: &dyn FeatureModel) -> Result<RunOutcome> {
    run_with_observer(cfg, model, |_, _| {})
}

/// Runs `cfg.iterations` steps, calling `observer` after each one.
pub fn run_with_observer(
    cfg: &RunConfig,
    model: &dyn FeatureModel,
    mut observer: impl FnMut(&IterateState, &StepReport),
) -> Result<RunOutcome> {
    cfg.validate()?;
    let nu0 = initial_measure(model, &cfg.init)?;
    let bounds = model.bounds();
    let radii = compute_radii(&bounds, cfg.lambda, &nu0);
    let c1 = differential_bounds(&bounds, model.y_norm_sq(), cfg.lambda).c1;
    let unsigned = nu0.signs().is_none();
    let mut guards = SafeguardReport {
        tv_checked: radii.hypothesis_met && cfg.alpha <= 1.0 && unsigned,
        monotone_checked: cfg.lambda >= bounds.h_sup && bounds.g_inf >= 0.0 && unsigned,
        max_tv: nu0.tv_norm(),
        ..SafeguardReport::default()
    };
    let start = Instant::now();
    let mut state = IterateState::new(nu0, cfg.seed, cfg.stream, cfg.cesaro, model.domain().is_periodic());
    let mut trace = Vec::new();
    if cfg.trace_every > 0 {
        trace.push(trace_record(model, &state, cfg, start));
    }
    let mut status = RunStatus::Completed;
    for _ in 0..cfg.iterations {
        let report = match step(&mut state, model, cfg) {
            Ok(r) => r,
            Err(Error::MassExtinct { iteration }) => {
                status = RunStatus::MassExtinct { iteration };
                break;
            }
            Err(e) => return Err(e),
        };
        check_safeguards(&mut guards, &report, &radii, c1, cfg, state.k)?;
        observer(&state, &report);
        if cfg.trace_every > 0 && (state.k.is_multiple_of(cfg.trace_every) || state.k == cfg.iterations) {
            trace.push(trace_record(model, &state, cfg, start));
        }
    }
    let cesaro = state.cesaro.as_ref().map(CesaroTracker::average);
    Ok(RunOutcome {
        final_measure: state.nu,
        cesaro,
        trace,
        evals: state.evals,
        iterations: state.k,
        radii,
        bounds,
        safeguards: guards,
        status,
    })
}

fn check_safeguards(
    guards: &mut SafeguardReport,
    report: &StepReport,
    radii: &Radii,
    c1: f64,
    cfg: &RunConfig,
    k: usize,
) -> Result<()> {
    guards.max_tv = guards.max_tv.max(report.tv_after);
    let mut failures: Vec<String> = Vec::new();
    if guards.tv_checked && !report.rescaled {
        let bound = radii.particle_bound;
        if report.tv_after > bound + SAFEGUARD_SLACK * (1.0 + bound) {
            guards.tv_violations += 1;
            failures.push(format!("total mass {} exceeds radius {}", report.tv_after, bound));
        }
    }
    if guards.monotone_checked && !report.rescaled && report.any_weight_increased {
        guards.monotone_violations += 1;
        failures.push("a weight increased although lambda >= h_sup".into());
    }
    if report.increment_excess > SAFEGUARD_SLACK {
        guards.increment_violations += 1;
        failures.push(format!("position increment exceeds eta*|D| by {}", report.increment_excess));
    }
    if !report.all_contained {
        guards.containment_violations += 1;
        failures.push("a position left the domain".into());
    }
    if report.lost_positivity {
        guards.positivity_violations += 1;
        failures.push("a positive weight became nonpositive".into());
    }
    if cfg.mode == Mode::Stochastic {
        let bound = c1 * (report.tv_before + 1.0);
        if report.max_abs_estimate > bound * (1.0 + SAFEGUARD_SLACK) {
            guards.estimate_bound_violations += 1;
            failures.push(format!("|J'_hat| = {} exceeds {}", report.max_abs_estimate, bound));
        }
    }
    if let Some(what) = failures.into_iter().next() {
        if cfg.strict {
            return Err(Error::Safeguard { iteration: k, what });
        }
        guards.first_violation.get_or_insert(format!("iteration {k}: {what}"));
    }
    Ok(())
}

fn trace_record(model: &dyn FeatureModel, state: &IterateState, cfg: &RunConfig, start: Instant) -> TraceRecord {
    let averaged;
    let nu = match (cfg.trace_target, &state.cesaro) {
        (TraceTarget::Cesaro, Some(tracker)) => {
            averaged = tracker.average();
            &averaged
        }
        _ => &state.nu,
    };
    let (local_j2, local_g2) = local_sq_norms(model, nu, cfg.lambda);
    TraceRecord {
        k: state.k,
        objective: objective(model, nu, cfg.lambda),
        tv: nu.tv_norm(),
        local_j2,
        local_g2,
        evals: state.evals,
        wall_ns: start.elapsed().as_nanos(),
    }
}
