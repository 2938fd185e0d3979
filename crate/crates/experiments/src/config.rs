//! Experiment configuration: sectioned `key = value` files.
//!
//! ```ini
//! [model]
//! kind = gmm
//! benchmark = gmm3a
//!
//! [solver]
//! schedule = global
//! K = 20000
//! tv_star = oracle
//! grid_step = 0.04
//! cesaro = true
//!
//! [output]
//! dir = out
//! ```
//!
//! `[variant.NAME]` sections override `[solver]` keys for `compare`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fastpart::diagnostics::OracleMethod;
use fastpart::model::GroundTruth;
use fastpart::optimizer::{Mode, TraceTarget};
use ini::Ini;

use crate::error::{CliError, CliResult};

type Entries = BTreeMap<String, String>;

/// Typed access to one section, reporting failures with the field name.
struct Section<'a> {
    name: &'a str,
    entries: &'a Entries,
}

impl<'a> Section<'a> {
    fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::field(self.name, k, "unknown key")),
            None => Ok(()),
        }
    }

    fn str(&self, key: &str) -> Option<&'a str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> CliResult<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::field(self.name, key, format!("expected {what}, got `{v}`"))),
        }
    }

    fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        let v: Option<f64> = self.parse(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(CliError::field(self.name, key, "must be finite")),
            v => Ok(v),
        }
    }

    fn positive(&self, key: &str) -> CliResult<Option<f64>> {
        match self.f64(key)? {
            Some(x) if x <= 0.0 => Err(CliError::field(self.name, key, format!("must be positive, got {x}"))),
            v => Ok(v),
        }
    }

    fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        self.parse(key, "a nonnegative integer")
    }

    fn u64(&self, key: &str) -> CliResult<Option<u64>> {
        self.parse(key, "a nonnegative integer")
    }

    fn bool(&self, key: &str) -> CliResult<Option<bool>> {
        match self.str(key) {
            None => Ok(None),
            Some("true" | "yes" | "on" | "1") => Ok(Some(true)),
            Some("false" | "no" | "off" | "0") => Ok(Some(false)),
            Some(v) => Err(CliError::field(self.name, key, format!("expected a boolean, got `{v}`"))),
        }
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> CliResult<T> {
        v.ok_or_else(|| CliError::field(self.name, key, "missing required key"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GmmSource {
    Benchmark(String),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Gmm {
        source: GmmSource,
        n: Option<usize>,
        data_seed: u64,
        s: Option<f64>,
        m: Option<f64>,
        radius: Option<f64>,
        truncate: bool,
    },
    Fourier {
        dim: usize,
        fc: u32,
        truth: GroundTruth,
    },
    Relu {
        dim: usize,
        n: usize,
        data_seed: u64,
        teacher: GroundTruth,
        noise_std: f64,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Manual { alpha: f64, eta: f64 },
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSpec {
    Constant(usize),
    /// `ceil(sqrt(K))`.
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassSpec {
    Value(f64),
    /// Use the estimate of the optimal total mass.
    TvStar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TvStarSpec {
    Value(f64),
    /// Total mass of the grid reference solution.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub mode: Mode,
    pub schedule: ScheduleSpec,
    pub iterations: usize,
    pub batch: Option<BatchSpec>,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub stream: u64,
    pub grid_step: f64,
    pub init_mass: MassSpec,
    pub tv_star: Option<TvStarSpec>,
    pub cesaro: bool,
    pub trace_target: TraceTarget,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub trace_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub grid_step: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub method: OracleMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifySpec {
    pub grid_step: f64,
    pub tol: f64,
    pub mass_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// `J* + f (J(nu_0) - J*)` with `J*` from the oracle.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub solver: SolverSpec,
    pub variants: Vec<(String, SolverSpec)>,
    pub output: OutputSpec,
    pub oracle: OracleSpec,
    pub certify: CertifySpec,
    pub threshold: Threshold,
}

const MODEL_KEYS: &[&str] = &[
    "kind", "benchmark", "data", "n", "data_seed", "s", "m", "radius", "truncate", "dim", "fc", "spikes",
    "noise", "teacher", "noise_std",
];
const SOLVER_KEYS: &[&str] = &[
    "mode", "schedule", "alpha", "eta", "K", "batch", "lambda", "seed", "stream", "grid_step", "init_mass",
    "tv_star", "cesaro", "trace_target", "strict",
];

/// Parses `w:x1,x2 | w:x1,x2`.
fn parse_atoms(section: &str, key: &str, text: &str, dim: usize) -> CliResult<Vec<(f64, Vec<f64>)>> {
    let bad = |reason: String| CliError::field(section, key, reason);
    text.split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|atom| {
            let (w, t) = atom
                .split_once(':')
                .ok_or_else(|| bad(format!("atom `{atom}` must look like weight:coord,...")))?;
            let w: f64 = w.trim().parse().map_err(|_| bad(format!("bad weight in `{atom}`")))?;
            let t = t
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| bad(format!("bad coordinate in `{atom}`")))?;
            if t.len() != dim {
                return Err(bad(format!("atom `{atom}` has {} coordinates, expected {dim}", t.len())));
            }
            Ok((w, t))
        })
        .collect()
}

fn parse_model(sec: &Section, base: &Path) -> CliResult<ModelSpec> {
    sec.check_keys(MODEL_KEYS)?;
    let kind = sec.str("kind").unwrap_or("gmm");
    let dim = sec.usize("dim")?.unwrap_or(1);
    if dim == 0 {
        return Err(CliError::field(sec.name, "dim", "must be at least 1"));
    }
    match kind {
        "gmm" => {
            let source = match (sec.str("benchmark"), sec.str("data")) {
                (Some(b), None) => {
                    if crate::benchmarks::benchmark(b).is_none() {
                        return Err(CliError::field(sec.name, "benchmark", format!("unknown benchmark `{b}`")));
                    }
                    GmmSource::Benchmark(b.to_string())
                }
                (None, Some(d)) => {
                    let path = base.join(d);
                    if !path.is_file() {
                        return Err(CliError::field(
                            sec.name,
                            "data",
                            format!("file {} does not exist", path.display()),
                        ));
                    }
                    GmmSource::File(path)
                }
                (Some(_), Some(_)) => {
                    return Err(CliError::field(sec.name, "data", "give either `benchmark` or `data`, not both"))
                }
                (None, None) => return Err(CliError::field(sec.name, "benchmark", "a gmm model needs `benchmark` or `data`")),
            };
            let n = sec.usize("n")?;
            if n == Some(0) {
                return Err(CliError::field(sec.name, "n", "must be at least 1"));
            }
            let spec = ModelSpec::Gmm {
                source,
                n,
                data_seed: sec.u64("data_seed")?.unwrap_or(0),
                s: sec.positive("s")?,
                m: sec.positive("m")?,
                radius: sec.positive("radius")?,
                truncate: sec.bool("truncate")?.unwrap_or(false),
            };
            if let ModelSpec::Gmm { source: GmmSource::File(_), s: None, .. } = &spec {
                return Err(CliError::field(sec.name, "s", "required with a data file"));
            }
            Ok(spec)
        }
        "fourier" => {
            let fc = sec.parse::<u32>("fc", "a nonnegative integer")?;
            let spikes = sec.required("spikes", sec.str("spikes"))?;
            let truth = GroundTruth {
                spikes: parse_atoms(sec.name, "spikes", spikes, dim)?,
                noise: parse_atoms(sec.name, "noise", sec.str("noise").unwrap_or(""), dim)?,
            };
            Ok(ModelSpec::Fourier {
                dim,
                fc: sec.required("fc", fc)?,
                truth,
            })
        }
        "relu" => {
            let teacher = sec.required("teacher", sec.str("teacher"))?;
            let n = sec.required("n", sec.usize("n")?)?;
            if n == 0 {
                return Err(CliError::field(sec.name, "n", "must be at least 1"));
            }
            let noise_std = sec.f64("noise_std")?.unwrap_or(0.0);
            if noise_std < 0.0 {
                return Err(CliError::field(sec.name, "noise_std", "must be nonnegative"));
            }
            Ok(ModelSpec::Relu {
                dim,
                n,
                data_seed: sec.u64("data_seed")?.unwrap_or(0),
                teacher: GroundTruth {
                    spikes: parse_atoms(sec.name, "teacher", teacher, dim)?,
                    noise: Vec::new(),
                },
                noise_std,
                radius: sec.positive("radius")?.unwrap_or(1.0),
            })
        }
        other => Err(CliError::field(sec.name, "kind", format!("expected gmm, fourier or relu, got `{other}`"))),
    }
}

fn parse_solver(sec: &Section) -> CliResult<SolverSpec> {
    sec.check_keys(SOLVER_KEYS)?;
    let mode = match sec.str("mode").unwrap_or("stochastic") {
        "stochastic" => Mode::Stochastic,
        "deterministic" => Mode::Deterministic,
        other => return Err(CliError::field(sec.name, "mode", format!("expected stochastic or deterministic, got `{other}`"))),
    };
    let schedule = match sec.str("schedule").unwrap_or("manual") {
        "manual" => ScheduleSpec::Manual {
            alpha: sec.required("alpha", sec.positive("alpha")?)?,
            eta: sec.required("eta", sec.positive("eta")?)?,
        },
        kind @ ("global" | "local") => {
            for key in ["alpha", "eta"] {
                if sec.str(key).is_some() {
                    return Err(CliError::field(sec.name, key, format!("not allowed with schedule = {kind}")));
                }
            }
            if kind == "global" {
                ScheduleSpec::Global
            } else {
                ScheduleSpec::Local
            }
        }
        other => return Err(CliError::field(sec.name, "schedule", format!("expected manual, global or local, got `{other}`"))),
    };
    let iterations = sec.required("K", sec.usize("K")?)?;
    if iterations == 0 {
        return Err(CliError::field(sec.name, "K", "must be at least 1"));
    }
    let batch = match sec.str("batch") {
        None => None,
        Some("sqrt") => Some(BatchSpec::Sqrt),
        Some(_) => match sec.usize("batch")? {
            Some(0) => return Err(CliError::field(sec.name, "batch", "must be at least 1")),
            Some(m) => Some(BatchSpec::Constant(m)),
            None => None,
        },
    };
    let lambda = sec.positive("lambda")?;
    let grid_step = sec.required("grid_step", sec.positive("grid_step")?)?;
    let init_mass = match sec.str("init_mass") {
        Some("tv_star") => MassSpec::TvStar,
        _ => match sec.f64("init_mass")? {
            Some(x) if x <= 0.0 => return Err(CliError::field(sec.name, "init_mass", format!("must be positive, got {x}"))),
            Some(x) => MassSpec::Value(x),
            None => MassSpec::Value(1.0),
        },
    };
    let tv_star = match sec.str("tv_star") {
        None => None,
        Some("oracle") => Some(TvStarSpec::Oracle),
        Some(_) => sec.positive("tv_star")?.map(TvStarSpec::Value),
    };
    if schedule == ScheduleSpec::Global && tv_star.is_none() {
        return Err(CliError::field(sec.name, "tv_star", "required with schedule = global"));
    }
    if init_mass == MassSpec::TvStar && tv_star.is_none() {
        return Err(CliError::field(sec.name, "init_mass", "`tv_star` requires the tv_star key"));
    }
    let cesaro = sec.bool("cesaro")?.unwrap_or(false);
    let trace_target = match sec.str("trace_target").unwrap_or("iterate") {
        "iterate" => TraceTarget::Iterate,
        "cesaro" => TraceTarget::Cesaro,
        other => return Err(CliError::field(sec.name, "trace_target", format!("expected iterate or cesaro, got `{other}`"))),
    };
    if trace_target == TraceTarget::Cesaro && !cesaro {
        return Err(CliError::field(sec.name, "trace_target", "cesaro tracing requires cesaro = true"));
    }
    Ok(SolverSpec {
        mode,
        schedule,
        iterations,
        batch,
        lambda,
        seed: sec.u64("seed")?.unwrap_or(0),
        stream: sec.u64("stream")?.unwrap_or(0),
        grid_step,
        init_mass,
        tv_star,
        cesaro,
        trace_target,
        strict: sec.bool("strict")?.unwrap_or(false),
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        let mut sections: BTreeMap<String, Entries> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if props.iter().next().is_some() {
                    return Err(CliError::Config("keys must appear inside a section".into()));
                }
                continue;
            };
            let entries = sections.entry(name.to_string()).or_default();
            for (k, v) in props.iter() {
                entries.insert(k.to_string(), v.to_string());
            }
            if !order.iter().any(|n| n == name) {
                order.push(name.to_string());
            }
        }
        let known = ["model", "solver", "output", "oracle", "certify", "compare"];
        if let Some(bad) = order.iter().find(|n| !known.contains(&n.as_str()) && !n.starts_with("variant.")) {
            return Err(CliError::Config(format!("unknown section [{bad}]")));
        }
        let empty = Entries::new();
        let get = |name: &'static str| Section {
            name,
            entries: sections.get(name).unwrap_or(&empty),
        };
        if !sections.contains_key("model") {
            return Err(CliError::Config("missing [model] section".into()));
        }
        if !sections.contains_key("solver") {
            return Err(CliError::Config("missing [solver] section".into()));
        }
        let model = parse_model(&get("model"), base)?;
        let solver_entries = sections.get("solver").cloned().unwrap_or_default();
        let solver = parse_solver(&get("solver"))?;
        let mut variants = Vec::new();
        for name in order.iter().filter(|n| n.starts_with("variant.")) {
            let mut merged = solver_entries.clone();
            merged.extend(sections[name].clone());
            // a variant switching to an automatic schedule drops inherited steps
            if merged.get("schedule").is_some_and(|s| s != "manual") && !sections[name].contains_key("alpha") {
                merged.remove("alpha");
                merged.remove("eta");
            }
            let sec = Section { name, entries: &merged };
            variants.push((name["variant.".len()..].to_string(), parse_solver(&sec)?));
        }

        let out = get("output");
        out.check_keys(&["dir", "trace_every"])?;
        let output = OutputSpec {
            dir: base.join(out.str("dir").unwrap_or("out")),
            trace_every: out.usize("trace_every")?.unwrap_or(1),
        };

        let orc = get("oracle");
        orc.check_keys(&["grid_step", "tol", "max_iter", "method"])?;
        let oracle = OracleSpec {
            grid_step: orc.positive("grid_step")?.unwrap_or(1e-3),
            tol: orc.positive("tol")?.unwrap_or(1e-6),
            max_iter: orc.usize("max_iter")?.unwrap_or(10_000),
            method: match orc.str("method").unwrap_or("active_set") {
                "active_set" => OracleMethod::ActiveSet,
                "proximal" => OracleMethod::ProximalGradient,
                other => return Err(CliError::field("oracle", "method", format!("expected active_set or proximal, got `{other}`"))),
            },
        };

        let cert = get("certify");
        cert.check_keys(&["grid_step", "tol", "mass_threshold"])?;
        let certify = CertifySpec {
            grid_step: cert.positive("grid_step")?.unwrap_or(oracle.grid_step),
            tol: cert.positive("tol")?.unwrap_or(1e-5),
            mass_threshold: cert.f64("mass_threshold")?.unwrap_or(fastpart::diagnostics::DEFAULT_MASS_THRESHOLD),
        };

        let cmp = get("compare");
        cmp.check_keys(&["threshold", "threshold_fraction"])?;
        let threshold = match (cmp.f64("threshold")?, cmp.positive("threshold_fraction")?) {
            (Some(_), Some(_)) => {
                return Err(CliError::field("compare", "threshold", "give either threshold or threshold_fraction"))
            }
            (Some(t), None) => Threshold::Absolute(t),
            (None, f) => Threshold::Fraction(f.unwrap_or(0.05)),
        };

        Ok(ExperimentConfig {
            model,
            solver,
            variants,
            output,
            oracle,
            certify,
            threshold,
        })
    }
}
