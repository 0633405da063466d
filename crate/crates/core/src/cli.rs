//! Run configurations, experiment dispatch and result records.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cayley::GroupSpec;
use crate::derived::{pressure_estimate, Enforcement, McmcOptions, MethodChoice, PressureOptions};
use crate::error::{Error, Result};
use crate::gibbs::{entropy_rate_estimate, ssm_profile, uniform_bound_c, EntropyOptions};
use crate::kieffer::{
    hardcore_marginal_via_saw, kp_pressure_at_fixed_point, kp_pressure_at_measure, Backend, MarginalOracle,
    NuSampler, SimpleGraph, C_HAT_RADIUS,
};
use crate::limits::Caps;
use crate::model::{Model, SoficBlock};
use crate::shift::check_tssm;
use crate::sofic::{good_vertices, Builder};

fn default_sizes() -> Vec<usize> {
    vec![8, 16, 32, 64]
}
fn default_method() -> MethodChoice {
    MethodChoice::Auto
}
fn one() -> usize {
    1
}
fn three() -> usize {
    3
}
fn default_oracle() -> String {
    "transfer".into()
}
fn default_r() -> usize {
    16
}
fn default_n() -> usize {
    200_000
}
fn default_nu() -> String {
    "fixed0".into()
}
fn default_outer() -> usize {
    2000
}
fn default_pad() -> usize {
    6
}
fn default_rmax() -> usize {
    8
}
fn default_sweeps() -> usize {
    200
}
fn default_lambda() -> f64 {
    1.0
}
fn default_sigmas() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    Pressure {
        #[serde(default = "default_sizes")]
        sizes: Vec<usize>,
        #[serde(default = "default_method")]
        method: MethodChoice,
        #[serde(default)]
        enforcement: Enforcement,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        mcmc: Option<McmcOptions>,
    },
    Entropy {
        #[serde(default = "default_sizes")]
        sizes: Vec<usize>,
        #[serde(default = "default_method")]
        method: MethodChoice,
        #[serde(default)]
        enforcement: Enforcement,
        #[serde(default)]
        lambda: Option<f64>,
    },
    TssmCheck {
        #[serde(default = "one")]
        range: usize,
        #[serde(default = "three")]
        radius: usize,
        #[serde(default = "three")]
        kmax: usize,
    },
    SsmProfile {
        #[serde(default = "default_rmax")]
        rmax: usize,
        #[serde(default)]
        lambda: Option<f64>,
    },
    KpEstimate {
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_oracle")]
        oracle: String,
        #[serde(default = "default_r")]
        r: usize,
        /// Total past samples; with `nu = mu` they are split evenly over
        /// the outer samples.
        #[serde(rename = "N", default = "default_n")]
        n: usize,
        #[serde(default = "default_nu")]
        nu: String,
        #[serde(default = "default_outer")]
        outer: usize,
        #[serde(default = "default_pad")]
        pad: usize,
        /// Sofic size and sweeps for Glauber pullbacks off ℤ¹.
        #[serde(default)]
        glauber_size: Option<usize>,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    SawMarginal {
        graph: PathBuf,
        #[serde(default)]
        root: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        pins: Option<Vec<Option<bool>>>,
    },
    SoficStats {
        m: usize,
        #[serde(default = "three")]
        r: usize,
    },
    Compare {
        a: Box<RunConfig>,
        b: Box<RunConfig>,
        tolerance: f64,
        #[serde(default = "default_sigmas")]
        sigmas: f64,
    },
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Pressure { .. } => "pressure",
            Experiment::Entropy { .. } => "entropy",
            Experiment::TssmCheck { .. } => "tssm-check",
            Experiment::SsmProfile { .. } => "ssm-profile",
            Experiment::KpEstimate { .. } => "kp-estimate",
            Experiment::SawMarginal { .. } => "saw-marginal",
            Experiment::SoficStats { .. } => "sofic-stats",
            Experiment::Compare { .. } => "compare",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Overrides the model's sofic block.
    #[serde(default)]
    pub sofic: Option<SoficBlock>,
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig { model: None, sofic: None, experiment, seed: 0, output: None, format: OutputFormat::Json }
    }

    /// Strict parse: keys that no field consumes are rejected.
    pub fn parse(s: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_value(raw)
    }

    fn from_value(raw: Value) -> Result<Self> {
        let c: RunConfig = serde_json::from_value(raw.clone()).map_err(|e| Error::Schema(e.to_string()))?;
        let echo = serde_json::to_value(&c)?;
        if let (Some(r), Some(e)) = (raw.as_object(), echo.as_object()) {
            if let Some(k) = r.keys().find(|k| !e.contains_key(*k)) {
                return Err(Error::Schema(format!("unknown field {k:?}")));
            }
        }
        Ok(c)
    }

    /// Reads a config; relative paths inside are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::parse(&std::fs::read_to_string(path)?)?;
        c.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(c)
    }

    fn resolve(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(m) = self.model.as_mut() {
            fix(m);
        }
        if let Some(o) = self.output.as_mut() {
            fix(o);
        }
        match &mut self.experiment {
            Experiment::SawMarginal { graph, .. } => fix(graph),
            Experiment::Compare { a, b, .. } => {
                a.resolve(dir);
                b.resolve(dir);
            }
            _ => {}
        }
    }

    fn model(&self) -> Result<Model> {
        let path = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Schema(format!("{} needs a model file", self.experiment.id())))?;
        Model::load(path)
    }

    fn builder(&self, model: &Model) -> Result<(Builder, Option<Vec<usize>>)> {
        let block = self
            .sofic
            .as_ref()
            .or(model.sofic.as_ref())
            .ok_or_else(|| Error::Schema("no sofic block in the config or the model".into()))?;
        Ok((block.builder(&model.spec)?, block.sizes()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    /// The configuration with every default filled in.
    pub inputs: Value,
    pub outputs: Value,
    pub wall_time_s: f64,
    pub version: String,
    pub seed: u64,
    #[serde(skip)]
    pub csv: Option<String>,
}

fn with_lambda(model: Model, lambda: Option<f64>) -> Result<Model> {
    match lambda {
        Some(l) => model.with_activity(l),
        None => Ok(model),
    }
}

fn csv_table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Runs one experiment and, when the config names an output path, writes
/// the record (JSON) or table (CSV) there after it succeeded.
pub fn run(config: &RunConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let caps = Caps::from_env()?;
    let (outputs, csv): (Value, Option<String>) = match &config.experiment {
        Experiment::Pressure { sizes, method, enforcement, lambda, mcmc } => {
            let model = with_lambda(config.model()?, *lambda)?;
            let (builder, block_sizes) = config.builder(&model)?;
            let sizes = if sizes == &default_sizes() { block_sizes.unwrap_or_else(|| sizes.clone()) } else { sizes.clone() };
            let mut mcmc = mcmc.unwrap_or_default();
            mcmc.seed = config.seed;
            let opts = PressureOptions { method: *method, enforcement: *enforcement, mcmc, caps };
            let pts = pressure_estimate(&model.structure, &model.potential, &builder, &sizes, &opts)?;
            let csv = csv_table(
                "n,log_Z,pressure_estimate,stderr,method,seed",
                pts.iter().map(|p| {
                    format!("{},{},{},{},{},{}", p.n, p.log_z, p.pressure, p.stderr, p.method.as_str(), p.seed.unwrap_or(config.seed))
                }),
            );
            (serde_json::to_value(&pts)?, Some(csv))
        }
        Experiment::Entropy { sizes, method, enforcement, lambda } => {
            let model = with_lambda(config.model()?, *lambda)?;
            let (builder, block_sizes) = config.builder(&model)?;
            let sizes = if sizes == &default_sizes() { block_sizes.unwrap_or_else(|| sizes.clone()) } else { sizes.clone() };
            let mcmc = McmcOptions { seed: config.seed, ..McmcOptions::default() };
            let opts = EntropyOptions { method: *method, enforcement: *enforcement, mcmc, caps };
            let pts = entropy_rate_estimate(&model.structure, &model.potential, &builder, &sizes, &opts)?;
            let csv = csv_table(
                "n,entropy_rate,stderr,method",
                pts.iter().map(|p| format!("{},{},{},{}", p.n, p.entropy_rate, p.stderr, p.method.as_str())),
            );
            (serde_json::to_value(&pts)?, Some(csv))
        }
        Experiment::TssmCheck { range, radius, kmax } => {
            let model = config.model()?;
            let v = check_tssm(&model.structure, &model.spec, *range, *radius, *kmax)?;
            (serde_json::to_value(&v)?, None)
        }
        Experiment::SsmProfile { rmax, lambda } => {
            let model = with_lambda(config.model()?, *lambda)?;
            let beta = ssm_profile(&model.structure, &model.potential, &model.spec, *rmax)?;
            let rows: Vec<Value> = beta.iter().enumerate().map(|(r, b)| json!({"r": r, "beta_hat": b})).collect();
            let csv = csv_table("r,beta_hat", beta.iter().enumerate().map(|(r, b)| format!("{r},{b}")));
            (Value::Array(rows), Some(csv))
        }
        Experiment::KpEstimate { lambda, oracle, r, n, nu, outer, pad, glauber_size, sweeps } => {
            let model = with_lambda(config.model()?, *lambda)?;
            let backend = Backend::parse(oracle, *pad)?;
            let o = MarginalOracle::new(&model.structure, &model.potential, &model.spec, backend, *r)?;
            let budget_beta = ssm_profile(&model.structure, &model.potential, &model.spec, *r)
                .ok()
                .and_then(|b| b.last().copied());
            let budget_c =
                uniform_bound_c(&model.structure, &model.potential, &model.spec, C_HAT_RADIUS).ok().map(|u| u.c_hat);
            let mut out = match nu.as_str() {
                "fixed0" => {
                    let e = kp_pressure_at_fixed_point(&o, *r, *n, config.seed)?;
                    serde_json::to_value(&e)?
                }
                "mu" => {
                    let sampler = if model.spec == GroupSpec::zd(1) {
                        NuSampler::Markov1D
                    } else {
                        let (builder, _) = config.builder(&model)?;
                        let size = glauber_size
                            .ok_or_else(|| Error::Schema("nu = mu off ℤ¹ needs glauber_size".into()))?;
                        NuSampler::GlauberPullback { builder, size, sweeps: *sweeps }
                    };
                    let inner = (*n / *outer).max(1);
                    let e = kp_pressure_at_measure(&o, &sampler, *r, inner, *outer, config.seed)?;
                    let mut v = serde_json::to_value(&e.total)?;
                    v["info"] = json!({"value": e.info.value, "stderr": e.info.stderr});
                    v["outer"] = json!(e.outer);
                    v
                }
                other => return Err(Error::InvalidArgument(format!("unknown nu {other:?}; use fixed0 or mu"))),
            };
            out["budget_beta"] = json!(budget_beta);
            out["budget_c"] = json!(budget_c);
            out["nu"] = json!(nu);
            (out, None)
        }
        Experiment::SawMarginal { graph, root, lambda, pins } => {
            let g = SimpleGraph::from_json(&std::fs::read_to_string(graph)?)?;
            let pins = pins.clone().unwrap_or_else(|| vec![None; g.len()]);
            if pins.len() != g.len() {
                return Err(Error::Schema("pins must list one entry per vertex".into()));
            }
            let p = hardcore_marginal_via_saw(&g, *root, &vec![*lambda; g.len()], &pins)?;
            (json!({"root": root, "lambda": lambda, "marginal": p}), None)
        }
        Experiment::SoficStats { m, r } => {
            let block = config.sofic.as_ref().ok_or_else(|| Error::Schema("sofic-stats needs a sofic block".into()))?;
            let spec = sofic_group(block)?;
            let sigma = block.builder(&spec)?.build_with_cap(*m, caps.vertices)?;
            let report = good_vertices(&sigma, &spec.ball_with_cap(*r, caps.ball)?);
            (serde_json::to_value(&report)?, None)
        }
        Experiment::Compare { a, b, tolerance, sigmas } => {
            let ra = run(a)?;
            let rb = run(b)?;
            (serde_json::to_value(compare(&ra, &rb, *tolerance, *sigmas)?)?, None)
        }
    };
    let record = ResultRecord {
        experiment: config.experiment.id().into(),
        inputs: serde_json::to_value(config)?,
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        csv,
    };
    if let Some(path) = &config.output {
        std::fs::write(path, render(&record, config.format)?)?;
    }
    Ok(record)
}

/// The group implied by a bare sofic block: `params.d` for tori and boxes,
/// `params.k` for random permutations.
pub fn sofic_group(block: &SoficBlock) -> Result<GroupSpec> {
    let get = |k: &str| block.params.get(k).and_then(Value::as_u64).map(|x| x as usize);
    match block.builder.as_str() {
        "torus" | "folner" | "folner_box" => Ok(GroupSpec::zd(get("d").unwrap_or(1))),
        "random_perm" => Ok(GroupSpec::free(get("k").unwrap_or(2))),
        other => Err(Error::Schema(format!("unknown builder {other:?}"))),
    }
}

/// The record as pretty JSON or, for tabular experiments, CSV.
pub fn render(record: &ResultRecord, format: OutputFormat) -> Result<String> {
    match (format, &record.csv) {
        (OutputFormat::Csv, Some(c)) => Ok(c.clone()),
        (OutputFormat::Csv, None) => {
            Err(Error::InvalidArgument(format!("{} has no CSV form; use --json", record.experiment)))
        }
        (OutputFormat::Json, _) => Ok(serde_json::to_string_pretty(record)? + "\n"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub value_a: f64,
    pub stderr_a: f64,
    pub value_b: f64,
    pub stderr_b: f64,
    pub diff: f64,
    pub tolerance: f64,
    pub joint_stderr: f64,
    pub threshold: f64,
    pub pass: bool,
    pub arithmetic: String,
}

/// The scalar a record reports and what it measures.
fn headline(r: &ResultRecord) -> Result<(&'static str, f64, f64)> {
    let o = &r.outputs;
    let num = |v: &Value, k: &str| v.get(k).and_then(Value::as_f64);
    let last = || o.as_array().and_then(|a| a.last()).cloned().unwrap_or(Value::Null);
    let got = match r.experiment.as_str() {
        "pressure" => num(&last(), "pressure").map(|v| ("pressure", v, num(&last(), "stderr").unwrap_or(0.0))),
        "kp-estimate" => num(o, "value").map(|v| ("pressure", v, num(o, "stderr").unwrap_or(0.0))),
        "entropy" => num(&last(), "entropy_rate").map(|v| ("entropy", v, num(&last(), "stderr").unwrap_or(0.0))),
        "ssm-profile" => num(&last(), "beta_hat").map(|v| ("beta_hat", v, 0.0)),
        "saw-marginal" => num(o, "marginal").map(|v| ("marginal", v, 0.0)),
        _ => None,
    };
    got.ok_or_else(|| Error::InvalidArgument(format!("{} has no scalar output to compare", r.experiment)))
}

/// `|a − b| ≤ tolerance + sigmas·√(se_a² + se_b²)`. Pressure runs and
/// Kieffer-Pinsker estimates measure the same quantity and may be compared.
pub fn compare(a: &ResultRecord, b: &ResultRecord, tolerance: f64, sigmas: f64) -> Result<Comparison> {
    let (qa, va, sa) = headline(a)?;
    let (qb, vb, sb) = headline(b)?;
    if qa != qb {
        return Err(Error::InvalidArgument(format!("cannot compare {} with {}", a.experiment, b.experiment)));
    }
    let diff = (va - vb).abs();
    let joint = sa.hypot(sb);
    let threshold = tolerance + sigmas * joint;
    let pass = diff <= threshold;
    let arithmetic = format!(
        "|{va} - {vb}| = {diff:e} {} {tolerance:e} + {sigmas}*{joint:e} = {threshold:e}",
        if pass { "<=" } else { ">" }
    );
    Ok(Comparison {
        quantity: qa.into(),
        value_a: va,
        stderr_a: sa,
        value_b: vb,
        stderr_b: sb,
        diff,
        tolerance,
        joint_stderr: joint,
        threshold,
        pass,
        arithmetic,
    })
}
