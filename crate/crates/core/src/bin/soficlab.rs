use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use soficlab::cli::{compare, render, run, Experiment, OutputFormat, RunConfig};
use soficlab::derived::{Enforcement, MethodChoice};
use soficlab::model::SoficBlock;
use soficlab::Result;

#[derive(Parser)]
#[command(name = "soficlab", version, about = "Derived finite models and pressure estimators for sofic Gibbs measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Output {
    /// Emit the full JSON record.
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    /// Emit the CSV table (tabular experiments only).
    #[arg(long)]
    csv: bool,
    /// Write to a file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Sofic {
    /// torus, folner or random_perm; defaults to the model's sofic block.
    #[arg(long)]
    builder: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct Series {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    sofic: Sofic,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    sizes: Vec<usize>,
    /// auto, exact, transfer or mcmc.
    #[arg(long, default_value = "auto")]
    method: String,
    /// good_windows or all_edges.
    #[arg(long, default_value = "good_windows")]
    enforcement: String,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: Output,
}

#[derive(Subcommand)]
enum Command {
    /// log Z_n / n along a sofic approximation.
    Pressure(Series),
    /// H(μ_n)/n along a sofic approximation.
    Entropy(Series),
    /// Checks topological strong spatial mixing.
    TssmCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        range: usize,
        #[arg(long, default_value_t = 3)]
        radius: usize,
        #[arg(long, default_value_t = 3)]
        kmax: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Empirical strong spatial mixing profile β̂(r).
    SsmProfile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8)]
        rmax: usize,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Kieffer-Pinsker pressure estimate from random-past information.
    KpEstimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        /// transfer, ball or saw.
        #[arg(long, default_value = "transfer")]
        oracle: String,
        #[arg(long, default_value_t = 16)]
        r: usize,
        #[arg(long = "N", default_value_t = 200_000)]
        n: usize,
        /// fixed0 or mu.
        #[arg(long, default_value = "fixed0")]
        nu: String,
        #[arg(long, default_value_t = 2000)]
        outer: usize,
        #[arg(long, default_value_t = 6)]
        pad: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Hardcore marginal of a graph vertex through its SAW tree.
    SawMarginal {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        root: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Goodness statistics of a sofic approximation.
    SoficStats {
        #[arg(long)]
        builder: String,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Runs two configs and compares their headline values.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        tolerance: f64,
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
    },
    /// Runs a JSON run configuration.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: Output,
    },
}

fn sofic_block(builder: &str, d: Option<usize>, k: Option<usize>, seed: u64) -> SoficBlock {
    let mut params = BTreeMap::new();
    if let Some(d) = d {
        params.insert("d".to_string(), json!(d));
    }
    if let Some(k) = k {
        params.insert("k".to_string(), json!(k));
    }
    SoficBlock { builder: builder.to_string(), params, seed: Some(seed) }
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_value(json!(s)).map_err(|_| soficlab::Error::InvalidArgument(format!("unknown value {s:?}")))
}

fn configure(config: &mut RunConfig, out: &Output, tabular: bool) {
    config.format = if out.csv || (tabular && !out.json) { OutputFormat::Csv } else { OutputFormat::Json };
    config.output = out.output.clone();
}

fn series(a: Series, pressure: bool) -> Result<(RunConfig, Output, bool)> {
    let method: MethodChoice = a.method.parse()?;
    let enforcement: Enforcement = parse_enum(&a.enforcement)?;
    let (sizes, lambda) = (a.sizes, a.lambda);
    let experiment = if pressure {
        Experiment::Pressure { sizes, method, enforcement, lambda, mcmc: None }
    } else {
        Experiment::Entropy { sizes, method, enforcement, lambda }
    };
    let mut c = RunConfig::new(experiment);
    c.model = Some(a.model);
    c.sofic = a.sofic.builder.as_deref().map(|b| sofic_block(b, a.sofic.d, a.sofic.k, a.seed));
    c.seed = a.seed;
    Ok((c, a.out, true))
}

fn execute(cli: Cli) -> Result<String> {
    let (mut config, out, tabular) = match cli.command {
        Command::Pressure(a) => series(a, true)?,
        Command::Entropy(a) => series(a, false)?,
        Command::TssmCheck { model, range, radius, kmax, out } => {
            let mut c = RunConfig::new(Experiment::TssmCheck { range, radius, kmax });
            c.model = Some(model);
            (c, out, false)
        }
        Command::SsmProfile { model, rmax, lambda, out } => {
            let mut c = RunConfig::new(Experiment::SsmProfile { rmax, lambda });
            c.model = Some(model);
            (c, out, true)
        }
        Command::KpEstimate { model, lambda, oracle, r, n, nu, outer, pad, seed, out } => {
            let mut c = RunConfig::new(Experiment::KpEstimate {
                lambda,
                oracle,
                r,
                n,
                nu,
                outer,
                pad,
                glauber_size: None,
                sweeps: 200,
            });
            c.model = Some(model);
            c.seed = seed;
            (c, out, false)
        }
        Command::SawMarginal { graph, root, lambda, out } => {
            (RunConfig::new(Experiment::SawMarginal { graph, root, lambda, pins: None }), out, false)
        }
        Command::SoficStats { builder, d, k, m, r, seed, out } => {
            let mut c = RunConfig::new(Experiment::SoficStats { m, r });
            c.sofic = Some(sofic_block(&builder, d, k, seed));
            c.seed = seed;
            (c, out, false)
        }
        Command::Compare { a, b, tolerance, sigmas } => {
            let ra = run(&RunConfig::load(&a)?)?;
            let rb = run(&RunConfig::load(&b)?)?;
            let cmp = compare(&ra, &rb, tolerance, sigmas)?;
            return Ok(serde_json::to_string_pretty(&cmp)? + "\n");
        }
        Command::Run { config, out } => {
            let mut c = RunConfig::load(&config)?;
            if out.json || out.csv || out.output.is_some() {
                configure(&mut c, &out, false);
            }
            let record = run(&c)?;
            return if c.output.is_some() { Ok(String::new()) } else { render(&record, c.format) };
        }
    };
    configure(&mut config, &out, tabular);
    let record = run(&config)?;
    if config.output.is_some() {
        Ok(String::new())
    } else if !tabular && !out.json {
        // the bare outputs; --json gives the full record with provenance
        Ok(serde_json::to_string_pretty(&record.outputs)? + "\n")
    } else {
        render(&record, config.format)
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.code() as u8)
        }
    }
}
