//! `polymer`: samplers, solver, Gibbs engine and experiment runners.
//!
//! Exit status is 0 on success, 1 when the library rejects the input and 2 on a usage
//! error (clap's default).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use polymer_core::environment::{
    make_schedule, sample_lattice_environment, sample_limit_environment, Environment,
};
use polymer_core::experiments::{self, ExperimentConfig, ExperimentKind};
use polymer_core::gibbs::{build_transfer, LatticePath};
use polymer_core::variational::{solve, Regime};
use polymer_core::Error;

#[derive(Parser)]
#[command(
    name = "polymer",
    version,
    about = "Directed polymers in heavy-tailed environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Sample a lattice environment of size n with Pareto(α) weights.
    EnvSample {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the k heaviest masses of the limit environment.
    EnvLimit {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximize the worthiness functional over an environment.
    Solve {
        #[arg(long)]
        env: PathBuf,
        /// Inverse temperature; `inf` selects the zero-temperature problem.
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value = "finite-limit")]
        regime: Regime,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact Gibbs measure on a lattice environment.
    ///
    /// Unscaled environments are scaled by b_n first and `--beta` is the macroscopic β;
    /// for scaled environments `--beta` is used as β̄ directly.
    Gibbs {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        beta: f64,
        /// Number of exact path samples to draw.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tube half-width around the favorable curve.
        #[arg(long)]
        tube: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment from a JSON config; flags override config fields.
    Exp(ExpArgs),
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha_list: Option<Vec<f64>>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    beta_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u32>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    gibbs: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

/// Non-finite values (a tube nothing escapes) serialize as `null`.
#[derive(Serialize)]
struct TubeReport {
    delta: f64,
    inside: f64,
    outside: f64,
    log_outside: f64,
    rate: f64,
}

#[derive(Serialize)]
struct GibbsReport {
    n: usize,
    beta_bar: f64,
    log_q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tube: Option<TubeReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    paths: Vec<LatticePath>,
}

#[derive(Serialize)]
struct ExpReport {
    experiment: ExperimentKind,
    records: usize,
    output: PathBuf,
    summary: PathBuf,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_env(path: &Path) -> Result<Environment, Error> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn run_gibbs(
    env: &Environment,
    beta: f64,
    sample: usize,
    seed: u64,
    tube: Option<f64>,
) -> Result<GibbsReport, Error> {
    let n = env
        .lattice_n()
        .ok_or_else(|| Error::Domain("gibbs needs a lattice environment".into()))?;
    let (env, beta_bar) = if env.is_scaled() {
        (env.clone(), beta)
    } else {
        let schedule = make_schedule(n, env.alpha(), beta)?;
        (env.scale_weights(&schedule)?, schedule.beta_bar)
    };
    let table = build_transfer(&env, beta_bar)?;
    let tube = match tube {
        None => None,
        Some(delta) => {
            let center = solve(&env, beta_bar, Regime::FiniteLimit)?.curve;
            let t = table.tube_probability(&center, delta)?;
            Some(TubeReport {
                delta,
                inside: t.inside,
                outside: t.outside,
                log_outside: t.log_outside,
                rate: -t.log_outside / f64::from(n),
            })
        }
    };
    Ok(GibbsReport {
        n: n as usize,
        beta_bar,
        log_q: table.log_q(),
        tube,
        paths: table.sample_paths(sample, seed),
    })
}

fn build_config(args: &ExpArgs) -> Result<ExperimentConfig, Error> {
    let mut value = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => serde_json::Value::Object(Default::default()),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Parameter("config must be a JSON object".into()))?;
    let mut set = |key: &str, v: serde_json::Value| {
        obj.insert(key.to_owned(), v);
    };
    use serde_json::json;
    if let Some(v) = args.experiment {
        set("experiment", json!(v));
    }
    if let Some(v) = args.alpha {
        set("alpha", json!(v));
    }
    if let Some(v) = &args.alpha_list {
        set("alpha_list", json!(v));
    }
    if let Some(v) = args.beta {
        set("beta", json!(v));
    }
    if let Some(v) = &args.beta_list {
        set("beta_list", json!(v));
    }
    if let Some(v) = &args.n_list {
        set("n_list", json!(v));
    }
    if let Some(v) = args.k {
        set("k", json!(v));
    }
    if let Some(v) = &args.k_list {
        set("k_list", json!(v));
    }
    if let Some(v) = args.delta {
        set("delta", json!(v));
    }
    if let Some(v) = args.replicas {
        set("replicas", json!(v));
    }
    if let Some(v) = args.base_seed {
        set("base_seed", json!(v));
    }
    if let Some(v) = args.tol {
        set("tol", json!(v));
    }
    if args.gibbs {
        set("gibbs", json!(true));
    }
    if let Some(v) = &args.output {
        set("output", json!(v));
    }
    if let Some(v) = &args.summary {
        set("summary", json!(v));
    }
    let config: ExperimentConfig = serde_json::from_value(value)?;
    config.validate()?;
    Ok(config)
}

fn run_exp(args: &ExpArgs) -> Result<ExpReport, Error> {
    let config = build_config(args)?;
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(Error::Parameter("--threads must be at least 1".into()));
        }
        experiments::set_threads(threads)?;
    }
    let records = experiments::run_to_files(&config)?;
    Ok(ExpReport {
        experiment: config.experiment,
        records: records.len(),
        output: config
            .output
            .clone()
            .expect("run_to_files checked the output path"),
        summary: config.summary_path().expect("output is set"),
    })
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::EnvSample {
            n,
            alpha,
            seed,
            out,
        } => emit(&sample_lattice_environment(n, alpha, seed)?, out.as_deref()),
        Command::EnvLimit {
            k,
            alpha,
            seed,
            out,
        } => emit(&sample_limit_environment(k, alpha, seed)?, out.as_deref()),
        Command::Solve {
            env,
            beta,
            regime,
            out,
        } => emit(&solve(&read_env(&env)?, beta, regime)?, out.as_deref()),
        Command::Gibbs {
            env,
            beta,
            sample,
            seed,
            tube,
            out,
        } => emit(
            &run_gibbs(&read_env(&env)?, beta, sample, seed, tube)?,
            out.as_deref(),
        ),
        Command::Exp(args) => emit(&run_exp(&args)?, None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
