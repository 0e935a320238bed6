mod config;
mod estimate;
mod failure;
mod manifest;
mod output;
mod simulate;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use estimate::Completed;
use failure::{Failure, EXIT_OK};
use manifest::{Invocation, RunManifest};
use simulate::{ParameterFile, SimulationConfig};

const DEFAULT_URL: &str = "https://opendata.ecdc.europa.eu/covid19/casedistribution/csv";

#[derive(Parser)]
#[command(name = "seaird", version, about = "SEAIRD epidemic model: simulation, estimation and sensitivity runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the model and write the daily compartments.
    Simulate(SimulateArgs),
    /// Estimate parameters for one country and validate on the test window.
    Fit(FitArgs),
    /// Re-estimate with reported cases inflated by each factor.
    Sensitivity(FitArgs),
    /// Fit every country of the window registry.
    Countries(CountriesArgs),
    /// Download a data file verbatim.
    Fetch(FetchArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with alpha, beta, delta, gamma1, gamma2, mu, theta and
    /// optionally eta, population and x0.
    #[arg(long)]
    params: PathBuf,
    /// Initial state as S,E,I,A,R,D or a JSON file; overrides x0 in the
    /// parameter file.
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 42)]
    horizon: usize,
    /// Defaults to the total of the initial state.
    #[arg(long)]
    population: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value = "seaird-out")]
    out: PathBuf,
}

/// Flags shared by the estimation commands. Each one mirrors a key of the
/// JSON config file and wins over it.
#[derive(Args)]
struct FitFlags {
    /// ECDC-style CSV; relative paths are also looked up under $SEAIRD_DATA_DIR.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    /// "reciprocal" or "<w_infected>,<w_deaths>".
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: FitFlags,
    #[arg(long)]
    country: Option<String>,
    #[arg(long)]
    train_start: Option<NaiveDate>,
    #[arg(long)]
    train_end: Option<NaiveDate>,
    #[arg(long)]
    test_end: Option<NaiveDate>,
    /// Comma-separated inflation fractions (sensitivity only).
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<f64>>,
}

#[derive(Args)]
struct CountriesArgs {
    #[command(flatten)]
    common: FitFlags,
    /// JSON list of windows replacing the built-in registry.
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long, default_value = DEFAULT_URL)]
    url: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

const DEFAULT_OUT: &str = "seaird-out";

fn base_config(flags: &FitFlags) -> Result<RunConfig, Failure> {
    let file = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(file.overlay(RunConfig {
        data: flags.data.clone(),
        tau: flags.tau,
        weights: flags.weights.clone(),
        seed: flags.seed,
        starts: flags.starts,
        out: flags.out.clone(),
        ..Default::default()
    }))
}

fn fit_config(args: &FitArgs) -> Result<RunConfig, Failure> {
    Ok(base_config(&args.common)?.overlay(RunConfig {
        country: args.country.clone(),
        train_start: args.train_start,
        train_end: args.train_end,
        test_end: args.test_end,
        factors: args.factors.clone(),
        ..Default::default()
    }))
}

fn simulation_config(args: &SimulateArgs) -> Result<SimulationConfig, Failure> {
    let file = ParameterFile::load(&args.params)?;
    let x0 = match &args.x0 {
        Some(s) => simulate::parse_state(s)?,
        None => file
            .x0
            .ok_or_else(|| Failure::input("x0: pass --x0 or put x0 in the parameter file"))?,
    };
    x0.validate()?;
    Ok(SimulationConfig {
        params_file: Some(args.params.canonicalize().map_err(|e| Failure::io(&args.params, e))?),
        params: file.params(),
        x0,
        horizon: args.horizon,
        eta: args.eta.or(file.eta).unwrap_or(0.0),
        population: args.population.or(file.population).unwrap_or_else(|| x0.total()),
        integration: Default::default(),
    })
}

/// Runs a fully resolved invocation and writes its outputs and manifest.
fn execute(invocation: Invocation, out: &Path) -> Result<u8, Failure> {
    let started = output::now();
    let (completed, seed, inputs) = match &invocation {
        Invocation::Simulate(c) => {
            let artifacts = simulate::run(c)?;
            let inputs = c.params_file.iter().cloned().collect();
            (Completed { artifacts, code: EXIT_OK }, None, inputs)
        }
        Invocation::Fit(c) | Invocation::Sensitivity(c) | Invocation::Countries(c) => {
            let completed = match &invocation {
                Invocation::Fit(_) => estimate::run_fit(c)?,
                Invocation::Sensitivity(_) => estimate::run_sensitivity(c)?,
                _ => estimate::run_countries(c)?,
            };
            (completed, c.seed, c.data.iter().cloned().collect())
        }
    };
    output::write_run(out, invocation, seed, inputs, &completed.artifacts, started)?;
    for a in &completed.artifacts {
        println!("wrote {}", out.join(a.name).display());
    }
    Ok(completed.code)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn fetch(args: &FetchArgs) -> Result<u8, Failure> {
    let response = ureq::get(&args.url)
        .call()
        .map_err(|e| Failure::input(format!("fetch {}: {e}", args.url)))?;
    let mut bytes = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| Failure::input(format!("fetch {}: {e}", args.url)))?;
    std::fs::write(&args.out, &bytes).map_err(|e| Failure::io(&args.out, e))?;
    println!("wrote {} ({} bytes, sha256 {})", args.out.display(), bytes.len(), manifest::sha256_hex(&bytes));
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = simulation_config(&args)?;
            execute(Invocation::Simulate(cfg), &args.out)
        }
        Command::Fit(args) => {
            let cfg = estimate::resolve(&fit_config(&args)?, true)?;
            let out = out_dir(&cfg);
            execute(Invocation::Fit(cfg), &out)
        }
        Command::Sensitivity(args) => {
            let cfg = estimate::resolve(&fit_config(&args)?, true)?;
            let out = out_dir(&cfg);
            execute(Invocation::Sensitivity(cfg), &out)
        }
        Command::Countries(args) => {
            let mut cfg = base_config(&args.common)?;
            if let Some(p) = &args.registry {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
                cfg.registry = Some(serde_json::from_str(&text)?);
            }
            let cfg = estimate::resolve(&cfg, false)?;
            let out = out_dir(&cfg);
            execute(Invocation::Countries(cfg), &out)
        }
        Command::Fetch(args) => fetch(&args),
        Command::Rerun(args) => {
            let m = RunManifest::load(&args.manifest)?;
            m.verify_inputs()?;
            let recorded_dir = args.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
            let out = args.out.unwrap_or(recorded_dir);
            execute(m.invocation, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
