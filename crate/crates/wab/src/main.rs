//! Command-line front end: validation, spectrum, distance estimation, heat
//! flow, and diagnostics, with JSON/CSV reports.
//!
//! Exit codes: 0 success, 1 domain error (validation or solver failure),
//! 2 I/O or parse error. All commands are deterministic given identical
//! files and `--seed`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use wab::calculus::{norm_l1, total_mass};
use wab::chain::weighted_spectrum;
use wab::distance::{estimate_distance, l1_bounds, DistanceOpts};
use wab::flow::{
    entropy, estimate_decay, integrate_flow, lojasiewicz_ratio, sample_lojasiewicz, FlowOpts,
};
use wab::io::{
    load_chain, load_density, load_params, path_to_csv, trajectory_to_csv, ChainReport,
    DecayJson, DistanceReport, LoadError, SpectrumJson,
};
use wab::Error as DomainError;

#[derive(Parser)]
#[command(name = "wab", version, about = "Transport metric and entropy flow on finite reversible Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a chain file and, optionally, transport parameters.
    Validate {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Eigenvalue report of the kernel in the weighted geometry.
    Spectrum {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the transport distance between two densities.
    Distance {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        mu0: PathBuf,
        #[arg(long)]
        mu1: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 32)]
        steps: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report (json) or the minimizing path (csv) here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Integrate the heat flow with source from an initial density.
    Flow {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        rho0: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        stop_tol: Option<f64>,
        #[arg(long, default_value_t = 10)]
        record_every: usize,
        /// Trajectory CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient-domination diagnostics at a state.
    Loja {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        rho0: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// L1-equivalence constants around a distance estimate.
    Bounds {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        mu0: PathBuf,
        #[arg(long)]
        mu1: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// Upper distance estimate; estimated on the fly when omitted.
        #[arg(long)]
        w_hat: Option<f64>,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the built-in diagnostic suite on the example chains.
    Demo,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                LoadError::Io(_) | LoadError::Parse(_) => ExitCode::from(2),
                LoadError::Domain(_) => ExitCode::from(1),
            }
        }
    }
}

fn domain(err: DomainError) -> LoadError {
    LoadError::Domain(err)
}

fn run(cli: Cli) -> Result<ExitCode, LoadError> {
    match cli.command {
        Command::Validate { chain, params } => {
            let chain = match load_chain(&chain) {
                Ok(chain) => chain,
                Err(LoadError::Domain(err)) => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&json!({
                            "status": "fail",
                            "invariant": err.name(),
                            "message": err.to_string(),
                        }))
                        .expect("serializable")
                    );
                    return Ok(ExitCode::from(1));
                }
                Err(other) => return Err(other),
            };
            let mut report = serde_json::to_value(ChainReport::new(&chain)).expect("serializable");
            if let Some(path) = params {
                match load_params(&path, &chain) {
                    Ok(params) => {
                        report["params_ok"] = json!(true);
                        report["source_mass"] = json!(total_mass(params.p(), &chain));
                    }
                    Err(LoadError::Domain(err)) => {
                        report["params_ok"] = json!(false);
                        report["invariant"] = json!(err.name());
                        report["message"] = json!(err.to_string());
                        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
                        return Ok(ExitCode::from(1));
                    }
                    Err(other) => return Err(other),
                }
            }
            report["status"] = json!("ok");
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum { chain, out } => {
            let chain = load_chain(&chain)?;
            let report = SpectrumJson::from(&weighted_spectrum(&chain));
            let text = serde_json::to_string_pretty(&report).expect("serializable");
            if let Some(path) = out {
                fs::write(path, &text)?;
            }
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Distance { chain, mu0, mu1, params, steps, restarts, seed, out, format } => {
            let chain = load_chain(&chain)?;
            let mu0 = load_density(&mu0)?;
            let mu1 = load_density(&mu1)?;
            let params = load_params(&params, &chain)?;
            let opts = DistanceOpts {
                n_steps: steps,
                restarts,
                seed,
                ..DistanceOpts::default()
            };
            let estimate =
                estimate_distance(&mu0, &mu1, &params, &chain, &opts).map_err(domain)?;
            let bounds = l1_bounds(&mu0, &mu1, &params, &chain, estimate.upper_bound)
                .map_err(domain)?;
            let l1 = norm_l1(&(&mu0 - &mu1), &chain);
            let report = DistanceReport::new(&estimate, &bounds, l1);
            let text = serde_json::to_string_pretty(&report).expect("serializable");
            if let Some(path) = out {
                match format {
                    Format::Json => fs::write(path, &text)?,
                    Format::Csv => fs::write(path, path_to_csv(&estimate.path))?,
                }
            }
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Flow { chain, rho0, params, dt, t_max, stop_tol, record_every, out } => {
            let chain = load_chain(&chain)?;
            let rho0 = load_density(&rho0)?;
            let params = load_params(&params, &chain)?;
            let defaults = FlowOpts::for_params(&params);
            let opts = FlowOpts {
                dt: dt.unwrap_or(defaults.dt),
                t_max: t_max.unwrap_or(defaults.t_max),
                stop_tol: stop_tol.unwrap_or(defaults.stop_tol),
                record_every,
            };
            let trajectory = integrate_flow(&rho0, &params, &chain, &opts).map_err(domain)?;
            if let Some(path) = out {
                fs::write(path, trajectory_to_csv(&trajectory))?;
            }
            let gap = weighted_spectrum(&chain).spectral_gap;
            match estimate_decay(&trajectory, &chain) {
                Ok(decay) => {
                    eprintln!(
                        "fitted_rate={:.6} loja_constant={:.6} l2_final={:.3e}",
                        decay.fitted_rate, decay.loja_constant, decay.l2_distance_final
                    );
                    let report = DecayJson::new(&decay, gap, trajectory.converged);
                    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
                }
                Err(DomainError::InsufficientData { got, need }) => {
                    eprintln!("at equilibrium: no decay to fit");
                    let report = json!({
                        "status": "equilibrium",
                        "usable_samples": got,
                        "needed_samples": need,
                        "spectral_gap": gap,
                        "converged": trajectory.converged,
                    });
                    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
                }
                Err(other) => return Err(domain(other)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Loja { chain, rho0, params, samples, seed } => {
            let chain = load_chain(&chain)?;
            let rho0 = load_density(&rho0)?;
            let params = load_params(&params, &chain)?;
            let ratio = lojasiewicz_ratio(&rho0, &params, &chain).map_err(domain)?;
            let ceiling = entropy(&rho0, &chain);
            let sampled = sample_lojasiewicz(&chain, &params, ceiling, samples, seed);
            let report = json!({
                "ratio_at_state": ratio,
                "sampled_min_ratio": sampled.min(ratio),
                "estimate_kind": "sampled lower-estimate",
                "n_samples": samples,
                "entropy_ceiling": ceiling,
                "spectral_gap": weighted_spectrum(&chain).spectral_gap,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds { chain, mu0, mu1, params, w_hat, steps, restarts, seed } => {
            let chain = load_chain(&chain)?;
            let mu0 = load_density(&mu0)?;
            let mu1 = load_density(&mu1)?;
            let params = load_params(&params, &chain)?;
            let w_hat = match w_hat {
                Some(value) => value,
                None => {
                    let opts = DistanceOpts {
                        n_steps: steps,
                        restarts,
                        seed,
                        ..DistanceOpts::default()
                    };
                    estimate_distance(&mu0, &mu1, &params, &chain, &opts)
                        .map_err(domain)?
                        .upper_bound
                }
            };
            let bounds = l1_bounds(&mu0, &mu1, &params, &chain, w_hat).map_err(domain)?;
            let l1 = norm_l1(&(&mu0 - &mu1), &chain);
            let report = json!({
                "c": bounds.lower_factor,
                "C": bounds.upper_factor,
                "samples": bounds.samples,
                "w_hat": w_hat,
                "l1_distance": l1,
                "sandwich_lower_ok": l1 <= bounds.lower_factor * w_hat + 1e-9,
                "sandwich_upper_ok": w_hat <= bounds.upper_factor * l1 + 1e-9,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo => {
            let mut stdout = std::io::stdout();
            let passed = wab::selfcheck::run_demo(&mut stdout)?;
            Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
