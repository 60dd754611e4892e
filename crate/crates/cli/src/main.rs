//! Command-line front end: threshold sweeps, equal-yield comparison,
//! phase-noise calibration, and tomography sample dumps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cvdistill::error::Error;
use cvdistill::harness::{
    self, calibrate_sigma, equal_yield_compare, guarded_write, input_ensemble, run_sweep,
    write_sweep_artifacts, ExperimentConfig, ModeSelection,
};
use cvdistill::protocol::{run_batch, ProtocolMode};
use cvdistill::tomography::{acquire, reconstruct};

#[derive(Parser)]
#[command(
    name = "cvdistill",
    version,
    about = "Monte Carlo simulator for iterative continuous-variable entanglement distillation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON experiment config; flags below override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (required unless the config file provides one).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = rayon default).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Protocol selection: single | iterative | both.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated trigger thresholds, e.g. "0.2,0.4,inf".
    #[arg(long, value_name = "LIST")]
    threshold_list: Option<String>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<u32>,
    /// Overwrite outputs even if their config hash differs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold sweep: sweep.csv, report.json, rho_*.json.
    Sweep(CommonOpts),
    /// Compare protocols at a fixed total distillation yield.
    CompareYield {
        #[command(flatten)]
        common: CommonOpts,
        /// Target total yield (accepted outputs per input copy).
        #[arg(long, value_name = "X")]
        target_yield: f64,
    },
    /// Fit the uniform phase-noise sigma to a target decohered input I.
    Calibrate {
        #[command(flatten)]
        common: CommonOpts,
        /// Target total variance of the decohered input pair.
        #[arg(long, value_name = "I")]
        target_i: f64,
        /// Phase samples for the ensemble estimate.
        #[arg(long, default_value_t = 100_000)]
        phase_samples: u32,
    },
    /// Dump tomography samples and the reconstructed state at one threshold.
    TomoDump {
        #[command(flatten)]
        common: CommonOpts,
        /// Trigger threshold for the dumped batch ("inf" allowed).
        #[arg(long, value_name = "Q")]
        threshold: String,
        /// Trials used to build the distillate.
        #[arg(long, default_value_t = 20_000)]
        batch_trials: u32,
        /// Dump the decohered input ensemble instead of a distillate.
        #[arg(long)]
        input: bool,
    },
}

fn parse_threshold(text: &str) -> Result<f64, Error> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| Error::Config(format!("bad threshold {t:?}")))
}

fn load_config(common: &CommonOpts) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let seed = common.seed.ok_or_else(|| {
                Error::Config("--seed is required when no --config is given".into())
            })?;
            ExperimentConfig::with_seed(seed)
        }
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.display().to_string();
    }
    if let Some(mode) = &common.mode {
        config.mode = match mode.as_str() {
            "single" => ModeSelection::Single,
            "iterative" => ModeSelection::Iterative,
            "both" => ModeSelection::Both,
            other => return Err(Error::Config(format!("unknown mode {other:?}"))),
        };
    }
    if let Some(list) = &common.threshold_list {
        let mut qs = Vec::new();
        for part in list.split(',') {
            qs.push(parse_threshold(part)?);
        }
        config.thresholds = qs;
    }
    if let Some(trials) = common.trials {
        config.trials_per_point = trials;
    }
    let warnings = config.validate()?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    harness::init_workers(config.workers);
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sweep(common) => {
            let config = load_config(&common)?;
            let result = run_sweep(&config)?;
            let dir = PathBuf::from(&config.output_dir);
            let written = write_sweep_artifacts(&result, &dir, common.force)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            for be in &result.break_even {
                println!(
                    "break-even[{}]: q = {:.4}, acceptance = {:.3}",
                    be.mode, be.q, be.acceptance_probability
                );
            }
        }
        Command::CompareYield {
            common,
            target_yield,
        } => {
            let config = load_config(&common)?;
            let cmp = equal_yield_compare(&config, target_yield)?;
            for row in &cmp.rows {
                println!(
                    "{:<9} q = {:<10} yield = {:.4}  I = {:.4} ± {:.4}  E_n = {:.4} ± {:.4}  P = {:.4} ± {:.4}",
                    row.mode,
                    if row.q.is_infinite() { "inf".to_string() } else { format!("{:.6}", row.q) },
                    row.yield_fraction,
                    row.measures.total_variance,
                    row.measures.total_variance_err,
                    row.measures.log_negativity,
                    row.measures.log_negativity_err,
                    row.measures.purity,
                    row.measures.purity_err,
                );
            }
            if let Some(d) = cmp.delta_total_variance {
                println!("I(single) - I(iterative) = {d:.5}");
            }
            let dir = PathBuf::from(&config.output_dir);
            let path = dir.join("compare_yield.json");
            let text = serde_json::to_string_pretty(&cmp)
                .map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
            guarded_write(&path, &text, &cmp.config_hash, common.force)?;
            println!("wrote {}", path.display());
        }
        Command::Calibrate {
            common,
            target_i,
            phase_samples,
        } => {
            let config = load_config(&common)?;
            let sigma = calibrate_sigma(target_i, &config.sources, phase_samples, config.seed)?;
            println!("sigma = {sigma:.6}");
            println!(
                "noise config fragment: \"noise\": {{ \"sigma_per_beam\": [{sigma:.6}, {sigma:.6}, {sigma:.6}, {sigma:.6}, {sigma:.6}, {sigma:.6}] }}"
            );
        }
        Command::TomoDump {
            common,
            threshold,
            batch_trials,
            input,
        } => {
            let config = load_config(&common)?;
            let q = parse_threshold(&threshold)?;
            let plan = config.tomography.to_plan()?;
            let components = if input {
                input_ensemble(&config.sources, &config.noise, config.input_components, config.seed)?
            } else {
                let mode = match config.mode {
                    ModeSelection::Single => ProtocolMode::SingleStage,
                    _ => ProtocolMode::Iterative,
                };
                let cfg_q = config.protocol.with_mode(mode).with_threshold(q);
                let batch = run_batch(
                    &cfg_q,
                    &config.sources,
                    &config.noise,
                    batch_trials,
                    config.seed,
                    9,
                )?;
                if batch.accepts == 0 {
                    return Err(Error::Numerical(format!(
                        "no accepted trials at threshold {threshold}"
                    )));
                }
                batch.components
            };
            let samples = acquire(&components, &plan, config.seed, 10)?;
            let rho = reconstruct(&samples, plan.dim)?;

            let dir = PathBuf::from(&config.output_dir);
            std::fs::create_dir_all(&dir)?;
            let hash = config.config_hash();

            // Column order: theta_a, theta_b, x_a, x_b (paper units).
            let mut csv = String::new();
            csv.push_str(&format!("# cvdistill tomo-dump v{}\n", harness::VERSION));
            csv.push_str(&format!("# config_hash: {hash}\n"));
            csv.push_str("theta_a,theta_b,x_a,x_b\n");
            for (ta, tb, xa, xb) in &samples {
                csv.push_str(&format!("{ta:.9e},{tb:.9e},{xa:.9e},{xb:.9e}\n"));
            }
            let csv_path = dir.join("samples.csv");
            guarded_write(&csv_path, &csv, &hash, common.force)?;
            println!("wrote {} ({} samples)", csv_path.display(), samples.len());

            let rho_path = dir.join(format!(
                "rho_Q{}.json",
                if q.is_infinite() { "inf".to_string() } else { format!("{q}") }
            ));
            let body = serde_json::json!({
                "config_hash": hash,
                "seed": config.seed,
                "q": if q.is_infinite() { "inf".to_string() } else { format!("{q}") },
                "rho": rho.to_export(),
            });
            let text = serde_json::to_string(&body)
                .map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
            guarded_write(&rho_path, &text, &hash, common.force)?;
            println!("wrote {}", rho_path.display());
        }
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) => 2,
        Error::UnreachableYield { .. } => 3,
        Error::Numerical(_) | Error::Physicality(_) => 4,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
