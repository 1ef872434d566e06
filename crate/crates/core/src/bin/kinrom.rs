use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinetic_rom::bundle::RomBundle;
use kinetic_rom::config::{MethodName, Overrides, Preset, RunConfig};
use kinetic_rom::pipeline;
use kinetic_rom::RomError;

/// Reduced order models for parametric kinetic transport.
#[derive(Parser)]
#[command(name = "kinrom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in problem preset: example1 or example2.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// pod, uniform, adaptive or hybrid.
    #[arg(long, global = true)]
    method: Option<MethodName>,
    /// Seed for test parameters and autoencoder training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for full-order solves.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accept snapshot or bundle files produced with a different configuration.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model at the training parameters.
    Snapshots {
        #[command(flatten)]
        common: Common,
    },
    /// Build a reduced model from the snapshot file.
    Build {
        #[command(flatten)]
        common: Common,
    },
    /// Predict the density at one (t, mu) and write it as CSV.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        /// Parameter components, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
    },
    /// Score the bundle against full-order references on the test set.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Render charts from the bundle and the last evaluation.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(c: &Common) -> kinetic_rom::Result<RunConfig> {
    let over = Overrides { preset: c.preset, method: c.method, seed: c.seed, threads: c.threads, out: c.out.clone() };
    match &c.config {
        Some(path) => RunConfig::from_file(path, &over),
        None => RunConfig::from_toml_str("", &over),
    }
}

fn exit_code(e: &RomError) -> u8 {
    match e.root() {
        RomError::Config(_) | RomError::InvalidArgument(_) | RomError::DimensionMismatch { .. } => 2,
        RomError::InsufficientData { .. } => 2,
        RomError::NumericalFailure { .. }
        | RomError::Conditioning { .. }
        | RomError::TrainingDiverged { .. }
        | RomError::EmptySlice { .. } => 3,
        RomError::Io { .. } | RomError::Format { .. } | RomError::UnsupportedVersion { .. } => 4,
        RomError::Context { .. } => unreachable!("root strips context"),
    }
}

fn run(cli: Cli) -> kinetic_rom::Result<()> {
    match cli.command {
        Command::Snapshots { common } => {
            let cfg = load_config(&common)?;
            eprintln!("config {}", &cfg.hash()[..12]);
            let s = pipeline::run_snapshots(&cfg)?;
            println!(
                "wrote {} (n_h = {}, {} columns)",
                cfg.io.snapshots.display(),
                s.n_h(),
                s.n_cols()
            );
        }
        Command::Build { common } => {
            let cfg = load_config(&common)?;
            let s = pipeline::load_snapshots(&cfg, common.force)?;
            let bundle = pipeline::run_build(&cfg, &s, &mut |line| eprintln!("{line}"))?;
            print!("{}", pipeline::build_summary(&bundle));
            println!("wrote {}", cfg.io.bundle.display());
        }
        Command::Predict { common, t, mu } => {
            let cfg = load_config(&common)?;
            let bundle = RomBundle::load(&cfg.io.bundle)?;
            let out = cfg.io.report.join(format!("predict_t{t}_mu{}.csv", mu.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("_")));
            pipeline::run_predict(&cfg, &bundle, t, &mu, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Evaluate { common } => {
            let cfg = load_config(&common)?;
            let bundle = RomBundle::load(&cfg.io.bundle)?;
            if cfg.test_params.is_empty() || cfg.test_times.is_empty() {
                eprintln!("warning: empty test set, writing an empty report");
            }
            let r = pipeline::run_evaluate(&cfg, &bundle, common.force)?;
            println!("method {}  E_f = {:.3e}  E_rho = {:.3e}  online {:.3e} s", r.method, r.e_f, r.e_rho, r.online_total_s);
            if r.skipped > 0 {
                eprintln!("warning: {} case(s) with zero reference skipped", r.skipped);
            }
            println!("wrote {}", cfg.io.report.display());
        }
        Command::Report { common } => {
            let cfg = load_config(&common)?;
            let bundle = RomBundle::load(&cfg.io.bundle)?;
            for p in pipeline::run_report(&cfg, &bundle)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
