use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use esde_core::pipeline::{Pipeline, PipelineConfig, CONFIG_REFERENCE};
use esde_core::Error;

#[derive(Parser)]
#[command(name = "esde", version, about = "Effective SDE identification for colloidal assembly")]
struct Cli {
    /// key = value configuration file; unset keys keep their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when no file is given
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Overrides the master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all stages
    #[arg(long, global = true, default_value = "esde_out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Tiny,
}

#[derive(Subcommand)]
enum Command {
    /// Brownian dynamics trajectories, order parameters and the corpus
    Simulate,
    /// Fix the reference and density grid; with --input, write densities of a trajectory
    Featurize {
        #[arg(long, requires = "output")]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Diffusion map of the corpus densities
    Dmaps,
    /// Latent coordinates of all trajectories and external files
    Restrict,
    /// Order parameters of all trajectories, or of one file
    OrderParams {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Kramers-Moyal estimates from short bursts at anchors
    FitKm,
    /// Fixed-voltage and parameter-dependent networks
    FitNn,
    /// Path ensembles from the fitted models next to fine-scale paths
    Integrate,
    /// Effective potentials on a latent grid
    FreeEnergy,
    /// Network against Kramers-Moyal coefficients
    Compare,
    /// Ensemble uncertainty of the fixed-voltage networks
    Uq,
    /// Figures and tables
    Report,
    /// Every stage except uq, in order
    Run,
    /// Print the effective configuration with documentation
    ShowConfig {
        /// Print only the key reference
        #[arg(long)]
        keys: bool,
    },
}

fn config(cli: &Cli) -> esde_core::Result<PipelineConfig> {
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Preset::Desk) => PipelineConfig::default(),
        (None, Preset::Tiny) => PipelineConfig::tiny(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> esde_core::Result<()> {
    let cfg = config(cli)?;
    if let Command::ShowConfig { keys } = &cli.command {
        if *keys {
            for (k, doc) in CONFIG_REFERENCE {
                println!("{k}\t{doc}");
            }
        } else {
            print!("{}", cfg.to_kv_text());
        }
        return Ok(());
    }
    let p = Pipeline::new(cfg, &cli.out)?;
    let stage = match &cli.command {
        Command::Simulate => p.simulate().map(|_| "simulate"),
        Command::Featurize { input: Some(i), output: Some(o) } => p.featurize_file(i, o).map(|_| "featurize"),
        Command::Featurize { .. } => p.featurize().map(|_| "featurize"),
        Command::Dmaps => p.dmaps().map(|_| "dmaps"),
        Command::Restrict => p.restrict().map(|_| "restrict"),
        Command::OrderParams { input } => p.order_params(input.as_deref()).map(|_| "order-params"),
        Command::FitKm => p.fit_km().map(|_| "fit-km"),
        Command::FitNn => p.fit_nn().map(|_| "fit-nn"),
        Command::Integrate => p.integrate().map(|_| "integrate"),
        Command::FreeEnergy => p.free_energy().map(|_| "free-energy"),
        Command::Compare => p.compare().map(|_| "compare"),
        Command::Uq => p.uq().map(|_| "uq"),
        Command::Report => p.report().map(|_| "report"),
        Command::Run => p.run_all().map(|_| "run"),
        Command::ShowConfig { .. } => unreachable!(),
    }?;
    println!("{}", serde_json::json!({ "stage": stage, "out": p.out }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
