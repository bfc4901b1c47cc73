use std::path::PathBuf;
use std::process::ExitCode;

use acoustic_topopt_cli::commands::{self, BLUEPRINT, DIRECTIVITY};
use acoustic_topopt_cli::config::{load_config, LoadedConfig};
use acoustic_topopt_cli::{exit_code, resolve_threads, THREADS_ENV};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

/// Topology optimization of passive acoustic emitters.
#[derive(Parser)]
#[command(name = "atopt", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; overrides ATOPT_THREADS and the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit run-dependent values such as wall time from outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a layout for the configured target.
    Design {
        /// Checkpoint state file or directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sweep a blueprint over a band and write directivity data.
    Simulate {
        #[arg(long)]
        blueprint: Option<PathBuf>,
        /// Number of sweep frequencies.
        #[arg(long)]
        sweep: Option<usize>,
        /// Sweep band edges in Hz.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        band: Option<Vec<f64>>,
    },
    /// Remove the blueprint's solid features one at a time.
    Ablate {
        #[arg(long)]
        blueprint: Option<PathBuf>,
    },
    /// Render a directivity map as a colour image.
    RainbowPlot {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        band: Option<Vec<f64>>,
        /// Outer radius of the image in pixels.
        #[arg(long, default_value_t = 200)]
        radius: usize,
    },
    /// Compare the solver against the analytic free-field solution.
    Validate,
}

fn config(common: &Common, required: &[&str]) -> Result<LoadedConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| acoustic_topopt_cli::config::ConfigError("--config <path> is required".into()))?;
    load_config(path, required)
}

fn out_dir(common: &Common, cfg: Option<&LoadedConfig>) -> PathBuf {
    if let Some(o) = &common.out {
        return o.clone();
    }
    cfg.and_then(|c| c.config.run.out_dir.as_ref().map(|p| c.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn setup_threads(common: &Common, cfg: Option<&LoadedConfig>) -> Result<()> {
    let env = std::env::var(THREADS_ENV).ok();
    let n = resolve_threads(common.threads, env.as_deref(), cfg.and_then(|c| c.config.run.threads))?;
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn band(v: &Option<Vec<f64>>) -> Option<[f64; 2]> {
    v.as_ref().map(|b| [b[0], b[1]])
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Design { resume } => {
            let cfg = config(common, &["domain", "target"])?;
            setup_threads(common, Some(&cfg))?;
            let out = out_dir(common, Some(&cfg));
            let deterministic = common.deterministic || cfg.config.run.deterministic;
            let r = commands::cmd_design(&cfg, &out, resume.as_deref(), deterministic)?;
            println!("final phi {:e}; blueprint {}", r.final_phi, r.blueprint.display());
        }
        Command::Simulate { blueprint, sweep, band: b } => {
            let cfg = config(common, &["domain", "target"])?;
            setup_threads(common, Some(&cfg))?;
            let out = out_dir(common, Some(&cfg));
            let bp = blueprint.clone().unwrap_or_else(|| out.join(BLUEPRINT));
            let r = commands::cmd_simulate(&cfg, &bp, band(b), *sweep, &out)?;
            println!("{} frequencies written to {}", r.map.frequencies.len(), out.join(DIRECTIVITY).display());
        }
        Command::Ablate { blueprint } => {
            let cfg = config(common, &["domain", "target"])?;
            setup_threads(common, Some(&cfg))?;
            let out = out_dir(common, Some(&cfg));
            let bp = blueprint.clone().unwrap_or_else(|| out.join(BLUEPRINT));
            let r = commands::cmd_ablate(&cfg, &bp, &out)?;
            println!(
                "{} features; all removed {:+.1}%, source off {:+.1}%",
                r.rows.len(),
                r.all_removed.delta_phi_percent,
                r.source_off.delta_phi_percent
            );
        }
        Command::RainbowPlot { map, band: b, radius } => {
            let cfg = match &common.config {
                Some(p) => Some(load_config(p, &[])?),
                None => None,
            };
            setup_threads(common, cfg.as_ref())?;
            let out = out_dir(common, cfg.as_ref());
            let map = map.clone().unwrap_or_else(|| out.join(DIRECTIVITY));
            let configured = match (&cfg, band(b)) {
                (_, Some(b)) => Some(b),
                (Some(c), None) => c.config.simulate.band_hz.or_else(|| c.target_band().ok()),
                (None, None) => None,
            };
            let path = commands::cmd_rainbow_plot(&map, configured, *radius, &out)?;
            println!("{}", path.display());
        }
        Command::Validate => {
            let cfg = config(common, &["domain"])?;
            setup_threads(common, Some(&cfg))?;
            commands::cmd_validate(&cfg, &out_dir(common, Some(&cfg)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
