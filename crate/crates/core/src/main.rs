use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridscen::cli::fixture::FixtureSpec;
use gridscen::cli::{
    cmd_fit, cmd_fixture, cmd_graph_export, cmd_simulate, resolve_out_dir, CliError, RunConfig,
};

#[derive(Parser)]
#[command(name = "gridscen", version, about = "Load, wind and solar scenario generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model for the configured target day.
    Fit(Common),
    /// Generate scenarios and bands from a fitted model.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Model bundle; defaults to model.json in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write dependency graphs (CSV and DOT) from a model bundle.
    GraphExport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write a synthetic data set with known structure.
    FixtureGen {
        /// Fixture specification (TOML); defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use Student-t(4) load marginals.
        #[arg(long)]
        heavy_tail: bool,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(common) => {
            let cfg = load_config(&common)?;
            let report = cmd_fit(&cfg, &resolve_out_dir(common.out))?;
            println!(
                "fitted {} on {} days; wind_independent={} k={} hash={}",
                report.target_day, report.window.days, report.wind_independent, report.solar_k, report.model_hash
            );
        }
        Command::Simulate { common, model } => {
            let cfg = load_config(&common)?;
            let summary = cmd_simulate(&cfg, &resolve_out_dir(common.out), model.as_deref())?;
            println!("wrote {} scenario rows to {} files", summary.rows, summary.files.len());
        }
        Command::GraphExport { common, model } => {
            load_config(&common)?;
            cmd_graph_export(&resolve_out_dir(common.out), model.as_deref())?;
        }
        Command::FixtureGen {
            config,
            out,
            seed,
            heavy_tail,
        } => {
            let mut spec = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    toml::from_str::<FixtureSpec>(&text).map_err(|e| CliError::Config(e.to_string()))?
                }
                None => FixtureSpec::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if heavy_tail {
                spec.load_tail_df = 4.0;
            }
            let out = resolve_out_dir(out);
            cmd_fixture(&spec, &out)?;
            println!("wrote fixture to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
