use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gradflow_cli::{output, pipeline, presets, CliError, RunConfig};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "gradflow", version, about = "Simulate and diagnose gradient-flow reaction-diffusion systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration (a TOML file or a preset name) and write its artifacts.
    Run {
        config: String,
        /// Output root; overrides the directory given in the config.
        #[arg(long, env = "GRADFLOW_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
    /// Print the potential, firewall and comparison constants without simulating.
    Constants {
        config: String,
        /// Print JSON only.
        #[arg(long)]
        json: bool,
    },
    /// Run every *.toml in a directory concurrently, each in its own output directory.
    Batch {
        dir: PathBuf,
        /// Output root; overrides the directory given in each config.
        #[arg(long, env = "GRADFLOW_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
    /// List the shipped presets, or write them as TOML files into a directory.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn load(config: &str) -> Result<RunConfig, CliError> {
    let path = Path::new(config);
    if path.exists() {
        RunConfig::load(path)
    } else if presets::names().any(|n| n == config) {
        presets::preset(config)
    } else {
        Err(CliError::Config(format!("no config file or preset named '{config}'")))
    }
}

fn out_dir(cfg: &RunConfig, root: &Option<PathBuf>) -> PathBuf {
    match root {
        Some(r) => r.join(&cfg.name),
        None => cfg.output.directory.join(&cfg.name),
    }
}

fn run_one(cfg: &RunConfig, root: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let outcome = pipeline::execute(cfg)?;
    let dir = out_dir(cfg, root);
    output::write_outcome(&dir, &outcome)?;
    println!("{}: verdict {:?} -> {}", cfg.name, outcome.report.verdict, dir.display());
    Ok(dir)
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, output } => {
            let cfg = load(&config)?;
            run_one(&cfg, &output).map(|_| ())
        }
        Command::Constants { config, json } => {
            let cfg = load(&config)?;
            let setup = pipeline::prepare(&cfg)?;
            let c = &setup.constants;
            if !json {
                let rows = c.table();
                let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
                for (k, v) in rows {
                    println!("{k:<width$}  {v}");
                }
                println!();
            }
            println!("{}", serde_json::to_string_pretty(c).map_err(|e| CliError::Io(e.to_string()))?);
            Ok(())
        }
        Command::Batch { dir, output } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            paths.sort();
            let configs: Vec<RunConfig> = paths.iter().map(|p| RunConfig::load(p)).collect::<Result<_, _>>()?;
            let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
            names.sort();
            if names.windows(2).any(|w| w[0] == w[1]) {
                return Err(CliError::Config("batch contains duplicate run names".into()));
            }
            let results: Vec<Result<PathBuf, CliError>> = configs.par_iter().map(|c| run_one(c, &output)).collect();
            let mut worst: Option<CliError> = None;
            for (cfg, r) in configs.iter().zip(results) {
                if let Err(e) = r {
                    eprintln!("{}: {e}", cfg.name);
                    if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                        worst = Some(e);
                    }
                }
            }
            worst.map_or(Ok(()), Err)
        }
        Command::Presets { write } => {
            match write {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
                    for (name, text) in presets::PRESETS {
                        let path = dir.join(format!("{name}.toml"));
                        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    }
                }
                None => presets::names().for_each(|n| println!("{n}")),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
