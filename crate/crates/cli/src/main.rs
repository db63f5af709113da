use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hexpert_cli::config::{self, ConfigError, Loaded};
use hexpert_cli::runner;
use rayon::prelude::*;

const OUT_ENV: &str = "HEXPERT_OUT";

#[derive(Parser)]
#[command(name = "hexpert", version, about = "Run hierarchical expert experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    config: PathBuf,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; otherwise `$HEXPERT_OUT/<name>` or `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key.path=value`, applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(Common),
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the cartesian product of `--param key=[v1, v2]` grids, one cell
    /// per subdirectory.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "param", value_name = "KEY=[V1, V2]")]
        params: Vec<String>,
    },
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("invalid config: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common, extra: &[String]) -> Result<Loaded, ConfigError> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    overrides.extend_from_slice(extra);
    config::load(&common.config, &overrides)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    let env_root = std::env::var(OUT_ENV).ok();
    match command {
        Command::Validate { config, overrides } => {
            let loaded = config::load(&config, &overrides)?;
            let mut text = format!(
                "valid: {} ({}), {} defaults applied\n",
                loaded.config.name(),
                loaded.config.kind,
                loaded.defaulted.len()
            );
            for d in &loaded.defaulted {
                text.push_str(&format!("  default {d}\n"));
            }
            say(&text);
        }
        Command::Run(common) => {
            let loaded = load(&common, &[])?;
            let dir = runner::output_dir(&loaded.config, common.out.as_deref(), env_root.as_deref());
            let report = runner::run(&loaded.config, &dir)?;
            say(&format!("wrote {} files to {} in {:.1}s\n", report.files.len(), report.dir.display(), report.wall_seconds));
        }
        Command::Sweep { common, params } => {
            let base = load(&common, &[])?;
            if params.is_empty() && base.config.kind != config::Kind::RateUtilitySweep {
                return Err(ConfigError::new("--param", "nothing to sweep; give at least one grid parameter").into());
            }
            let root = runner::output_dir(&base.config, common.out.as_deref(), env_root.as_deref());
            let cells = config::expand_grid(&params)?;
            let loaded = cells.iter().map(|c| load(&common, c)).collect::<Result<Vec<_>, _>>()?;
            let results: Vec<anyhow::Result<runner::RunReport>> = loaded
                .par_iter()
                .enumerate()
                .map(|(i, l)| runner::run(&l.config, &cell_dir(&root, i, cells.len())))
                .collect();
            write_index(&root, &cells, &results)?;
            let failed = results.iter().filter(|r| r.is_err()).count();
            for (i, r) in results.iter().enumerate() {
                if let Err(e) = r {
                    eprintln!("cell {i} failed: {e:#}");
                }
            }
            say(&format!("{} cells, {} failed; index at {}\n", cells.len(), failed, root.join("index.csv").display()));
            if failed > 0 {
                return Err(anyhow::anyhow!("{failed} sweep cells failed").into());
            }
        }
    }
    Ok(())
}

/// Prints to stdout, ignoring a closed pipe.
fn say(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn cell_dir(root: &Path, i: usize, n: usize) -> PathBuf {
    if n == 1 {
        root.to_path_buf()
    } else {
        root.join(format!("cell_{i:03}"))
    }
}

fn write_index(root: &Path, cells: &[Vec<String>], results: &[anyhow::Result<runner::RunReport>]) -> anyhow::Result<()> {
    std::fs::create_dir_all(root)?;
    let mut out = String::from("cell,overrides,status\n");
    for (i, (c, r)) in cells.iter().zip(results).enumerate() {
        let status = if r.is_ok() { "ok" } else { "failed" };
        out.push_str(&format!("{i},\"{}\",{status}\n", c.join(";").replace('"', "'")));
    }
    std::fs::write(root.join("index.csv"), out)?;
    Ok(())
}
