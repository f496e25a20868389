//! Batch front end: configs in, CSV/JSON artifacts and verdict tables out.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Format, Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "convexo", version, about = "Convex relaxation of optimal control problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Write a field's grid samples, envelopes and conjugate.
    Envelope {
        #[command(flatten)]
        common: Common,
        /// `f` or `phiN`; defaults to the config's envelope section.
        #[arg(long)]
        field: Option<String>,
    },
    /// Sample the attainability cloud and evaluate certificates.
    Reach {
        #[command(flatten)]
        common: Common,
    },
    /// Optimize the original problem.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the original problem with both relaxed systems.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Run a bundled example by name.
    Example {
        /// One of ex1..ex5, chatter, sum_inputs, damped_plane, scaled_input.
        name: String,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem config (TOML, or JSON with a .json extension).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub switches: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub refine: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Flags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            step: self.step,
            switches: self.switches,
            levels: self.levels,
            refine: self.refine,
            format: self.format,
        }
    }
}

fn loaded(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply(&common.flags.overrides())?;
    let dir = commands::out_dir(&cfg, common.flags.out.as_deref());
    Ok((cfg, dir))
}

fn listing(files: &[PathBuf]) -> String {
    files.iter().map(|f| format!("wrote {}\n", f.display())).collect()
}

/// Executes one invocation and returns the text to print.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Cmd::Envelope { common, field } => {
            let (cfg, dir) = loaded(common)?;
            let field = field.as_deref().map(str::parse).transpose()?;
            Ok(listing(&commands::envelope(&cfg, field, &dir)?.files))
        }
        Cmd::Reach { common } => {
            let (cfg, dir) = loaded(common)?;
            Ok(listing(&commands::reach(&cfg, &dir)?.files))
        }
        Cmd::Solve { common } => {
            let (cfg, dir) = loaded(common)?;
            let o = commands::solve(&cfg, &dir)?;
            Ok(format!("value {:.6e} ({:?})\n{}", o.summary.value, o.summary.status, listing(&o.files)))
        }
        Cmd::Compare { common } => {
            let (cfg, dir) = loaded(common)?;
            let o = commands::compare(&cfg, &dir)?;
            Ok(format!("{}{}", o.table, listing(&o.files)))
        }
        Cmd::Example { name, flags } => {
            let o = commands::example(name, &flags.overrides(), flags.out.as_deref())?;
            let mut text = String::new();
            for files in [
                o.envelope.as_ref().map(|e| &e.files),
                o.reach.as_ref().map(|r| &r.files),
                o.solve.as_ref().map(|s| &s.files),
            ]
            .into_iter()
            .flatten()
            {
                text.push_str(&listing(files));
            }
            if let Some(c) = &o.compare {
                text.push_str(&c.table);
                text.push_str(&listing(&c.files));
            }
            Ok(text)
        }
    }
}

/// Applies `CONVEXO_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CONVEXO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CONVEXO_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}
