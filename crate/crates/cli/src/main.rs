mod commands;
mod config;
mod csv_import;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Cycle(String),
    #[error("{0}")]
    Missing(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Failed(_) => 1,
            CliError::Cycle(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Provider(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "text2nosql", version, about = "Text-to-NoSQL toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Args)]
pub struct Overrides {
    /// Directory of database bundles.
    #[arg(long, global = true)]
    databases: Option<PathBuf>,
    /// Vector library file.
    #[arg(long, global = true)]
    library: Option<PathBuf>,
    /// Root directory for run outputs.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    w_nlq: Option<f64>,
    #[arg(long, global = true)]
    w_other: Option<f64>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    max_in_flight: Option<usize>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = &self.databases {
            c.paths.databases = v.clone();
        }
        if let Some(v) = &self.library {
            c.paths.library = v.clone();
        }
        if let Some(v) = &self.output {
            c.paths.output = v.clone();
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.w_nlq {
            c.weights.w_nlq = v;
        }
        if let Some(v) = self.w_other {
            c.weights.w_other = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.max_in_flight {
            c.max_in_flight = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory name under the output root.
    #[arg(long)]
    run_id: Option<String>,
    /// Continue an existing run.
    #[arg(long, requires = "run_id")]
    resume: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a relational dump into a document database bundle.
    TransformDb {
        #[arg(long)]
        input: PathBuf,
        /// Bundle directory; defaults to `bundle/<name>` in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Assemble a relational dump from CSV exports and a schema file.
    ImportCsv {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute one query against a bundle and print the result.
    Exec {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, conflicts_with = "query_file", required_unless_present = "query_file")]
        query: Option<String>,
        #[arg(long)]
        query_file: Option<PathBuf>,
        /// Treat unknown collections as empty.
        #[arg(long)]
        lenient: bool,
    },
    /// Score predictions against gold queries.
    Eval {
        /// JSON lines with id, db_id, gold and pred.
        #[arg(long, conflicts_with_all = ["gold", "pred"], required_unless_present_all = ["gold", "pred"])]
        pairs: Option<PathBuf>,
        /// JSON lines with id, db_id and nosql.
        #[arg(long, requires = "pred")]
        gold: Option<PathBuf>,
        /// JSON lines with id and nosql.
        #[arg(long, requires = "gold")]
        pred: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
        /// Compare queries without rename normalization.
        #[arg(long)]
        no_normalize: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Embed training examples into a vector library.
    BuildIndex {
        /// JSON lines with id, nlq, nosql and db_id.
        #[arg(long)]
        training: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the four-stage generation pipeline over test questions.
    SmartRun {
        /// JSON lines with id, db_id and nlq.
        #[arg(long)]
        test: PathBuf,
        /// On resume, run failed examples again.
        #[arg(long, requires = "resume")]
        retry_failed: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate, verify and extend a training set from seed questions.
    DatasetBuild {
        /// JSON lines with id, nlq, db_id, target_schema and reference_result.
        #[arg(long)]
        seeds: PathBuf,
        /// JSON file with generation, feedback and debug demonstrations.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
