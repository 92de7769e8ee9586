use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use prefloop_core::engine::{Engine, GenerateInput};
use prefloop_metrics::{render_evaluation, render_generation, write_report_dir};
use serde::Serialize;

use crate::config::Config;
use crate::error::{ServiceError, EXIT_VALIDATION};
use crate::ops::{self, PredictionUpload};

#[derive(Debug, Parser)]
#[command(name = "prefloop", version, about = "Preference-aware generation loop: service and CLI")]
pub struct Cli {
    /// TOML config file; built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve,
    /// Seed a user's memory with rated samples.
    Bootstrap {
        #[arg(long)]
        user: String,
        #[arg(long)]
        task: String,
        /// CSV with header media_uri,score[,prompt], or a JSON array.
        #[arg(long, value_name = "FILE")]
        samples: PathBuf,
    },
    /// Run the closed generation loop and print the summary.
    Generate(GenerateArgs),
    /// Record the user's score for a generated result.
    Rate {
        #[arg(long)]
        result: String,
        #[arg(long, allow_hyphen_values = true)]
        score: String,
    },
    /// Print a user's current profile for a task.
    Profile {
        #[arg(long)]
        user: String,
        #[arg(long)]
        task: String,
    },
    /// Benchmark reporting.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub prompt: String,
    #[arg(long, value_name = "PATH")]
    pub media: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, default_value = "open")]
    pub source: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Aggregate annotations (and optional evaluator predictions) into report tables.
    Report {
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        /// May be repeated, one file per evaluation method.
        #[arg(long, value_name = "FILE")]
        predictions: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<(), ServiceError> {
    let text = serde_json::to_string_pretty(value).expect("response types serialize");
    writeln!(std::io::stdout(), "{text}").map_err(|e| ServiceError::Core(e.into()))
}

fn engine(config: &Config) -> Result<Engine, ServiceError> {
    config.build_engine()
}

fn read_text(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path).map_err(|e| ServiceError::BadRequest(format!("cannot read {}: {e}", path.display())))
}

fn bench_report(annotations: &Path, predictions: &[PathBuf], out: &Path) -> Result<(), ServiceError> {
    let uploads = predictions
        .iter()
        .map(|p| {
            Ok(PredictionUpload {
                method: p.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions").to_string(),
                csv: read_text(p)?,
            })
        })
        .collect::<Result<Vec<_>, ServiceError>>()?;
    let report = ops::bench_report(&read_text(annotations)?, &uploads)?;
    write_report_dir(&report, out)?;
    let mut text = render_generation(&report.generation);
    if let Some(e) = &report.evaluation {
        text.push_str(&render_evaluation(e));
    }
    write!(std::io::stdout(), "{text}").map_err(|e| ServiceError::Core(e.into()))
}

fn serve(config: &Config) -> Result<(), ServiceError> {
    let engine = Arc::new(engine(config)?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| ServiceError::Core(e.into()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.listen_addr)
            .await
            .map_err(|e| ServiceError::Config(format!("cannot bind {}: {e}", config.listen_addr)))?;
        let addr = listener.local_addr().map_err(|e| ServiceError::Core(e.into()))?;
        log::info!("listening on {addr}");
        println!("listening on http://{addr}");
        crate::api::serve(engine, listener).await.map_err(|e| ServiceError::Core(e.into()))
    })
}

pub fn execute(cli: Cli) -> Result<(), ServiceError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Serve => serve(&config),
        Command::Bootstrap { user, task, samples } => {
            let samples = ops::read_samples(&samples)?;
            print_json(&ops::bootstrap(&engine(&config)?, &user, &task, &samples, None)?)
        }
        Command::Generate(args) => {
            let input = GenerateInput {
                prompt: args.prompt,
                media_uri: args.media,
                task: args.task.as_deref().map(ops::parse_task).transpose()?,
                source: ops::parse_source(&args.source)?,
                seed: args.seed,
            };
            print_json(&ops::generate(&engine(&config)?, &args.user, &input, None)?)
        }
        Command::Rate { result, score } => {
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| ServiceError::BadRequest(format!("score {score:?} is not a number")))?;
            print_json(&ops::rate(&engine(&config)?, &result, score)?)
        }
        Command::Profile { user, task } => print_json(&ops::profile(&engine(&config)?, &user, &task)?),
        Command::Bench(BenchCommand::Report { annotations, predictions, out }) => bench_report(&annotations, &predictions, &out),
    }
}

/// Parses arguments, runs, and maps the outcome to a process exit code.
/// Usage errors exit with the validation code rather than clap's default.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", serde_json::to_string_pretty(&e.body()).expect("error body serializes"));
            e.exit_code()
        }
    }
}
