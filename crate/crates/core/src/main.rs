use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use inkstress::config::{resolve, Overrides};
use inkstress::pipeline::{run_pipeline, EXIT_FATAL};

#[derive(Parser)]
#[command(name = "inkstress", version, about = "Stress Index pipeline for scanned answer scripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process every PDF or image in a directory.
    Analyze {
        input_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dpi: Option<u32>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        keep_intermediates: bool,
        #[arg(long)]
        threshold: Option<f64>,
        /// `<id>=<url>`; repeat for several engines, earlier wins ties.
        #[arg(long = "ocr-backend", value_name = "ID=URL")]
        ocr_backend: Vec<String>,
        #[arg(long, value_name = "ID=URL")]
        sentiment_backend: Option<String>,
        /// Fixture directory for `mock` backends.
        #[arg(long)]
        mock_corpus: Option<PathBuf>,
        /// Lexicon JSON for the mock sentiment backend.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let Command::Analyze {
        input_dir,
        out,
        dpi,
        config,
        keep_intermediates,
        threshold,
        ocr_backend,
        sentiment_backend,
        mock_corpus,
        lexicon,
    } = Cli::parse().command;

    let overrides = Overrides {
        input_dir,
        out_dir: out,
        config,
        dpi,
        threshold,
        keep_intermediates,
        ocr_backends: ocr_backend,
        sentiment_backend,
        mock_corpus,
        lexicon,
    };
    let outcome = resolve(&overrides)
        .map_err(Into::into)
        .and_then(run_pipeline);
    match outcome {
        Ok(run) => {
            println!(
                "{} pages, {} students, {} warnings, {} errors, {:.3} s ({:.2} img/s)",
                run.summary.pages_total,
                run.summary.students.len(),
                run.summary.warnings.len(),
                run.summary.errors.len(),
                run.summary.wall_seconds,
                run.summary.throughput,
            );
            ExitCode::from(run.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FATAL as u8)
        }
    }
}
