use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use emonet::alert::{FixedClock, SystemClock};
use emonet::pipeline::{
    cmd_eval, cmd_predict, cmd_run, cmd_synth, cmd_train, ModelKind, PipelineError, RunArgs,
    TrainArgs,
};

#[derive(Parser)]
#[command(name = "emonet", version, about = "Facial-emotion monitoring with threshold alerts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Cnn,
    Lda,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier from <data>/<label>/*.pgm
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "cnn")]
        kind: Kind,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 28)]
        roi_size: usize,
    },
    /// Print the seven emotion scores for one PGM image
    Predict {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Accuracy and confusion matrix over a labelled dataset
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Monitor a Y4M stream with a detections sidecar
    Run {
        #[arg(long)]
        video: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        thresh: Option<u64>,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Fixed RFC 3339 timestamp for alert events
        #[arg(long, hide = true)]
        clock: Option<String>,
    },
    /// Write the synthetic glyph dataset (train/ and test/)
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), PipelineError> {
    match command {
        Command::Train { data, epochs, lr, seed, out: path, kind, batch_size, roi_size } => {
            let kind = match kind {
                Kind::Cnn => ModelKind::Cnn,
                Kind::Lda => ModelKind::Lda,
            };
            let args = TrainArgs {
                data,
                out: path,
                kind,
                epochs,
                learning_rate: lr,
                batch_size,
                seed,
                roi_size,
            };
            cmd_train(&args, out)
        }
        Command::Predict { image, model } => cmd_predict(&image, &model, out),
        Command::Eval { data, model } => cmd_eval(&data, &model, out),
        Command::Run { video, detections, model, config, thresh, events, clock } => {
            let args = RunArgs { video, detections, model, config, thresh, events };
            let env = |k: &str| std::env::var(k).ok();
            match clock {
                Some(text) => {
                    let at: DateTime<Utc> = DateTime::parse_from_rfc3339(&text)
                        .map_err(|e| PipelineError::Usage(format!("--clock: {e}")))?
                        .with_timezone(&Utc);
                    cmd_run(&args, &env, FixedClock(at), out).map(drop)
                }
                None => cmd_run(&args, &env, SystemClock, out).map(drop),
            }
        }
        Command::Synth { out: dir, seed } => cmd_synth(&dir, seed, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(cli.command, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emonet: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
