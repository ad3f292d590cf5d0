use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use crate::alert::Clock;
use crate::classify::{
    cnn_train_with, evaluate, format_score_report, load_dataset_dir, write_dataset_dir,
    EmotionClassifier, LabeledRoi, LdaConfig, LdaModel, TrainConfig,
};
use crate::preprocess::load_detections;
use crate::synth::toy_dataset;
use crate::vision::parse_pgm;

use super::{
    load_model, parse_config_text, write_model_file, Model, PipelineConfig, PipelineError, Result,
    RunOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cnn,
    Lda,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub kind: ModelKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub roi_size: usize,
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(PipelineError::io("<stdout>"))
}

pub fn read_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(PipelineError::io(path))?;
    load_model(&bytes).map_err(|source| PipelineError::Model { path: path.to_path_buf(), source })
}

fn pixel_rows(data: &[LabeledRoi]) -> (Vec<Vec<f64>>, Vec<usize>) {
    (
        data.iter().map(|s| s.roi.pixels().iter().map(|&v| v as f64).collect()).collect(),
        data.iter().map(|s| s.label.index()).collect(),
    )
}

/// Trains a model on `<data>/<label>/*.pgm` and writes it atomically.
pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    if args.epochs == 0 {
        return Err(PipelineError::Usage("--epochs must be at least 1".into()));
    }
    if args.batch_size == 0 {
        return Err(PipelineError::Usage("--batch-size must be at least 1".into()));
    }
    if !(args.learning_rate > 0.0 && args.learning_rate.is_finite()) {
        return Err(PipelineError::Usage("--lr must be a positive number".into()));
    }
    if args.roi_size < 10 {
        return Err(PipelineError::Usage("--roi-size must be at least 10".into()));
    }
    let data = load_dataset_dir(&args.data, args.roi_size)?;
    let model = match args.kind {
        ModelKind::Cnn => {
            let config = TrainConfig {
                epochs: args.epochs,
                learning_rate: args.learning_rate,
                batch_size: args.batch_size,
                seed: args.seed,
            };
            let mut failed = None;
            let (model, _) = cnn_train_with(&data, config, |s| {
                let line = format!(
                    "epoch {} loss {:.6} accuracy {:.2}\n",
                    s.epoch,
                    s.mean_loss,
                    100.0 * s.accuracy
                );
                if failed.is_none() {
                    failed = write_out(out, &line).err();
                }
            })?;
            if let Some(e) = failed {
                return Err(e);
            }
            Model::Cnn(model)
        }
        ModelKind::Lda => {
            let (rows, labels) = pixel_rows(&data);
            let model = LdaModel::fit(&rows, &labels, args.roi_size, LdaConfig::default())?.quantized()?;
            Model::Lda(model)
        }
    };
    let eval = evaluate(&model, &data)?;
    write_out(out, &format!("train accuracy {:.2}\n", 100.0 * eval.accuracy()))?;
    write_model_file(&args.out, &model).map_err(PipelineError::io(&args.out))?;
    write_out(out, &format!("wrote {} model to {}\n", model.kind(), args.out.display()))
}

/// Scores one PGM image (the whole image is the face region).
pub fn cmd_predict(image: &Path, model_path: &Path, out: &mut dyn Write) -> Result<()> {
    let model = read_model(model_path)?;
    let bytes = fs::read(image).map_err(PipelineError::io(image))?;
    let frame = parse_pgm(&bytes)
        .map_err(|source| PipelineError::Image { path: image.to_path_buf(), source })?;
    let sample = LabeledRoi::from_frame(crate::classify::EmotionLabel::Neutral, &frame, model.roi_size())?;
    let scores = model.classify(&sample.roi)?;
    write_out(out, &format_score_report(scores.probs()))
}

pub fn cmd_eval(data: &Path, model_path: &Path, out: &mut dyn Write) -> Result<()> {
    let model = read_model(model_path)?;
    let samples = load_dataset_dir(data, model.roi_size())?;
    let eval = evaluate(&model, &samples)?;
    write_out(out, &eval.report())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunArgs {
    pub video: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub thresh: Option<u64>,
    pub events: Option<PathBuf>,
}

/// Full monitoring run. Command-line paths and threshold override the
/// config file; SMTP settings come from the file and the environment.
pub fn cmd_run<C: Clock>(
    args: &RunArgs,
    env: &dyn Fn(&str) -> Option<String>,
    clock: C,
    out: &mut dyn Write,
) -> Result<RunOutcome> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
            parse_config_text(&text)?
        }
        None => Default::default(),
    };
    let mut config = PipelineConfig::from_sources(&file, env)?;
    if let Some(t) = args.thresh {
        config.thresh = Some(t);
    }
    for (slot, arg) in [
        (&mut config.video, &args.video),
        (&mut config.detections, &args.detections),
        (&mut config.model, &args.model),
        (&mut config.events, &args.events),
    ] {
        if arg.is_some() {
            slot.clone_from(arg);
        }
    }
    config.validate()?;
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone().ok_or_else(|| PipelineError::Usage(format!("{flag} is required")))
    };
    let video_path = need(&config.video, "--video")?;
    let det_path = need(&config.detections, "--detections")?;
    let model_path = need(&config.model, "--model")?;
    let model = read_model(&model_path)?;
    if !file.contains_key("roi_size") {
        config.roi_size = model.roi_size();
    }
    let det_bytes = fs::read(&det_path).map_err(PipelineError::io(&det_path))?;
    let detections = load_detections(&det_bytes)
        .map_err(|source| PipelineError::Detections { path: det_path.clone(), source })?;
    if detections.dropped > 0 {
        log::warn!("{} detections below min_size were ignored", detections.dropped);
    }
    let video = File::open(&video_path).map_err(PipelineError::io(&video_path))?;
    let mut log_file;
    let mut sink: Box<dyn Write> = match &config.events {
        Some(path) => {
            log_file = File::create(path).map_err(PipelineError::io(path))?;
            Box::new(&mut log_file)
        }
        None => Box::new(std::io::sink()),
    };
    let outcome = super::run_stream(BufReader::new(video), &detections, &model, &config, clock, &mut sink)
        .map_err(|e| match e {
            PipelineError::Video { source, .. } => PipelineError::Video { path: video_path.clone(), source },
            other => other,
        })?;
    drop(sink);
    let mut report = String::new();
    for e in &outcome.events {
        report.push_str(&format!("alert {}\n", e.log_line()));
    }
    report.push_str(&outcome.summary.to_string());
    report.push_str(&format!("alerts: {}\n", outcome.events.len()));
    if config.smtp.is_some() {
        report.push_str(&format!("emails: {}\n", outcome.emails_sent));
    }
    report.push_str(&format!("warnings: {}\n", outcome.warnings));
    write_out(out, &report)?;
    Ok(outcome)
}

/// Writes the toy glyph dataset as `<out>/train` and `<out>/test`.
pub fn cmd_synth(dir: &Path, seed: u64, out: &mut dyn Write) -> Result<()> {
    let (train, test) = toy_dataset(seed);
    for (name, part) in [("train", &train), ("test", &test)] {
        write_dataset_dir(&dir.join(name), part)?;
    }
    write_out(
        out,
        &format!("wrote {} training and {} test images under {}\n", train.len(), test.len(), dir.display()),
    )
}
