use std::collections::{HashSet, VecDeque};
use std::io::{BufRead, Write};

use crate::alert::{AlertEvent, AlertMonitor, Clock, Summary};
use crate::classify::{EmotionClassifier, EmotionLabel};
use crate::preprocess::{extract_roi, resize_to_width, select_primary_face, BoundingBox, Detections};
use crate::smtp::send_alert;
use crate::vision::{temporal_smooth, Frame, Y4mReader};

use super::{DetectionCoords, PipelineConfig, PipelineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub events: Vec<AlertEvent>,
    pub summary: Summary,
    pub emails_sent: usize,
    /// Failed email deliveries; processing continues past them.
    pub warnings: usize,
}

/// Centred median over up to `k` frames; near the ends of the stream the
/// window shrinks symmetrically.
struct Smoother {
    radius: usize,
    buffer: VecDeque<Frame>,
    /// Position within `buffer` of the next frame to emit.
    next: usize,
}

impl Smoother {
    fn new(k: usize) -> Self {
        Smoother { radius: k / 2, buffer: VecDeque::new(), next: 0 }
    }

    fn emit(&mut self) -> Result<Frame> {
        let before = self.next;
        let after = self.buffer.len() - 1 - self.next;
        let r = self.radius.min(before).min(after);
        let window: Vec<Frame> =
            self.buffer.range(self.next - r..=self.next + r).cloned().collect();
        let index = self.buffer[self.next].index;
        let out = temporal_smooth(&window)
            .map_err(|e| PipelineError::Frame { index, reason: e.to_string() })?;
        self.next += 1;
        while self.next > self.radius {
            self.buffer.pop_front();
            self.next -= 1;
        }
        Ok(out)
    }

    fn push(&mut self, frame: Frame) -> Result<Option<Frame>> {
        self.buffer.push_back(frame);
        if self.buffer.len() > self.next + self.radius {
            Ok(Some(self.emit()?))
        } else {
            Ok(None)
        }
    }

    fn finish(&mut self) -> Result<Vec<Frame>> {
        let mut out = Vec::new();
        while self.next < self.buffer.len() {
            out.push(self.emit()?);
        }
        Ok(out)
    }
}

struct Runner<'a, C: Clock> {
    detections: &'a Detections,
    model: &'a dyn EmotionClassifier,
    config: &'a PipelineConfig,
    monitor: AlertMonitor<C>,
    sink: &'a mut dyn Write,
    delivered: HashSet<(EmotionLabel, u64)>,
    outcome_events: Vec<AlertEvent>,
    emails_sent: usize,
    warnings: usize,
}

impl<C: Clock> Runner<'_, C> {
    fn process(&mut self, frame: Frame) -> Result<()> {
        let index = frame.index;
        let stage = |reason: String| PipelineError::Frame { index, reason };
        let resized = resize_to_width(&frame, self.config.width);
        let factor = self.config.width as f64 / frame.width() as f64;
        let boxes: Vec<BoundingBox> = match self.config.detection_coords {
            DetectionCoords::Original => {
                self.detections.boxes_for(index).iter().map(|b| b.scaled(factor)).collect()
            }
            DetectionCoords::Resized => self.detections.boxes_for(index).to_vec(),
        };
        let Some(face) = select_primary_face(&boxes) else {
            return self.monitor.ingest_skipped(index).map_err(|e| stage(e.to_string()));
        };
        let roi = extract_roi(&resized, &face, self.config.roi_size).map_err(|e| stage(e.to_string()))?;
        let scores = self.model.classify(&roi).map_err(|e| stage(e.to_string()))?;
        let Some(event) = self.monitor.ingest(index, &scores).map_err(|e| stage(e.to_string()))? else {
            return Ok(());
        };
        writeln!(self.sink, "{}", event.log_line())
            .and_then(|_| self.sink.flush())
            .map_err(|e| stage(format!("writing event log: {e}")))?;
        if let Some(smtp) = &self.config.smtp {
            if self.delivered.insert(event.dedup_key()) {
                match send_alert(smtp, &event) {
                    Ok(receipt) if receipt.accepted => self.emails_sent += 1,
                    Ok(_) => {
                        log::warn!("frame {index}: alert email not accepted");
                        self.warnings += 1;
                    }
                    Err(e) => {
                        log::warn!("frame {index}: alert email failed: {e}");
                        self.warnings += 1;
                    }
                }
            }
        }
        self.outcome_events.push(event);
        Ok(())
    }
}

/// Runs every frame of a Y4M stream through smoothing, resize, face
/// selection, classification and the alert monitor. Event log lines go to
/// `sink` as alerts fire.
pub fn run_stream<R: BufRead, C: Clock>(
    video: R,
    detections: &Detections,
    model: &dyn EmotionClassifier,
    config: &PipelineConfig,
    clock: C,
    sink: &mut dyn Write,
) -> Result<RunOutcome> {
    let policy = config.validate()?;
    if model.roi_size() != config.roi_size {
        return Err(PipelineError::Config(format!(
            "model expects {}px regions but roi_size is {}",
            model.roi_size(),
            config.roi_size
        )));
    }
    // the caller knows the path; decode errors already name their frame
    let video_err = |source| PipelineError::Video { path: "<video>".into(), source };
    let mut reader = Y4mReader::new(video).map_err(video_err)?;
    let mut runner = Runner {
        detections,
        model,
        config,
        monitor: AlertMonitor::with_clock(policy, clock),
        sink,
        delivered: HashSet::new(),
        outcome_events: Vec::new(),
        emails_sent: 0,
        warnings: 0,
    };
    let mut smoother = Smoother::new(config.smoothing);
    while let Some(frame) = reader.next_frame().map_err(video_err)? {
        if let Some(ready) = smoother.push(frame)? {
            runner.process(ready)?;
        }
    }
    for ready in smoother.finish()? {
        runner.process(ready)?;
    }
    Ok(RunOutcome {
        summary: runner.monitor.summarize(),
        events: runner.outcome_events,
        emails_sent: runner.emails_sent,
        warnings: runner.warnings,
    })
}
