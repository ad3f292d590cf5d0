use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use crate::alert::AlertPolicy;
use crate::classify::EmotionLabel;
use crate::smtp::SmtpConfig;

use super::{PipelineError, Result};

/// Coordinate frame the detections sidecar was written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionCoords {
    /// Original frame pixels; boxes are scaled by the working-width factor.
    Original,
    /// Already in working-width pixels.
    Resized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub width: usize,
    pub roi_size: usize,
    pub thresh: Option<u64>,
    pub monitored: Vec<EmotionLabel>,
    pub cooldown: u64,
    pub smoothing: usize,
    pub model: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub video: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub detection_coords: DetectionCoords,
    pub smtp: Option<SmtpConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            width: 500,
            roi_size: 28,
            thresh: None,
            monitored: AlertPolicy::DEFAULT_MONITORED.to_vec(),
            cooldown: 0,
            smoothing: 1,
            model: None,
            detections: None,
            video: None,
            events: None,
            detection_coords: DetectionCoords::Original,
            smtp: None,
        }
    }
}

/// `key=value` lines; `#` starts a comment line; blank lines are ignored.
/// Later duplicates win.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            PipelineError::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
        })?;
        out.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: invalid number {value:?}")))
}

fn parse_labels(value: &str) -> Result<Vec<EmotionLabel>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| PipelineError::Config(format!("unknown label {s:?}"))))
        .collect()
}

fn split_list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

impl PipelineConfig {
    /// Applies file keys, then the SMTP environment variables (which win).
    pub fn from_sources(
        file: &BTreeMap<String, String>,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        let mut c = PipelineConfig::default();
        let mut smtp: BTreeMap<String, String> = BTreeMap::new();
        for (key, value) in file {
            match key.as_str() {
                "width" => c.width = parse_num(key, value)?,
                "roi_size" => c.roi_size = parse_num(key, value)?,
                "thresh" => c.thresh = Some(parse_num(key, value)?),
                "monitored" => c.monitored = parse_labels(value)?,
                "cooldown" => c.cooldown = parse_num(key, value)?,
                "smoothing" => c.smoothing = parse_num(key, value)?,
                "model" => c.model = Some(value.into()),
                "detections" => c.detections = Some(value.into()),
                "video" => c.video = Some(value.into()),
                "events" => c.events = Some(value.into()),
                "detections_coords" => {
                    c.detection_coords = match value.as_str() {
                        "original" => DetectionCoords::Original,
                        "resized" => DetectionCoords::Resized,
                        other => {
                            return Err(PipelineError::Config(format!(
                                "detections_coords must be original or resized, got {other:?}"
                            )))
                        }
                    }
                }
                "smtp_host" | "smtp_port" | "alert_from" | "alert_to" | "smtp_hello"
                | "smtp_timeout" | "alert_signature" => {
                    smtp.insert(key.clone(), value.clone());
                }
                other => return Err(PipelineError::Config(format!("unknown key {other:?}"))),
            }
        }
        for (var, key) in [
            ("EMONET_SMTP_HOST", "smtp_host"),
            ("EMONET_SMTP_PORT", "smtp_port"),
            ("EMONET_ALERT_FROM", "alert_from"),
            ("EMONET_ALERT_TO", "alert_to"),
        ] {
            if let Some(v) = env(var).filter(|v| !v.is_empty()) {
                smtp.insert(key.to_owned(), v);
            }
        }
        if let Some(host) = smtp.get("smtp_host") {
            let from = smtp
                .get("alert_from")
                .ok_or_else(|| PipelineError::Config("smtp host set but alert_from missing".into()))?;
            let to = split_list(smtp.get("alert_to").map_or("", String::as_str));
            let mut s = SmtpConfig::new(host.clone(), from.clone(), to);
            if let Some(p) = smtp.get("smtp_port") {
                s.port = parse_num("smtp_port", p)?;
            }
            if let Some(h) = smtp.get("smtp_hello") {
                s.hello_name = h.clone();
            }
            if let Some(t) = smtp.get("smtp_timeout") {
                let secs: f64 = parse_num("smtp_timeout", t)?;
                if !(secs > 0.0 && secs.is_finite()) {
                    return Err(PipelineError::Config("smtp_timeout must be positive".into()));
                }
                s.timeout = Duration::from_secs_f64(secs);
            }
            s.signature = smtp.get("alert_signature").cloned();
            s.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            c.smtp = Some(s);
        }
        Ok(c)
    }

    /// Checks that the configuration can drive a run.
    pub fn validate(&self) -> Result<AlertPolicy> {
        if self.width == 0 {
            return Err(PipelineError::Config("width must be positive".into()));
        }
        if self.roi_size == 0 {
            return Err(PipelineError::Config("roi_size must be positive".into()));
        }
        if !matches!(self.smoothing, 1 | 3 | 5) {
            return Err(PipelineError::Config(format!(
                "smoothing must be 1, 3 or 5, got {}",
                self.smoothing
            )));
        }
        let thresh = self
            .thresh
            .ok_or_else(|| PipelineError::Config("thresh is required".into()))?;
        AlertPolicy::new(thresh, &self.monitored, self.cooldown)
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}
