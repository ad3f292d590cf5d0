//! Per-label frame counters and threshold alerts.
//!
//! Every classified frame increments the counter of its argmax label. When a
//! monitored label's counter strictly exceeds the threshold an [`AlertEvent`]
//! is emitted, that counter is reset, and a cooldown starts. While the
//! cooldown runs, frames whose argmax is a monitored label are absorbed
//! without counting, so a persistent emotion re-alerts only after
//! `cooldown + thresh + 1` frames.

use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::classify::{EmotionLabel, EmotionScores};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlertError {
    #[error("frame index {got} does not follow {previous}")]
    NonMonotonicFrameIndex { previous: u64, got: u64 },
    #[error("threshold must be at least 1")]
    InvalidThreshold,
    #[error("at least one label must be monitored")]
    NoMonitoredLabels,
}

pub type Result<T> = std::result::Result<T, AlertError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertPolicy {
    thresh: u64,
    monitored: [bool; EmotionLabel::COUNT],
    cooldown_frames: u64,
}

impl AlertPolicy {
    pub const DEFAULT_MONITORED: [EmotionLabel; 4] = [
        EmotionLabel::Sad,
        EmotionLabel::Angry,
        EmotionLabel::Surprised,
        EmotionLabel::Disgust,
    ];

    pub fn new(thresh: u64, monitored: &[EmotionLabel], cooldown_frames: u64) -> Result<Self> {
        if thresh == 0 {
            return Err(AlertError::InvalidThreshold);
        }
        if monitored.is_empty() {
            return Err(AlertError::NoMonitoredLabels);
        }
        let mut mask = [false; EmotionLabel::COUNT];
        for l in monitored {
            mask[l.index()] = true;
        }
        Ok(AlertPolicy { thresh, monitored: mask, cooldown_frames })
    }

    /// Default monitored set, no cooldown.
    pub fn with_thresh(thresh: u64) -> Result<Self> {
        Self::new(thresh, &Self::DEFAULT_MONITORED, 0)
    }

    pub fn thresh(&self) -> u64 {
        self.thresh
    }

    pub fn cooldown_frames(&self) -> u64 {
        self.cooldown_frames
    }

    pub fn is_monitored(&self, label: EmotionLabel) -> bool {
        self.monitored[label.index()]
    }

    pub fn monitored(&self) -> Vec<EmotionLabel> {
        EmotionLabel::ALL.into_iter().filter(|&l| self.is_monitored(l)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CounterState {
    /// Live counters, reset when their label alerts.
    pub counters: [u64; EmotionLabel::COUNT],
    /// Frames per argmax label over the whole stream, never reset.
    pub totals: [u64; EmotionLabel::COUNT],
    pub frames_seen: u64,
    pub cooldown_remaining: u64,
    /// Counts removed by resets plus monitored frames absorbed by cooldown.
    pub consumed: u64,
    /// Frames without a classification (no face).
    pub skipped: u64,
    pub last_frame: Option<u64>,
}

impl CounterState {
    pub fn classified_frames(&self) -> u64 {
        self.frames_seen - self.skipped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlertEvent {
    pub label: EmotionLabel,
    pub frame_index: u64,
    pub counter_value: u64,
    pub scores: EmotionScores,
    pub wall_time: DateTime<Utc>,
}

impl AlertEvent {
    /// Delivery is at-least-once; receivers deduplicate on this key.
    pub fn dedup_key(&self) -> (EmotionLabel, u64) {
        (self.label, self.frame_index)
    }

    /// `frame_index label counter_value timestamp`, no trailing newline.
    pub fn log_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.frame_index,
            self.label,
            self.counter_value,
            self.wall_time.to_rfc3339_opts(SecondsFormat::Secs, true)
        )
    }
}

pub trait Clock {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always reports the same instant.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// Counter state plus the policy and clock it runs under.
#[derive(Debug, Clone)]
pub struct AlertMonitor<C = SystemClock> {
    policy: AlertPolicy,
    state: CounterState,
    clock: C,
}

impl AlertMonitor<SystemClock> {
    pub fn new(policy: AlertPolicy) -> Self {
        Self::with_clock(policy, SystemClock)
    }
}

impl<C: Clock> AlertMonitor<C> {
    pub fn with_clock(policy: AlertPolicy, clock: C) -> Self {
        AlertMonitor { policy, state: CounterState::default(), clock }
    }

    pub fn policy(&self) -> &AlertPolicy {
        &self.policy
    }

    pub fn state(&self) -> &CounterState {
        &self.state
    }

    fn advance(&mut self, frame_index: u64) -> Result<()> {
        if let Some(previous) = self.state.last_frame {
            if frame_index <= previous {
                return Err(AlertError::NonMonotonicFrameIndex { previous, got: frame_index });
            }
        }
        self.state.last_frame = Some(frame_index);
        self.state.frames_seen += 1;
        Ok(())
    }

    /// Counts one classified frame.
    pub fn ingest(&mut self, frame_index: u64, scores: &EmotionScores) -> Result<Option<AlertEvent>> {
        self.advance(frame_index)?;
        let label = scores.argmax();
        let i = label.index();
        let monitored = self.policy.is_monitored(label);
        self.state.totals[i] += 1;
        if self.state.cooldown_remaining > 0 {
            self.state.cooldown_remaining -= 1;
            if monitored {
                self.state.consumed += 1;
                return Ok(None);
            }
        }
        self.state.counters[i] += 1;
        let value = self.state.counters[i];
        if !monitored || value <= self.policy.thresh {
            return Ok(None);
        }
        self.state.counters[i] = 0;
        self.state.consumed += value;
        self.state.cooldown_remaining = self.policy.cooldown_frames;
        Ok(Some(AlertEvent {
            label,
            frame_index,
            counter_value: value,
            scores: *scores,
            wall_time: self.clock.now(),
        }))
    }

    /// Counts a frame that had nothing to classify; only the cooldown moves.
    pub fn ingest_skipped(&mut self, frame_index: u64) -> Result<()> {
        self.advance(frame_index)?;
        self.state.skipped += 1;
        self.state.cooldown_remaining = self.state.cooldown_remaining.saturating_sub(1);
        Ok(())
    }

    pub fn summarize(&self) -> Summary {
        summarize(&self.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub frames_seen: u64,
    pub classified: u64,
    pub counters: [u64; EmotionLabel::COUNT],
    pub totals: [u64; EmotionLabel::COUNT],
    /// `totals / frames_seen · 100`; all zero for an empty stream.
    pub shares: [f64; EmotionLabel::COUNT],
}

pub fn summarize(state: &CounterState) -> Summary {
    let mut shares = [0.0; EmotionLabel::COUNT];
    if state.frames_seen > 0 {
        for (s, &t) in shares.iter_mut().zip(&state.totals) {
            *s = t as f64 / state.frames_seen as f64 * 100.0;
        }
    }
    Summary {
        frames_seen: state.frames_seen,
        classified: state.classified_frames(),
        counters: state.counters,
        totals: state.totals,
        shares,
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames: {}", self.frames_seen)?;
        writeln!(f, "classified: {}", self.classified)?;
        for label in EmotionLabel::ALL {
            let i = label.index();
            writeln!(
                f,
                "{}={:.2}% frames={} counter={}",
                label, self.shares[i], self.totals[i], self.counters[i]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn clock() -> FixedClock {
        FixedClock(Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap())
    }

    fn one_hot(label: EmotionLabel) -> EmotionScores {
        let mut p = [0.0; 7];
        p[label.index()] = 1.0;
        EmotionScores::new(&p).unwrap()
    }

    fn run(policy: AlertPolicy, labels: &[EmotionLabel]) -> (Vec<AlertEvent>, CounterState) {
        let mut m = AlertMonitor::with_clock(policy, clock());
        let mut events = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            events.extend(m.ingest(i as u64 + 1, &one_hot(l)).unwrap());
        }
        (events, m.state().clone())
    }

    #[test]
    fn strict_threshold() {
        let policy = AlertPolicy::with_thresh(5).unwrap();
        let (events, _) = run(policy.clone(), &[EmotionLabel::Sad; 5]);
        assert!(events.is_empty());
        let (events, state) = run(policy, &[EmotionLabel::Sad; 6]);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].frame_index, 6);
        assert_eq!(events[0].counter_value, 6);
        assert_eq!(state.counters[EmotionLabel::Sad.index()], 0);
        assert_eq!(events[0].log_line(), "6 sad 6 2024-01-02T03:04:05Z");
    }

    #[test]
    fn cooldown_trace() {
        let policy = AlertPolicy::new(5, &AlertPolicy::DEFAULT_MONITORED, 10).unwrap();
        let (events, state) = run(policy, &[EmotionLabel::Sad; 30]);
        let frames: Vec<u64> = events.iter().map(|e| e.frame_index).collect();
        assert_eq!(frames, vec![6, 22]);
        assert_eq!(state.counters.iter().sum::<u64>() + state.consumed, 30);
    }

    #[test]
    fn neutral_dominant_scores_do_not_alert() {
        let raw = [0.82, 0.15, 7.89, 22.18, 8.10, 1.33, 53.85];
        let scores = EmotionScores::normalized(raw.map(|v| v / 100.0)).unwrap();
        assert_eq!(scores.argmax(), EmotionLabel::Neutral);
        let mut m = AlertMonitor::with_clock(AlertPolicy::with_thresh(5).unwrap(), clock());
        for i in 0..20 {
            assert!(m.ingest(i, &scores).unwrap().is_none());
        }
        for l in AlertPolicy::DEFAULT_MONITORED {
            assert_eq!(m.state().counters[l.index()], 0);
        }
        assert_eq!(m.state().counters[EmotionLabel::Neutral.index()], 20);
    }

    #[test]
    fn non_monotonic_index() {
        let mut m = AlertMonitor::with_clock(AlertPolicy::with_thresh(5).unwrap(), clock());
        m.ingest(4, &one_hot(EmotionLabel::Sad)).unwrap();
        let err = m.ingest(4, &one_hot(EmotionLabel::Sad)).unwrap_err();
        assert_eq!(err, AlertError::NonMonotonicFrameIndex { previous: 4, got: 4 });
        assert!(m.ingest_skipped(2).is_err());
        assert_eq!(m.state().frames_seen, 1);
    }

    #[test]
    fn skipped_frames_advance_cooldown_only() {
        let policy = AlertPolicy::new(1, &[EmotionLabel::Sad], 3).unwrap();
        let mut m = AlertMonitor::with_clock(policy, clock());
        m.ingest(1, &one_hot(EmotionLabel::Sad)).unwrap();
        assert!(m.ingest(2, &one_hot(EmotionLabel::Sad)).unwrap().is_some());
        for i in 3..6 {
            m.ingest_skipped(i).unwrap();
        }
        assert_eq!(m.state().cooldown_remaining, 0);
        assert_eq!(m.state().counters, [0; 7]);
        m.ingest(6, &one_hot(EmotionLabel::Sad)).unwrap();
        assert!(m.ingest(7, &one_hot(EmotionLabel::Sad)).unwrap().is_some());
    }

    #[test]
    fn summaries() {
        let empty = summarize(&CounterState::default());
        assert!(empty.to_string().contains("angry=0.00%"));
        let (_, state) = run(AlertPolicy::with_thresh(5).unwrap(), &[EmotionLabel::Happy; 4]);
        assert!(summarize(&state).to_string().contains("happy=100.00% frames=4 counter=4"));
        use EmotionLabel::*;
        let trace = [Happy, Sad, Sad, Neutral, Happy, Happy, Angry, Sad, Neutral, Happy];
        let (_, state) = run(AlertPolicy::with_thresh(5).unwrap(), &trace);
        let s = summarize(&state);
        assert_eq!(s.shares, [10.0, 0.0, 0.0, 40.0, 30.0, 0.0, 20.0]);
        let text = s.to_string();
        for line in ["angry=10.00%", "happy=40.00%", "sad=30.00%", "neutral=20.00%", "scared=0.00%"] {
            assert!(text.contains(line), "{line}");
        }
    }

    #[test]
    fn invalid_policies() {
        assert_eq!(AlertPolicy::with_thresh(0), Err(AlertError::InvalidThreshold));
        assert_eq!(AlertPolicy::new(1, &[], 0), Err(AlertError::NoMonitoredLabels));
    }

    fn label_strategy() -> impl Strategy<Value = EmotionLabel> {
        (0usize..7).prop_map(|i| EmotionLabel::from_index(i).unwrap())
    }

    proptest! {
        #[test]
        fn run_length_alert_count(t in 1u64..8, n in 0usize..80, which in 0usize..4) {
            let label = AlertPolicy::DEFAULT_MONITORED[which];
            let (events, _) = run(AlertPolicy::with_thresh(t).unwrap(), &vec![label; n]);
            prop_assert_eq!(events.len() as u64, n as u64 / (t + 1));
        }

        #[test]
        fn accounting_and_monitored_only(
            labels in prop::collection::vec(label_strategy(), 0..120),
            t in 1u64..6,
            cooldown in 0u64..8,
            monitored in prop::collection::vec(label_strategy(), 1..4),
        ) {
            let policy = AlertPolicy::new(t, &monitored, cooldown).unwrap();
            let (events, state) = run(policy.clone(), &labels);
            prop_assert_eq!(state.counters.iter().sum::<u64>() + state.consumed, state.frames_seen);
            prop_assert_eq!(state.totals.iter().sum::<u64>(), labels.len() as u64);
            for e in &events {
                prop_assert!(policy.is_monitored(e.label));
                prop_assert!(e.counter_value > t);
            }
            let (again, _) = run(policy, &labels);
            let a: Vec<String> = events.iter().map(AlertEvent::log_line).collect();
            let b: Vec<String> = again.iter().map(AlertEvent::log_line).collect();
            prop_assert_eq!(a, b);
        }
    }
}
