use std::collections::BTreeMap;

use super::{BoundingBox, PreprocessError, Result};

/// Detector parameters carried in the sidecar header. They describe how the
/// boxes were produced and are never used arithmetically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionMeta {
    /// Kept as written (`1,0` and `1.1` are both seen in the wild).
    pub scale_factor: String,
    pub min_neighbors: u32,
    pub min_size: (u32, u32),
}

impl Default for DetectionMeta {
    fn default() -> Self {
        Self {
            scale_factor: "1.0".into(),
            min_neighbors: 12,
            min_size: (60, 60),
        }
    }
}

/// Face boxes per frame index, as read from a sidecar file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Detections {
    pub meta: DetectionMeta,
    boxes: BTreeMap<u64, Vec<BoundingBox>>,
    /// Records discarded for being smaller than `meta.min_size`.
    pub dropped: usize,
}

impl Detections {
    pub fn boxes_for(&self, frame_index: u64) -> &[BoundingBox] {
        self.boxes.get(&frame_index).map_or(&[], Vec::as_slice)
    }

    pub fn frames(&self) -> impl Iterator<Item = (u64, &[BoundingBox])> {
        self.boxes.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn total(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> PreprocessError {
    PreprocessError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_header(line_no: usize, text: &str, meta: &mut DetectionMeta) -> Result<()> {
    for token in text.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        match key {
            "scale_factor" => meta.scale_factor = value.to_string(),
            "min_neighbors" => {
                meta.min_neighbors = value
                    .parse()
                    .map_err(|_| malformed(line_no, format!("bad min_neighbors {value:?}")))?
            }
            "min_size" => {
                let parsed = value
                    .split_once(['x', 'X'])
                    .and_then(|(w, h)| Some((w.parse().ok()?, h.parse().ok()?)));
                meta.min_size =
                    parsed.ok_or_else(|| malformed(line_no, format!("bad min_size {value:?}")))?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Parses `frame_index fX fY fW fH` records, one per line. `#` lines are
/// comments; `key=value` pairs on them set [`DetectionMeta`]. Boxes smaller
/// than `min_size` in either dimension are dropped and counted.
pub fn load_detections(bytes: &[u8]) -> Result<Detections> {
    let text = std::str::from_utf8(bytes).map_err(|_| PreprocessError::NotText)?;
    let mut meta = DetectionMeta::default();
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            parse_header(line_no, comment, &mut meta)?;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(malformed(
                line_no,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let mut values = [0i64; 5];
        for (v, f) in values.iter_mut().zip(&fields) {
            *v = f
                .parse()
                .map_err(|_| malformed(line_no, format!("not an integer: {f:?}")))?;
        }
        if values.iter().any(|&v| v < 0) {
            return Err(PreprocessError::NegativeField { line: line_no });
        }
        if values[3] == 0 || values[4] == 0 {
            return Err(malformed(line_no, "zero-sized box"));
        }
        let to_u32 = |v: i64| u32::try_from(v).map_err(|_| malformed(line_no, "field too large"));
        records.push((
            values[0] as u64,
            BoundingBox::new(
                to_u32(values[1])?,
                to_u32(values[2])?,
                to_u32(values[3])?,
                to_u32(values[4])?,
            ),
        ));
    }
    // the header may come after records, so filter once everything is read
    let mut out = Detections {
        meta,
        ..Default::default()
    };
    let (min_w, min_h) = out.meta.min_size;
    for (frame, b) in records {
        if b.w < min_w || b.h < min_h {
            out.dropped += 1;
            continue;
        }
        out.boxes.entry(frame).or_default().push(b);
    }
    if out.dropped > 0 {
        log::warn!(
            "dropped {} detections smaller than {}x{}",
            out.dropped,
            min_w,
            min_h
        );
    }
    Ok(out)
}
