use super::{Frame, Result, VisionError};

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &'static str) -> Result<u32> {
    *pos = skip_space_and_comments(bytes, *pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(VisionError::MalformedHeader(what));
    }
    // a number running into end of input may have lost digits
    if *pos == bytes.len() {
        return Err(VisionError::MalformedHeader("truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(VisionError::MalformedHeader(what))
}

/// Parses a binary (P5) PGM with maxval 255. Bytes after the declared pixel
/// count are ignored.
pub fn parse_pgm(bytes: &[u8]) -> Result<Frame> {
    if !bytes.starts_with(b"P5") {
        return Err(VisionError::BadMagic);
    }
    let mut pos = 2;
    if bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        return Err(VisionError::BadMagic);
    }
    let width = header_number(bytes, &mut pos, "width")? as usize;
    let height = header_number(bytes, &mut pos, "height")? as usize;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(VisionError::MalformedHeader("zero dimension"));
    }
    if maxval != 255 {
        return Err(VisionError::MaxvalUnsupported(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(VisionError::TruncatedPixels {
                expected: width * height,
                got: 0,
            })
        }
    }
    let expected = width
        .checked_mul(height)
        .ok_or(VisionError::MalformedHeader("dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(VisionError::TruncatedPixels {
            expected,
            got: raster.len(),
        });
    }
    Frame::new(0, width, height, raster[..expected].to_vec())
}

pub fn write_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.luma());
    out
}
