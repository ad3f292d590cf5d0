use std::io::{BufRead, ErrorKind, Read, Write};

use super::{Frame, Result, VisionError};

const SIGNATURE: &[u8] = b"YUV4MPEG2";
const MAX_HEADER: usize = 4096;
const MAX_FRAME_LINE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chroma {
    Mono,
    /// 4:2:0 in any of its siting variants (`420`, `420jpeg`, `420paldv`,
    /// `420mpeg2`); the plane sizes are identical.
    C420,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoHeader {
    pub width: usize,
    pub height: usize,
    pub fps_numerator: u32,
    pub fps_denominator: u32,
    pub chroma: Chroma,
}

impl VideoHeader {
    pub fn luma_len(&self) -> usize {
        self.width * self.height
    }

    /// Bytes of chroma that follow the luma plane in each frame.
    pub fn chroma_len(&self) -> usize {
        match self.chroma {
            Chroma::Mono => 0,
            Chroma::C420 => 2 * self.width.div_ceil(2) * self.height.div_ceil(2),
        }
    }

    pub fn header_line(&self) -> String {
        let c = match self.chroma {
            Chroma::Mono => "mono",
            Chroma::C420 => "420jpeg",
        };
        format!(
            "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C{}\n",
            self.width, self.height, self.fps_numerator, self.fps_denominator, c
        )
    }
}

fn parse_dim(tag: char, v: &str) -> Result<usize> {
    match v.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(VisionError::MalformedTag { tag }),
    }
}

fn parse_header_line(line: &[u8]) -> Result<VideoHeader> {
    let rest = line
        .strip_prefix(SIGNATURE)
        .ok_or(VisionError::MissingSignature)?;
    if !rest.is_empty() && rest[0] != b' ' {
        return Err(VisionError::MissingSignature);
    }
    let text = std::str::from_utf8(rest).map_err(|_| VisionError::MalformedTag { tag: '?' })?;
    let (mut width, mut height, mut fps) = (None, None, None);
    let mut chroma = Chroma::C420;
    for token in text.split(' ').filter(|t| !t.is_empty()) {
        let mut chars = token.chars();
        let tag = chars.next().expect("token is nonempty");
        let value = chars.as_str();
        match tag {
            'W' => width = Some(parse_dim('W', value)?),
            'H' => height = Some(parse_dim('H', value)?),
            'F' => {
                let (n, d) = value
                    .split_once(':')
                    .ok_or(VisionError::MalformedTag { tag: 'F' })?;
                match (n.parse::<u32>(), d.parse::<u32>()) {
                    (Ok(n), Ok(d)) if n >= 1 && d >= 1 => fps = Some((n, d)),
                    _ => return Err(VisionError::MalformedTag { tag: 'F' }),
                }
            }
            'C' => {
                chroma = match value {
                    "mono" => Chroma::Mono,
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => Chroma::C420,
                    other => return Err(VisionError::UnsupportedChroma(other.to_string())),
                }
            }
            // interlacing, aspect, extensions: irrelevant for luma decoding
            _ => {}
        }
    }
    let width = width.ok_or(VisionError::MalformedTag { tag: 'W' })?;
    let height = height.ok_or(VisionError::MalformedTag { tag: 'H' })?;
    let (fps_numerator, fps_denominator) = fps.ok_or(VisionError::MalformedTag { tag: 'F' })?;
    Ok(VideoHeader {
        width,
        height,
        fps_numerator,
        fps_denominator,
        chroma,
    })
}

/// Parses the stream header at the start of `bytes`. Returns the header and
/// the number of bytes consumed, including the terminating newline.
pub fn parse_y4m_header(bytes: &[u8]) -> Result<(VideoHeader, usize)> {
    if !bytes.starts_with(&SIGNATURE[..bytes.len().min(SIGNATURE.len())]) || bytes.is_empty() {
        return Err(VisionError::MissingSignature);
    }
    let end = bytes
        .iter()
        .take(MAX_HEADER)
        .position(|&b| b == b'\n')
        .ok_or_else(|| {
            if bytes.len() >= MAX_HEADER {
                VisionError::HeaderTooLong(MAX_HEADER)
            } else if bytes.len() < SIGNATURE.len() {
                VisionError::MissingSignature
            } else {
                VisionError::TruncatedHeader
            }
        })?;
    Ok((parse_header_line(&bytes[..end])?, end + 1))
}

/// Reads up to and excluding `\n`. `Ok(None)` on EOF before any byte;
/// `Err(partial)` when EOF or the limit is hit mid-line.
fn read_line_bounded<R: BufRead>(
    r: &mut R,
    limit: usize,
) -> std::io::Result<Option<std::result::Result<Vec<u8>, Vec<u8>>>> {
    let mut line = Vec::new();
    loop {
        let buf = match r.fill_buf() {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if buf.is_empty() {
            return Ok(if line.is_empty() {
                None
            } else {
                Some(Err(line))
            });
        }
        if let Some(pos) = buf.iter().position(|&b| b == b'\n') {
            line.extend_from_slice(&buf[..pos]);
            r.consume(pos + 1);
            return Ok(Some(if line.len() > limit { Err(line) } else { Ok(line) }));
        }
        let n = buf.len();
        line.extend_from_slice(buf);
        r.consume(n);
        if line.len() > limit {
            return Ok(Some(Err(line)));
        }
    }
}

/// Fills `buf` as far as the stream allows and returns the count read.
fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Sequential frame reader. Chroma planes are read and discarded.
pub struct Y4mReader<R> {
    inner: R,
    header: VideoHeader,
    next_index: u64,
    scratch: Vec<u8>,
    done: bool,
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let line = match read_line_bounded(&mut inner, MAX_HEADER)? {
            Some(Ok(line)) => line,
            Some(Err(partial)) if partial.len() > MAX_HEADER => {
                return Err(VisionError::HeaderTooLong(MAX_HEADER))
            }
            Some(Err(partial)) => {
                if !SIGNATURE.starts_with(&partial[..partial.len().min(SIGNATURE.len())]) {
                    return Err(VisionError::MissingSignature);
                }
                return Err(VisionError::TruncatedHeader);
            }
            None => return Err(VisionError::MissingSignature),
        };
        let header = parse_header_line(&line)?;
        Ok(Self {
            inner,
            header,
            next_index: 0,
            scratch: Vec::new(),
            done: false,
        })
    }

    pub fn header(&self) -> &VideoHeader {
        &self.header
    }

    /// The next frame, or `None` at a clean end of stream. After an error
    /// the reader yields nothing further.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.done {
            return Ok(None);
        }
        let result = self.read_frame();
        if !matches!(result, Ok(Some(_))) {
            self.done = true;
        }
        result
    }

    fn read_frame(&mut self) -> Result<Option<Frame>> {
        let index = self.next_index;
        let marker = match read_line_bounded(&mut self.inner, MAX_FRAME_LINE)? {
            None => return Ok(None),
            Some(Ok(line)) => line,
            Some(Err(_)) => return Err(VisionError::MalformedFrameMarker { index }),
        };
        let ok = marker.starts_with(b"FRAME") && (marker.len() == 5 || marker[5] == b' ');
        if !ok {
            return Err(VisionError::MalformedFrameMarker { index });
        }
        let luma_len = self.header.luma_len();
        let expected = luma_len + self.header.chroma_len();
        let mut luma = vec![0u8; luma_len];
        let got = read_fully(&mut self.inner, &mut luma)?;
        if got < luma_len {
            return Err(VisionError::TruncatedFrame {
                index,
                expected,
                got,
            });
        }
        self.scratch.resize(self.header.chroma_len(), 0);
        let got_chroma = read_fully(&mut self.inner, &mut self.scratch)?;
        if got_chroma < self.scratch.len() {
            return Err(VisionError::TruncatedFrame {
                index,
                expected,
                got: luma_len + got_chroma,
            });
        }
        self.next_index += 1;
        Ok(Some(Frame::new(
            index,
            self.header.width,
            self.header.height,
            luma,
        )?))
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

/// Writes luma frames; 4:2:0 streams get neutral (128) chroma planes.
pub struct Y4mWriter<W> {
    inner: W,
    header: VideoHeader,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut inner: W, header: VideoHeader) -> Result<Self> {
        inner.write_all(header.header_line().as_bytes())?;
        Ok(Self { inner, header })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        if frame.width() != self.header.width || frame.height() != self.header.height {
            return Err(VisionError::DimensionMismatch(
                self.header.width,
                self.header.height,
                frame.width(),
                frame.height(),
            ));
        }
        self.inner.write_all(b"FRAME\n")?;
        self.inner.write_all(frame.luma())?;
        let chroma = vec![128u8; self.header.chroma_len()];
        self.inner.write_all(&chroma)?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(chroma: Chroma) -> VideoHeader {
        VideoHeader {
            width: 8,
            height: 6,
            fps_numerator: 25,
            fps_denominator: 1,
            chroma,
        }
    }

    fn stream(h: VideoHeader, frames: usize) -> Vec<u8> {
        let mut w = Y4mWriter::new(Vec::new(), h).unwrap();
        for i in 0..frames {
            let luma = (0..h.luma_len()).map(|p| (p * 7 + i * 31) as u8).collect();
            w.write_frame(&Frame::new(i as u64, h.width, h.height, luma).unwrap())
                .unwrap();
        }
        w.into_inner().unwrap()
    }

    #[test]
    fn minimal_header_defaults_to_420() {
        let (h, used) = parse_y4m_header(b"YUV4MPEG2 W8 H6 F25:1\n").unwrap();
        assert_eq!(h, header(Chroma::C420));
        assert_eq!(used, 22);
    }

    #[test]
    fn ffmpeg_style_header() {
        // as emitted by `ffmpeg -f yuv4mpegpipe`
        let (h, _) =
            parse_y4m_header(b"YUV4MPEG2 W8 H6 F25:1 Ip A1:1 C420jpeg XYSCSS=420JPEG\nFRAME\n")
                .unwrap();
        assert_eq!(h, header(Chroma::C420));
        let (h, _) = parse_y4m_header(b"YUV4MPEG2 W8 H6 F25:1 Cmono\n").unwrap();
        assert_eq!(h.chroma, Chroma::Mono);
    }

    #[test]
    fn writer_header_parses_back() {
        for c in [Chroma::Mono, Chroma::C420] {
            let h = header(c);
            assert_eq!(parse_y4m_header(h.header_line().as_bytes()).unwrap().0, h);
        }
    }

    #[test]
    fn unterminated_header_is_truncated() {
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W8 H6 F25:1 C"),
            Err(VisionError::TruncatedHeader)
        ));
        assert!(matches!(
            Y4mReader::new(&b"YUV4MPEG2 W8 H6 F25:1 C"[..]),
            Err(VisionError::TruncatedHeader)
        ));
        assert!(matches!(Y4mReader::new(&b"YUV4"[..]), Err(VisionError::TruncatedHeader)));
        assert!(matches!(Y4mReader::new(&b"RIFF"[..]), Err(VisionError::MissingSignature)));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_y4m_header(b"JUNK W8 H6 F25:1\n"),
            Err(VisionError::MissingSignature)
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W8 F25:1\n"),
            Err(VisionError::MalformedTag { tag: 'H' })
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 Wx H6 F25:1\n"),
            Err(VisionError::MalformedTag { tag: 'W' })
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W8 H6 F25:0\n"),
            Err(VisionError::MalformedTag { tag: 'F' })
        ));
        assert!(matches!(
            parse_y4m_header(b"YUV4MPEG2 W8 H6 F25:1 C444\n"),
            Err(VisionError::UnsupportedChroma(c)) if c == "444"
        ));
        assert!(matches!(
            Y4mReader::new(&b""[..]),
            Err(VisionError::MissingSignature)
        ));
    }

    #[test]
    fn frames_are_numbered_then_end() {
        let bytes = stream(header(Chroma::C420), 2);
        let mut r = Y4mReader::new(&bytes[..]).unwrap();
        assert_eq!(r.next_frame().unwrap().unwrap().index, 0);
        assert_eq!(r.next_frame().unwrap().unwrap().index, 1);
        assert!(r.next_frame().unwrap().is_none());
        assert!(r.next_frame().unwrap().is_none());
    }

    #[test]
    fn luma_round_trips() {
        for c in [Chroma::Mono, Chroma::C420] {
            let h = header(c);
            let bytes = stream(h, 3);
            let frames: Vec<Frame> = Y4mReader::new(&bytes[..])
                .unwrap()
                .collect::<Result<_>>()
                .unwrap();
            assert_eq!(frames.len(), 3);
            for (i, f) in frames.iter().enumerate() {
                let want: Vec<u8> = (0..h.luma_len()).map(|p| (p * 7 + i * 31) as u8).collect();
                assert_eq!(f.luma(), want.as_slice());
            }
        }
    }

    #[test]
    fn truncation_mid_plane() {
        let bytes = stream(header(Chroma::C420), 2);
        let cut = &bytes[..bytes.len() - 30];
        let mut r = Y4mReader::new(cut).unwrap();
        assert!(r.next_frame().unwrap().is_some());
        match r.next_frame() {
            Err(VisionError::TruncatedFrame {
                index: 1,
                expected: 72,
                got: 42,
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(r.next_frame().unwrap().is_none());
    }

    #[test]
    fn bad_marker() {
        let mut bytes = b"YUV4MPEG2 W2 H2 F1:1 Cmono\n".to_vec();
        bytes.extend_from_slice(b"FRAMX\n\0\0\0\0");
        let mut r = Y4mReader::new(&bytes[..]).unwrap();
        assert!(matches!(
            r.next_frame(),
            Err(VisionError::MalformedFrameMarker { index: 0 })
        ));
        let partial = b"YUV4MPEG2 W2 H2 F1:1 Cmono\nFRA";
        let mut r = Y4mReader::new(&partial[..]).unwrap();
        assert!(matches!(
            r.next_frame(),
            Err(VisionError::MalformedFrameMarker { index: 0 })
        ));
    }

    #[test]
    fn frame_parameters_are_tolerated() {
        let mut bytes = b"YUV4MPEG2 W2 H1 F1:1 Cmono\n".to_vec();
        bytes.extend_from_slice(b"FRAME Ip\n\x01\x02");
        let f = Y4mReader::new(&bytes[..]).unwrap().next_frame().unwrap().unwrap();
        assert_eq!(f.luma(), &[1, 2]);
    }

    #[test]
    fn odd_dimensions_use_rounded_chroma() {
        let h = VideoHeader {
            width: 3,
            height: 3,
            fps_numerator: 1,
            fps_denominator: 1,
            chroma: Chroma::C420,
        };
        assert_eq!(h.chroma_len(), 8);
        let bytes = stream(h, 2);
        assert_eq!(Y4mReader::new(&bytes[..]).unwrap().count(), 2);
    }
}
