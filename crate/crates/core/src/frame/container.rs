//! FRAMESEQ: a minimal little-endian raw RGB24 container, plus the external
//! decoder bridge that produces it.
//!
//! Layout: `"FSQ1"`, u32 width, u32 height, u32 fps numerator, u32 fps
//! denominator, u64 frame count, then `count * width * height * 3` bytes.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use super::synth::SceneScript;
use super::{Frame, FrameError, FrameSequence};

pub const MAGIC: &[u8; 4] = b"FSQ1";
const HEADER_LEN: usize = 4 + 4 * 4 + 8;

pub fn write_frameseq<W: Write>(seq: &FrameSequence, mut out: W) -> std::io::Result<()> {
    let (num, den) = fps_ratio(seq.fps);
    out.write_all(MAGIC)?;
    out.write_all(&seq.width.to_le_bytes())?;
    out.write_all(&seq.height.to_le_bytes())?;
    out.write_all(&num.to_le_bytes())?;
    out.write_all(&den.to_le_bytes())?;
    out.write_all(&(seq.frames.len() as u64).to_le_bytes())?;
    for f in &seq.frames {
        out.write_all(&f.data)?;
    }
    out.flush()
}

/// Parses exactly one FRAMESEQ stream; trailing bytes are a format error.
pub fn read_frameseq<R: Read>(mut input: R) -> Result<FrameSequence, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(&mut input, &mut header)?;
    if got < 4 || &header[..4] != MAGIC {
        return Err(FrameError::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&header[..got.min(4)])
        )));
    }
    if got < HEADER_LEN {
        return Err(FrameError::Format(format!("header is {got} bytes, expected {HEADER_LEN}")));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let width = u32_at(4);
    let height = u32_at(8);
    let (num, den) = (u32_at(12), u32_at(16));
    let count = u64::from_le_bytes(header[20..28].try_into().unwrap());
    if width == 0 || height == 0 {
        return Err(FrameError::Format(format!("zero dimension {width}x{height}")));
    }
    if num == 0 || den == 0 {
        return Err(FrameError::Format(format!("invalid frame rate {num}/{den}")));
    }
    let frame_len = width as usize * height as usize * 3;
    let mut frames = Vec::with_capacity(count.min(1 << 16) as usize);
    for i in 0..count {
        let mut data = vec![0u8; frame_len];
        if read_full(&mut input, &mut data)? < frame_len {
            return Err(FrameError::Truncated {
                declared: count,
                present: i,
            });
        }
        frames.push(Frame { width, height, data });
    }
    let mut probe = [0u8; 1];
    if read_full(&mut input, &mut probe)? != 0 {
        return Err(FrameError::Format("trailing bytes after declared frames".into()));
    }
    FrameSequence::new(width, height, num as f64 / den as f64, frames)
}

fn read_full<R: Read>(input: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn fps_ratio(fps: f64) -> (u32, u32) {
    for den in [1u32, 1001, 1000, 100_000] {
        let num = fps * den as f64;
        if (num - num.round()).abs() < 1e-6 && num.round() <= u32::MAX as f64 {
            return (num.round() as u32, den);
        }
    }
    ((fps * 100_000.0).round() as u32, 100_000)
}

/// Runs `template` with `{input}` replaced by `uri` and parses its stdout.
///
/// The template is split on whitespace into argv; no shell is involved.
pub fn decode(uri: &str, template: &str) -> Result<FrameSequence, FrameError> {
    let argv: Vec<String> = template
        .split_whitespace()
        .map(|tok| tok.replace("{input}", uri))
        .collect();
    let Some((program, args)) = argv.split_first() else {
        return Err(FrameError::Format("empty decoder command".into()));
    };
    let command = argv.join(" ");
    let output = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .output()
        .map_err(|source| FrameError::Spawn {
            command: command.clone(),
            source,
        })?;
    if !output.status.success() {
        return Err(FrameError::Decode {
            command,
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    read_frameseq(output.stdout.as_slice())
}

/// Resolves a video uri to frames.
///
/// `synth:<script.json>` (or `synth:{...}` inline) is rendered in-process;
/// `*.fsq` paths are read directly; anything else goes through the decoder command.
#[derive(Debug, Clone, Default)]
pub struct FrameSource {
    pub decoder_cmd: Option<String>,
}

impl FrameSource {
    pub fn new(decoder_cmd: Option<String>) -> Self {
        Self { decoder_cmd }
    }

    pub fn load(&self, uri: &str) -> Result<FrameSequence, FrameError> {
        if let Some(rest) = uri.strip_prefix("synth:") {
            let script = if rest.trim_start().starts_with('{') {
                SceneScript::from_json(rest)?
            } else {
                SceneScript::from_json(&std::fs::read_to_string(rest)?)?
            };
            return script.render();
        }
        if let Some(cmd) = &self.decoder_cmd {
            return decode(uri, cmd);
        }
        let path = uri.strip_prefix("file://").unwrap_or(uri);
        if Path::new(path).extension().is_some_and(|e| e == "fsq") {
            let file = std::fs::File::open(path)?;
            return read_frameseq(std::io::BufReader::new(file));
        }
        Err(FrameError::Format(format!(
            "no decoder configured for `{uri}` (set decoder_cmd)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize) -> FrameSequence {
        let frames = (0..n).map(|i| Frame::filled(64, 64, [i as u8, 0, 0])).collect();
        FrameSequence::new(64, 64, 30000.0 / 1001.0, frames).unwrap()
    }

    fn encode(s: &FrameSequence) -> Vec<u8> {
        let mut buf = Vec::new();
        write_frameseq(s, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_keeps_ntsc_rate() {
        let s = seq(10);
        let back = read_frameseq(encode(&s).as_slice()).unwrap();
        assert_eq!(back.len(), 10);
        assert!((back.fps - s.fps).abs() < 1e-9);
        assert_eq!(back, s);
    }

    #[test]
    fn wrong_magic() {
        let mut buf = encode(&seq(1));
        buf[0] = b'X';
        assert!(matches!(read_frameseq(buf.as_slice()), Err(FrameError::Format(_))));
    }

    #[test]
    fn missing_frame_is_truncation() {
        let mut buf = encode(&seq(5));
        buf.truncate(buf.len() - 64 * 64 * 3);
        match read_frameseq(buf.as_slice()) {
            Err(FrameError::Truncated { declared, present }) => assert_eq!((declared, present), (5, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut buf = encode(&seq(1));
        buf.push(0);
        assert!(read_frameseq(buf.as_slice()).is_err());
    }

    #[test]
    fn decode_through_subprocess() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.fsq");
        std::fs::write(&path, encode(&seq(10))).unwrap();
        let got = decode(path.to_str().unwrap(), "cat {input}").unwrap();
        assert_eq!(got.len(), 10);
        assert_eq!((got.width, got.height), (64, 64));
    }

    #[test]
    fn decode_wrong_magic_from_subprocess() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.fsq");
        std::fs::write(&path, b"NOPE0000000000000000000000000000").unwrap();
        assert!(matches!(
            decode(path.to_str().unwrap(), "cat {input}"),
            Err(FrameError::Format(_))
        ));
    }

    #[test]
    fn decoder_failure_captures_stderr() {
        match decode("/definitely/not/here.fsq", "cat {input}") {
            Err(FrameError::Decode { stderr, .. }) => assert!(stderr.contains("here.fsq")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
