use std::collections::HashSet;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::manifest::{FilterVerdict, SourceDataset, Stage, VideoRecord};

use super::PipelineError;

/// One line of a source list.
#[derive(Debug, Clone, Deserialize)]
pub struct SourceLine {
    pub id: String,
    pub source_dataset: SourceDataset,
    pub uri: String,
    pub duration_s: f64,
    #[serde(default)]
    pub fps: Option<f64>,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
    #[serde(default)]
    pub original_caption: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub lines: usize,
    pub ingested: usize,
    pub malformed: usize,
    pub duplicates: usize,
}

impl IngestStats {
    pub fn merge(&mut self, other: IngestStats) {
        self.lines += other.lines;
        self.ingested += other.ingested;
        self.malformed += other.malformed;
        self.duplicates += other.duplicates;
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub records: Vec<VideoRecord>,
    pub stats: IngestStats,
    /// Byte offset just past the last complete line consumed.
    pub end_offset: u64,
}

/// Inclusive: a video of exactly `min_duration_s` passes.
pub fn duration_verdict(duration_s: f64, cfg: &PipelineConfig) -> FilterVerdict {
    if duration_s >= cfg.min_duration_s {
        FilterVerdict::pass(Stage::Duration, Some(duration_s), "")
    } else {
        FilterVerdict::reject(
            Stage::Duration,
            Some(duration_s),
            format!("{duration_s}s < {}s", cfg.min_duration_s),
        )
    }
}

fn parse_line(text: &str) -> Result<SourceLine, String> {
    let line: SourceLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if line.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if !(line.duration_s.is_finite() && line.duration_s >= 0.0) {
        return Err(format!("bad duration_s {}", line.duration_s));
    }
    if line.fps.is_some_and(|f| !(f.is_finite() && f > 0.0)) {
        return Err("fps must be positive".into());
    }
    if line.width == Some(0) || line.height == Some(0) {
        return Err("width and height must be positive".into());
    }
    Ok(line)
}

pub fn record_from_line(line: SourceLine, cfg: &PipelineConfig) -> VideoRecord {
    let mut rec = VideoRecord::new(line.id, line.source_dataset, line.uri, line.duration_s);
    rec.fps = line.fps;
    rec.width = line.width;
    rec.height = line.height;
    rec.original_caption = line.original_caption;
    rec.record(duration_verdict(rec.duration_s, cfg));
    rec
}

/// Reads complete lines from `offset` on. Ids already in `seen` are skipped and
/// counted as duplicates; malformed lines are logged and counted. Blank lines
/// and `#` comments are ignored. A trailing line without a newline is left for
/// the next call, since the list may still be being written.
pub fn ingest(path: &Path, offset: u64, cfg: &PipelineConfig, seen: &mut HashSet<String>) -> Result<Ingested, PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::open(path).map_err(io_err)?;
    file.seek(SeekFrom::Start(offset)).map_err(io_err)?;
    let mut reader = BufReader::new(file);
    let mut out = Ingested {
        records: Vec::new(),
        stats: IngestStats::default(),
        end_offset: offset,
    };
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io_err)?;
        if n == 0 || !buf.ends_with('\n') {
            break;
        }
        let line_no_offset = out.end_offset;
        out.end_offset += n as u64;
        let text = buf.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        out.stats.lines += 1;
        match parse_line(text) {
            Ok(line) if !seen.insert(line.id.clone()) => {
                log::debug!("{}: duplicate id {}", path.display(), line.id);
                out.stats.duplicates += 1;
            }
            Ok(line) => {
                out.stats.ingested += 1;
                out.records.push(record_from_line(line, cfg));
            }
            Err(e) => {
                log::warn!("{} @{line_no_offset}: skipping malformed line: {e}", path.display());
                out.stats.malformed += 1;
            }
        }
    }
    Ok(out)
}
