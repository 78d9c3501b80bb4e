//! Video records and the append-only JSONL manifest.
//!
//! Every stage appends the full, updated record for a video. Readers keep the
//! last line per id, so resuming never needs compaction.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("record `{id}` is invalid: {reason}")]
    Validation { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDataset {
    Panda70m,
    Hdvg,
    Internvid,
    Webvid,
    Other,
}

/// Pipeline stages in execution order. The derived `Ord` is that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Duration,
    Scenecut,
    Motion,
    Semantic,
    Caption,
    Category,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Duration,
        Stage::Scenecut,
        Stage::Motion,
        Stage::Semantic,
        Stage::Caption,
        Stage::Category,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Duration => "duration",
            Stage::Scenecut => "scenecut",
            Stage::Motion => "motion",
            Stage::Semantic => "semantic",
            Stage::Caption => "caption",
            Stage::Category => "category",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<Stage> {
        Stage::ALL.get(self.index() + 1).copied()
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Reject,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub stage: Stage,
    pub outcome: Outcome,
    pub score: Option<f64>,
    pub detail: String,
}

impl FilterVerdict {
    pub fn pass(stage: Stage, score: Option<f64>, detail: impl Into<String>) -> Self {
        Self {
            stage,
            outcome: Outcome::Pass,
            score,
            detail: detail.into(),
        }
    }

    pub fn reject(stage: Stage, score: Option<f64>, detail: impl Into<String>) -> Self {
        Self {
            stage,
            outcome: Outcome::Reject,
            score,
            detail: detail.into(),
        }
    }

    pub fn error(stage: Stage, detail: impl Into<String>) -> Self {
        let mut detail = detail.into();
        if detail.is_empty() {
            detail = "unspecified error".into();
        }
        Self {
            stage,
            outcome: Outcome::Error,
            score: None,
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    fn check(&self) -> Result<(), String> {
        match self.outcome {
            Outcome::Error if self.detail.trim().is_empty() => {
                Err(format!("{} error verdict without detail", self.stage))
            }
            Outcome::Pass | Outcome::Reject
                if matches!(self.stage, Stage::Scenecut | Stage::Motion) && self.score.is_none() =>
            {
                Err(format!("{} verdict without score", self.stage))
            }
            _ => Ok(()),
        }
    }
}

/// The eight content categories used for the dataset breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Scenery,
    People,
    Food,
    Sports,
    Animals,
    Transportation,
    Gaming,
    Others,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Scenery,
        Category::People,
        Category::Food,
        Category::Sports,
        Category::Animals,
        Category::Transportation,
        Category::Gaming,
        Category::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Scenery => "scenery",
            Category::People => "people",
            Category::Food => "food",
            Category::Sports => "sports",
            Category::Animals => "animals",
            Category::Transportation => "transportation",
            Category::Gaming => "gaming",
            Category::Others => "others",
        }
    }

    pub fn from_label(label: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == label)
    }
}

/// A time window of the parent video captioned as one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipSpan {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl ClipSpan {
    pub fn len_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipCaption {
    pub span: ClipSpan,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub clip_captions: Vec<ClipCaption>,
    /// Empty while clip captions are still being collected.
    pub final_caption: String,
    pub word_count: usize,
}

impl CaptionRecord {
    pub fn is_complete(&self) -> bool {
        !self.final_caption.is_empty()
    }
}

/// Count of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub source_dataset: SourceDataset,
    pub uri: String,
    pub duration_s: f64,
    /// Known once the video has been decoded (or supplied by the source list).
    pub fps: Option<f64>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    /// The source dataset's own caption, carried through for caption comparisons.
    #[serde(default)]
    pub original_caption: Option<String>,
    pub stage_results: BTreeMap<Stage, FilterVerdict>,
    pub caption: Option<CaptionRecord>,
    pub category: Option<Category>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl VideoRecord {
    pub fn new(id: impl Into<String>, source_dataset: SourceDataset, uri: impl Into<String>, duration_s: f64) -> Self {
        let now = Utc::now();
        Self {
            id: id.into(),
            source_dataset,
            uri: uri.into(),
            duration_s,
            fps: None,
            width: None,
            height: None,
            original_caption: None,
            stage_results: BTreeMap::new(),
            caption: None,
            category: None,
            created_at: now,
            updated_at: now,
        }
    }

    pub fn verdict(&self, stage: Stage) -> Option<&FilterVerdict> {
        self.stage_results.get(&stage)
    }

    pub fn last_verdict(&self) -> Option<&FilterVerdict> {
        self.stage_results.values().next_back()
    }

    pub fn record(&mut self, verdict: FilterVerdict) {
        self.updated_at = Utc::now();
        self.stage_results.insert(verdict.stage, verdict);
    }

    /// The stage that should run next, or `None` once the record is terminal.
    pub fn next_stage(&self) -> Option<Stage> {
        match self.last_verdict() {
            None => Some(Stage::Duration),
            Some(v) if v.passed() => v.stage.next(),
            Some(_) => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.next_stage().is_none()
    }

    pub fn in_error(&self) -> bool {
        self.last_verdict().is_some_and(|v| v.outcome == Outcome::Error)
    }

    /// Passed every filter and has a final caption.
    pub fn is_curated(&self) -> bool {
        self.verdict(Stage::Caption).is_some_and(FilterVerdict::passed)
    }

    pub fn validate(&self, min_duration_s: f64) -> Result<(), ManifestError> {
        let fail = |reason: String| ManifestError::Validation {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(fail("empty id".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(fail(format!("duration_s {} is not a nonnegative number", self.duration_s)));
        }
        if self.fps.is_some_and(|f| !(f.is_finite() && f > 0.0)) {
            return Err(fail("fps must be positive".into()));
        }
        if self.width == Some(0) || self.height == Some(0) {
            return Err(fail("dimensions must be positive".into()));
        }
        let mut expected = Stage::ALL.iter();
        let mut prior_passed = true;
        for (stage, verdict) in &self.stage_results {
            let want = expected.next().copied();
            if want != Some(*stage) {
                return Err(fail(format!(
                    "stage `{stage}` recorded without `{}` before it",
                    want.map(Stage::as_str).unwrap_or("?")
                )));
            }
            if !prior_passed {
                return Err(fail(format!("stage `{stage}` recorded after a non-pass verdict")));
            }
            if verdict.stage != *stage {
                return Err(fail(format!("verdict under `{stage}` claims stage `{}`", verdict.stage)));
            }
            verdict.check().map_err(fail)?;
            prior_passed = verdict.passed();
        }
        if self.verdict(Stage::Duration).is_some_and(FilterVerdict::passed) && self.duration_s < min_duration_s {
            return Err(fail(format!(
                "duration {}s passed the gate but is below {min_duration_s}s",
                self.duration_s
            )));
        }
        if let Some(caption) = &self.caption {
            if caption.word_count != word_count(&caption.final_caption) {
                return Err(fail("caption word_count disagrees with final_caption".into()));
            }
        }
        if self.verdict(Stage::Caption).is_some_and(FilterVerdict::passed)
            && !self.caption.as_ref().is_some_and(CaptionRecord::is_complete)
        {
            return Err(fail("caption stage passed without a final caption".into()));
        }
        Ok(())
    }
}

/// Single writer for a manifest file. Each record is one `write` of a full line.
pub struct ManifestWriter {
    path: PathBuf,
    file: File,
    min_duration_s: f64,
}

impl ManifestWriter {
    /// Opens (creating if needed) for append. A trailing partial line left by a
    /// crash is truncated so the file stays line-complete.
    pub fn open(path: impl AsRef<Path>, min_duration_s: f64) -> Result<Self, ManifestError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| ManifestError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;
        repair_tail(&mut file).map_err(io)?;
        Ok(Self {
            path,
            file,
            min_duration_s,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, rec: &VideoRecord) -> Result<(), ManifestError> {
        rec.validate(self.min_duration_s)?;
        let mut line = serde_json::to_vec(rec).map_err(|e| ManifestError::Validation {
            id: rec.id.clone(),
            reason: e.to_string(),
        })?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|source| ManifestError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn sync(&mut self) -> Result<(), ManifestError> {
        self.file.sync_data().map_err(|source| ManifestError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

fn repair_tail(file: &mut File) -> std::io::Result<()> {
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let window = len.min(1 << 20);
    file.seek(SeekFrom::Start(len - window))?;
    let mut tail = Vec::with_capacity(window as usize);
    file.read_to_end(&mut tail)?;
    if tail.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = match tail.iter().rposition(|&b| b == b'\n') {
        Some(pos) => len - window + pos as u64 + 1,
        None if window == len => 0,
        // A single line longer than the window: leave it for the reader to report.
        None => return Ok(()),
    };
    log::warn!("truncating {} bytes of partial manifest line", len - keep);
    file.set_len(keep)
}

/// Reads a manifest applying last-write-wins per id; order is by first appearance.
///
/// An unterminated final line that does not parse is a torn write and is skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<VideoRecord>, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let torn_tail = !text.is_empty() && !text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut order: HashMap<String, usize> = HashMap::new();
    let mut records: Vec<VideoRecord> = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: VideoRecord = match serde_json::from_str(line) {
            Ok(rec) => rec,
            Err(_) if torn_tail && idx + 1 == lines.len() => {
                log::warn!("{}: ignoring partial final line", path.display());
                break;
            }
            Err(e) => {
                return Err(ManifestError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        };
        match order.get(&rec.id) {
            Some(&slot) => records[slot] = rec,
            None => {
                order.insert(rec.id.clone(), records.len());
                records.push(rec);
            }
        }
    }
    Ok(records)
}

/// Reads a manifest, treating a missing file as empty.
pub fn read_manifest_or_empty(path: impl AsRef<Path>) -> Result<Vec<VideoRecord>, ManifestError> {
    if path.as_ref().exists() {
        read_manifest(path)
    } else {
        Ok(Vec::new())
    }
}

/// Order-independent digest of manifest content with timestamps excluded.
pub fn manifest_digest(records: &[VideoRecord]) -> String {
    let mut sorted: Vec<&VideoRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut hasher = Sha256::new();
    for rec in sorted {
        let mut value = serde_json::to_value(rec).expect("record serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("created_at");
            obj.remove("updated_at");
        }
        hasher.update(serde_json::to_vec(&value).expect("value serializes"));
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}
