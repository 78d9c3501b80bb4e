//! Human-evaluation studies: task sampling, response collection and metrics.
//!
//! Everything is kept in an append-only JSONL store of `task` and `response`
//! events; reopening the store replays it.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::manifest::{Outcome, VideoRecord};
use crate::stats::ReviewSummary;

pub const MIN_STUDY_DURATION_S: f64 = 10.0;
pub const MAX_STUDY_DURATION_S: f64 = 30.0;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("only {available} eligible videos for a {kind} study of {requested}")]
    InsufficientPool {
        kind: StudyKind,
        requested: usize,
        available: usize,
    },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` already exists")]
    DuplicateTask(String),
    #[error("rater `{rater}` already answered `{task}`")]
    Conflict { task: String, rater: String },
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("no responses for {0} yet")]
    NoResponses(StudyKind),
    #[error("unknown study kind `{0}`")]
    UnknownKind(String),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    LongTake,
    DynamicDegree,
    CaptionPref,
}

impl StudyKind {
    pub const ALL: [StudyKind; 3] = [StudyKind::LongTake, StudyKind::DynamicDegree, StudyKind::CaptionPref];

    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::LongTake => "long_take",
            StudyKind::DynamicDegree => "dynamic_degree",
            StudyKind::CaptionPref => "caption_pref",
        }
    }
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StudyKind {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ReviewError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Caption pair with the side holding the pipeline's caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub a: String,
    pub b: String,
    pub ours: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingTask {
    pub task_id: String,
    pub kind: StudyKind,
    pub video_id: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<CaptionPair>,
}

/// What a rater sees: no side truth, no source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub task_id: String,
    pub kind: StudyKind,
    pub video_id: String,
    pub media_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_b: Option<String>,
}

impl RatingTask {
    pub fn payload(&self) -> TaskPayload {
        TaskPayload {
            task_id: self.task_id.clone(),
            kind: self.kind,
            video_id: self.video_id.clone(),
            media_url: format!("/media/{}", self.video_id),
            caption_a: self.captions.as_ref().map(|c| c.a.clone()),
            caption_b: self.captions.as_ref().map(|c| c.b.clone()),
        }
    }
}

/// `true`/`false` for long-take, 1 to 3 for dynamic degree, `"A"`/`"B"` for caption preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    LongTake(bool),
    Rating(u8),
    Choice(Side),
}

impl Answer {
    pub fn check(&self, kind: StudyKind) -> Result<(), ReviewError> {
        match (kind, self) {
            (StudyKind::LongTake, Answer::LongTake(_)) => Ok(()),
            (StudyKind::DynamicDegree, Answer::Rating(1..=3)) => Ok(()),
            (StudyKind::DynamicDegree, Answer::Rating(n)) => {
                Err(ReviewError::InvalidAnswer(format!("dynamic degree must be 1, 2 or 3, got {n}")))
            }
            (StudyKind::CaptionPref, Answer::Choice(_)) => Ok(()),
            (kind, other) => Err(ReviewError::InvalidAnswer(format!("{other:?} does not answer a {kind} task"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingResponse {
    pub task_id: String,
    pub rater_id: String,
    pub answer: Answer,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Task(RatingTask),
    Response(RatingResponse),
}

/// In the 10 to 30 s window with no failed stage. Caption preference also
/// needs the pipeline's final caption and the source's original caption.
pub fn is_eligible(rec: &VideoRecord, kind: StudyKind) -> bool {
    let in_window = (MIN_STUDY_DURATION_S..=MAX_STUDY_DURATION_S).contains(&rec.duration_s);
    let clean = !rec.stage_results.is_empty() && rec.stage_results.values().all(|v| v.outcome == Outcome::Pass);
    let captions = kind != StudyKind::CaptionPref
        || (rec.caption.as_ref().is_some_and(|c| c.is_complete())
            && rec.original_caption.as_deref().is_some_and(|c| !c.trim().is_empty()));
    in_window && clean && captions
}

/// Seeded uniform sample of `n` eligible records (ordered by id before
/// sampling, so the manifest's line order does not matter).
pub fn create_study(records: &[VideoRecord], kind: StudyKind, n: usize, seed: u64) -> Result<Vec<RatingTask>, ReviewError> {
    let mut pool: Vec<&VideoRecord> = records.iter().filter(|r| is_eligible(r, kind)).collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    pool.dedup_by(|a, b| a.id == b.id);
    if pool.len() < n {
        return Err(ReviewError::InsufficientPool {
            kind,
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, pool.len(), n);
    Ok(picked
        .iter()
        .enumerate()
        .map(|(i, idx)| {
            let rec = pool[idx];
            let captions = (kind == StudyKind::CaptionPref).then(|| {
                let ours = rec.caption.as_ref().map(|c| c.final_caption.clone()).unwrap_or_default();
                let original = rec.original_caption.clone().unwrap_or_default();
                if rng.gen_bool(0.5) {
                    CaptionPair {
                        a: ours,
                        b: original,
                        ours: Side::A,
                    }
                } else {
                    CaptionPair {
                        a: original,
                        b: ours,
                        ours: Side::B,
                    }
                }
            });
            RatingTask {
                task_id: format!("{}-s{seed}-{i:03}", kind.as_str()),
                kind,
                video_id: rec.id.clone(),
                duration_s: rec.duration_s,
                captions,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongTakeMetrics {
    pub yes: u64,
    pub no: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicMetrics {
    /// Responses rating 1, 2 and 3.
    pub counts: [u64; 3],
    pub distribution: [f64; 3],
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreferenceMetrics {
    pub ours: u64,
    pub original: u64,
    /// Fraction of responses preferring the pipeline caption.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMetrics {
    pub kind: StudyKind,
    pub tasks: usize,
    pub responses: usize,
    pub raters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub long_take: Option<LongTakeMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic_degree: Option<DynamicMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caption_pref: Option<PreferenceMetrics>,
}

/// Handed-out tasks are not handed to the same rater again for this long.
pub const LEASE_TTL: Duration = Duration::from_secs(300);

pub struct ReviewStore {
    path: PathBuf,
    file: File,
    tasks: Vec<RatingTask>,
    by_id: HashMap<String, usize>,
    responses: Vec<RatingResponse>,
    answered: HashSet<(String, String)>,
    leases: HashMap<(String, String), Instant>,
}

impl ReviewStore {
    /// Opens or creates the store, replaying existing events. A partial last
    /// line from an interrupted write is dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ReviewError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| ReviewError::Io {
            path: path.clone(),
            source,
        };
        let file = OpenOptions::new().create(true).read(true).append(true).open(&path).map_err(io_err)?;
        let mut store = Self {
            path: path.clone(),
            file,
            tasks: Vec::new(),
            by_id: HashMap::new(),
            responses: Vec::new(),
            answered: HashSet::new(),
            leases: HashMap::new(),
        };
        let mut reader = BufReader::new(File::open(&path).map_err(io_err)?);
        let mut buf = String::new();
        let (mut line, mut good_len) = (0, 0u64);
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io_err)?;
            if n == 0 || !buf.ends_with('\n') {
                break;
            }
            line += 1;
            good_len += n as u64;
            if buf.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| ReviewError::Corrupt {
                path: path.clone(),
                line,
                message,
            };
            match serde_json::from_str::<Event>(&buf).map_err(|e| corrupt(e.to_string()))? {
                Event::Task(t) => store.insert_task(t).map_err(|e| corrupt(e.to_string()))?,
                Event::Response(r) => store.insert_response(r).map_err(|e| corrupt(e.to_string()))?,
            }
        }
        if store.file.metadata().map_err(io_err)?.len() > good_len {
            store.file.set_len(good_len).map_err(io_err)?;
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&mut self, event: &Event) -> Result<(), ReviewError> {
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| ReviewError::Io {
                path: self.path.clone(),
                source,
            })
    }

    fn insert_task(&mut self, task: RatingTask) -> Result<(), ReviewError> {
        if self.by_id.contains_key(&task.task_id) {
            return Err(ReviewError::DuplicateTask(task.task_id));
        }
        self.by_id.insert(task.task_id.clone(), self.tasks.len());
        self.tasks.push(task);
        Ok(())
    }

    fn validate_response(&self, r: &RatingResponse) -> Result<(), ReviewError> {
        let task = self.task(&r.task_id).ok_or_else(|| ReviewError::UnknownTask(r.task_id.clone()))?;
        if r.rater_id.trim().is_empty() {
            return Err(ReviewError::InvalidAnswer("rater_id is empty".into()));
        }
        r.answer.check(task.kind)?;
        if self.answered.contains(&(r.task_id.clone(), r.rater_id.clone())) {
            return Err(ReviewError::Conflict {
                task: r.task_id.clone(),
                rater: r.rater_id.clone(),
            });
        }
        Ok(())
    }

    fn insert_response(&mut self, r: RatingResponse) -> Result<(), ReviewError> {
        self.validate_response(&r)?;
        self.answered.insert((r.task_id.clone(), r.rater_id.clone()));
        self.leases.remove(&(r.rater_id.clone(), r.task_id.clone()));
        self.responses.push(r);
        Ok(())
    }

    /// Persists new tasks; all-or-nothing on id collisions.
    pub fn add_tasks(&mut self, tasks: Vec<RatingTask>) -> Result<(), ReviewError> {
        let mut ids = HashSet::new();
        for t in &tasks {
            if self.by_id.contains_key(&t.task_id) || !ids.insert(t.task_id.as_str()) {
                return Err(ReviewError::DuplicateTask(t.task_id.clone()));
            }
        }
        for t in tasks {
            self.append(&Event::Task(t.clone()))?;
            self.insert_task(t)?;
        }
        Ok(())
    }

    pub fn task(&self, id: &str) -> Option<&RatingTask> {
        self.by_id.get(id).map(|&i| &self.tasks[i])
    }

    pub fn tasks(&self, kind: StudyKind) -> impl Iterator<Item = &RatingTask> {
        self.tasks.iter().filter(move |t| t.kind == kind)
    }

    pub fn responses(&self) -> &[RatingResponse] {
        &self.responses
    }

    /// Per-rater presentation order: tasks sorted by a hash of rater and task id.
    fn order_key(rater: &str, task_id: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(rater.as_bytes());
        h.update([0]);
        h.update(task_id.as_bytes());
        h.finalize().into()
    }

    /// The rater's next unanswered task of `kind`, or `None` when they are done.
    /// Tasks handed out in the last [`LEASE_TTL`] are skipped while other
    /// unanswered tasks remain.
    pub fn next_task(&mut self, rater: &str, kind: StudyKind) -> Option<RatingTask> {
        let now = Instant::now();
        let mut open: Vec<&RatingTask> = self
            .tasks(kind)
            .filter(|t| !self.answered.contains(&(t.task_id.clone(), rater.to_string())))
            .collect();
        if open.is_empty() {
            return None;
        }
        open.sort_by_cached_key(|t| Self::order_key(rater, &t.task_id));
        let leased_at = |t: &RatingTask| self.leases.get(&(rater.to_string(), t.task_id.clone())).copied();
        let pick = open
            .iter()
            .find(|t| leased_at(t).is_none_or(|at| now.duration_since(at) >= LEASE_TTL))
            .or_else(|| open.iter().min_by_key(|t| leased_at(t)))
            .map(|t| (*t).clone())?;
        self.leases.insert((rater.to_string(), pick.task_id.clone()), now);
        Some(pick)
    }

    pub fn submit(&mut self, task_id: &str, rater_id: &str, answer: Answer) -> Result<RatingResponse, ReviewError> {
        let r = RatingResponse {
            task_id: task_id.to_string(),
            rater_id: rater_id.to_string(),
            answer,
            timestamp: Utc::now(),
        };
        self.validate_response(&r)?;
        self.append(&Event::Response(r.clone()))?;
        self.insert_response(r.clone())?;
        Ok(r)
    }

    pub fn metrics(&self, kind: StudyKind) -> Result<StudyMetrics, ReviewError> {
        study_metrics(&self.tasks, &self.responses, kind)
    }

    /// Long-take rate and mean dynamic degree where responses exist.
    pub fn summary(&self) -> ReviewSummary {
        ReviewSummary {
            long_take_rate: self.metrics(StudyKind::LongTake).ok().and_then(|m| m.long_take).map(|m| m.rate),
            dynamic_degree_mean: self
                .metrics(StudyKind::DynamicDegree)
                .ok()
                .and_then(|m| m.dynamic_degree)
                .map(|m| m.mean),
        }
    }
}

/// Pools all responses of `kind`; caption preferences are mapped back to
/// ours/original through each task's stored side.
pub fn study_metrics(tasks: &[RatingTask], responses: &[RatingResponse], kind: StudyKind) -> Result<StudyMetrics, ReviewError> {
    let by_id: HashMap<&str, &RatingTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let relevant: Vec<(&RatingTask, &RatingResponse)> = responses
        .iter()
        .filter_map(|r| by_id.get(r.task_id.as_str()).map(|t| (*t, r)))
        .filter(|(t, _)| t.kind == kind)
        .collect();
    if relevant.is_empty() {
        return Err(ReviewError::NoResponses(kind));
    }
    let n = relevant.len() as f64;
    let mut m = StudyMetrics {
        kind,
        tasks: tasks.iter().filter(|t| t.kind == kind).count(),
        responses: relevant.len(),
        raters: relevant.iter().map(|(_, r)| r.rater_id.as_str()).collect::<HashSet<_>>().len(),
        long_take: None,
        dynamic_degree: None,
        caption_pref: None,
    };
    match kind {
        StudyKind::LongTake => {
            let yes = relevant.iter().filter(|(_, r)| r.answer == Answer::LongTake(true)).count() as u64;
            m.long_take = Some(LongTakeMetrics {
                yes,
                no: relevant.len() as u64 - yes,
                rate: yes as f64 / n,
            });
        }
        StudyKind::DynamicDegree => {
            let mut counts = [0u64; 3];
            for (_, r) in &relevant {
                if let Answer::Rating(v @ 1..=3) = r.answer {
                    counts[v as usize - 1] += 1;
                }
            }
            let total: u64 = counts.iter().sum();
            m.dynamic_degree = Some(DynamicMetrics {
                counts,
                distribution: counts.map(|c| c as f64 / total as f64),
                mean: (counts[0] + 2 * counts[1] + 3 * counts[2]) as f64 / total as f64,
            });
        }
        StudyKind::CaptionPref => {
            let ours = relevant
                .iter()
                .filter(|(t, r)| matches!((&t.captions, r.answer), (Some(c), Answer::Choice(s)) if c.ours == s))
                .count() as u64;
            m.caption_pref = Some(PreferenceMetrics {
                ours,
                original: relevant.len() as u64 - ours,
                rate: ours as f64 / n,
            });
        }
    }
    Ok(m)
}
