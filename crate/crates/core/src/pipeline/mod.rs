//! End-to-end driver: ingest, then a worker pool pushing each video through
//! the remaining stages while a single writer thread appends to the manifest.

mod checkpoint;
mod ingest;

use std::collections::{BTreeMap, HashSet};
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::caption::caption_video;
use crate::client::{ClientError, Clients};
use crate::config::{ConfigError, PipelineConfig};
use crate::frame::{FrameSequence, FrameSource};
use crate::manifest::{
    read_manifest_or_empty, FilterVerdict, ManifestError, ManifestWriter, Outcome, Stage, VideoRecord,
};
use crate::motion::{estimator_from_config, motion_verdict, FlowEstimator};
use crate::prompts::Prompts;
use crate::scenecut::detect_cuts;
use crate::semantic::semantic_verdict;
use crate::stats::classify_category;

pub use checkpoint::{default_checkpoint_path, RunCheckpoint, SourceOffset};
pub use ingest::{duration_verdict, ingest, record_from_line, IngestStats, Ingested, SourceLine};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint {0}")]
    Checkpoint(String),
    #[error("{0} already holds a run; pass --resume to continue it")]
    ExistingRun(PathBuf),
    #[error("checkpoint was written with config digest {found}, current config is {expected}; pass --force to resume anyway")]
    DigestMismatch { expected: String, found: String },
    #[error("worker pool failed: {0}")]
    Worker(String),
}

impl PipelineError {
    /// Errors caused by the invocation rather than the data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Client(ClientError::Endpoint(_))
                | PipelineError::ExistingRun(_)
                | PipelineError::DigestMismatch { .. }
        )
    }
}

/// Shared stop flag. Workers finish the stage they are in and stop.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub manifest: PathBuf,
    /// Defaults to the config's `checkpoint_path`, then `<manifest>.checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    pub workers: usize,
    pub resume: bool,
    pub force: bool,
    /// Drop error verdicts on resume so those videos are attempted again.
    pub retry_errors: bool,
    /// Records stop once this stage has passed.
    pub last_stage: Stage,
    /// Cancel after this many videos reach a terminal state in this run.
    pub stop_after: Option<usize>,
}

impl RunOptions {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            checkpoint: None,
            workers: 1,
            resume: false,
            force: false,
            retry_errors: false,
            last_stage: Stage::Category,
            stop_after: None,
        }
    }

    fn checkpoint_path(&self, cfg: &PipelineConfig) -> PathBuf {
        self.checkpoint
            .clone()
            .or_else(|| cfg.checkpoint_path.clone())
            .unwrap_or_else(|| default_checkpoint_path(&self.manifest))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEntry {
    pub id: String,
    pub stage: Stage,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StatusReport {
    pub total: usize,
    /// Passed every stage including category.
    pub passed: usize,
    pub rejected: usize,
    pub errors: usize,
    pub pending: usize,
    pub rejected_by_stage: BTreeMap<Stage, usize>,
    pub errors_by_stage: BTreeMap<Stage, usize>,
    /// Non-terminal records keyed by the stage they wait for.
    pub pending_by_stage: BTreeMap<Stage, usize>,
    pub error_queue: Vec<ErrorEntry>,
}

impl StatusReport {
    pub fn from_records(records: &[VideoRecord]) -> Self {
        let mut s = StatusReport {
            total: records.len(),
            ..Default::default()
        };
        for r in records {
            if let Some(next) = r.next_stage() {
                s.pending += 1;
                *s.pending_by_stage.entry(next).or_default() += 1;
                continue;
            }
            let last = r.last_verdict().expect("terminal records have a verdict");
            match last.outcome {
                Outcome::Pass => s.passed += 1,
                Outcome::Reject => {
                    s.rejected += 1;
                    *s.rejected_by_stage.entry(last.stage).or_default() += 1;
                }
                Outcome::Error => {
                    s.errors += 1;
                    *s.errors_by_stage.entry(last.stage).or_default() += 1;
                    s.error_queue.push(ErrorEntry {
                        id: r.id.clone(),
                        stage: last.stage,
                        detail: last.detail.clone(),
                    });
                }
            }
        }
        s
    }
}

/// Progress summary from a checkpoint file and the manifest it names.
pub fn status(checkpoint: &Path) -> Result<StatusReport, PipelineError> {
    let ckpt = RunCheckpoint::load(checkpoint)?;
    Ok(StatusReport::from_records(&read_manifest_or_empty(&ckpt.manifest)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub ingest: IngestStats,
    /// Videos handed to workers in this run.
    pub dispatched: usize,
    pub manifest_lines_written: usize,
    pub cancelled: bool,
    pub status: StatusReport,
}

impl RunReport {
    /// 0 when done without errors, 3 when the error queue is non-empty or the run was interrupted.
    pub fn exit_code(&self) -> i32 {
        if self.status.errors > 0 || self.cancelled {
            3
        } else {
            0
        }
    }
}

/// Everything a worker needs, shared read-only across threads.
pub struct StageContext {
    pub cfg: PipelineConfig,
    pub clients: Clients,
    pub prompts: Prompts,
    pub source: FrameSource,
    pub estimator: Arc<dyn FlowEstimator>,
    pub last_stage: Stage,
    pub cancel: CancelToken,
}

impl StageContext {
    pub fn new(cfg: &PipelineConfig, clients: Clients) -> Self {
        Self {
            cfg: cfg.clone(),
            clients,
            prompts: Prompts::from_config(cfg),
            source: FrameSource::new(cfg.decoder_cmd.clone()),
            estimator: Arc::from(estimator_from_config(cfg)),
            last_stage: Stage::Category,
            cancel: CancelToken::default(),
        }
    }
}

fn fill_metadata(rec: &mut VideoRecord, seq: &FrameSequence) {
    rec.fps.get_or_insert(seq.fps);
    rec.width.get_or_insert(seq.width);
    rec.height.get_or_insert(seq.height);
}

/// Runs stages on `rec` in order until it is terminal, passes `ctx.last_stage`,
/// or the run is cancelled. `emit` receives the record after every change.
pub fn process_video(rec: &mut VideoRecord, ctx: &StageContext, emit: &mut dyn FnMut(&VideoRecord)) {
    let mut seq: Option<FrameSequence> = None;
    while let Some(stage) = rec.next_stage() {
        if stage > ctx.last_stage || ctx.cancel.is_cancelled() {
            return;
        }
        let verdict = match stage {
            Stage::Duration => duration_verdict(rec.duration_s, &ctx.cfg),
            Stage::Category => category_verdict(rec, ctx),
            _ => {
                if seq.is_none() {
                    match ctx.source.load(&rec.uri) {
                        Ok(s) => {
                            fill_metadata(rec, &s);
                            seq = Some(s);
                        }
                        Err(e) => {
                            rec.record(FilterVerdict::error(stage, format!("decode: {e}")));
                            emit(rec);
                            return;
                        }
                    }
                }
                let seq = seq.as_ref().expect("decoded above");
                match stage {
                    Stage::Scenecut => detect_cuts(seq, &ctx.cfg),
                    Stage::Motion => motion_verdict(seq, ctx.estimator.as_ref(), &ctx.cfg),
                    Stage::Semantic => semantic_verdict(&rec.id, seq, &ctx.clients, &ctx.prompts, &ctx.cfg),
                    Stage::Caption => caption_stage(rec, seq, ctx, emit),
                    Stage::Duration | Stage::Category => unreachable!(),
                }
            }
        };
        rec.record(verdict);
        emit(rec);
    }
}

fn caption_stage(
    rec: &mut VideoRecord,
    seq: &FrameSequence,
    ctx: &StageContext,
    emit: &mut dyn FnMut(&VideoRecord),
) -> FilterVerdict {
    let id = rec.id.clone();
    let resume = rec.caption.clone();
    let result = caption_video(&id, seq, resume.as_ref(), &ctx.clients, &ctx.prompts, &ctx.cfg, &mut |partial| {
        rec.caption = Some(partial.clone());
        emit(rec);
    });
    match result {
        Ok(done) => {
            let detail = format!("{} clips, {} words", done.clip_captions.len(), done.word_count);
            rec.caption = Some(done);
            FilterVerdict::pass(Stage::Caption, None, detail)
        }
        Err(failure) => {
            rec.caption = (!failure.partial.clip_captions.is_empty()).then_some(failure.partial);
            FilterVerdict::error(Stage::Caption, failure.error.to_string())
        }
    }
}

fn category_verdict(rec: &mut VideoRecord, ctx: &StageContext) -> FilterVerdict {
    let caption = rec.caption.as_ref().map(|c| c.final_caption.as_str()).unwrap_or("");
    match classify_category(caption, ctx.clients.classifier.as_ref()) {
        Ok(c) => {
            rec.category = Some(c);
            FilterVerdict::pass(Stage::Category, None, c.as_str())
        }
        Err(e) => FilterVerdict::error(Stage::Category, e.to_string()),
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Like [`process_video`], but a panic becomes an error verdict on the stage that was running.
pub fn process_isolated(mut rec: VideoRecord, ctx: &StageContext, emit: &mut dyn FnMut(&VideoRecord)) -> VideoRecord {
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| process_video(&mut rec, ctx, &mut *emit)));
    if let Err(payload) = outcome {
        if let Some(stage) = rec.next_stage() {
            let msg = panic_message(payload.as_ref());
            log::error!("{}: worker panicked in {stage}: {msg}", rec.id);
            rec.record(FilterVerdict::error(stage, format!("worker panic: {msg}")));
            emit(&rec);
        }
    }
    rec
}

fn strip_error(rec: &mut VideoRecord) -> bool {
    let Some(last) = rec.last_verdict() else { return false };
    if last.outcome != Outcome::Error {
        return false;
    }
    let stage = last.stage;
    rec.stage_results.remove(&stage);
    true
}

/// Ingests `sources` and drives every unfinished video through the pipeline.
///
/// An existing manifest is only continued with `opts.resume`; its checkpoint
/// must carry the current config digest unless `opts.force` is set.
pub fn run(
    cfg: &PipelineConfig,
    sources: &[PathBuf],
    opts: &RunOptions,
    clients: Clients,
    cancel: &CancelToken,
) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let ckpt_path = opts.checkpoint_path(cfg);
    let digest = cfg.digest();
    let existing = read_manifest_or_empty(&opts.manifest)?;
    let prior = RunCheckpoint::load_if_exists(&ckpt_path)?;
    if (!existing.is_empty() || prior.is_some()) && !opts.resume {
        return Err(PipelineError::ExistingRun(opts.manifest.clone()));
    }
    if let Some(p) = &prior {
        if p.config_digest != digest && !opts.force {
            return Err(PipelineError::DigestMismatch {
                expected: digest,
                found: p.config_digest.clone(),
            });
        }
    }
    let mut ckpt = prior.unwrap_or_else(|| RunCheckpoint::new(opts.manifest.clone(), digest.clone()));
    ckpt.config_digest = digest;
    ckpt.manifest = opts.manifest.clone();

    let mut writer = ManifestWriter::open(&opts.manifest, cfg.min_duration_s)?;
    let mut lines_written = 0;
    let mut seen: HashSet<String> = existing.iter().map(|r| r.id.clone()).collect();
    let mut ingest_stats = IngestStats::default();
    let mut work = existing;
    for source in sources {
        let got = ingest(source, ckpt.offset(source), cfg, &mut seen)?;
        for rec in &got.records {
            writer.append(rec)?;
            lines_written += 1;
        }
        writer.sync()?;
        ingest_stats.merge(got.stats);
        ckpt.set_offset(source, got.end_offset);
        work.extend(got.records);
    }
    ckpt.save(&ckpt_path)?;
    log::info!(
        "ingested {} new videos ({} malformed, {} duplicates)",
        ingest_stats.ingested,
        ingest_stats.malformed,
        ingest_stats.duplicates
    );

    let mut states: BTreeMap<String, VideoRecord> = BTreeMap::new();
    let mut jobs = Vec::new();
    for mut rec in work {
        if opts.retry_errors && strip_error(&mut rec) {
            log::info!("{}: retrying after error", rec.id);
        }
        if rec.next_stage().is_some_and(|s| s <= opts.last_stage) {
            jobs.push(rec.clone());
        }
        states.insert(rec.id.clone(), rec);
    }
    let dispatched = jobs.len();

    let mut ctx = StageContext::new(cfg, clients);
    ctx.last_stage = opts.last_stage;
    ctx.cancel = cancel.clone();
    let written = drive(jobs, &ctx, opts.workers.max(1), opts.stop_after, &mut writer, &mut states)?;
    writer.sync()?;
    lines_written += written;

    let finals: Vec<VideoRecord> = states.into_values().collect();
    Ok(RunReport {
        ingest: ingest_stats,
        dispatched,
        manifest_lines_written: lines_written,
        cancelled: cancel.is_cancelled(),
        status: StatusReport::from_records(&finals),
    })
}

/// Worker pool plus the single writer. Returns the number of manifest lines written.
fn drive(
    jobs: Vec<VideoRecord>,
    ctx: &StageContext,
    workers: usize,
    stop_after: Option<usize>,
    writer: &mut ManifestWriter,
    states: &mut BTreeMap<String, VideoRecord>,
) -> Result<usize, PipelineError> {
    let (job_tx, job_rx) = crossbeam_channel::bounded::<VideoRecord>(workers * 2);
    let (out_tx, out_rx) = crossbeam_channel::unbounded::<VideoRecord>();
    std::thread::scope(|s| {
        for w in 0..workers {
            let job_rx = job_rx.clone();
            let out_tx = out_tx.clone();
            std::thread::Builder::new()
                .name(format!("curate-worker-{w}"))
                .spawn_scoped(s, move || {
                    for rec in job_rx {
                        if ctx.cancel.is_cancelled() {
                            continue;
                        }
                        process_isolated(rec, ctx, &mut |r| {
                            let _ = out_tx.send(r.clone());
                        });
                    }
                })
                .map_err(|e| PipelineError::Worker(e.to_string()))?;
        }
        drop(job_rx);
        drop(out_tx);

        let dispatcher = s.spawn(move || {
            for rec in jobs {
                if ctx.cancel.is_cancelled() || job_tx.send(rec).is_err() {
                    break;
                }
            }
        });

        let mut written = 0;
        let mut finished = 0;
        let mut failure = None;
        for rec in out_rx {
            if failure.is_some() {
                continue;
            }
            if let Err(e) = writer.append(&rec) {
                ctx.cancel.cancel();
                failure = Some(e);
                continue;
            }
            written += 1;
            if rec.is_terminal() {
                finished += 1;
                if finished % 50 == 0 {
                    log::info!("{finished} videos finished");
                }
                if stop_after.is_some_and(|n| finished >= n) {
                    ctx.cancel.cancel();
                }
            }
            states.insert(rec.id.clone(), rec);
        }
        dispatcher.join().map_err(|_| PipelineError::Worker("dispatcher panicked".into()))?;
        match failure {
            Some(e) => Err(e.into()),
            None => Ok(written),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ChatClient, ChatRequest, MockChatClient, MockClassifier, MockFixture, RetryPolicy};
    use crate::frame::synth::{SceneScript, Segment, SegmentKind};
    use crate::manifest::{manifest_digest, read_manifest};
    use std::io::Write;
    use std::time::Duration;

    fn solid(seconds: f64) -> SceneScript {
        SceneScript {
            width: 32,
            height: 18,
            fps: 2.0,
            seed: 1,
            segments: vec![Segment {
                start_s: 0.0,
                end_s: seconds,
                kind: SegmentKind::Solid { color: [90, 90, 90] },
                jitter: 0,
            }],
        }
    }

    fn write_sources(dir: &Path, lines: &[(String, f64, String)]) -> PathBuf {
        let path = dir.join("sources.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        for (id, d, uri) in lines {
            let line = serde_json::json!({"id": id, "source_dataset": "other", "uri": uri, "duration_s": d});
            writeln!(f, "{line}").unwrap();
        }
        path
    }

    fn mock_clients(chat: Arc<dyn ChatClient>) -> Clients {
        Clients::uniform(chat, Arc::new(MockClassifier::default()), RetryPolicy {
            retries: 0,
            base_delay: Duration::ZERO,
        })
    }

    /// Static solid videos: duration passes, scenecut passes, motion rejects.
    #[test]
    fn static_videos_stop_at_motion() {
        let dir = tempfile::tempdir().unwrap();
        let uri = format!("synth:{}", serde_json::to_string(&solid(12.0)).unwrap());
        let src = write_sources(
            dir.path(),
            &[("a".into(), 12.0, uri.clone()), ("b".into(), 4.0, uri.clone()), ("c".into(), 12.0, uri)],
        );
        let opts = RunOptions::new(dir.path().join("m.jsonl"));
        let mock = Arc::new(MockChatClient::default());
        let report = run(&PipelineConfig::default(), &[src], &opts, mock_clients(mock.clone()), &CancelToken::default()).unwrap();
        assert_eq!(report.status.rejected_by_stage[&Stage::Motion], 2);
        assert_eq!(report.status.rejected_by_stage[&Stage::Duration], 1);
        assert_eq!(report.exit_code(), 0);
        assert_eq!(mock.calls(), 0);
        let recs = read_manifest(&opts.manifest).unwrap();
        let a = recs.iter().find(|r| r.id == "a").unwrap();
        assert_eq!((a.fps, a.width, a.height), (Some(2.0), Some(32), Some(18)));
    }

    #[test]
    fn existing_manifest_requires_resume_and_matching_digest() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_sources(dir.path(), &[("a".into(), 4.0, "synth:none".into())]);
        let mut opts = RunOptions::new(dir.path().join("m.jsonl"));
        let cfg = PipelineConfig::default();
        let clients = || mock_clients(Arc::new(MockChatClient::default()));
        run(&cfg, &[src.clone()], &opts, clients(), &CancelToken::default()).unwrap();
        let err = run(&cfg, &[src.clone()], &opts, clients(), &CancelToken::default()).unwrap_err();
        assert!(matches!(err, PipelineError::ExistingRun(_)) && err.is_config_error());
        opts.resume = true;
        let changed = PipelineConfig {
            flow_threshold: 25.0,
            ..cfg.clone()
        };
        let err = run(&changed, &[src.clone()], &opts, clients(), &CancelToken::default()).unwrap_err();
        assert!(matches!(err, PipelineError::DigestMismatch { .. }));
        opts.force = true;
        let report = run(&changed, &[src], &opts, clients(), &CancelToken::default()).unwrap();
        assert_eq!(report.dispatched, 0);
        assert_eq!(report.manifest_lines_written, 0);
        let st = status(&default_checkpoint_path(&opts.manifest)).unwrap();
        assert_eq!(st.total, 1);
    }

    struct PanicOn(&'static str);

    impl ChatClient for PanicOn {
        fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
            if req.context.video_id == self.0 {
                panic!("boom");
            }
            Ok("GOOD".into())
        }
        fn tag(&self) -> String {
            "panic".into()
        }
    }

    /// Low-contrast texture panning 30 px per frame at 2 fps: passes scene cut and motion.
    fn moving_uri() -> String {
        let script = serde_json::json!({
            "width": 64, "height": 36, "fps": 2.0, "seed": 3,
            "segments": [{"start_s": 0.0, "end_s": 12.0, "kind": "pan",
                          "texture": {"seed": 5, "wavelength": 9.0, "contrast": 25.0}, "vx": 30.0, "vy": 0.0}]
        });
        format!("synth:{script}")
    }

    #[test]
    fn panic_is_isolated_to_one_video() {
        let dir = tempfile::tempdir().unwrap();
        let uri = moving_uri();
        let src = write_sources(dir.path(), &[("bad".into(), 12.0, uri.clone()), ("ok".into(), 12.0, uri)]);
        let mut opts = RunOptions::new(dir.path().join("m.jsonl"));
        opts.workers = 2;
        let cfg = PipelineConfig {
            flow_width: 64,
            flow_height: 36,
            ..PipelineConfig::default()
        };
        let report = run(&cfg, &[src], &opts, mock_clients(Arc::new(PanicOn("bad"))), &CancelToken::default()).unwrap();
        assert_eq!(report.status.passed, 1);
        assert_eq!(report.status.errors_by_stage[&Stage::Semantic], 1);
        assert!(report.status.error_queue[0].detail.contains("boom"));
        assert_eq!(report.exit_code(), 3);
    }

    #[test]
    fn retry_errors_reattempts_failed_stage() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_sources(dir.path(), &[("v".into(), 12.0, moving_uri())]);
        let mut opts = RunOptions::new(dir.path().join("m.jsonl"));
        let cfg = PipelineConfig {
            flow_width: 64,
            flow_height: 36,
            ..PipelineConfig::default()
        };
        let bad = Arc::new(MockChatClient::new(MockFixture::default().respond("v:content_variation", "unsure")));
        let first = run(&cfg, &[src.clone()], &opts, mock_clients(bad), &CancelToken::default()).unwrap();
        assert_eq!(first.status.errors, 1);

        opts.resume = true;
        let again = Arc::new(MockChatClient::default());
        let rerun = run(&cfg, &[src.clone()], &opts, mock_clients(again.clone()), &CancelToken::default()).unwrap();
        assert_eq!((rerun.dispatched, again.calls()), (0, 0));

        opts.retry_errors = true;
        let retried = run(&cfg, &[src], &opts, mock_clients(again.clone()), &CancelToken::default()).unwrap();
        assert_eq!(retried.status.passed, 1);
        assert!(again.calls() > 0);
        let recs = read_manifest(&opts.manifest).unwrap();
        recs[0].validate(cfg.min_duration_s).unwrap();
        assert!(!manifest_digest(&recs).is_empty());
    }

    #[test]
    fn last_stage_leaves_records_pending() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_sources(dir.path(), &[("v".into(), 12.0, moving_uri())]);
        let mut opts = RunOptions::new(dir.path().join("m.jsonl"));
        opts.last_stage = Stage::Motion;
        let cfg = PipelineConfig {
            flow_width: 64,
            flow_height: 36,
            ..PipelineConfig::default()
        };
        let mock = Arc::new(MockChatClient::default());
        let report = run(&cfg, &[src], &opts, mock_clients(mock.clone()), &CancelToken::default()).unwrap();
        assert_eq!(report.status.pending_by_stage[&Stage::Semantic], 1);
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn decode_failure_is_error_verdict() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_sources(dir.path(), &[("v".into(), 12.0, "/no/such/file.fsq".into())]);
        let opts = RunOptions::new(dir.path().join("m.jsonl"));
        let clients = mock_clients(Arc::new(MockChatClient::default()));
        let report = run(&PipelineConfig::default(), &[src], &opts, clients, &CancelToken::default()).unwrap();
        assert_eq!(report.status.errors_by_stage[&Stage::Scenecut], 1);
        assert!(report.status.error_queue[0].detail.starts_with("decode:"));
    }
}
