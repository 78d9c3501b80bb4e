use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use curate_core::caption::caption_video;
use curate_core::client::Clients;
use curate_core::frame::synth::SceneScript;
use curate_core::frame::{write_frameseq, FrameSequence, FrameSource};
use curate_core::manifest::{read_manifest, read_manifest_or_empty};
use curate_core::motion::{estimator_from_config, mean_flow_magnitude, motion_verdict, serve_flow_adapter, BlockMatcher};
use curate_core::pipeline::{self, default_checkpoint_path, CancelToken, RunOptions};
use curate_core::prompts::Prompts;
use curate_core::review::{create_study, ReviewStore, StudyKind};
use curate_core::scenecut::{content_scores, detect_cuts};
use curate_core::semantic::semantic_verdict;
use curate_core::stats::{compute_stats, render_report, ReportFormat};
use curate_core::{PipelineConfig, Stage};
use curate_review::{AppState, ServeOptions};

const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "curate", version, about = "Curate long-take, high-motion video datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// TOML config; defaults apply when omitted. CURATE_*_ENDPOINT variables override endpoints.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest source lists and run every stage.
    Run(RunArgs),
    /// Progress summary of a run.
    Status {
        /// Checkpoint file; defaults to the one next to --manifest.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "manifest.jsonl")]
        manifest: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Scene-cut scores and verdict for one video.
    Scenecut {
        uri: String,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Mean optical-flow magnitude and verdict for one video.
    Motion {
        uri: String,
        /// `builtin` or `cmd:<program args...>`; overrides the config.
        #[arg(long)]
        estimator: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// MLLM screening verdict for one video.
    Semantic {
        uri: String,
        #[arg(long, default_value = "adhoc")]
        id: String,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Hierarchical caption for one video.
    Caption {
        uri: String,
        #[arg(long, default_value = "adhoc")]
        id: String,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Dataset statistics over a manifest.
    Stats {
        #[arg(long, default_value = "manifest.jsonl")]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Review store whose long-take and dynamic-degree results are included.
        #[arg(long)]
        review: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Render a synthetic scene script (JSON) to a FRAMESEQ file.
    Synth {
        script: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Flow estimator protocol over stdin/stdout using the built-in block matcher.
    FlowAdapter {
        #[arg(long, default_value_t = 16)]
        block: u32,
        #[arg(long, default_value_t = 32)]
        search: u32,
    },
    /// Serve the rating API.
    Serve {
        #[arg(long, default_value = "review.jsonl")]
        store: PathBuf,
        #[arg(long, default_value = "manifest.jsonl")]
        manifest: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static files served for paths outside the API (the rater UI build).
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Allowed CORS origin; repeatable. Any origin when omitted.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Create rating studies and read their metrics.
    Study {
        #[command(subcommand)]
        action: StudyAction,
    },
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Source list (JSONL); repeatable.
    #[arg(long, required = true)]
    sources: Vec<PathBuf>,
    #[arg(long, default_value = "manifest.jsonl")]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Defaults to worker_count from the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Continue an existing manifest.
    #[arg(long)]
    resume: bool,
    /// Resume even though the config changed.
    #[arg(long)]
    force: bool,
    /// Re-attempt videos whose last stage errored.
    #[arg(long)]
    retry_errors: bool,
    /// Stop each video after this stage.
    #[arg(long, value_enum)]
    until: Option<StageArg>,
    /// Stop the run once this many videos finish.
    #[arg(long)]
    stop_after: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum StudyAction {
    Create {
        #[arg(long, default_value = "review.jsonl")]
        store: PathBuf,
        #[arg(long, default_value = "manifest.jsonl")]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, short)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Metrics {
        #[arg(long, default_value = "review.jsonl")]
        store: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Duration,
    Scenecut,
    Motion,
    Semantic,
    Caption,
    Category,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    LongTake,
    DynamicDegree,
    CaptionPref,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Duration => Stage::Duration,
            StageArg::Scenecut => Stage::Scenecut,
            StageArg::Motion => Stage::Motion,
            StageArg::Semantic => Stage::Semantic,
            StageArg::Caption => Stage::Caption,
            StageArg::Category => Stage::Category,
        }
    }
}

impl From<KindArg> for StudyKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::LongTake => StudyKind::LongTake,
            KindArg::DynamicDegree => StudyKind::DynamicDegree,
            KindArg::CaptionPref => StudyKind::CaptionPref,
        }
    }
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

/// An error plus the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

fn config_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: e.into(),
    }
}

fn load_config(arg: &ConfigArg) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &arg.config {
        Some(path) => PipelineConfig::load(path).map_err(config_failure)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env();
    cfg.validate().map_err(config_failure)?;
    Ok(cfg)
}

fn clients(cfg: &PipelineConfig) -> Result<Clients, Failure> {
    Clients::from_config(cfg).map_err(config_failure)
}

fn load_video(cfg: &PipelineConfig, uri: &str) -> anyhow::Result<FrameSequence> {
    FrameSource::new(cfg.decoder_cmd.clone())
        .load(uri)
        .with_context(|| format!("loading {uri}"))
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(args: RunArgs) -> Result<u8, Failure> {
    let cfg = load_config(&args.config)?;
    let clients = clients(&cfg)?;
    let opts = RunOptions {
        manifest: args.manifest,
        checkpoint: args.checkpoint,
        workers: args.workers.unwrap_or(cfg.worker_count),
        resume: args.resume,
        force: args.force,
        retry_errors: args.retry_errors,
        last_stage: args.until.map_or(Stage::Category, Stage::from),
        stop_after: args.stop_after,
    };
    let cancel = CancelToken::default();
    let on_signal = cancel.clone();
    ctrlc::set_handler(move || {
        log::warn!("interrupt received; finishing in-flight stages");
        on_signal.cancel();
    })
    .context("installing the interrupt handler")?;

    let report = pipeline::run(&cfg, &args.sources, &opts, clients, &cancel).map_err(|e| {
        if e.is_config_error() {
            config_failure(e)
        } else {
            e.into()
        }
    })?;
    if args.json {
        print_json(&report)?;
    } else {
        let s = &report.status;
        println!(
            "{} videos: {} passed, {} rejected, {} errors, {} pending ({} dispatched this run{})",
            s.total,
            s.passed,
            s.rejected,
            s.errors,
            s.pending,
            report.dispatched,
            if report.cancelled { ", interrupted" } else { "" }
        );
        for e in &s.error_queue {
            println!("error\t{}\t{}\t{}", e.id, e.stage, e.detail);
        }
    }
    Ok(report.exit_code() as u8)
}

fn status(checkpoint: Option<PathBuf>, manifest: &Path, json: bool) -> Result<u8, Failure> {
    let path = checkpoint.unwrap_or_else(|| default_checkpoint_path(manifest));
    let s = pipeline::status(&path)?;
    if json {
        print_json(&s)?;
        return Ok(0);
    }
    println!("total\t{}\npassed\t{}\nrejected\t{}\nerrors\t{}\npending\t{}", s.total, s.passed, s.rejected, s.errors, s.pending);
    for (label, map) in [
        ("rejected", &s.rejected_by_stage),
        ("errors", &s.errors_by_stage),
        ("pending", &s.pending_by_stage),
    ] {
        for (stage, n) in map {
            println!("{label}.{stage}\t{n}");
        }
    }
    Ok(0)
}

fn stats(manifest: &Path, format: Format, review: Option<PathBuf>, config: &ConfigArg) -> Result<u8, Failure> {
    let cfg = load_config(config)?;
    let records = read_manifest(manifest)?;
    let summary = match review {
        Some(p) => Some(ReviewStore::open(&p)?.summary()),
        None => None,
    };
    print!("{}", render_report(&compute_stats(&records, &cfg, summary), format.into()));
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Status { checkpoint, manifest, json } => status(checkpoint, &manifest, json),
        Command::Scenecut { uri, config } => {
            let cfg = load_config(&config)?;
            let seq = load_video(&cfg, &uri)?;
            let scores = content_scores(&seq, &cfg).map_err(|e| anyhow!(e))?;
            print_json(&serde_json::json!({
                "sample_fps": scores.sample_fps,
                "scores": scores.scores,
                "verdict": detect_cuts(&seq, &cfg),
            }))?;
            Ok(0)
        }
        Command::Motion { uri, estimator, config } => {
            let mut cfg = load_config(&config)?;
            if let Some(e) = estimator {
                cfg.flow_estimator = e;
                cfg.validate().map_err(config_failure)?;
            }
            let seq = load_video(&cfg, &uri)?;
            let est = estimator_from_config(&cfg);
            let mean = mean_flow_magnitude(&seq, est.as_ref(), &cfg).ok();
            print_json(&serde_json::json!({
                "estimator": est.name(),
                "mean_flow": mean,
                "verdict": motion_verdict(&seq, est.as_ref(), &cfg),
            }))?;
            Ok(0)
        }
        Command::Semantic { uri, id, config } => {
            let cfg = load_config(&config)?;
            let clients = clients(&cfg)?;
            let seq = load_video(&cfg, &uri)?;
            print_json(&semantic_verdict(&id, &seq, &clients, &Prompts::from_config(&cfg), &cfg))?;
            Ok(0)
        }
        Command::Caption { uri, id, config } => {
            let cfg = load_config(&config)?;
            let clients = clients(&cfg)?;
            let seq = load_video(&cfg, &uri)?;
            let rec = caption_video(&id, &seq, None, &clients, &Prompts::from_config(&cfg), &cfg, &mut |_| {})
                .map_err(|f| anyhow!("{} ({} clip captions done)", f.error, f.partial.clip_captions.len()))?;
            print_json(&rec)?;
            Ok(0)
        }
        Command::Stats {
            manifest,
            format,
            review,
            config,
        } => stats(&manifest, format, review, &config),
        Command::Synth { script, output } => {
            let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
            let seq = SceneScript::from_json(&text)?.render()?;
            match output {
                Some(path) => {
                    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    let mut out = BufWriter::new(file);
                    write_frameseq(&seq, &mut out)?;
                    out.flush()?;
                }
                None => {
                    let mut out = BufWriter::new(std::io::stdout().lock());
                    write_frameseq(&seq, &mut out)?;
                    out.flush()?;
                }
            }
            Ok(0)
        }
        Command::FlowAdapter { block, search } => {
            let mut out = BufWriter::new(std::io::stdout().lock());
            serve_flow_adapter(std::io::stdin().lock(), &mut out, BlockMatcher { block, search })?;
            out.flush()?;
            Ok(0)
        }
        Command::Serve {
            store,
            manifest,
            addr,
            static_dir,
            cors_origins,
            config,
        } => {
            let cfg = load_config(&config)?;
            let records = read_manifest_or_empty(&manifest)?;
            let state = AppState::new(ReviewStore::open(&store)?, &records, FrameSource::new(cfg.decoder_cmd.clone()));
            curate_review::serve_blocking(addr, state, ServeOptions { static_dir, cors_origins })?;
            Ok(0)
        }
        Command::Study { action } => match action {
            StudyAction::Create {
                store,
                manifest,
                kind,
                n,
                seed,
            } => {
                let records = read_manifest(&manifest)?;
                let tasks = create_study(&records, kind.into(), n, seed)?;
                let count = tasks.len();
                ReviewStore::open(&store)?.add_tasks(tasks)?;
                println!("created {count} {} tasks in {}", StudyKind::from(kind), store.display());
                Ok(0)
            }
            StudyAction::Metrics { store, kind } => {
                print_json(&ReviewStore::open(&store)?.metrics(kind.into())?)?;
                Ok(0)
            }
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
