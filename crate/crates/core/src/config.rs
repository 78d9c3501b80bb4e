//! Pipeline configuration.
//!
//! The on-disk format is a flat `key = value` file (a TOML subset). Every key
//! is optional; an empty file yields the published curation settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// All tunables of the curation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Duration gate, inclusive.
    pub min_duration_s: f64,

    pub scenecut_fps: f64,
    pub cutscene_threshold: f64,
    pub min_scene_len_frames: u32,
    /// Sampled frames are box-downscaled until their smaller side is at most this.
    pub scenecut_max_dim: u32,

    pub flow_fps: f64,
    pub flow_width: u32,
    pub flow_height: u32,
    pub flow_threshold: f64,
    pub flow_block: u32,
    pub flow_search: u32,
    /// `builtin` or `cmd:<template>`.
    pub flow_estimator: String,

    pub mllm_frames: usize,

    pub clip_len_s: f64,
    /// Trailing clips shorter than this are merged into the previous clip.
    pub min_clip_s: f64,
    pub grid_frames: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,

    pub worker_count: usize,
    pub max_inflight: usize,
    pub retry_count: u32,
    pub retry_base_ms: u64,
    pub checkpoint_path: Option<PathBuf>,
    /// Command template with an `{input}` placeholder that writes a FRAMESEQ stream.
    pub decoder_cmd: Option<String>,

    /// Client endpoints: `mock`, `mock:<fixture.json>`, or an `http(s)://` URL.
    pub mllm_endpoint: String,
    pub mllm_model: String,
    pub vlm_endpoint: String,
    pub vlm_model: String,
    pub llm_endpoint: String,
    pub llm_model: String,
    pub classifier_endpoint: String,
    pub client_timeout_s: u64,

    pub prompt_diversity: Option<String>,
    pub prompt_variation: Option<String>,
    pub prompt_clip_caption: Option<String>,
    pub prompt_refine: Option<String>,
    pub prompt_compose: Option<String>,

    pub duration_bin_s: f64,
    pub duration_bin_max: f64,
    pub flow_bin: f64,
    pub flow_bin_max: f64,
    pub word_bin: f64,
    pub word_bin_max: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_duration_s: 10.0,
            scenecut_fps: 0.5,
            cutscene_threshold: 50.0,
            min_scene_len_frames: 0,
            scenecut_max_dim: 256,
            flow_fps: 2.0,
            flow_width: 960,
            flow_height: 520,
            flow_threshold: 20.0,
            flow_block: 16,
            flow_search: 32,
            flow_estimator: "builtin".to_string(),
            mllm_frames: 8,
            clip_len_s: 30.0,
            min_clip_s: 5.0,
            grid_frames: 6,
            grid_rows: 2,
            grid_cols: 3,
            worker_count: 4,
            max_inflight: 4,
            retry_count: 3,
            retry_base_ms: 250,
            checkpoint_path: None,
            decoder_cmd: None,
            mllm_endpoint: "mock".to_string(),
            mllm_model: "pllava-7b".to_string(),
            vlm_endpoint: "mock".to_string(),
            vlm_model: "llava-v1.6-34b".to_string(),
            llm_endpoint: "mock".to_string(),
            llm_model: "claude-3-haiku".to_string(),
            classifier_endpoint: "mock".to_string(),
            client_timeout_s: 120,
            prompt_diversity: None,
            prompt_variation: None,
            prompt_clip_caption: None,
            prompt_refine: None,
            prompt_compose: None,
            duration_bin_s: 5.0,
            duration_bin_max: 60.0,
            flow_bin: 10.0,
            flow_bin_max: 120.0,
            word_bin: 10.0,
            word_bin_max: 200.0,
        }
    }
}

/// Environment variables that override client endpoints after the file is read.
pub const ENDPOINT_ENV_VARS: [(&str, fn(&mut PipelineConfig) -> &mut String); 4] = [
    ("CURATE_MLLM_ENDPOINT", |c| &mut c.mllm_endpoint),
    ("CURATE_VLM_ENDPOINT", |c| &mut c.vlm_endpoint),
    ("CURATE_LLM_ENDPOINT", |c| &mut c.llm_endpoint),
    ("CURATE_CLASSIFIER_ENDPOINT", |c| &mut c.classifier_endpoint),
];

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            ConfigError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `CURATE_*_ENDPOINT` overrides from the process environment.
    pub fn apply_env(&mut self) {
        for (var, field) in ENDPOINT_ENV_VARS {
            if let Ok(value) = std::env::var(var) {
                *field(self) = value;
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    field,
                    reason: format!("must be > 0, got {v}"),
                })
            }
        }
        positive("min_duration_s", self.min_duration_s)?;
        positive("scenecut_fps", self.scenecut_fps)?;
        positive("cutscene_threshold", self.cutscene_threshold)?;
        positive("scenecut_max_dim", self.scenecut_max_dim as f64)?;
        positive("flow_fps", self.flow_fps)?;
        positive("flow_width", self.flow_width as f64)?;
        positive("flow_height", self.flow_height as f64)?;
        positive("flow_threshold", self.flow_threshold)?;
        positive("flow_block", self.flow_block as f64)?;
        positive("mllm_frames", self.mllm_frames as f64)?;
        positive("clip_len_s", self.clip_len_s)?;
        positive("min_clip_s", self.min_clip_s)?;
        positive("grid_frames", self.grid_frames as f64)?;
        positive("grid_rows", self.grid_rows as f64)?;
        positive("grid_cols", self.grid_cols as f64)?;
        positive("worker_count", self.worker_count as f64)?;
        positive("max_inflight", self.max_inflight as f64)?;
        positive("duration_bin_s", self.duration_bin_s)?;
        positive("duration_bin_max", self.duration_bin_max)?;
        positive("flow_bin", self.flow_bin)?;
        positive("flow_bin_max", self.flow_bin_max)?;
        positive("word_bin", self.word_bin)?;
        positive("word_bin_max", self.word_bin_max)?;
        if self.grid_rows * self.grid_cols != self.grid_frames {
            return Err(ConfigError::Invalid {
                field: "grid_frames",
                reason: format!(
                    "grid_rows x grid_cols = {} x {} does not equal grid_frames = {}",
                    self.grid_rows, self.grid_cols, self.grid_frames
                ),
            });
        }
        if self.min_clip_s > self.clip_len_s {
            return Err(ConfigError::Invalid {
                field: "min_clip_s",
                reason: "must not exceed clip_len_s".into(),
            });
        }
        if self.flow_estimator != "builtin" && !self.flow_estimator.starts_with("cmd:") {
            return Err(ConfigError::Invalid {
                field: "flow_estimator",
                reason: format!("expected `builtin` or `cmd:<template>`, got `{}`", self.flow_estimator),
            });
        }
        Ok(())
    }

    /// Digest over every setting that influences verdicts or captions.
    ///
    /// Runtime knobs (workers, in-flight cap, retries, checkpoint path, endpoints)
    /// are excluded so a run can be resumed with a different worker count.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.worker_count = 0;
        c.max_inflight = 0;
        c.retry_count = 0;
        c.retry_base_ms = 0;
        c.checkpoint_path = None;
        c.client_timeout_s = 0;
        c.mllm_endpoint.clear();
        c.vlm_endpoint.clear();
        c.llm_endpoint.clear();
        c.classifier_endpoint.clear();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
