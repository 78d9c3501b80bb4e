//! Curation pipeline for long-take, high-motion video datasets.
//!
//! Stages run in a fixed order per video: duration gate, scene-cut detection,
//! optical-flow motion gate, multimodal-LLM semantic screening, hierarchical
//! captioning, and category labeling. Results land in an append-only JSONL
//! manifest that doubles as the resume checkpoint.

pub mod caption;
pub mod client;
pub mod config;
pub mod frame;
pub mod manifest;
pub mod motion;
pub mod pipeline;
pub mod prompts;
pub mod review;
pub mod scenecut;
pub mod semantic;
pub mod stats;

pub use config::{ConfigError, PipelineConfig};
pub use manifest::{
    read_manifest, CaptionRecord, Category, FilterVerdict, ManifestError, ManifestWriter, Outcome, SourceDataset,
    Stage, VideoRecord,
};
