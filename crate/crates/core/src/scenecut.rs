//! Content-based scene cut detection for long-take selection.
//!
//! Frames are sampled sparsely (0.5 fps by default) so a fade completing within
//! one sampling interval shows up as a single large jump, just like a hard cut.

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::frame::{downscale_to_max_dim, sample_at_fps, to_hsv, FrameError, FrameSequence, HsvFrame};
use crate::manifest::{FilterVerdict, Stage};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("need at least 2 sampled frames, got {0}")]
    TooFewFrames(usize),
}

/// Scores between consecutive sampled frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentScoreSeries {
    pub scores: Vec<f64>,
    pub sample_fps: f64,
}

impl ContentScoreSeries {
    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    /// Timestamp (seconds) of the later frame of pair `i`.
    pub fn timestamp(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.sample_fps
    }
}

/// Mean of the per-channel mean absolute differences. Hue is circular mod 256.
pub fn content_score(prev: &HsvFrame, cur: &HsvFrame) -> Result<f64, ScoreError> {
    if (prev.width, prev.height) != (cur.width, cur.height) {
        return Err(ScoreError::DimensionMismatch(prev.width, prev.height, cur.width, cur.height));
    }
    let mut sums = [0u64; 3];
    for (a, b) in prev.data.chunks_exact(3).zip(cur.data.chunks_exact(3)) {
        let dh = a[0].abs_diff(b[0]) as u64;
        sums[0] += dh.min(256 - dh);
        sums[1] += a[1].abs_diff(b[1]) as u64;
        sums[2] += a[2].abs_diff(b[2]) as u64;
    }
    let n = (prev.data.len() / 3).max(1) as f64;
    Ok(sums.iter().map(|&s| s as f64 / n).sum::<f64>() / 3.0)
}

pub fn content_scores(seq: &FrameSequence, cfg: &PipelineConfig) -> Result<ContentScoreSeries, ScoreError> {
    let sampled = sample_at_fps(seq, cfg.scenecut_fps)?;
    if sampled.len() < 2 {
        return Err(ScoreError::TooFewFrames(sampled.len()));
    }
    let hsv = sampled
        .frames
        .iter()
        .map(|f| downscale_to_max_dim(f, cfg.scenecut_max_dim).map(|small| to_hsv(&small)))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = hsv
        .windows(2)
        .map(|w| content_score(&w[0], &w[1]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContentScoreSeries {
        scores,
        sample_fps: cfg.scenecut_fps,
    })
}

/// Sampled-pair indices that register as cuts after `min_scene_len` debouncing.
pub fn cut_indices(series: &ContentScoreSeries, threshold: f64, min_scene_len: u32) -> Vec<usize> {
    let mut cuts = Vec::new();
    let mut last: Option<usize> = None;
    for (i, &s) in series.scores.iter().enumerate() {
        if s < threshold {
            continue;
        }
        let frame = i + 1;
        if last.is_none_or(|l| frame - l >= min_scene_len as usize) {
            cuts.push(i);
            last = Some(frame);
        }
    }
    cuts
}

pub fn detect_cuts(seq: &FrameSequence, cfg: &PipelineConfig) -> FilterVerdict {
    let series = match content_scores(seq, cfg) {
        Ok(s) => s,
        Err(e) => return FilterVerdict::error(Stage::Scenecut, e.to_string()),
    };
    let max = series.max();
    let cuts = cut_indices(&series, cfg.cutscene_threshold, cfg.min_scene_len_frames);
    if cuts.is_empty() {
        FilterVerdict::pass(Stage::Scenecut, Some(max), "no cuts")
    } else {
        let stamps: Vec<String> = cuts
            .iter()
            .map(|&i| format!("{:.1}s ({:.1})", series.timestamp(i), series.scores[i]))
            .collect();
        FilterVerdict::reject(Stage::Scenecut, Some(max), format!("cuts at {}", stamps.join(", ")))
    }
}
