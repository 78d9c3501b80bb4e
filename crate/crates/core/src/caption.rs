//! Hierarchical captioning: fixed-length clips, one VLM caption per clip from a
//! frame grid, then a single LLM rewrite (one clip) or merge (several clips).

use thiserror::Error;

use crate::client::{complete_with_retry, ChatRequest, ClientError, Clients, Purpose, RequestContext};
use crate::config::PipelineConfig;
use crate::frame::{uniform_indices, Frame, FrameError, FrameSequence};
use crate::manifest::{word_count, CaptionRecord, ClipCaption, ClipSpan};
use crate::prompts::Prompts;

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("grid needs {expected} frames, got {got}")]
    GridCount { expected: usize, got: usize },
    #[error("grid frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    GridSize {
        index: usize,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Tiles `[0, duration)` with `clip_len_s` spans. A shorter tail is kept as its
/// own span when at least `min_clip_s` long, otherwise folded into the previous span.
pub fn split_clips(duration_s: f64, clip_len_s: f64, min_clip_s: f64) -> Vec<ClipSpan> {
    const EPS: f64 = 1e-9;
    if !(duration_s > 0.0) || !(clip_len_s > 0.0) {
        return Vec::new();
    }
    let full = ((duration_s + EPS) / clip_len_s).floor() as usize;
    let mut spans: Vec<ClipSpan> = (0..full)
        .map(|i| ClipSpan {
            index: i,
            start_s: i as f64 * clip_len_s,
            end_s: (i + 1) as f64 * clip_len_s,
        })
        .collect();
    let covered = full as f64 * clip_len_s;
    let rest = duration_s - covered;
    if spans.is_empty() || rest + EPS >= min_clip_s {
        if rest > EPS {
            spans.push(ClipSpan {
                index: spans.len(),
                start_s: covered,
                end_s: duration_s,
            });
        }
    } else if let Some(last) = spans.last_mut() {
        last.end_s = duration_s;
    }
    if let Some(last) = spans.last_mut() {
        last.end_s = duration_s;
    }
    spans
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub image: Frame,
    pub rows: u32,
    pub cols: u32,
    pub cell_w: u32,
    pub cell_h: u32,
    /// Source frame index for each cell, row-major.
    pub source_indices: Vec<usize>,
}

/// Places `frames` row-major into a `rows x cols` composite at native size.
pub fn build_grid(frames: &[Frame], rows: usize, cols: usize) -> Result<ImageGrid, CaptionError> {
    let expected = rows * cols;
    let (rows, cols) = (rows as u32, cols as u32);
    if frames.len() != expected || expected == 0 {
        return Err(CaptionError::GridCount {
            expected,
            got: frames.len(),
        });
    }
    let (cw, ch) = (frames[0].width, frames[0].height);
    for (index, f) in frames.iter().enumerate() {
        if (f.width, f.height) != (cw, ch) {
            return Err(CaptionError::GridSize {
                index,
                got_w: f.width,
                got_h: f.height,
                want_w: cw,
                want_h: ch,
            });
        }
    }
    let (gw, gh) = (cols * cw, rows * ch);
    let mut data = vec![0u8; (gw * gh * 3) as usize];
    let row_bytes = (cw * 3) as usize;
    for (k, f) in frames.iter().enumerate() {
        let (gx, gy) = ((k as u32 % cols) * cw, (k as u32 / cols) * ch);
        for y in 0..ch {
            let dst = (((gy + y) * gw + gx) * 3) as usize;
            let src = (y * cw * 3) as usize;
            data[dst..dst + row_bytes].copy_from_slice(&f.data[src..src + row_bytes]);
        }
    }
    Ok(ImageGrid {
        image: Frame::new(gw, gh, data)?,
        rows,
        cols,
        cell_w: cw,
        cell_h: ch,
        source_indices: (0..expected).collect(),
    })
}

/// Frame indices whose timestamps fall in `[start, end)`; the last span runs to the end.
fn span_range(seq: &FrameSequence, span: &ClipSpan) -> (usize, usize) {
    let first = ((span.start_s * seq.fps) - 1e-9).ceil().max(0.0) as usize;
    let last = ((span.end_s * seq.fps) - 1e-9).ceil() as usize;
    (first.min(seq.len()), last.min(seq.len()))
}

/// The grid for one clip: `rows * cols` frames sampled uniformly inside the span.
pub fn clip_grid(seq: &FrameSequence, span: &ClipSpan, cfg: &PipelineConfig) -> Result<ImageGrid, CaptionError> {
    let (first, last) = span_range(seq, span);
    if first >= last {
        return Err(CaptionError::Precondition(format!(
            "clip {} [{:.1}s, {:.1}s) holds no frames",
            span.index, span.start_s, span.end_s
        )));
    }
    let indices: Vec<usize> = uniform_indices(last - first, cfg.grid_frames)
        .into_iter()
        .map(|i| first + i)
        .collect();
    let frames: Vec<Frame> = indices.iter().map(|&i| seq.frames[i].clone()).collect();
    let mut grid = build_grid(&frames, cfg.grid_rows, cfg.grid_cols)?;
    grid.source_indices = indices;
    Ok(grid)
}

pub fn caption_clip(
    video_id: &str,
    seq: &FrameSequence,
    span: &ClipSpan,
    clients: &Clients,
    prompts: &Prompts,
    cfg: &PipelineConfig,
) -> Result<String, CaptionError> {
    let grid = clip_grid(seq, span, cfg)?;
    let req = ChatRequest {
        prompt: prompts.clip_caption.clone(),
        images: vec![grid.image],
        context: RequestContext {
            video_id: video_id.to_string(),
            purpose: Purpose::ClipCaption,
            inputs: Vec::new(),
        },
    };
    let text = complete_with_retry(clients.vlm.as_ref(), &req, clients.retry, &clients.budget)?;
    Ok(text.trim().to_string())
}

fn text_call(video_id: &str, purpose: Purpose, prompt: String, inputs: Vec<String>, clients: &Clients) -> Result<String, CaptionError> {
    let req = ChatRequest {
        prompt,
        images: Vec::new(),
        context: RequestContext {
            video_id: video_id.to_string(),
            purpose,
            inputs,
        },
    };
    let text = complete_with_retry(clients.llm.as_ref(), &req, clients.retry, &clients.budget)?;
    Ok(text.trim().to_string())
}

pub fn refine_caption(video_id: &str, raw: &str, clients: &Clients, prompts: &Prompts) -> Result<String, CaptionError> {
    text_call(video_id, Purpose::Refine, prompts.render_refine(raw), vec![raw.to_string()], clients)
}

pub fn merge_captions(video_id: &str, raws: &[String], clients: &Clients, prompts: &Prompts) -> Result<String, CaptionError> {
    if raws.len() < 2 {
        return Err(CaptionError::Precondition(format!(
            "merging needs at least 2 clip captions, got {}; use refine",
            raws.len()
        )));
    }
    text_call(video_id, Purpose::Compose, prompts.render_compose(raws), raws.to_vec(), clients)
}

/// A failed captioning attempt and the clip captions gathered before it.
#[derive(Debug)]
pub struct CaptionFailure {
    pub error: CaptionError,
    pub partial: CaptionRecord,
}

/// Captions every clip not already present in `resume`, then refines or merges.
///
/// `on_clip` sees the record after each newly captioned clip so callers can
/// persist progress. Clip captions in `resume` are reused only when their
/// span matches the current split.
pub fn caption_video(
    video_id: &str,
    seq: &FrameSequence,
    resume: Option<&CaptionRecord>,
    clients: &Clients,
    prompts: &Prompts,
    cfg: &PipelineConfig,
    on_clip: &mut dyn FnMut(&CaptionRecord),
) -> Result<CaptionRecord, CaptionFailure> {
    let spans = split_clips(seq.duration_s(), cfg.clip_len_s, cfg.min_clip_s);
    let mut rec = CaptionRecord::default();
    if let Some(prev) = resume {
        rec.clip_captions = prev
            .clip_captions
            .iter()
            .zip(&spans)
            .take_while(|(c, s)| c.span == **s && !c.text.is_empty())
            .map(|(c, _)| c.clone())
            .collect();
    }
    if spans.is_empty() {
        return Err(CaptionFailure {
            error: CaptionError::Precondition("video has no duration".into()),
            partial: rec,
        });
    }
    for span in &spans[rec.clip_captions.len()..] {
        match caption_clip(video_id, seq, span, clients, prompts, cfg) {
            Ok(text) => {
                rec.clip_captions.push(ClipCaption { span: *span, text });
                on_clip(&rec);
            }
            Err(error) => return Err(CaptionFailure { error, partial: rec }),
        }
    }
    let raws: Vec<String> = rec.clip_captions.iter().map(|c| c.text.clone()).collect();
    let result = if raws.len() == 1 {
        refine_caption(video_id, &raws[0], clients, prompts)
    } else {
        merge_captions(video_id, &raws, clients, prompts)
    };
    match result {
        Ok(text) if !text.is_empty() => {
            rec.word_count = word_count(&text);
            rec.final_caption = text;
            Ok(rec)
        }
        Ok(_) => Err(CaptionFailure {
            error: CaptionError::Client(ClientError::Empty),
            partial: rec,
        }),
        Err(error) => Err(CaptionFailure { error, partial: rec }),
    }
}
