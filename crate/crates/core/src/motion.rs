//! Motion gating by mean optical-flow magnitude.
//!
//! The flow estimator is pluggable. The built-in one is an exhaustive
//! block matcher on luma; an external estimator can be attached through a
//! command that speaks the FRAMESEQ-in / flow-grid-out protocol.

use std::io::{Read, Write};
use std::process::{Command, Stdio};

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::frame::{read_frameseq, resize, sample_at_fps, write_frameseq, Frame, FrameError, FrameSequence};
use crate::manifest::{FilterVerdict, Stage};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("frame {0}x{1} is smaller than one {2}px block")]
    TooSmall(u32, u32, u32),
    #[error("need at least 2 sampled frames, got {0}")]
    TooFewFrames(usize),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("flow estimator `{command}` failed: {message}")]
    External { command: String, message: String },
}

/// Per-pixel displacement `(u, v)`: the content of `prev` at `(x, y)` is found
/// in `cur` at `(x + u, y + v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn at(&self, x: u32, y: u32) -> (f32, f32) {
        let i = y as usize * self.width as usize + x as usize;
        (self.u[i], self.v[i])
    }

    pub fn mean_magnitude(&self) -> f64 {
        let n = self.u.len().max(1) as f64;
        self.u
            .iter()
            .zip(&self.v)
            .map(|(&u, &v)| ((u as f64).powi(2) + (v as f64).powi(2)).sqrt())
            .sum::<f64>()
            / n
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

pub trait FlowEstimator: Send + Sync {
    fn estimate(&self, prev: &Frame, cur: &Frame) -> Result<FlowField, FlowError>;
    /// Tag recorded in verdict details.
    fn name(&self) -> String;
}

/// Search offsets ordered by `(|u| + |v|, u, v)`, the tie-break priority.
fn candidate_offsets(search: i32) -> Vec<(i32, i32)> {
    let mut c: Vec<(i32, i32)> = (-search..=search)
        .flat_map(|u| (-search..=search).map(move |v| (u, v)))
        .collect();
    c.sort_by_key(|&(u, v)| (u.abs() + v.abs(), u, v));
    c
}

/// Summed-area table with a zero border row and column.
struct Integral {
    w: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(luma: &[u8], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += luma[y * w + x] as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { w, sums }
    }

    fn rect(&self, x: usize, y: usize, bw: usize, bh: usize) -> u32 {
        let s = self.w + 1;
        let (x1, y1) = (x + bw, y + bh);
        self.sums[y1 * s + x1] + self.sums[y * s + x] - self.sums[y * s + x1] - self.sums[y1 * s + x]
    }
}

/// Replicates border pixels outward by `pad` on every side.
fn pad_edges(luma: &[u8], w: usize, h: usize, pad: usize) -> (Vec<u8>, usize) {
    let pw = w + 2 * pad;
    let mut out = vec![0u8; pw * (h + 2 * pad)];
    for y in 0..h + 2 * pad {
        let src = &luma[y.saturating_sub(pad).min(h - 1) * w..][..w];
        let row = &mut out[y * pw..(y + 1) * pw];
        row[..pad].fill(src[0]);
        row[pad..pad + w].copy_from_slice(src);
        row[pad + w..].fill(src[w - 1]);
    }
    (out, pw)
}

/// Exhaustive SAD block matching on luma.
///
/// Every `block x block` tile of `prev` (edge tiles clipped) is compared against
/// all positions of `cur` within `±search` px, with `cur` extended past its
/// borders by edge replication; the winning offset is
/// written to every pixel of the tile. Ties go to the smallest `|u| + |v|`, then
/// the smallest `u`, then the smallest `v`. Candidates whose block-sum lower
/// bound cannot beat the current best are skipped, which keeps the result exact.
pub fn block_match_flow(prev: &Frame, cur: &Frame, block: u32, search: u32) -> Result<FlowField, FlowError> {
    if (prev.width, prev.height) != (cur.width, cur.height) {
        return Err(FlowError::DimensionMismatch(prev.width, prev.height, cur.width, cur.height));
    }
    if prev.width < block || prev.height < block || block == 0 {
        return Err(FlowError::TooSmall(prev.width, prev.height, block));
    }
    let (w, h) = (prev.width as usize, prev.height as usize);
    let bs = block as usize;
    let pad = search as usize;
    let p = prev.luma();
    let (c, pw) = pad_edges(&cur.luma(), w, h, pad);
    let cur_int = Integral::new(&c, pw, h + 2 * pad);
    let prev_int = Integral::new(&p, w, h);
    let offsets = candidate_offsets(search as i32);
    let cols = w.div_ceil(bs);
    let mut chosen: Vec<usize> = Vec::with_capacity(cols * h.div_ceil(bs));
    let mut field = FlowField::zeros(prev.width, prev.height);

    for by in (0..h).step_by(bs) {
        let bh = bs.min(h - by);
        for bx in (0..w).step_by(bs) {
            let bw = bs.min(w - bx);
            let src_sum = prev_int.rect(bx, by, bw, bh);
            let sad_at = |i: usize, limit: u32| -> u32 {
                let (du, dv) = offsets[i];
                let cx = ((bx + pad) as isize + du as isize) as usize;
                let cy = ((by + pad) as isize + dv as isize) as usize;
                if src_sum.abs_diff(cur_int.rect(cx, cy, bw, bh)) >= limit {
                    return u32::MAX;
                }
                let mut sad = 0u32;
                for row in 0..bh {
                    let a = &p[(by + row) * w + bx..][..bw];
                    let b = &c[(cy + row) * pw + cx..][..bw];
                    sad += a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u32).sum::<u32>();
                    if sad >= limit {
                        return u32::MAX;
                    }
                }
                sad
            };
            // Seed with the neighbours' winners; the ordered scan below still
            // lets earlier-ranked ties win, so the result stays exact.
            let mut best = u32::MAX;
            let mut best_rank = usize::MAX;
            let n = chosen.len();
            let left = (bx > 0).then(|| chosen[n - 1]);
            let above = (by > 0).then(|| chosen[n - cols]);
            for r in [left, above].into_iter().flatten() {
                let sad = sad_at(r, u32::MAX);
                if sad < best || (sad == best && r < best_rank) {
                    best = sad;
                    best_rank = r;
                }
            }
            for i in 0..offsets.len() {
                if i == best_rank {
                    continue;
                }
                let limit = if i < best_rank { best.saturating_add(1) } else { best };
                if limit == 0 {
                    break;
                }
                let sad = sad_at(i, limit);
                if sad < limit {
                    best = sad;
                    best_rank = i;
                }
            }
            chosen.push(best_rank);
            let best_d = offsets[best_rank];
            for row in by..by + bh {
                let span = row * w + bx..row * w + bx + bw;
                field.u[span.clone()].iter_mut().for_each(|x| *x = best_d.0 as f32);
                field.v[span].iter_mut().for_each(|x| *x = best_d.1 as f32);
            }
        }
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMatcher {
    pub block: u32,
    pub search: u32,
}

impl Default for BlockMatcher {
    fn default() -> Self {
        Self { block: 16, search: 24 }
    }
}

impl FlowEstimator for BlockMatcher {
    fn estimate(&self, prev: &Frame, cur: &Frame) -> Result<FlowField, FlowError> {
        block_match_flow(prev, cur, self.block, self.search)
    }

    fn name(&self) -> String {
        format!("blockmatch-{}-{}", self.block, self.search)
    }
}

/// External estimator: receives a two-frame FRAMESEQ on stdin and writes
/// `u32 width, u32 height` followed by `width * height` little-endian f32
/// `(u, v)` pairs, row-major.
#[derive(Debug, Clone)]
pub struct CommandEstimator {
    pub template: String,
}

impl FlowEstimator for CommandEstimator {
    fn estimate(&self, prev: &Frame, cur: &Frame) -> Result<FlowField, FlowError> {
        let fail = |message: String| FlowError::External {
            command: self.template.clone(),
            message,
        };
        let argv: Vec<&str> = self.template.split_whitespace().collect();
        let (program, args) = argv.split_first().ok_or_else(|| fail("empty command".into()))?;
        let pair = FrameSequence::new(prev.width, prev.height, 2.0, vec![prev.clone(), cur.clone()])?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || write_frameseq(&pair, &mut stdin));
        let output = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        writer
            .join()
            .map_err(|_| fail("stdin writer panicked".into()))?
            .map_err(|e| fail(format!("writing frames: {e}")))?;
        if !output.status.success() {
            return Err(fail(format!(
                "{}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let field = read_flow_grid(output.stdout.as_slice()).map_err(fail)?;
        if (field.width, field.height) != (prev.width, prev.height) {
            return Err(fail(format!(
                "returned {}x{} flow for {}x{} frames",
                field.width, field.height, prev.width, prev.height
            )));
        }
        if !field.is_finite() {
            return Err(fail("non-finite flow values".into()));
        }
        Ok(field)
    }

    fn name(&self) -> String {
        format!("cmd:{}", self.template)
    }
}

pub fn write_flow_grid<W: Write>(field: &FlowField, mut out: W) -> std::io::Result<()> {
    out.write_all(&field.width.to_le_bytes())?;
    out.write_all(&field.height.to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.u.len() * 8);
    for (u, v) in field.u.iter().zip(&field.v) {
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()
}

pub fn read_flow_grid<R: Read>(mut input: R) -> Result<FlowField, String> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| e.to_string())?;
    if bytes.len() < 8 {
        return Err("flow grid header truncated".into());
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let n = width as usize * height as usize;
    if bytes.len() != 8 + n * 8 {
        return Err(format!("flow grid {width}x{height} needs {} bytes, got {}", 8 + n * 8, bytes.len()));
    }
    let mut field = FlowField::zeros(width, height);
    for (i, pair) in bytes[8..].chunks_exact(8).enumerate() {
        field.u[i] = f32::from_le_bytes(pair[0..4].try_into().unwrap());
        field.v[i] = f32::from_le_bytes(pair[4..8].try_into().unwrap());
    }
    Ok(field)
}

/// Reference adapter: reads a two-frame FRAMESEQ, writes the block-matcher flow grid.
pub fn serve_flow_adapter<R: Read, W: Write>(input: R, output: W, matcher: BlockMatcher) -> Result<(), FlowError> {
    let seq = read_frameseq(input)?;
    if seq.len() != 2 {
        return Err(FlowError::TooFewFrames(seq.len()));
    }
    let field = matcher.estimate(&seq.frames[0], &seq.frames[1])?;
    write_flow_grid(&field, output).map_err(|e| FlowError::Frame(e.into()))
}

/// Builds the estimator named by `cfg.flow_estimator`.
pub fn estimator_from_config(cfg: &PipelineConfig) -> Box<dyn FlowEstimator> {
    match cfg.flow_estimator.strip_prefix("cmd:") {
        Some(template) => Box::new(CommandEstimator {
            template: template.to_string(),
        }),
        None => Box::new(BlockMatcher {
            block: cfg.flow_block,
            search: cfg.flow_search,
        }),
    }
}

/// Spatiotemporal mean flow magnitude at the configured rate and resolution.
pub fn mean_flow_magnitude(seq: &FrameSequence, est: &dyn FlowEstimator, cfg: &PipelineConfig) -> Result<f64, FlowError> {
    let sampled = sample_at_fps(seq, cfg.flow_fps)?;
    if sampled.len() < 2 {
        return Err(FlowError::TooFewFrames(sampled.len()));
    }
    let frames = sampled
        .frames
        .iter()
        .map(|f| resize(f, cfg.flow_width, cfg.flow_height))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = 0.0;
    for pair in frames.windows(2) {
        total += est.estimate(&pair[0], &pair[1])?.mean_magnitude();
    }
    Ok(total / (frames.len() - 1) as f64)
}

pub fn motion_verdict(seq: &FrameSequence, est: &dyn FlowEstimator, cfg: &PipelineConfig) -> FilterVerdict {
    match mean_flow_magnitude(seq, est, cfg) {
        Ok(mean) if mean >= cfg.flow_threshold => FilterVerdict::pass(
            Stage::Motion,
            Some(mean),
            format!("mean flow {mean:.2} >= {} ({})", cfg.flow_threshold, est.name()),
        ),
        Ok(mean) => FilterVerdict::reject(
            Stage::Motion,
            Some(mean),
            format!("mean flow {mean:.2} < {} ({})", cfg.flow_threshold, est.name()),
        ),
        Err(e) => FilterVerdict::error(Stage::Motion, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::synth::{SceneScript, Segment, SegmentKind, Texture};
    use crate::manifest::Outcome;
    use proptest::prelude::*;

    fn texture(seed: u64) -> Texture {
        Texture {
            seed,
            wavelength: 9.0,
            contrast: 100.0,
        }
    }

    /// Two frames of a textured field, the second shifted so content moves by `(du, dv)`.
    fn shifted_pair(w: u32, h: u32, du: i32, dv: i32, seed: u64) -> (Frame, Frame) {
        let seq = SceneScript {
            width: w,
            height: h,
            fps: 1.0,
            seed: 0,
            segments: vec![Segment {
                start_s: 0.0,
                end_s: 2.0,
                kind: SegmentKind::Pan {
                    texture: texture(seed),
                    vx: -du as f64,
                    vy: -dv as f64,
                },
                jitter: 0,
            }],
        }
        .render()
        .unwrap();
        (seq.frames[0].clone(), seq.frames[1].clone())
    }

    #[test]
    fn identical_frames_give_zero_field() {
        let (a, _) = shifted_pair(64, 64, 0, 0, 1);
        let f = block_match_flow(&a, &a, 16, 24).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
    }

    #[test]
    fn global_shift_recovered_on_interior_blocks() {
        let (a, b) = shifted_pair(128, 96, 8, 0, 2);
        let f = block_match_flow(&a, &b, 16, 24).unwrap();
        // Blocks whose match lies in frame: all but the rightmost column.
        for by in (0..96).step_by(16) {
            for bx in (0..112).step_by(16) {
                assert_eq!(f.at(bx, by), (8.0, 0.0), "block ({bx},{by})");
            }
        }
    }

    #[test]
    fn shift_beyond_window_is_clamped() {
        let (a, b) = shifted_pair(128, 96, 30, 0, 3);
        let f = block_match_flow(&a, &b, 16, 24).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|x| x.abs() <= 24.0));
        assert!(f.mean_magnitude() <= 24.0 * 2f64.sqrt());
    }

    #[test]
    fn smaller_than_block_errors() {
        let a = Frame::filled(8, 8, [0; 3]);
        assert!(matches!(block_match_flow(&a, &a, 16, 24), Err(FlowError::TooSmall(..))));
    }

    #[test]
    fn ties_prefer_smallest_offset() {
        // A flat frame matches everywhere; zero displacement must win.
        let a = Frame::filled(48, 48, [77; 3]);
        let f = block_match_flow(&a, &a, 16, 8).unwrap();
        assert_eq!(f.mean_magnitude(), 0.0);
        let order = candidate_offsets(1);
        assert_eq!(&order[..3], &[(0, 0), (-1, 0), (0, -1)]);
    }

    #[test]
    fn rotation_equivariance() {
        let (a, b) = shifted_pair(64, 64, 5, -3, 9);
        let f = block_match_flow(&a, &b, 16, 24).unwrap();
        let g = block_match_flow(&a.rotate_cw(), &b.rotate_cw(), 16, 24).unwrap();
        // Clockwise rotation maps (x, y) -> (H-1-y, x) and (u, v) -> (-v, u).
        // Interior blocks only: their true match is inside the frame.
        for by in (16..48).step_by(16) {
            for bx in (16..48).step_by(16) {
                let (u, v) = f.at(bx, by);
                assert_eq!((u, v), (5.0, -3.0));
                let (ru, rv) = g.at(63 - by, bx);
                assert_eq!((ru, rv), (-v, u));
            }
        }
    }

    struct ConstantFlow(f32);

    impl FlowEstimator for ConstantFlow {
        fn estimate(&self, prev: &Frame, _: &Frame) -> Result<FlowField, FlowError> {
            let mut f = FlowField::zeros(prev.width, prev.height);
            f.u.iter_mut().for_each(|x| *x = self.0);
            Ok(f)
        }
        fn name(&self) -> String {
            "constant".into()
        }
    }

    fn still(seconds: f64) -> FrameSequence {
        SceneScript {
            width: 32,
            height: 32,
            fps: 4.0,
            seed: 0,
            segments: vec![Segment {
                start_s: 0.0,
                end_s: seconds,
                kind: SegmentKind::Solid { color: [50; 3] },
                jitter: 0,
            }],
        }
        .render()
        .unwrap()
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            flow_width: 64,
            flow_height: 32,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn static_video_rejects_with_zero() {
        let v = motion_verdict(&still(10.0), &BlockMatcher::default(), &small_cfg());
        assert_eq!(v.outcome, Outcome::Reject);
        assert_eq!(v.score, Some(0.0));
    }

    #[test]
    fn single_sample_is_error() {
        let v = motion_verdict(&still(0.25), &BlockMatcher::default(), &small_cfg());
        assert_eq!(v.outcome, Outcome::Error);
    }

    #[test]
    fn flow_grid_round_trip() {
        let mut f = FlowField::zeros(3, 2);
        f.u[4] = 1.5;
        f.v[1] = -2.0;
        let mut buf = Vec::new();
        write_flow_grid(&f, &mut buf).unwrap();
        assert_eq!(read_flow_grid(buf.as_slice()).unwrap(), f);
        assert!(read_flow_grid(&buf[..buf.len() - 1]).is_err());
    }

    /// Unpruned exhaustive search in tie-break order.
    fn reference_flow(prev: &Frame, cur: &Frame, block: usize, search: i32) -> Vec<(i32, i32)> {
        let (w, h) = (prev.width as usize, prev.height as usize);
        let (p, c) = (prev.luma(), cur.luma());
        let at = |x: isize, y: isize| c[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
        let mut out = Vec::new();
        for by in (0..h).step_by(block) {
            for bx in (0..w).step_by(block) {
                let mut best = (u32::MAX, (0, 0));
                for d in candidate_offsets(search) {
                    let mut sad = 0u32;
                    for y in by..(by + block).min(h) {
                        for x in bx..(bx + block).min(w) {
                            sad += p[y * w + x].abs_diff(at(x as isize + d.0 as isize, y as isize + d.1 as isize)) as u32;
                        }
                    }
                    if sad < best.0 {
                        best = (sad, d);
                    }
                }
                out.push(best.1);
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn pruned_search_matches_reference(seed in 0u64..1000, w in 9u32..40, h in 9u32..30, levels in 2u8..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let step = 255 / (levels - 1);
            let mut noise = |n: usize| (0..n).map(|_| rng.gen_range(0..levels) * step).collect::<Vec<u8>>();
            let a = Frame::new(w, h, noise((w * h * 3) as usize)).unwrap();
            let b = Frame::new(w, h, noise((w * h * 3) as usize)).unwrap();
            let f = block_match_flow(&a, &b, 8, 5).unwrap();
            let got: Vec<(i32, i32)> = (0..h).step_by(8)
                .flat_map(|y| (0..w).step_by(8).map(move |x| (x, y)))
                .map(|(x, y)| { let (u, v) = f.at(x, y); (u as i32, v as i32) })
                .collect();
            prop_assert_eq!(got, reference_flow(&a, &b, 8, 5));
        }

        #[test]
        fn verdict_depends_only_on_magnitude(m in 0.0f32..60.0) {
            let cfg = small_cfg();
            let v = motion_verdict(&still(10.0), &ConstantFlow(m), &cfg);
            prop_assert_eq!(v.outcome == Outcome::Pass, m as f64 >= cfg.flow_threshold);
        }

        #[test]
        fn integer_shift_fidelity(du in -20i32..=20, dv in -20i32..=20, seed in 0u64..50) {
            let d = ((du * du + dv * dv) as f64).sqrt();
            prop_assume!(d >= 1.0 && d <= 20.0);
            let (a, b) = shifted_pair(256, 160, du, dv, seed);
            let m = block_match_flow(&a, &b, 16, 24).unwrap().mean_magnitude();
            prop_assert!(m >= 0.85 * d && m <= 1.15 * d, "shift ({du},{dv}) measured {m}");
        }
    }
}
