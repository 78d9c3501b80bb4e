use super::{Frame, FrameError, FrameSequence};

/// Temporal resampling: output frame `k` is source frame `floor(k * fps / target)`.
pub fn sample_at_fps(seq: &FrameSequence, target_fps: f64) -> Result<FrameSequence, FrameError> {
    if !(target_fps.is_finite() && target_fps > 0.0) {
        return Err(FrameError::Sampling(format!("target fps {target_fps} is not positive")));
    }
    if target_fps > seq.fps * (1.0 + 1e-12) {
        return Err(FrameError::Sampling(format!(
            "target fps {target_fps} exceeds source fps {}",
            seq.fps
        )));
    }
    let step = seq.fps / target_fps;
    let frames = (0u64..)
        .map(|k| (k as f64 * step + 1e-9).floor() as usize)
        .take_while(|&i| i < seq.len())
        .map(|i| seq.frames[i].clone())
        .collect();
    FrameSequence::new(seq.width, seq.height, target_fps, frames)
}

/// Indices `round(i * (count - 1) / (n - 1))`; for `n == 1` the middle frame.
pub fn uniform_indices(count: usize, n: usize) -> Vec<usize> {
    if count == 0 || n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![count / 2];
    }
    let span = (count - 1) as u64;
    let div = (n - 1) as u64;
    (0..n as u64)
        .map(|i| ((2 * i * span + div) / (2 * div)) as usize)
        .collect()
}

pub fn sample_uniform(seq: &FrameSequence, n: usize) -> Result<Vec<Frame>, FrameError> {
    sample_uniform_frames(&seq.frames, n)
}

pub(crate) fn sample_uniform_frames(frames: &[Frame], n: usize) -> Result<Vec<Frame>, FrameError> {
    if frames.is_empty() {
        return Err(FrameError::Sampling("cannot sample from an empty sequence".into()));
    }
    if n == 0 {
        return Err(FrameError::Sampling("sample count must be at least 1".into()));
    }
    Ok(uniform_indices(frames.len(), n)
        .into_iter()
        .map(|i| frames[i].clone())
        .collect())
}
