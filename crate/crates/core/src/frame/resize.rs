use super::{Frame, FrameError};

/// Source taps for one output coordinate: `(first source index, weights)`.
struct Taps {
    start: usize,
    weights: Vec<f32>,
}

/// Exact box-filter coverage of `dst` output cells over `src` input cells.
///
/// Working in units of `1 / (src * dst)`, output cell `t` spans
/// `[t * src, (t + 1) * src)` and input cell `s` spans `[s * dst, (s + 1) * dst)`;
/// each weight is the integer overlap divided by `src`.
fn taps(src: usize, dst: usize) -> Vec<Taps> {
    (0..dst)
        .map(|t| {
            let lo = t * src;
            let hi = (t + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            let weights = (first..=last)
                .map(|s| {
                    let overlap = hi.min((s + 1) * dst) - lo.max(s * dst);
                    overlap as f32 / src as f32
                })
                .collect();
            Taps { start: first, weights }
        })
        .collect()
}

/// Area-averaging resize. Same-size input returns an identical frame.
pub fn resize(frame: &Frame, new_w: u32, new_h: u32) -> Result<Frame, FrameError> {
    if new_w == 0 || new_h == 0 {
        return Err(FrameError::Dimensions(format!("resize target {new_w}x{new_h}")));
    }
    if (new_w, new_h) == (frame.width, frame.height) {
        return Ok(frame.clone());
    }
    let (sw, sh) = (frame.width as usize, frame.height as usize);
    let (tw, th) = (new_w as usize, new_h as usize);
    let xt = taps(sw, tw);
    let yt = taps(sh, th);

    // Horizontal pass into f32 rows.
    let mut horiz = vec![0f32; tw * sh * 3];
    for y in 0..sh {
        let src = &frame.data[y * sw * 3..(y + 1) * sw * 3];
        let dst = &mut horiz[y * tw * 3..(y + 1) * tw * 3];
        for (x, tap) in xt.iter().enumerate() {
            let mut acc = [0f32; 3];
            for (k, &w) in tap.weights.iter().enumerate() {
                let p = (tap.start + k) * 3;
                acc[0] += w * src[p] as f32;
                acc[1] += w * src[p + 1] as f32;
                acc[2] += w * src[p + 2] as f32;
            }
            dst[x * 3..x * 3 + 3].copy_from_slice(&acc);
        }
    }

    let row_len = tw * 3;
    let mut out = vec![0u8; th * row_len];
    let mut acc = vec![0f32; row_len];
    for (y, tap) in yt.iter().enumerate() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (k, &w) in tap.weights.iter().enumerate() {
            let row = &horiz[(tap.start + k) * row_len..(tap.start + k + 1) * row_len];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += w * v;
            }
        }
        for (o, &a) in out[y * row_len..(y + 1) * row_len].iter_mut().zip(&acc) {
            *o = (a + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    Frame::new(new_w, new_h, out)
}

/// Shrinks by the smallest integer factor that brings the shorter side to at
/// most `max_dim`. Frames already small enough are returned unchanged.
pub fn downscale_to_max_dim(frame: &Frame, max_dim: u32) -> Result<Frame, FrameError> {
    let short = frame.width.min(frame.height);
    if short <= max_dim {
        return Ok(frame.clone());
    }
    let factor = short.div_ceil(max_dim.max(1));
    resize(
        frame,
        (frame.width / factor).max(1),
        (frame.height / factor).max(1),
    )
}
