//! Deterministic synthetic videos for tests and benchmarks.
//!
//! A [`SceneScript`] lists timed, non-overlapping segments. Frame `i` shows
//! the segment whose `[start_s, end_s)` contains `i / fps`; uncovered time is
//! black. Scripts are plain JSON:
//!
//! ```json
//! {"width": 320, "height": 180, "fps": 24, "seed": 1,
//!  "segments": [
//!    {"start_s": 0, "end_s": 5, "kind": "solid", "color": [0, 0, 0]},
//!    {"start_s": 5, "end_s": 10, "kind": "fade", "from": [0, 0, 0], "to": [255, 255, 255]}
//!  ]}
//! ```

use serde::{Deserialize, Serialize};

use super::{Frame, FrameError, FrameSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    #[serde(default)]
    pub seed: u64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    #[serde(flatten)]
    pub kind: SegmentKind,
    /// Amplitude of per-pixel uniform noise added to every frame (0 = none).
    #[serde(default)]
    pub jitter: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Solid {
        color: [u8; 3],
    },
    /// Linear RGB interpolation across the segment.
    Fade {
        from: [u8; 3],
        to: [u8; 3],
    },
    /// A rectangle moving over a solid background, velocity in px per frame.
    Rect {
        background: [u8; 3],
        color: [u8; 3],
        x: f64,
        y: f64,
        w: u32,
        h: u32,
        vx: f64,
        vy: f64,
    },
    /// A textured field translated by `round(v * n)` px at segment frame `n`.
    /// Content moves toward negative x for positive `vx`.
    Pan {
        texture: Texture,
        vx: f64,
        vy: f64,
    },
}

/// Sum of oriented sinusoids per channel; smooth for long wavelengths,
/// busy enough for block matching at short ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    #[serde(default)]
    pub seed: u64,
    /// Shortest wavelength in px; components range up to 4x this.
    pub wavelength: f64,
    /// Peak deviation from mid-gray.
    #[serde(default = "default_contrast")]
    pub contrast: f64,
}

fn default_contrast() -> f64 {
    90.0
}

impl SceneScript {
    pub fn from_json(text: &str) -> Result<Self, FrameError> {
        serde_json::from_str(text).map_err(|e| FrameError::Script(e.to_string()))
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.end_s).fold(0.0, f64::max)
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s() * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.width == 0 || self.height == 0 {
            return Err(FrameError::Script(format!("dimensions {}x{}", self.width, self.height)));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(FrameError::Script(format!("fps {}", self.fps)));
        }
        let mut spans: Vec<(f64, f64)> = self.segments.iter().map(|s| (s.start_s, s.end_s)).collect();
        for &(a, b) in &spans {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b) {
                return Err(FrameError::Script(format!("bad segment span [{a}, {b})")));
            }
        }
        spans.sort_by(|x, y| x.0.total_cmp(&y.0));
        if let Some(w) = spans.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(FrameError::Script(format!(
                "segments [{}, {}) and [{}, {}) overlap",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
        Ok(())
    }

    pub fn render(&self) -> Result<FrameSequence, FrameError> {
        self.validate()?;
        let painters: Vec<Painter> = self
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| Painter::new(s, self, i as u64))
            .collect();
        let frames = (0..self.frame_count())
            .map(|i| {
                let t = i as f64 / self.fps;
                match painters.iter().find(|p| p.seg.start_s <= t && t < p.seg.end_s) {
                    Some(p) => p.paint(i, t),
                    None => Frame::filled(self.width, self.height, [0, 0, 0]),
                }
            })
            .collect();
        FrameSequence::new(self.width, self.height, self.fps, frames)
    }
}

struct Painter<'a> {
    seg: &'a Segment,
    width: u32,
    height: u32,
    fps: f64,
    noise_seed: u64,
    field: Option<TextureField>,
}

impl<'a> Painter<'a> {
    fn new(seg: &'a Segment, script: &SceneScript, index: u64) -> Self {
        let field = match &seg.kind {
            SegmentKind::Pan { texture, .. } => Some(TextureField::new(texture)),
            _ => None,
        };
        Self {
            seg,
            width: script.width,
            height: script.height,
            fps: script.fps,
            noise_seed: splitmix(script.seed ^ splitmix(index + 1)),
            field,
        }
    }

    fn local_frame(&self, t: f64) -> f64 {
        ((t - self.seg.start_s) * self.fps).round()
    }

    fn paint(&self, frame_index: usize, t: f64) -> Frame {
        let (w, h) = (self.width, self.height);
        let mut frame = match &self.seg.kind {
            SegmentKind::Solid { color } => Frame::filled(w, h, *color),
            SegmentKind::Fade { from, to } => {
                let p = (t - self.seg.start_s) / (self.seg.end_s - self.seg.start_s);
                let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * p).round().clamp(0.0, 255.0) as u8;
                Frame::filled(w, h, [mix(from[0], to[0]), mix(from[1], to[1]), mix(from[2], to[2])])
            }
            SegmentKind::Rect {
                background,
                color,
                x,
                y,
                w: rw,
                h: rh,
                vx,
                vy,
            } => {
                let n = self.local_frame(t);
                let mut f = Frame::filled(w, h, *background);
                let x0 = (x + vx * n).round() as i64;
                let y0 = (y + vy * n).round() as i64;
                let xs = x0.max(0)..(x0 + *rw as i64).min(w as i64);
                let ys = y0.max(0)..(y0 + *rh as i64).min(h as i64);
                for py in ys {
                    for px in xs.clone() {
                        let i = (py as usize * w as usize + px as usize) * 3;
                        f.data[i..i + 3].copy_from_slice(color);
                    }
                }
                f
            }
            SegmentKind::Pan { vx, vy, .. } => {
                let n = self.local_frame(t);
                let dx = (vx * n).round() as i64;
                let dy = (vy * n).round() as i64;
                self.field.as_ref().expect("pan has a field").window(w, h, dx, dy)
            }
        };
        if self.seg.jitter > 0 {
            let amp = self.seg.jitter as i32;
            let base = splitmix(self.noise_seed ^ (frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for (k, v) in frame.data.iter_mut().enumerate() {
                let r = splitmix(base ^ k as u64);
                let n = (r % (2 * amp as u64 + 1)) as i32 - amp;
                *v = (*v as i32 + n).clamp(0, 255) as u8;
            }
        }
        frame
    }
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: [f64; 3],
}

struct TextureField {
    waves: Vec<Wave>,
}

impl TextureField {
    const WAVES: usize = 6;

    fn new(tex: &Texture) -> Self {
        let mut state = splitmix(tex.seed.wrapping_add(0xA5A5));
        let mut next = || {
            state = splitmix(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let norm = tex.contrast / Self::WAVES as f64 * 2.0;
        let waves = (0..Self::WAVES)
            .map(|_| {
                let angle = next() * std::f64::consts::PI;
                let wavelength = tex.wavelength * (1.0 + 3.0 * next());
                let k = std::f64::consts::TAU / wavelength;
                let phase = next() * std::f64::consts::TAU;
                let amp = [
                    norm * (0.5 + next()),
                    norm * (0.5 + next()),
                    norm * (0.5 + next()),
                ];
                Wave {
                    kx: k * angle.cos(),
                    ky: k * angle.sin(),
                    phase,
                    amp,
                }
            })
            .collect();
        Self { waves }
    }

    /// The `w x h` window whose top-left sits at field coordinate `(dx, dy)`.
    fn window(&self, w: u32, h: u32, dx: i64, dy: i64) -> Frame {
        let (w, h) = (w as usize, h as usize);
        // sin(a + b) = sin a cos b + cos a sin b, with a along x and b along y.
        let tables: Vec<([Vec<f64>; 2], [Vec<f64>; 2])> = self
            .waves
            .iter()
            .map(|wave| {
                let xs: Vec<f64> = (0..w).map(|x| wave.kx * (x as i64 + dx) as f64 + wave.phase).collect();
                let ys: Vec<f64> = (0..h).map(|y| wave.ky * (y as i64 + dy) as f64).collect();
                (
                    [xs.iter().map(|a| a.sin()).collect(), xs.iter().map(|a| a.cos()).collect()],
                    [ys.iter().map(|b| b.sin()).collect(), ys.iter().map(|b| b.cos()).collect()],
                )
            })
            .collect();
        let mut data = vec![0u8; w * h * 3];
        let mut row = vec![[0f64; 3]; w];
        for y in 0..h {
            row.iter_mut().for_each(|p| *p = [128.0; 3]);
            for (wave, ([sx, cx], [sy, cy])) in self.waves.iter().zip(&tables) {
                let (sb, cb) = (sy[y], cy[y]);
                for (x, p) in row.iter_mut().enumerate() {
                    let v = sx[x] * cb + cx[x] * sb;
                    p[0] += wave.amp[0] * v;
                    p[1] += wave.amp[1] * v;
                    p[2] += wave.amp[2] * v;
                }
            }
            for (x, p) in row.iter().enumerate() {
                let i = (y * w + x) * 3;
                for c in 0..3 {
                    data[i + c] = p[c].round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        Frame {
            width: w as u32,
            height: h as u32,
            data,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
