//! Raw RGB frame sequences: container I/O, sampling, resizing, color
//! conversion and synthetic fixtures.

mod container;
mod hsv;
mod resize;
mod sample;
pub mod synth;

pub use container::{decode, read_frameseq, write_frameseq, FrameSource, MAGIC};
pub use hsv::{rgb_to_hsv, to_hsv, HsvFrame};
pub use resize::{downscale_to_max_dim, resize};
pub use sample::{sample_at_fps, sample_uniform, uniform_indices};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("decoder `{command}` failed ({status}): {stderr}")]
    Decode {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("cannot spawn decoder `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("FRAMESEQ format error: {0}")]
    Format(String),
    #[error("FRAMESEQ truncated: header declares {declared} frames, {present} present")]
    Truncated { declared: u64, present: u64 },
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error("synthetic script error: {0}")]
    Script(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// One RGB24 frame, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::Dimensions(format!("{width}x{height}")));
        }
        let want = width as usize * height as usize * 3;
        if data.len() != want {
            return Err(FrameError::Dimensions(format!(
                "{width}x{height} frame needs {want} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb.repeat(width as usize * height as usize);
        Self { width, height, data }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// BT.601 luma, integer weights summing to 256.
    pub fn luma(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .map(|p| ((77 * p[0] as u32 + 150 * p[1] as u32 + 29 * p[2] as u32 + 128) >> 8) as u8)
            .collect()
    }

    /// Rotates 90 degrees clockwise.
    pub fn rotate_cw(&self) -> Frame {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut data = vec![0u8; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (h - 1 - y, x);
                let src = (y * w + x) * 3;
                let dst = (ny * h + nx) * 3;
                data[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
            }
        }
        Frame {
            width: self.height,
            height: self.width,
            data,
        }
    }

    /// Encodes as an 8-bit RGB PNG.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("png header to memory");
            writer.write_image_data(&self.data).expect("png data to memory");
        }
        out
    }
}

/// A decoded video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(width: u32, height: u32, fps: f64, frames: Vec<Frame>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::Dimensions(format!("{width}x{height}")));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(FrameError::Dimensions(format!("fps must be positive, got {fps}")));
        }
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width != width || f.height != height || f.data.len() != f.pixel_count() * 3)
        {
            return Err(FrameError::Dimensions(format!(
                "frame {i} is {}x{}, sequence is {width}x{height}",
                f.width, f.height
            )));
        }
        Ok(Self {
            width,
            height,
            fps,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }
}
