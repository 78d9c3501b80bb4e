use super::Frame;

/// Per-pixel HSV with every channel on a 0..=255 scale.
///
/// Hue maps [0°, 360°) onto [0, 256) and wraps, so hue differences are
/// measured on a circle of circumference 256.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HsvFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor() as u32
}

pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> [u8; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = (max - min) as f64;
    let v = max;
    if max == 0 {
        return [0, 0, 0];
    }
    let s = round_half_up(delta * 255.0 / max as f64) as u8;
    if delta == 0.0 {
        return [0, s, v];
    }
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let degrees = if max as f64 == r {
        (60.0 * (g - b) / delta).rem_euclid(360.0)
    } else if max as f64 == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = (round_half_up(degrees * 256.0 / 360.0) % 256) as u8;
    [h, s, v]
}

pub fn to_hsv(frame: &Frame) -> HsvFrame {
    let data = frame
        .data
        .chunks_exact(3)
        .flat_map(|p| rgb_to_hsv([p[0], p[1], p[2]]))
        .collect();
    HsvFrame {
        width: frame.width,
        height: frame.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_colors() {
        assert_eq!(rgb_to_hsv([0, 0, 0]), [0, 0, 0]);
        assert_eq!(rgb_to_hsv([255, 255, 255]), [0, 0, 255]);
        assert_eq!(rgb_to_hsv([255, 0, 0]), [0, 255, 255]);
        // 120° and 240° land on 85.33 and 170.67 of 256.
        assert_eq!(rgb_to_hsv([0, 255, 0]), [85, 255, 255]);
        assert_eq!(rgb_to_hsv([0, 0, 255]), [171, 255, 255]);
        assert_eq!(rgb_to_hsv([128, 128, 128]), [0, 0, 128]);
    }

    #[test]
    fn hue_wraps_below_red() {
        // 359.x degrees rounds to 256, which wraps to 0.
        assert_eq!(rgb_to_hsv([255, 0, 1])[0], 0);
    }

    #[test]
    fn frame_conversion_keeps_dims() {
        let hsv = to_hsv(&Frame::filled(3, 2, [255, 0, 0]));
        assert_eq!((hsv.width, hsv.height, hsv.data.len()), (3, 2, 18));
    }
}
