//! Block-averaged, rate-limited image stream for remote viewing.

use super::VisionError;
use crate::messages::ImageMsg;

pub fn downscale(image: &ImageMsg, factor: u32) -> Result<ImageMsg, VisionError> {
    if ![2, 4, 8].contains(&factor) {
        return Err(VisionError::Factor(factor));
    }
    let (w, h) = (image.width as usize, image.height as usize);
    let f = factor as usize;
    if image.data.len() != w * h * 3 || w % f != 0 || h % f != 0 {
        return Err(VisionError::Dimension(format!("{w}x{h} not divisible by {f}")));
    }
    let (ow, oh) = (w / f, h / f);
    let mut data = Vec::with_capacity(ow * oh * 3);
    for by in 0..oh {
        for bx in 0..ow {
            let mut sum = [0u32; 3];
            for y in by * f..(by + 1) * f {
                for x in bx * f..(bx + 1) * f {
                    let i = (y * w + x) * 3;
                    for c in 0..3 {
                        sum[c] += image.data[i + c] as u32;
                    }
                }
            }
            let n = (f * f) as u32;
            data.extend(sum.iter().map(|s| ((s + n / 2) / n) as u8));
        }
    }
    Ok(ImageMsg {
        width: ow as u32,
        height: oh as u32,
        data,
    })
}

/// Emits at most `max_rate` frames per second; a frame is emitted as soon as
/// the interval since the last emission has elapsed, others are dropped.
#[derive(Debug, Clone)]
pub struct Downscaler {
    factor: u32,
    min_interval: f64,
    last: Option<f64>,
}

impl Downscaler {
    pub fn new(factor: u32, max_rate: f64) -> Result<Self, VisionError> {
        if ![2, 4, 8].contains(&factor) {
            return Err(VisionError::Factor(factor));
        }
        if !(max_rate > 0.0) {
            return Err(VisionError::Parse("max rate must be positive".into()));
        }
        Ok(Self {
            factor,
            min_interval: 1.0 / max_rate,
            last: None,
        })
    }

    pub fn push(&mut self, image: &ImageMsg, stamp: f64) -> Result<Option<ImageMsg>, VisionError> {
        if let Some(t) = self.last {
            // small slack so a 5 Hz limit accepts frames stamped exactly 0.2 s apart
            if stamp - t < self.min_interval - 1e-9 {
                return Ok(None);
            }
        }
        let out = downscale(image, self.factor)?;
        self.last = Some(stamp);
        Ok(Some(out))
    }
}
