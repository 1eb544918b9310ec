//! Per-pixel classification and ×4 block voting into binary class images.

use super::lut::{ColorClass, ColorLut};
use super::VisionError;
use crate::messages::ImageMsg;

pub const BLOCK: usize = 4;
/// Votes out of 16 needed to set a subsampled bit.
pub const VOTE_THRESHOLD: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub class: ColorClass,
    pub bits: Vec<bool>,
}

impl BinaryImage {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub width: usize,
    pub height: usize,
    /// full-resolution class codes, row-major
    pub classes: Vec<u8>,
    /// one image per real class, in `ColorClass::PRIORITY` order
    pub binaries: Vec<BinaryImage>,
}

impl Segmentation {
    pub fn binary(&self, class: ColorClass) -> &BinaryImage {
        &self.binaries[class as usize - 1]
    }

    pub fn class_at(&self, x: usize, y: usize) -> u8 {
        self.classes[y * self.width + x]
    }
}

pub fn solid_image(width: u32, height: u32, yuv: [u8; 3]) -> ImageMsg {
    ImageMsg {
        width,
        height,
        data: yuv
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect(),
    }
}

/// Classifies every pixel and sets a block bit for class c iff at least 8 of
/// its 16 pixels are c; an 8/8 tie goes to the higher-priority class.
pub fn segment(image: &ImageMsg, lut: &ColorLut, expect: Option<(u32, u32)>) -> Result<Segmentation, VisionError> {
    let (w, h) = (image.width as usize, image.height as usize);
    if let Some((ew, eh)) = expect {
        if (image.width, image.height) != (ew, eh) {
            return Err(VisionError::Dimension(format!(
                "image is {}x{}, expected {ew}x{eh}",
                image.width, image.height
            )));
        }
    }
    if image.data.len() != w * h * 3 || w % BLOCK != 0 || h % BLOCK != 0 || w == 0 || h == 0 {
        return Err(VisionError::Dimension(format!("bad image buffer for {w}x{h}")));
    }
    let classes: Vec<u8> = image.data.chunks_exact(3).map(|p| lut.code(p[0], p[1], p[2])).collect();
    let (bw, bh) = (w / BLOCK, h / BLOCK);
    let mut binaries: Vec<BinaryImage> = ColorClass::PRIORITY
        .iter()
        .map(|&class| BinaryImage {
            width: bw,
            height: bh,
            class,
            bits: vec![false; bw * bh],
        })
        .collect();
    for by in 0..bh {
        for bx in 0..bw {
            let mut votes = [0u8; 6];
            for y in by * BLOCK..(by + 1) * BLOCK {
                for x in bx * BLOCK..(bx + 1) * BLOCK {
                    votes[classes[y * w + x] as usize] += 1;
                }
            }
            // PRIORITY order makes the first qualifying class win a tie
            if let Some(k) = ColorClass::PRIORITY
                .iter()
                .position(|&c| votes[c as usize] >= VOTE_THRESHOLD)
            {
                binaries[k].bits[by * bw + bx] = true;
            }
        }
    }
    Ok(Segmentation {
        width: w,
        height: h,
        classes,
        binaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_orange() {
        let lut = ColorLut::default();
        let img = solid_image(800, 600, ColorClass::Orange.nominal_yuv());
        let s = segment(&img, &lut, Some((800, 600))).unwrap();
        assert_eq!(s.binary(ColorClass::Orange).count(), 200 * 150);
        for c in &ColorClass::PRIORITY[1..] {
            assert_eq!(s.binary(*c).count(), 0);
        }
        let small = solid_image(8, 8, [0; 3]);
        assert!(matches!(
            segment(&small, &lut, Some((800, 600))),
            Err(VisionError::Dimension(_))
        ));
    }

    fn block(orange: usize, other: ColorClass) -> ImageMsg {
        let mut img = solid_image(4, 4, other.nominal_yuv());
        for k in 0..orange {
            img.data[k * 3..k * 3 + 3].copy_from_slice(&ColorClass::Orange.nominal_yuv());
        }
        img
    }

    #[test]
    fn vote_threshold_and_tie_break() {
        let lut = ColorLut::default();
        let s = segment(&block(9, ColorClass::None), &lut, None).unwrap();
        assert!(s.binary(ColorClass::Orange).get(0, 0));
        let s = segment(&block(7, ColorClass::None), &lut, None).unwrap();
        assert!(!s.binary(ColorClass::Orange).get(0, 0));
        let s = segment(&block(8, ColorClass::Yellow), &lut, None).unwrap();
        assert!(s.binary(ColorClass::Orange).get(0, 0));
        assert!(!s.binary(ColorClass::Yellow).get(0, 0));
    }
}
