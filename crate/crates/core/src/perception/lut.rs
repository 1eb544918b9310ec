//! Color classes and the 64×64×64 YUV lookup table.
//!
//! File layout: 262144 bytes, one class code per cell, cell index
//! `(y >> 2) << 12 | (u >> 2) << 6 | (v >> 2)`.

use super::VisionError;
use serde::Deserialize;
use std::path::Path;

pub const LUT_SIZE: usize = 64 * 64 * 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ColorClass {
    None = 0,
    Orange = 1,
    Yellow = 2,
    Green = 3,
    White = 4,
    Black = 5,
}

impl ColorClass {
    /// Real classes in tie-break priority order.
    pub const PRIORITY: [ColorClass; 5] = [
        ColorClass::Orange,
        ColorClass::Yellow,
        ColorClass::Green,
        ColorClass::White,
        ColorClass::Black,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ColorClass::None,
            1 => ColorClass::Orange,
            2 => ColorClass::Yellow,
            3 => ColorClass::Green,
            4 => ColorClass::White,
            5 => ColorClass::Black,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorClass::None => "none",
            ColorClass::Orange => "orange",
            ColorClass::Yellow => "yellow",
            ColorClass::Green => "green",
            ColorClass::White => "white",
            ColorClass::Black => "black",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        (0..=5).filter_map(Self::from_code).find(|c| c.name() == name)
    }

    /// Nominal YUV used by the renderer; `None` is the off-field background.
    pub fn nominal_yuv(self) -> [u8; 3] {
        match self {
            ColorClass::None => [128, 190, 60],
            ColorClass::Orange => [140, 70, 210],
            ColorClass::Yellow => [190, 30, 150],
            ColorClass::Green => [90, 110, 100],
            ColorClass::White => [225, 128, 128],
            ColorClass::Black => [25, 128, 128],
        }
    }
}

pub fn lut_index(y: u8, u: u8, v: u8) -> usize {
    ((y as usize >> 2) << 12) | ((u as usize >> 2) << 6) | (v as usize >> 2)
}

#[derive(Clone, PartialEq)]
pub struct ColorLut {
    table: Vec<u8>,
}

impl std::fmt::Debug for ColorLut {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut counts = [0usize; 6];
        for &c in &self.table {
            counts[c as usize] += 1;
        }
        f.debug_struct("ColorLut").field("class_counts", &counts).finish()
    }
}

/// One labeled pixel for calibration (CSV columns `class,y,u,v`).
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct LabeledSample {
    #[serde(deserialize_with = "de_class")]
    pub class: ColorClass,
    pub y: u8,
    pub u: u8,
    pub v: u8,
}

fn de_class<'de, D: serde::Deserializer<'de>>(d: D) -> Result<ColorClass, D::Error> {
    let s = String::deserialize(d)?;
    ColorClass::parse(s.trim()).ok_or_else(|| serde::de::Error::custom(format!("unknown color class `{s}`")))
}

pub fn read_samples(path: &Path) -> Result<Vec<LabeledSample>, VisionError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| VisionError::Io(e.to_string()))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| VisionError::Parse(e.to_string())))
        .collect()
}

impl Default for ColorLut {
    /// Table built from the nominal class colors with radius 40.
    fn default() -> Self {
        let samples: Vec<LabeledSample> = ColorClass::PRIORITY
            .iter()
            .map(|&class| {
                let [y, u, v] = class.nominal_yuv();
                LabeledSample { class, y, u, v }
            })
            .collect();
        Self::fit(&samples, &[40.0; 6]).expect("nominal samples cover every class")
    }
}

impl ColorLut {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VisionError> {
        if bytes.len() != LUT_SIZE {
            return Err(VisionError::Dimension(format!(
                "lut has {} bytes, expected {LUT_SIZE}",
                bytes.len()
            )));
        }
        if let Some(bad) = bytes.iter().find(|&&b| b > 5) {
            return Err(VisionError::Parse(format!("invalid class code {bad}")));
        }
        Ok(Self { table: bytes.to_vec() })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.table
    }

    pub fn load(path: &Path) -> Result<Self, VisionError> {
        let bytes = std::fs::read(path).map_err(|e| VisionError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), VisionError> {
        std::fs::write(path, &self.table).map_err(|e| VisionError::Io(format!("{}: {e}", path.display())))
    }

    pub fn classify(&self, y: u8, u: u8, v: u8) -> ColorClass {
        ColorClass::from_code(self.table[lut_index(y, u, v)]).unwrap_or(ColorClass::None)
    }

    pub fn code(&self, y: u8, u: u8, v: u8) -> u8 {
        self.table[lut_index(y, u, v)]
    }

    pub fn set(&mut self, y: u8, u: u8, v: u8, class: ColorClass) {
        self.table[lut_index(y, u, v)] = class as u8;
    }

    /// Fits a table from labeled samples: each cell takes the class whose
    /// sample mean is nearest, provided it lies within that class's radius
    /// (indexed by class code). Samples labeled `none` are ignored.
    pub fn fit(samples: &[LabeledSample], radius: &[f64; 6]) -> Result<Self, VisionError> {
        let mut sums = [[0.0f64; 4]; 6];
        for s in samples {
            let acc = &mut sums[s.class as usize];
            acc[0] += s.y as f64;
            acc[1] += s.u as f64;
            acc[2] += s.v as f64;
            acc[3] += 1.0;
        }
        let centers: Vec<(u8, [f64; 3], f64)> = (1..6)
            .filter(|&c| sums[c][3] > 0.0)
            .map(|c| {
                let n = sums[c][3];
                (c as u8, [sums[c][0] / n, sums[c][1] / n, sums[c][2] / n], radius[c])
            })
            .collect();
        if centers.is_empty() {
            return Err(VisionError::Parse("no labeled samples".into()));
        }
        let mut table = vec![0u8; LUT_SIZE];
        for (idx, cell) in table.iter_mut().enumerate() {
            let p = [
                ((idx >> 12) * 4 + 2) as f64,
                (((idx >> 6) & 63) * 4 + 2) as f64,
                ((idx & 63) * 4 + 2) as f64,
            ];
            let mut best = (f64::INFINITY, 0u8);
            for &(code, c, r) in &centers {
                let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
                if d <= r && d < best.0 {
                    best = (d, code);
                }
            }
            *cell = best.1;
        }
        Ok(Self { table })
    }
}
