//! PGM images and the binary heatmap layer.
//!
//! Heatmap layer layout (all little-endian):
//!
//! | offset | type    | field                      |
//! |--------|---------|----------------------------|
//! | 0      | u32     | width (pixels)             |
//! | 4      | u32     | height (pixels)            |
//! | 8      | f64     | pixel size (mm)            |
//! | 16     | u32 × N | hit counts, row-major, row 0 at minimum v |
//!
//! Dose is `count × fluence`; the fluence travels with the plan.

use thiserror::Error;

use super::{DoseMap, PixelLabel, RasterMask};

const HEADER_LEN: usize = 16;

impl RasterMask {
    /// 8-bit binary PGM: outside = 0, excluded = 128, operable = 255. Row 0 is the
    /// first image row.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.labels.iter().map(|l| match l {
            PixelLabel::Outside => 0u8,
            PixelLabel::Excluded => 128,
            PixelLabel::Operable => 255,
        }));
        out
    }
}

impl DoseMap {
    /// 8-bit binary PGM scaled as `gray = round(255 × count / max_count)`; the
    /// header comment records the dose of full white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.max_count();
        let mut out = format!(
            "P5\n# gray = round(255 * dose / max_dose); max_dose = {} mJ/cm^2\n{} {}\n255\n",
            max as f64 * self.fluence,
            self.hits.width,
            self.hits.height
        )
        .into_bytes();
        out.extend(self.hits.counts.iter().map(|&n| {
            if max == 0 {
                0
            } else {
                ((n as f64 * 255.0 / max as f64).round()) as u8
            }
        }));
        out
    }

    pub fn heatmap_layer(&self) -> HeatmapLayer {
        HeatmapLayer {
            width: self.hits.width as u32,
            height: self.hits.height as u32,
            pixel_size: self.mask.pixel_size,
            counts: self.hits.counts.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapLayer {
    pub width: u32,
    pub height: u32,
    pub pixel_size: f64,
    pub counts: Vec<u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeatmapParseError {
    #[error("heatmap layer is shorter than its {0}-byte header")]
    Truncated(usize),
    #[error("heatmap payload holds {got} bytes, expected {expected}")]
    PayloadSize { got: usize, expected: usize },
}

impl HeatmapLayer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.counts.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.pixel_size.to_le_bytes());
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HeatmapParseError> {
        if bytes.len() < HEADER_LEN {
            return Err(HeatmapParseError::Truncated(HEADER_LEN));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let width = word(0);
        let height = word(4);
        let pixel_size = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let expected = width as usize * height as usize * 4;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(HeatmapParseError::PayloadSize { got: payload.len(), expected });
        }
        let counts = payload.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { width, height, pixel_size, counts })
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_layout_is_little_endian() {
        let layer = HeatmapLayer { width: 2, height: 1, pixel_size: 0.5, counts: vec![1, 258] };
        let bytes = layer.to_bytes();
        assert_eq!(&bytes[0..4], &[2, 0, 0, 0]);
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &0.5f64.to_le_bytes());
        assert_eq!(&bytes[16..], &[1, 0, 0, 0, 2, 1, 0, 0]);
        assert_eq!(HeatmapLayer::from_bytes(&bytes).unwrap(), layer);
        assert_eq!(HeatmapLayer::from_bytes(&bytes[..20]), Err(HeatmapParseError::PayloadSize { got: 4, expected: 8 }));
    }
}
