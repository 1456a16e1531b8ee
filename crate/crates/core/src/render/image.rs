use std::path::Path;

use super::RenderError;

/// RGB raster with an optional depth channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    /// Depth of the most-contributing splat; `0` where nothing was hit.
    pub depth: Option<Vec<f64>>,
}

pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self {
            width,
            height,
            rgb: vec![rgb; width * height],
            depth: None,
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.rgb[self.idx(x, y)]
    }

    pub fn depth_at(&self, x: usize, y: usize) -> Option<f64> {
        self.depth.as_ref().map(|d| d[self.idx(x, y)])
    }

    pub fn luma(&self) -> Vec<f64> {
        self.rgb
            .iter()
            .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
            .collect()
    }

    /// Multiplies every channel by `factor`, clamping to `[0, 1]`.
    pub fn scaled_brightness(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.rgb {
            *p = p.map(|c| (c * factor).clamp(0.0, 1.0));
        }
        out
    }

    /// Averages `factor × factor` blocks; depth is dropped.
    pub fn downsample(&self, factor: usize) -> Self {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let mut rgb = vec![[0.0; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for dy in 0..factor {
                    for dx in 0..factor {
                        let p = self.pixel(x * factor + dx, y * factor + dy);
                        for c in 0..3 {
                            acc[c] += p[c];
                        }
                    }
                }
                rgb[y * w + x] = acc.map(|v| v * norm);
            }
        }
        Self {
            width: w,
            height: h,
            rgb,
            depth: None,
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        image::save_buffer(
            path,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| RenderError::Png(e.to_string()))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, RenderError> {
        let img = image::open(path)
            .map_err(|e| RenderError::Png(e.to_string()))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let rgb = img
            .pixels()
            .map(|p| p.0.map(|c| c as f64 / 255.0))
            .collect();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            rgb,
            depth: None,
        })
    }
}
