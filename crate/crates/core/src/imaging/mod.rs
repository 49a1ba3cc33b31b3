//! Image decoding and the preprocessing pipeline:
//! decode → grayscale → center crop → bilinear resize → `[1, S, S]` tensor in `[0, 1]`.

pub mod netpbm;

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit RGB pixels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

/// Gray levels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Wraps the pixels as a `[1, H, W]` tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_vec(&[1, self.height, self.width], self.pixels.clone())
    }
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Allocation ceiling for PNG decoding.
const PNG_MEMORY_LIMIT: usize = 256 << 20;

fn decode_png(bytes: &[u8]) -> Result<RgbImage, String> {
    let mut decoder = png::Decoder::new_with_limits(Cursor::new(bytes), png::Limits { bytes: PNG_MEMORY_LIMIT });
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err("palette was not expanded".into()),
    };
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf.chunks(info.line_size).take(height) {
        if row.len() < width * channels {
            return Err("short scanline".into());
        }
        // Alpha is discarded.
        pixels.extend(row[..width * channels].chunks_exact(channels).map(|p| match channels {
            1 | 2 => [p[0]; 3],
            _ => [p[0], p[1], p[2]],
        }));
    }
    if pixels.len() != width * height {
        return Err("missing scanlines".into());
    }
    Ok(RgbImage { width, height, pixels })
}

/// Decodes PNG, binary PGM (P5) or binary PPM (P6) from memory. `name` labels errors.
pub fn decode_bytes(bytes: &[u8], name: &str) -> Result<RgbImage> {
    let result = if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if netpbm::is_netpbm(bytes) {
        netpbm::decode(bytes)
    } else {
        return Err(Error::UnsupportedFormat { path: name.to_string() });
    };
    result.map_err(|reason| Error::Decode { path: name.to_string(), reason })
}

pub fn decode(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bytes(&bytes, &path.display().to_string())
}

/// BT.601 luma, `(0.299 R + 0.587 G + 0.114 B) / 255`.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
            (f64::from(weighted) / 255_000.0) as f32
        })
        .collect();
    GrayImage { width: img.width, height: img.height, pixels }
}

/// Central window of `⌊fraction·W⌋ × ⌊fraction·H⌋` (at least 1×1). When the
/// margin is odd the extra pixel goes to the right and bottom.
pub fn center_crop(img: &GrayImage, fraction: f64) -> Result<GrayImage> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Validation(format!("crop fraction {fraction} outside (0, 1]")));
    }
    let side = |len: usize| ((fraction * len as f64).floor() as usize).clamp(1, len);
    let (w, h) = (side(img.width), side(img.height));
    let (x0, y0) = ((img.width - w) / 2, (img.height - h) / 2);
    let mut pixels = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        pixels.extend_from_slice(&img.pixels[y * img.width + x0..y * img.width + x0 + w]);
    }
    Ok(GrayImage { width: w, height: h, pixels })
}

/// Source sampling positions for one axis: the two neighbours and the weight of the second.
fn sample_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resampling with half-pixel centres, clamped at the borders.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Validation(format!("resize target {out_w}x{out_h} is empty")));
    }
    let xs = sample_axis(img.width, out_w);
    let ys = sample_axis(img.height, out_h);
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let p = |x, y| f64::from(img.get(x, y));
            let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
            let bottom = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
            let v = top * (1.0 - ty) + bottom * ty;
            pixels.push((v as f32).clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage { width: out_w, height: out_h, pixels })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub crop_fraction: f64,
    pub input_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { crop_fraction: 0.85, input_size: 96 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::Config(format!("crop_fraction {} outside (0, 1]", self.crop_fraction)));
        }
        if self.input_size == 0 {
            return Err(Error::Config("input_size must be positive".into()));
        }
        Ok(())
    }
}

/// Grayscale, crop and resize an already decoded image.
pub fn preprocess_image(img: &RgbImage, config: &PreprocessConfig) -> Result<Tensor> {
    config.validate()?;
    let gray = to_gray(img);
    let cropped = center_crop(&gray, config.crop_fraction)?;
    let resized = resize_bilinear(&cropped, config.input_size, config.input_size)?;
    resized.to_tensor()
}

pub fn preprocess(path: &Path, config: &PreprocessConfig) -> Result<Tensor> {
    preprocess_image(&decode(path)?, config)
}
