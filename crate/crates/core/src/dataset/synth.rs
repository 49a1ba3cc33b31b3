//! Procedural face-like images whose mouth curvature encodes the expression.
//!
//! Each image is a light background, a shirt band at the bottom, an oval head
//! of random tone with a darker outline, two eyes, two eyebrows and a mouth
//! stroke. The mouth is a parabola whose signed curvature is drawn per class:
//! corners down for negative, roughly flat for neutral, corners up for
//! positive. The per-class curvature distributions overlap slightly, so a
//! small fraction of faces is ambiguous. Eyebrow curvature is random and
//! unrelated to the class. Position, scale, tone, stroke darkness and pixel
//! noise are all jittered. Pixel values are quantized to multiples of 1/255
//! so that writing and re-reading an 8-bit PGM is lossless.
//!
//! Image `i` is labelled `ALL[i % 3]` and drawn from its own RNG stream, so
//! an image does not depend on how many others are generated.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ClassLabel, LabeledExample};
use crate::error::{Error, Result};
use crate::imaging::netpbm::encode_pgm;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Mean and spread of the signed mouth curvature for each class.
const CURVATURE: [(f64, f64); 3] = [(-0.30, 0.08), (0.0, 0.05), (0.30, 0.08)];

/// Eyebrow curvature range, shared by all classes.
const BROW_CURVATURE: f64 = 0.25;

fn sym(rng: &mut SeededRng, spread: f64) -> f64 {
    rng.uniform(-spread, spread)
}

fn smooth_cover(distance: f64, half_width: f64) -> f64 {
    (half_width + 0.5 - distance).clamp(0.0, 1.0)
}

/// Parabolic stroke `y(u) = cy − bend·w·(u² − ⅓)` for `u = (x − cx)/w ∈ [−1, 1]`.
/// Positive `bend` lifts the corners. The `⅓` keeps the stroke's mean height at `cy`.
struct Arc {
    cx: f64,
    cy: f64,
    half_width: f64,
    bend: f64,
}

impl Arc {
    fn y_at(&self, u: f64) -> f64 {
        self.cy - self.bend * self.half_width * (u * u - 1.0 / 3.0)
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        let u = (x - self.cx) / self.half_width;
        if u.abs() <= 1.0 {
            let slope = -2.0 * self.bend * u;
            (y - self.y_at(u)).abs() / (1.0 + slope * slope).sqrt()
        } else {
            let end = u.signum();
            let ex = self.cx + end * self.half_width;
            let ey = self.y_at(end);
            ((x - ex).powi(2) + (y - ey).powi(2)).sqrt()
        }
    }
}

/// Draws one face of the given class at `size × size`.
pub fn render_face(label: ClassLabel, size: usize, rng: &mut SeededRng) -> Vec<f32> {
    let s = size as f64;
    let background = 0.85 + sym(rng, 0.08);
    let skin = 0.55 + sym(rng, 0.2);
    let shirt = 0.45 + sym(rng, 0.05);
    let cx = s * (0.5 + sym(rng, 0.04));
    let cy = s * (0.5 + sym(rng, 0.04));
    let rx = s * (0.33 + sym(rng, 0.03));
    let ry = rx * (1.22 + sym(rng, 0.07));
    let outline = skin * (0.55 + sym(rng, 0.1));
    let stroke = s * 0.018 * (1.0 + sym(rng, 0.2));
    let ink = skin * (0.3 + sym(rng, 0.15));

    let eye_y = cy - 0.22 * ry * (1.0 + sym(rng, 0.08));
    let eye_dx = 0.38 * rx * (1.0 + sym(rng, 0.08));
    let eye_r = 0.09 * rx * (1.0 + sym(rng, 0.15));
    let brow_y = eye_y - 0.2 * ry * (1.0 + sym(rng, 0.1));
    let brows = [-1.0, 1.0].map(|side| Arc {
        cx: cx + side * eye_dx,
        cy: brow_y,
        half_width: 0.2 * rx * (1.0 + sym(rng, 0.1)),
        bend: sym(rng, BROW_CURVATURE),
    });

    let (mean, spread) = CURVATURE[label.index()];
    let mouth = Arc {
        cx: cx + sym(rng, 0.03) * rx,
        cy: cy + 0.45 * ry * (1.0 + sym(rng, 0.08)),
        half_width: 0.42 * rx * (1.0 + sym(rng, 0.12)),
        bend: mean + spread * rng.normal(),
    };
    let noise = 0.02 + rng.uniform(0.0, 0.04);

    let mut pixels = Vec::with_capacity(size * size);
    for py in 0..size {
        for px in 0..size {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let mut v = background;
            // Shoulders: a wide ellipse below the head.
            let sh = ((x - cx) / (1.6 * rx)).powi(2) + ((y - (cy + 1.9 * ry)) / (0.9 * ry)).powi(2);
            if sh < 1.0 {
                v = shirt;
            }
            let r = (((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)).sqrt();
            let edge = (r - 1.0).abs() * rx.min(ry);
            let inside = (0.5 - (r - 1.0) * rx.min(ry)).clamp(0.0, 1.0);
            v = v * (1.0 - inside) + skin * inside;
            let line = smooth_cover(edge, 0.5 * stroke);
            v = v * (1.0 - line) + outline * line;
            if r < 1.0 {
                for side in [-1.0, 1.0] {
                    let d = ((x - (cx + side * eye_dx)).powi(2) + (y - eye_y).powi(2)).sqrt();
                    let c = smooth_cover(d, eye_r);
                    v = v * (1.0 - c) + ink * c;
                }
                for arc in brows.iter().chain(std::iter::once(&mouth)) {
                    let c = smooth_cover(arc.distance(x, y), 0.5 * stroke);
                    v = v * (1.0 - c) + ink * c;
                }
            }
            v += noise * rng.normal();
            pixels.push(((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32);
        }
    }
    pixels
}

/// `total` images with labels cycling negative, neutral, positive.
pub fn synth_generate_total(total: usize, size: usize, seed: u64) -> Result<Vec<LabeledExample>> {
    if total == 0 || size == 0 {
        return Err(Error::Validation(format!("cannot generate {total} images of size {size}")));
    }
    (0..total)
        .map(|i| {
            let label = ClassLabel::ALL[i % 3];
            let mut rng = SeededRng::derive(seed, &format!("synth/{i}"));
            let pixels = render_face(label, size, &mut rng);
            Ok(LabeledExample {
                image: Tensor::from_vec(&[1, size, size], pixels)?,
                label,
                source_id: format!("synth-{i:05}-{label}"),
            })
        })
        .collect()
}

/// `count_per_class` images of each class, `3 · count_per_class` in total.
pub fn synth_generate(count_per_class: usize, size: usize, seed: u64) -> Result<Vec<LabeledExample>> {
    synth_generate_total(3 * count_per_class, size, seed)
}

/// Writes examples as `<dir>/<label>/<source_id>.pgm` plus `<dir>/manifest.csv`
/// with columns `filename,label,seed`.
pub fn write_synth_dataset(dir: &Path, examples: &[LabeledExample], seed: u64) -> Result<()> {
    let mut manifest = String::from("filename,label,seed\n");
    for label in ClassLabel::ALL {
        let sub = dir.join(label.name());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    for e in examples {
        let [_, h, w] = match *e.image.dims() {
            [c, h, w] => [c, h, w],
            _ => return Err(Error::Validation(format!("{} is not a [1, H, W] image", e.source_id))),
        };
        let bytes: Vec<u8> = e.image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let rel = format!("{}/{}.pgm", e.label.name(), e.source_id);
        let path = dir.join(&rel);
        fs::write(&path, encode_pgm(w, h, &bytes)).map_err(|err| Error::io(&path, err))?;
        manifest.push_str(&format!("{rel},{},{seed}\n", e.label));
    }
    let path = dir.join("manifest.csv");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(())
}
