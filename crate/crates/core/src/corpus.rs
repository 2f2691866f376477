//! Procedural image corpus: smooth shading, hard-edged shapes, gratings and
//! film-like grain, so compression artifacts have both flat and busy regions
//! to show up in.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{CorpusManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::raster::{save_image, ColorSpace, ImageBuffer};
use crate::rng::component_rng;

pub const DESK_SIZE: usize = 256;

/// A random field smoothly interpolated from a `cells x cells` grid.
fn value_noise(rng: &mut ChaCha8Rng, size: usize, cells: usize) -> Vec<f32> {
    let g = cells + 1;
    let grid: Vec<f32> = (0..g * g).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        let fy = y as f32 / size as f32 * cells as f32;
        let (gy, ty) = (fy as usize, smooth(fy.fract()));
        for x in 0..size {
            let fx = x as f32 / size as f32 * cells as f32;
            let (gx, tx) = (fx as usize, smooth(fx.fract()));
            let at = |yy: usize, xx: usize| grid[yy * g + xx];
            let top = at(gy, gx) * (1.0 - tx) + at(gy, gx + 1) * tx;
            let bottom = at(gy + 1, gx) * (1.0 - tx) + at(gy + 1, gx + 1) * tx;
            out[y * size + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

enum Fill {
    Flat,
    Grating { freq: f32, angle: f32, amp: f32 },
    Checker { period: usize },
}

enum Region {
    Rect { x0: f32, y0: f32, x1: f32, y1: f32 },
    Ellipse { cx: f32, cy: f32, rx: f32, ry: f32, angle: f32 },
    Band { cx: f32, cy: f32, angle: f32, half: f32 },
}

impl Region {
    fn random(rng: &mut ChaCha8Rng, size: f32) -> Self {
        match rng.random_range(0..3) {
            0 => {
                let (w, h) = (rng.random_range(0.08..0.5) * size, rng.random_range(0.08..0.5) * size);
                let (x0, y0) = (rng.random_range(-0.1..0.9) * size, rng.random_range(-0.1..0.9) * size);
                Region::Rect { x0, y0, x1: x0 + w, y1: y0 + h }
            }
            1 => Region::Ellipse {
                cx: rng.random_range(0.0..1.0) * size,
                cy: rng.random_range(0.0..1.0) * size,
                rx: rng.random_range(0.04..0.3) * size,
                ry: rng.random_range(0.04..0.3) * size,
                angle: rng.random_range(0.0..std::f32::consts::PI),
            },
            _ => Region::Band {
                cx: rng.random_range(0.0..1.0) * size,
                cy: rng.random_range(0.0..1.0) * size,
                angle: rng.random_range(0.0..std::f32::consts::PI),
                half: rng.random_range(1.5..0.06 * size),
            },
        }
    }

    fn contains(&self, x: f32, y: f32) -> bool {
        match *self {
            Region::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Region::Ellipse { cx, cy, rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Region::Band { cx, cy, angle, half } => {
                let (s, c) = angle.sin_cos();
                ((x - cx) * -s + (y - cy) * c).abs() <= half
            }
        }
    }
}

/// One luminance plane in `[0, 255]` plus shape masks for coloring.
fn luminance(rng: &mut ChaCha8Rng, size: usize) -> (Vec<f32>, Vec<(Vec<bool>, [f32; 3])>) {
    let base = rng.random_range(40.0..200.0f32);
    let (gx, gy) = (rng.random_range(-60.0..60.0f32), rng.random_range(-60.0..60.0f32));
    let shading_amp = rng.random_range(10.0..50.0f32);
    let cells = rng.random_range(2..6);
    let shading = value_noise(rng, size, cells);
    let mut img: Vec<f32> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f32 / size as f32 - 0.5, (i / size) as f32 / size as f32 - 0.5);
            base + gx * x + gy * y + shading_amp * shading[i]
        })
        .collect();

    let mut masks = Vec::new();
    let shapes = rng.random_range(4..14);
    for _ in 0..shapes {
        let region = Region::random(rng, size as f32);
        let level = rng.random_range(0.0..255.0f32);
        let fill = match rng.random_range(0..4) {
            0 | 1 => Fill::Flat,
            2 => Fill::Grating {
                freq: rng.random_range(0.03..0.45),
                angle: rng.random_range(0.0..std::f32::consts::PI),
                amp: rng.random_range(15.0..70.0),
            },
            _ => Fill::Checker { period: rng.random_range(2..12) },
        };
        let tint = [rng.random_range(0.6..1.4f32), rng.random_range(0.6..1.4f32), rng.random_range(0.6..1.4f32)];
        let mut mask = vec![false; size * size];
        for y in 0..size {
            for x in 0..size {
                let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
                if !region.contains(fx, fy) {
                    continue;
                }
                let v = match fill {
                    Fill::Flat => level,
                    Fill::Grating { freq, angle, amp } => {
                        let (s, c) = angle.sin_cos();
                        level + amp * (std::f32::consts::TAU * freq * (fx * c + fy * s)).sin()
                    }
                    Fill::Checker { period } => {
                        if (x / period + y / period) % 2 == 0 {
                            level
                        } else {
                            255.0 - level
                        }
                    }
                };
                img[y * size + x] = v;
                mask[y * size + x] = true;
            }
        }
        masks.push((mask, tint));
    }

    let texture_amp = rng.random_range(0.0..25.0f32);
    let texture = value_noise(rng, size, size / 4);
    let grain = Normal::new(0.0f32, rng.random_range(1.0..8.0)).expect("positive sigma");
    for (i, v) in img.iter_mut().enumerate() {
        *v += texture_amp * texture[i] + grain.sample(rng);
    }
    (img, masks)
}

/// Image `index` of the corpus under `seed`. Identical arguments give
/// identical pixels.
pub fn desk_image(seed: u64, index: usize, color: ColorSpace) -> ImageBuffer {
    let mut rng = component_rng(seed, &format!("desk/{index}"));
    let size = DESK_SIZE;
    let (lum, masks) = luminance(&mut rng, size);
    let planes: Vec<Vec<f32>> = match color {
        ColorSpace::Gray => vec![lum],
        ColorSpace::Rgb => {
            let global = [rng.random_range(0.85..1.15f32), rng.random_range(0.85..1.15f32), rng.random_range(0.85..1.15f32)];
            (0..3)
                .map(|c| {
                    lum.iter()
                        .enumerate()
                        .map(|(i, &v)| {
                            let tint = masks.iter().rev().find(|(m, _)| m[i]).map_or(1.0, |(_, t)| t[c]);
                            v * tint * global[c]
                        })
                        .collect()
                })
                .collect()
        }
    };
    ImageBuffer::from_planes(size, size, &planes).expect("planes match size")
}

pub fn desk_corpus(seed: u64, count: usize, color: ColorSpace) -> Vec<ImageBuffer> {
    (0..count).map(|i| desk_image(seed, i, color)).collect()
}

/// Writes `count` PNGs and a `manifest.tsv` into `dir`; the last
/// `val_count` images form the validation split.
pub fn write_desk_corpus(
    dir: impl AsRef<Path>,
    seed: u64,
    count: usize,
    val_count: usize,
    color: ColorSpace,
) -> Result<CorpusManifest> {
    let dir = dir.as_ref();
    if val_count >= count {
        return Err(Error::Invalid(format!("validation count {val_count} leaves no training images of {count}")));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(count);
    let mut text = String::new();
    for i in 0..count {
        let name = format!("desk_{i:03}.png");
        save_image(&desk_image(seed, i, color), dir.join(&name))?;
        let split = if i + val_count >= count { Split::Val } else { Split::Train };
        text.push_str(&format!("{name}\t{}\n", split.as_str()));
        entries.push(ManifestEntry { path: dir.join(&name), split });
    }
    let manifest_path = dir.join("manifest.tsv");
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(CorpusManifest { entries, color })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let a = desk_image(5, 0, ColorSpace::Gray);
        assert_eq!(a, desk_image(5, 0, ColorSpace::Gray));
        assert_ne!(a, desk_image(5, 1, ColorSpace::Gray));
        assert_eq!((a.width(), a.height()), (DESK_SIZE, DESK_SIZE));
        let mean = a.data().iter().map(|&v| v as f64).sum::<f64>() / a.data().len() as f64;
        let var = a.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / a.data().len() as f64;
        assert!(var > 100.0, "variance {var}");
    }

    #[test]
    fn rgb_has_three_channels() {
        let c = desk_image(2, 3, ColorSpace::Rgb);
        assert_eq!(c.channels(), 3);
    }

    #[test]
    fn written_corpus_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_desk_corpus(dir.path(), 1, 4, 1, ColorSpace::Gray).unwrap();
        let loaded = CorpusManifest::load(dir.path().join("manifest.tsv"), ColorSpace::Gray).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(loaded.load_split(Split::Val).unwrap()[0], desk_image(1, 3, ColorSpace::Gray));
    }
}
