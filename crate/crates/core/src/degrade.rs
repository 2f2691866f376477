//! Non-JPEG corruptions used to probe generalization, plus PSNR.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{quantize, ColorSpace, ImageBuffer};

/// Default width of the always-sampled low-frequency column band.
pub const DEFAULT_CENTER_FRACTION: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorruptionKind {
    /// `level` is the blur sigma in pixels.
    GaussianBlur,
    /// `level` is the impulse density in `[0, 1]`.
    SaltPepper,
    /// `level` is the undersampling rate `R >= 1`.
    ZeroFillUndersample { center_fraction: f64 },
}

impl CorruptionKind {
    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::GaussianBlur => "gaussian-blur",
            CorruptionKind::SaltPepper => "salt-pepper",
            CorruptionKind::ZeroFillUndersample { .. } => "zero-fill-undersample",
        }
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-blur" | "blur" => Ok(CorruptionKind::GaussianBlur),
            "salt-pepper" | "noise" => Ok(CorruptionKind::SaltPepper),
            "zero-fill-undersample" | "undersample" => Ok(CorruptionKind::ZeroFillUndersample {
                center_fraction: DEFAULT_CENTER_FRACTION,
            }),
            other => Err(Error::Invalid(format!("unknown corruption kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    #[serde(flatten)]
    pub kind: CorruptionKind,
    pub level: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, level: f64, seed: u64) -> Result<Self> {
        let spec = CorruptionSpec { kind, level, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.level.is_finite() || self.level < 0.0 {
            return Err(Error::range("corruption level", format!("{} (must be >= 0)", self.level)));
        }
        match self.kind {
            CorruptionKind::GaussianBlur => Ok(()),
            CorruptionKind::SaltPepper if self.level > 1.0 => {
                Err(Error::range("impulse density", format!("{} (must be <= 1)", self.level)))
            }
            CorruptionKind::SaltPepper => Ok(()),
            CorruptionKind::ZeroFillUndersample { center_fraction } => {
                if self.level < 1.0 {
                    return Err(Error::range("undersampling rate", format!("{} (must be >= 1)", self.level)));
                }
                if !(0.0..1.0).contains(&center_fraction) {
                    return Err(Error::range("center fraction", format!("{center_fraction}")));
                }
                Ok(())
            }
        }
    }

    pub fn apply(&self, image: &ImageBuffer) -> Result<ImageBuffer> {
        self.validate()?;
        match self.kind {
            CorruptionKind::GaussianBlur => gaussian_blur(image, self.level),
            CorruptionKind::SaltPepper => salt_pepper(image, self.level, self.seed),
            CorruptionKind::ZeroFillUndersample { center_fraction } => {
                zero_fill_undersample(image, self.level, center_fraction, self.seed)
            }
        }
    }
}

/// Normalized 1-D Gaussian taps for radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with edge replication. `sigma = 0` is the identity.
pub fn gaussian_blur(image: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::range("blur sigma", format!("{sigma} (must be >= 0)")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let planes: Vec<Vec<f32>> = image
        .planes()
        .into_iter()
        .map(|p| {
            let mut tmp = vec![0.0f64; w * h];
            for y in 0..h {
                for x in 0..w {
                    tmp[y * w + x] = kernel
                        .iter()
                        .enumerate()
                        .map(|(i, k)| k * p[y * w + clampi(x as isize + i as isize - r, w)] as f64)
                        .sum();
                }
            }
            let mut out = vec![0.0f32; w * h];
            for y in 0..h {
                for x in 0..w {
                    out[y * w + x] = kernel
                        .iter()
                        .enumerate()
                        .map(|(i, k)| k * tmp[clampi(y as isize + i as isize - r, h) * w + x])
                        .sum::<f64>() as f32;
                }
            }
            out
        })
        .collect();
    ImageBuffer::from_planes(w, h, &planes)
}

/// Replaces each pixel with probability `density` by black or white (equally
/// likely). All channels of a hit pixel receive the same value.
pub fn salt_pepper(image: &ImageBuffer, density: f64, seed: u64) -> Result<ImageBuffer> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::range("impulse density", format!("{density} (expected 0..=1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    let ch = image.channels();
    for px in out.data_mut().chunks_exact_mut(ch) {
        let hit = rng.random::<f64>() < density;
        let white = rng.random_bool(0.5);
        if hit {
            px.fill(if white { 255 } else { 0 });
        }
    }
    Ok(out)
}

/// Column mask over FFT-ordered frequencies: the central band around DC plus
/// uniformly random extra columns, `round(width / rate)` columns in total.
pub fn column_mask(width: usize, rate: f64, center_fraction: f64, seed: u64) -> Vec<bool> {
    let total = ((width as f64 / rate).round() as usize).clamp(1, width);
    let center = ((width as f64 * center_fraction).round() as usize).clamp(1, total);
    let mut mask = vec![false; width];
    // signed frequency order 0, 1, -1, 2, -2, ... mapped to FFT indices
    let mut kept = 0;
    let mut k = 0isize;
    while kept < center {
        for f in if k == 0 { vec![0] } else { vec![k, -k] } {
            if kept < center {
                let idx = f.rem_euclid(width as isize) as usize;
                if !mask[idx] {
                    mask[idx] = true;
                    kept += 1;
                }
            }
        }
        k += 1;
    }
    let mut rest: Vec<usize> = (0..width).filter(|&i| !mask[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..total - kept {
        let j = rng.random_range(i..rest.len());
        rest.swap(i, j);
        mask[rest[i]] = true;
    }
    mask
}

/// Zero-filled reconstruction from column-undersampled 2-D Fourier data.
///
/// The output is the magnitude of the inverse transform in the original
/// intensity scale, clamped to `[0, 255]`.
pub fn zero_fill_undersample(image: &ImageBuffer, rate: f64, center_fraction: f64, seed: u64) -> Result<ImageBuffer> {
    if !rate.is_finite() || rate < 1.0 {
        return Err(Error::range("undersampling rate", format!("{rate} (must be >= 1)")));
    }
    if !(0.0..1.0).contains(&center_fraction) {
        return Err(Error::range("center fraction", format!("{center_fraction} (expected 0..1)")));
    }
    if image.color() != ColorSpace::Gray {
        return Err(Error::Invalid("zero-fill undersampling expects a grayscale image".into()));
    }
    let (w, h) = (image.width(), image.height());
    // The mask selects whole k-space columns, so the transform along y cancels
    // and each row can be filtered on its own.
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(w), planner.plan_fft_inverse(w));
    let mask = column_mask(w, rate, center_fraction, seed);
    let mut grid: Vec<Complex<f64>> = image.data().iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    for row in grid.chunks_exact_mut(w) {
        fwd.process(row);
        for (c, &keep) in row.iter_mut().zip(&mask) {
            if !keep {
                *c = Complex::new(0.0, 0.0);
            }
        }
        inv.process(row);
    }
    let data = grid.iter().map(|c| quantize((c.norm() / w as f64) as f32)).collect();
    ImageBuffer::new(w, h, ColorSpace::Gray, data)
}

/// Peak signal-to-noise ratio in dB for 8-bit images; identical inputs give
/// `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(Error::Invalid(format!(
            "psnr: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.data().len() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}
