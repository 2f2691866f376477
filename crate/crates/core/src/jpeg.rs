//! JPEG quality-factor degradation without entropy coding.
//!
//! Blocks go through level shift, orthonormal 8x8 DCT-II, quantization with a
//! quality-scaled table, dequantization, and the inverse DCT. Huffman coding is
//! lossless and therefore skipped: the output carries exactly the artifacts a
//! real encode/decode round trip would.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ColorSpace, ImageBuffer};

/// Annex K luminance table, row-major.
pub const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K chrominance table, row-major.
pub const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Luma,
    Chroma,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantTable {
    pub entries: [u16; 64],
    pub component: Component,
}

impl QuantTable {
    pub fn base(component: Component) -> Self {
        let entries = match component {
            Component::Luma => BASE_LUMA,
            Component::Chroma => BASE_CHROMA,
        };
        QuantTable { entries, component }
    }
}

/// JPEG quality factor in `[1, 100]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct QualityFactor(u8);

impl QualityFactor {
    pub fn new(q: u32) -> Result<Self> {
        if (1..=100).contains(&q) {
            Ok(QualityFactor(q as u8))
        } else {
            Err(Error::range("quality factor", format!("{q} (expected 1..=100)")))
        }
    }

    pub fn value(self) -> u32 {
        self.0 as u32
    }

    /// `q / 100`, in `(0, 1]`.
    pub fn normalized(self) -> f32 {
        self.0 as f32 / 100.0
    }

    /// Inverse of [`normalized`](Self::normalized), rounding to the nearest integer q.
    pub fn from_normalized(y: f32) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::range("normalized quality", "not finite"));
        }
        let q = (y as f64 * 100.0).round();
        if !(1.0..=100.0).contains(&q) {
            return Err(Error::range("normalized quality", format!("{y}")));
        }
        QualityFactor::new(q as u32)
    }
}

impl TryFrom<u32> for QualityFactor {
    type Error = Error;
    fn try_from(q: u32) -> Result<Self> {
        QualityFactor::new(q)
    }
}

impl From<QualityFactor> for u32 {
    fn from(q: QualityFactor) -> u32 {
        q.value()
    }
}

/// IJG quality scaling: `5000/q` below 50, `200 - 2q` otherwise, entries clamped
/// to `[1, 255]`.
pub fn scale_quant_table(base: &QuantTable, q: QualityFactor) -> QuantTable {
    let q = q.value();
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut entries = [0u16; 64];
    for (out, &e) in entries.iter_mut().zip(&base.entries) {
        *out = ((e as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    QuantTable { entries, component: base.component }
}

/// Orthonormal DCT-II basis: `basis[u][x] = c(u) cos((2x+1) u pi / 16)`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let cu = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = cu * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
            }
        }
        m
    })
}

/// Forward 8x8 DCT of a level-shifted block (row-major).
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    // columns
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|v| b[v][y] * coeffs[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| b[u][x] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JpegColorMode {
    /// Every channel is quantized independently with the luminance table.
    LumaOnly,
    /// BT.601 full-range YCbCr with 2x2-averaged chroma and the chroma table.
    Ycbcr420,
}

impl std::str::FromStr for JpegColorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "luma-only" => Ok(JpegColorMode::LumaOnly),
            "ycbcr-420" => Ok(JpegColorMode::Ycbcr420),
            other => Err(Error::Invalid(format!(
                "unknown color mode `{other}` (expected luma-only or ycbcr-420)"
            ))),
        }
    }
}

/// Quantize/dequantize one float plane (values in [0, 255]) blockwise.
/// Edge blocks are padded by replication and cropped back.
pub fn degrade_plane(plane: &[f32], width: usize, height: usize, table: &QuantTable) -> Vec<f32> {
    let mut out = vec![0.0f32; plane.len()];
    let q: Vec<f64> = table.entries.iter().map(|&e| e as f64).collect();
    let mut block = [0.0f64; 64];
    for by in (0..height).step_by(8) {
        for bx in (0..width).step_by(8) {
            for y in 0..8 {
                let sy = (by + y).min(height - 1);
                for x in 0..8 {
                    let sx = (bx + x).min(width - 1);
                    block[y * 8 + x] = plane[sy * width + sx] as f64 - 128.0;
                }
            }
            let mut coeffs = dct8x8(&block);
            for (c, &qv) in coeffs.iter_mut().zip(&q) {
                *c = (*c / qv).round() * qv;
            }
            let rec = idct8x8(&coeffs);
            for y in 0..8.min(height - by) {
                for x in 0..8.min(width - bx) {
                    out[(by + y) * width + bx + x] = (rec[y * 8 + x] + 128.0) as f32;
                }
            }
        }
    }
    out
}

fn rgb_to_ycbcr(planes: &[Vec<f32>]) -> [Vec<f32>; 3] {
    let n = planes[0].len();
    let (mut y, mut cb, mut cr) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (r, g, b) = (planes[0][i], planes[1][i], planes[2][i]);
        y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        cb[i] = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
        cr[i] = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    }
    [y, cb, cr]
}

fn ycbcr_to_rgb(y: &[f32], cb: &[f32], cr: &[f32]) -> Vec<Vec<f32>> {
    let n = y.len();
    let (mut r, mut g, mut b) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (cbv, crv) = (cb[i] - 128.0, cr[i] - 128.0);
        r[i] = y[i] + 1.402 * crv;
        g[i] = y[i] - 0.344_136 * cbv - 0.714_136 * crv;
        b[i] = y[i] + 1.772 * cbv;
    }
    vec![r, g, b]
}

/// 2x2 box average; odd trailing rows/columns average with their replica.
fn downsample2(plane: &[f32], w: usize, h: usize) -> (Vec<f32>, usize, usize) {
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = vec![0.0; cw * ch];
    for y in 0..ch {
        for x in 0..cw {
            let mut acc = 0.0;
            for dy in 0..2 {
                for dx in 0..2 {
                    let sy = (2 * y + dy).min(h - 1);
                    let sx = (2 * x + dx).min(w - 1);
                    acc += plane[sy * w + sx];
                }
            }
            out[y * cw + x] = acc / 4.0;
        }
    }
    (out, cw, ch)
}

/// Bilinear upsampling with chroma samples centred between luma pairs.
fn upsample2(plane: &[f32], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0; w * h];
    let sample = |x: f32, lim: usize| -> (usize, usize, f32) {
        let x = x.clamp(0.0, (lim - 1) as f32);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(lim - 1);
        (x0, x1, x - x0 as f32)
    };
    for y in 0..h {
        let (y0, y1, fy) = sample((y as f32 + 0.5) / 2.0 - 0.5, ch);
        for x in 0..w {
            let (x0, x1, fx) = sample((x as f32 + 0.5) / 2.0 - 0.5, cw);
            let top = plane[y0 * cw + x0] * (1.0 - fx) + plane[y0 * cw + x1] * fx;
            let bot = plane[y1 * cw + x0] * (1.0 - fx) + plane[y1 * cw + x1] * fx;
            out[y * w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Simulates a JPEG encode/decode at quality `q`. Output has the input's size
/// and color space.
pub fn jpeg_degrade(image: &ImageBuffer, q: QualityFactor, mode: JpegColorMode) -> Result<ImageBuffer> {
    let (w, h) = (image.width(), image.height());
    if w < 8 {
        return Err(Error::TooSmall { op: "jpeg_degrade", axis: "width", minimum: 8, actual: w });
    }
    if h < 8 {
        return Err(Error::TooSmall { op: "jpeg_degrade", axis: "height", minimum: 8, actual: h });
    }
    let luma = scale_quant_table(&QuantTable::base(Component::Luma), q);
    let planes = image.planes();
    let out = match (image.color(), mode) {
        (ColorSpace::Gray, _) | (ColorSpace::Rgb, JpegColorMode::LumaOnly) => planes
            .iter()
            .map(|p| degrade_plane(p, w, h, &luma))
            .collect::<Vec<_>>(),
        (ColorSpace::Rgb, JpegColorMode::Ycbcr420) => {
            let chroma = scale_quant_table(&QuantTable::base(Component::Chroma), q);
            let [y, cb, cr] = rgb_to_ycbcr(&planes);
            let y = degrade_plane(&y, w, h, &luma);
            let (cb_s, cw, ch) = downsample2(&cb, w, h);
            let (cr_s, _, _) = downsample2(&cr, w, h);
            let cb_d = upsample2(&degrade_plane(&cb_s, cw, ch, &chroma), cw, ch, w, h);
            let cr_d = upsample2(&degrade_plane(&cr_s, cw, ch, &chroma), cw, ch, w, h);
            ycbcr_to_rgb(&y, &cb_d, &cr_d)
        }
    };
    ImageBuffer::from_planes(w, h, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: u32) -> QualityFactor {
        QualityFactor::new(v).unwrap()
    }

    #[test]
    fn scaling_fixed_points() {
        let base = QuantTable::base(Component::Luma);
        assert_eq!(scale_quant_table(&base, q(50)).entries, BASE_LUMA);
        assert!(scale_quant_table(&base, q(100)).entries.iter().all(|&e| e == 1));
        assert_eq!(scale_quant_table(&base, q(10)).entries[0], 80);
        let q1 = scale_quant_table(&base, q(1));
        assert!(q1.entries.iter().all(|&e| (1..=255).contains(&e)));
    }

    #[test]
    fn quality_range() {
        assert!(QualityFactor::new(0).is_err());
        assert!(QualityFactor::new(101).is_err());
        for v in 1..=100 {
            let f = q(v);
            assert_eq!(QualityFactor::from_normalized(f.normalized()).unwrap(), f);
        }
    }

    #[test]
    fn dct_of_constant_block() {
        let zero = dct8x8(&[0.0; 64]);
        assert!(zero.iter().all(|&c| c == 0.0));
        let v = 200.0;
        let c = dct8x8(&[v - 128.0; 64]);
        assert!((c[0] - 8.0 * (v - 128.0)).abs() < 1e-4);
        assert!(c[1..].iter().all(|a| a.abs() < 1e-4));
    }

    #[test]
    fn color_mode_parse() {
        assert_eq!("ycbcr-420".parse::<JpegColorMode>().unwrap(), JpegColorMode::Ycbcr420);
        assert!("cmyk".parse::<JpegColorMode>().is_err());
    }

    #[test]
    fn small_image_rejected() {
        let img = ImageBuffer::filled(7, 16, ColorSpace::Gray, 0);
        assert!(jpeg_degrade(&img, q(50), JpegColorMode::LumaOnly).is_err());
    }

    #[test]
    fn constant_gray_survives() {
        for v in [0u8, 37, 128, 255] {
            let img = ImageBuffer::filled(20, 13, ColorSpace::Gray, v);
            for qv in [1, 10, 50, 90, 100] {
                let out = jpeg_degrade(&img, q(qv), JpegColorMode::LumaOnly).unwrap();
                let lo = *out.data().iter().min().unwrap();
                let hi = *out.data().iter().max().unwrap();
                assert!(hi - lo <= 1, "v={v} q={qv}");
            }
        }
    }

    #[test]
    fn rgb_420_keeps_shape() {
        let data: Vec<u8> = (0..(17 * 11 * 3)).map(|i| (i * 7 % 256) as u8).collect();
        let img = ImageBuffer::new(17, 11, ColorSpace::Rgb, data).unwrap();
        let out = jpeg_degrade(&img, q(75), JpegColorMode::Ycbcr420).unwrap();
        assert_eq!((out.width(), out.height(), out.color()), (17, 11, ColorSpace::Rgb));
    }
}
