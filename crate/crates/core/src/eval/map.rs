use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::QfModel;
use crate::raster::{quantize, ColorSpace, ImageBuffer};

/// Dense per-region quality prediction for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major normalized quality per cell.
    pub values: Vec<f32>,
    pub input_width: usize,
    pub input_height: usize,
    pub stride: usize,
    pub receptive_field: usize,
    /// Mean input intensity (`[0, 1]`, all channels) inside each cell's window,
    /// for filtering dark background regions.
    pub window_mean: Vec<f32>,
}

impl QfMap {
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    /// Top-left input pixel `(x, y)` of the window seen by cell `(row, col)`.
    pub fn window_origin(&self, row: usize, col: usize) -> (usize, usize) {
        (col * self.stride, row * self.stride)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Mean over cells whose window mean intensity is at least `min_intensity`.
    pub fn mean_above(&self, min_intensity: f32) -> Option<f64> {
        let kept: Vec<f64> = self
            .values
            .iter()
            .zip(&self.window_mean)
            .filter(|(_, &m)| m >= min_intensity)
            .map(|(&v, _)| v as f64)
            .collect();
        (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
    }

    /// 8-bit grayscale rendering (0 -> black, 1 -> white), nearest-neighbor
    /// upscaled to the input size.
    pub fn heatmap(&self) -> ImageBuffer {
        let (w, h) = (self.input_width, self.input_height);
        let mut img = ImageBuffer::filled(w, h, ColorSpace::Gray, 0);
        for y in 0..h {
            let r = (y * self.rows / h).min(self.rows - 1);
            for x in 0..w {
                let c = (x * self.cols / w).min(self.cols - 1);
                img.set(x, y, 0, quantize(self.at(r, c) * 255.0));
            }
        }
        img
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,x,y,qf,window_mean\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (x, y) = self.window_origin(r, c);
                let i = r * self.cols + c;
                out.push_str(&format!("{r},{c},{x},{y},{},{}\n", self.values[i], self.window_mean[i]));
            }
        }
        out
    }
}

/// Summed-area table over the channel-averaged image in `[0, 1]`.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(image: &ImageBuffer) -> Self {
        let (w, h, ch) = (image.width(), image.height(), image.channels());
        let mut sums = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += (0..ch).map(|c| image.get(x, y, c) as f64).sum::<f64>() / (255.0 * ch as f64);
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Integral { width: w + 1, sums }
    }

    fn mean(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = |x: usize, y: usize| self.sums[y * self.width + x];
        (s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0)) / ((x1 - x0) * (y1 - y0)) as f64
    }
}

/// One eval-mode forward over the whole image. The image is converted to the
/// model's color space first.
pub fn qf_map(model: &QfModel, image: &ImageBuffer) -> Result<QfMap> {
    let image = image.with_color(ColorSpace::from_channels(model.channels())?);
    let out = model.quality_map(&model.image_tensor(&image)?)?;
    let s = out.shape();
    let (stride, rf) = (model.arch().downsampling(), model.arch().receptive_field());
    let integral = Integral::new(&image);
    let mut window_mean = Vec::with_capacity(s.plane());
    for r in 0..s.h {
        for c in 0..s.w {
            let (x0, y0) = (c * stride, r * stride);
            let (x1, y1) = ((x0 + rf).min(image.width()), (y0 + rf).min(image.height()));
            window_mean.push(integral.mean(x0, y0, x1, y1) as f32);
        }
    }
    Ok(QfMap {
        rows: s.h,
        cols: s.w,
        values: out.into_data(),
        input_width: image.width(),
        input_height: image.height(),
        stride,
        receptive_field: rf,
        window_mean,
    })
}
