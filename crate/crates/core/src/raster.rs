//! 8-bit image buffers and PNG/PNM file I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Gray,
    Rgb,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb => 3,
        }
    }

    pub fn from_channels(c: usize) -> Result<Self> {
        match c {
            1 => Ok(ColorSpace::Gray),
            3 => Ok(ColorSpace::Rgb),
            other => Err(Error::range("channel count", format!("{other} (expected 1 or 3)"))),
        }
    }
}

/// Decoded 8-bit image, channels interleaved per pixel, rows top to bottom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    color: ColorSpace,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, color: ColorSpace, data: Vec<u8>) -> Result<Self> {
        let expected = width * height * color.channels();
        if data.len() != expected {
            return Err(Error::Dimension {
                op: "image",
                axis: "data",
                expected,
                actual: data.len(),
            });
        }
        Ok(ImageBuffer { width, height, color, data })
    }

    pub fn filled(width: usize, height: usize, color: ColorSpace, value: u8) -> Self {
        ImageBuffer {
            width,
            height,
            color,
            data: vec![value; width * height * color.channels()],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn color(&self) -> ColorSpace {
        self.color
    }

    pub fn channels(&self) -> usize {
        self.color.channels()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        let ch = self.channels();
        self.data[(y * self.width + x) * ch + c] = v;
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageBuffer> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::range(
                "crop window",
                format!("{w}x{h} at ({x0},{y0}) exceeds {}x{}", self.width, self.height),
            ));
        }
        let ch = self.channels();
        let mut data = Vec::with_capacity(w * h * ch);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * ch;
            data.extend_from_slice(&self.data[start..start + w * ch]);
        }
        ImageBuffer::new(w, h, self.color, data)
    }

    /// Splits into one float plane per channel, values in [0, 255].
    pub fn planes(&self) -> Vec<Vec<f32>> {
        let ch = self.channels();
        (0..ch)
            .map(|c| self.data.iter().skip(c).step_by(ch).map(|&v| v as f32).collect())
            .collect()
    }

    /// Rebuilds an image from float planes, rounding and clamping to [0, 255].
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f32>]) -> Result<ImageBuffer> {
        let color = ColorSpace::from_channels(planes.len())?;
        let ch = planes.len();
        let mut data = vec![0u8; width * height * ch];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::Dimension {
                    op: "from_planes",
                    axis: "plane",
                    expected: width * height,
                    actual: plane.len(),
                });
            }
            for (i, &v) in plane.iter().enumerate() {
                data[i * ch + c] = quantize(v);
            }
        }
        ImageBuffer::new(width, height, color, data)
    }

    /// `1 x C x H x W` tensor with values `raw / 255`.
    pub fn to_tensor(&self) -> Tensor {
        let ch = self.channels();
        let shape = Shape::new(1, ch, self.height, self.width);
        let mut data = vec![0.0f32; shape.numel()];
        let plane = self.width * self.height;
        for (i, px) in self.data.chunks_exact(ch).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * plane + i] = v as f32 / 255.0;
            }
        }
        Tensor::from_vec(shape, data).expect("shape matches buffer")
    }

    /// Converts batch item `n` of a `[0, 1]`-valued tensor back to 8 bits.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<ImageBuffer> {
        let s = t.shape();
        let color = ColorSpace::from_channels(s.c)?;
        let plane = s.plane();
        let item = t.item(n);
        let mut data = vec![0u8; plane * s.c];
        for c in 0..s.c {
            for i in 0..plane {
                data[i * s.c + c] = quantize(item[c * plane + i] * 255.0);
            }
        }
        ImageBuffer::new(s.w, s.h, color, data)
    }

    pub fn to_gray(&self) -> ImageBuffer {
        match self.color {
            ColorSpace::Gray => self.clone(),
            ColorSpace::Rgb => {
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| quantize(0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32))
                    .collect();
                ImageBuffer { width: self.width, height: self.height, color: ColorSpace::Gray, data }
            }
        }
    }

    pub fn to_rgb(&self) -> ImageBuffer {
        match self.color {
            ColorSpace::Rgb => self.clone(),
            ColorSpace::Gray => ImageBuffer {
                width: self.width,
                height: self.height,
                color: ColorSpace::Rgb,
                data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            },
        }
    }

    pub fn with_color(&self, color: ColorSpace) -> ImageBuffer {
        match color {
            ColorSpace::Gray => self.to_gray(),
            ColorSpace::Rgb => self.to_rgb(),
        }
    }
}

/// Round-to-nearest and clamp into the 8-bit range.
pub fn quantize(v: f32) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

/// Decodes an 8-bit PNG, PGM, or PPM file.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let decode_err = |reason: String| Error::Decode { path: path.to_path_buf(), reason };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .ok()
        .or_else(|| image::ImageFormat::from_path(path).ok())
        .ok_or_else(|| decode_err("unrecognized image format".into()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
        return Err(decode_err(format!("unsupported format {format:?}")));
    }
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| decode_err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(buf) => ImageBuffer::new(w, h, ColorSpace::Gray, buf.into_raw()),
        image::DynamicImage::ImageRgb8(buf) => ImageBuffer::new(w, h, ColorSpace::Rgb, buf.into_raw()),
        image::DynamicImage::ImageLumaA8(_) => {
            ImageBuffer::new(w, h, ColorSpace::Gray, img.to_luma8().into_raw())
        }
        image::DynamicImage::ImageRgba8(_) => ImageBuffer::new(w, h, ColorSpace::Rgb, img.to_rgb8().into_raw()),
        other => Err(decode_err(format!("unsupported sample type {:?} (8-bit only)", other.color()))),
    }
}

/// Writes PNG, or binary PGM/PPM for `.pgm`, `.ppm`, `.pnm` extensions.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let color = match img.color {
        ColorSpace::Gray => image::ExtendedColorType::L8,
        ColorSpace::Rgb => image::ExtendedColorType::Rgb8,
    };
    let format = match ext.as_str() {
        "png" => image::ImageFormat::Png,
        "pgm" | "ppm" | "pnm" => image::ImageFormat::Pnm,
        other => {
            return Err(Error::Invalid(format!(
                "{}: unsupported output extension `{other}`",
                path.display()
            )))
        }
    };
    image::save_buffer_with_format(path, &img.data, img.width as u32, img.height as u32, color, format)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Invalid(format!("{}: {other}", path.display())),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_is_exact() {
        let data: Vec<u8> = (0..48).map(|v| (v * 5) as u8).collect();
        let img = ImageBuffer::new(4, 4, ColorSpace::Rgb, data).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), Shape::new(1, 3, 4, 4));
        assert_eq!(t.at(0, 1, 0, 0), 5.0 / 255.0);
        assert_eq!(ImageBuffer::from_tensor(&t, 0).unwrap(), img);
    }

    #[test]
    fn crop_out_of_bounds() {
        let img = ImageBuffer::filled(8, 8, ColorSpace::Gray, 3);
        assert!(img.crop(4, 4, 5, 2).is_err());
        assert_eq!(img.crop(4, 4, 4, 4).unwrap().width(), 4);
    }

    #[test]
    fn rejects_bad_length() {
        assert!(ImageBuffer::new(2, 2, ColorSpace::Rgb, vec![0; 4]).is_err());
    }
}
