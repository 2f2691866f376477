use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::QfModel;
use crate::raster::{quantize, save_image, ColorSpace, ImageBuffer};

/// One channel of one conv block's output as an 8-bit image.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationPlane {
    pub layer: usize,
    pub channel: usize,
    pub image: ImageBuffer,
}

impl ActivationPlane {
    pub fn file_name(&self) -> String {
        format!("act_l{:02}_c{:03}.png", self.layer, self.channel)
    }
}

/// Output planes of conv block `layer` (0-based, after batch norm and ReLU
/// where present), each min-max stretched to `[0, 255]`. A constant plane
/// maps to mid gray.
pub fn dump_activations(model: &QfModel, image: &ImageBuffer, layer: usize) -> Result<Vec<ActivationPlane>> {
    let convs = model.arch().convs().count();
    let end = model.arch().conv_block_end(layer).ok_or_else(|| {
        Error::range("layer index", format!("{layer} (network has {convs} conv layers)"))
    })?;
    let image = image.with_color(ColorSpace::from_channels(model.channels())?);
    let outs = model.forward_collect(&model.image_tensor(&image)?)?;
    let act = &outs[end];
    let s = act.shape();
    let plane = s.plane();
    Ok((0..s.c)
        .map(|c| {
            let v = &act.item(0)[c * plane..(c + 1) * plane];
            let lo = v.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let data = v
                .iter()
                .map(|&x| if hi > lo { quantize((x - lo) / (hi - lo) * 255.0) } else { 128 })
                .collect();
            ActivationPlane {
                layer,
                channel: c,
                image: ImageBuffer::new(s.w, s.h, ColorSpace::Gray, data).expect("plane size matches"),
            }
        })
        .collect())
}

/// Writes every plane into `dir` and returns the file paths.
pub fn write_activations(planes: &[ActivationPlane], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    planes
        .iter()
        .map(|p| {
            let path = dir.join(p.file_name());
            save_image(&p.image, &path)?;
            Ok(path)
        })
        .collect()
}
