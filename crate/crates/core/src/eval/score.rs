use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QfModel;
use crate::raster::{load_image, ColorSpace, ImageBuffer};
use crate::rng::component_rng;
use crate::tensor::Tensor;

use super::curve::random_locations;
use super::map::qf_map;

/// How an image is reduced to one quality score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PatchPolicy {
    /// Mean of the whole-image map.
    WholeImage,
    /// Mean over `count` random `patch x patch` crops, seeded per image.
    RandomPatches { count: usize, patch: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    pub qf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub corpus: String,
    /// Sorted by id, so the score does not depend on listing order.
    pub images: Vec<ImageScore>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub skipped: Vec<(String, String)>,
}

impl DatasetScore {
    fn from_scores(corpus: &str, mut images: Vec<ImageScore>, skipped: Vec<(String, String)>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Invalid(format!("no image of corpus `{corpus}` could be scored ({} skipped)", skipped.len())));
        }
        images.sort_by(|a, b| a.id.cmp(&b.id));
        let n = images.len() as f64;
        let mean = images.iter().map(|s| s.qf).sum::<f64>() / n;
        let std = (images.iter().map(|s| (s.qf - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(DatasetScore { corpus: corpus.to_string(), images, mean, std, skipped })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,qf\n");
        for s in &self.images {
            out.push_str(&format!("{},{}\n", s.id, s.qf));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("score serializes")
    }
}

/// Scalar quality of one image under `policy`; `id` keys the patch stream.
pub fn score_image(model: &QfModel, image: &ImageBuffer, policy: PatchPolicy, id: &str) -> Result<f64> {
    match policy {
        PatchPolicy::WholeImage => Ok(qf_map(model, image)?.mean()),
        PatchPolicy::RandomPatches { count, patch, seed } => {
            if count == 0 {
                return Err(Error::range("patch count", "0"));
            }
            let image = image.with_color(ColorSpace::from_channels(model.channels())?);
            let mut rng = component_rng(seed, &format!("score/{id}"));
            let stride = model.arch().downsampling();
            let locs = random_locations(image.width(), image.height(), patch, stride, count, &mut rng)?;
            let tensors = locs
                .iter()
                .map(|&(x, y)| model.image_tensor(&image.crop(x, y, patch, patch)?))
                .collect::<Result<Vec<_>>>()?;
            let mut total = 0.0;
            for chunk in tensors.chunks(16) {
                total += model.quality_map(&Tensor::stack(chunk)?)?.mean() * chunk.len() as f64;
            }
            Ok(total / count as f64)
        }
    }
}

/// Scores in-memory images, identified by index.
pub fn score_images(model: &QfModel, corpus: &str, images: &[ImageBuffer], policy: PatchPolicy) -> Result<DatasetScore> {
    let scores = images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let id = format!("{i:06}");
            Ok(ImageScore { qf: score_image(model, img, policy, &id)?, id })
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetScore::from_scores(corpus, scores, Vec::new())
}

/// Scores image files. Files that fail to decode or are too small are
/// skipped and listed; failing on every file is an error.
pub fn score_dataset(model: &QfModel, corpus: &str, paths: &[PathBuf], policy: PatchPolicy) -> Result<DatasetScore> {
    if paths.is_empty() {
        return Err(Error::Invalid(format!("corpus `{corpus}` is empty")));
    }
    let mut scores = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let id = path.display().to_string();
        match load_image(path).and_then(|img| score_image(model, &img, policy, &id)) {
            Ok(qf) => scores.push(ImageScore { id, qf }),
            Err(e @ (Error::Decode { .. } | Error::Io { .. } | Error::TooSmall { .. })) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push((id, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if !skipped.is_empty() {
        log::warn!("skipped {} of {} images", skipped.len(), paths.len());
    }
    skipped.sort();
    DatasetScore::from_scores(corpus, scores, skipped)
}

/// Corpus id from a manifest or directory path.
pub fn corpus_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}
