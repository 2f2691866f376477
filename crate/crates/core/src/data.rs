//! Corpus manifests, quality-factor sampling, and training patch batches.

use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg::{jpeg_degrade, JpegColorMode, QualityFactor};
use crate::raster::{load_image, ColorSpace, ImageBuffer};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Split,
}

/// Image list read from `path<TAB>split` lines. `#` starts a comment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub color: ColorSpace,
}

impl CorpusManifest {
    /// Parses manifest text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, color: ColorSpace) -> Result<Self> {
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let (path, split) = line.split_once('\t').ok_or_else(|| {
                Error::Invalid(format!("manifest line {}: expected `path<TAB>split`", lineno + 1))
            })?;
            let split: Split = split.trim().parse().map_err(|e| {
                Error::Invalid(format!("manifest line {}: {e}", lineno + 1))
            })?;
            let path = base.join(path.trim());
            if entries.iter().any(|e| e.path == path) {
                return Err(Error::Invalid(format!(
                    "manifest line {}: duplicate path {}",
                    lineno + 1,
                    path.display()
                )));
            }
            entries.push(ManifestEntry { path, split });
        }
        Ok(CorpusManifest { entries, color })
    }

    pub fn load(path: impl AsRef<Path>, color: ColorSpace) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, color)
    }

    /// Serializes with paths as given (no relativization).
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.path.display(), e.split.as_str()))
            .collect()
    }

    pub fn paths(&self, split: Split) -> impl Iterator<Item = &Path> {
        self.entries.iter().filter(move |e| e.split == split).map(|e| e.path.as_path())
    }

    /// Fails unless both splits are present.
    pub fn require_splits(&self) -> Result<()> {
        for split in [Split::Train, Split::Val] {
            if self.paths(split).next().is_none() {
                return Err(Error::Invalid(format!("manifest has no `{}` images", split.as_str())));
            }
        }
        Ok(())
    }

    /// Decodes every image of `split`, converted to the manifest color space.
    pub fn load_split(&self, split: Split) -> Result<Vec<ImageBuffer>> {
        self.paths(split)
            .map(|p| load_image(p).map(|img| img.with_color(self.color)))
            .collect()
    }
}

/// How training quality factors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "q", rename_all = "kebab-case")]
pub enum SamplerMode {
    Uniform,
    /// `P(q)` proportional to `ln(1 + q)`.
    LogWeighted,
    /// Five classes at q = 1, 20, 40, 60, 80 with weights 1, 1, 1, 2, 2.
    Classification5,
    /// Always the same q (testing and degenerate runs).
    Pinned(QualityFactor),
}

impl std::str::FromStr for SamplerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplerMode::Uniform),
            "log-weighted" => Ok(SamplerMode::LogWeighted),
            "classification-5" => Ok(SamplerMode::Classification5),
            other => match other.strip_prefix("pinned:") {
                Some(q) => Ok(SamplerMode::Pinned(QualityFactor::new(q.parse().map_err(|_| {
                    Error::Invalid(format!("bad pinned quality `{q}`"))
                })?)?)),
                None => Err(Error::Invalid(format!("unknown sampler `{other}`"))),
            },
        }
    }
}

/// Raw quality factors of the five classification classes.
pub const CLASS_QUALITIES: [u32; 5] = [1, 20, 40, 60, 80];
/// Relative draw weights of the five classes.
pub const CLASS_WEIGHTS: [f64; 5] = [1.0, 1.0, 1.0, 2.0, 2.0];

/// One sampled quality factor, with its class in classification mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QfDraw {
    pub q: QualityFactor,
    pub class: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct QfSampler {
    mode: SamplerMode,
    outcomes: Vec<QfDraw>,
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl QfSampler {
    pub fn new(mode: SamplerMode) -> Self {
        let (outcomes, weights): (Vec<QfDraw>, Vec<f64>) = match mode {
            SamplerMode::Uniform => (1..=100).map(|q| (draw(q, None), 1.0)).unzip(),
            SamplerMode::LogWeighted => (1..=100).map(|q| (draw(q, None), (1.0 + q as f64).ln())).unzip(),
            SamplerMode::Classification5 => CLASS_QUALITIES
                .iter()
                .zip(CLASS_WEIGHTS)
                .enumerate()
                .map(|(c, (&q, w))| (draw(q, Some(c)), w))
                .unzip(),
            SamplerMode::Pinned(q) => (vec![QfDraw { q, class: None }], vec![1.0]),
        };
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let index = WeightedIndex::new(&probs).expect("positive finite weights");
        QfSampler { mode, outcomes, probs, index }
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    /// Outcomes with their probabilities.
    pub fn table(&self) -> impl Iterator<Item = (QfDraw, f64)> + '_ {
        self.outcomes.iter().copied().zip(self.probs.iter().copied())
    }

    /// Probability of drawing raw quality `q`.
    pub fn probability(&self, q: u32) -> f64 {
        self.table().filter(|(d, _)| d.q.value() == q).map(|(_, p)| p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> QfDraw {
        self.outcomes[self.index.sample(rng)]
    }
}

fn draw(q: u32, class: Option<usize>) -> QfDraw {
    QfDraw { q: QualityFactor::new(q).expect("table qualities are valid"), class }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub image: usize,
    pub x: usize,
    pub y: usize,
    pub q: QualityFactor,
}

/// A batch of degraded patches with their targets.
#[derive(Clone, Debug)]
pub struct PatchBatch {
    /// `(B, C, P, P)`, values `raw / 255`.
    pub input: Tensor,
    /// Normalized quality `q / 100` per element.
    pub targets: Vec<f32>,
    /// Class index per element in classification mode.
    pub classes: Option<Vec<usize>>,
    pub provenance: Vec<Provenance>,
}

/// The images large enough to supply `patch x patch` crops.
#[derive(Clone, Debug)]
pub struct PatchSource<'a> {
    images: Vec<(usize, &'a ImageBuffer)>,
    patch: usize,
}

impl<'a> PatchSource<'a> {
    pub fn new(images: &'a [ImageBuffer], patch: usize) -> Result<Self> {
        if patch == 0 || patch % 8 != 0 {
            return Err(Error::range("patch size", format!("{patch} (must be a positive multiple of 8)")));
        }
        let eligible: Vec<_> = images
            .iter()
            .enumerate()
            .filter(|(_, img)| img.width() >= patch && img.height() >= patch)
            .collect();
        let skipped = images.len() - eligible.len();
        if skipped > 0 {
            log::warn!("skipping {skipped} image(s) smaller than {patch}x{patch}");
        }
        if eligible.is_empty() {
            return Err(Error::Invalid(format!("no image is at least {patch}x{patch}")));
        }
        Ok(PatchSource { images: eligible, patch })
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    /// Draws `batch` patches: uniform image, uniform crop offset, sampled q,
    /// JPEG-degraded after cropping.
    pub fn batch<R: Rng + ?Sized>(
        &self,
        sampler: &QfSampler,
        batch: usize,
        mode: JpegColorMode,
        rng: &mut R,
    ) -> Result<PatchBatch> {
        let p = self.patch;
        let mut tensors = Vec::with_capacity(batch);
        let mut targets = Vec::with_capacity(batch);
        let mut classes = Vec::with_capacity(batch);
        let mut provenance = Vec::with_capacity(batch);
        for _ in 0..batch {
            let (id, img) = self.images[rng.random_range(0..self.images.len())];
            let x = rng.random_range(0..=img.width() - p);
            let y = rng.random_range(0..=img.height() - p);
            let d = sampler.sample(rng);
            let crop = img.crop(x, y, p, p)?;
            tensors.push(jpeg_degrade(&crop, d.q, mode)?.to_tensor());
            targets.push(d.q.normalized());
            classes.extend(d.class);
            provenance.push(Provenance { image: id, x, y, q: d.q });
        }
        let classes = (classes.len() == batch && batch > 0).then_some(classes);
        Ok(PatchBatch { input: Tensor::stack(&tensors)?, targets, classes, provenance })
    }
}

/// Convenience wrapper: filter `images` and draw one batch.
pub fn make_patch_batch<R: Rng + ?Sized>(
    images: &[ImageBuffer],
    sampler: &QfSampler,
    patch: usize,
    batch: usize,
    mode: JpegColorMode,
    rng: &mut R,
) -> Result<PatchBatch> {
    PatchSource::new(images, patch)?.batch(sampler, batch, mode, rng)
}
