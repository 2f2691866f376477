use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::CorruptionSpec;
use crate::error::{Error, Result};
use crate::model::QfModel;
use crate::raster::{ColorSpace, ImageBuffer};
use crate::stats::spearman;
use crate::tensor::Tensor;

use super::plot::{svg_band_plot, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLocation {
    pub requested: (usize, usize),
    /// Origin actually used, aligned to the output stride.
    pub snapped: (usize, usize),
}

/// Quality of fixed patches of one image under a corruption sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPatchResult {
    pub patch: usize,
    pub locations: Vec<PatchLocation>,
    pub levels: Vec<f64>,
    /// `qf[level][location]`: mean normalized quality over the patch's map.
    pub qf: Vec<Vec<f64>>,
}

impl FixedPatchResult {
    /// Quality sequence over the sweep for one location.
    pub fn sequence(&self, location: usize) -> Vec<f64> {
        self.qf.iter().map(|row| row[location]).collect()
    }
}

/// `count` random patch origins on the stride grid, fully inside the image.
pub fn random_locations<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    patch: usize,
    stride: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if patch > width || patch > height {
        return Err(Error::TooSmall { op: "random_locations", axis: "image", minimum: patch, actual: width.min(height) });
    }
    let (nx, ny) = ((width - patch) / stride + 1, (height - patch) / stride + 1);
    Ok((0..count).map(|_| (rng.random_range(0..nx) * stride, rng.random_range(0..ny) * stride)).collect())
}

/// For each sweep entry: corrupt the whole image once, cut the same patches,
/// and record their mean predicted quality.
pub fn fixed_patch_eval(
    model: &QfModel,
    image: &ImageBuffer,
    locations: &[(usize, usize)],
    patch: usize,
    sweep: &[CorruptionSpec],
) -> Result<FixedPatchResult> {
    let min = model.arch().min_input();
    if patch < min {
        return Err(Error::TooSmall { op: "fixed_patch_eval", axis: "patch", minimum: min, actual: patch });
    }
    let offenders: Vec<_> = locations
        .iter()
        .filter(|&&(x, y)| x + patch > image.width() || y + patch > image.height())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Invalid(format!(
            "patch locations out of bounds for {}x{} image with patch {patch}: {offenders:?}",
            image.width(),
            image.height()
        )));
    }
    let stride = model.arch().downsampling();
    let locations: Vec<PatchLocation> = locations
        .iter()
        .map(|&(x, y)| PatchLocation { requested: (x, y), snapped: (x / stride * stride, y / stride * stride) })
        .collect();
    let image = image.with_color(ColorSpace::from_channels(model.channels())?);
    let mut qf = Vec::with_capacity(sweep.len());
    for spec in sweep {
        let corrupted = spec.apply(&image)?;
        let patches = locations
            .iter()
            .map(|l| model.image_tensor(&corrupted.crop(l.snapped.0, l.snapped.1, patch, patch)?))
            .collect::<Result<Vec<_>>>()?;
        let mut row = Vec::with_capacity(locations.len());
        for chunk in patches.chunks(16) {
            let map = model.quality_map(&Tensor::stack(chunk)?)?;
            let plane = map.shape().plane();
            for i in 0..chunk.len() {
                row.push(map.item(i).iter().map(|&v| v as f64).sum::<f64>() / plane as f64);
            }
        }
        qf.push(row);
    }
    Ok(FixedPatchResult { patch, locations, levels: sweep.iter().map(|s| s.level).collect(), qf })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub kind: String,
    pub levels: Vec<LevelStats>,
    /// Spearman between level index and every per-patch quality.
    pub spearman: f64,
    /// Fraction of patch sequences that never increase along the sweep.
    pub non_increasing_fraction: f64,
    pub locations: Vec<Vec<PatchLocation>>,
}

/// Pools fixed-patch results of several images into per-level statistics.
pub fn correlation_curve(kind: &str, results: &[FixedPatchResult]) -> Result<CurveReport> {
    let first = results.first().ok_or_else(|| Error::Invalid("correlation curve needs at least one image".into()))?;
    let n_levels = first.levels.len();
    if n_levels < 2 {
        return Err(Error::Invalid(format!("correlation curve needs at least 2 levels, got {n_levels}")));
    }
    if let Some(bad) = results.iter().find(|r| r.levels != first.levels) {
        return Err(Error::Invalid(format!("inconsistent sweep levels {:?} vs {:?}", bad.levels, first.levels)));
    }
    let mut levels = Vec::with_capacity(n_levels);
    let (mut idx, mut vals) = (Vec::new(), Vec::new());
    for (l, &level) in first.levels.iter().enumerate() {
        let samples: Vec<f64> = results.iter().flat_map(|r| r.qf[l].iter().copied()).collect();
        let count = samples.len();
        let mean = samples.iter().sum::<f64>() / count.max(1) as f64;
        let std = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count.max(1) as f64).sqrt();
        idx.extend(std::iter::repeat_n(l as f64, count));
        vals.extend(samples);
        levels.push(LevelStats { level, mean, std, count });
    }
    let (mut sequences, mut monotone) = (0usize, 0usize);
    for r in results {
        for loc in 0..r.locations.len() {
            sequences += 1;
            monotone += r.sequence(loc).windows(2).all(|w| w[1] <= w[0]) as usize;
        }
    }
    Ok(CurveReport {
        kind: kind.to_string(),
        levels,
        spearman: spearman(&idx, &vals)?,
        non_increasing_fraction: if sequences == 0 { 0.0 } else { monotone as f64 / sequences as f64 },
        locations: results.iter().map(|r| r.locations.clone()).collect(),
    })
}

impl CurveReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,level,mean_qf,std_qf,count\n");
        for l in &self.levels {
            out.push_str(&format!("{},{},{},{},{}\n", self.kind, l.level, l.mean, l.std, l.count));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }

    /// Mean quality against level with a one-std band.
    pub fn to_svg(&self) -> String {
        let series = Series {
            x: self.levels.iter().map(|l| l.level).collect(),
            mean: self.levels.iter().map(|l| l.mean).collect(),
            std: self.levels.iter().map(|l| l.std).collect(),
        };
        svg_band_plot(
            &format!("{} (Spearman {:.3})", self.kind, self.spearman),
            &format!("{} level", self.kind),
            "predicted QF",
            &series,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(levels: &[f64], qf: Vec<Vec<f64>>) -> FixedPatchResult {
        let n = qf[0].len();
        FixedPatchResult {
            patch: 32,
            locations: vec![PatchLocation { requested: (0, 0), snapped: (0, 0) }; n],
            levels: levels.to_vec(),
            qf,
        }
    }

    #[test]
    fn constant_predictions_give_zero() {
        let r = result(&[0.0, 1.0, 2.0], vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]]);
        let c = correlation_curve("blur", &[r]).unwrap();
        assert_eq!(c.spearman, 0.0);
        assert!(c.levels.iter().all(|l| l.std == 0.0 && l.count == 2));
        assert_eq!(c.non_increasing_fraction, 1.0);
    }

    #[test]
    fn strictly_decreasing_gives_minus_one() {
        let r = result(&[0.0, 1.0, 2.0], vec![vec![0.9], vec![0.5], vec![0.1]]);
        let c = correlation_curve("blur", &[r]).unwrap();
        assert!((c.spearman + 1.0).abs() < 1e-12);
        assert!(c.levels.iter().all(|l| l.std == 0.0));
    }

    #[test]
    fn too_few_levels() {
        assert!(correlation_curve("blur", &[result(&[0.0], vec![vec![0.3]])]).is_err());
        assert!(correlation_curve("blur", &[]).is_err());
    }

    #[test]
    fn locations_stay_on_grid() {
        let mut rng = crate::rng::component_rng(3, "loc");
        let locs = random_locations(100, 70, 32, 4, 50, &mut rng).unwrap();
        assert!(locs.iter().all(|&(x, y)| x % 4 == 0 && y % 4 == 0 && x + 32 <= 100 && y + 32 <= 70));
    }
}
