//! A small restoration network trained with a data-consistency term against
//! its own degraded input plus a frozen QF predictor used as a perceptual loss.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{PatchSource, QfSampler, SamplerMode};
use crate::error::{Error, Result};
use crate::jpeg::{jpeg_degrade, JpegColorMode, QualityFactor};
use crate::model::{HeadMode, QfModel};
use crate::nn::{l1_loss, mse_loss, Layer, Optimizer, OptimizerKind, ParamStore, Sequential};
use crate::raster::{ColorSpace, ImageBuffer};
use crate::rng::component_rng;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataTerm {
    #[default]
    L1,
    L2,
}

impl std::str::FromStr for DataTerm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(DataTerm::L1),
            "l2" => Ok(DataTerm::L2),
            other => Err(Error::Invalid(format!("unknown data term `{other}` (expected l1 or l2)"))),
        }
    }
}

/// Three-layer restorer: conv9 (64) ReLU conv1 (32) ReLU conv5 (C), same
/// padding. The network predicts a residual added to its input; the last
/// layer starts at zero so an untrained restorer is the identity.
#[derive(Clone, Debug)]
pub struct Restorer {
    net: Sequential,
    pub params: ParamStore,
    channels: usize,
}

impl Restorer {
    pub fn new(channels: usize, seed: u64) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::range("restorer channels", format!("{channels} (expected 1 or 3)")));
        }
        let mut rng = component_rng(seed, "restorer-init");
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let specs = [(9, channels, 64, true), (1, 64, 32, true), (5, 32, channels, false)];
        for (i, &(k, cin, cout, hidden)) in specs.iter().enumerate() {
            let shape = Shape::new(cout, cin, k, k);
            let std = (2.0 / (k * k * cin) as f64).sqrt();
            let w: Vec<f32> = (0..shape.numel())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if hidden { (z * std) as f32 } else { 0.0 }
                })
                .collect();
            let weight = params.add(format!("restore{i}.weight"), Tensor::from_vec(shape, w)?.with_requires_grad(true))?;
            let bias = params.add(format!("restore{i}.bias"), Tensor::channel_vector(vec![0.0; cout]).with_requires_grad(true))?;
            layers.push(Layer::Conv { weight, bias, stride: 1, padding: k / 2 });
            if hidden {
                layers.push(Layer::Relu);
            }
        }
        Ok(Restorer { net: Sequential::new(layers), params, channels })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut out = self.net.forward_eval(&self.params, input)?;
        for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
            *o += x;
        }
        Ok(out)
    }

    /// Restores an image; output clamped to the valid range on export.
    pub fn restore(&self, image: &ImageBuffer) -> Result<ImageBuffer> {
        let out = self.forward(&image.with_color(ColorSpace::from_channels(self.channels)?).to_tensor())?;
        ImageBuffer::from_tensor(&out, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedLossConfig {
    pub lambda: f64,
    pub data_term: DataTerm,
}

impl Default for CombinedLossConfig {
    fn default() -> Self {
        CombinedLossConfig { lambda: 0.1, data_term: DataTerm::L1 }
    }
}

#[derive(Clone, Debug)]
pub struct CombinedLoss {
    pub total: f64,
    pub data: f64,
    /// `mean(1 - QF(restored))`, before weighting.
    pub quality: f64,
    /// Gradient with respect to `restored`.
    pub grad: Tensor,
}

/// `data(restored, input) + lambda * mean(1 - QF(restored))`, with the QF
/// model frozen: gradients reach `restored` only.
pub fn combined_loss(restored: &Tensor, input: &Tensor, qf: &QfModel, cfg: &CombinedLossConfig) -> Result<CombinedLoss> {
    if qf.mode() != HeadMode::Regression {
        return Err(Error::Invalid("the perceptual term needs a regression QF model".into()));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(Error::range("lambda", cfg.lambda.to_string()));
    }
    let data = match cfg.data_term {
        DataTerm::L1 => l1_loss(restored, input)?,
        DataTerm::L2 => mse_loss(restored, input)?,
    };
    let scale = if qf.normalized_input { 1.0 } else { 255.0 };
    let mut qf_in = restored.clone();
    if scale != 1.0 {
        qf_in.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    let (map, tape) = qf.forward_taped(qf_in)?;
    let quality = 1.0 - map.mean();
    let mut grad = data.grad;
    if cfg.lambda > 0.0 {
        let g = (-cfg.lambda / map.numel() as f64) as f32;
        let gin = qf.backward_frozen(tape, Tensor::full(map.shape(), g))?;
        for (a, b) in grad.data_mut().iter_mut().zip(gin.data()) {
            *a += b * scale;
        }
    }
    Ok(CombinedLoss { total: data.value + cfg.lambda * quality, data: data.value, quality, grad })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestoreConfig {
    pub loss: CombinedLossConfig,
    pub lr: f32,
    pub batch: usize,
    pub steps: u64,
    pub patch: usize,
    pub seed: u64,
    /// JPEG quality of the restorer's inputs.
    pub input_quality: QualityFactor,
    pub jpeg_mode: JpegColorMode,
    /// Held-out images are center-cropped to this size for the report.
    pub eval_crop: Option<usize>,
}

impl Default for RestoreConfig {
    fn default() -> Self {
        RestoreConfig {
            loss: CombinedLossConfig::default(),
            lr: 1e-3,
            batch: 8,
            steps: 400,
            patch: 48,
            seed: 0,
            input_quality: QualityFactor::new(40).expect("valid"),
            jpeg_mode: JpegColorMode::LumaOnly,
            eval_crop: Some(128),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestoredImage {
    pub id: usize,
    pub qf_input: f64,
    pub qf_output: f64,
    /// Mean absolute difference between input and output, normalized units.
    pub l1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub lambda: f64,
    pub seed: u64,
    pub images: Vec<RestoredImage>,
    pub qf_gain: f64,
    pub l1_drift: f64,
    pub final_loss: Option<f64>,
}

fn center_crop(image: &ImageBuffer, size: Option<usize>) -> Result<ImageBuffer> {
    match size {
        Some(s) if image.width() > s && image.height() > s => {
            image.crop((image.width() - s) / 2, (image.height() - s) / 2, s, s)
        }
        _ => Ok(image.clone()),
    }
}

/// Degraded held-out inputs as used by [`evaluate_restorer`].
pub fn heldout_inputs(images: &[ImageBuffer], cfg: &RestoreConfig, color: ColorSpace) -> Result<Vec<ImageBuffer>> {
    images
        .iter()
        .map(|img| jpeg_degrade(&center_crop(&img.with_color(color), cfg.eval_crop)?, cfg.input_quality, cfg.jpeg_mode))
        .collect()
}

/// Per-image QF before and after restoration, and input/output L1.
pub fn evaluate_restorer(restorer: &Restorer, qf: &QfModel, inputs: &[ImageBuffer], lambda: f64, seed: u64) -> Result<RestoreReport> {
    if inputs.is_empty() {
        return Err(Error::Invalid("no held-out images".into()));
    }
    let mut images = Vec::with_capacity(inputs.len());
    for (id, input) in inputs.iter().enumerate() {
        let output = restorer.restore(input)?;
        let l1 = input.data().iter().zip(output.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>()
            / (255.0 * input.data().len() as f64);
        images.push(RestoredImage { id, qf_input: qf.mean_quality(input)?, qf_output: qf.mean_quality(&output)?, l1 });
    }
    let n = images.len() as f64;
    Ok(RestoreReport {
        lambda,
        seed,
        qf_gain: images.iter().map(|r| r.qf_output - r.qf_input).sum::<f64>() / n,
        l1_drift: images.iter().map(|r| r.l1).sum::<f64>() / n,
        images,
        final_loss: None,
    })
}

/// Trains a restorer on degraded patches of `train_images` (no clean targets)
/// and reports on degraded `heldout` images.
pub fn train_restorer(
    qf: &QfModel,
    train_images: &[ImageBuffer],
    heldout: &[ImageBuffer],
    cfg: &RestoreConfig,
) -> Result<(Restorer, RestoreReport)> {
    let color = ColorSpace::from_channels(qf.channels())?;
    let train_images: Vec<ImageBuffer> = train_images.iter().map(|i| i.with_color(color)).collect();
    let src = PatchSource::new(&train_images, cfg.patch)?;
    let sampler = QfSampler::new(SamplerMode::Pinned(cfg.input_quality));
    let mut restorer = Restorer::new(qf.channels(), cfg.seed)?;
    let mut opt = Optimizer::new(OptimizerKind::adam());
    let mut final_loss = None;
    for step in 0..cfg.steps {
        let mut rng = component_rng(cfg.seed, &format!("restore-batch/{step}"));
        let input = src.batch(&sampler, cfg.batch, cfg.jpeg_mode, &mut rng)?.input;
        let (residual, tape) = restorer.net.forward_train(&mut restorer.params, input.clone())?;
        let mut restored = residual;
        for (o, &x) in restored.data_mut().iter_mut().zip(input.data()) {
            *o += x;
        }
        let loss = match combined_loss(&restored, &input, qf, &cfg.loss) {
            Ok(l) if l.total.is_finite() => l,
            Ok(_) | Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged { step: step as usize, detail: format!("restorer loss not finite (lambda {})", cfg.loss.lambda) })
            }
            Err(e) => return Err(e),
        };
        final_loss = Some(loss.total);
        restorer.net.backward(&mut restorer.params, tape, loss.grad)?;
        opt.step(&mut restorer.params, cfg.lr)?;
        if (step + 1) % 100 == 0 {
            log::info!("restorer step {}: loss {:.5} data {:.5} quality {:.5}", step + 1, loss.total, loss.data, loss.quality);
        }
    }
    let inputs = heldout_inputs(heldout, cfg, color)?;
    let mut report = evaluate_restorer(&restorer, qf, &inputs, cfg.loss.lambda, cfg.seed)?;
    report.final_loss = final_loss;
    Ok((restorer, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub qf_gain: f64,
    pub l1_drift: f64,
    pub runs: Vec<RestoreReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Groups runs by lambda (in first-seen order) and averages over seeds.
    pub fn from_runs(runs: Vec<RestoreReport>) -> Self {
        let mut rows: Vec<SweepRow> = Vec::new();
        for run in runs {
            match rows.iter_mut().find(|r| r.lambda == run.lambda) {
                Some(row) => row.runs.push(run),
                None => rows.push(SweepRow { lambda: run.lambda, qf_gain: 0.0, l1_drift: 0.0, runs: vec![run] }),
            }
        }
        for row in &mut rows {
            let n = row.runs.len() as f64;
            row.qf_gain = row.runs.iter().map(|r| r.qf_gain).sum::<f64>() / n;
            row.l1_drift = row.runs.iter().map(|r| r.l1_drift).sum::<f64>() / n;
        }
        SweepReport { rows }
    }

    pub fn gain_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].qf_gain >= w[0].qf_gain)
    }

    pub fn drift_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].l1_drift >= w[0].l1_drift)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,seed,qf_gain,l1_drift\n");
        for row in &self.rows {
            for r in &row.runs {
                out.push_str(&format!("{},{},{},{}\n", row.lambda, r.seed, r.qf_gain, r.l1_drift));
            }
            out.push_str(&format!("{},mean,{},{}\n", row.lambda, row.qf_gain, row.l1_drift));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }
}

/// Trains one restorer per `(lambda, seed)` and averages over seeds.
pub fn lambda_sweep(
    qf: &QfModel,
    train_images: &[ImageBuffer],
    heldout: &[ImageBuffer],
    base: &RestoreConfig,
    lambdas: &[f64],
    seeds: &[u64],
) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(Error::Invalid("lambda sweep needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(lambdas.len() * seeds.len());
    for &lambda in lambdas {
        for &seed in seeds {
            let cfg = RestoreConfig { loss: CombinedLossConfig { lambda, ..base.loss }, seed, ..base.clone() };
            runs.push(train_restorer(qf, train_images, heldout, &cfg)?.1);
        }
    }
    Ok(SweepReport::from_runs(runs))
}

/// Inputs on the left, outputs on the right, one pair per row.
pub fn before_after_grid(inputs: &[ImageBuffer], outputs: &[ImageBuffer]) -> Result<ImageBuffer> {
    let first = inputs.first().ok_or_else(|| Error::Invalid("empty image grid".into()))?;
    let (w, h, color) = (first.width(), first.height(), first.color());
    if outputs.len() != inputs.len() || inputs.iter().chain(outputs).any(|i| i.width() != w || i.height() != h || i.color() != color) {
        return Err(Error::Invalid("grid images must share size and color".into()));
    }
    let mut grid = ImageBuffer::filled(2 * w, h * inputs.len(), color, 0);
    for (row, (a, b)) in inputs.iter().zip(outputs).enumerate() {
        for (col, img) in [a, b].into_iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    for c in 0..color.channels() {
                        grid.set(col * w + x, row * h + y, c, img.get(x, y, c));
                    }
                }
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchSpec;

    fn tiny_qf() -> QfModel {
        QfModel::new(ArchSpec::with_widths(1, HeadMode::Regression, [4, 4, 4, 4, 4, 4]).unwrap(), 5).unwrap()
    }

    fn noisy(seed: u64) -> Tensor {
        let mut rng = component_rng(seed, "t");
        let data = (0..2 * 32 * 32).map(|_| rand::Rng::random::<f32>(&mut rng)).collect();
        Tensor::from_vec(Shape::new(2, 1, 32, 32), data).unwrap()
    }

    #[test]
    fn untrained_restorer_is_identity() {
        let r = Restorer::new(1, 3).unwrap();
        let x = noisy(1);
        assert_eq!(r.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn lambda_zero_is_data_term() {
        let qf = tiny_qf();
        let (a, b) = (noisy(1), noisy(2));
        let cfg = CombinedLossConfig { lambda: 0.0, data_term: DataTerm::L1 };
        let l = combined_loss(&a, &b, &qf, &cfg).unwrap();
        assert_eq!(l.total, l1_loss(&a, &b).unwrap().value);
    }

    #[test]
    fn identity_restoration_leaves_quality_term() {
        let qf = tiny_qf();
        let x = noisy(4);
        let cfg = CombinedLossConfig { lambda: 0.5, data_term: DataTerm::L1 };
        let l = combined_loss(&x, &x, &qf, &cfg).unwrap();
        assert_eq!(l.data, 0.0);
        let mean_qf = qf.forward(&x).unwrap().mean();
        assert!((l.total - 0.5 * (1.0 - mean_qf)).abs() < 1e-12);
    }

    #[test]
    fn too_small_for_qf() {
        let qf = tiny_qf();
        let x = Tensor::zeros(Shape::new(1, 1, 16, 16));
        assert!(matches!(combined_loss(&x, &x, &qf, &CombinedLossConfig::default()), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn sweep_monotonicity_checks() {
        let row = |lambda, g, d| SweepRow { lambda, qf_gain: g, l1_drift: d, runs: vec![] };
        let r = SweepReport { rows: vec![row(0.0, 0.0, 0.0), row(1.0, 0.1, 0.02), row(10.0, 0.1, 0.01)] };
        assert!(r.gain_monotone());
        assert!(!r.drift_monotone());
    }
}
