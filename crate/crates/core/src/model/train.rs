//! Self-supervised training loop: patches are degraded with a sampled quality
//! factor and the network regresses (or classifies) it at every output cell.

use serde::{Deserialize, Serialize};

use super::arch::HeadMode;
use super::metrics::{accuracy_at_002, ConfusionMatrix, EvalRecord, MetricsReport};
use super::predictor::QfModel;
use crate::data::{CorpusManifest, PatchBatch, PatchSource, QfSampler, SamplerMode, Split};
use crate::error::{Error, Result};
use crate::jpeg::JpegColorMode;
use crate::nn::{cross_entropy_loss, mse_loss, LossOutput, Optimizer, OptimizerKind};
use crate::raster::ImageBuffer;
use crate::rng::component_rng;
use crate::stats::spearman;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f32,
    pub batch: usize,
    /// Total optimizer steps, counted from a fresh model.
    pub steps: u64,
    pub optimizer: OptimizerKind,
    pub weight_decay: f32,
    pub seed: u64,
    pub val_interval: u64,
    pub val_patches: usize,
    pub patch: usize,
    pub sampler: SamplerMode,
    pub jpeg_mode: JpegColorMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch: 16,
            steps: 20_000,
            optimizer: OptimizerKind::adam(),
            weight_decay: 0.0,
            seed: 0,
            val_interval: 500,
            val_patches: 256,
            patch: 64,
            sampler: SamplerMode::LogWeighted,
            jpeg_mode: JpegColorMode::LumaOnly,
        }
    }
}

impl TrainConfig {
    /// Defaults with the sampler matching `mode`.
    pub fn for_mode(mode: HeadMode) -> Self {
        let sampler = match mode {
            HeadMode::Regression => SamplerMode::LogWeighted,
            HeadMode::Classification => SamplerMode::Classification5,
        };
        TrainConfig { sampler, ..Default::default() }
    }

    pub fn validate(&self, mode: HeadMode) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::range("learning rate", self.lr.to_string()));
        }
        if self.batch == 0 {
            return Err(Error::range("batch size", "0"));
        }
        if self.val_interval == 0 {
            return Err(Error::range("validation interval", "0"));
        }
        if self.val_patches == 0 {
            return Err(Error::range("validation patches", "0"));
        }
        if mode == HeadMode::Classification && self.sampler != SamplerMode::Classification5 {
            return Err(Error::Invalid("classification mode needs the classification-5 sampler".into()));
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    /// Parameters at the lowest validation loss.
    pub best: QfModel,
    /// Parameters after the final step, for resuming.
    pub last: QfModel,
    pub report: MetricsReport,
}

/// Fixed validation patches, drawn once per run.
pub struct ValidationSet {
    batches: Vec<PatchBatch>,
}

impl ValidationSet {
    pub fn draw(images: &[ImageBuffer], cfg: &TrainConfig) -> Result<Self> {
        let src = PatchSource::new(images, cfg.patch)?;
        let sampler = QfSampler::new(cfg.sampler);
        let mut rng = component_rng(cfg.seed, "validation");
        let mut batches = Vec::new();
        let mut left = cfg.val_patches;
        while left > 0 {
            let n = left.min(cfg.batch);
            batches.push(src.batch(&sampler, n, cfg.jpeg_mode, &mut rng)?);
            left -= n;
        }
        Ok(ValidationSet { batches })
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(|b| b.targets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Validation results for one model.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy_at_002: Option<f64>,
    pub spearman: Option<f64>,
    pub pairs: Vec<(f64, f64)>,
    pub confusion: Option<ConfusionMatrix>,
}

fn cell_classes(batch: &PatchBatch, out: Shape) -> Result<Vec<usize>> {
    let classes = batch
        .classes
        .as_ref()
        .ok_or_else(|| Error::Invalid("classification batch without class labels".into()))?;
    Ok(classes.iter().flat_map(|&c| std::iter::repeat_n(c, out.plane())).collect())
}

fn constant_targets(batch: &PatchBatch, out: Shape) -> Result<Tensor> {
    let data = batch.targets.iter().flat_map(|&y| std::iter::repeat_n(y, out.plane())).collect();
    Tensor::from_vec(out, data)
}

fn batch_loss(mode: HeadMode, out: &Tensor, batch: &PatchBatch) -> Result<LossOutput> {
    match mode {
        HeadMode::Regression => mse_loss(out, &constant_targets(batch, out.shape())?),
        HeadMode::Classification => cross_entropy_loss(out, &cell_classes(batch, out.shape())?),
    }
}

pub fn evaluate(model: &QfModel, val: &ValidationSet) -> Result<Evaluation> {
    let mode = model.mode();
    let (mut loss_sum, mut weight) = (0.0, 0usize);
    let mut cell_pairs = Vec::new();
    let mut pairs = Vec::new();
    let (mut truth, mut predicted) = (Vec::new(), Vec::new());
    for batch in &val.batches {
        let out = model.forward(&batch.input)?;
        let n = batch.targets.len();
        loss_sum += batch_loss(mode, &out, batch)?.value * n as f64;
        weight += n;
        let plane = out.shape().plane();
        match mode {
            HeadMode::Regression => {
                for (i, &y) in batch.targets.iter().enumerate() {
                    let cells = out.item(i);
                    cell_pairs.extend(cells.iter().map(|&p| (y as f64, p as f64)));
                    let mean = cells.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
                    pairs.push((y as f64, mean));
                }
            }
            HeadMode::Classification => {
                truth.extend(cell_classes(batch, out.shape())?);
                predicted.extend(QfModel::predicted_classes(&out));
            }
        }
    }
    let loss = loss_sum / weight.max(1) as f64;
    Ok(match mode {
        HeadMode::Regression => {
            let (ys, ps): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            Evaluation {
                loss,
                accuracy_at_002: Some(accuracy_at_002(&cell_pairs)?),
                spearman: spearman(&ys, &ps).ok(),
                pairs,
                confusion: None,
            }
        }
        HeadMode::Classification => Evaluation {
            loss,
            accuracy_at_002: None,
            spearman: None,
            pairs: Vec::new(),
            confusion: Some(ConfusionMatrix::from_labels(&truth, &predicted)?),
        },
    })
}

fn diagnostic(model: &QfModel, batch: &PatchBatch, loss: Option<f64>, recent: f64) -> String {
    let (name, peak) = model
        .params
        .iter()
        .map(|p| {
            let peak = p.value.data().iter().fold(0.0f32, |m, v| if v.is_finite() { m.max(v.abs()) } else { f32::INFINITY });
            (p.name.as_str(), peak)
        })
        .fold(("", 0.0f32), |a, b| if b.1 > a.1 { b } else { a });
    let qs: Vec<u32> = batch.provenance.iter().map(|p| p.q.value()).collect();
    format!(
        "loss {loss:?}, recent mean loss {recent:.6}, largest |param| {peak} in `{name}`, batch qualities {qs:?}"
    )
}

/// Trains `model` on patches of `train_images`, validating on `val_images`.
/// A model that already ran `k` steps resumes at step `k` with the same data
/// stream; optimizer moments restart from zero.
pub fn train(
    mut model: QfModel,
    train_images: &[ImageBuffer],
    val_images: &[ImageBuffer],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mode = model.mode();
    cfg.validate(mode)?;
    let src = PatchSource::new(train_images, cfg.patch)?;
    let val = ValidationSet::draw(val_images, cfg)?;
    let sampler = QfSampler::new(cfg.sampler);
    let mut opt = Optimizer::new(cfg.optimizer);
    opt.weight_decay = cfg.weight_decay;
    model.meta.seed = cfg.seed;

    let mut report = MetricsReport::new(mode);
    let mut best: Option<(f64, QfModel, Evaluation)> = None;
    let (mut running, mut count) = (0.0f64, 0usize);
    let mut last_train_loss = None;
    for step in model.meta.steps..cfg.steps {
        let mut rng = component_rng(cfg.seed, &format!("batch/{step}"));
        let batch = src.batch(&sampler, cfg.batch, cfg.jpeg_mode, &mut rng)?;
        let diverged = |model: &QfModel, loss: Option<f64>, recent: f64| Error::Diverged {
            step: step as usize,
            detail: diagnostic(model, &batch, loss, recent),
        };
        let recent = if count > 0 { running / count as f64 } else { f64::NAN };
        let (out, tape) = match model.forward_train(batch.input.clone()) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => return Err(diverged(&model, None, recent)),
            Err(e) => return Err(e),
        };
        let loss = match batch_loss(mode, &out, &batch) {
            Ok(l) if l.value.is_finite() => l,
            Ok(l) => return Err(diverged(&model, Some(l.value), recent)),
            Err(Error::NonFinite(_)) => return Err(diverged(&model, None, recent)),
            Err(e) => return Err(e),
        };
        running += loss.value;
        count += 1;
        model.backward(tape, loss.grad)?;
        opt.step(&mut model.params, cfg.lr)?;
        model.meta.steps = step + 1;

        let done = step + 1;
        if done % cfg.val_interval == 0 || done == cfg.steps {
            let train_loss = running / count as f64;
            last_train_loss = Some(train_loss);
            running = 0.0;
            count = 0;
            let ev = match evaluate(&model, &val) {
                Err(Error::NonFinite(_)) => return Err(diverged(&model, None, train_loss)),
                other => other?,
            };
            let record = EvalRecord {
                step: done,
                train_loss,
                val_loss: ev.loss,
                accuracy_at_002: ev.accuracy_at_002,
                spearman: ev.spearman,
                class_accuracy: ev.confusion.as_ref().map(ConfusionMatrix::accuracy),
            };
            log::info!(
                "step {done}: train {train_loss:.5} val {:.5} acc@0.02 {:?} spearman {:?} class acc {:?}",
                ev.loss,
                record.accuracy_at_002,
                record.spearman,
                record.class_accuracy
            );
            report.records.push(record);
            model.meta.final_train_loss = Some(train_loss);
            model.meta.final_val_loss = Some(ev.loss);
            if best.as_ref().is_none_or(|(l, _, _)| ev.loss < *l) {
                best = Some((ev.loss, model.clone(), ev));
            }
        }
    }
    if model.meta.final_train_loss.is_none() {
        model.meta.final_train_loss = last_train_loss;
    }
    let best = match best {
        Some((_, m, ev)) => {
            report.best_step = Some(m.meta.steps);
            report.pairs = ev.pairs;
            report.confusion = ev.confusion;
            m
        }
        None => model.clone(),
    };
    Ok(TrainOutcome { best, last: model, report })
}

/// [`train`] over the two splits of a manifest.
pub fn train_from_manifest(model: QfModel, manifest: &CorpusManifest, cfg: &TrainConfig) -> Result<TrainOutcome> {
    manifest.require_splits()?;
    let train_images = manifest.load_split(Split::Train)?;
    let val_images = manifest.load_split(Split::Val)?;
    train(model, &train_images, &val_images, cfg)
}
