//! End-to-end acceptance run on the procedural desk corpus. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

use std::time::Instant;

use anyhow::{ensure, Context};
use rand::Rng;

use qfpred::corpus::desk_corpus;
use qfpred::data::{QfSampler, SamplerMode};
use qfpred::degrade::{gaussian_blur, salt_pepper, zero_fill_undersample, CorruptionKind, CorruptionSpec, DEFAULT_CENTER_FRACTION};
use qfpred::eval::{fixed_patch_eval, random_locations, score_images, PatchPolicy};
use qfpred::jpeg::{jpeg_degrade, JpegColorMode, QualityFactor};
use qfpred::model::{load_checkpoint, save_checkpoint, train, ArchSpec, HeadMode, QfModel, TrainConfig, NUM_CLASSES};
use qfpred::nn::gradcheck;
use qfpred::raster::{ColorSpace, ImageBuffer};
use qfpred::restore::{train_restorer, RestoreConfig};
use qfpred::rng::{component_rng, component_seed};
use qfpred::{Shape, Tensor};

const CORPUS_SEED: u64 = 2024;
const CORPUS_SIZE: usize = 60;
const VAL_IMAGES: usize = 12;
const PATCH: usize = 32;
const REGRESSION_STEPS: u64 = 8000;
const CLASSIFICATION_STEPS: u64 = 6000;
const EVAL_PATCH: usize = 64;

struct Corpus {
    train: Vec<ImageBuffer>,
    val: Vec<ImageBuffer>,
    /// Both splits: the corpus the sweeps and dataset scores run on.
    all: Vec<ImageBuffer>,
}

type Outcome = anyhow::Result<(bool, String)>;

fn main() {
    let t0 = Instant::now();
    let all = desk_corpus(CORPUS_SEED, CORPUS_SIZE, ColorSpace::Gray);
    let corpus = Corpus {
        train: all[..CORPUS_SIZE - VAL_IMAGES].to_vec(),
        val: all[CORPUS_SIZE - VAL_IMAGES..].to_vec(),
        all: all.clone(),
    };
    let mut results = Vec::new();
    let mut record = |id: usize, name: &str, outcome: Outcome| {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        println!("{} [{id:>2}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        results.push(ok);
    };

    record(1, "autodiff gradient checks", c1_gradients());
    record(2, "codec identity at q=100", c2_identity(&all));
    record(3, "codec PSNR monotone in q", c3_psnr(&all));
    record(4, "sampler shape", c4_sampler());

    let regression = train_regression(&corpus);
    let model = regression.as_ref().ok().map(|(m, _)| m);
    record(5, "regression training convergence", match &regression {
        Ok((_, outcome)) => Ok(outcome.clone()),
        Err(e) => Err(anyhow::anyhow!("{e:#}")),
    });
    record(6, "classification confusion diagonal", c6_classification(&corpus));
    let with_model = |f: fn(&QfModel, &Corpus) -> Outcome| match model {
        Some(m) => f(m, &corpus),
        None => Err(anyhow::anyhow!("regression model unavailable")),
    };
    record(7, "blur generalization", with_model(c7_blur));
    record(8, "salt-pepper generalization", with_model(c8_noise));
    record(9, "undersampling central patches", with_model(c9_undersample));
    record(10, "dataset ordering clean vs q=60", with_model(c10_dataset));
    record(11, "receptive field locality and shapes", with_model(c11_locality));
    record(12, "checkpoint round trip", with_model(c12_checkpoint));
    record(13, "perceptual loss lambda sweep", with_model(c13_sweep));

    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria passed in {:.0}s", results.len(), t0.elapsed().as_secs_f64());
    if passed != results.len() {
        std::process::exit(1);
    }
}

fn progress(msg: &str) {
    eprintln!("  .. {msg}");
}

// Oracles shared by several criteria.

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for i in 0..v.len() {
        let less = v.iter().filter(|&&x| x < v[i]).count() as f64;
        let equal = v.iter().filter(|&&x| x == v[i]).count() as f64;
        out[i] = less + (equal + 1.0) / 2.0;
    }
    out
}

fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn psnr_oracle(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let mse = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.data().len() as f64;
    if mse == 0.0 { f64::INFINITY } else { 10.0 * (255.0f64 * 255.0 / mse).log10() }
}

/// Mean of the model's quality map over a patch.
fn patch_quality(model: &QfModel, img: &ImageBuffer, x: usize, y: usize, size: usize) -> anyhow::Result<f64> {
    let t = model.image_tensor(&img.crop(x, y, size, size)?)?;
    let map = model.quality_map(&t)?;
    Ok(map.data().iter().map(|&v| v as f64).sum::<f64>() / map.numel() as f64)
}

fn q(v: u32) -> QualityFactor {
    QualityFactor::new(v).expect("valid quality")
}

// 1..4: no training needed.

fn c1_gradients() -> Outcome {
    let results = gradcheck::run_all(0..10);
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<_> = results.iter().filter(|r| !(r.max_rel_error < 1e-3)).map(|r| r.name.as_str()).collect();
    let names: Vec<_> = results.iter().map(|r| r.name.as_str()).collect();
    Ok((failed.is_empty(), format!("{} over 10 seeds, worst rel err {worst:.2e} {failed:?}", names.join(","))))
}

fn c2_identity(corpus: &[ImageBuffer]) -> Outcome {
    let fixtures = &corpus[..20];
    let (mut worst, mut changed, mut total) = (0, 0usize, 0usize);
    for img in fixtures {
        let out = jpeg_degrade(img, q(100), JpegColorMode::LumaOnly)?;
        for (a, b) in img.data().iter().zip(out.data()) {
            let d = a.abs_diff(*b);
            worst = worst.max(d);
            changed += (d > 0) as usize;
            total += 1;
        }
    }
    Ok((worst <= 1, format!("max pixel change {worst} over 20 images, {changed}/{total} pixels changed")))
}

fn c3_psnr(corpus: &[ImageBuffer]) -> Outcome {
    let qs: Vec<u32> = (1..=10).rev().map(|k| 10 * k).collect();
    let mut means = Vec::new();
    for &qv in &qs {
        let mut finite = Vec::new();
        for img in corpus {
            let p = psnr_oracle(img, &jpeg_degrade(img, q(qv), JpegColorMode::LumaOnly)?);
            finite.push(p.min(100.0));
        }
        means.push(finite.iter().sum::<f64>() / finite.len() as f64);
    }
    let ordered = means.windows(2).filter(|w| w[1] <= w[0]).count();
    let frac = ordered as f64 / (means.len() - 1) as f64;
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.1}")).collect();
    Ok((frac >= 0.95, format!("{ordered}/{} pairs ordered, dB {}", means.len() - 1, shown.join(" "))))
}

fn c4_sampler() -> Outcome {
    // Chi-square critical value for 99 degrees of freedom at alpha = 0.001.
    const CHI2_CRIT: f64 = 148.23;
    let sampler = QfSampler::new(SamplerMode::LogWeighted);
    let mut rng = component_rng(7, "acceptance/sampler");
    let draws = 100_000;
    let mut counts = [0u64; 101];
    for _ in 0..draws {
        counts[sampler.sample(&mut rng).q.value() as usize] += 1;
    }
    let z: f64 = (1..=100).map(|v| (1.0 + v as f64).ln()).sum();
    let chi2: f64 = (1..=100)
        .map(|v| {
            let expected = draws as f64 * (1.0 + v as f64).ln() / z;
            (counts[v] as f64 - expected).powi(2) / expected
        })
        .sum();
    let high: u64 = counts[80..=100].iter().sum();
    let low: u64 = counts[1..=20].iter().sum();
    let ok = high > low && chi2 < CHI2_CRIT;
    Ok((ok, format!("mass [80,100] {:.3} vs [1,20] {:.3}, chi2 {chi2:.1} (crit {CHI2_CRIT})", high as f64 / draws as f64, low as f64 / draws as f64)))
}

// 5: regression training, reused by 7..13.

struct HeldOut {
    patches: Vec<(ImageBuffer, f64)>,
}

/// Degraded held-out patches with q uniform on 1..=100.
fn held_out(images: &[ImageBuffer], count: usize, seed: u64) -> anyhow::Result<HeldOut> {
    let mut rng = component_rng(seed, "acceptance/held-out");
    let mut patches = Vec::with_capacity(count);
    for _ in 0..count {
        let img = &images[rng.random_range(0..images.len())];
        let (x, y) = (rng.random_range(0..=img.width() - EVAL_PATCH), rng.random_range(0..=img.height() - EVAL_PATCH));
        let qv = rng.random_range(1..=100u32);
        let crop = img.crop(x, y, EVAL_PATCH, EVAL_PATCH)?;
        patches.push((jpeg_degrade(&crop, q(qv), JpegColorMode::LumaOnly)?, qv as f64 / 100.0));
    }
    Ok(HeldOut { patches })
}

/// Spearman of patch-mean prediction vs truth, and accuracy@0.02 over cells.
fn held_out_metrics(model: &QfModel, set: &HeldOut) -> anyhow::Result<(f64, f64)> {
    let (mut means, mut truth) = (Vec::new(), Vec::new());
    let (mut hits, mut cells) = (0usize, 0usize);
    for (patch, y) in &set.patches {
        let map = model.quality_map(&model.image_tensor(patch)?)?;
        for &v in map.data() {
            hits += ((v as f64 - y).abs() <= 0.02 + 1e-12) as usize;
            cells += 1;
        }
        means.push(map.data().iter().map(|&v| v as f64).sum::<f64>() / map.numel() as f64);
        truth.push(*y);
    }
    Ok((spearman_oracle(&means, &truth), hits as f64 / cells as f64))
}

fn train_regression(corpus: &Corpus) -> anyhow::Result<(QfModel, (bool, String))> {
    let t0 = Instant::now();
    let cfg = TrainConfig { steps: REGRESSION_STEPS, patch: PATCH, seed: 7, ..TrainConfig::for_mode(HeadMode::Regression) };
    ensure!(cfg.lr == 1e-3 && cfg.batch == 16 && cfg.steps <= 20_000, "training budget");
    let untrained = QfModel::new(ArchSpec::default_for(1, HeadMode::Regression)?, component_seed(cfg.seed, "init"))?;
    let set = held_out(&corpus.val, 512, 11)?;
    let (_, base_acc) = held_out_metrics(&untrained, &set)?;
    progress(&format!("training regression model for {} steps", cfg.steps));
    let outcome = train(untrained, &corpus.train, &corpus.val, &cfg).context("regression training")?;
    let model = outcome.best;
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    let (rho, acc) = held_out_metrics(&model, &set)?;
    let ok = rho >= 0.9 && acc > base_acc && minutes <= 45.0;
    let detail = format!(
        "spearman {rho:.3}, acc@0.02 {acc:.3} vs untrained {base_acc:.3}, best step {}, {minutes:.1} min",
        model.meta.steps
    );
    Ok((model, (ok, detail)))
}

// 6

fn c6_classification(corpus: &Corpus) -> Outcome {
    let t0 = Instant::now();
    let cfg = TrainConfig { steps: CLASSIFICATION_STEPS, patch: PATCH, seed: 8, ..TrainConfig::for_mode(HeadMode::Classification) };
    let model = QfModel::new(ArchSpec::default_for(1, HeadMode::Classification)?, component_seed(cfg.seed, "init"))?;
    progress(&format!("training classification model for {} steps", cfg.steps));
    let model = train(model, &corpus.train, &corpus.val, &cfg)?.best;
    let classes = [1u32, 20, 40, 60, 80];
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut rng = component_rng(12, "acceptance/classification");
    for (truth, &qv) in classes.iter().enumerate() {
        for _ in 0..100 {
            let img = &corpus.val[rng.random_range(0..corpus.val.len())];
            let (x, y) = (rng.random_range(0..=img.width() - EVAL_PATCH), rng.random_range(0..=img.height() - EVAL_PATCH));
            let patch = jpeg_degrade(&img.crop(x, y, EVAL_PATCH, EVAL_PATCH)?, q(qv), JpegColorMode::LumaOnly)?;
            // One label per patch: argmax of the softmax averaged over the map.
            let logits = model.forward(&model.image_tensor(&patch)?)?;
            let s = logits.shape();
            let mut mean_prob = [0.0f64; NUM_CLASSES];
            for r in 0..s.h {
                for c in 0..s.w {
                    let z: Vec<f64> = (0..NUM_CLASSES).map(|k| logits.at(0, k, r, c) as f64).collect();
                    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                    let sum: f64 = e.iter().sum();
                    for k in 0..NUM_CLASSES {
                        mean_prob[k] += e[k] / sum;
                    }
                }
            }
            let best = (0..NUM_CLASSES).max_by(|&a, &b| mean_prob[a].total_cmp(&mean_prob[b])).unwrap();
            confusion[truth][best] += 1;
        }
    }
    let dominant = (0..NUM_CLASSES).all(|r| (0..NUM_CLASSES).all(|c| confusion[r][r] >= confusion[r][c]));
    let rows: Vec<String> = confusion.iter().map(|r| format!("{r:?}")).collect();
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    Ok((dominant && minutes <= 30.0, format!("confusion {} (rows q=1,20,40,60,80), {minutes:.1} min", rows.join(" "))))
}

// 7..9: corruption sweeps over the desk corpus.

fn sweep_spearman(model: &QfModel, corpus: &Corpus, kind: CorruptionKind, levels: &[f64]) -> anyhow::Result<(f64, Vec<f64>)> {
    let (mut idx, mut vals) = (Vec::new(), Vec::new());
    let mut level_means = vec![0.0; levels.len()];
    for (i, img) in corpus.all.iter().enumerate() {
        let mut rng = component_rng(13, &format!("acceptance/locations/{i}"));
        let locs = random_locations(img.width(), img.height(), EVAL_PATCH, 4, 8, &mut rng)?;
        let sweep = levels
            .iter()
            .map(|&l| CorruptionSpec::new(kind, l, component_seed(14, &format!("corruption/{i}"))))
            .collect::<qfpred::Result<Vec<_>>>()?;
        let result = fixed_patch_eval(model, img, &locs, EVAL_PATCH, &sweep)?;
        for (l, row) in result.qf.iter().enumerate() {
            for &v in row {
                idx.push(l as f64);
                vals.push(v);
                level_means[l] += v / (row.len() * corpus.all.len()) as f64;
            }
        }
    }
    Ok((spearman_oracle(&idx, &vals), level_means))
}

fn fmt_means(levels: &[f64], means: &[f64]) -> String {
    levels.iter().zip(means).map(|(l, m)| format!("{l}:{m:.3}")).collect::<Vec<_>>().join(" ")
}

fn c7_blur(model: &QfModel, corpus: &Corpus) -> Outcome {
    let levels = [0.0, 0.5, 1.0, 2.0, 4.0];
    let (rho, means) = sweep_spearman(model, corpus, CorruptionKind::GaussianBlur, &levels)?;
    // Spot check the sweep against a direct application.
    let direct = gaussian_blur(&corpus.all[0], 2.0)?;
    ensure!(CorruptionSpec::new(CorruptionKind::GaussianBlur, 2.0, 0)?.apply(&corpus.all[0])? == direct);
    Ok((rho <= -0.8, format!("spearman {rho:.3}; {}", fmt_means(&levels, &means))))
}

fn c8_noise(model: &QfModel, corpus: &Corpus) -> Outcome {
    let levels = [0.0, 0.01, 0.02, 0.05, 0.1];
    let (rho, means) = sweep_spearman(model, corpus, CorruptionKind::SaltPepper, &levels)?;
    let noisy = salt_pepper(&corpus.all[0], 0.05, 3)?;
    let flipped = noisy.data().iter().zip(corpus.all[0].data()).filter(|(a, b)| a != b && (**a == 0 || **a == 255)).count();
    ensure!(flipped > 0, "salt-pepper left the image unchanged");
    let boost = means.windows(2).next().map(|w| w[1] > w[0]).unwrap_or(false);
    Ok((rho <= -0.8, format!("spearman {rho:.3}; {}; initial boost {boost}", fmt_means(&levels, &means))))
}

fn c9_undersample(model: &QfModel, corpus: &Corpus) -> Outcome {
    let rates = [1.0, 2.0, 4.0, 8.0];
    let images = &corpus.all;
    let mut monotone = 0;
    let mut means = vec![0.0; rates.len()];
    for (i, img) in images.iter().enumerate() {
        let (x, y) = ((img.width() - EVAL_PATCH) / 2, (img.height() - EVAL_PATCH) / 2);
        let mut seq = Vec::new();
        for &r in &rates {
            let under = zero_fill_undersample(img, r, DEFAULT_CENTER_FRACTION, component_seed(15, &format!("mask/{i}")))?;
            seq.push(patch_quality(model, &under, x & !3, y & !3, EVAL_PATCH)?);
        }
        monotone += seq.windows(2).all(|w| w[1] <= w[0]) as usize;
        for (m, v) in means.iter_mut().zip(&seq) {
            *m += v / images.len() as f64;
        }
    }
    let frac = monotone as f64 / images.len() as f64;
    Ok((frac >= 0.8, format!("{monotone}/{} images non-increasing; {}", images.len(), fmt_means(&rates, &means))))
}

fn c10_dataset(model: &QfModel, corpus: &Corpus) -> Outcome {
    let degraded = corpus.all.iter().map(|img| jpeg_degrade(img, q(60), JpegColorMode::LumaOnly)).collect::<qfpred::Result<Vec<_>>>()?;
    let clean = score_images(model, "desk", &corpus.all, PatchPolicy::WholeImage)?;
    let low = score_images(model, "desk-q60", &degraded, PatchPolicy::WholeImage)?;
    // Independent whole-image means.
    let mut oracle = 0.0;
    for img in &corpus.all {
        oracle += patch_quality_whole(model, img)? / corpus.all.len() as f64;
    }
    ensure!((oracle - clean.mean).abs() < 1e-6, "score mismatch {oracle} vs {}", clean.mean);
    let gap = clean.mean - low.mean;
    Ok((gap > 0.05, format!("clean {:.3}, q=60 {:.3}, gap {gap:.3}", clean.mean, low.mean)))
}

fn patch_quality_whole(model: &QfModel, img: &ImageBuffer) -> anyhow::Result<f64> {
    let map = model.quality_map(&model.image_tensor(img)?)?;
    Ok(map.data().iter().map(|&v| v as f64).sum::<f64>() / map.numel() as f64)
}

// 11, 12

fn fixture(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = component_rng(seed, "acceptance/fixture");
    Tensor::from_vec(Shape::new(1, 1, h, w), (0..h * w).map(|_| rng.random::<f32>()).collect()).expect("sized")
}

fn c11_locality(model: &QfModel, _: &Corpus) -> Outcome {
    // Receptive field and stride from first principles for four 3x3 / 2x2-pool
    // stages: both are checked against the arch, then used as the window.
    let arch = model.arch();
    let (rf, stride) = (arch.receptive_field(), arch.downsampling());
    ensure!(rf == 24 && stride == 4, "rf {rf} stride {stride}");
    let mut detail = Vec::new();
    let mut ok = true;
    for (h, w) in [(64, 64), (96, 96), (128, 160)] {
        let out = model.forward(&fixture(h, w, 1))?.shape();
        let expect = |n: usize| (n - rf) / stride + 1;
        ok &= out.h == expect(h) && out.w == expect(w) && Some(out.h) == arch.output_len(h) && Some(out.w) == arch.output_len(w);
        detail.push(format!("{h}x{w}->{}x{}", out.h, out.w));
    }
    let x = fixture(96, 96, 2);
    let base = model.forward(&x)?;
    let mut cells = 0;
    let mut rng = component_rng(16, "acceptance/locality");
    for _ in 0..6 {
        let (r, c) = (rng.random_range(0..base.shape().h), rng.random_range(0..base.shape().w));
        let mut y = x.clone();
        for yy in 0..96 {
            for xx in 0..96 {
                if !((stride * r..stride * r + rf).contains(&yy) && (stride * c..stride * c + rf).contains(&xx)) {
                    let i = y.index(0, 0, yy, xx);
                    y.data_mut()[i] = rng.random();
                }
            }
        }
        let after = model.forward(&y)?;
        let same = base.at(0, 0, r, c).to_bits() == after.at(0, 0, r, c).to_bits();
        ok &= same;
        cells += same as usize;
    }
    Ok((ok, format!("{cells}/6 cells bit-identical; {}", detail.join(" "))))
}

fn c12_checkpoint(model: &QfModel, corpus: &Corpus) -> Outcome {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.qfp");
    save_checkpoint(model, &path)?;
    let loaded = load_checkpoint(&path)?;
    let mut same = true;
    for img in corpus.val.iter().take(4) {
        let t = model.image_tensor(img)?;
        let (a, b) = (model.forward(&t)?, loaded.forward(&t)?);
        same &= a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    Ok((same, format!("{} bytes, 4 fixtures", std::fs::metadata(&path)?.len())))
}

// 13

fn c13_sweep(model: &QfModel, corpus: &Corpus) -> Outcome {
    let lambdas = [0.0, 0.01, 0.1, 1.0, 10.0];
    let seeds = [1u64, 2, 3];
    let base = RestoreConfig::default();
    ensure!(base.input_quality.value() == 40);
    let before = model.params.flatten();
    let heldout = &corpus.val[..6];
    let mut rows = Vec::new();
    let mut zero_l1 = f64::NAN;
    for &lambda in &lambdas {
        let (mut gain, mut drift) = (0.0, 0.0);
        for &seed in &seeds {
            let mut cfg = RestoreConfig { seed, ..base.clone() };
            cfg.loss.lambda = lambda;
            progress(&format!("restorer lambda {lambda} seed {seed}"));
            let (restorer, report) = train_restorer(model, &corpus.train, heldout, &cfg)?;
            // Recompute the report's columns from the images themselves.
            let inputs = qfpred::restore::heldout_inputs(heldout, &cfg, ColorSpace::Gray)?;
            let (mut g, mut d) = (0.0, 0.0);
            for input in &inputs {
                let out = restorer.restore(input)?;
                g += patch_quality_whole(model, &out)? - patch_quality_whole(model, input)?;
                d += input.data().iter().zip(out.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>() / (255.0 * input.data().len() as f64);
            }
            let n = inputs.len() as f64;
            ensure!((g / n - report.qf_gain).abs() < 1e-9 && (d / n - report.l1_drift).abs() < 1e-9, "report disagrees with recomputation");
            gain += g / n / seeds.len() as f64;
            drift += d / n / seeds.len() as f64;
        }
        if lambda == 0.0 {
            zero_l1 = drift;
        }
        rows.push((lambda, gain, drift));
    }
    ensure!(model.params.flatten() == before, "QF predictor changed during restorer training");
    let gain_ok = rows.windows(2).all(|w| w[1].1 >= w[0].1);
    let drift_ok = rows.windows(2).all(|w| w[1].2 >= w[0].2);
    let table: Vec<String> = rows.iter().map(|(l, g, d)| format!("{l}:{g:+.4}/{d:.4}")).collect();
    Ok((
        gain_ok && drift_ok && zero_l1 < 0.01,
        format!("gain monotone {gain_ok}, drift monotone {drift_ok}, lambda 0 L1 {zero_l1:.4}; {}", table.join(" ")),
    ))
}
