use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;

use qfpred::corpus::write_desk_corpus;
use qfpred::data::{CorpusManifest, SamplerMode, Split};
use qfpred::degrade::{CorruptionKind, CorruptionSpec};
use qfpred::eval::{self, correlation_curve, fixed_patch_eval, random_locations, PatchPolicy};
use qfpred::model::{load_checkpoint, save_checkpoint, train_from_manifest, ArchSpec, HeadMode, QfModel, TrainConfig};
use qfpred::raster::{load_image, save_image, ColorSpace, ImageBuffer};
use qfpred::restore::{before_after_grid, heldout_inputs, train_restorer, CombinedLossConfig, RestoreConfig, SweepReport};
use qfpred::rng::{component_rng, component_seed};

use crate::config::RunConfig;
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn pool(cfg: &RunConfig) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(cfg.threads()).build()?)
}

fn create_out(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn color(cfg: &RunConfig) -> anyhow::Result<ColorSpace> {
    Ok(ColorSpace::from_channels(cfg.channels.unwrap_or(1))?)
}

fn load_model(cfg: &RunConfig) -> anyhow::Result<QfModel> {
    let path = cfg.require_model()?;
    load_checkpoint(path).with_context(|| format!("loading model {}", path.display()))
}

/// Images from `--images`, or every entry of `--manifest`.
fn image_paths(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    if !cfg.images.is_empty() {
        return Ok(cfg.images.clone());
    }
    match &cfg.manifest {
        Some(m) => Ok(CorpusManifest::load(m, color(cfg)?)?.entries.into_iter().map(|e| e.path).collect()),
        None => Err(usage("give --images or --manifest")),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

pub fn train(cfg: &mut RunConfig) -> anyhow::Result<()> {
    let manifest_path = cfg.require_manifest()?.to_path_buf();
    let mode = cfg.mode.unwrap_or(HeadMode::Regression);
    let channels = cfg.channels.unwrap_or(1);
    let mut tc = cfg.train.clone().unwrap_or_else(|| TrainConfig::for_mode(mode));
    if mode == HeadMode::Classification && tc.sampler == SamplerMode::LogWeighted {
        tc.sampler = SamplerMode::Classification5;
    }
    if let Some(seed) = cfg.seed {
        tc.seed = seed;
    }
    if let Some(patch) = cfg.patch {
        tc.patch = patch;
    }
    tc.validate(mode).map_err(|e| usage(e.to_string()))?;
    let manifest = CorpusManifest::load(&manifest_path, ColorSpace::from_channels(channels)?)?;
    manifest.require_splits()?;
    let model = match &cfg.model {
        Some(resume) => {
            let m = load_checkpoint(resume).with_context(|| format!("loading {}", resume.display()))?;
            if m.mode() != mode || m.channels() != channels {
                bail!("checkpoint {} is {:?} with {} channels", resume.display(), m.mode(), m.channels());
            }
            m
        }
        None => QfModel::new(ArchSpec::default_for(channels, mode)?, component_seed(tc.seed, "init"))?,
    };
    let outcome = train_from_manifest(model, &manifest, &tc)?;
    let out = create_out(cfg)?;
    save_checkpoint(&outcome.best, out.join("model.qfp"))?;
    save_checkpoint(&outcome.last, out.join("last.qfp"))?;
    write(&out.join("metrics.csv"), outcome.report.to_csv())?;
    write(&out.join("metrics.json"), outcome.report.to_json())?;
    if let Some(r) = outcome.report.records.last() {
        println!("step {}: val loss {:.5}", r.step, r.val_loss);
    }
    cfg.mode = Some(mode);
    cfg.channels = Some(channels);
    cfg.seed = Some(tc.seed);
    cfg.patch = Some(tc.patch);
    cfg.train = Some(tc);
    Ok(())
}

pub fn infer(cfg: &mut RunConfig) -> anyhow::Result<()> {
    let model = load_model(cfg)?;
    let paths = image_paths(cfg)?;
    let scores: Vec<(PathBuf, f64)> = pool(cfg)?.install(|| {
        paths
            .par_iter()
            .map(|p| -> anyhow::Result<(PathBuf, f64)> {
                let img = load_image(p)?;
                Ok((p.clone(), eval::qf_map(&model, &img)?.mean()))
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let out = create_out(cfg)?;
    let mut csv = String::from("image,mean_qf\n");
    for (p, q) in &scores {
        println!("{}\t{q:.4}", p.display());
        csv.push_str(&format!("{},{q}\n", p.display()));
    }
    write(&out.join("infer.csv"), csv)
}

pub fn qf_map(cfg: &mut RunConfig) -> anyhow::Result<()> {
    let model = load_model(cfg)?;
    let paths = image_paths(cfg)?;
    let maps = pool(cfg)?.install(|| {
        paths
            .par_iter()
            .map(|p| -> anyhow::Result<_> { Ok(eval::qf_map(&model, &load_image(p)?)?) })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let out = create_out(cfg)?;
    let mut summary = Vec::new();
    for (p, map) in paths.iter().zip(&maps) {
        let name = stem(p);
        save_image(&map.heatmap(), out.join(format!("{name}_qfmap.png")))?;
        write(&out.join(format!("{name}_qfmap.csv")), map.to_csv())?;
        println!("{}\tmean {:.4} min {:.4} max {:.4}", p.display(), map.mean(), map.min(), map.max());
        summary.push(serde_json::json!({
            "image": p, "rows": map.rows, "cols": map.cols, "mean": map.mean(), "min": map.min(), "max": map.max(),
        }));
    }
    write(&out.join("qfmap.json"), serde_json::to_string_pretty(&summary)?)
}

/// `kind:level,level,...`
fn parse_sweep(text: &str, seed: u64) -> anyhow::Result<(CorruptionKind, Vec<CorruptionSpec>)> {
    let (kind, levels) = text.split_once(':').ok_or_else(|| usage(format!("sweep `{text}` is not `kind:levels`")))?;
    let kind: CorruptionKind = kind.parse().map_err(|e: qfpred::Error| usage(e.to_string()))?;
    let specs = levels
        .split(',')
        .map(|l| {
            let level: f64 = l.trim().parse().map_err(|_| usage(format!("bad sweep level `{l}`")))?;
            CorruptionSpec::new(kind, level, seed).map_err(|e| usage(e.to_string()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if specs.len() < 2 {
        return Err(usage("a sweep needs at least 2 levels"));
    }
    Ok((kind, specs))
}

pub fn corrupt_eval(cfg: &mut RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed();
    let sweep_text = cfg.sweep.clone().unwrap_or_else(|| "blur:0,0.5,1,2,4".into());
    let (kind, sweep) = parse_sweep(&sweep_text, component_seed(seed, "corruption"))?;
    let patch = cfg.patch.unwrap_or(64);
    let per_image = cfg.locations.unwrap_or(8);
    let model = load_model(cfg)?;
    let paths = image_paths(cfg)?;
    let stride = model.arch().downsampling();
    let results = pool(cfg)?.install(|| {
        paths
            .par_iter()
            .map(|p| -> anyhow::Result<_> {
                let img = load_image(p)?;
                let mut rng = component_rng(seed, &format!("locations/{}", p.display()));
                let locs = random_locations(img.width(), img.height(), patch, stride, per_image, &mut rng)?;
                Ok(fixed_patch_eval(&model, &img, &locs, patch, &sweep)?)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let curve = correlation_curve(kind.name(), &results)?;
    let out = create_out(cfg)?;
    write(&out.join("curve.csv"), curve.to_csv())?;
    write(&out.join("curve.json"), curve.to_json())?;
    write(&out.join("curve.svg"), curve.to_svg())?;
    for l in &curve.levels {
        println!("{} {}: {:.4} +/- {:.4} (n={})", kind.name(), l.level, l.mean, l.std, l.count);
    }
    println!("spearman {:.4}, non-increasing {:.1}%", curve.spearman, 100.0 * curve.non_increasing_fraction);
    cfg.sweep = Some(sweep_text);
    cfg.seed = Some(seed);
    cfg.patch = Some(patch);
    cfg.locations = Some(per_image);
    Ok(())
}

pub fn score_dataset(cfg: &mut RunConfig) -> anyhow::Result<()> {
    let model = load_model(cfg)?;
    let paths = image_paths(cfg)?;
    let policy = match cfg.patches {
        Some(count) => PatchPolicy::RandomPatches { count, patch: cfg.patch.unwrap_or(64), seed: cfg.seed() },
        None => PatchPolicy::WholeImage,
    };
    let id = cfg.manifest.as_deref().map(eval::corpus_id).unwrap_or_else(|| "images".into());
    let score = eval::score_dataset(&model, &id, &paths, policy)?;
    let out = create_out(cfg)?;
    write(&out.join("score.csv"), score.to_csv())?;
    write(&out.join("score.json"), score.to_json())?;
    println!("{}: {:.4} +/- {:.4} over {} images ({} skipped)", score.corpus, score.mean, score.std, score.images.len(), score.skipped.len());
    Ok(())
}

pub fn demo_loss(cfg: &mut RunConfig) -> anyhow::Result<()> {
    let lambdas = cfg.lambda.clone().unwrap_or_else(|| vec![0.1]);
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(usage("lambda values must be finite and non-negative"));
    }
    let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![cfg.seed()]);
    let mut base = cfg.restore.clone().unwrap_or_default();
    if let Some(patch) = cfg.patch {
        base.patch = patch;
    }
    let model = load_model(cfg)?;
    let color = ColorSpace::from_channels(model.channels())?;
    let manifest = CorpusManifest::load(cfg.require_manifest()?, color)?;
    manifest.require_splits()?;
    let train_images = manifest.load_split(Split::Train)?;
    let heldout = manifest.load_split(Split::Val)?;
    let before = model.params.flatten();

    let out = create_out(cfg)?;
    let mut runs = Vec::new();
    for &lambda in &lambdas {
        for (i, &seed) in seeds.iter().enumerate() {
            let rc = RestoreConfig { loss: CombinedLossConfig { lambda, ..base.loss }, seed, ..base.clone() };
            let (restorer, report) = train_restorer(&model, &train_images, &heldout, &rc)?;
            println!("lambda {lambda} seed {seed}: QF gain {:+.4}, L1 drift {:.4}", report.qf_gain, report.l1_drift);
            if i == 0 {
                let inputs: Vec<ImageBuffer> = heldout_inputs(&heldout, &rc, color)?.into_iter().take(4).collect();
                let outputs = inputs.iter().map(|img| restorer.restore(img)).collect::<qfpred::Result<Vec<_>>>()?;
                save_image(&before_after_grid(&inputs, &outputs)?, out.join(format!("grid_lambda_{lambda}.png")))?;
            }
            runs.push(report);
        }
    }
    if model.params.flatten() != before {
        bail!("QF predictor parameters changed during restorer training");
    }
    let sweep = SweepReport::from_runs(runs);
    write(&out.join("sweep.csv"), sweep.to_csv())?;
    write(&out.join("sweep.json"), sweep.to_json())?;
    if sweep.rows.len() > 1 {
        println!("QF gain monotone: {}, L1 drift monotone: {}", sweep.gain_monotone(), sweep.drift_monotone());
    }
    cfg.lambda = Some(lambdas);
    cfg.seeds = Some(seeds);
    cfg.restore = Some(base);
    Ok(())
}

pub fn make_corpus(cfg: &mut RunConfig) -> anyhow::Result<()> {
    let count = cfg.count.unwrap_or(60);
    let val = cfg.val_count.unwrap_or(count / 5);
    let seed = cfg.seed();
    let out = cfg.out_dir();
    let manifest = write_desk_corpus(&out, seed, count, val, color(cfg)?)?;
    println!("wrote {} images and {}", manifest.entries.len(), out.join("manifest.tsv").display());
    cfg.count = Some(count);
    cfg.val_count = Some(val);
    cfg.seed = Some(seed);
    Ok(())
}
