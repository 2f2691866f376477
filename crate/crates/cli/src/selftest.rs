use anyhow::bail;

use qfpred::corpus::desk_corpus;
use qfpred::degrade::psnr;
use qfpred::jpeg::{jpeg_degrade, JpegColorMode, QualityFactor};
use qfpred::model::{checkpoint, ArchSpec, HeadMode, QfModel};
use qfpred::nn::gradcheck;
use qfpred::raster::ColorSpace;
use qfpred::{Shape, Tensor};

use crate::config::RunConfig;

struct Outcome {
    name: &'static str,
    detail: String,
    ok: bool,
}

pub fn run(cfg: &mut RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(cfg.out_dir())?;
    let seed = cfg.seed();
    let checks: Vec<(&'static str, fn(u64) -> anyhow::Result<(bool, String)>)> = vec![
        ("gradients", gradients),
        ("jpeg-identity", jpeg_identity),
        ("jpeg-determinism", jpeg_determinism),
        ("psnr-monotone", psnr_monotone),
        ("rf-locality", rf_locality),
        ("shape-contract", shape_contract),
        ("checkpoint-round-trip", checkpoint_round_trip),
    ];
    let mut outcomes = Vec::new();
    for (name, check) in checks {
        let (ok, detail) = check(seed).unwrap_or_else(|e| (false, format!("error: {e:#}")));
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        outcomes.push(Outcome { name, detail, ok });
    }
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.ok).collect();
    if !failed.is_empty() {
        let names: Vec<_> = failed.iter().map(|o| format!("{} ({})", o.name, o.detail)).collect();
        bail!("selftest failed: {}", names.join(", "));
    }
    Ok(())
}

fn gradients(seed: u64) -> anyhow::Result<(bool, String)> {
    let results = gradcheck::run_all(seed..seed + 10);
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let bad: Vec<_> = results.iter().filter(|r| !r.passed()).map(|r| r.name.clone()).collect();
    Ok((bad.is_empty(), format!("{} checks, worst rel err {worst:.2e} {}", results.len(), bad.join(" "))))
}

fn jpeg_identity(seed: u64) -> anyhow::Result<(bool, String)> {
    let q = QualityFactor::new(100)?;
    let mut worst = 0u8;
    for img in desk_corpus(seed, 4, ColorSpace::Gray) {
        let out = jpeg_degrade(&img, q, JpegColorMode::LumaOnly)?;
        for (a, b) in img.data().iter().zip(out.data()) {
            worst = worst.max(a.abs_diff(*b));
        }
    }
    Ok((worst <= 1, format!("max change {worst} at q=100")))
}

fn jpeg_determinism(seed: u64) -> anyhow::Result<(bool, String)> {
    let img = &desk_corpus(seed, 1, ColorSpace::Rgb)[0];
    let q = QualityFactor::new(35)?;
    let same = [JpegColorMode::LumaOnly, JpegColorMode::Ycbcr420]
        .iter()
        .all(|&m| matches!((jpeg_degrade(img, q, m), jpeg_degrade(img, q, m)), (Ok(a), Ok(b)) if a == b));
    Ok((same, "repeated encodes identical".into()))
}

fn psnr_monotone(seed: u64) -> anyhow::Result<(bool, String)> {
    let corpus = desk_corpus(seed, 3, ColorSpace::Gray);
    let mut means = Vec::new();
    for q in (10..=90).rev().step_by(10) {
        let q = QualityFactor::new(q)?;
        let mut total = 0.0;
        for img in &corpus {
            total += psnr(img, &jpeg_degrade(img, q, JpegColorMode::LumaOnly)?)?;
        }
        means.push(total / corpus.len() as f64);
    }
    let ok = means.windows(2).all(|w| w[1] <= w[0]);
    Ok((ok, format!("mean PSNR {:.1} dB at q=90 to {:.1} dB at q=10", means[0], means[means.len() - 1])))
}

fn small_model(seed: u64) -> anyhow::Result<QfModel> {
    let arch = ArchSpec::with_widths(1, HeadMode::Regression, [4, 4, 6, 6, 8, 8])?;
    Ok(QfModel::new(arch, seed)?)
}

fn random_input(seed: u64, h: usize, w: usize) -> Tensor {
    use rand::Rng;
    let mut rng = qfpred::rng::component_rng(seed, "selftest/input");
    let data = (0..h * w).map(|_| rng.random::<f32>()).collect();
    Tensor::from_vec(Shape::new(1, 1, h, w), data).expect("sized")
}

fn rf_locality(seed: u64) -> anyhow::Result<(bool, String)> {
    let model = small_model(seed)?;
    let (rf, stride) = (model.arch().receptive_field(), model.arch().downsampling());
    let input = random_input(seed, 64, 64);
    let base = model.forward(&input)?;
    let [_, _, oh, ow] = base.shape().dims();
    let (r, c) = (oh / 2, ow / 2);
    let (y0, x0) = (r * stride, c * stride);
    let mut perturbed = input.clone();
    for y in 0..64 {
        for x in 0..64 {
            let inside = (y0..y0 + rf).contains(&y) && (x0..x0 + rf).contains(&x);
            if !inside {
                let i = perturbed.index(0, 0, y, x);
                perturbed.data_mut()[i] += 0.5;
            }
        }
    }
    let after = model.forward(&perturbed)?;
    let same = base.at(0, 0, r, c).to_bits() == after.at(0, 0, r, c).to_bits();
    let changed = base.data().iter().zip(after.data()).any(|(a, b)| a != b);
    Ok((same && changed, format!("cell ({r},{c}) with rf {rf} unchanged: {same}")))
}

fn shape_contract(seed: u64) -> anyhow::Result<(bool, String)> {
    let model = QfModel::new(ArchSpec::default_for(1, HeadMode::Regression)?, seed)?;
    let mut ok = true;
    let mut seen = Vec::new();
    for (h, w) in [(64, 64), (96, 96), (128, 160)] {
        let out = model.forward(&random_input(seed, h, w))?;
        let [_, c, oh, ow] = out.shape().dims();
        let expected = (model.arch().output_len(h), model.arch().output_len(w));
        ok &= c == 1 && (Some(oh), Some(ow)) == expected;
        seen.push(format!("{h}x{w}->{oh}x{ow}"));
    }
    Ok((ok, seen.join(" ")))
}

fn checkpoint_round_trip(seed: u64) -> anyhow::Result<(bool, String)> {
    let model = small_model(seed)?;
    let bytes = checkpoint::to_bytes(&model)?;
    let restored = checkpoint::from_bytes(&bytes)?;
    let input = random_input(seed, 48, 56);
    let a = model.forward(&input)?;
    let b = restored.forward(&input)?;
    let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok((same, format!("{} bytes", bytes.len())))
}
