use proptest::prelude::*;

use qfpred::data::{QfSampler, SamplerMode};
use qfpred::jpeg::{jpeg_degrade, JpegColorMode, QualityFactor};
use qfpred::model::{accuracy_at_002, checkpoint, ArchSpec, HeadMode, QfModel};
use qfpred::nn::{conv2d, gradcheck, maxpool2};
use qfpred::raster::{ColorSpace, ImageBuffer};
use qfpred::stats::spearman;
use qfpred::{Shape, Tensor};

fn tensor(shape: Shape, values: &[f32]) -> Tensor {
    Tensor::from_vec(shape, values.iter().copied().cycle().take(shape.numel()).collect()).unwrap()
}

fn naive_conv(x: &Tensor, w: &Tensor, b: &[f32]) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (oh, ow) = (xs.h - ws.h + 1, xs.w - ws.w + 1);
    let mut out = Vec::new();
    for n in 0..xs.n {
        for o in 0..ws.n {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b[o] as f64;
                    for c in 0..xs.c {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                acc += x.at(n, c, y + ky, xx + kx) as f64 * w.at(o, c, ky, kx) as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_direct_sum(
        n in 1usize..3, c in 1usize..4, o in 1usize..4, k in 1usize..4,
        h in 4usize..9, w in 4usize..9,
        vals in prop::collection::vec(-2.0f32..2.0, 7..40),
    ) {
        let x = tensor(Shape::new(n, c, h, w), &vals);
        let wt = tensor(Shape::new(o, c, k, k), &vals[3..]);
        let b: Vec<f32> = (0..o).map(|i| vals[i % vals.len()]).collect();
        let y = conv2d(&x, &wt, &Tensor::channel_vector(b.clone()), 1, 0).unwrap();
        let expected = naive_conv(&x, &wt, &b);
        prop_assert_eq!(y.numel(), expected.len());
        for (a, e) in y.data().iter().zip(&expected) {
            prop_assert!((*a as f64 - e).abs() <= 1e-4 * (1.0 + e.abs()), "{} vs {}", a, e);
        }
    }

    #[test]
    fn conv_is_linear_in_input(
        vals in prop::collection::vec(-1.0f32..1.0, 10..30),
        alpha in -3.0f32..3.0,
    ) {
        let s = Shape::new(1, 2, 6, 7);
        let x1 = tensor(s, &vals);
        let x2 = tensor(s, &vals[2..]);
        let w = tensor(Shape::new(3, 2, 3, 3), &vals[1..]);
        let zero = Tensor::channel_vector(vec![0.0; 3]);
        let mix: Vec<f32> = x1.data().iter().zip(x2.data()).map(|(a, b)| a + alpha * b).collect();
        let lhs = conv2d(&Tensor::from_vec(s, mix).unwrap(), &w, &zero, 1, 0).unwrap();
        let y1 = conv2d(&x1, &w, &zero, 1, 0).unwrap();
        let y2 = conv2d(&x2, &w, &zero, 1, 0).unwrap();
        for i in 0..lhs.numel() {
            let rhs = y1.data()[i] + alpha * y2.data()[i];
            prop_assert!((lhs.data()[i] - rhs).abs() < 1e-3);
        }
    }

    #[test]
    fn maxpool_matches_window_max(
        h in 2usize..11, w in 2usize..11,
        vals in prop::collection::vec(-5i32..5, 5..50),
    ) {
        let fvals: Vec<f32> = vals.iter().map(|&v| v as f32).collect();
        let x = tensor(Shape::new(2, 2, h, w), &fvals);
        let (y, _) = maxpool2(&x).unwrap();
        prop_assert_eq!(y.shape(), Shape::new(2, 2, h / 2, w / 2));
        for n in 0..2 {
            for c in 0..2 {
                for oy in 0..h / 2 {
                    for ox in 0..w / 2 {
                        let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .map(|&(dy, dx)| x.at(n, c, 2 * oy + dy, 2 * ox + dx))
                            .fold(f32::NEG_INFINITY, f32::max);
                        prop_assert_eq!(y.at(n, c, oy, ox), m);
                    }
                }
            }
        }
    }

    #[test]
    fn jpeg_is_deterministic_and_keeps_shape(
        w in 8usize..40, h in 8usize..40, q in 1u32..=100, seed in 0u8..255,
    ) {
        let data: Vec<u8> = (0..w * h * 3).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let img = ImageBuffer::new(w, h, ColorSpace::Rgb, data).unwrap();
        let q = QualityFactor::new(q).unwrap();
        for mode in [JpegColorMode::LumaOnly, JpegColorMode::Ycbcr420] {
            let a = jpeg_degrade(&img, q, mode).unwrap();
            let b = jpeg_degrade(&img, q, mode).unwrap();
            prop_assert_eq!(a.width(), w);
            prop_assert_eq!(a.height(), h);
            prop_assert!(a == b);
        }
    }

    #[test]
    fn spearman_matches_rank_difference_formula(perm in Just((0..20).collect::<Vec<usize>>()).prop_shuffle()) {
        // Distinct values: rho = 1 - 6 sum d^2 / (n (n^2 - 1)).
        let n = perm.len() as f64;
        let x: Vec<f64> = (0..perm.len()).map(|i| i as f64 * 1.5 - 3.0).collect();
        let y: Vec<f64> = perm.iter().map(|&p| (p as f64).powi(3)).collect();
        let d2: f64 = perm.iter().enumerate().map(|(i, &p)| (i as f64 - p as f64).powi(2)).sum();
        let expected = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        prop_assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn quality_factor_normalization_round_trips(q in 1u32..=100) {
        let qf = QualityFactor::new(q).unwrap();
        prop_assert_eq!(QualityFactor::from_normalized(qf.normalized()).unwrap(), qf);
    }
}

#[test]
fn gradients_match_finite_differences_over_ten_seeds() {
    let results = gradcheck::run_all(0..10);
    assert!(results.len() >= 7);
    for r in &results {
        assert!(r.passed(), "{} rel error {:.3e}", r.name, r.max_rel_error);
    }
}

#[test]
fn log_weighted_sampler_probabilities_follow_ln() {
    let sampler = QfSampler::new(SamplerMode::LogWeighted);
    let z: f64 = (1..=100).map(|q| (1.0 + q as f64).ln()).sum();
    for q in 1..=100 {
        let expected = (1.0 + q as f64).ln() / z;
        assert!((sampler.probability(q) - expected).abs() < 1e-12, "q={q}");
    }
}

#[test]
fn accuracy_threshold_is_inclusive() {
    let pairs = [(0.50, 0.52), (0.50, 0.4799), (0.3, 0.3)];
    assert!((accuracy_at_002(&pairs).unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn receptive_field_and_stride_of_default_arch() {
    let arch = ArchSpec::default_for(1, HeadMode::Regression).unwrap();
    assert_eq!(arch.receptive_field(), 24);
    assert_eq!(arch.downsampling(), 4);
    assert_eq!(arch.output_len(64), Some(11));
    assert_eq!(arch.output_len(32), Some(3));
    assert_eq!(arch.output_len(40), Some(5));
    assert_eq!(arch.output_len(23), None);
}

#[test]
fn random_perturbations_outside_the_window_leave_cells_unchanged() {
    let arch = ArchSpec::with_widths(1, HeadMode::Regression, [4, 4, 4, 4, 4, 4]).unwrap();
    let model = QfModel::new(arch, 3).unwrap();
    let s = Shape::new(1, 1, 48, 52);
    let x = Tensor::from_vec(s, (0..s.numel()).map(|i| ((i * 7919) % 255) as f32 / 255.0).collect()).unwrap();
    let base = model.forward(&x).unwrap();
    let out = base.shape();
    for (r, c) in [(0, 0), (3, 5), (out.h - 1, out.w - 1)] {
        let mut y = x.clone();
        for yy in 0..s.h {
            for xx in 0..s.w {
                if !((4 * r..4 * r + 24).contains(&yy) && (4 * c..4 * c + 24).contains(&xx)) {
                    let i = y.index(0, 0, yy, xx);
                    y.data_mut()[i] = 1.0 - y.data()[i];
                }
            }
        }
        let after = model.forward(&y).unwrap();
        assert_eq!(base.at(0, 0, r, c).to_bits(), after.at(0, 0, r, c).to_bits(), "cell ({r},{c})");
    }
}

#[test]
fn checkpoint_bytes_are_stable() {
    let model = QfModel::new(ArchSpec::with_widths(3, HeadMode::Classification, [4, 4, 4, 4, 4, 4]).unwrap(), 11).unwrap();
    let bytes = checkpoint::to_bytes(&model).unwrap();
    let again = checkpoint::to_bytes(&checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(bytes, again);
}
