use criterion::{black_box, criterion_group, criterion_main, Criterion};

use qfpred::corpus::desk_image;
use qfpred::jpeg::{jpeg_degrade, JpegColorMode, QualityFactor};
use qfpred::model::{ArchSpec, HeadMode};
use qfpred::nn::{conv2d, conv2d_backward, mse_loss, Optimizer, OptimizerKind};
use qfpred::raster::ColorSpace;
use qfpred::{Shape, Tensor};

fn ramp(shape: Shape) -> Tensor {
    let data = (0..shape.numel()).map(|i| ((i * 37) % 101) as f32 / 101.0 - 0.5).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn conv(c: &mut Criterion) {
    let x = ramp(Shape::new(16, 32, 32, 32));
    let w = ramp(Shape::new(64, 32, 3, 3));
    let b = Tensor::channel_vector(vec![0.0; 64]);
    c.bench_function("conv3x3 16x32x32x32 -> 64", |bn| bn.iter(|| conv2d(black_box(&x), &w, &b, 1, 0).unwrap()));
    let y = conv2d(&x, &w, &b, 1, 0).unwrap();
    let gy = ramp(y.shape());
    c.bench_function("conv3x3 backward", |bn| bn.iter(|| conv2d_backward(black_box(&x), &w, &gy, 1, 0, true).unwrap()));
}

fn jpeg(c: &mut Criterion) {
    let q = QualityFactor::new(40).unwrap();
    let gray = desk_image(1, 0, ColorSpace::Gray);
    let rgb = desk_image(1, 0, ColorSpace::Rgb);
    c.bench_function("jpeg_degrade 256 gray", |bn| bn.iter(|| jpeg_degrade(black_box(&gray), q, JpegColorMode::LumaOnly).unwrap()));
    c.bench_function("jpeg_degrade 256 rgb 4:2:0", |bn| bn.iter(|| jpeg_degrade(black_box(&rgb), q, JpegColorMode::Ycbcr420).unwrap()));
}

fn train_step(c: &mut Criterion) {
    let arch = ArchSpec::default_for(1, HeadMode::Regression).unwrap();
    let (net, mut params) = arch.build(1).unwrap();
    let mut opt = Optimizer::new(OptimizerKind::adam());
    let x = ramp(Shape::new(16, 1, 32, 32));
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("step P=32 batch 16", |bn| {
        bn.iter(|| {
            let (y, tape) = net.forward_train(&mut params, x.clone()).unwrap();
            let loss = mse_loss(&y, &Tensor::full(y.shape(), 0.7)).unwrap();
            net.backward(&mut params, tape, loss.grad).unwrap();
            opt.step(&mut params, 1e-3).unwrap();
        })
    });
    group.finish();
}

criterion_group!(benches, conv, jpeg, train_step);
criterion_main!(benches);
