//! Engine benchmarks: kernel throughput and end-to-end epoch cost.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use distillab_core::data::{gen_gaussian_mixture, AugmentPolicy, Split};
use distillab_core::losses::{ce_loss, kd_loss, DistillConfig};
use distillab_core::model::{Family, Model, ModelSpec};
use distillab_core::ops;
use distillab_core::rng::{next_symmetric, stream, StreamPurpose};
use distillab_core::schedule::{ScheduleMode, ScheduleSpec};
use distillab_core::train::{train, TrainData};
use distillab_core::{Tape, Tensor};

fn rand_tensor(seed: u64, shape: Vec<usize>) -> Tensor {
    let mut rng = stream(seed, StreamPurpose::Init, 0);
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| next_symmetric(&mut rng)).collect();
    Tensor::new(shape, data).unwrap()
}

fn bench_kernels(c: &mut Criterion) {
    let a = rand_tensor(1, vec![64, 64]);
    let b = rand_tensor(2, vec![64, 64]);
    c.bench_function("matmul_64x64", |bench| {
        bench.iter(|| ops::matmul(black_box(&a), black_box(&b)).unwrap())
    });

    let img = rand_tensor(3, vec![8, 3, 16, 16]);
    let kernel = rand_tensor(4, vec![8, 3, 3, 3]);
    c.bench_function("conv2d_8x3x16x16", |bench| {
        bench.iter(|| ops::conv2d(black_box(&img), black_box(&kernel), 1, 1).unwrap())
    });

    let logits = rand_tensor(5, vec![128, 10]);
    c.bench_function("log_softmax_128x10", |bench| {
        bench.iter(|| ops::log_softmax(black_box(&logits), 4.0).unwrap())
    });
}

fn bench_losses(c: &mut Criterion) {
    let student = rand_tensor(6, vec![128, 10]);
    let teacher = rand_tensor(7, vec![128, 10]);
    let labels: Vec<u32> = (0..128).map(|i| (i % 10) as u32).collect();
    c.bench_function("ce_loss_backward_128x10", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let s = tape.leaf(student.clone().with_grad());
            let loss = ce_loss(&mut tape, s, &labels).unwrap();
            tape.backward(loss).unwrap();
            black_box(tape.grad(s).unwrap()[0])
        })
    });
    c.bench_function("kd_loss_backward_128x10", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let s = tape.leaf(student.clone().with_grad());
            let loss = kd_loss(&mut tape, s, &teacher, 4.0).unwrap();
            tape.backward(loss).unwrap();
            black_box(tape.grad(s).unwrap()[0])
        })
    });
}

fn bench_training(c: &mut Criterion) {
    let data = TrainData {
        train: gen_gaussian_mixture(10, 16, 50, 1.0, 3, Split::Train).unwrap(),
        test: gen_gaussian_mixture(10, 16, 50, 1.0, 3, Split::Test).unwrap(),
        batch_size: 128,
        augment: AugmentPolicy::None,
    };
    let spec = ModelSpec {
        family: Family::Mlp,
        depth_factor: 2,
        width_factor: 4,
        input_shape: vec![16],
        num_classes: 10,
        init_seed: 0,
    };
    let schedule = ScheduleSpec {
        total_epochs: 1,
        mode: ScheduleMode::Step { drop_every: 1 },
        initial_lr: 0.1,
        drop_factor: 0.2,
        momentum: 0.9,
        nesterov: false,
        weight_decay: 0.0,
    };
    let cfg = DistillConfig { alpha: 1.0, ..DistillConfig::default() };
    c.bench_function("train_epoch_mlp_w4_500x16", |bench| {
        bench.iter(|| {
            let model = Model::build(&spec).unwrap();
            train(model, &data, None, &cfg, &schedule, 1).unwrap()
        })
    });
}

criterion_group!(benches, bench_kernels, bench_losses, bench_training);
criterion_main!(benches);
