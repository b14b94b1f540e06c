//! The built-in verification battery: finite-difference gradient checks for
//! every differentiable op and the composite objective, loss identities, and
//! metric/schedule oracles. The CLI `verify` subcommand and the acceptance
//! suite both run these.

use rand_chacha::ChaCha8Rng;

use crate::data::{gen_gaussian_mixture, Split};
use crate::error::Result;
use crate::gradcheck::finite_diff_check;
use crate::losses::{self, DistillConfig, TeacherBatch};
use crate::model::{Family, Model, ModelSpec};
use crate::ops;
use crate::rng::{next_symmetric, next_uniform, stream, StreamPurpose};
use crate::schedule::{lr_at, ScheduleMode, ScheduleSpec};
use crate::tensor::Tensor;

pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-3;
pub const GRAD_INSTANCES: usize = 20;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Worst measured deviation (op-specific meaning).
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Check {
        Check { name: name.to_string(), pass: measured <= threshold, measured, threshold, detail: detail.into() }
    }

    fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Check {
        Check { name: name.to_string(), pass, measured: if pass { 0.0 } else { 1.0 }, threshold: 0.0, detail: detail.into() }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| next_symmetric(rng) * scale).collect();
    Tensor::new(shape, data).expect("random tensor")
}

/// Positive random values in [lo, hi). Linear ops (matmul, conv, bias sums)
/// get positive test points: their backward is linear in the data, so signs
/// add no bug coverage, while sign cancellation would make the relative-error
/// measurement ill-conditioned.
fn rand_tensor_pos(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| lo + next_uniform(rng) * (hi - lo)).collect();
    Tensor::new(shape, data).expect("random tensor")
}

/// Random values bounded away from zero, for kinked ops.
fn rand_tensor_offset(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f32, min_abs: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n)
        .map(|_| {
            let u = next_symmetric(rng) * scale;
            u + min_abs.copysign(u)
        })
        .collect();
    Tensor::new(shape, data).expect("random tensor")
}

/// Runs `build` as a gradient check over `instances` seeded points produced
/// by `make_point`, reporting the worst unflagged relative error.
fn grad_case<F, P>(name: &str, seed: u64, instances: usize, make_point: P, build: F) -> Check
where
    P: Fn(&mut ChaCha8Rng) -> Tensor,
    F: Fn(&mut crate::tape::Tape, crate::tape::VarId, &mut ChaCha8Rng) -> Result<crate::tape::VarId>,
{
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for i in 0..instances {
        let mut rng = stream(seed, StreamPurpose::Init, i as u64);
        let point = make_point(&mut rng);
        let report = match finite_diff_check(
            |tape, leaf| build(tape, leaf, &mut rng),
            &point,
            GRAD_STEP,
            GRAD_TOL,
        ) {
            Ok(r) => r,
            Err(e) => return Check::flag(name, false, format!("instance {i}: {e}")),
        };
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
            detail = format!(
                "instance {i}, coord {:?}, {} flagged",
                report.worst_coord,
                report.flagged.len()
            );
        }
    }
    Check::new(name, worst, GRAD_TOL, detail)
}

/// Finite-difference checks for every differentiable op.
pub fn gradient_checks(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();

    checks.push(grad_case(
        "grad/matmul_lhs",
        seed,
        GRAD_INSTANCES,
        |rng| rand_tensor_pos(rng, vec![3, 4], 0.25, 1.5),
        |tape, leaf, rng| {
            let rhs = tape.constant(rand_tensor_pos(rng, vec![4, 2], 0.25, 1.5));
            let prod = tape.matmul(leaf, rhs)?;
            let sq = tape.mul(prod, prod)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/matmul_rhs",
        seed ^ 1,
        GRAD_INSTANCES,
        |rng| rand_tensor_pos(rng, vec![4, 2], 0.25, 1.5),
        |tape, leaf, rng| {
            let lhs = tape.constant(rand_tensor_pos(rng, vec![3, 4], 0.25, 1.5));
            let prod = tape.matmul(lhs, leaf)?;
            let sq = tape.mul(prod, prod)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/conv2d_input",
        seed ^ 2,
        GRAD_INSTANCES,
        |rng| rand_tensor_pos(rng, vec![1, 2, 6, 6], 0.25, 1.25),
        |tape, leaf, rng| {
            let kernel = tape.constant(rand_tensor_pos(rng, vec![3, 2, 3, 3], 0.2, 1.0));
            let out = tape.conv2d(leaf, kernel, 1, 1)?;
            let sq = tape.mul(out, out)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/conv2d_kernel",
        seed ^ 3,
        GRAD_INSTANCES,
        |rng| rand_tensor_pos(rng, vec![3, 2, 3, 3], 0.2, 1.0),
        |tape, leaf, rng| {
            let input = tape.constant(rand_tensor_pos(rng, vec![2, 2, 5, 5], 0.25, 1.25));
            let out = tape.conv2d(input, leaf, 2, 1)?;
            let sq = tape.mul(out, out)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/relu",
        seed ^ 4,
        GRAD_INSTANCES,
        // Kept away from the kink; the flagging rule covers exact zeros.
        |rng| rand_tensor_offset(rng, vec![12], 1.0, 0.02),
        |tape, leaf, rng| {
            let weights = tape.constant(rand_tensor(rng, vec![12], 1.0));
            let act = tape.relu(leaf)?;
            let weighted = tape.mul(act, weights)?;
            tape.sum(weighted)
        },
    ));
    checks.push(grad_case(
        "grad/avgpool2d",
        seed ^ 5,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![2, 2, 4, 4], 1.0),
        |tape, leaf, _| {
            let pooled = tape.avgpool2d(leaf, 2)?;
            let sq = tape.mul(pooled, pooled)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/add",
        seed ^ 6,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![3, 3], 1.0),
        |tape, leaf, rng| {
            let other = tape.constant(rand_tensor(rng, vec![3, 3], 1.0));
            let s = tape.add(leaf, other)?;
            let sq = tape.mul(s, s)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/sub",
        seed ^ 7,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![7], 1.0),
        |tape, leaf, rng| {
            let other = tape.constant(rand_tensor(rng, vec![7], 1.0));
            let d = tape.sub(leaf, other)?;
            let sq = tape.mul(d, d)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/mul",
        seed ^ 8,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![9], 1.2),
        |tape, leaf, rng| {
            let other = tape.constant(rand_tensor(rng, vec![9], 1.2));
            let p = tape.mul(leaf, other)?;
            tape.sum(p)
        },
    ));
    checks.push(grad_case(
        "grad/scale",
        seed ^ 9,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![6], 1.0),
        |tape, leaf, _| {
            let scaled = tape.scale(leaf, -2.5)?;
            let sq = tape.mul(scaled, scaled)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/add_bias_matrix",
        seed ^ 10,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![4], 1.0),
        |tape, leaf, rng| {
            let x = tape.constant(rand_tensor(rng, vec![3, 4], 1.0));
            let out = tape.add_bias(x, leaf)?;
            let sq = tape.mul(out, out)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/add_bias_channels",
        seed ^ 11,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![3], 1.0),
        |tape, leaf, rng| {
            let x = tape.constant(rand_tensor(rng, vec![2, 3, 2, 2], 1.0));
            let out = tape.add_bias(x, leaf)?;
            let sq = tape.mul(out, out)?;
            tape.sum(sq)
        },
    ));
    checks.push(grad_case(
        "grad/sum",
        seed ^ 12,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![11], 2.0),
        |tape, leaf, _| tape.sum(leaf),
    ));
    checks.push(grad_case(
        "grad/mean",
        seed ^ 13,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![4, 3], 2.0),
        |tape, leaf, _| {
            let sq = tape.mul(leaf, leaf)?;
            tape.mean(sq)
        },
    ));
    checks.push(grad_case(
        "grad/reshape",
        seed ^ 14,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![2, 6], 1.0),
        |tape, leaf, rng| {
            let r = tape.reshape(leaf, vec![3, 4])?;
            let other = tape.constant(rand_tensor(rng, vec![3, 4], 1.0));
            let p = tape.mul(r, other)?;
            tape.sum(p)
        },
    ));
    for tau in [1.0f32, 4.0] {
        checks.push(grad_case(
            &format!("grad/log_softmax_tau{tau}"),
            seed ^ 15,
            GRAD_INSTANCES,
            |rng| rand_tensor(rng, vec![3, 5], 3.0),
            move |tape, leaf, rng| {
                let lsm = tape.log_softmax(leaf, tau)?;
                let weights = tape.constant(rand_tensor(rng, vec![3, 5], 1.0));
                let p = tape.mul(lsm, weights)?;
                tape.sum(p)
            },
        ));
    }
    checks.push(grad_case(
        "grad/pick_classes",
        seed ^ 16,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![4, 6], 2.0),
        |tape, leaf, _| {
            let picked = tape.pick_classes(leaf, &[0, 5, 2, 3])?;
            let sq = tape.mul(picked, picked)?;
            tape.mean(sq)
        },
    ));
    checks.push(grad_case(
        "grad/channel_sumsq",
        seed ^ 17,
        GRAD_INSTANCES,
        |rng| rand_tensor(rng, vec![2, 3, 2, 2], 1.0),
        |tape, leaf, rng| {
            let maps = tape.channel_sumsq(leaf)?;
            let weights = tape.constant(rand_tensor(rng, vec![2, 4], 1.0));
            let p = tape.mul(maps, weights)?;
            tape.sum(p)
        },
    ));
    checks.push(grad_case(
        "grad/row_l2norm",
        seed ^ 18,
        GRAD_INSTANCES,
        // Rows stay away from the zero-norm point.
        |rng| rand_tensor_offset(rng, vec![3, 4], 1.0, 0.15),
        |tape, leaf, rng| {
            let normed = tape.row_l2norm(leaf)?;
            let weights = tape.constant(rand_tensor(rng, vec![3, 4], 1.0));
            let p = tape.mul(normed, weights)?;
            tape.sum(p)
        },
    ));

    checks.extend(composite_loss_checks(seed ^ 19));
    checks
}

/// Gradient checks of the full composite objective through both families,
/// perturbing each parameter tensor in turn.
fn composite_loss_checks(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    let cfg = DistillConfig::default();

    // Dense pair.
    let spec = ModelSpec {
        family: Family::Mlp,
        depth_factor: 1,
        width_factor: 1,
        input_shape: vec![3],
        num_classes: 4,
        init_seed: seed,
    };
    let param_count = spec.parameter_template().expect("template").len();
    for pi in 0..param_count {
        let name = format!("grad/composite_mlp_param{pi}");
        checks.push(composite_param_check(&name, seed, &spec, None, &cfg, pi));
    }

    // Conv pair with attention transfer active.
    let conv = ModelSpec {
        family: Family::Convnet,
        depth_factor: 1,
        width_factor: 1,
        input_shape: vec![1, 8, 8],
        num_classes: 3,
        init_seed: seed ^ 0x77,
    };
    let cfg_at = DistillConfig { at_beta: 10.0, ..DistillConfig::default() };
    let teacher_spec = ModelSpec { width_factor: 1, init_seed: seed ^ 0x99, ..conv.clone() };
    let param_count = conv.parameter_template().expect("template").len();
    for pi in 0..param_count {
        let name = format!("grad/composite_conv_at_param{pi}");
        checks.push(composite_param_check(&name, seed ^ 0x3, &conv, Some(&teacher_spec), &cfg_at, pi));
    }
    checks
}

fn composite_param_check(
    name: &str,
    seed: u64,
    student_spec: &ModelSpec,
    teacher_spec: Option<&ModelSpec>,
    cfg: &DistillConfig,
    param_index: usize,
) -> Check {
    let instances = 5; // per parameter; every parameter of both families is covered
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for i in 0..instances {
        let mut rng = stream(seed, StreamPurpose::Init, 1000 + i as u64);
        let student = Model::build(&ModelSpec { init_seed: seed ^ (i as u64) << 3, ..student_spec.clone() })
            .expect("student build");
        let teacher_model = teacher_spec.map(|s| {
            Model::build(&ModelSpec { init_seed: seed ^ 0xABC ^ (i as u64), ..s.clone() }).expect("teacher build")
        });
        let batch_shape: Vec<usize> =
            std::iter::once(3).chain(student_spec.input_shape.iter().copied()).collect();
        let batch = rand_tensor(&mut rng, batch_shape, 1.0);
        let labels: Vec<u32> = (0..3).map(|r| (r as u32) % student_spec.num_classes as u32).collect();
        let teacher_batch = teacher_model.as_ref().map(|t| {
            let (logits, acts) = t.forward(&batch).expect("teacher forward");
            let attention = if cfg.at_beta > 0.0 && t.spec().family == Family::Convnet {
                acts.iter().map(|a| losses::attention_map_value(a).expect("map")).collect()
            } else {
                Vec::new()
            };
            TeacherBatch { logits, attention }
        });
        // Teacher batch for the dense pair: random detached logits.
        let teacher_batch = teacher_batch.unwrap_or_else(|| TeacherBatch {
            logits: rand_tensor(&mut rng, vec![3, student_spec.num_classes], 2.0),
            attention: Vec::new(),
        });

        let point = student.params()[param_index].tensor.clone();
        let report = match finite_diff_check(
            |tape, leaf| {
                let (logits, acts, _) = student.forward_on_tape_with(tape, &batch, param_index, leaf)?;
                let parts = losses::composite_loss(
                    tape,
                    logits,
                    &acts,
                    Some(&teacher_batch),
                    &labels,
                    cfg,
                    0,
                )?;
                Ok(parts.total)
            },
            &point,
            GRAD_STEP,
            GRAD_TOL,
        ) {
            Ok(r) => r,
            Err(e) => return Check::flag(name, false, format!("instance {i}: {e}")),
        };
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
            detail = format!("instance {i}, coord {:?}, {} flagged", report.worst_coord, report.flagged.len());
        }
    }
    Check::new(name, worst, GRAD_TOL, detail)
}

/// Loss identities and distribution properties.
pub fn loss_identity_checks(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = stream(seed, StreamPurpose::Init, 7);

    // kd_loss(s==t) equals tau^2 * entropy of the softened teacher.
    checks.push(kd_identity_check_with("loss/kd_equals_tau_sq_entropy", losses::kd_value));

    // soften rows sum to 1 within 1e-6 across magnitudes.
    let mut worst_sum = 0.0f64;
    for mag in [1.0f32, 10.0, 100.0, 1e4] {
        for _ in 0..50 {
            let logits = rand_tensor(&mut rng, vec![1, 8], mag);
            let p = losses::soften(&logits, 4.0).expect("soften");
            let s: f64 = p.data().iter().map(|&v| f64::from(v)).sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
    }
    checks.push(Check::new("loss/soften_rows_sum_to_one", worst_sum, 1e-6, "magnitudes up to 1e4"));

    // Argmax invariance of soften across temperatures, 1000 random rows.
    let mut violations = 0usize;
    for i in 0..1000 {
        let mut r = stream(seed ^ 0x50f7, StreamPurpose::Init, i);
        let logits = rand_tensor(&mut r, vec![1, 10], 5.0);
        let base = Tensor::argmax_row(logits.data());
        for tau in [0.5f32, 1.0, 4.0, 20.0] {
            let p = losses::soften(&logits, tau).expect("soften");
            if Tensor::argmax_row(p.data()) != base {
                violations += 1;
            }
        }
    }
    checks.push(Check::new("loss/soften_preserves_argmax", violations as f64, 0.0, "1000 rows x 4 temperatures"));

    // Entropy non-decreasing in tau on 100 random rows.
    let entropy = |p: &[f64]| -> f64 {
        p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
    };
    let mut worst_drop = 0.0f64;
    for i in 0..100 {
        let mut r = stream(seed ^ 0xE47, StreamPurpose::Init, i);
        let logits = rand_tensor(&mut r, vec![1, 6], 4.0);
        let mut prev = -1.0f64;
        for tau in [0.5f32, 1.0, 2.0, 4.0, 8.0, 20.0] {
            let h = entropy(&ops::softmax_rows_f64(&logits, tau).expect("soften"));
            if prev >= 0.0 && h < prev {
                worst_drop = worst_drop.max(prev - h);
            }
            prev = h;
        }
    }
    checks.push(Check::new("loss/soften_entropy_monotone_in_tau", worst_drop, 1e-7, "100 rows, 6 temperatures"));

    // kd_loss lower bound: kd(s, t) >= tau^2 H(p_t), equality at s == t,
    // strictly greater on perturbed students.
    let tau = 4.0f32;
    let mut worst_gap = f64::INFINITY;
    let mut equality_err = 0.0f64;
    for i in 0..100 {
        let mut r = stream(seed ^ 0xB0, StreamPurpose::Init, i);
        let teacher = rand_tensor(&mut r, vec![2, 5], 2.0);
        let p = ops::softmax_rows_f64(&teacher, tau).expect("soften");
        let bound = f64::from(tau) * f64::from(tau)
            * (entropy(&p[..5]) + entropy(&p[5..])) / 2.0;
        let at_eq = losses::kd_value(&teacher, &teacher, tau).expect("kd");
        equality_err = equality_err.max((at_eq - bound).abs());
        let perturbed = {
            let mut d = teacher.data().to_vec();
            for v in d.iter_mut() {
                *v += 0.3 * next_symmetric(&mut r);
            }
            Tensor::new(vec![2, 5], d).expect("perturbed")
        };
        let kd = losses::kd_value(&perturbed, &teacher, tau).expect("kd");
        worst_gap = worst_gap.min(kd - bound);
    }
    checks.push(Check::new("loss/kd_equality_matches_entropy_bound", equality_err, 1e-6, "100 teachers"));
    checks.push(Check::flag(
        "loss/kd_strictly_above_bound_when_perturbed",
        worst_gap > 0.0,
        format!("min gap {worst_gap:.3e}"),
    ));

    // Teacher logit shift invariance.
    let student = rand_tensor(&mut rng, vec![2, 6], 1.0);
    let teacher = rand_tensor(&mut rng, vec![2, 6], 1.0);
    let shifted = Tensor::new(vec![2, 6], teacher.data().iter().map(|&v| v + 7.5).collect()).expect("shift");
    let a = losses::kd_value(&student, &teacher, 4.0).expect("kd");
    let b = losses::kd_value(&student, &shifted, 4.0).expect("kd");
    checks.push(Check::new("loss/kd_shift_invariant", (a - b).abs(), 1e-5, "constant +7.5 shift"));

    checks
}

/// The kd-at-equality identity, parameterized over the kd implementation so a
/// deliberately wrong one (mutation fixture) must fail the check.
pub fn kd_identity_check_with<F>(name: &str, kd: F) -> Check
where
    F: Fn(&Tensor, &Tensor, f32) -> Result<f64>,
{
    let entropy = |p: &[f64]| -> f64 {
        p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
    };
    let mut worst = 0.0f64;
    for i in 0..50 {
        let mut r = stream(0xD15711, StreamPurpose::Init, i);
        let logits = rand_tensor(&mut r, vec![3, 7], 2.0);
        for tau in [1.0f32, 4.0, 20.0] {
            let p = ops::softmax_rows_f64(&logits, tau).expect("soften");
            let want: f64 = (0..3).map(|row| entropy(&p[row * 7..(row + 1) * 7])).sum::<f64>()
                / 3.0
                * f64::from(tau)
                * f64::from(tau);
            match kd(&logits, &logits, tau) {
                Ok(got) => worst = worst.max((got - want).abs()),
                Err(e) => return Check::flag(name, false, format!("{e}")),
            }
        }
    }
    Check::new(name, worst, 1e-6, "50 logit draws x 3 temperatures")
}

/// Schedule, metric and persistence oracles.
pub fn metric_oracle_checks(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();

    // Schedule fidelity (exact equality with the decay formula).
    let cifar = ScheduleSpec::cifar_preset();
    let mut ok = true;
    for (epoch, drops) in [(0usize, 0u32), (59, 0), (60, 1), (120, 2), (180, 3), (199, 3)] {
        let want = 0.1 * 0.2f64.powi(drops as i32);
        ok &= lr_at(&cifar, epoch).expect("lr") == want;
    }
    checks.push(Check::flag("schedule/step_decay_exact", ok, "0.1 dropping 0.2 every 60"));

    let mut ok = true;
    for (n, k) in [(35usize, 10usize), (50, 15), (65, 20), (80, 25)] {
        let spec = ScheduleSpec { total_epochs: n, mode: ScheduleMode::ShrunkStep, ..ScheduleSpec::cifar_preset() };
        for epoch in 0..n {
            let want = 0.1 * 0.2f64.powi((epoch / k) as i32);
            ok &= lr_at(&spec, epoch).expect("lr") == want;
        }
    }
    checks.push(Check::flag("schedule/shrunk_modes_exact", ok, "modes 10/35 15/50 20/65 25/80"));

    // Soften sanity on a fixed row (direct evaluation).
    let logits = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).expect("logits");
    let p = losses::soften(&logits, 1.0).expect("soften");
    let z = 1.0f64.exp() + 2.0f64.exp() + 3.0f64.exp();
    let worst = (0..3)
        .map(|j| (f64::from(p.data()[j]) - ((j as f64 + 1.0).exp() / z)).abs())
        .fold(0.0, f64::max)
        / 1.0;
    checks.push(Check::new("metric/soften_direct_evaluation", worst, 1e-6, "[1,2,3] at tau=1"));

    // kd_error self-agreement and streaming-vs-whole equality.
    let data_train = gen_gaussian_mixture(4, 3, 90, 0.7, seed, Split::Train).expect("data");
    let spec = ModelSpec {
        family: Family::Mlp,
        depth_factor: 1,
        width_factor: 1,
        input_shape: vec![3],
        num_classes: 4,
        init_seed: seed,
    };
    let student = Model::build(&spec).expect("student");
    let teacher = Model::build(&ModelSpec { width_factor: 2, init_seed: seed ^ 5, ..spec.clone() }).expect("teacher");
    let self_err = crate::orchestrator::kd_error(&student, &student, &data_train).expect("kd_error");
    checks.push(Check::new("metric/kd_error_self_zero", self_err, 0.0, "model vs itself"));

    let streamed = crate::orchestrator::kd_error(&student, &teacher, &data_train).expect("kd_error");
    let all: Vec<usize> = (0..data_train.len()).collect();
    let (inputs, _) = data_train.gather(&all).expect("gather");
    let (s, _) = student.forward(&inputs).expect("fwd");
    let (t, _) = teacher.forward(&inputs).expect("fwd");
    let k = 4;
    let mut disagree = 0usize;
    for row in 0..data_train.len() {
        if Tensor::argmax_row(&s.data()[row * k..(row + 1) * k])
            != Tensor::argmax_row(&t.data()[row * k..(row + 1) * k])
        {
            disagree += 1;
        }
    }
    let brute = disagree as f64 / data_train.len() as f64;
    checks.push(Check::new("metric/kd_error_streaming_equals_brute_force", (streamed - brute).abs(), 0.0, "360 samples"));

    // Checkpoint round trip.
    let bytes = crate::checkpoint::checkpoint_bytes(&student).expect("bytes");
    let reloaded = crate::checkpoint::parse_checkpoint(&bytes).expect("parse");
    let same = crate::checkpoint::checkpoint_bytes(&reloaded).expect("bytes") == bytes;
    checks.push(Check::flag("persist/checkpoint_round_trip", same, "serialize-parse-serialize"));

    // Small-image record round trip.
    let mut r = stream(seed, StreamPurpose::GenNoise, 3);
    let labels: Vec<u8> = (0..4).map(|_| (next_uniform(&mut r) * 10.0) as u8).collect();
    let pixels: Vec<u8> = (0..4 * crate::cifar::IMAGE_BYTES)
        .map(|_| (next_uniform(&mut r) * 256.0) as u8)
        .collect();
    let records = crate::cifar::RawRecords { labels, pixels };
    let rt = crate::cifar::parse_records(&crate::cifar::records_to_bytes(&records).expect("bytes"))
        .map(|p| p == records)
        .unwrap_or(false);
    checks.push(Check::flag("persist/small_image_round_trip", rt, "4 synthetic records"));

    checks
}

/// The full battery.
pub fn run_all(seed: u64) -> Vec<Check> {
    let mut checks = gradient_checks(seed);
    checks.extend(loss_identity_checks(seed));
    checks.extend(metric_oracle_checks(seed));
    checks
}
