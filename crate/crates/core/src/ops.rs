//! Forward kernels over dense tensors.
//!
//! These are the single source of truth for forward semantics: the tape calls
//! them when recording and evaluation-mode code (teacher forward, metrics,
//! ensembles) calls them directly. All loops run in a fixed order with no
//! parallelism, so repeated runs are bitwise identical. Reductions accumulate
//! in f64 and cast the result back to f32.

use crate::error::{Error, Result};
use crate::tensor::{check_same_shape, Tensor};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
        return Err(Error::dimension(format!(
            "matmul: {ash:?} x {bsh:?}"
        )));
    }
    let (m, k, n) = (ash[0], ash[1], bsh[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    let t = Tensor::new(vec![m, n], out)?;
    t.check_finite("matmul")?;
    Ok(t)
}

/// Output spatial extent of a cross-correlation; errors when it is not integral.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel > padded {
        return Err(Error::dimension(format!(
            "conv2d: kernel extent {kernel} exceeds padded input {padded}"
        )));
    }
    let span = padded - kernel;
    if span % stride != 0 {
        return Err(Error::dimension(format!(
            "conv2d: non-integral output extent ({padded} - {kernel}) / {stride}"
        )));
    }
    Ok(span / stride + 1)
}

/// Cross-correlation of an NCHW input with an FCkk kernel bank.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::parameter("conv2d: stride must be >= 1".to_string()));
    }
    let ish = input.shape();
    let ksh = kernel.shape();
    if ish.len() != 4 || ksh.len() != 4 {
        return Err(Error::dimension(format!(
            "conv2d: input {ish:?} and kernel {ksh:?} must be 4-D"
        )));
    }
    let (n, c, h, w) = (ish[0], ish[1], ish[2], ish[3]);
    let (f, kc, kh, kw) = (ksh[0], ksh[1], ksh[2], ksh[3]);
    if kc != c {
        return Err(Error::dimension(format!(
            "conv2d: input channels {c} vs kernel channels {kc}"
        )));
    }
    let oh = conv_out_extent(h, kh, stride, padding)?;
    let ow = conv_out_extent(w, kw, stride, padding)?;

    let id = input.data();
    let kd = kernel.data();
    let mut out = vec![0.0f32; n * f * oh * ow];
    for bi in 0..n {
        for fi in 0..f {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for ci in 0..c {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = ((bi * c + ci) * h + iy as usize) * w;
                            let krow = ((fi * c + ci) * kh + ky) * kw;
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += id[irow + ix as usize] * kd[krow + kx];
                            }
                        }
                    }
                    out[((bi * f + fi) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    let t = Tensor::new(vec![n, f, oh, ow], out)?;
    t.check_finite("conv2d")?;
    Ok(t)
}

pub fn relu(x: &Tensor) -> Result<Tensor> {
    let out: Vec<f32> = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(x.shape().to_vec(), out)
}

/// Non-overlapping average pooling with a square window; spatial extents must
/// divide evenly.
pub fn avgpool2d(x: &Tensor, window: usize) -> Result<Tensor> {
    if window == 0 {
        return Err(Error::parameter("avgpool2d: window must be >= 1".to_string()));
    }
    let sh = x.shape();
    if sh.len() != 4 {
        return Err(Error::dimension(format!("avgpool2d: input {sh:?} must be 4-D")));
    }
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    if h % window != 0 || w % window != 0 {
        return Err(Error::dimension(format!(
            "avgpool2d: window {window} does not divide spatial extents {h}x{w}"
        )));
    }
    let (oh, ow) = (h / window, w / window);
    let xd = x.data();
    let inv = (window * window) as f64;
    let mut out = vec![0.0f32; n * c * oh * ow];
    for bi in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for dy in 0..window {
                        let row = ((bi * c + ci) * h + oy * window + dy) * w + ox * window;
                        for dx in 0..window {
                            acc += f64::from(xd[row + dx]);
                        }
                    }
                    out[((bi * c + ci) * oh + oy) * ow + ox] = (acc / inv) as f32;
                }
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("add", a.shape(), b.shape())?;
    let out: Vec<f32> = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    let t = Tensor::new(a.shape().to_vec(), out)?;
    t.check_finite("add")?;
    Ok(t)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("sub", a.shape(), b.shape())?;
    let out: Vec<f32> = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
    let t = Tensor::new(a.shape().to_vec(), out)?;
    t.check_finite("sub")?;
    Ok(t)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("mul", a.shape(), b.shape())?;
    let out: Vec<f32> = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    let t = Tensor::new(a.shape().to_vec(), out)?;
    t.check_finite("mul")?;
    Ok(t)
}

/// Adds a per-column bias to a [N, K] matrix or a per-channel bias to an
/// NCHW map. This is the only sanctioned broadcast in the engine.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let xs = x.shape();
    let bs = bias.shape();
    match (xs.len(), bs.len()) {
        (2, 1) if xs[1] == bs[0] => {
            let k = xs[1];
            let out: Vec<f32> = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| v + bias.data()[i % k])
                .collect();
            let t = Tensor::new(xs.to_vec(), out)?;
            t.check_finite("add_bias")?;
            Ok(t)
        }
        (4, 1) if xs[1] == bs[0] => {
            let (c, spatial) = (xs[1], xs[2] * xs[3]);
            let out: Vec<f32> = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| v + bias.data()[(i / spatial) % c])
                .collect();
            let t = Tensor::new(xs.to_vec(), out)?;
            t.check_finite("add_bias")?;
            Ok(t)
        }
        _ => Err(Error::dimension(format!("add_bias: {xs:?} + {bs:?}"))),
    }
}

pub fn scale(x: &Tensor, factor: f32) -> Result<Tensor> {
    let out: Vec<f32> = x.data().iter().map(|&v| v * factor).collect();
    let t = Tensor::new(x.shape().to_vec(), out)?;
    t.check_finite("scale")?;
    Ok(t)
}

/// Sum of all elements. Returns the scalar tensor and the f64 accumulator so
/// callers needing extended precision (metrics, gradient checks) keep it.
pub fn sum(x: &Tensor) -> (Tensor, f64) {
    let acc: f64 = x.data().iter().map(|&v| f64::from(v)).sum();
    (Tensor::scalar(acc as f32), acc)
}

/// Mean of all elements, with its f64 accumulator.
pub fn mean(x: &Tensor) -> (Tensor, f64) {
    let acc: f64 = x.data().iter().map(|&v| f64::from(v)).sum();
    let m = acc / x.len() as f64;
    (Tensor::scalar(m as f32), m)
}

pub fn reshape(x: &Tensor, new_shape: Vec<usize>) -> Result<Tensor> {
    let want: usize = new_shape.iter().product();
    if want != x.len() || new_shape.iter().any(|&e| e == 0) {
        return Err(Error::dimension(format!(
            "reshape: {:?} -> {new_shape:?}",
            x.shape()
        )));
    }
    Tensor::new(new_shape, x.data().to_vec())
}

fn check_rows(op: &str, x: &Tensor) -> Result<(usize, usize)> {
    let sh = x.shape();
    if sh.len() != 2 {
        return Err(Error::dimension(format!("{op}: input {sh:?} must be [N, K]")));
    }
    if sh[1] < 2 {
        return Err(Error::parameter(format!("{op}: need at least 2 classes, got {}", sh[1])));
    }
    Ok((sh[0], sh[1]))
}

fn check_temperature(op: &str, tau: f32) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::parameter(format!("{op}: temperature must be > 0, got {tau}")));
    }
    Ok(())
}

/// Row-wise log of the temperature-softened distribution, computed per row in
/// f64 with max-subtraction. Also returns the softened probabilities, which
/// backward needs.
pub fn log_softmax(x: &Tensor, tau: f32) -> Result<(Tensor, Vec<f32>)> {
    check_temperature("log_softmax", tau)?;
    let (n, k) = check_rows("log_softmax", x)?;
    x.check_finite("log_softmax input")?;
    let tau = f64::from(tau);
    let xd = x.data();
    let mut out = vec![0.0f32; n * k];
    let mut probs = vec![0.0f32; n * k];
    for r in 0..n {
        let row = &xd[r * k..(r + 1) * k];
        let mut mx = f64::NEG_INFINITY;
        for &v in row {
            let s = f64::from(v) / tau;
            if s > mx {
                mx = s;
            }
        }
        let mut denom = 0.0f64;
        for &v in row {
            denom += (f64::from(v) / tau - mx).exp();
        }
        let log_denom = denom.ln();
        for (j, &v) in row.iter().enumerate() {
            let centered = f64::from(v) / tau - mx;
            out[r * k + j] = (centered - log_denom) as f32;
            probs[r * k + j] = ((centered - log_denom).exp()) as f32;
        }
    }
    let t = Tensor::new(vec![n, k], out)?;
    t.check_finite("log_softmax")?;
    Ok((t, probs))
}

/// Temperature-softened probabilities (the distillation targets).
pub fn softmax(x: &Tensor, tau: f32) -> Result<Tensor> {
    let (_, probs) = log_softmax(x, tau)?;
    Tensor::new(x.shape().to_vec(), probs)
}

/// Row-major f64 log-softened-probabilities, for evaluation-path losses that
/// need extended precision end to end.
pub fn log_softmax_rows_f64(x: &Tensor, tau: f32) -> Result<Vec<f64>> {
    check_temperature("log_softmax", tau)?;
    let (n, k) = check_rows("log_softmax", x)?;
    x.check_finite("log_softmax input")?;
    let tau = f64::from(tau);
    let xd = x.data();
    let mut out = vec![0.0f64; n * k];
    for r in 0..n {
        let row = &xd[r * k..(r + 1) * k];
        let mx = row.iter().map(|&v| f64::from(v) / tau).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|&v| (f64::from(v) / tau - mx).exp()).sum();
        let log_denom = denom.ln();
        for (j, &v) in row.iter().enumerate() {
            out[r * k + j] = f64::from(v) / tau - mx - log_denom;
        }
    }
    Ok(out)
}

/// Row-major f64 softened probabilities.
pub fn softmax_rows_f64(x: &Tensor, tau: f32) -> Result<Vec<f64>> {
    Ok(log_softmax_rows_f64(x, tau)?.into_iter().map(f64::exp).collect())
}

/// Picks x[i, labels[i]] per row, producing an [N] vector.
pub fn pick_classes(x: &Tensor, labels: &[u32]) -> Result<Tensor> {
    let (n, k) = check_rows("pick_classes", x)?;
    if labels.len() != n {
        return Err(Error::dimension(format!(
            "pick_classes: {n} rows vs {} labels",
            labels.len()
        )));
    }
    let mut out = vec![0.0f32; n];
    for (i, &lab) in labels.iter().enumerate() {
        if lab as usize >= k {
            return Err(Error::data(format!(
                "pick_classes: label {lab} out of range [0, {k}) at row {i}"
            )));
        }
        out[i] = x.data()[i * k + lab as usize];
    }
    Tensor::new(vec![n], out)
}

/// Per-sample squared-channel-sum map of an NCHW activation, flattened to
/// [N, H*W]. This is the raw attention map before normalization.
pub fn channel_sumsq(x: &Tensor) -> Result<Tensor> {
    let sh = x.shape();
    if sh.len() != 4 {
        return Err(Error::dimension(format!(
            "channel_sumsq: input {sh:?} must be 4-D"
        )));
    }
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let spatial = h * w;
    let xd = x.data();
    let mut out = vec![0.0f32; n * spatial];
    for bi in 0..n {
        for p in 0..spatial {
            let mut acc = 0.0f64;
            for ci in 0..c {
                let v = f64::from(xd[(bi * c + ci) * spatial + p]);
                acc += v * v;
            }
            out[bi * spatial + p] = acc as f32;
        }
    }
    let t = Tensor::new(vec![n, spatial], out)?;
    t.check_finite("channel_sumsq")?;
    Ok(t)
}

/// L2-normalizes each row; an all-zero row stays zero. Returns the tensor and
/// the per-row norms, which backward needs.
pub fn row_l2norm(x: &Tensor) -> Result<(Tensor, Vec<f32>)> {
    let sh = x.shape();
    if sh.len() != 2 {
        return Err(Error::dimension(format!(
            "row_l2norm: input {sh:?} must be [N, M]"
        )));
    }
    let (n, m) = (sh[0], sh[1]);
    let xd = x.data();
    let mut out = vec![0.0f32; n * m];
    let mut norms = vec![0.0f32; n];
    for r in 0..n {
        let row = &xd[r * m..(r + 1) * m];
        let nrm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        norms[r] = nrm as f32;
        if nrm > 0.0 {
            for (j, &v) in row.iter().enumerate() {
                out[r * m + j] = (f64::from(v) / nrm) as f32;
            }
        }
    }
    let t = Tensor::new(vec![n, m], out)?;
    Ok((t, norms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let id = t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(matmul(&a, &id).unwrap().data(), a.data());
    }

    #[test]
    fn matmul_hand_arithmetic() {
        // [[1,2]] x [[3],[4]] = [[1*3 + 2*4]] = [[11]]
        let a = t(vec![1, 2], vec![1.0, 2.0]);
        let b = t(vec![2, 1], vec![3.0, 4.0]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_zero_case() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = t(vec![3, 2], vec![1.0; 6]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both() {
        let a = t(vec![2, 3], vec![0.0; 6]);
        let b = t(vec![2, 2], vec![0.0; 4]);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn conv2d_identity_kernel() {
        let x = t(vec![1, 1, 3, 3], (1..=9).map(|v| v as f32).collect());
        let k = t(vec![1, 1, 1, 1], vec![1.0]);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv2d_all_ones_sums_window() {
        let x = t(vec![1, 1, 3, 3], vec![1.0; 9]);
        let k = t(vec![1, 1, 3, 3], vec![1.0; 9]);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv2d_non_integral_extent_rejected() {
        let x = t(vec![1, 1, 4, 4], vec![0.0; 16]);
        let k = t(vec![1, 1, 3, 3], vec![0.0; 9]);
        assert!(matches!(conv2d(&x, &k, 2, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn relu_sign_cases() {
        let x = t(vec![3], vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).unwrap().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn avgpool_constant_map_stays_constant() {
        for window in [1usize, 2, 3, 6] {
            let x = t(vec![1, 1, 6, 6], vec![0.7; 36]);
            let y = avgpool2d(&x, window).unwrap();
            assert!(y.data().iter().all(|&v| v == 0.7), "window {window}");
        }
    }

    #[test]
    fn sum_and_mean() {
        let x = t(vec![3], vec![1.0, 2.0, 3.0]);
        assert_eq!(sum(&x).0.data(), &[6.0]);
        assert_eq!(mean(&x).0.data(), &[2.0]);
    }

    #[test]
    fn log_softmax_uniform_rows() {
        let x = t(vec![1, 3], vec![0.0, 0.0, 0.0]);
        let (y, _) = log_softmax(&x, 4.0).unwrap();
        let expect = (1.0f64 / 3.0).ln() as f32;
        for &v in y.data() {
            assert!((v - expect).abs() < 1e-7);
        }
    }

    #[test]
    fn log_softmax_direct_evaluation() {
        // softmax([1,2,3]) at tau=1; oracle computed directly from exp ratios.
        let x = t(vec![1, 3], vec![1.0, 2.0, 3.0]);
        let (_, probs) = log_softmax(&x, 1.0).unwrap();
        let z: f64 = (1.0f64.exp()) + (2.0f64.exp()) + (3.0f64.exp());
        for (j, &p) in probs.iter().enumerate() {
            let want = ((j as f64 + 1.0).exp() / z) as f32;
            assert!((p - want).abs() < 1e-6, "class {j}: {p} vs {want}");
        }
        // Against the familiar rounded values.
        assert!((probs[0] - 0.0900).abs() < 5e-5);
        assert!((probs[1] - 0.2447).abs() < 5e-5);
        assert!((probs[2] - 0.6652).abs() < 5e-5);
    }

    #[test]
    fn log_softmax_high_temperature_limit() {
        let x = t(vec![1, 3], vec![1.0, 2.0, 3.0]);
        let (_, probs) = log_softmax(&x, 1e6).unwrap();
        for &p in &probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn log_softmax_rejects_non_finite_logits() {
        let mut x = t(vec![1, 2], vec![0.0, 1.0]);
        x.data_mut()[0] = f32::NAN;
        assert!(matches!(log_softmax(&x, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn log_softmax_rejects_bad_temperature() {
        let x = t(vec![1, 2], vec![0.0, 1.0]);
        assert!(matches!(log_softmax(&x, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(log_softmax(&x, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn log_softmax_stable_at_large_magnitude() {
        let x = t(vec![1, 4], vec![1e4, -1e4, 5e3, 0.0]);
        let (_, probs) = log_softmax(&x, 1.0).unwrap();
        let s: f64 = probs.iter().map(|&p| f64::from(p)).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pick_classes_rejects_out_of_range() {
        let x = t(vec![2, 3], vec![0.0; 6]);
        assert!(matches!(pick_classes(&x, &[0, 3]), Err(Error::Data(_))));
    }

    #[test]
    fn row_l2norm_zero_row_stays_zero() {
        let x = t(vec![2, 2], vec![3.0, 4.0, 0.0, 0.0]);
        let (y, norms) = row_l2norm(&x).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-7);
        assert!((y.data()[1] - 0.8).abs() < 1e-7);
        assert_eq!(&y.data()[2..], &[0.0, 0.0]);
        assert_eq!(norms[1], 0.0);
    }

    #[test]
    fn channel_sumsq_shape_and_values() {
        let x = t(vec![1, 2, 1, 2], vec![1.0, 2.0, 3.0, -4.0]);
        let y = channel_sumsq(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2]);
        assert_eq!(y.data(), &[1.0 + 9.0, 4.0 + 16.0]);
    }
}
