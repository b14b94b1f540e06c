//! Dataset supply: synthetic generators, augmentation, seeded batching.
//!
//! Every dataset is a pure function of its provenance (generator spec + seed,
//! or source file digest), so identical provenance means bitwise-identical
//! data. Structure shared across splits (mixture centroids, class templates)
//! draws from its own stream; per-split noise draws from a split-keyed stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{next_gaussian, next_symmetric, next_uniform, permutation, stream, StreamPurpose};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn noise_stream_index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

/// Per-channel normalization constants, recorded so loads are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

/// Where a dataset came from; sufficient to regenerate or re-validate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    GaussianMixture {
        classes: usize,
        dims: usize,
        per_class: usize,
        spread: f32,
        seed: u64,
        split: Split,
    },
    PatternedImages {
        classes: usize,
        height: usize,
        width: usize,
        per_class: usize,
        noise: f32,
        seed: u64,
        split: Split,
    },
    SmallImageFile {
        digest: String,
        normalization: ChannelNorm,
        split: Split,
    },
}

/// An immutable labeled dataset with a per-sample shape.
#[derive(Debug, Clone)]
pub struct Dataset {
    sample_shape: Vec<usize>,
    num_classes: usize,
    inputs: Vec<f32>,
    labels: Vec<u32>,
    split: Split,
    provenance: Provenance,
}

impl Dataset {
    pub fn from_parts(
        sample_shape: Vec<usize>,
        num_classes: usize,
        inputs: Vec<f32>,
        labels: Vec<u32>,
        split: Split,
        provenance: Provenance,
    ) -> Result<Dataset> {
        let sample_len: usize = sample_shape.iter().product();
        if sample_len == 0 || labels.is_empty() {
            return Err(Error::data("dataset must be nonempty".to_string()));
        }
        if inputs.len() != sample_len * labels.len() {
            return Err(Error::data(format!(
                "inputs hold {} values for {} samples of {sample_len}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range [0, {num_classes})"
            )));
        }
        Ok(Dataset { sample_shape, num_classes, inputs, labels, split, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    /// Materializes the given samples as a batch tensor plus labels.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<u32>)> {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// Shuffled batch index lists for one epoch. The permutation is a pure
    /// function of (shuffle_seed, epoch); the last partial batch is kept.
    pub fn batch_indices(&self, batch_size: usize, shuffle_seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
        if batch_size == 0 {
            return Err(Error::parameter("batch_size must be >= 1".to_string()));
        }
        let mut rng = stream(shuffle_seed, StreamPurpose::Shuffle, epoch as u64);
        let perm = permutation(&mut rng, self.len());
        Ok(perm.chunks(batch_size).map(|c| c.to_vec()).collect())
    }

    /// Sequential batch index lists for evaluation.
    pub fn eval_batches(&self, batch_size: usize) -> Vec<Vec<usize>> {
        (0..self.len())
            .collect::<Vec<_>>()
            .chunks(batch_size.max(1))
            .map(|c| c.to_vec())
            .collect()
    }
}

/// K seeded Gaussian clusters in `dims` dimensions with exact class balance.
/// Centroids depend only on (classes, dims, seed) and are shared between
/// splits; the noise stream is split-specific.
pub fn gen_gaussian_mixture(
    classes: usize,
    dims: usize,
    per_class: usize,
    spread: f32,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::parameter(format!("need >= 2 classes, got {classes}")));
    }
    if dims == 0 || per_class == 0 {
        return Err(Error::parameter("dims and per_class must be >= 1".to_string()));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::parameter(format!("spread must be > 0, got {spread}")));
    }
    let mut structure = stream(seed, StreamPurpose::GenStructure, 0);
    let centroids: Vec<f32> = (0..classes * dims).map(|_| 2.0 * next_symmetric(&mut structure)).collect();

    let mut noise = stream(seed, StreamPurpose::GenNoise, split.noise_stream_index());
    let mut inputs = Vec::with_capacity(classes * per_class * dims);
    let mut labels = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        for _ in 0..per_class {
            for d in 0..dims {
                inputs.push(centroids[class * dims + d] + spread * next_gaussian(&mut noise));
            }
            labels.push(class as u32);
        }
    }
    Dataset::from_parts(
        vec![dims],
        classes,
        inputs,
        labels,
        split,
        Provenance::GaussianMixture { classes, dims, per_class, spread, seed, split },
    )
}

/// The noiseless class templates of a patterned-image task (test oracle hook).
/// Each template is a seeded sum of three low-frequency plane waves, so
/// classes differ in spatial structure a convolutional net can pick up.
pub fn pattern_templates(classes: usize, height: usize, width: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut structure = stream(seed, StreamPurpose::GenStructure, 0);
    let tau = std::f64::consts::TAU;
    (0..classes)
        .map(|_| {
            let waves: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    let fy = f64::from((next_uniform(&mut structure) * 3.0) as u32 + 1);
                    let fx = f64::from((next_uniform(&mut structure) * 3.0) as u32 + 1);
                    let phase = tau * f64::from(next_uniform(&mut structure));
                    let amp = 0.4 + 0.6 * f64::from(next_uniform(&mut structure));
                    (fy, fx, phase, amp)
                })
                .collect();
            (0..height * width)
                .map(|p| {
                    let (y, x) = (p / width, p % width);
                    let v: f64 = waves
                        .iter()
                        .map(|&(fy, fx, phase, amp)| {
                            amp * (tau * (fy * y as f64 / height as f64 + fx * x as f64 / width as f64)
                                + phase)
                                .cos()
                        })
                        .sum();
                    (v / 3.0) as f32
                })
                .collect()
        })
        .collect()
}

/// Single-channel images: one seeded spatial template per class plus seeded
/// Gaussian pixel noise.
pub fn gen_patterned_images(
    classes: usize,
    height: usize,
    width: usize,
    per_class: usize,
    noise: f32,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::parameter(format!("need >= 2 classes, got {classes}")));
    }
    if height < 8 || width < 8 {
        return Err(Error::parameter(format!(
            "image extents must be >= 8, got {height}x{width}"
        )));
    }
    if per_class == 0 {
        return Err(Error::parameter("per_class must be >= 1".to_string()));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::parameter(format!("noise must be >= 0, got {noise}")));
    }
    let templates = pattern_templates(classes, height, width, seed);
    let mut noise_rng = stream(seed, StreamPurpose::GenNoise, split.noise_stream_index());
    let mut inputs = Vec::with_capacity(classes * per_class * height * width);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (class, template) in templates.iter().enumerate() {
        for _ in 0..per_class {
            for &t in template {
                inputs.push(t + noise * next_gaussian(&mut noise_rng));
            }
            labels.push(class as u32);
        }
    }
    Dataset::from_parts(
        vec![1, height, width],
        classes,
        inputs,
        labels,
        split,
        Provenance::PatternedImages { classes, height, width, per_class, noise, seed, split },
    )
}

/// Batch augmentation policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentPolicy {
    /// Pass batches through unchanged.
    None,
    /// Reflect-pad, random crop back to native size, horizontal flip at p=0.5.
    PadCropFlip { pad: usize },
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut j = i;
    if j < 0 {
        j = -j;
    }
    if j >= n {
        j = 2 * n - 2 - j;
    }
    j as usize
}

/// Applies the policy to an image batch, drawing only from the given stream.
/// Labels are untouched by construction; shapes are preserved.
pub fn augment(batch: &Tensor, policy: AugmentPolicy, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Tensor> {
    let pad = match policy {
        AugmentPolicy::None => return Ok(batch.clone()),
        AugmentPolicy::PadCropFlip { pad } => pad,
    };
    let sh = batch.shape();
    if sh.len() != 4 {
        return Err(Error::config(format!(
            "pad_crop_flip needs image batches, got shape {sh:?}"
        )));
    }
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    if pad >= h || pad >= w {
        return Err(Error::parameter(format!(
            "pad {pad} too large for {h}x{w} images"
        )));
    }
    use rand_core::RngCore;
    let src = batch.data();
    let mut out = vec![0.0f32; src.len()];
    for bi in 0..n {
        let dy = (rng.next_u32() as usize) % (2 * pad + 1);
        let dx = (rng.next_u32() as usize) % (2 * pad + 1);
        let flip = next_uniform(rng) < 0.5;
        for ci in 0..c {
            let plane = (bi * c + ci) * h * w;
            for y in 0..h {
                let sy = reflect(y as isize + dy as isize - pad as isize, h);
                for x in 0..w {
                    let x_read = if flip { w - 1 - x } else { x };
                    let sx = reflect(x_read as isize + dx as isize - pad as isize, w);
                    out[plane + y * w + x] = src[plane + sy * w + sx];
                }
            }
        }
    }
    Tensor::new(sh.to_vec(), out)
}
