//! Capacity-laddered model families.
//!
//! Two families ladder from tiny to roomy capacity: plain MLPs
//! (hidden width 8 * width_factor, depth_factor hidden layers) and small
//! convnets (4 * width_factor channels per block, each block conv3x3 -> bias
//! -> relu -> avgpool(2), finished by a global average pool and a linear
//! head). Attention maps are the post-relu activations of each conv block.
//!
//! The architecture is defined once over an executor abstraction so the
//! recorded (training) and plain (evaluation) forward passes cannot drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::rng::{next_symmetric, stream, StreamPurpose};
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

pub const MLP_BASE_WIDTH: usize = 8;
pub const CONV_BASE_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mlp,
    Convnet,
}

/// Description of one rung on the capacity ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Number of hidden layers (mlp) or conv blocks (convnet).
    pub depth_factor: usize,
    /// Multiplier on the family base width.
    pub width_factor: usize,
    /// Per-sample input shape: `[d]` for mlp, `[c, h, w]` for convnet.
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth_factor == 0 || self.width_factor == 0 {
            return Err(Error::parameter(format!(
                "depth_factor and width_factor must be positive, got {} / {}",
                self.depth_factor, self.width_factor
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::parameter(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.input_shape.iter().any(|&e| e == 0) {
            return Err(Error::parameter(format!(
                "input_shape extents must be positive: {:?}",
                self.input_shape
            )));
        }
        match self.family {
            Family::Mlp => {
                if self.input_shape.len() != 1 {
                    return Err(Error::parameter(format!(
                        "mlp input_shape must be [d], got {:?}",
                        self.input_shape
                    )));
                }
            }
            Family::Convnet => {
                if self.input_shape.len() != 3 {
                    return Err(Error::parameter(format!(
                        "convnet input_shape must be [c, h, w], got {:?}",
                        self.input_shape
                    )));
                }
                let div = 1usize << self.depth_factor;
                let (h, w) = (self.input_shape[1], self.input_shape[2]);
                if h != w {
                    return Err(Error::parameter(format!(
                        "convnet input must be square, got {h}x{w}"
                    )));
                }
                if h % div != 0 {
                    return Err(Error::parameter(format!(
                        "convnet depth {} halves spatial extents {}x{} past divisibility",
                        self.depth_factor, h, w
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn hidden_width(&self) -> usize {
        MLP_BASE_WIDTH * self.width_factor
    }

    pub fn channels(&self) -> usize {
        CONV_BASE_CHANNELS * self.width_factor
    }

    /// Shapes and names of every parameter, in the fixed traversal order used
    /// by init, SGD and checkpoints.
    pub fn parameter_template(&self) -> Result<Vec<(String, Vec<usize>)>> {
        self.validate()?;
        let k = self.num_classes;
        let mut out = Vec::new();
        match self.family {
            Family::Mlp => {
                let d = self.input_shape[0];
                let h = self.hidden_width();
                let mut fan_in = d;
                for layer in 0..self.depth_factor {
                    out.push((format!("fc{layer}.weight"), vec![fan_in, h]));
                    out.push((format!("fc{layer}.bias"), vec![h]));
                    fan_in = h;
                }
                out.push(("head.weight".to_string(), vec![fan_in, k]));
                out.push(("head.bias".to_string(), vec![k]));
            }
            Family::Convnet => {
                let c = self.channels();
                let mut in_c = self.input_shape[0];
                for block in 0..self.depth_factor {
                    out.push((format!("conv{block}.weight"), vec![c, in_c, 3, 3]));
                    out.push((format!("conv{block}.bias"), vec![c]));
                    in_c = c;
                }
                out.push(("head.weight".to_string(), vec![c, k]));
                out.push(("head.bias".to_string(), vec![k]));
            }
        }
        Ok(out)
    }

    /// Exact number of scalar parameters a build of this spec will hold.
    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .parameter_template()?
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum())
    }

    /// The default teacher ladder: same family/depth/input, widths 1,2,3,4,6,8.
    pub fn default_ladder(&self) -> Vec<ModelSpec> {
        [1usize, 2, 3, 4, 6, 8]
            .iter()
            .map(|&w| ModelSpec { width_factor: w, ..self.clone() })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// An instantiated network: spec plus named parameters in traversal order.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Param>,
}

impl Model {
    /// He-style seeded init: weights uniform in [-s, s) with s = sqrt(2/fan_in),
    /// biases zero. Identical spec and seed give bitwise-identical parameters.
    pub fn build(spec: &ModelSpec) -> Result<Model> {
        let template = spec.parameter_template()?;
        let mut rng = stream(spec.init_seed, StreamPurpose::Init, 0);
        let mut params = Vec::with_capacity(template.len());
        for (name, shape) in template {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".bias") {
                vec![0.0f32; n]
            } else {
                let fan_in: usize = match shape.len() {
                    2 => shape[0],
                    4 => shape[1] * shape[2] * shape[3],
                    _ => shape[0],
                };
                let s = (2.0 / fan_in as f32).sqrt();
                (0..n).map(|_| next_symmetric(&mut rng) * s).collect()
            };
            let tensor = Tensor::new(shape, data)?.with_grad();
            params.push(Param { name, tensor });
        }
        Ok(Model { spec: spec.clone(), params })
    }

    /// Rebuilds a model from a spec and an already-validated parameter list
    /// (checkpoint loading).
    pub(crate) fn from_parts(spec: ModelSpec, params: Vec<Param>) -> Model {
        Model { spec, params }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let sh = batch.shape();
        if sh.len() != self.spec.input_shape.len() + 1 || sh[1..] != self.spec.input_shape[..] {
            return Err(Error::dimension(format!(
                "batch shape {sh:?} does not match input shape {:?} (plus batch axis)",
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    /// Evaluation-mode forward: logits and per-block activation maps, no tape.
    /// Never mutates parameters.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_batch(batch)?;
        let mut exec = EvalExec { vals: Vec::new() };
        let params: Vec<usize> = self
            .params
            .iter()
            .map(|p| exec.push(p.tensor.clone()))
            .collect();
        let input = exec.push(batch.clone());
        let (logits, acts) = run_forward(&self.spec, &mut exec, &params, input)?;
        let out = exec.vals[logits].clone();
        let maps = acts.into_iter().map(|a| exec.vals[a].clone()).collect();
        Ok((out, maps))
    }

    /// Recorded forward for training: binds every parameter as a requires-grad
    /// leaf and returns (logits, activations, parameter vars in param order).
    pub fn forward_on_tape(&self, tape: &mut Tape, batch: &Tensor) -> Result<(VarId, Vec<VarId>, Vec<VarId>)> {
        self.check_batch(batch)?;
        let param_vars: Vec<VarId> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone()))
            .collect();
        let input = tape.constant(batch.clone());
        let mut exec = TapeExec { tape };
        let (logits, acts) = run_forward(&self.spec, &mut exec, &param_vars, input)?;
        Ok((logits, acts, param_vars))
    }

    /// Recorded forward with one parameter wired to an existing tape variable
    /// instead of a fresh leaf. Lets a gradient check perturb a single
    /// parameter tensor of the full network.
    pub fn forward_on_tape_with(
        &self,
        tape: &mut Tape,
        batch: &Tensor,
        replace_index: usize,
        replacement: VarId,
    ) -> Result<(VarId, Vec<VarId>, Vec<VarId>)> {
        self.check_batch(batch)?;
        if replace_index >= self.params.len() {
            return Err(Error::parameter(format!(
                "parameter index {replace_index} out of range ({} params)",
                self.params.len()
            )));
        }
        let param_vars: Vec<VarId> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i == replace_index {
                    replacement
                } else {
                    tape.constant(p.tensor.clone())
                }
            })
            .collect();
        let input = tape.constant(batch.clone());
        let mut exec = TapeExec { tape };
        let (logits, acts) = run_forward(&self.spec, &mut exec, &param_vars, input)?;
        Ok((logits, acts, param_vars))
    }

    /// True when both models consume the same input shape and class count.
    pub fn compatible_io(&self, other: &Model) -> bool {
        self.spec.input_shape == other.spec.input_shape
            && self.spec.num_classes == other.spec.num_classes
    }
}

// ── shared forward definition ───────────────────────────────────────────

trait Exec {
    type V: Copy;
    fn matmul(&mut self, a: Self::V, b: Self::V) -> Result<Self::V>;
    fn conv2d(&mut self, x: Self::V, k: Self::V, stride: usize, pad: usize) -> Result<Self::V>;
    fn add_bias(&mut self, x: Self::V, b: Self::V) -> Result<Self::V>;
    fn relu(&mut self, x: Self::V) -> Result<Self::V>;
    fn avgpool2d(&mut self, x: Self::V, window: usize) -> Result<Self::V>;
    fn reshape(&mut self, x: Self::V, shape: Vec<usize>) -> Result<Self::V>;
    fn shape(&self, x: Self::V) -> Vec<usize>;
}

struct TapeExec<'a> {
    tape: &'a mut Tape,
}

impl Exec for TapeExec<'_> {
    type V = VarId;
    fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.tape.matmul(a, b)
    }
    fn conv2d(&mut self, x: VarId, k: VarId, stride: usize, pad: usize) -> Result<VarId> {
        self.tape.conv2d(x, k, stride, pad)
    }
    fn add_bias(&mut self, x: VarId, b: VarId) -> Result<VarId> {
        self.tape.add_bias(x, b)
    }
    fn relu(&mut self, x: VarId) -> Result<VarId> {
        self.tape.relu(x)
    }
    fn avgpool2d(&mut self, x: VarId, window: usize) -> Result<VarId> {
        self.tape.avgpool2d(x, window)
    }
    fn reshape(&mut self, x: VarId, shape: Vec<usize>) -> Result<VarId> {
        self.tape.reshape(x, shape)
    }
    fn shape(&self, x: VarId) -> Vec<usize> {
        self.tape.value(x).shape().to_vec()
    }
}

struct EvalExec {
    vals: Vec<Tensor>,
}

impl EvalExec {
    fn push(&mut self, t: Tensor) -> usize {
        self.vals.push(t);
        self.vals.len() - 1
    }
}

impl Exec for EvalExec {
    type V = usize;
    fn matmul(&mut self, a: usize, b: usize) -> Result<usize> {
        let v = ops::matmul(&self.vals[a], &self.vals[b])?;
        Ok(self.push(v))
    }
    fn conv2d(&mut self, x: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
        let v = ops::conv2d(&self.vals[x], &self.vals[k], stride, pad)?;
        Ok(self.push(v))
    }
    fn add_bias(&mut self, x: usize, b: usize) -> Result<usize> {
        let v = ops::add_bias(&self.vals[x], &self.vals[b])?;
        Ok(self.push(v))
    }
    fn relu(&mut self, x: usize) -> Result<usize> {
        let v = ops::relu(&self.vals[x])?;
        Ok(self.push(v))
    }
    fn avgpool2d(&mut self, x: usize, window: usize) -> Result<usize> {
        let v = ops::avgpool2d(&self.vals[x], window)?;
        Ok(self.push(v))
    }
    fn reshape(&mut self, x: usize, shape: Vec<usize>) -> Result<usize> {
        let v = ops::reshape(&self.vals[x], shape)?;
        Ok(self.push(v))
    }
    fn shape(&self, x: usize) -> Vec<usize> {
        self.vals[x].shape().to_vec()
    }
}

fn run_forward<E: Exec>(
    spec: &ModelSpec,
    exec: &mut E,
    params: &[E::V],
    input: E::V,
) -> Result<(E::V, Vec<E::V>)> {
    match spec.family {
        Family::Mlp => {
            let mut x = input;
            for layer in 0..spec.depth_factor {
                let pre = exec.matmul(x, params[2 * layer])?;
                let biased = exec.add_bias(pre, params[2 * layer + 1])?;
                x = exec.relu(biased)?;
            }
            let head = 2 * spec.depth_factor;
            let out = exec.matmul(x, params[head])?;
            let logits = exec.add_bias(out, params[head + 1])?;
            Ok((logits, Vec::new()))
        }
        Family::Convnet => {
            let mut x = input;
            let mut maps = Vec::with_capacity(spec.depth_factor);
            for block in 0..spec.depth_factor {
                let conv = exec.conv2d(x, params[2 * block], 1, 1)?;
                let biased = exec.add_bias(conv, params[2 * block + 1])?;
                let act = exec.relu(biased)?;
                maps.push(act);
                x = exec.avgpool2d(act, 2)?;
            }
            // Global average pool (spatial extents are square by validation),
            // then the linear head.
            let sh = exec.shape(x);
            let (n, c, h) = (sh[0], sh[1], sh[2]);
            if h > 1 {
                x = exec.avgpool2d(x, h)?;
            }
            let flat = exec.reshape(x, vec![n, c])?;
            let head = 2 * spec.depth_factor;
            let out = exec.matmul(flat, params[head])?;
            let logits = exec.add_bias(out, params[head + 1])?;
            Ok((logits, maps))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp_spec() -> ModelSpec {
        ModelSpec {
            family: Family::Mlp,
            depth_factor: 1,
            width_factor: 1,
            input_shape: vec![2],
            num_classes: 3,
            init_seed: 11,
        }
    }

    fn conv_spec() -> ModelSpec {
        ModelSpec {
            family: Family::Convnet,
            depth_factor: 2,
            width_factor: 1,
            input_shape: vec![1, 8, 8],
            num_classes: 4,
            init_seed: 11,
        }
    }

    #[test]
    fn mlp_parameter_count_closed_form() {
        // depth 1, width 1, input 2, K=3 with base width 8:
        // 2*8 + 8 (first layer) + 8*3 + 3 (head) = 51.
        let spec = mlp_spec();
        assert_eq!(spec.parameter_count().unwrap(), 2 * 8 + 8 + 8 * 3 + 3);
        let model = Model::build(&spec).unwrap();
        assert_eq!(model.parameter_count(), spec.parameter_count().unwrap());
    }

    #[test]
    fn count_matches_built_parameters_for_both_families() {
        for spec in [mlp_spec(), conv_spec()] {
            let model = Model::build(&spec).unwrap();
            let built: usize = model.params().iter().map(|p| p.tensor.len()).sum();
            assert_eq!(built, spec.parameter_count().unwrap());
        }
    }

    #[test]
    fn build_is_deterministic() {
        let spec = mlp_spec();
        let a = Model::build(&spec).unwrap();
        let b = Model::build(&spec).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.name, pb.name);
            let bits_a: Vec<u32> = pa.tensor.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = pb.tensor.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn different_seed_changes_parameters() {
        let a = Model::build(&mlp_spec()).unwrap();
        let b = Model::build(&ModelSpec { init_seed: 12, ..mlp_spec() }).unwrap();
        assert_ne!(a.params()[0].tensor.data(), b.params()[0].tensor.data());
    }

    #[test]
    fn ladder_counts_strictly_increase() {
        for family_spec in [mlp_spec(), conv_spec()] {
            let counts: Vec<usize> = family_spec
                .default_ladder()
                .iter()
                .map(|s| s.parameter_count().unwrap())
                .collect();
            for pair in counts.windows(2) {
                assert!(pair[0] < pair[1], "{counts:?}");
            }
            let deeper = ModelSpec { depth_factor: family_spec.depth_factor + 1, ..family_spec.clone() };
            assert!(deeper.parameter_count().unwrap() > family_spec.parameter_count().unwrap());
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(ModelSpec { width_factor: 0, ..mlp_spec() }.parameter_count().is_err());
        assert!(ModelSpec { depth_factor: 0, ..mlp_spec() }.parameter_count().is_err());
        assert!(ModelSpec { num_classes: 1, ..mlp_spec() }.parameter_count().is_err());
        assert!(Model::build(&ModelSpec { num_classes: 1, ..mlp_spec() }).is_err());
    }

    #[test]
    fn zeroed_head_gives_uniform_softmax() {
        let mut model = Model::build(&mlp_spec()).unwrap();
        for p in model.params_mut() {
            if p.name.starts_with("head.") {
                p.tensor.data_mut().fill(0.0);
            }
        }
        let batch = Tensor::new(vec![2, 2], vec![0.3, -0.4, 1.0, 0.7]).unwrap();
        let (logits, _) = model.forward(&batch).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
        let probs = crate::losses::soften(&logits, 1.0).unwrap();
        for &p in probs.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn batch_row_matches_single_sample_bitwise() {
        let model = Model::build(&conv_spec()).unwrap();
        let n = 8;
        let mut data = Vec::with_capacity(n * 64);
        for i in 0..n * 64 {
            data.push(((i as f32) * 0.05).sin());
        }
        let batch = Tensor::new(vec![n, 1, 8, 8], data.clone()).unwrap();
        let (logits, _) = model.forward(&batch).unwrap();
        let row = 3;
        let single = Tensor::new(vec![1, 1, 8, 8], data[row * 64..(row + 1) * 64].to_vec()).unwrap();
        let (one, _) = model.forward(&single).unwrap();
        let k = model.spec().num_classes;
        for j in 0..k {
            assert_eq!(one.data()[j].to_bits(), logits.data()[row * k + j].to_bits());
        }
    }

    #[test]
    fn convnet_exposes_one_map_per_block() {
        let model = Model::build(&conv_spec()).unwrap();
        let batch = Tensor::zeros(vec![2, 1, 8, 8]);
        let (logits, maps) = model.forward(&batch).unwrap();
        assert_eq!(logits.shape(), &[2, 4]);
        assert_eq!(maps.len(), 2);
        assert_eq!(maps[0].shape(), &[2, 4, 8, 8]);
        assert_eq!(maps[1].shape(), &[2, 4, 4, 4]);
    }

    #[test]
    fn forward_rejects_wrong_batch_shape() {
        let model = Model::build(&mlp_spec()).unwrap();
        let bad = Tensor::zeros(vec![2, 3]);
        assert!(matches!(model.forward(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn tape_and_eval_forwards_agree_bitwise() {
        let model = Model::build(&conv_spec()).unwrap();
        let batch = Tensor::new(vec![2, 1, 8, 8], (0..128).map(|i| (i as f32 * 0.11).cos()).collect()).unwrap();
        let (eval_logits, _) = model.forward(&batch).unwrap();
        let mut tape = Tape::new();
        let (logits_var, _, _) = model.forward_on_tape(&mut tape, &batch).unwrap();
        assert_eq!(tape.value(logits_var).data(), eval_logits.data());
    }

    #[test]
    fn forward_purity() {
        let model = Model::build(&mlp_spec()).unwrap();
        let before: Vec<Vec<u32>> = model.params().iter()
            .map(|p| p.tensor.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        let batch = Tensor::new(vec![4, 2], vec![0.5; 8]).unwrap();
        model.forward(&batch).unwrap();
        let after: Vec<Vec<u32>> = model.params().iter()
            .map(|p| p.tensor.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(before, after);
    }
}
