//! SGD with (optionally nesterov) momentum and decoupled-from-nothing weight
//! decay, exactly:
//!
//!   g_eff = g + wd * w
//!   v     = m * v - lr * g_eff
//!   plain:    w += v
//!   nesterov: w += m * v - lr * g_eff      (v already updated)
//!
//! Parameters update in their fixed model order, all arithmetic in f32.

use crate::error::{Error, Result};
use crate::model::Model;

/// Velocity buffers, one per parameter, zero-initialized.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: Vec<Vec<f32>>,
}

impl SgdState {
    pub fn new(model: &Model) -> SgdState {
        SgdState {
            velocity: model.params().iter().map(|p| vec![0.0f32; p.tensor.len()]).collect(),
        }
    }

    pub fn velocity(&self, index: usize) -> &[f32] {
        &self.velocity[index]
    }
}

/// One optimizer step over every parameter, consuming the gradients stored on
/// the parameter tensors. Errors on missing or non-finite gradients, naming
/// the parameter.
pub fn sgd_step(
    model: &mut Model,
    state: &mut SgdState,
    lr: f32,
    momentum: f32,
    nesterov: bool,
    weight_decay: f32,
) -> Result<()> {
    if model.params().len() != state.velocity.len() {
        return Err(Error::parameter(format!(
            "optimizer state holds {} buffers for {} parameters",
            state.velocity.len(),
            model.params().len()
        )));
    }
    for (param, vel) in model.params_mut().iter_mut().zip(&mut state.velocity) {
        let name = param.name.clone();
        let grad = param.tensor.grad.take().ok_or_else(|| {
            Error::parameter(format!("parameter {name} has no gradient"))
        })?;
        if grad.len() != vel.len() {
            return Err(Error::dimension(format!(
                "parameter {name}: gradient length {} vs {}",
                grad.len(),
                vel.len()
            )));
        }
        for (i, &g) in grad.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite gradient {g} in parameter {name} at index {i}"
                )));
            }
            let w = param.tensor.data()[i];
            let g_eff = g + weight_decay * w;
            let v = momentum * vel[i] - lr * g_eff;
            vel[i] = v;
            let step = if nesterov { momentum * v - lr * g_eff } else { v };
            param.tensor.data_mut()[i] = w + step;
        }
        param.tensor.check_finite(&format!("sgd_step({name})"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, ModelSpec};

    fn tiny_model() -> Model {
        Model::build(&ModelSpec {
            family: Family::Mlp,
            depth_factor: 1,
            width_factor: 1,
            input_shape: vec![2],
            num_classes: 2,
            init_seed: 0,
        })
        .unwrap()
    }

    fn set_grads(model: &mut Model, value: f32) {
        for p in model.params_mut() {
            let g = vec![value; p.tensor.len()];
            p.tensor.grad = Some(g);
        }
    }

    fn snapshot(model: &Model) -> Vec<Vec<f32>> {
        model.params().iter().map(|p| p.tensor.data().to_vec()).collect()
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        let mut model = tiny_model();
        let mut state = SgdState::new(&model);
        let before = snapshot(&model);
        for _ in 0..3 {
            set_grads(&mut model, 0.0);
            sgd_step(&mut model, &mut state, 0.1, 0.9, false, 0.0).unwrap();
        }
        assert_eq!(snapshot(&model), before);
    }

    #[test]
    fn plain_step_without_momentum() {
        let mut model = tiny_model();
        let mut state = SgdState::new(&model);
        let before = snapshot(&model);
        set_grads(&mut model, 2.0);
        sgd_step(&mut model, &mut state, 0.5, 0.0, false, 0.0).unwrap();
        for (pb, pa) in before.iter().zip(snapshot(&model)) {
            for (&b, a) in pb.iter().zip(pa) {
                assert_eq!(a, b - 0.5 * 2.0);
            }
        }
    }

    #[test]
    fn two_momentum_steps_on_constant_gradient() {
        // v1 = -lr*g, v2 = 0.9*v1 - lr*g; total displacement = -lr*g*(1 + 1.9).
        let mut model = tiny_model();
        let mut state = SgdState::new(&model);
        let before = snapshot(&model);
        let (lr, g) = (0.1f32, 1.0f32);
        for _ in 0..2 {
            set_grads(&mut model, g);
            sgd_step(&mut model, &mut state, lr, 0.9, false, 0.0).unwrap();
        }
        let want = -lr * g * (1.0 + 1.9);
        for (pb, pa) in before.iter().zip(snapshot(&model)) {
            for (&b, a) in pb.iter().zip(pa) {
                assert!((a - (b + want)).abs() < 1e-6, "{a} vs {}", b + want);
            }
        }
    }

    #[test]
    fn nesterov_step_matches_hand_recursion() {
        let mut model = tiny_model();
        let mut state = SgdState::new(&model);
        let before = snapshot(&model);
        let (lr, m, g) = (0.1f32, 0.9f32, 1.0f32);
        set_grads(&mut model, g);
        sgd_step(&mut model, &mut state, lr, m, true, 0.0).unwrap();
        // v1 = -lr*g; step = m*v1 - lr*g = -(1 + m)*lr*g.
        let want = -(1.0 + m) * lr * g;
        for (pb, pa) in before.iter().zip(snapshot(&model)) {
            for (&b, a) in pb.iter().zip(pa) {
                assert!((a - (b + want)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn non_finite_gradient_identifies_parameter() {
        let mut model = tiny_model();
        let mut state = SgdState::new(&model);
        set_grads(&mut model, 1.0);
        model.params_mut()[1].tensor.grad.as_mut().unwrap()[0] = f32::NAN;
        let err = sgd_step(&mut model, &mut state, 0.1, 0.9, false, 0.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fc0.bias"), "{msg}");
    }

    #[test]
    fn missing_gradient_rejected() {
        let mut model = tiny_model();
        let mut state = SgdState::new(&model);
        let err = sgd_step(&mut model, &mut state, 0.1, 0.9, false, 0.0).unwrap_err();
        assert!(err.to_string().contains("no gradient"));
    }
}
