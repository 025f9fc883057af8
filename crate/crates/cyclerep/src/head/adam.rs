//! Adam with bias correction. Weight decay enters as an L2 term added to
//! the gradient before the moment updates (coupled, not decoupled).

use serde::{Deserialize, Serialize};

use super::{HeadGrads, HeadParams};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: HeadGrads,
    pub v: HeadGrads,
    pub t: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &HeadParams, lr: f64, weight_decay: f64) -> Self {
        AdamState {
            m: HeadGrads::zeros_like(params),
            v: HeadGrads::zeros_like(params),
            t: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One optimizer step, in place.
pub fn adam_step(params: &mut HeadParams, grads: &HeadGrads, state: &mut AdamState) -> Result<()> {
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);

    let mut m_tensors = state.m.tensors_mut();
    let mut v_tensors = state.v.tensors_mut();
    let grad_tensors = grads.tensors();

    for (idx, (name, values)) in params.trainable_mut().into_iter().enumerate() {
        let g_src = grad_tensors[idx].1;
        if g_src.len() != values.len() {
            return Err(Error::Dim(format!(
                "gradient tensor {name} has length {}, parameters {}",
                g_src.len(),
                values.len()
            )));
        }
        let m = &mut m_tensors[idx].1;
        let v = &mut v_tensors[idx].1;
        for i in 0..values.len() {
            let g = g_src[i] + state.weight_decay * values[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            values[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::HeadConfig;

    fn tiny() -> (HeadParams, HeadConfig) {
        let cfg = HeadConfig {
            in_channels: 2,
            hidden_channels: 2,
            out_dim: 2,
            ..HeadConfig::default()
        };
        let params = HeadParams::init(&cfg, 9).unwrap();
        (params, cfg)
    }

    #[test]
    fn first_step_magnitude_is_close_to_lr() {
        let (mut params, _) = tiny();
        let mut grads = HeadGrads::zeros_like(&params);
        grads.fc_b[0] = 0.731; // arbitrary nonzero scalar gradient
        let mut state = AdamState::new(&params, 1e-3, 0.0);
        let before = params.fc_b[0];
        adam_step(&mut params, &grads, &mut state).unwrap();
        let delta = before - params.fc_b[0];
        // closed form: lr * g / (|g| + eps)
        let expected = 1e-3 * 0.731 / (0.731 + 1e-8);
        assert!((delta - expected).abs() < 1e-12, "delta {delta}");
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_grads_zero_decay_leave_params_unchanged() {
        let (mut params, _) = tiny();
        let grads = HeadGrads::zeros_like(&params);
        let mut state = AdamState::new(&params, 1e-3, 0.0);
        let before = params.clone();
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn decay_only_step_shrinks_parameters_toward_zero() {
        let (mut params, _) = tiny();
        let grads = HeadGrads::zeros_like(&params);
        let mut state = AdamState::new(&params, 1e-3, 1e-2);
        let before = params.clone();
        adam_step(&mut params, &grads, &mut state).unwrap();
        for (idx, (name, values)) in params.trainable().iter().enumerate() {
            for (i, (after, b)) in values.iter().zip(before.trainable()[idx].1).enumerate() {
                if *b != 0.0 {
                    assert!(
                        after.abs() < b.abs(),
                        "{name}[{i}]: {b} -> {after} did not shrink"
                    );
                    assert_eq!(after.signum(), b.signum());
                }
            }
        }
    }
}
