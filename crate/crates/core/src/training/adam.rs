use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::TrainError;
use crate::diffcore::Tensor;
use crate::nets::{ModelParams, ParamId, TrainerState};

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn zeros(params: &ModelParams) -> Self {
        let bufs: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.numel()])
            .collect();
        AdamState {
            step: 0,
            m: bufs.clone(),
            v: bufs,
        }
    }

    pub fn to_trainer_state(&self) -> TrainerState {
        let named = |bufs: &[Vec<f64>]| -> BTreeMap<String, Vec<f64>> {
            ParamId::ALL
                .iter()
                .zip(bufs)
                .map(|(id, b)| (id.name().to_string(), b.clone()))
                .collect()
        };
        TrainerState {
            step: self.step,
            first_moment: named(&self.m),
            second_moment: named(&self.v),
        }
    }

    pub fn from_trainer_state(
        state: &TrainerState,
        params: &ModelParams,
    ) -> Result<Self, TrainError> {
        let pick = |map: &BTreeMap<String, Vec<f64>>| -> Result<Vec<Vec<f64>>, TrainError> {
            params
                .iter()
                .map(|(id, t)| match map.get(id.name()) {
                    Some(b) if b.len() == t.numel() => Ok(b.clone()),
                    _ => Err(TrainError::Shape(format!(
                        "optimizer state for {} missing or mis-sized",
                        id.name()
                    ))),
                })
                .collect()
        };
        Ok(AdamState {
            step: state.step,
            m: pick(&state.first_moment)?,
            v: pick(&state.second_moment)?,
        })
    }
}

/// Bias-corrected Adam update of one flat buffer at step `t >= 1`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    adam: &Adam,
    t: u64,
) -> Result<(), TrainError> {
    let n = theta.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(TrainError::Shape(format!(
            "adam buffers: theta {n}, grad {}, m {}, v {}",
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    if t == 0 {
        return Err(TrainError::InvalidConfig(
            "adam step index starts at 1".into(),
        ));
    }
    let c1 = 1.0 - adam.beta1.powi(t as i32);
    let c2 = 1.0 - adam.beta2.powi(t as i32);
    for i in 0..n {
        let g = grad[i];
        m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g;
        v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + adam.eps);
    }
    Ok(())
}

/// One optimizer step over every parameter tensor.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    adam: &Adam,
) -> Result<(), TrainError> {
    if grads.len() != params.tensors().len() || state.m.len() != grads.len() {
        return Err(TrainError::Shape(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.tensors().len()
        )));
    }
    state.step += 1;
    let t = state.step;
    for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
        adam_update(
            p.data_mut(),
            g.data(),
            &mut state.m[i],
            &mut state.v[i],
            lr,
            adam,
            t,
        )?;
    }
    Ok(())
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let adam = Adam::default();
        for g in [1e-3, -2.0, 50.0] {
            let (mut th, mut m, mut v) = ([1.0], [0.0], [0.0]);
            adam_update(&mut th, &[g], &mut m, &mut v, 0.01, &adam, 1).unwrap();
            assert!(((1.0 - th[0]).abs() - 0.01).abs() < 1e-6, "{g}: {}", th[0]);
            assert_eq!((1.0 - th[0]).signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut th, mut m, mut v) = ([0.3, -0.7], [0.0; 2], [0.0; 2]);
        adam_update(
            &mut th,
            &[0.0, 0.0],
            &mut m,
            &mut v,
            0.1,
            &Adam::default(),
            1,
        )
        .unwrap();
        assert_eq!(th, [0.3, -0.7]);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Tensor::vector(vec![3.0, 0.0]), Tensor::vector(vec![4.0])];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[0].data(), &[3.0, 0.0]);
        clip_global_norm(&mut g, 1.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15 && (g[1].data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let (mut th, mut m, mut v) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        assert!(adam_update(&mut th, &[0.0], &mut m, &mut v, 0.1, &Adam::default(), 1).is_err());
    }
}
