use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ParamSet, Tensor};

/// Adam hyper-parameters. Weight decay is added to the gradient as `λ·w`
/// before the moment updates (classic Adam with L2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 0.00005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

impl Adam {
    pub fn step(
        &self,
        params: &mut ParamSet,
        grads: &[Tensor],
        state: &mut AdamState,
    ) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if grads.len() != params.len()
            || state.m.len() != params.len()
            || state.v.len() != params.len()
        {
            return Err(Error::dim(
                "adam_step",
                &[params.len()],
                &[grads.len(), state.m.len()],
            ));
        }
        for ((p, g), m) in params.values().zip(grads).zip(&state.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
        }

        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads)
            .zip(state.m.iter_mut())
            .zip(state.v.iter_mut())
        {
            let (w, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..w.len() {
                let gi = g[i] + self.weight_decay * w[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamGroup;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", ParamGroup::Other, Tensor::vector(vec![value]));
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = single(0.5);
        let mut state = AdamState::new(&params);
        let adam = Adam {
            weight_decay: 0.0,
            ..Adam::default()
        };
        adam.step(&mut params, &[Tensor::vector(vec![1.0])], &mut state)
            .unwrap();
        // m̂ = 1, v̂ = 1 after bias correction, so Δ = lr / (1 + eps).
        let delta = 0.5 - params.values().next().unwrap().data()[0];
        assert!((delta - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_no_op() {
        let mut params = single(0.25);
        let mut state = AdamState::new(&params);
        let adam = Adam {
            weight_decay: 0.0,
            ..Adam::default()
        };
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor::vector(vec![0.0])], &mut state)
                .unwrap();
        }
        assert_eq!(params.values().next().unwrap().data()[0], 0.25);
    }

    #[test]
    fn defaults_match_training_setup() {
        let adam = Adam::default();
        assert_eq!(adam.lr, 0.001);
        assert_eq!(adam.weight_decay, 0.00005);
        assert_eq!((adam.beta1, adam.beta2), (0.9, 0.999));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = single(0.0);
        let mut state = AdamState::new(&params);
        let err = Adam::default().step(&mut params, &[Tensor::vector(vec![1.0, 2.0])], &mut state);
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }
}
