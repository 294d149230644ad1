use serde::{Deserialize, Serialize};

use super::{NumError, Tensor};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.rows(), t.cols());
        Self {
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NumError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NumError::ParamCount {
            params: params.len(),
            grads: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(NumError::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
        for (((w, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut params = vec![Tensor::column(vec![1.0, -2.0])];
        let mut state = AdamState::new(&params);
        state.m[0] = Tensor::column(vec![0.5, 0.5]);
        state.v[0] = Tensor::column(vec![0.25, 0.25]);
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        adam_step(&mut params, &[Tensor::column(vec![0.0, 0.0])], &mut state, &cfg).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        assert!((state.m[0].data()[0] - 0.45).abs() < 1e-15);
        assert!((state.v[0].data()[0] - 0.25 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_with_fresh_state_is_a_no_op() {
        let mut params = vec![Tensor::column(vec![1.0, -2.0])];
        let mut state = AdamState::new(&params);
        adam_step(
            &mut params,
            &[Tensor::column(vec![0.0, 0.0])],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut params = vec![Tensor::column(vec![0.0, 0.0, 0.0])];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let g = Tensor::column(vec![3.0, -0.2, 1e-3]);
        adam_step(&mut params, &[g], &mut state, &cfg).unwrap();
        for (w, expect) in params[0].data().iter().zip([-0.01, 0.01, -0.01]) {
            assert!((w - expect).abs() < 1e-6, "{w} vs {expect}");
        }
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        for _ in 0..200 {
            let w = params[0].data()[0];
            let g = Tensor::scalar(2.0 * (w - 3.0));
            adam_step(&mut params, &[g], &mut state, &cfg).unwrap();
        }
        assert!((params[0].data()[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut params = vec![Tensor::zeros(2, 2)];
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &[Tensor::zeros(1, 2)], &mut state, &AdamConfig::default());
        assert!(err.is_err());
    }
}
