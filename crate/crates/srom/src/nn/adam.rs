//! Adam optimizer with bias-corrected moment estimates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{GradStore, ParamModel, TrainConfig};

/// Per-parameter first/second moment state, keyed by tensor name.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub t: usize,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update over every parameter of `model`:
/// `theta <- theta - eta * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step<M: ParamModel>(
    state: &mut AdamState,
    model: &mut M,
    grads: &GradStore,
    cfg: &TrainConfig,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::TrainingDiverged("non-finite gradient".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, theta) in model.params_mut() {
        let g = match grads.get(&name) {
            Some(g) => g,
            None => continue, // parameter untouched this step
        };
        debug_assert_eq!(g.len(), theta.len(), "gradient shape for {name}");
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; theta.len()]);
        let v = state.v.entry(name).or_insert_with(|| vec![0.0; theta.len()]);
        for i in 0..theta.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{Array1, Array2};

    fn tiny_model() -> Dense {
        Dense {
            w: Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
            b: Array1::zeros(1),
            act: Activation::Linear,
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut model = tiny_model();
        let mut state = AdamState::new();
        let cfg = TrainConfig::new(0.1, 1, 1, 0);
        let mut grads = GradStore::new();
        grads.accumulate("w", &[2.5]);
        grads.accumulate("b", &[-0.7]);
        adam_step(&mut state, &mut model, &grads, &cfg).unwrap();
        // At t = 1 the bias corrections cancel: update = -eta * sign(g).
        assert!((model.w[[0, 0]] - (1.0 - 0.1)).abs() < 1e-6);
        assert!((model.b[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut model = tiny_model();
        let mut state = AdamState::new();
        let cfg = TrainConfig::new(0.1, 1, 1, 0);
        let mut grads = GradStore::new();
        grads.accumulate("w", &[0.0]);
        grads.accumulate("b", &[0.0]);
        for _ in 0..25 {
            adam_step(&mut state, &mut model, &grads, &cfg).unwrap();
        }
        assert_eq!(model.w[[0, 0]], 1.0);
        assert_eq!(model.b[0], 0.0);
    }

    #[test]
    fn quadratic_descent_matches_scalar_reference_trace() {
        // Minimize f(theta) = theta^2 from theta = 1 with eta = 0.1; the
        // reference trace is an independent scalar Adam implementation.
        let cfg = TrainConfig::new(0.1, 1, 1, 0);
        let mut model = tiny_model();
        let mut state = AdamState::new();

        let mut theta_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut prev = f64::INFINITY;
        for t in 1..=10 {
            // Library step on the matching gradient.
            let mut grads = GradStore::new();
            grads.accumulate("w", &[2.0 * model.w[[0, 0]]]);
            grads.accumulate("b", &[0.0]);
            adam_step(&mut state, &mut model, &grads, &cfg).unwrap();

            // Scalar reference.
            let g = 2.0 * theta_ref;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            theta_ref -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);

            let got = model.w[[0, 0]];
            assert!((got - theta_ref).abs() < 1e-14, "trace diverged at step {t}");
            assert!(got.abs() < prev, "|theta| must shrink monotonically");
            prev = got.abs();
        }
    }

    #[test]
    fn non_finite_gradient_is_training_divergence() {
        let mut model = tiny_model();
        let mut state = AdamState::new();
        let cfg = TrainConfig::new(0.1, 1, 1, 0);
        let mut grads = GradStore::new();
        grads.accumulate("w", &[f64::NAN]);
        assert!(matches!(
            adam_step(&mut state, &mut model, &grads, &cfg),
            Err(Error::TrainingDiverged(_))
        ));
    }
}
