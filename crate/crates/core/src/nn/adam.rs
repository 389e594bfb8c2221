//! Adam optimizer over MLP parameters.

use serde::{Deserialize, Serialize};

use super::{Mlp, MlpGrads};
use crate::error::{Error, Result};

/// First/second moment estimates, one flat tensor per weight/bias tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Defaults: beta1=0.9, beta2=0.999, epsilon=1e-8.
    pub fn new(mlp: &Mlp) -> Self {
        Self::with_hyperparams(mlp, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(mlp: &Mlp, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let mut shapes = Vec::new();
        let mut m = mlp.clone();
        m.visit_tensors_mut(|_, t| shapes.push(t.len()));
        AdamState {
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients,
/// naming the offending layer.
pub fn adam_step(
    params: &mut Mlp,
    grads: &MlpGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let flat_grads = grads.tensors();
    for (i, g) in flat_grads.iter().enumerate() {
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite gradient at layer {}",
                i / 2
            )));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);

    let mut idx = 0;
    params.visit_tensors_mut(|_, tensor| {
        let g = flat_grads[idx];
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        for i in 0..tensor.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            tensor[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        idx += 1;
    });
    Ok(())
}

/// Adam over one flat tensor, for parameters that live outside an [`Mlp`]
/// (e.g. normalization scales). Same recursion and defaults as [`AdamState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamVec {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamVec {
    pub fn new(dim: usize) -> Self {
        AdamVec {
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            step_count: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::numeric("non-finite gradient in flat tensor"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let bc1 = 1.0 - f64::powi(b1, t);
        let bc2 = 1.0 - f64::powi(b2, t);
        for i in 0..params.len() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            *m = b1 * *m + (1.0 - b1) * grads[i];
            *v = b2 * *v + (1.0 - b2) * grads[i] * grads[i];
            params[i] -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec};
    use crate::rng::rng_for;

    fn scalar_net() -> Mlp {
        Mlp::zeros(MlpSpec::new(vec![1, 1], vec![Activation::Identity]).unwrap())
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut mlp = scalar_net();
        mlp.weight_mut(0).set(0, 0, 0.7);
        let before = mlp.clone();
        let grads = MlpGrads::zeros_like(&mlp);
        let mut state = AdamState::new(&mlp);
        adam_step(&mut mlp, &grads, &mut state, 1e-3).unwrap();
        assert_eq!(mlp, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_computed_recursion() {
        // p=0, g=1, lr=1e-3: m=0.1, v=0.001, m_hat=1, v_hat=1,
        // p' = -1e-3 / (1 + 1e-8).
        let mut mlp = scalar_net();
        let mut grads = MlpGrads::zeros_like(&mlp);
        grads.weights[0].set(0, 0, 1.0);
        let mut state = AdamState::new(&mlp);
        adam_step(&mut mlp, &grads, &mut state, 1e-3).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((mlp.weight(0).get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn trajectories_are_bit_identical_for_identical_inputs() {
        let run = || {
            let mut rng = rng_for(99, &[4]);
            let spec =
                MlpSpec::new(vec![3, 4, 1], vec![Activation::Sigmoid, Activation::Identity])
                    .unwrap();
            let mut mlp = Mlp::init(spec, &mut rng);
            let mut state = AdamState::new(&mlp);
            for step in 0..25 {
                let x = vec![0.1 * step as f64, -0.2, 0.5];
                let (y, cache) = mlp.forward(&x).unwrap();
                let (grads, _) = mlp.backward(&cache, &[y[0] - 0.3]).unwrap();
                adam_step(&mut mlp, &grads, &mut state, 1e-3).unwrap();
            }
            let mut flat = Vec::new();
            mlp.write_params(&mut flat);
            flat.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut mlp = Mlp::zeros(
            MlpSpec::new(
                vec![1, 1, 1],
                vec![Activation::Identity, Activation::Identity],
            )
            .unwrap(),
        );
        let mut grads = MlpGrads::zeros_like(&mlp);
        grads.weights[1].set(0, 0, f64::NAN);
        let mut state = AdamState::new(&mlp);
        let err = adam_step(&mut mlp, &grads, &mut state, 1e-3).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }
}
