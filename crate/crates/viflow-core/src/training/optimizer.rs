//! Adam with skip-on-zero-gradient parameter writes.

use crate::autodiff::{GradTable, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub(crate) fn validate(&self) -> Result<()> {
        let positive_finite = |v: f64| v.is_finite() && v > 0.0;
        if !positive_finite(self.learning_rate) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !positive_finite(self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
    step: u64,
}

impl AdamState {
    /// Fresh zero moments shaped after `params`.
    pub fn new(params: &ParamSet<f32>) -> Self {
        let zeros: Vec<Tensor<f32>> = params
            .ids()
            .map(|id| {
                Tensor::zeros(params.value(id).shape().to_vec())
                    .expect("parameter shapes are already validated")
            })
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Completed update count.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// First-moment estimates, one per parameter in id order.
    pub fn first_moments(&self) -> &[Tensor<f32>] {
        &self.m
    }

    /// Second-moment estimates, one per parameter in id order.
    pub fn second_moments(&self) -> &[Tensor<f32>] {
        &self.v
    }

    /// Reassembles a state from stored parts.
    pub fn from_parts(m: Vec<Tensor<f32>>, v: Vec<Tensor<f32>>, step: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::Shape(format!(
                "{} first moments vs {} second moments",
                m.len(),
                v.len()
            )));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "moment shapes disagree: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(Self { m, v, step })
    }
}

/// One Adam update over every parameter.
///
/// Moment estimates always decay toward the new gradient, but a tensor whose
/// gradient is entirely zero keeps its exact bits: a hypothesis head that
/// did not win this batch is left untouched even while leftover momentum
/// from its earlier wins fades.
pub fn adam_update(
    params: &mut ParamSet<f32>,
    grads: &GradTable<f32>,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    hyper.validate()?;
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} parameters vs {} gradients vs {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let b1 = hyper.beta1 as f32;
    let b2 = hyper.beta2 as f32;
    let c1 = (1.0 - hyper.beta1.powi(state.step as i32)) as f32;
    let c2 = (1.0 - hyper.beta2.powi(state.step as i32)) as f32;
    let lr = hyper.learning_rate as f32;
    let eps = hyper.epsilon as f32;
    let ids: Vec<_> = params.ids().collect();
    for (slot, &id) in ids.iter().enumerate() {
        let grad = grads.get(id);
        if grad.shape() != params.value(id).shape() {
            return Err(Error::Shape(format!(
                "gradient for {:?} is {:?}, parameter is {:?}",
                params.name(id),
                grad.shape(),
                params.value(id).shape()
            )));
        }
        let g = grad.data();
        let m = state.m[slot].data_mut();
        let v = state.v[slot].data_mut();
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        }
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let p = params.value_mut(id).data_mut();
        for i in 0..p.len() {
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Pathway;

    fn small_params() -> ParamSet<f32> {
        let mut params = ParamSet::new();
        params
            .add(
                "w",
                Tensor::new(vec![3], vec![0.5, -1.25, 2.0]).unwrap(),
                Pathway::Shared,
            )
            .unwrap();
        params
            .add(
                "b",
                Tensor::new(vec![2], vec![0.1, -0.2]).unwrap(),
                Pathway::Hypothesis(0),
            )
            .unwrap();
        params
    }

    fn grads_for(params: &ParamSet<f32>, fill: &[Vec<f32>]) -> GradTable<f32> {
        let tensors = params
            .ids()
            .zip(fill)
            .map(|(id, data)| {
                Tensor::new(params.value(id).shape().to_vec(), data.clone()).unwrap()
            })
            .collect();
        GradTable::from_parts(tensors)
    }

    fn bits(params: &ParamSet<f32>) -> Vec<Vec<u32>> {
        params
            .ids()
            .map(|id| params.value(id).data().iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    #[test]
    fn a_zero_gradient_leaves_the_parameter_bits_alone_while_moments_decay() {
        let mut params = small_params();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::default();

        let warm = grads_for(&params, &[vec![1.0, -2.0, 0.5], vec![0.25, 0.25]]);
        adam_update(&mut params, &warm, &mut state, &hyper).unwrap();
        let moved = bits(&params);
        let m_before: Vec<f32> = state.first_moments()[1].data().to_vec();
        let v_before: Vec<f32> = state.second_moments()[1].data().to_vec();

        let quiet = grads_for(&params, &[vec![0.3, 0.3, 0.3], vec![0.0, 0.0]]);
        adam_update(&mut params, &quiet, &mut state, &hyper).unwrap();

        assert_ne!(bits(&params)[0], moved[0]);
        assert_eq!(bits(&params)[1], moved[1]);
        for (after, before) in state.first_moments()[1].data().iter().zip(&m_before) {
            assert_eq!(*after, 0.9 * before);
        }
        for (after, before) in state.second_moments()[1].data().iter().zip(&v_before) {
            assert_eq!(*after, 0.999 * before);
        }
        assert_eq!(state.step(), 2);
    }

    #[test]
    fn a_constant_gradient_moves_each_weight_by_about_lr_per_step() {
        let mut params = ParamSet::new();
        params
            .add(
                "w",
                Tensor::new(vec![2], vec![1.0, -1.0]).unwrap(),
                Pathway::Shared,
            )
            .unwrap();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper {
            learning_rate: 1e-3,
            ..AdamHyper::default()
        };
        let grads = GradTable::from_parts(vec![
            Tensor::new(vec![2], vec![2.5, -0.3]).unwrap(),
        ]);
        let mut previous: Vec<f32> = params.value(params.by_name("w").unwrap()).data().to_vec();
        for step in 0..400 {
            adam_update(&mut params, &grads, &mut state, &hyper).unwrap();
            let current = params.value(params.by_name("w").unwrap()).data().to_vec();
            if step >= 10 {
                let d0 = (current[0] - previous[0]) as f64;
                let d1 = (current[1] - previous[1]) as f64;
                assert!((d0 + hyper.learning_rate).abs() < 0.02 * hyper.learning_rate);
                assert!((d1 - hyper.learning_rate).abs() < 0.02 * hyper.learning_rate);
            }
            previous = current;
        }
    }

    #[test]
    fn the_first_step_is_bias_corrected_to_lr_times_sign() {
        let mut params = ParamSet::new();
        params
            .add(
                "w",
                Tensor::new(vec![2], vec![0.0, 0.0]).unwrap(),
                Pathway::Shared,
            )
            .unwrap();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyper::default();
        let grads = GradTable::from_parts(vec![
            Tensor::new(vec![2], vec![7.0, -0.01]).unwrap(),
        ]);
        adam_update(&mut params, &grads, &mut state, &hyper).unwrap();
        let after = params.value(params.by_name("w").unwrap()).data();
        let lr = hyper.learning_rate as f32;
        assert!((after[0] + lr).abs() < 1e-3 * lr);
        assert!((after[1] - lr).abs() < 1e-3 * lr);
    }

    #[test]
    fn the_same_inputs_produce_bitwise_identical_updates() {
        let run = || {
            let mut params = small_params();
            let mut state = AdamState::new(&params);
            let hyper = AdamHyper::default();
            for k in 0..25 {
                let scale = (k as f32 + 1.0) * 0.125;
                let grads = grads_for(
                    &params,
                    &[
                        vec![scale, -scale, 0.5 * scale],
                        vec![0.25 * scale, scale],
                    ],
                );
                adam_update(&mut params, &grads, &mut state, &hyper).unwrap();
            }
            (bits(&params), state)
        };
        let (bits_a, state_a) = run();
        let (bits_b, state_b) = run();
        assert_eq!(bits_a, bits_b);
        assert_eq!(state_a, state_b);
    }

    #[test]
    fn mismatched_gradient_tables_are_rejected() {
        let mut params = small_params();
        let mut state = AdamState::new(&params);
        let short = GradTable::from_parts(vec![Tensor::zeros(vec![3]).unwrap()]);
        assert!(matches!(
            adam_update(&mut params, &short, &mut state, &AdamHyper::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn bad_hyperparameters_are_rejected() {
        let mut params = small_params();
        let mut state = AdamState::new(&params);
        let grads = grads_for(&params, &[vec![0.0; 3], vec![0.0; 2]]);
        for hyper in [
            AdamHyper {
                learning_rate: 0.0,
                ..AdamHyper::default()
            },
            AdamHyper {
                beta1: 1.0,
                ..AdamHyper::default()
            },
            AdamHyper {
                beta2: -0.1,
                ..AdamHyper::default()
            },
            AdamHyper {
                epsilon: f64::NAN,
                ..AdamHyper::default()
            },
        ] {
            assert!(matches!(
                adam_update(&mut params, &grads, &mut state, &hyper),
                Err(Error::InvalidParameter(_))
            ));
        }
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn rebuilding_from_parts_checks_the_shapes() {
        let m = vec![Tensor::<f32>::zeros(vec![2]).unwrap()];
        let v = vec![Tensor::<f32>::zeros(vec![3]).unwrap()];
        assert!(matches!(
            AdamState::from_parts(m, v, 5),
            Err(Error::Shape(_))
        ));
        let m = vec![Tensor::<f32>::zeros(vec![2]).unwrap()];
        assert!(matches!(
            AdamState::from_parts(m, vec![], 0),
            Err(Error::Shape(_))
        ));
    }
}
