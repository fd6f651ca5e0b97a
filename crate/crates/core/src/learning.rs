//! Local weight learning on the slow timescale.
//!
//! After the nodes settle, each gap `i` sees only `eps[i+1]` and `x[i]`. The
//! weights descend the free energy `F = sum_i nu_i/2 |eps_i|^2`, whose
//! gradient with respect to `M` is `-eps[i+1] (x) s(x[i])`:
//!
//! ```text
//! gamma * dM/dt = eps[i+1] (x) s(x[i]) - lambda_M * M
//! gamma * dW/dt = s(x[i]) (x) eps[i+1] - lambda_W * W
//! ```
//!
//! integrated with one Euler step of length `weight_dt` per presented sample.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{PcError, PcResult};
use crate::metrics::{error_norms, RunReport};
use crate::network::{validate_layers, LayerSpec, ModeConfig, PcNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningConfig {
    /// Weight time constant.
    pub gamma: f64,
    pub lambda_m: f64,
    pub lambda_w: f64,
    /// Euler step of the weight equations, one step per sample.
    pub weight_dt: f64,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            lambda_m: 0.0,
            lambda_w: 0.0,
            weight_dt: 1.0,
            epochs: 3,
            shuffle_seed: 0,
        }
    }
}

impl LearningConfig {
    /// Weight decay with `lambda_W = lambda_M / 2`.
    pub fn with_decay(self, lambda_m: f64) -> Self {
        Self {
            lambda_m,
            lambda_w: 0.5 * lambda_m,
            ..self
        }
    }

    pub fn validate(&self) -> PcResult<()> {
        if !(self.gamma > 0.0 && self.weight_dt > 0.0) {
            return Err(PcError::InvalidConfig(format!(
                "gamma and weight_dt must be positive (gamma={}, weight_dt={})",
                self.gamma, self.weight_dt
            )));
        }
        if !(self.lambda_m >= 0.0 && self.lambda_w >= 0.0) {
            return Err(PcError::InvalidConfig(
                "weight decay rates must be non-negative".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(PcError::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Free-energy gradients for every gap; `backward[i]` is the transpose of
/// `forward[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGradients {
    pub forward: Vec<DMatrix<f64>>,
    pub backward: Vec<DMatrix<f64>>,
}

/// `dF/dM[i] = -eps[i+1] s(x[i])^T`; gap `i` reads only `eps[i+1]` and `x[i]`.
pub fn weight_gradients(net: &PcNetwork) -> WeightGradients {
    let act = net.activation();
    let (forward, backward) = (0..net.depth() - 1)
        .map(|i| {
            let s = act.map(&net.x[i]);
            let e = -&net.eps[i + 1];
            (&e * s.transpose(), s * e.transpose())
        })
        .unzip();
    WeightGradients { forward, backward }
}

/// One Euler step of `gamma dM/dt = -dM - lambda_M M` (and likewise for `W`).
pub fn apply_weight_update(
    net: &mut PcNetwork,
    grads: &WeightGradients,
    cfg: &LearningConfig,
) -> PcResult<()> {
    if grads.forward.len() != net.forward.len() || grads.backward.len() != net.backward.len() {
        return Err(PcError::ShapeMismatch(
            "gradient count does not match the number of gaps".into(),
        ));
    }
    let k = cfg.weight_dt / cfg.gamma;
    for i in 0..net.forward.len() {
        if grads.forward[i].shape() != net.forward[i].shape()
            || grads.backward[i].shape() != net.backward[i].shape()
        {
            return Err(PcError::ShapeMismatch(format!(
                "gradient shape for gap {i} does not match the weights"
            )));
        }
        let m = &mut net.forward[i];
        *m *= 1.0 - k * cfg.lambda_m;
        *m -= k * &grads.forward[i];
        let w = &mut net.backward[i];
        *w *= 1.0 - k * cfg.lambda_w;
        *w -= k * &grads.backward[i];
        if net.forward[i].iter().chain(net.backward[i].iter()).any(|v| !v.is_finite()) {
            return Err(PcError::Divergence {
                layer: i,
                what: "weights",
            });
        }
    }
    Ok(())
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` forward weights, backward
/// weights set to their transposes.
pub fn init_weights(
    layers: &[LayerSpec],
    seed: u64,
) -> PcResult<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    validate_layers(layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forward: Vec<DMatrix<f64>> = layers
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0].size, w[1].size);
            let bound = 1.0 / (fan_in as f64).sqrt();
            DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..=bound))
        })
        .collect();
    let backward = forward.iter().map(|m| m.transpose()).collect();
    Ok((forward, backward))
}

/// Online training: for every sample in shuffled order, warm-start, settle
/// with the input clamped and the output pinned to the target, then take one
/// weight step. The mode gates in `mode_cfg` are overridden.
pub fn train(
    net: &mut PcNetwork,
    dataset: &Dataset,
    mode_cfg: &ModeConfig,
    learn_cfg: &LearningConfig,
) -> PcResult<RunReport> {
    learn_cfg.validate()?;
    let cfg = mode_cfg.training();
    cfg.validate()?;
    net.validate()?;
    if dataset.is_empty() {
        return Err(PcError::InvalidConfig("cannot train on an empty dataset".into()));
    }
    if dataset.input_dim() != net.input_size() || dataset.output_dim() != net.output_size() {
        return Err(PcError::ShapeMismatch(format!(
            "dataset is {}->{} but the network is {}->{}",
            dataset.input_dim(),
            dataset.output_dim(),
            net.input_size(),
            net.output_size()
        )));
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(learn_cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = RunReport::default();
    let mut converged = 0usize;
    let mut presented = 0usize;

    for _ in 0..learn_cfg.epochs {
        order.shuffle(&mut rng);
        let mut energy = 0.0;
        let mut norms = vec![0.0; net.depth()];
        for &index in &order {
            let (input, target) = dataset.pair(index);
            let outcome = train_sample(net, input, target, &cfg, learn_cfg).map_err(|e| {
                PcError::SampleFailed {
                    index,
                    source: Box::new(e),
                }
            })?;
            energy += outcome.energy;
            for (acc, v) in norms.iter_mut().zip(&outcome.error_norms) {
                *acc += v;
            }
            converged += usize::from(outcome.converged);
            presented += 1;
        }
        let count = dataset.len() as f64;
        report.per_epoch_energy.push(energy / count);
        report
            .per_epoch_error_norms
            .push(norms.iter().map(|v| v / count).collect());
    }

    report.final_error_norms = report.per_epoch_error_norms.last().cloned().unwrap_or_default();
    report.converged_fraction = converged as f64 / presented as f64;
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Per-sample statistics recorded at the settled state, before the weight step.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub energy: f64,
    pub error_norms: Vec<f64>,
    pub converged: bool,
}

/// Settles on one `(input, target)` pair and applies one weight step.
pub fn train_sample(
    net: &mut PcNetwork,
    input: &DVector<f64>,
    target: &DVector<f64>,
    cfg: &ModeConfig,
    learn_cfg: &LearningConfig,
) -> PcResult<SampleOutcome> {
    net.feedforward_init(input)?;
    let settled = net.settle(Some(input), Some(target), cfg)?;
    let outcome = SampleOutcome {
        energy: net.free_energy(),
        error_norms: error_norms(net),
        converged: settled.converged,
    };
    let grads = weight_gradients(net);
    apply_weight_update(net, &grads, learn_cfg)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;
    use approx::assert_relative_eq;

    fn linear(sizes: &[usize]) -> Vec<LayerSpec> {
        LayerSpec::stack(sizes, Activation::Linear)
    }

    #[test]
    fn zero_errors_give_zero_gradients() {
        let mut net = PcNetwork::random(linear(&[4, 3, 2]), 1).unwrap();
        net.x[0] = DVector::from_element(4, 0.3);
        let g = weight_gradients(&net);
        assert!(g.forward.iter().chain(&g.backward).all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn outer_product_by_hand() {
        let mut net = PcNetwork::zeros(linear(&[2, 1])).unwrap();
        net.eps[1] = DVector::from_row_slice(&[1.0]);
        net.x[0] = DVector::from_row_slice(&[2.0, 3.0]);
        let g = weight_gradients(&net);
        assert_eq!(g.forward[0], DMatrix::from_row_slice(1, 2, &[-2.0, -3.0]));
        assert_eq!(g.backward[0], DMatrix::from_row_slice(2, 1, &[-2.0, -3.0]));
    }

    #[test]
    fn backward_gradient_is_exact_transpose() {
        let mut net = PcNetwork::random(LayerSpec::stack(&[5, 4, 3], Activation::Tanh), 9).unwrap();
        for (i, l) in net.layers().to_vec().iter().enumerate() {
            net.x[i] = DVector::from_fn(l.size, |r, _| (r as f64 * 0.37 + i as f64).sin());
            net.eps[i] = DVector::from_fn(l.size, |r, _| (r as f64 * 1.3 - i as f64).cos());
        }
        let g = weight_gradients(&net);
        for (m, w) in g.forward.iter().zip(&g.backward) {
            assert_eq!(&m.transpose(), w);
        }
    }

    #[test]
    fn update_examples() {
        let mut net = PcNetwork::random(linear(&[3, 2]), 2).unwrap();
        let before = net.clone();
        let zero = WeightGradients {
            forward: vec![DMatrix::zeros(2, 3)],
            backward: vec![DMatrix::zeros(3, 2)],
        };
        let cfg = LearningConfig::default();
        apply_weight_update(&mut net, &zero, &cfg).unwrap();
        assert_eq!(net, before);

        let decay = LearningConfig::default().with_decay(0.05);
        apply_weight_update(&mut net, &zero, &decay).unwrap();
        let factor = 1.0 - decay.weight_dt * decay.lambda_m / decay.gamma;
        assert_relative_eq!(net.forward[0], &before.forward[0] * factor, epsilon = 1e-15);

        let mut one = PcNetwork::new(
            linear(&[1, 1]),
            vec![DMatrix::from_element(1, 1, 1.0)],
            vec![DMatrix::from_element(1, 1, 1.0)],
            vec![1.0; 2],
        )
        .unwrap();
        let g = WeightGradients {
            forward: vec![DMatrix::from_element(1, 1, 0.8)],
            backward: vec![DMatrix::from_element(1, 1, 0.8)],
        };
        apply_weight_update(&mut one, &g, &LearningConfig::default()).unwrap();
        assert_relative_eq!(one.forward[0][(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn update_rejects_mismatched_shapes() {
        let mut net = PcNetwork::zeros(linear(&[3, 2])).unwrap();
        let g = WeightGradients {
            forward: vec![DMatrix::zeros(3, 2)],
            backward: vec![DMatrix::zeros(2, 3)],
        };
        assert!(apply_weight_update(&mut net, &g, &LearningConfig::default()).is_err());
    }

    #[test]
    fn init_weights_examples() {
        let layers = linear(&[4, 3, 2]);
        let a = init_weights(&layers, 7).unwrap();
        let b = init_weights(&layers, 7).unwrap();
        assert_eq!(a, b);
        for (m, w) in a.0.iter().zip(&a.1) {
            assert_eq!(&m.transpose(), w);
        }
        assert!(a.0[0].iter().all(|v| v.abs() <= 0.5));
        assert!(a.0[0].iter().any(|v| v.abs() > 0.0));
        assert_ne!(a, init_weights(&layers, 8).unwrap());
    }

    #[test]
    fn learning_config_validation() {
        assert!(LearningConfig::default().validate().is_ok());
        assert!(LearningConfig {
            epochs: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LearningConfig {
            gamma: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let d = LearningConfig::default().with_decay(0.05);
        assert_eq!(d.lambda_w, 0.025);
    }
}
