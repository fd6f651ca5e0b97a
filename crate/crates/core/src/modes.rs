//! Discriminative inference and generative sampling on a trained network.

use nalgebra::DVector;

use crate::error::PcResult;
use crate::metrics::argmax;
use crate::network::{check_len, ModeConfig, PcNetwork, SettleOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct Discrimination {
    /// Equilibrium state of the output layer.
    pub output: DVector<f64>,
    pub class: usize,
    pub converged: bool,
    pub outcome: SettleOutcome,
}

/// Input clamped, output free: settle from the feed-forward warm start and
/// read the top layer.
pub fn discriminate(
    net: &mut PcNetwork,
    input: &DVector<f64>,
    cfg: &ModeConfig,
) -> PcResult<Discrimination> {
    let cfg = cfg.discriminative();
    net.feedforward_init(input)?;
    let outcome = net.settle(Some(input), None, &cfg)?;
    let output = net.x[net.top()].clone();
    Ok(Discrimination {
        class: argmax(&output),
        output,
        converged: outcome.converged,
        outcome,
    })
}

/// How hidden layers start in generative mode. The input layer always
/// starts at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HiddenInit {
    #[default]
    Zero,
    /// Project the class vector down through the feedback weights.
    TopDown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeResult {
    /// Settled input layer.
    pub sample: DVector<f64>,
    pub converged: bool,
    /// `|Y - mu_top|` at the final state.
    pub residual: f64,
    pub energy: f64,
    pub outcome: SettleOutcome,
}

/// Output pinned to `target`, input released: settle and read the input layer.
pub fn generate(
    net: &mut PcNetwork,
    target: &DVector<f64>,
    cfg: &ModeConfig,
) -> PcResult<GenerativeResult> {
    generate_with(net, target, cfg, HiddenInit::Zero)
}

pub fn generate_with(
    net: &mut PcNetwork,
    target: &DVector<f64>,
    cfg: &ModeConfig,
    init: HiddenInit,
) -> PcResult<GenerativeResult> {
    check_len("class vector", target.len(), net.output_size())?;
    let cfg = cfg.generative();
    let top = net.top();
    for x in &mut net.x {
        x.fill(0.0);
    }
    net.x[top].copy_from(target);
    if init == HiddenInit::TopDown {
        for i in (1..top).rev() {
            net.x[i] = &net.backward[i] * &net.x[i + 1];
        }
    }
    net.reset_errors();
    let outcome = net.settle(None, Some(target), &cfg)?;
    let residual = (target - net.prediction_for(top)).norm();
    Ok(GenerativeResult {
        sample: net.x[0].clone(),
        converged: outcome.converged,
        residual,
        energy: net.free_energy(),
        outcome,
    })
}

/// Linear map from `[-1, 1]` onto pixel bytes, clamping outside values.
pub fn sample_to_pixels(sample: &DVector<f64>) -> Vec<u8> {
    sample.iter().map(|&v| crate::data::unit_to_pixel(v)).collect()
}
