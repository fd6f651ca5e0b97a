//! Network data model and the continuous-time node dynamics.
//!
//! Layers are indexed from 0 (input) to `n - 1` (output). Predictions flow
//! up: `forward[i]` maps the activity of layer `i` to a prediction of layer
//! `i + 1`. Errors flow down: `backward[i]` carries `eps[i + 1]` to layer `i`.
//!
//! Each node obeys
//!
//! ```text
//! tau * d eps[i]/dt = x[i] - mu[i] - nu[i] * eps[i]
//! tau * d x[i]/dt   = (backward[i] * eps[i+1]) .* s'(x[i]) - g[i] * eps[i] - lambda_x * x[i]
//! tau * d x[n-1]/dt = -beta * eps[n-1]
//! ```
//!
//! where `mu[0]` is the raw input `X`, `mu[i] = forward[i-1] * s(x[i-1])`
//! otherwise, and `g[0] = alpha`, `g[i] = 1` for hidden layers.

use nalgebra::{DMatrix, DVector};

use crate::error::{PcError, PcResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Linear => v,
            Activation::Tanh => v.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn map(self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Activation::Linear => x.clone(),
            Activation::Tanh => x.map(f64::tanh),
        }
    }

    pub fn derivative_map(self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.derivative(v))
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "linear" | "identity" => Some(Activation::Linear),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub size: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(size: usize, activation: Activation) -> Self {
        Self { size, activation }
    }

    /// Builds a uniform stack of layers sharing one activation.
    pub fn stack(sizes: &[usize], activation: Activation) -> Vec<LayerSpec> {
        sizes.iter().map(|&s| LayerSpec::new(s, activation)).collect()
    }
}

/// Checks the layer list: at least two layers, no empty layer, one activation.
pub fn validate_layers(layers: &[LayerSpec]) -> PcResult<()> {
    if layers.len() < 2 {
        return Err(PcError::InvalidConfig(format!(
            "a network needs at least 2 layers, got {}",
            layers.len()
        )));
    }
    if let Some((i, _)) = layers.iter().enumerate().find(|(_, l)| l.size == 0) {
        return Err(PcError::InvalidConfig(format!("layer {i} has 0 nodes")));
    }
    let act = layers[0].activation;
    if layers.iter().any(|l| l.activation != act) {
        return Err(PcError::InvalidConfig(
            "all layers must share the same activation".into(),
        ));
    }
    Ok(())
}

/// Clamping gates, time constants and stopping rule for one settle run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeConfig {
    /// Input gate: 1 lets the input error pull on `x[0]`, 0 frees `x[0]`.
    pub alpha: f64,
    /// Output gate: 1 lets the top layer move, 0 pins it to the target.
    pub beta: f64,
    pub tau: f64,
    pub lambda_x: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Stop once every `|dx/dt|` and `|d eps/dt|` falls below this.
    pub tol: f64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            tau: 0.2,
            lambda_x: 0.0,
            dt: 0.02,
            t_max: 5.0,
            tol: 1e-5,
        }
    }
}

impl ModeConfig {
    /// Input clamped, output pinned to the target.
    pub fn training(self) -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            ..self
        }
    }

    /// Input clamped, output free.
    pub fn discriminative(self) -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            ..self
        }
    }

    /// Input free, output pinned to the class vector.
    pub fn generative(self) -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            ..self
        }
    }

    pub fn with_lambda_x(self, lambda_x: f64) -> Self {
        Self { lambda_x, ..self }
    }

    pub fn validate(&self) -> PcResult<()> {
        let gate = |v: f64| v == 0.0 || v == 1.0;
        if !gate(self.alpha) || !gate(self.beta) {
            return Err(PcError::InvalidConfig(format!(
                "alpha and beta must be 0 or 1 (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if !(self.tau > 0.0 && self.dt > 0.0 && self.dt < self.tau) {
            return Err(PcError::InvalidConfig(format!(
                "need 0 < dt < tau (dt={}, tau={})",
                self.dt, self.tau
            )));
        }
        if !(self.t_max >= self.dt) {
            return Err(PcError::InvalidConfig(format!(
                "t_max ({}) must be at least dt ({})",
                self.t_max, self.dt
            )));
        }
        if !(self.lambda_x >= 0.0 && self.tol >= 0.0) {
            return Err(PcError::InvalidConfig(
                "lambda_x and tol must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn max_steps(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize
    }
}

/// Result of integrating a network towards equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleOutcome {
    pub converged: bool,
    /// Simulated seconds spent integrating.
    pub elapsed: f64,
    pub steps: usize,
    /// Largest node derivative at the final state.
    pub max_rate: f64,
}

/// Time derivatives of every state and error node.
#[derive(Debug, Clone)]
pub struct NodeRates {
    pub dx: Vec<DVector<f64>>,
    pub deps: Vec<DVector<f64>>,
}

impl NodeRates {
    pub fn max_abs(&self) -> f64 {
        self.dx
            .iter()
            .chain(self.deps.iter())
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcNetwork {
    layers: Vec<LayerSpec>,
    /// State nodes, one vector per layer.
    pub x: Vec<DVector<f64>>,
    /// Error nodes, one vector per layer.
    pub eps: Vec<DVector<f64>>,
    /// Prediction weights; `forward[i]` is `size[i+1] x size[i]`.
    pub forward: Vec<DMatrix<f64>>,
    /// Error feedback weights; `backward[i]` is `size[i] x size[i+1]`.
    pub backward: Vec<DMatrix<f64>>,
    /// Variance parameter of each layer's error node.
    pub nu: Vec<f64>,
}

impl PcNetwork {
    pub fn new(
        layers: Vec<LayerSpec>,
        forward: Vec<DMatrix<f64>>,
        backward: Vec<DMatrix<f64>>,
        nu: Vec<f64>,
    ) -> PcResult<Self> {
        validate_layers(&layers)?;
        let x = layers.iter().map(|l| DVector::zeros(l.size)).collect();
        let eps = layers.iter().map(|l| DVector::zeros(l.size)).collect();
        let net = Self {
            layers,
            x,
            eps,
            forward,
            backward,
            nu,
        };
        net.validate()?;
        Ok(net)
    }

    /// A network with all weights and nodes at zero and unit variances.
    pub fn zeros(layers: Vec<LayerSpec>) -> PcResult<Self> {
        validate_layers(&layers)?;
        let forward = layers
            .windows(2)
            .map(|w| DMatrix::zeros(w[1].size, w[0].size))
            .collect();
        let backward = layers
            .windows(2)
            .map(|w| DMatrix::zeros(w[0].size, w[1].size))
            .collect();
        let nu = vec![1.0; layers.len()];
        Self::new(layers, forward, backward, nu)
    }

    /// A network with weights from [`crate::learning::init_weights`].
    pub fn random(layers: Vec<LayerSpec>, seed: u64) -> PcResult<Self> {
        validate_layers(&layers)?;
        let (forward, backward) = crate::learning::init_weights(&layers, seed)?;
        let nu = vec![1.0; layers.len()];
        Self::new(layers, forward, backward, nu)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.size).collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn activation(&self) -> Activation {
        self.layers[0].activation
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].size
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].size
    }

    pub fn top(&self) -> usize {
        self.layers.len() - 1
    }

    /// Checks every structural invariant of the network.
    pub fn validate(&self) -> PcResult<()> {
        validate_layers(&self.layers)?;
        let n = self.layers.len();
        if self.x.len() != n || self.eps.len() != n || self.nu.len() != n {
            return Err(PcError::ShapeMismatch(format!(
                "expected {n} state/error/variance entries, got {}/{}/{}",
                self.x.len(),
                self.eps.len(),
                self.nu.len()
            )));
        }
        if self.forward.len() != n - 1 || self.backward.len() != n - 1 {
            return Err(PcError::ShapeMismatch(format!(
                "expected {} weight matrices per direction, got {}/{}",
                n - 1,
                self.forward.len(),
                self.backward.len()
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if self.x[i].len() != l.size || self.eps[i].len() != l.size {
                return Err(PcError::ShapeMismatch(format!(
                    "layer {i}: nodes must have {} entries",
                    l.size
                )));
            }
            if !(self.nu[i] > 0.0 && self.nu[i].is_finite()) {
                return Err(PcError::Domain(format!(
                    "layer {i}: variance must be positive, got {}",
                    self.nu[i]
                )));
            }
        }
        for i in 0..n - 1 {
            let (rows, cols) = (self.layers[i + 1].size, self.layers[i].size);
            if self.forward[i].shape() != (rows, cols) {
                return Err(PcError::ShapeMismatch(format!(
                    "forward[{i}] must be {rows}x{cols}, got {:?}",
                    self.forward[i].shape()
                )));
            }
            if self.backward[i].shape() != (cols, rows) {
                return Err(PcError::ShapeMismatch(format!(
                    "backward[{i}] must be {cols}x{rows}, got {:?}",
                    self.backward[i].shape()
                )));
            }
        }
        Ok(())
    }

    /// Prediction sent up into layer `layer` (`layer >= 1`).
    pub fn prediction_for(&self, layer: usize) -> DVector<f64> {
        &self.forward[layer - 1] * self.activation().map(&self.x[layer - 1])
    }

    pub fn reset_errors(&mut self) {
        for e in &mut self.eps {
            e.fill(0.0);
        }
    }

    /// Warm start: `x[0] = input`, every higher layer set to the prediction
    /// from below, all errors zero.
    pub fn feedforward_init(&mut self, input: &DVector<f64>) -> PcResult<()> {
        check_len("input", input.len(), self.input_size())?;
        self.x[0].copy_from(input);
        for i in 1..self.depth() {
            let mu = self.prediction_for(i);
            self.x[i] = mu;
        }
        self.reset_errors();
        Ok(())
    }

    /// Computes every node derivative at the current state.
    ///
    /// `input` is the raw input compared against `x[0]`; `None` removes that
    /// drive so `eps[0]` relaxes to zero.
    pub fn node_rates(&self, input: Option<&DVector<f64>>, cfg: &ModeConfig) -> NodeRates {
        let n = self.depth();
        let act = self.activation();
        let inv_tau = 1.0 / cfg.tau;
        let sigma: Vec<DVector<f64>> = self.x[..n - 1].iter().map(|x| act.map(x)).collect();

        let mut deps = Vec::with_capacity(n);
        for i in 0..n {
            let mut d = -self.nu[i] * &self.eps[i];
            if i == 0 {
                if let Some(input) = input {
                    d += &self.x[0];
                    d -= input;
                }
            } else {
                d += &self.x[i];
                d.gemv(-1.0, &self.forward[i - 1], &sigma[i - 1], 1.0);
            }
            d *= inv_tau;
            deps.push(d);
        }

        let mut dx = Vec::with_capacity(n);
        for i in 0..n - 1 {
            let mut fb = &self.backward[i] * &self.eps[i + 1];
            if act == Activation::Tanh {
                // tanh' = 1 - tanh^2, reusing the activations computed above.
                fb.zip_apply(&sigma[i], |f, s| *f *= 1.0 - s * s);
            }
            let gate = if i == 0 { cfg.alpha } else { 1.0 };
            fb.axpy(-gate, &self.eps[i], 1.0);
            if cfg.lambda_x != 0.0 {
                fb.axpy(-cfg.lambda_x, &self.x[i], 1.0);
            }
            fb *= inv_tau;
            dx.push(fb);
        }
        dx.push(-cfg.beta * inv_tau * &self.eps[n - 1]);

        NodeRates { dx, deps }
    }

    fn pin_top(&mut self, target: Option<&DVector<f64>>, cfg: &ModeConfig) -> PcResult<()> {
        if cfg.beta == 0.0 {
            let target = target.ok_or_else(|| {
                PcError::InvalidConfig("a pinned output layer (beta = 0) needs a target".into())
            })?;
            check_len("target", target.len(), self.output_size())?;
            let top = self.top();
            self.x[top].copy_from(target);
        }
        Ok(())
    }

    fn advance(&mut self, rates: &NodeRates, cfg: &ModeConfig) -> PcResult<()> {
        let top = self.top();
        for i in 0..self.depth() {
            self.eps[i].axpy(cfg.dt, &rates.deps[i], 1.0);
            if !(i == top && cfg.beta == 0.0) {
                self.x[i].axpy(cfg.dt, &rates.dx[i], 1.0);
            }
            if self.eps[i].iter().any(|v| !v.is_finite()) {
                return Err(PcError::Divergence {
                    layer: i,
                    what: "error node",
                });
            }
            if self.x[i].iter().any(|v| !v.is_finite()) {
                return Err(PcError::Divergence {
                    layer: i,
                    what: "state node",
                });
            }
        }
        Ok(())
    }

    /// One explicit Euler step applied to all nodes at once. Returns the
    /// largest derivative magnitude at the pre-step state.
    pub fn step_nodes(
        &mut self,
        input: Option<&DVector<f64>>,
        target: Option<&DVector<f64>>,
        cfg: &ModeConfig,
    ) -> PcResult<f64> {
        if let Some(input) = input {
            check_len("input", input.len(), self.input_size())?;
        }
        self.pin_top(target, cfg)?;
        let rates = self.node_rates(input, cfg);
        self.advance(&rates, cfg)?;
        Ok(rates.max_abs())
    }

    /// Integrates until every derivative is below `cfg.tol` or `cfg.t_max`
    /// simulated seconds have passed.
    pub fn settle(
        &mut self,
        input: Option<&DVector<f64>>,
        target: Option<&DVector<f64>>,
        cfg: &ModeConfig,
    ) -> PcResult<SettleOutcome> {
        self.settle_observed(input, target, cfg, |_, _| {})
    }

    /// Like [`settle`](Self::settle), calling `observe(elapsed, net)` before
    /// every step and once at the final state.
    pub fn settle_observed<F>(
        &mut self,
        input: Option<&DVector<f64>>,
        target: Option<&DVector<f64>>,
        cfg: &ModeConfig,
        mut observe: F,
    ) -> PcResult<SettleOutcome>
    where
        F: FnMut(f64, &PcNetwork),
    {
        cfg.validate()?;
        self.validate()?;
        if let Some(input) = input {
            check_len("input", input.len(), self.input_size())?;
        }
        self.pin_top(target, cfg)?;
        let max_steps = cfg.max_steps();
        let mut steps = 0;
        loop {
            let rates = self.node_rates(input, cfg);
            let max_rate = rates.max_abs();
            let elapsed = steps as f64 * cfg.dt;
            observe(elapsed, self);
            if max_rate < cfg.tol || steps >= max_steps {
                return Ok(SettleOutcome {
                    converged: max_rate < cfg.tol,
                    elapsed,
                    steps,
                    max_rate,
                });
            }
            self.advance(&rates, cfg)?;
            steps += 1;
        }
    }

    /// Weighted squared error summed over layers, `sum_i nu_i/2 |eps_i|^2`.
    pub fn free_energy(&self) -> f64 {
        self.eps
            .iter()
            .zip(&self.nu)
            .map(|(e, nu)| 0.5 * nu * e.norm_squared())
            .sum()
    }
}

/// `forward * s(x_below)`.
pub fn prediction(
    forward: &DMatrix<f64>,
    x_below: &DVector<f64>,
    activation: Activation,
) -> PcResult<DVector<f64>> {
    if forward.ncols() != x_below.len() {
        return Err(PcError::ShapeMismatch(format!(
            "cannot multiply {}x{} matrix by {}-vector",
            forward.nrows(),
            forward.ncols(),
            x_below.len()
        )));
    }
    Ok(forward * activation.map(x_below))
}

/// Equilibrium value of an error node, `(x - mu) / nu`.
pub fn error_equilibrium(x: &DVector<f64>, mu: &DVector<f64>, nu: f64) -> PcResult<DVector<f64>> {
    if !(nu > 0.0) {
        return Err(PcError::Domain(format!("variance must be positive, got {nu}")));
    }
    check_len("prediction", mu.len(), x.len())?;
    Ok((x - mu) / nu)
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> PcResult<()> {
    if got != expected {
        return Err(PcError::ShapeMismatch(format!(
            "{what} has {got} entries, expected {expected}"
        )));
    }
    Ok(())
}
