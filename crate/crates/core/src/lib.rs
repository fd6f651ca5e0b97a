//! Predictive coding networks trained with local learning rules.
//!
//! - [`network`]: data model and continuous-time node dynamics
//! - [`learning`]: local weight gradients and the slow weight dynamics
//! - [`modes`]: discriminative inference and generative sampling
//! - [`minnorm`]: exact minimum 2-norm solves used as ground truth
//! - [`data`]: synthetic exemplar task and MNIST IDX loading
//! - [`metrics`]: correlations, accuracy and error-node diagnostics
//! - [`experiment`], [`checkpoint`], [`report`], [`harness`]: presets,
//!   persistence and the experiment protocols behind the `pcgen` tool

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod learning;
pub mod metrics;
pub mod minnorm;
pub mod modes;
pub mod network;
pub mod report;

pub use checkpoint::{Checkpoint, Provenance};
pub use data::{load_mnist_idx, make_toy_dataset, one_hot, Dataset};
pub use error::{PcError, PcResult};
pub use experiment::{DatasetSpec, ExperimentConfig, Preset};
pub use learning::{apply_weight_update, init_weights, train, weight_gradients, LearningConfig, WeightGradients};
pub use metrics::{accuracy, argmax, error_norms, normalized_correlation, RunReport};
pub use minnorm::{construct_a, min_norm_solve, verify_theorem, MinNormSolution, TheoremReport};
pub use modes::{discriminate, generate, generate_with, Discrimination, GenerativeResult, HiddenInit};
pub use network::{error_equilibrium, prediction, Activation, LayerSpec, ModeConfig, PcNetwork, SettleOutcome};
