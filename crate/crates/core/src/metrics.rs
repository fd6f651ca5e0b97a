//! Run quality metrics.

use nalgebra::DVector;

use crate::error::{PcError, PcResult};
use crate::network::PcNetwork;

/// Metrics collected over a training or evaluation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    /// Mean settled free energy per epoch.
    pub per_epoch_energy: Vec<f64>,
    /// Mean per-layer error-node L2 norms per epoch.
    pub per_epoch_error_norms: Vec<Vec<f64>>,
    pub final_error_norms: Vec<f64>,
    pub accuracy: Option<f64>,
    pub correlations: Option<Vec<f64>>,
    pub wall_time: f64,
    pub converged_fraction: f64,
}

/// Cosine similarity `x.v / (|x| |v|)`.
pub fn normalized_correlation(x: &DVector<f64>, v: &DVector<f64>) -> PcResult<f64> {
    if x.len() != v.len() {
        return Err(PcError::ShapeMismatch(format!(
            "correlation of a {}-vector with a {}-vector",
            x.len(),
            v.len()
        )));
    }
    let (nx, nv) = (x.norm(), v.norm());
    if nx == 0.0 || nv == 0.0 {
        return Err(PcError::Domain(
            "normalized correlation is undefined for a zero vector".into(),
        ));
    }
    Ok((x.dot(v) / (nx * nv)).clamp(-1.0, 1.0))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for (i, &value) in v.iter().enumerate() {
        if value > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions whose argmax equals the label.
pub fn accuracy(predictions: &[DVector<f64>], labels: &[usize]) -> PcResult<f64> {
    if predictions.len() != labels.len() {
        return Err(PcError::ShapeMismatch(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(PcError::Domain("accuracy of an empty set".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &l)| argmax(p) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// L2 norm of every error node.
pub fn error_norms(net: &PcNetwork) -> Vec<f64> {
    net.eps.iter().map(|e| e.norm()).collect()
}
