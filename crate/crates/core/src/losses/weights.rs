use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    weights: Vec<f64>,
    p: f64,
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

impl ClassWeights {
    /// Validates user-supplied weights (for example read from JSON).
    pub fn new(weights: Vec<f64>, p: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("class weights are empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "class weights must be non-negative and finite: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "class weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights, p })
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self {
            weights: vec![1.0 / num_classes as f64; num_classes],
            p: 1.0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Inverse-frequency weights from dataset-wide voxel counts, raised to `p` and
/// normalized: `w_k = N_k^-p / sum_j N_j^-p`.
pub fn dataset_class_weights(voxel_counts: &[u64], p: f64) -> Result<ClassWeights> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "weight exponent {p} must be >= 1"
        )));
    }
    if voxel_counts.is_empty() {
        return Err(Error::InvalidConfig("no class counts given".into()));
    }
    if let Some(class) = voxel_counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClassInDataset { class });
    }
    // Scaling every inverse by the smallest count keeps the ratios in (0, 1].
    let smallest = *voxel_counts.iter().min().unwrap() as f64;
    let scaled: Vec<f64> = voxel_counts
        .iter()
        .map(|&n| (smallest / n as f64).powf(p))
        .collect();
    let total: f64 = scaled.iter().sum();
    Ok(ClassWeights {
        weights: scaled.iter().map(|s| s / total).collect(),
        p,
    })
}
