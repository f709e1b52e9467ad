//! Per-action probabilistic models: a linear margin classifier whose
//! projection is mapped to a class posterior by a histogram calibrator.

mod auc;
mod calibration;
mod store;
mod svm;

pub use auc::auc;
pub use calibration::{fit_calibrator, CalibrationBin, Calibrator, DEFAULT_BINS};
pub use store::{read_model, write_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use svm::{hinge_objective, project, train_linear_margin, LinearModel, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Action;

/// A trained model for one action: the linear projection over the selected
/// feature columns, its calibrator, and the internal validation AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedActionModel {
    pub action: Action,
    /// Selected feature-group ids, in acceptance order.
    pub groups: Vec<usize>,
    pub group_names: Vec<String>,
    /// Catalog feature indices the linear model reads, ascending.
    pub columns: Vec<usize>,
    pub model: LinearModel,
    pub calibrator: Calibrator,
    pub auc: f64,
}

impl CalibratedActionModel {
    /// Projection of a full standardized catalog vector.
    pub fn project_full(&self, x: &[f64]) -> Result<f64> {
        let max_col = self.columns.last().copied().unwrap_or(0);
        if !self.columns.is_empty() && x.len() <= max_col {
            return Err(Error::DimensionMismatch {
                expected: max_col + 1,
                actual: x.len(),
            });
        }
        let dot: f64 = self
            .columns
            .iter()
            .zip(&self.model.weights)
            .map(|(&c, w)| w * x[c])
            .sum();
        Ok(dot + self.model.bias)
    }

    /// P(action taken | x) for a full standardized catalog vector.
    pub fn posterior(&self, x: &[f64]) -> Result<f64> {
        Ok(self.calibrator.query(self.project_full(x)?))
    }

    /// Per-column contributions `w_j * x_j`, largest magnitude first.
    pub fn contributions(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut c: Vec<(usize, f64)> = self
            .columns
            .iter()
            .zip(&self.model.weights)
            .map(|(&col, w)| (col, w * x.get(col).copied().unwrap_or(0.0)))
            .collect();
        c.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        c
    }
}

/// Posterior of the positive class for a bare linear model plus calibrator.
pub fn posterior(model: &LinearModel, calibrator: &Calibrator, x: &[f64]) -> Result<f64> {
    Ok(calibrator.query(project(model, x)?))
}
