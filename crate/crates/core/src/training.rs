//! Per-action model building: label extraction, internal validation split,
//! group ranking, greedy selection and retention.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize_state, FeatureCatalog, FeatureMatrix, FeatureVector};
use crate::learner::{CalibratedActionModel, TrainConfig, DEFAULT_BINS};
use crate::record::{sort_by_admission, PatientRecord};
use crate::segmentation::{Action, ActionKind, StateActionInstance};
use crate::selection::{retain_models, Selector, Split, DEFAULT_K, DEFAULT_MIN_AUC};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learner: TrainConfig,
    pub k: usize,
    pub min_auc: f64,
    pub calibration_bins: usize,
    /// Share of training patients, latest admissions first, held out for
    /// internal validation.
    pub validation_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learner: TrainConfig::default(),
            k: DEFAULT_K,
            min_auc: DEFAULT_MIN_AUC,
            calibration_bins: DEFAULT_BINS,
            validation_fraction: 0.25,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("selection k must be at least 1".into()));
        }
        if !(0.5..=1.0).contains(&self.min_auc) {
            return Err(Error::Config(format!("min_auc {} is outside [0.5, 1]", self.min_auc)));
        }
        if self.calibration_bins == 0 {
            return Err(Error::Config("calibration needs at least one bin".into()));
        }
        if !(0.0 < self.validation_fraction && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction {} is outside (0, 1)",
                self.validation_fraction
            )));
        }
        if !(self.learner.c > 0.0 && self.learner.c.is_finite()) || self.learner.epochs == 0 {
            return Err(Error::Config("learner needs C > 0 and at least one epoch".into()));
        }
        Ok(())
    }
}

/// Raw feature vectors for each instance, in instance order.
pub fn featurize_instances(
    records: &[PatientRecord],
    instances: &[StateActionInstance],
    catalog: &FeatureCatalog,
) -> Result<Vec<FeatureVector>> {
    let by_id: BTreeMap<&str, &PatientRecord> = records.iter().map(|r| (r.patient_id.as_str(), r)).collect();
    instances
        .par_iter()
        .map(|inst| {
            let r = by_id
                .get(inst.patient_id.as_str())
                .ok_or_else(|| Error::NotFound(format!("patient {}", inst.patient_id)))?;
            Ok(featurize_state(r, inst.cut_time, catalog))
        })
        .collect()
}

/// Flags the instances of the last `fraction` of patients by admission
/// (patient granularity, so no patient straddles the split).
pub fn validation_mask(records: &[PatientRecord], instances: &[StateActionInstance], fraction: f64) -> Vec<bool> {
    let mut ordered: Vec<PatientRecord> = records.to_vec();
    sort_by_admission(&mut ordered);
    let n_val = ((ordered.len() as f64) * fraction).round() as usize;
    let val: BTreeSet<&str> = ordered[ordered.len() - n_val.min(ordered.len())..]
        .iter()
        .map(|r| r.patient_id.as_str())
        .collect();
    instances.iter().map(|i| val.contains(i.patient_id.as_str())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SelectionOutcome {
    Trained {
        groups: Vec<String>,
        trajectory: Vec<f64>,
        considered: usize,
        auc: f64,
        retained: bool,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub action: Action,
    pub outcome: SelectionOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutput {
    /// Retained models, in action catalog order.
    pub models: Vec<CalibratedActionModel>,
    pub selection: Vec<SelectionRow>,
}

/// Trains one model per action. `x` is the standardized training matrix
/// (one row per instance) and `is_val` marks internal validation rows.
/// Actions whose labels are too one-sided on either side of the split are
/// skipped and reported.
pub fn train_models(
    catalog: &FeatureCatalog,
    actions: &[Action],
    instances: &[StateActionInstance],
    x: &FeatureMatrix,
    is_val: &[bool],
    config: &TrainingConfig,
) -> Result<TrainingOutput> {
    config.validate()?;
    if x.rows() != instances.len() || is_val.len() != instances.len() {
        return Err(Error::DimensionMismatch {
            expected: instances.len(),
            actual: if x.rows() != instances.len() { x.rows() } else { is_val.len() },
        });
    }
    let (train_rows, val_rows): (Vec<usize>, Vec<usize>) = (0..instances.len()).partition(|&i| !is_val[i]);
    let (x_train, x_val) = (x.select_rows(&train_rows), x.select_rows(&val_rows));

    let results: Vec<(SelectionRow, Option<CalibratedActionModel>)> = actions
        .par_iter()
        .enumerate()
        .map(|(a, action)| {
            let labels = |rows: &[usize]| rows.iter().map(|&i| instances[i].actions.0[a]).collect::<Vec<bool>>();
            let (y_train, y_val) = (labels(&train_rows), labels(&val_rows));
            let skipped = |reason: String| {
                log::info!("skipping {}: {reason}", action.code);
                Ok((
                    SelectionRow {
                        action: action.clone(),
                        outcome: SelectionOutcome::Skipped { reason },
                    },
                    None,
                ))
            };
            let count = |y: &[bool]| (y.iter().filter(|&&v| v).count(), y.iter().filter(|&&v| !v).count());
            let ((tp, tn), (vp, vn)) = (count(&y_train), count(&y_val));
            if tp < 2 || tn < 2 || vp < 1 || vn < 1 {
                return skipped(format!(
                    "degenerate labels (train {tp}+/{tn}-, validation {vp}+/{vn}-)"
                ));
            }
            let selector = Selector {
                groups: &catalog.groups,
                train: Split { x: &x_train, y: &y_train },
                val: Split { x: &x_val, y: &y_val },
                config: config.learner,
                calibration_bins: config.calibration_bins,
            };
            let ranked = selector.rank_groups();
            let result = match selector.greedy_select(&ranked, config.k, action.clone()) {
                Ok(r) => r,
                Err(e @ (Error::InvalidArgument(_) | Error::DegenerateLabels { .. })) => {
                    return skipped(e.to_string())
                }
                Err(e) => return Err(e),
            };
            let retained = result.model.auc >= config.min_auc;
            Ok((
                SelectionRow {
                    action: action.clone(),
                    outcome: SelectionOutcome::Trained {
                        groups: result.model.group_names.clone(),
                        trajectory: result.trajectory.clone(),
                        considered: result.considered.len(),
                        auc: result.model.auc,
                        retained,
                    },
                },
                Some(result.model),
            ))
        })
        .collect::<Result<_>>()?;

    let mut selection = Vec::with_capacity(results.len());
    let mut models = Vec::new();
    for (row, model) in results {
        selection.push(row);
        models.extend(model);
    }
    Ok(TrainingOutput {
        models: retain_models(models, config.min_auc),
        selection,
    })
}

pub fn write_selection_csv<W: Write>(out: W, rows: &[SelectionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "action", "kind", "status", "groups", "auc_trajectory", "considered", "auc", "retained", "note",
    ])?;
    for r in rows {
        let kind = match r.action.kind {
            ActionKind::Lab => "lab",
            ActionKind::Medication => "medication",
        };
        let rec: Vec<String> = match &r.outcome {
            SelectionOutcome::Trained {
                groups,
                trajectory,
                considered,
                auc,
                retained,
            } => vec![
                r.action.code.clone(),
                kind.into(),
                "trained".into(),
                groups.join(";"),
                trajectory.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";"),
                considered.to_string(),
                auc.to_string(),
                retained.to_string(),
                String::new(),
            ],
            SelectionOutcome::Skipped { reason } => vec![
                r.action.code.clone(),
                kind.into(),
                "skipped".into(),
                String::new(),
                String::new(),
                "0".into(),
                String::new(),
                "false".into(),
                reason.clone(),
            ],
        };
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
