//! Greedy group-wise feature selection and AUC-based model retention.
//!
//! Each feature group first gets its own model, scored by validation AUC.
//! Starting from the best group, the remaining groups are tried in that
//! initial order; a group is kept only if the combined model's validation
//! AUC strictly improves. Only the top `k` ranked groups (the starting group
//! included) are ever considered.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureMatrix};
use crate::learner::{auc, fit_calibrator, project, train_linear_margin, CalibratedActionModel, LinearModel, TrainConfig};
use crate::segmentation::Action;

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_MIN_AUC: f64 = 0.68;
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [bool],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: usize,
    pub auc: f64,
    /// False when the group model could not be trained or scored; its AUC
    /// is then reported as 0.5.
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub accepted: Vec<usize>,
    /// Validation AUC after each accepted group.
    pub trajectory: Vec<f64>,
    /// Groups considered, in order, the starting group first.
    pub considered: Vec<usize>,
    pub model: CalibratedActionModel,
}

pub struct Selector<'a> {
    pub groups: &'a [FeatureGroup],
    pub train: Split<'a>,
    pub val: Split<'a>,
    pub config: TrainConfig,
    pub calibration_bins: usize,
}

impl<'a> Selector<'a> {
    fn columns(&self, group_ids: &[usize]) -> Vec<usize> {
        let mut cols: Vec<usize> = group_ids
            .iter()
            .flat_map(|&g| self.groups[g].indices())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    fn fit(&self, cols: &[usize]) -> Result<(LinearModel, f64)> {
        let model = train_linear_margin(&self.train.x.select_columns(cols), self.train.y, &self.config)?;
        let val_x = self.val.x.select_columns(cols);
        let scores: Vec<f64> = val_x
            .iter_rows()
            .map(|r| project(&model, r))
            .collect::<Result<_>>()?;
        let val_auc = auc(&scores, self.val.y)?;
        Ok((model, val_auc))
    }

    /// One model per group; sorted by validation AUC descending, ties by group id.
    pub fn rank_groups(&self) -> Vec<GroupScore> {
        let mut scores: Vec<GroupScore> = self
            .groups
            .par_iter()
            .map(|g| match self.fit(&self.columns(&[g.id])) {
                Ok((_, a)) => GroupScore {
                    group: g.id,
                    auc: a,
                    usable: true,
                },
                Err(e) => {
                    log::debug!("group {} unusable: {e}", g.name);
                    GroupScore {
                        group: g.id,
                        auc: 0.5,
                        usable: false,
                    }
                }
            })
            .collect();
        scores.sort_by(|a, b| b.auc.total_cmp(&a.auc).then(a.group.cmp(&b.group)));
        scores
    }

    pub fn greedy_select(&self, ranked: &[GroupScore], k: usize, action: Action) -> Result<SelectionResult> {
        let mut candidates = ranked.iter().take(k).filter(|s| s.usable).map(|s| s.group);
        let first = candidates.next().ok_or_else(|| {
            Error::InvalidArgument(format!("no usable feature group for action {}", action.code))
        })?;
        let mut accepted = vec![first];
        let mut considered = vec![first];
        let (mut model, mut best) = self.fit(&self.columns(&accepted))?;
        let mut trajectory = vec![best];

        for g in candidates {
            considered.push(g);
            let mut trial = accepted.clone();
            trial.push(g);
            let (m, a) = self.fit(&self.columns(&trial))?;
            if a > best + IMPROVEMENT_TOLERANCE {
                accepted = trial;
                model = m;
                best = a;
                trajectory.push(a);
            }
        }

        let columns = self.columns(&accepted);
        let mut projections = Vec::with_capacity(self.train.x.rows() + self.val.x.rows());
        for split in [self.train, self.val] {
            let x = split.x.select_columns(&columns);
            for r in x.iter_rows() {
                projections.push(project(&model, r)?);
            }
        }
        let labels: Vec<bool> = self.train.y.iter().chain(self.val.y).copied().collect();
        let calibrator = fit_calibrator(&projections, &labels, self.calibration_bins);

        Ok(SelectionResult {
            model: CalibratedActionModel {
                action,
                group_names: accepted.iter().map(|&g| self.groups[g].name.clone()).collect(),
                groups: accepted.clone(),
                columns,
                model,
                calibrator,
                auc: best,
            },
            accepted,
            trajectory,
            considered,
        })
    }
}

/// Keeps models whose internal AUC is at least `min_auc`.
pub fn retain_models(models: Vec<CalibratedActionModel>, min_auc: f64) -> Vec<CalibratedActionModel> {
    models.into_iter().filter(|m| m.auc >= min_auc).collect()
}
