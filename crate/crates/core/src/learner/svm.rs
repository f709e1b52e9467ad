//! Linear SVM trained by stochastic subgradient descent on the L2-regularized
//! hinge loss (Pegasos step schedule).
//!
//! The objective is `lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))` with
//! `lambda = 1 / (C n)`, i.e. the usual `1/2 |w|^2 + C sum(hinge)` scaled by
//! `1/(C n)`. The bias is trained as the weight of a constant feature.
//!
//! After each epoch the average of that epoch's iterates is compared to the
//! best model so far and kept only if its objective is no larger, so the
//! recorded objective never increases across epochs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Misclassification cost `C`.
    pub c: f64,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 30,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
    /// Objective of the kept iterate after each epoch.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
}

impl LinearModel {
    pub fn dimension(&self) -> usize {
        self.weights.len()
    }
}

/// `w.x + b`.
pub fn project(model: &LinearModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            actual: x.len(),
        });
    }
    Ok(dot(&model.weights, x) + model.bias)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

/// Regularized hinge objective of `(weights, bias)` on `(x, y)`.
pub fn hinge_objective(x: &FeatureMatrix, y: &[bool], weights: &[f64], bias: f64, c: f64) -> f64 {
    let n = x.rows() as f64;
    let lambda = 1.0 / (c * n);
    let reg = weights.iter().map(|w| w * w).sum::<f64>() + bias * bias;
    let loss: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(row, &yi)| (1.0 - sign(yi) * (dot(weights, row) + bias)).max(0.0))
        .sum();
    0.5 * lambda * reg + loss / n
}

pub fn train_linear_margin(x: &FeatureMatrix, y: &[bool], config: &TrainConfig) -> Result<LinearModel> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    if !(config.c > 0.0 && config.c.is_finite()) || config.epochs == 0 {
        return Err(Error::InvalidArgument(format!(
            "training config needs C > 0 and epochs > 0, got {config:?}"
        )));
    }
    let positives = y.iter().filter(|&&v| v).count();
    let negatives = y.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(Error::DegenerateLabels {
            needed: 2,
            positives,
            negatives,
        });
    }
    for (r, row) in x.iter_rows().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: r, col: c });
        }
    }

    let n = x.rows();
    let d = x.cols();
    let lambda = 1.0 / (config.c * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();

    // w[d] is the bias weight
    let mut w = vec![0.0; d + 1];
    let mut best = vec![0.0; d + 1];
    let mut best_obj = hinge_objective(x, y, &best[..d], best[d], config.c);
    let mut history = Vec::with_capacity(config.epochs as usize);
    let mut step = 0u64;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut avg = vec![0.0; d + 1];
        for &i in &order {
            step += 1;
            let eta = 1.0 / (lambda * step as f64);
            let row = x.row(i);
            let yi = sign(y[i]);
            let margin = yi * (dot(&w[..d], row) + w[d]);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wj, xj) in w[..d].iter_mut().zip(row) {
                    *wj += eta * yi * xj;
                }
                w[d] += eta * yi;
            }
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += v;
            }
        }
        avg.iter_mut().for_each(|a| *a /= n as f64);
        let obj = hinge_objective(x, y, &avg[..d], avg[d], config.c);
        if obj <= best_obj {
            best_obj = obj;
            best = avg;
        }
        history.push(best_obj);
    }

    let bias = best[d];
    best.truncate(d);
    Ok(LinearModel {
        weights: best,
        bias,
        config: *config,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn accuracy(model: &LinearModel, x: &FeatureMatrix, y: &[bool]) -> f64 {
        let correct = x
            .iter_rows()
            .zip(y)
            .filter(|(row, &yi)| (project(model, row).unwrap() > 0.0) == yi)
            .count();
        correct as f64 / y.len() as f64
    }

    #[test]
    fn separable_points_are_classified_perfectly() {
        let rows = vec![
            vec![2.0, 2.0],
            vec![3.0, 1.5],
            vec![2.5, 3.0],
            vec![-2.0, -1.0],
            vec![-3.0, -2.5],
            vec![-1.5, -3.0],
        ];
        let y = [true, true, true, false, false, false];
        let x = FeatureMatrix::from_rows(&rows);
        let m = train_linear_margin(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
    }

    #[test]
    fn sign_of_weight_follows_sign_label() {
        let rows: Vec<Vec<f64>> = (-10..=10).filter(|&v| v != 0).map(|v| vec![v as f64 / 4.0]).collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let m = train_linear_margin(&FeatureMatrix::from_rows(&rows), &y, &TrainConfig::default()).unwrap();
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert!(matches!(
            train_linear_margin(&x, &[true, true, true], &TrainConfig::default()),
            Err(Error::DegenerateLabels { .. })
        ));
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![f64::NAN], vec![3.0], vec![0.0]]);
        assert!(matches!(
            train_linear_margin(&x, &[true, true, false, false], &TrainConfig::default()),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn projection_arithmetic() {
        let m = LinearModel {
            weights: vec![1.0, 0.0],
            bias: 1.0,
            config: TrainConfig::default(),
            objective_history: vec![],
        };
        assert_eq!(project(&m, &[2.0, 5.0]).unwrap(), 3.0);
        assert!(project(&m, &[2.0]).is_err());
        let zero = LinearModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            ..m.clone()
        };
        assert_eq!(project(&zero, &[7.0, -3.0]).unwrap(), 0.0);
    }

    #[test]
    fn training_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>()]).collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] + 0.1 * r[1] > 0.0).collect();
        let x = FeatureMatrix::from_rows(&rows);
        let a = train_linear_margin(&x, &y, &TrainConfig::default()).unwrap();
        let b = train_linear_margin(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn projection_is_affine(w in prop::collection::vec(-5.0f64..5.0, 3), b in -5.0f64..5.0,
                                x1 in prop::collection::vec(-5.0f64..5.0, 3), x2 in prop::collection::vec(-5.0f64..5.0, 3)) {
            let m = LinearModel { weights: w, bias: b, config: TrainConfig::default(), objective_history: vec![] };
            let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, c)| a + c).collect();
            let lhs = project(&m, &sum).unwrap();
            let rhs = project(&m, &x1).unwrap() + project(&m, &x2).unwrap() - b;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn objective_never_increases_across_epochs(seed in 0u64..1000, n in 10usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()]).collect();
            let mut y: Vec<bool> = rows.iter().map(|r| r[0] + 0.3 * rng.random::<f64>() > 0.0).collect();
            y[0] = true;
            y[1] = true;
            y[2] = false;
            y[3] = false;
            let m = train_linear_margin(&FeatureMatrix::from_rows(&rows), &y, &TrainConfig { epochs: 15, ..Default::default() }).unwrap();
            for pair in m.objective_history.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-6);
            }
            prop_assert!(m.weights.iter().all(|w| w.is_finite()));
        }
    }
}
