//! Anomaly scores, alert scores, action-specific thresholds and the alert
//! candidate set.
//!
//! For an action `a` taken (or not) in the window between two consecutive
//! cuts `t-1` and `t`, the alert score is
//! `min(Anom(x_{t-1}, y_{t-1}), Anom(x_t, y_{t-1}))` where
//! `Anom(x, y) = 1 - P(y | x)`. An unusual action therefore has to stay
//! unusual when re-evaluated against the next state.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::learner::CalibratedActionModel;
use crate::record::Timestamp;
use crate::segmentation::{ActionCatalog, ActionKind, StateActionInstance};

pub const DEFAULT_TOP_N: usize = 125;
pub const DEFAULT_ALERT_FLOOR: f64 = 0.15;
pub const DEFAULT_CAP: usize = 20;
pub const HISTOGRAM_WIDTH: f64 = 0.2;

/// `1 - P(observed | x)` for a full standardized catalog vector.
pub fn anomaly_score(model: &CalibratedActionModel, x: &[f64], observed: bool) -> Result<f64> {
    let p_true = model.posterior(x)?;
    Ok(anomaly_from_posterior(p_true, observed))
}

/// `1 - P(observed)` given `P(true)`.
pub fn anomaly_from_posterior(p_true: f64, observed: bool) -> f64 {
    if observed {
        1.0 - p_true
    } else {
        1.0 - (1.0 - p_true)
    }
}

pub fn alert_score(anom_prev: f64, anom_curr: f64) -> f64 {
    anom_prev.min(anom_curr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlertType {
    LabOmission,
    MedicationOmission,
    MedicationCommission,
}

impl AlertType {
    /// Lab actions alert only on omission; medications on omission or commission.
    pub fn for_action(kind: ActionKind, observed: bool) -> Option<Self> {
        match (kind, observed) {
            (ActionKind::Lab, false) => Some(AlertType::LabOmission),
            (ActionKind::Lab, true) => None,
            (ActionKind::Medication, false) => Some(AlertType::MedicationOmission),
            (ActionKind::Medication, true) => Some(AlertType::MedicationCommission),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AlertType::LabOmission => "lab-omission",
            AlertType::MedicationOmission => "medication-omission",
            AlertType::MedicationCommission => "medication-commission",
        }
    }

    pub const ALL: [AlertType; 3] = [
        AlertType::LabOmission,
        AlertType::MedicationCommission,
        AlertType::MedicationOmission,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub patient_id: String,
    pub time: Timestamp,
    pub action: String,
    pub observed: bool,
    pub score: f64,
}

/// Two consecutive instances of one patient, as indices into the instance list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstancePair {
    pub prev: usize,
    pub curr: usize,
}

/// Consecutive instance pairs: same patient, cut times exactly one window apart.
pub fn instance_pairs(instances: &[StateActionInstance], window: Duration) -> Vec<InstancePair> {
    instances
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].patient_id == w[1].patient_id && w[1].cut_time - w[0].cut_time == window)
        .map(|(i, _)| InstancePair { prev: i, curr: i + 1 })
        .collect()
}

/// Both anomaly scores of one (pair, action) candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub patient_id: String,
    pub prev_time: Timestamp,
    pub time: Timestamp,
    pub action: String,
    pub kind: ActionKind,
    pub observed: bool,
    pub anom_prev: f64,
    pub anom_curr: f64,
}

impl ScoredPair {
    pub fn alert_type(&self) -> Option<AlertType> {
        AlertType::for_action(self.kind, self.observed)
    }

    pub fn alert_score(&self) -> f64 {
        alert_score(self.anom_prev, self.anom_curr)
    }
}

/// Scores every pair against every model. `x` holds one standardized row
/// per instance.
pub fn score_pairs(
    instances: &[StateActionInstance],
    x: &FeatureMatrix,
    pairs: &[InstancePair],
    models: &[CalibratedActionModel],
    actions: &ActionCatalog,
) -> Result<Vec<ScoredPair>> {
    if x.rows() != instances.len() {
        return Err(Error::DimensionMismatch {
            expected: instances.len(),
            actual: x.rows(),
        });
    }
    let per_model: Vec<Vec<ScoredPair>> = models
        .par_iter()
        .map(|m| {
            let a = actions.position(m.action.kind, &m.action.code).ok_or_else(|| {
                Error::NotFound(format!("action {} is not in the action catalog", m.action.code))
            })?;
            pairs
                .iter()
                .map(|p| {
                    let prev = &instances[p.prev];
                    let observed = prev.actions.0[a];
                    Ok(ScoredPair {
                        patient_id: prev.patient_id.clone(),
                        prev_time: prev.cut_time,
                        time: instances[p.curr].cut_time,
                        action: m.action.code.clone(),
                        kind: m.action.kind,
                        observed,
                        anom_prev: anomaly_score(m, x.row(p.prev), observed)?,
                        anom_curr: anomaly_score(m, x.row(p.curr), observed)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_model.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionThreshold {
    pub anom_min: f64,
    pub alert_min: f64,
    /// Eligible pairs the threshold was computed from.
    pub scored_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub per_action: BTreeMap<String, ActionThreshold>,
    pub top_n: usize,
    pub cap: usize,
}

/// Per action: `anom_min` is the `top_n`-th largest `Anom(x_{t-1}, y_{t-1})`
/// over alert-eligible pairs (all pass when fewer exist). If ties at that
/// value would let more than `top_n` pairs through, it moves up to the next
/// larger observed score. `alert_min` is `max(alert_floor, 0.15)`.
pub fn compute_thresholds(scored: &[ScoredPair], top_n: usize, alert_floor: f64, cap: usize) -> Result<ThresholdPolicy> {
    if top_n == 0 || cap == 0 {
        return Err(Error::InvalidArgument("top_n and cap must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&alert_floor) {
        return Err(Error::InvalidArgument(format!("alert floor {alert_floor} is outside [0, 1]")));
    }
    let mut by_action: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in scored.iter().filter(|s| s.alert_type().is_some()) {
        by_action.entry(&s.action).or_default().push(s.anom_prev);
    }
    let alert_min = alert_floor.max(DEFAULT_ALERT_FLOOR);
    let per_action = by_action
        .into_iter()
        .map(|(action, mut scores)| {
            scores.sort_by(|a, b| b.total_cmp(a));
            let anom_min = if scores.len() <= top_n {
                *scores.last().unwrap()
            } else {
                let t = scores[top_n - 1];
                if scores[top_n] < t {
                    t
                } else {
                    // ties straddle the cut: admit only scores strictly above
                    scores[..top_n]
                        .iter()
                        .rev()
                        .copied()
                        .find(|&s| s > t)
                        .unwrap_or_else(|| next_up(t))
                }
            };
            (
                action.to_string(),
                ActionThreshold {
                    anom_min,
                    alert_min,
                    scored_pairs: scores.len(),
                },
            )
        })
        .collect();
    Ok(ThresholdPolicy { per_action, top_n, cap })
}

fn next_up(x: f64) -> f64 {
    if x >= 1.0 {
        f64::INFINITY
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub patient_id: String,
    /// Current cut `t`; the action was taken (or omitted) in `(prev_time, time]`.
    pub time: Timestamp,
    pub prev_time: Timestamp,
    pub action: String,
    pub alert_type: AlertType,
    pub observed: bool,
    pub anom_prev: f64,
    pub anom_curr: f64,
    pub alert_score: f64,
}

/// Applies the threshold policy and the per-action cap. Within an action,
/// candidates are ranked by alert score, ties by (patient_id, t). The output
/// is ordered by (patient_id, t, action) and numbered `A00001`, ...
pub fn generate_alerts(scored: &[ScoredPair], policy: &ThresholdPolicy) -> Vec<Alert> {
    let mut by_action: BTreeMap<&str, Vec<&ScoredPair>> = BTreeMap::new();
    for s in scored {
        let Some(th) = policy.per_action.get(&s.action) else {
            continue;
        };
        if s.alert_type().is_none() {
            continue;
        }
        if s.anom_prev < th.anom_min || s.anom_curr < th.anom_min || s.alert_score() < th.alert_min {
            continue;
        }
        by_action.entry(&s.action).or_default().push(s);
    }
    let mut kept: Vec<&ScoredPair> = Vec::new();
    for (_, mut cands) in by_action {
        cands.sort_by(|a, b| {
            b.alert_score()
                .total_cmp(&a.alert_score())
                .then_with(|| a.patient_id.cmp(&b.patient_id))
                .then_with(|| a.time.cmp(&b.time))
        });
        kept.extend(cands.into_iter().take(policy.cap));
    }
    kept.sort_by(|a, b| {
        (&a.patient_id, a.time, &a.action).cmp(&(&b.patient_id, b.time, &b.action))
    });
    kept.into_iter()
        .enumerate()
        .map(|(i, s)| Alert {
            alert_id: format!("A{:05}", i + 1),
            patient_id: s.patient_id.clone(),
            time: s.time,
            prev_time: s.prev_time,
            action: s.action.clone(),
            alert_type: s.alert_type().expect("filtered to eligible pairs"),
            observed: s.observed,
            anom_prev: s.anom_prev,
            anom_curr: s.anom_curr,
            alert_score: s.alert_score(),
        })
        .collect()
}

/// Bin of a score in `[0, 1]` for width-`width` bins; 1.0 falls in the last bin.
pub fn bin_index(score: f64, width: f64) -> usize {
    let n = (1.0 / width).round() as usize;
    ((score / width).floor().max(0.0) as usize).min(n - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Width-0.2 histogram of scores over [0, 1] (5 bins).
pub fn score_histogram(scores: &[f64]) -> Vec<HistogramBin> {
    let n = (1.0 / HISTOGRAM_WIDTH).round() as usize;
    let mut bins: Vec<HistogramBin> = (0..n)
        .map(|i| HistogramBin {
            lower: i as f64 * HISTOGRAM_WIDTH,
            upper: (i + 1) as f64 * HISTOGRAM_WIDTH,
            count: 0,
        })
        .collect();
    for &s in scores {
        bins[bin_index(s, HISTOGRAM_WIDTH)].count += 1;
    }
    bins
}

pub fn write_alerts<W: Write>(mut out: W, alerts: &[Alert]) -> Result<()> {
    for a in alerts {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_alerts<R: BufRead>(input: R) -> Result<Vec<Alert>> {
    let mut alerts = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            alerts.push(serde_json::from_str(&line)?);
        }
    }
    Ok(alerts)
}

pub fn write_histogram_csv<W: Write>(out: W, bins: &[HistogramBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_low", "bin_high", "count"])?;
    for b in bins {
        w.write_record([format!("{:.1}", b.lower), format!("{:.1}", b.upper), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::fixtures::ts;
    use proptest::prelude::*;

    fn pair(pid: &str, day: u32, action: &str, kind: ActionKind, observed: bool, prev: f64, curr: f64) -> ScoredPair {
        ScoredPair {
            patient_id: pid.into(),
            prev_time: ts(day, 8),
            time: ts(day + 1, 8),
            action: action.into(),
            kind,
            observed,
            anom_prev: prev,
            anom_curr: curr,
        }
    }

    #[test]
    fn anomaly_is_complement_of_observed_posterior() {
        assert!((anomaly_from_posterior(0.92, false) - 0.92).abs() < 1e-15);
        assert!((anomaly_from_posterior(0.92, true) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn alert_score_is_min() {
        assert_eq!(alert_score(0.9, 0.7), 0.7);
        assert_eq!(alert_score(0.3, 0.95), 0.3);
        assert_eq!(alert_score(0.4, 0.4), 0.4);
    }

    #[test]
    fn alert_types_follow_observed_value() {
        assert_eq!(AlertType::for_action(ActionKind::Lab, false), Some(AlertType::LabOmission));
        assert_eq!(AlertType::for_action(ActionKind::Lab, true), None);
        assert_eq!(
            AlertType::for_action(ActionKind::Medication, true),
            Some(AlertType::MedicationCommission)
        );
        assert_eq!(
            AlertType::for_action(ActionKind::Medication, false),
            Some(AlertType::MedicationOmission)
        );
    }

    #[test]
    fn threshold_is_the_top_n_th_score() {
        let scored: Vec<_> = (0..500)
            .map(|i| pair(&format!("p{i:03}"), 1, "L", ActionKind::Lab, false, i as f64 / 1000.0, 0.9))
            .collect();
        let policy = compute_thresholds(&scored, 125, 0.15, 20).unwrap();
        let th = policy.per_action["L"];
        assert_eq!(th.anom_min, 375.0 / 1000.0);
        assert_eq!(th.scored_pairs, 500);
        let passing = scored.iter().filter(|s| s.anom_prev >= th.anom_min).count();
        assert_eq!(passing, 125);
    }

    #[test]
    fn fewer_than_top_n_pairs_all_pass() {
        let scored: Vec<_> = (0..80)
            .map(|i| pair("p", 1 + (i % 20) as u32, "L", ActionKind::Lab, false, 0.2 + i as f64 / 200.0, 0.9))
            .collect();
        let th = compute_thresholds(&scored, 125, 0.15, 20).unwrap().per_action["L"];
        assert_eq!(th.anom_min, 0.2);
        assert!(scored.iter().all(|s| s.anom_prev >= th.anom_min));
    }

    #[test]
    fn alert_floor_never_below_default() {
        let scored = vec![pair("p", 1, "L", ActionKind::Lab, false, 0.5, 0.5)];
        assert_eq!(compute_thresholds(&scored, 125, 0.05, 20).unwrap().per_action["L"].alert_min, 0.15);
        assert_eq!(compute_thresholds(&scored, 125, 0.3, 20).unwrap().per_action["L"].alert_min, 0.3);
    }

    #[test]
    fn actions_without_eligible_pairs_are_left_out() {
        let scored = vec![pair("p", 1, "L", ActionKind::Lab, true, 0.9, 0.9)];
        assert!(compute_thresholds(&scored, 125, 0.15, 20).unwrap().per_action.is_empty());
    }

    #[test]
    fn ties_at_the_cut_do_not_exceed_top_n() {
        let mut scored: Vec<_> = (0..10)
            .map(|i| pair(&format!("p{i}"), 1, "L", ActionKind::Lab, false, 0.9, 0.9))
            .collect();
        scored.push(pair("q", 1, "L", ActionKind::Lab, false, 0.95, 0.95));
        let th = compute_thresholds(&scored, 5, 0.15, 20).unwrap().per_action["L"];
        let passing = scored.iter().filter(|s| s.anom_prev >= th.anom_min).count();
        assert_eq!(passing, 1);
    }

    #[test]
    fn failing_current_score_excludes_candidate() {
        let scored = vec![
            pair("a", 1, "L", ActionKind::Lab, false, 0.9, 0.1),
            pair("b", 1, "L", ActionKind::Lab, false, 0.8, 0.8),
        ];
        let mut policy = compute_thresholds(&scored, 125, 0.15, 20).unwrap();
        policy.per_action.get_mut("L").unwrap().anom_min = 0.5;
        let alerts = generate_alerts(&scored, &policy);
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].patient_id, "b");
    }

    #[test]
    fn cap_keeps_top_scores_with_deterministic_ties() {
        let scored: Vec<_> = (0..30)
            .map(|i| {
                let s = if i < 25 { 0.9 } else { 0.5 };
                pair(&format!("p{:02}", 29 - i), 1, "M", ActionKind::Medication, true, s, s)
            })
            .collect();
        let policy = compute_thresholds(&scored, 125, 0.15, 20).unwrap();
        let alerts = generate_alerts(&scored, &policy);
        assert_eq!(alerts.len(), 20);
        assert!(alerts.iter().all(|a| a.alert_score == 0.9));
        // among the 25 tied at 0.9 (p05..p29), the first 20 by patient id win
        assert_eq!(alerts.first().unwrap().patient_id, "p05");
        assert_eq!(alerts.last().unwrap().patient_id, "p24");
        assert!(alerts.iter().all(|a| a.alert_type == AlertType::MedicationCommission));
    }

    #[test]
    fn histogram_has_five_bins_that_sum_to_total() {
        let h = score_histogram(&[0.0, 0.19, 0.2, 0.5, 0.99, 1.0]);
        assert_eq!(h.len(), 5);
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 1, 1, 0, 2]);
    }

    proptest! {
        #[test]
        fn alert_invariants_hold(raw in prop::collection::vec((0usize..4, 0.0f64..1.0, 0.0f64..1.0, any::<bool>()), 1..300),
                                 top_n in 1usize..60, cap in 1usize..25, raise in 0.0f64..0.3) {
            let scored: Vec<_> = raw
                .iter()
                .enumerate()
                .map(|(i, &(a, p, c, obs))| {
                    let kind = if a % 2 == 0 { ActionKind::Lab } else { ActionKind::Medication };
                    pair(&format!("p{i:03}"), 1, &format!("A{a}"), kind, obs, p, c)
                })
                .collect();
            let policy = compute_thresholds(&scored, top_n, 0.15, cap).unwrap();
            let alerts = generate_alerts(&scored, &policy);
            let mut per_action: BTreeMap<&str, usize> = BTreeMap::new();
            for a in &alerts {
                *per_action.entry(&a.action).or_default() += 1;
                prop_assert!(a.alert_score <= a.anom_prev && a.alert_score <= a.anom_curr);
                prop_assert!(a.alert_score >= 0.15);
            }
            prop_assert!(per_action.values().all(|&n| n <= cap));
            for (action, th) in &policy.per_action {
                let passing = scored.iter().filter(|s| &s.action == action && s.alert_type().is_some() && s.anom_prev >= th.anom_min).count();
                prop_assert!(passing <= top_n);
            }

            let mut stricter = policy.clone();
            for th in stricter.per_action.values_mut() {
                th.anom_min += raise;
            }
            let fewer = generate_alerts(&scored, &stricter);
            let uncapped = |p: &ThresholdPolicy| generate_alerts(&scored, &ThresholdPolicy { cap: usize::MAX, ..p.clone() });
            let (all, sub) = (uncapped(&policy), uncapped(&stricter));
            prop_assert!(fewer.len() <= alerts.len());
            prop_assert!(sub.iter().all(|s| all.iter().any(|a| a.patient_id == s.patient_id && a.action == s.action && a.time == s.time)));
        }
    }
}
