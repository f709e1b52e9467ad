//! Review statistics: majority adjudication, reviewer agreement, true alert
//! rates with exact binomial intervals, score-binned rates and the
//! alert-ordering AUC.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::learner::auc;
use crate::scoring::{bin_index, Alert, AlertType, HISTOGRAM_WIDTH};

pub const DEFAULT_REVIEWERS_PER_ALERT: usize = 3;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub alert_id: String,
    pub reviewer_id: String,
    pub item1_useful: bool,
    pub item2_follow_up: bool,
    #[serde(default)]
    pub comment: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Item {
    Useful,
    FollowUp,
}

impl Item {
    fn of(self, r: &AssessmentRecord) -> bool {
        match self {
            Item::Useful => r.item1_useful,
            Item::FollowUp => r.item2_follow_up,
        }
    }

    fn of_adjudicated(self, a: &AdjudicatedAlert) -> bool {
        match self {
            Item::Useful => a.item1_true,
            Item::FollowUp => a.item2_true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicatedAlert {
    pub alert_id: String,
    pub item1_true: bool,
    pub item2_true: bool,
    pub n_reviewers: usize,
}

/// An item is true when at least `n / 2 + 1` of the `n` reviewers say so.
pub fn majority_vote(alert_id: &str, records: &[AssessmentRecord], n: usize) -> Result<AdjudicatedAlert> {
    if n % 2 == 0 {
        return Err(Error::InvalidArgument(format!("reviewer count {n} must be odd")));
    }
    let reviewers: BTreeSet<&str> = records.iter().map(|r| r.reviewer_id.as_str()).collect();
    if records.len() != n || reviewers.len() != n {
        return Err(Error::MissingReviewer {
            alert_id: alert_id.to_string(),
            expected: n,
            actual: reviewers.len(),
        });
    }
    if let Some(r) = records.iter().find(|r| r.alert_id != alert_id) {
        return Err(Error::InvalidArgument(format!(
            "assessment for {} passed to the vote on {alert_id}",
            r.alert_id
        )));
    }
    let needed = n / 2 + 1;
    let votes = |item: Item| records.iter().filter(|r| item.of(r)).count() >= needed;
    Ok(AdjudicatedAlert {
        alert_id: alert_id.to_string(),
        item1_true: votes(Item::Useful),
        item2_true: votes(Item::FollowUp),
        n_reviewers: n,
    })
}

/// Adjudicates every alert with a full set of `n` assessments; alerts with
/// fewer are returned as pending.
pub fn adjudicate(records: &[AssessmentRecord], n: usize) -> Result<(Vec<AdjudicatedAlert>, Vec<String>)> {
    let mut by_alert: BTreeMap<&str, Vec<AssessmentRecord>> = BTreeMap::new();
    for r in records {
        by_alert.entry(&r.alert_id).or_default().push(r.clone());
    }
    let mut done = Vec::new();
    let mut pending = Vec::new();
    for (id, group) in by_alert {
        if group.len() < n {
            pending.push(id.to_string());
        } else {
            done.push(majority_vote(id, &group, n)?);
        }
    }
    Ok((done, pending))
}

/// Cohen's kappa for two binary raters. When chance agreement is total
/// (both raters constant and equal), kappa is 1 if they agree everywhere
/// and 0 otherwise.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("kappa needs at least one rating".into()));
    }
    let n = a.len() as i64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as i64;
    let (at, bt) = (a.iter().filter(|&&x| x).count() as i64, b.iter().filter(|&&x| x).count() as i64);
    // kappa = (p_o - p_e) / (1 - p_e), scaled by n^2 to stay in integers
    let chance = at * bt + (n - at) * (n - bt);
    if chance == n * n {
        return Ok(if agree == n { 1.0 } else { 0.0 });
    }
    Ok((n * agree - chance) as f64 / (n * n - chance) as f64)
}

pub fn agreement(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAgreement {
    pub agreement_min: f64,
    pub agreement_max: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

/// Min and max of simple agreement and kappa over all reviewer pairs.
pub fn pairwise_agreement(labels: &[Vec<bool>]) -> Result<PairwiseAgreement> {
    if labels.len() < 2 {
        return Err(Error::InvalidArgument("pairwise agreement needs at least two reviewers".into()));
    }
    let mut out = PairwiseAgreement {
        agreement_min: f64::INFINITY,
        agreement_max: f64::NEG_INFINITY,
        kappa_min: f64::INFINITY,
        kappa_max: f64::NEG_INFINITY,
    };
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let ag = agreement(&labels[i], &labels[j])?;
            let k = cohen_kappa(&labels[i], &labels[j])?;
            out.agreement_min = out.agreement_min.min(ag);
            out.agreement_max = out.agreement_max.max(ag);
            out.kappa_min = out.kappa_min.min(k);
            out.kappa_max = out.kappa_max.max(k);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateWithCI {
    pub numerator: usize,
    pub denominator: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateWithCI {
    /// Clopper-Pearson exact interval at the given confidence.
    pub fn clopper_pearson(numerator: usize, denominator: usize, confidence: f64) -> Result<Self> {
        if denominator == 0 || numerator > denominator {
            return Err(Error::InvalidArgument(format!(
                "rate {numerator}/{denominator} is undefined"
            )));
        }
        if !(0.0 < confidence && confidence < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence {confidence} is outside (0, 1)")));
        }
        let (k, n) = (numerator as f64, denominator as f64);
        let tail = (1.0 - confidence) / 2.0;
        let ci_low = if numerator == 0 {
            0.0
        } else {
            beta_quantile(k, n - k + 1.0, tail)
        };
        let ci_high = if numerator == denominator {
            1.0
        } else {
            beta_quantile(k + 1.0, n - k, 1.0 - tail)
        };
        let rate = k / n;
        Ok(RateWithCI {
            numerator,
            denominator,
            rate,
            ci_low: ci_low.min(rate),
            ci_high: ci_high.max(rate),
        })
    }
}

/// Inverse of the regularized incomplete beta function by bisection.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stratum {
    All,
    Type(AlertType),
    /// Alert score in `[low, high]`.
    ScoreRange(f64, f64),
}

impl Stratum {
    fn contains(&self, alert: &Alert) -> bool {
        match *self {
            Stratum::All => true,
            Stratum::Type(t) => alert.alert_type == t,
            Stratum::ScoreRange(lo, hi) => alert.alert_score >= lo && alert.alert_score <= hi,
        }
    }
}

fn join<'a>(adjudicated: &'a [AdjudicatedAlert], alerts: &'a [Alert]) -> Result<Vec<(&'a AdjudicatedAlert, &'a Alert)>> {
    let by_id: BTreeMap<&str, &Alert> = alerts.iter().map(|a| (a.alert_id.as_str(), a)).collect();
    adjudicated
        .iter()
        .map(|j| {
            by_id
                .get(j.alert_id.as_str())
                .map(|a| (j, *a))
                .ok_or_else(|| Error::NotFound(format!("alert {}", j.alert_id)))
        })
        .collect()
}

pub fn true_alert_rate(adjudicated: &[AdjudicatedAlert], alerts: &[Alert], item: Item, stratum: Stratum) -> Result<RateWithCI> {
    let joined = join(adjudicated, alerts)?;
    let members: Vec<_> = joined.iter().filter(|(_, a)| stratum.contains(a)).collect();
    if members.is_empty() {
        return Err(Error::InvalidArgument(format!("stratum {stratum:?} has no adjudicated alerts")));
    }
    let hits = members.iter().filter(|(j, _)| item.of_adjudicated(j)).count();
    RateWithCI::clopper_pearson(hits, members.len(), CONFIDENCE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub true_count: usize,
    /// `None` for an empty bin.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedRates {
    pub bins: Vec<RateBin>,
    /// Count-weighted least-squares slope of rate over bin centers; `None`
    /// with fewer than two non-empty bins.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// True rates over width-0.2 score bins on `[0, 1]`, with a fitted line.
pub fn binned_rates(scores: &[f64], labels: &[bool]) -> Result<BinnedRates> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n_bins = (1.0 / HISTOGRAM_WIDTH).round() as usize;
    let mut bins: Vec<RateBin> = (0..n_bins)
        .map(|i| RateBin {
            lower: i as f64 * HISTOGRAM_WIDTH,
            upper: (i + 1) as f64 * HISTOGRAM_WIDTH,
            count: 0,
            true_count: 0,
            rate: None,
        })
        .collect();
    for (&s, &l) in scores.iter().zip(labels) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("score {s} is outside [0, 1]")));
        }
        let b = &mut bins[bin_index(s, HISTOGRAM_WIDTH)];
        b.count += 1;
        b.true_count += l as usize;
    }
    for b in bins.iter_mut().filter(|b| b.count > 0) {
        b.rate = Some(b.true_count as f64 / b.count as f64);
    }
    let filled: Vec<(f64, f64, f64)> = bins
        .iter()
        .filter_map(|b| b.rate.map(|r| (0.5 * (b.lower + b.upper), r, b.count as f64)))
        .collect();
    let (slope, intercept) = if filled.len() < 2 {
        (None, None)
    } else {
        let w: f64 = filled.iter().map(|p| p.2).sum();
        let mx = filled.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
        let my = filled.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
        let sxy: f64 = filled.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = filled.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (Some(slope), Some(my - slope * mx))
    };
    Ok(BinnedRates { bins, slope, intercept })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingAuc {
    pub auc: f64,
    /// Two-sided permutation p-value against 0.5.
    pub p_value: f64,
    pub permutations: usize,
}

/// AUC of alert scores against adjudicated labels, with a seeded
/// permutation test. Permutation `i` draws from its own ChaCha stream, so
/// the p-value does not depend on thread scheduling.
pub fn alert_ordering_auc(scores: &[f64], labels: &[bool], permutations: usize, seed: u64) -> Result<OrderingAuc> {
    let observed = auc(scores, labels)?;
    let distance = (observed - 0.5).abs();
    let extreme: usize = (0..permutations)
        .into_par_iter()
        .map_init(
            || labels.to_vec(),
            |shuffled, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                shuffled.copy_from_slice(labels);
                shuffled.shuffle(&mut rng);
                let a = auc(scores, shuffled).expect("label counts are unchanged by shuffling");
                ((a - 0.5).abs() >= distance - 1e-12) as usize
            },
        )
        .sum();
    Ok(OrderingAuc {
        auc: observed,
        p_value: (1 + extreme) as f64 / (1 + permutations) as f64,
        permutations,
    })
}

/// Reviewer labels from a known truth with symmetric noise: each reviewer
/// reports the truth, flipped independently with probability `noise`, for
/// each of the two items. `reviewers[i]` lists who reviews `truth[i]`.
pub fn simulate_reviews(
    truth: &[(String, bool)],
    reviewers: &[Vec<String>],
    noise: f64,
    seed: u64,
) -> Result<Vec<AssessmentRecord>> {
    if truth.len() != reviewers.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: reviewers.len(),
        });
    }
    if !(0.0..0.5).contains(&noise) {
        return Err(Error::InvalidArgument(format!("label noise {noise} is outside [0, 0.5)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ((alert_id, t), who) in truth.iter().zip(reviewers) {
        for r in who {
            let item1 = *t != rng.random_bool(noise);
            let item2 = *t != rng.random_bool(noise);
            out.push(AssessmentRecord {
                alert_id: alert_id.clone(),
                reviewer_id: r.clone(),
                item1_useful: item1,
                item2_follow_up: item2,
                comment: String::new(),
            });
        }
    }
    Ok(out)
}

/// A review group: every reviewer assesses every alert of the group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewGroup {
    pub group_id: usize,
    pub reviewers: Vec<String>,
    pub alert_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub group_id: usize,
    pub alerts: usize,
    pub item1: PairwiseAgreement,
    pub item2: PairwiseAgreement,
}

/// Per-group reviewer agreement over the group's fully reviewed alerts.
/// Groups with no fully reviewed alert are skipped.
pub fn agreement_table(groups: &[ReviewGroup], records: &[AssessmentRecord]) -> Result<Vec<AgreementRow>> {
    let index: BTreeMap<(&str, &str), &AssessmentRecord> = records
        .iter()
        .map(|r| ((r.alert_id.as_str(), r.reviewer_id.as_str()), r))
        .collect();
    let mut rows = Vec::new();
    for g in groups {
        let complete: Vec<&str> = g
            .alert_ids
            .iter()
            .map(String::as_str)
            .filter(|a| g.reviewers.iter().all(|r| index.contains_key(&(*a, r.as_str()))))
            .collect();
        if complete.is_empty() || g.reviewers.len() < 2 {
            continue;
        }
        let labels = |item: Item| -> Vec<Vec<bool>> {
            g.reviewers
                .iter()
                .map(|r| complete.iter().map(|a| item.of(index[&(*a, r.as_str())])).collect())
                .collect()
        };
        rows.push(AgreementRow {
            group_id: g.group_id,
            alerts: complete.len(),
            item1: pairwise_agreement(&labels(Item::Useful))?,
            item2: pairwise_agreement(&labels(Item::FollowUp))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub stratum: String,
    pub alerts: usize,
    /// `None` when the stratum is empty.
    pub item1: Option<RateWithCI>,
    pub item2: Option<RateWithCI>,
}

pub const STRONG_ALERT_RANGE: (f64, f64) = (0.8, 1.0);

fn stratum_label(t: Option<AlertType>) -> &'static str {
    match t {
        None => "All",
        Some(AlertType::LabOmission) => "Lab omissions",
        Some(AlertType::MedicationCommission) => "Medication commissions",
        Some(AlertType::MedicationOmission) => "Medication omissions",
    }
}

/// Rows for all alerts and for each alert type, optionally restricted to a
/// score range.
pub fn rate_table(adjudicated: &[AdjudicatedAlert], alerts: &[Alert], scores: Option<(f64, f64)>) -> Result<Vec<RateRow>> {
    let in_range = |a: &Alert| scores.is_none_or(|(lo, hi)| a.alert_score >= lo && a.alert_score <= hi);
    let by_id: BTreeMap<&str, &Alert> = alerts.iter().map(|a| (a.alert_id.as_str(), a)).collect();
    let mut subset_alerts: Vec<Alert> = Vec::new();
    let mut subset_adj: Vec<AdjudicatedAlert> = Vec::new();
    for j in adjudicated {
        let a = by_id
            .get(j.alert_id.as_str())
            .ok_or_else(|| Error::NotFound(format!("alert {}", j.alert_id)))?;
        if in_range(a) {
            subset_alerts.push((*a).clone());
            subset_adj.push(j.clone());
        }
    }
    std::iter::once(None)
        .chain(AlertType::ALL.into_iter().map(Some))
        .map(|t| {
            let stratum = t.map_or(Stratum::All, Stratum::Type);
            let n = subset_alerts.iter().filter(|a| stratum.contains(a)).count();
            let rate = |item| {
                (n > 0)
                    .then(|| true_alert_rate(&subset_adj, &subset_alerts, item, stratum))
                    .transpose()
            };
            Ok(RateRow {
                stratum: stratum_label(t).to_string(),
                alerts: n,
                item1: rate(Item::Useful)?,
                item2: rate(Item::FollowUp)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub adjudicated: Vec<AdjudicatedAlert>,
    pub pending: Vec<String>,
    pub agreement: Vec<AgreementRow>,
    pub rates: Vec<RateRow>,
    pub strong_rates: Vec<RateRow>,
    pub binned_item1: BinnedRates,
    pub binned_item2: BinnedRates,
    /// `None` while only one label value has been adjudicated.
    pub ordering_item1: Option<OrderingAuc>,
    pub ordering_item2: Option<OrderingAuc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub reviewers_per_alert: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            reviewers_per_alert: DEFAULT_REVIEWERS_PER_ALERT,
            permutations: DEFAULT_PERMUTATIONS,
            seed: 17,
        }
    }
}

pub fn evaluate(
    alerts: &[Alert],
    records: &[AssessmentRecord],
    groups: &[ReviewGroup],
    config: &EvaluationConfig,
) -> Result<EvaluationReport> {
    let (adjudicated, pending) = adjudicate(records, config.reviewers_per_alert)?;
    let joined = join(&adjudicated, alerts)?;
    let scores: Vec<f64> = joined.iter().map(|(_, a)| a.alert_score).collect();
    let item = |i: Item| joined.iter().map(|(j, _)| i.of_adjudicated(j)).collect::<Vec<_>>();
    let (l1, l2) = (item(Item::Useful), item(Item::FollowUp));
    let ordering = |labels: &[bool]| match alert_ordering_auc(&scores, labels, config.permutations, config.seed) {
        Ok(o) => Ok(Some(o)),
        Err(Error::DegenerateLabels { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(EvaluationReport {
        agreement: agreement_table(groups, records)?,
        rates: rate_table(&adjudicated, alerts, None)?,
        strong_rates: rate_table(&adjudicated, alerts, Some(STRONG_ALERT_RANGE))?,
        binned_item1: binned_rates(&scores, &l1)?,
        binned_item2: binned_rates(&scores, &l2)?,
        ordering_item1: ordering(&l1)?,
        ordering_item2: ordering(&l2)?,
        adjudicated,
        pending,
    })
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

pub fn write_agreement_csv<W: Write>(out: W, rows: &[AgreementRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group",
        "alerts",
        "item1_agreement",
        "item1_kappa",
        "item2_agreement",
        "item2_kappa",
        "item1_agreement_min",
        "item1_agreement_max",
        "item1_kappa_min",
        "item1_kappa_max",
        "item2_agreement_min",
        "item2_agreement_max",
        "item2_kappa_min",
        "item2_kappa_max",
    ])?;
    for r in rows {
        let (a, b) = (r.item1, r.item2);
        let mut rec = vec![
            r.group_id.to_string(),
            r.alerts.to_string(),
            format!("{}/{}", f2(a.agreement_min), f2(a.agreement_max)),
            format!("{}/{}", f2(a.kappa_min), f2(a.kappa_max)),
            format!("{}/{}", f2(b.agreement_min), f2(b.agreement_max)),
            format!("{}/{}", f2(b.kappa_min), f2(b.kappa_max)),
        ];
        for p in [a, b] {
            for v in [p.agreement_min, p.agreement_max, p.kappa_min, p.kappa_max] {
                rec.push(v.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn rate_cells(r: Option<RateWithCI>) -> [String; 6] {
    match r {
        None => Default::default(),
        Some(r) => [
            r.numerator.to_string(),
            format!("{} [{}; {}]", f2(r.rate), f2(r.ci_low), f2(r.ci_high)),
            r.rate.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            f2(r.rate),
        ],
    }
}

pub fn write_rates_csv<W: Write>(out: W, rows: &[RateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "stratum",
        "alerts",
        "item1_true",
        "item1_rate_ci",
        "item1_rate",
        "item1_ci_low",
        "item1_ci_high",
        "item2_true",
        "item2_rate_ci",
        "item2_rate",
        "item2_ci_low",
        "item2_ci_high",
    ])?;
    for r in rows {
        let (a, b) = (rate_cells(r.item1), rate_cells(r.item2));
        let mut rec = vec![r.stratum.clone(), r.alerts.to_string()];
        rec.extend(a[..5].iter().cloned());
        rec.extend(b[..5].iter().cloned());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binned_csv<W: Write>(out: W, item1: &BinnedRates, item2: &BinnedRates) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bin_low",
        "bin_high",
        "alerts",
        "item1_true",
        "item1_rate",
        "item2_true",
        "item2_rate",
    ])?;
    let rate = |r: Option<f64>| r.map(|x| x.to_string()).unwrap_or_default();
    for (a, b) in item1.bins.iter().zip(&item2.bins) {
        w.write_record([
            format!("{:.1}", a.lower),
            format!("{:.1}", a.upper),
            a.count.to_string(),
            a.true_count.to_string(),
            rate(a.rate),
            b.true_count.to_string(),
            rate(b.rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_assessments<W: Write>(mut out: W, records: &[AssessmentRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_assessments<R: std::io::BufRead>(input: R) -> Result<Vec<AssessmentRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
