//! Synthetic cohorts drawn from known action policies, with labeled action
//! flips as the ground truth for detection.
//!
//! Each patient carries a small latent state (`n_drivers` AR(1) processes).
//! The first `n_drivers` labs are "driver" labs measured every morning at
//! 06:00, whose values are a noisy linear read-out of the latent state, so
//! the state is observable from the record. Every other lab and every
//! medication is a policy action: in each full 24 h window the action is
//! taken with probability `sigmoid(bias + w . z)` where `z` is the latent
//! state at the start of the window.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{
    Demographics, LabEvent, LabKind, LabStatus, LabValue, MedOrderEvent, OrderKind, PatientRecord,
    ProcedureEvent, Timestamp,
};
use crate::segmentation::{ActionKind, SegmentationPolicy};

const SEXES: [&str; 2] = ["F", "M"];
const RACES: [&str; 4] = ["asian", "black", "other", "white"];

/// Sparse linear logit over the latent drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPolicy {
    pub bias: f64,
    /// (driver index, weight)
    pub weights: Vec<(usize, f64)>,
}

impl ActionPolicy {
    pub fn probability(&self, z: &[f64]) -> f64 {
        let logit = self.bias + self.weights.iter().map(|&(k, w)| w * z[k]).sum::<f64>();
        1.0 / (1.0 + (-logit).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub patients: usize,
    /// Stay length in days, uniform over `[min_stay_days, max_stay_days]`.
    pub min_stay_days: u32,
    pub max_stay_days: u32,
    pub n_labs: usize,
    pub n_meds: usize,
    pub n_procs: usize,
    /// The first `n_drivers` labs are daily state read-outs, not policy actions.
    pub n_drivers: usize,
    /// Day-to-day autocorrelation of the latent drivers, in [0, 1).
    pub persistence: f64,
    /// Magnitude range of randomly drawn policy weights.
    pub weight_range: (f64, f64),
    /// One per policy action (policy labs first, then meds). Drawn at random when absent.
    pub policies: Option<Vec<ActionPolicy>>,
    /// Fraction of pending lab orders among policy lab events.
    pub pending_rate: f64,
    pub injection_rate: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            patients: 100,
            min_stay_days: 3,
            max_stay_days: 7,
            n_labs: 8,
            n_meds: 5,
            n_procs: 2,
            n_drivers: 3,
            persistence: 0.95,
            weight_range: (4.0, 6.0),
            policies: None,
            pending_rate: 0.1,
            injection_rate: 0.0,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.patients == 0 {
            return bad("patient count must be at least 1".into());
        }
        if self.n_labs == 0 {
            return bad("at least one lab is required".into());
        }
        if self.n_drivers == 0 || self.n_drivers > self.n_labs {
            return bad(format!(
                "n_drivers must be in 1..={} (the lab count), got {}",
                self.n_labs, self.n_drivers
            ));
        }
        if self.policy_actions() == 0 {
            return bad("no policy actions: add labs beyond the drivers or medications".into());
        }
        if self.min_stay_days < 2 || self.min_stay_days > self.max_stay_days {
            return bad(format!(
                "stay range {}..={} days is invalid (minimum 2 days)",
                self.min_stay_days, self.max_stay_days
            ));
        }
        if !(0.0..0.5).contains(&self.injection_rate) {
            return bad(format!("injection rate {} is outside [0, 0.5)", self.injection_rate));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad(format!("persistence {} is outside [0, 1)", self.persistence));
        }
        let (lo, hi) = self.weight_range;
        if !(0.0 < lo && lo < hi && hi.is_finite()) {
            return bad(format!("weight range ({lo}, {hi}) must satisfy 0 < low < high"));
        }
        if !(0.0..=1.0).contains(&self.pending_rate) {
            return bad(format!("pending rate {} is outside [0, 1]", self.pending_rate));
        }
        if let Some(p) = &self.policies {
            if p.len() != self.policy_actions() {
                return bad(format!("{} policies given for {} policy actions", p.len(), self.policy_actions()));
            }
            for (i, policy) in p.iter().enumerate() {
                if let Some(&(k, _)) = policy.weights.iter().find(|&&(k, _)| k >= self.n_drivers) {
                    return bad(format!("policy {i} refers to driver {k} of {}", self.n_drivers));
                }
            }
        }
        Ok(())
    }

    pub fn policy_actions(&self) -> usize {
        self.n_labs - self.n_drivers.min(self.n_labs) + self.n_meds
    }

    /// Action code and kind for each policy action, in policy order.
    pub fn policy_action_codes(&self) -> Vec<(String, ActionKind)> {
        (self.n_drivers..self.n_labs)
            .map(|i| (lab_code(i), ActionKind::Lab))
            .chain((0..self.n_meds).map(|i| (med_code(i), ActionKind::Medication)))
            .collect()
    }

    /// The configured policies, or a seeded random draw: each action depends
    /// on one or two drivers with weight magnitudes drawn from `weight_range`.
    pub fn resolved_policies(&self) -> Vec<ActionPolicy> {
        if let Some(p) = &self.policies {
            return p.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::MAX);
        (0..self.policy_actions())
            .map(|_| {
                let first = rng.random_range(0..self.n_drivers);
                let mut weights = vec![(first, signed_weight(&mut rng, self.weight_range))];
                if self.n_drivers > 1 && rng.random_bool(0.5) {
                    let second = (first + rng.random_range(1..self.n_drivers)) % self.n_drivers;
                    weights.push((second, signed_weight(&mut rng, self.weight_range)));
                }
                ActionPolicy {
                    bias: rng.random_range(-1.0..1.0),
                    weights,
                }
            })
            .collect()
    }
}

fn signed_weight(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let m = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

pub fn lab_code(i: usize) -> String {
    format!("LAB{:02}", i + 1)
}

pub fn med_code(i: usize) -> String {
    format!("MED{:02}", i + 1)
}

pub fn proc_code(i: usize) -> String {
    format!("PROC{:02}", i + 1)
}

/// One (patient, cut, action) slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub patient_id: String,
    pub t: Timestamp,
    pub action: String,
    pub kind: ActionKind,
    pub policy_prob: f64,
    pub sampled: bool,
    pub emitted: bool,
    pub injected: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rows: Vec<GroundTruthRow>,
}

impl GroundTruth {
    /// Injected flags keyed by (patient, t, action).
    pub fn injected_index(&self) -> BTreeMap<(&str, Timestamp, &str), bool> {
        self.rows
            .iter()
            .map(|r| ((r.patient_id.as_str(), r.t, r.action.as_str()), r.injected))
            .collect()
    }

    pub fn injected_count(&self) -> usize {
        self.rows.iter().filter(|r| r.injected).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let rows = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(GroundTruth { rows })
    }
}

fn patient_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_in_window(rng: &mut ChaCha8Rng, start: Timestamp) -> Timestamp {
    // whole minutes in (start, start + 24h)
    start + Duration::minutes(rng.random_range(1..24 * 60))
}

fn base_date(index: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Duration::days((index % 90) as i64)
}

fn at(date: NaiveDate, hour: u32, minute: u32) -> Timestamp {
    Utc.from_utc_datetime(&date.and_time(NaiveTime::from_hms_opt(hour, minute, 0).unwrap()))
}

fn generate_patient(
    index: usize,
    config: &GeneratorConfig,
    policies: &[ActionPolicy],
    actions: &[(String, ActionKind)],
) -> (PatientRecord, Vec<GroundTruthRow>) {
    let mut rng = patient_rng(config.seed, index as u64);
    let day0 = base_date(index);
    let admission = at(day0, rng.random_range(9..21), rng.random_range(0..60));
    let stay = rng.random_range(config.min_stay_days..=config.max_stay_days) as i64;
    let last_day = day0 + Duration::days(stay);
    let discharge = at(last_day, rng.random_range(9..19), rng.random_range(0..60));

    let demographics = Demographics {
        sex: SEXES[rng.random_range(0..SEXES.len())].to_string(),
        age: rng.random_range(20..91) as f64,
        race: RACES[rng.random_range(0..RACES.len())].to_string(),
        support_devices: std::array::from_fn(|_| rng.random_bool(0.1)),
    };
    let mut record = PatientRecord {
        patient_id: format!("P{:05}", index + 1),
        admission_time: admission,
        discharge_time: discharge,
        demographics,
        lab_events: Vec::new(),
        med_events: Vec::new(),
        proc_events: Vec::new(),
    };

    for p in 0..config.n_procs {
        if rng.random_bool(0.5) {
            record.proc_events.push(ProcedureEvent {
                proc_code: proc_code(p),
                timestamp: admission + Duration::hours(1),
            });
        }
    }

    // latent state per calendar day; z[d] is read out at 06:00 on day d
    // (at admission on day 0) and drives the window starting at 08:00 on day d
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(stay as usize + 1);
    let mut state: Vec<f64> = (0..config.n_drivers).map(|_| StandardNormal.sample(&mut rng)).collect();
    for d in 0..=stay {
        if d > 0 {
            let rho = config.persistence;
            let scale = (1.0 - rho * rho).sqrt();
            for s in state.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *s = rho * *s + scale * e;
            }
        }
        let when = if d == 0 {
            admission + Duration::minutes(30)
        } else {
            at(day0 + Duration::days(d), 6, 0)
        };
        for (k, &zk) in state.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            record.lab_events.push(LabEvent {
                lab_code: lab_code(k),
                timestamp: when,
                kind: LabKind::Continuous,
                value: Some(LabValue::Number(round2(100.0 + 10.0 * zk + noise))),
                status: LabStatus::Resulted,
            });
        }
        z.push(state.clone());
    }

    // full windows start at 08:00 on days 1..stay-1 and end by 08:00 on day `stay`
    let mut rows = Vec::new();
    let mut was_given = vec![false; config.n_meds];
    for d in 1..stay {
        let t = at(day0 + Duration::days(d), 8, 0);
        for (a, ((code, kind), policy)) in actions.iter().zip(policies).enumerate() {
            let p = policy.probability(&z[d as usize]);
            let sampled = rng.random_bool(p);
            let when = random_in_window(&mut rng, t);
            let lab_value = 50.0 + 5.0 * z[d as usize][policy.weights[0].0];
            let pending = rng.random_bool(config.pending_rate);
            rows.push(GroundTruthRow {
                patient_id: record.patient_id.clone(),
                t,
                action: code.clone(),
                kind: *kind,
                policy_prob: p,
                sampled,
                emitted: sampled,
                injected: false,
            });
            match kind {
                ActionKind::Lab if sampled => {
                    record.lab_events.push(policy_lab_event(code, when, lab_value, pending));
                }
                ActionKind::Lab => {}
                ActionKind::Medication => {
                    let m = a - (config.n_labs - config.n_drivers);
                    if sampled {
                        let order_kind = if was_given[m] { OrderKind::Continue } else { OrderKind::Start };
                        record.med_events.push(MedOrderEvent {
                            med_code: code.clone(),
                            timestamp: when,
                            order_kind,
                        });
                    } else if was_given[m] {
                        record.med_events.push(MedOrderEvent {
                            med_code: code.clone(),
                            timestamp: when,
                            order_kind: OrderKind::Stop,
                        });
                    }
                    was_given[m] = sampled;
                }
            }
        }
    }
    record.sort_events();
    (record, rows)
}

fn policy_lab_event(code: &str, when: Timestamp, value: f64, pending: bool) -> LabEvent {
    LabEvent {
        lab_code: code.to_string(),
        timestamp: when,
        kind: LabKind::Continuous,
        value: (!pending).then_some(LabValue::Number(round2(value))),
        status: if pending { LabStatus::OrderedPending } else { LabStatus::Resulted },
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Generates the clean cohort and then applies `injection_rate` flips
/// (seeded from `seed + 1`).
pub fn generate_cohort(config: &GeneratorConfig) -> Result<(Vec<PatientRecord>, GroundTruth)> {
    config.validate()?;
    let policies = config.resolved_policies();
    let actions = config.policy_action_codes();
    let generated: Vec<_> = (0..config.patients)
        .into_par_iter()
        .map(|i| generate_patient(i, config, &policies, &actions))
        .collect();
    let mut records = Vec::with_capacity(generated.len());
    let mut rows = Vec::new();
    for (r, gt) in generated {
        records.push(r);
        rows.extend(gt);
    }
    let truth = GroundTruth { rows };
    if config.injection_rate > 0.0 {
        inject_anomalies(records, truth, config.injection_rate, config.seed.wrapping_add(1))
    } else {
        Ok((records, truth))
    }
}

/// Flips each ground-truth action slot independently with probability
/// `rate`: a taken action loses its events in the window, an omitted one
/// gains a single event. Latent state read-outs are never touched.
pub fn inject_anomalies(
    mut records: Vec<PatientRecord>,
    mut truth: GroundTruth,
    rate: f64,
    seed: u64,
) -> Result<(Vec<PatientRecord>, GroundTruth)> {
    if !(0.0..0.5).contains(&rate) {
        return Err(Error::InvalidArgument(format!("injection rate {rate} is outside [0, 0.5)")));
    }
    if rate == 0.0 {
        return Ok((records, truth));
    }
    let window = SegmentationPolicy::default().window_length;
    let mut by_patient: BTreeMap<String, Vec<&mut GroundTruthRow>> = BTreeMap::new();
    for row in truth.rows.iter_mut() {
        by_patient.entry(row.patient_id.clone()).or_default().push(row);
    }
    let mut rows_by_record: Vec<Vec<&mut GroundTruthRow>> = records
        .iter()
        .map(|r| by_patient.remove(&r.patient_id).unwrap_or_default())
        .collect();
    if let Some(orphan) = by_patient.keys().next() {
        return Err(Error::NotFound(format!("ground truth refers to unknown patient {orphan}")));
    }

    records
        .par_iter_mut()
        .zip(rows_by_record.par_iter_mut())
        .enumerate()
        .for_each(|(i, (record, rows))| {
            let mut rng = patient_rng(seed, i as u64);
            for row in rows.iter_mut() {
                let flip = rng.random_bool(rate);
                let when = random_in_window(&mut rng, row.t);
                if !flip {
                    continue;
                }
                let end = row.t + window;
                let inside = |ts: Timestamp| ts > row.t && ts <= end;
                match (row.kind, row.emitted) {
                    (ActionKind::Lab, true) => record
                        .lab_events
                        .retain(|e| !(e.lab_code == row.action && inside(e.timestamp))),
                    (ActionKind::Lab, false) => {
                        let value = record
                            .lab_events
                            .iter()
                            .filter(|e| e.lab_code == row.action)
                            .find_map(|e| e.numeric())
                            .unwrap_or(50.0);
                        record.lab_events.push(policy_lab_event(&row.action, when, value, false));
                    }
                    (ActionKind::Medication, true) => record.med_events.retain(|e| {
                        !(e.med_code == row.action && e.order_kind.is_administration() && inside(e.timestamp))
                    }),
                    (ActionKind::Medication, false) => record.med_events.push(MedOrderEvent {
                        med_code: row.action.clone(),
                        timestamp: when,
                        order_kind: OrderKind::Start,
                    }),
                }
                row.emitted = !row.emitted;
                row.injected = !row.injected;
            }
            record.sort_events();
        });
    drop(rows_by_record);
    Ok((records, truth))
}
