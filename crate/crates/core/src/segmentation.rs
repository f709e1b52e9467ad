//! Daily segmentation of a record into (patient state, following actions)
//! instances.
//!
//! A cut at time `t` sees every event with timestamp `<= t` as state and
//! labels the actions that occur in the half-open window `(t, t + window]`.
//! Cuts whose window would run past discharge are dropped, so every instance
//! carries a full window of action labels.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{PatientRecord, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentationPolicy {
    pub cut_time_of_day: NaiveTime,
    pub window_length: Duration,
}

impl Default for SegmentationPolicy {
    fn default() -> Self {
        Self {
            cut_time_of_day: NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
            window_length: Duration::hours(24),
        }
    }
}

impl SegmentationPolicy {
    pub fn new(cut_time_of_day: NaiveTime, window_length: Duration) -> Result<Self> {
        if window_length <= Duration::zero() {
            return Err(Error::InvalidArgument("window_length must be positive".into()));
        }
        Ok(Self {
            cut_time_of_day,
            window_length,
        })
    }
}

/// `HH:MM/<hours>h`, e.g. `08:00/24h`.
impl FromStr for SegmentationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("segmentation policy `{s}` is not HH:MM/<hours>h"));
        let (cut, window) = s.split_once('/').ok_or_else(bad)?;
        let cut = NaiveTime::parse_from_str(cut.trim(), "%H:%M").map_err(|_| bad())?;
        let hours: i64 = window
            .trim()
            .strip_suffix('h')
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        Self::new(cut, Duration::hours(hours))
    }
}

impl fmt::Display for SegmentationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}h",
            self.cut_time_of_day.format("%H:%M"),
            self.window_length.num_hours()
        )
    }
}

impl Serialize for SegmentationPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SegmentationPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    Lab,
    Medication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub code: String,
    pub kind: ActionKind,
}

/// The ordered set of actions that define the action-vector dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionCatalog {
    actions: Vec<Action>,
    #[serde(skip)]
    index: HashMap<(ActionKind, String), usize>,
}

impl ActionCatalog {
    pub fn new(actions: Vec<Action>) -> Self {
        let index = actions
            .iter()
            .enumerate()
            .map(|(i, a)| ((a.kind, a.code.clone()), i))
            .collect();
        Self { actions, index }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn position(&self, kind: ActionKind, code: &str) -> Option<usize> {
        if self.index.len() != self.actions.len() {
            // deserialized without the lookup table
            return self.actions.iter().position(|a| a.kind == kind && a.code == code);
        }
        self.index.get(&(kind, code.to_string())).copied()
    }
}

/// Observed action values for one instance, aligned with an [`ActionCatalog`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVector(pub Vec<bool>);

impl ActionVector {
    pub fn count_true(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionInstance {
    pub patient_id: String,
    pub cut_time: Timestamp,
    pub window_end: Timestamp,
    pub actions: ActionVector,
}

/// Cut points at `cut_time_of_day`, strictly after admission and no later
/// than discharge, spaced `window_length` apart.
pub fn segmentation_points(record: &PatientRecord, policy: &SegmentationPolicy) -> Vec<Timestamp> {
    let admit = record.admission_time;
    let mut first = admit
        .date_naive()
        .and_time(policy.cut_time_of_day)
        .and_utc();
    while first <= admit {
        first += Duration::days(1);
    }
    let mut points = Vec::new();
    let mut t = first;
    while t <= record.discharge_time {
        points.push(t);
        t += policy.window_length;
    }
    points
}

/// One instance per cut point whose full action window ends by discharge.
/// Events whose code is not in the catalog do not contribute to actions.
pub fn build_instances(
    record: &PatientRecord,
    points: &[Timestamp],
    catalog: &ActionCatalog,
    policy: &SegmentationPolicy,
) -> Vec<StateActionInstance> {
    let mut out = Vec::with_capacity(points.len());
    for &t in points {
        let end = t + policy.window_length;
        if end > record.discharge_time {
            continue;
        }
        let in_window = |ts: Timestamp| ts > t && ts <= end;
        let mut actions = vec![false; catalog.len()];
        let mut ignored = 0usize;
        for e in record.lab_events.iter().filter(|e| in_window(e.timestamp)) {
            match catalog.position(ActionKind::Lab, &e.lab_code) {
                Some(i) => actions[i] = true,
                None => ignored += 1,
            }
        }
        for e in record
            .med_events
            .iter()
            .filter(|e| in_window(e.timestamp) && e.order_kind.is_administration())
        {
            match catalog.position(ActionKind::Medication, &e.med_code) {
                Some(i) => actions[i] = true,
                None => ignored += 1,
            }
        }
        if ignored > 0 {
            log::debug!(
                "{} @ {t}: {ignored} events with codes outside the action catalog",
                record.patient_id
            );
        }
        out.push(StateActionInstance {
            patient_id: record.patient_id.clone(),
            cut_time: t,
            window_end: end,
            actions: ActionVector(actions),
        });
    }
    out
}

/// Segments and labels a whole cohort, preserving record order.
pub fn segment_cohort(
    records: &[PatientRecord],
    catalog: &ActionCatalog,
    policy: &SegmentationPolicy,
) -> Vec<StateActionInstance> {
    records
        .iter()
        .flat_map(|r| build_instances(r, &segmentation_points(r, policy), catalog, policy))
        .collect()
}

/// Writes the instance manifest CSV (`patient_id,t,n_actions_true`).
pub fn write_instance_manifest<W: std::io::Write>(
    out: W,
    instances: &[StateActionInstance],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patient_id", "t", "n_actions_true"])?;
    for inst in instances {
        w.write_record([
            inst.patient_id.as_str(),
            &inst.cut_time.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            &inst.actions.count_true().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
