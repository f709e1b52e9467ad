//! Fixed-length patient-state vectors built from the event history up to a
//! cut point.
//!
//! Every retained lab, medication and procedure code contributes one feature
//! group; demographics form one more group at the end. Group layouts:
//!
//! * continuous lab: 28 features, see [`CONTINUOUS_LAB_FEATURES`]
//! * categorical lab: 6 features, see [`CATEGORICAL_LAB_FEATURES`]
//! * medication: 4 features, see [`MEDICATION_FEATURES`]
//! * procedure: 3 features, see [`PROCEDURE_FEATURES`]
//! * demographics: one-hot sex, one-hot race, age, 4 support-device indicators
//!
//! Undefined values (no measurement, single measurement where two are
//! needed, ...) are encoded as `0.0` and flagged in the companion mask.
//! Indicator and count features are always defined.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{LabKind, LabStatus, PatientRecord, Timestamp};
use crate::segmentation::{Action, ActionCatalog, ActionKind};

pub const DEFAULT_MIN_SUPPORT: usize = 20;

pub const CONTINUOUS_LAB_FEATURES: [&str; 28] = [
    "last",
    "second_to_last",
    "first",
    "diff_last_two",
    "slope_last_two_per_day",
    "pct_drop_last_two",
    "hours_since_last",
    "hours_since_first",
    "nadir",
    "hours_since_nadir",
    "last_minus_nadir",
    "pct_change_from_nadir",
    "apex",
    "hours_since_apex",
    "last_minus_apex",
    "pct_drop_from_apex",
    "baseline",
    "last_minus_baseline",
    "pct_change_from_baseline",
    "count",
    "mean",
    "std",
    "max_last_24h",
    "min_last_24h",
    "diff_vs_24h_prior",
    "measured_last_24h",
    "ever_measured",
    "pending_order",
];

pub const CATEGORICAL_LAB_FEATURES: [&str; 6] = [
    "first",
    "second_to_last",
    "last",
    "hours_since_last",
    "performed",
    "pending_order",
];

pub const MEDICATION_FEATURES: [&str; 4] = [
    "active",
    "hours_since_first_order",
    "hours_since_last_order",
    "hours_since_last_change",
];

pub const PROCEDURE_FEATURES: [&str; 3] = ["ever_performed", "hours_since_first", "hours_since_last"];

const DEVICE_FEATURES: [&str; 4] = ["device_1", "device_2", "device_3", "device_4"];

/// Values plus presence mask for one fixed-size feature block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block<const N: usize> {
    pub values: [f64; N],
    pub present: [bool; N],
}

impl<const N: usize> Block<N> {
    fn missing() -> Self {
        Self {
            values: [0.0; N],
            present: [false; N],
        }
    }

    fn set(&mut self, i: usize, v: f64) {
        self.values[i] = v;
        self.present[i] = true;
    }
}

fn hours_between(from: Timestamp, to: Timestamp) -> f64 {
    (to - from).num_minutes() as f64 / 60.0
}

fn pct(num: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        0.0
    } else {
        num / denom * 100.0
    }
}

/// 28 summary features of a continuous lab series observed up to `t`.
/// `series` must be sorted by time with every timestamp `<= t`.
pub fn continuous_lab_features(series: &[(Timestamp, f64)], pending: bool, t: Timestamp) -> Block<28> {
    let mut b = Block::<28>::missing();
    let n = series.len();
    let recent: Vec<f64> = series
        .iter()
        .filter(|(ts, _)| *ts > t - Duration::hours(24))
        .map(|&(_, v)| v)
        .collect();

    b.set(19, n as f64);
    b.set(25, if recent.is_empty() { 0.0 } else { 1.0 });
    b.set(26, if n > 0 { 1.0 } else { 0.0 });
    b.set(27, if pending { 1.0 } else { 0.0 });
    if n == 0 {
        return b;
    }

    let (t_last, last) = series[n - 1];
    let (t_first, first) = series[0];
    b.set(0, last);
    b.set(2, first);
    b.set(6, hours_between(t_last, t));
    b.set(7, hours_between(t_first, t));

    if n >= 2 {
        let (t_prev, prev) = series[n - 2];
        let diff = last - prev;
        let days = hours_between(t_prev, t_last) / 24.0;
        b.set(1, prev);
        b.set(3, diff);
        b.set(4, if days > 0.0 { diff / days } else { 0.0 });
        b.set(5, pct(prev - last, prev));
    }

    // latest occurrence wins for nadir/apex timing
    let (mut nadir, mut t_nadir) = (first, t_first);
    let (mut apex, mut t_apex) = (first, t_first);
    for &(ts, v) in series {
        if v <= nadir {
            nadir = v;
            t_nadir = ts;
        }
        if v >= apex {
            apex = v;
            t_apex = ts;
        }
    }
    b.set(8, nadir);
    b.set(9, hours_between(t_nadir, t));
    b.set(10, last - nadir);
    b.set(11, pct(last - nadir, nadir.abs()));
    b.set(12, apex);
    b.set(13, hours_between(t_apex, t));
    b.set(14, last - apex);
    b.set(15, pct(apex - last, apex.abs()));
    b.set(16, first);
    b.set(17, last - first);
    b.set(18, pct(last - first, first.abs()));

    let mean = series.iter().map(|&(_, v)| v).sum::<f64>() / n as f64;
    b.set(20, mean);
    if n >= 2 {
        let var = series.iter().map(|&(_, v)| (v - mean).powi(2)).sum::<f64>() / n as f64;
        b.set(21, var.sqrt());
    }
    if !recent.is_empty() {
        b.set(22, recent.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        b.set(23, recent.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if n >= 2 {
        let target = t_last - Duration::hours(24);
        let reference = series[..n - 1]
            .iter()
            .min_by_key(|(ts, _)| (*ts - target).num_minutes().abs())
            .map(|&(_, v)| v)
            .unwrap();
        b.set(24, last - reference);
    }
    b
}

/// 6 features of a categorical lab. Category codes are 1-based positions in
/// `categories`; 0 means no value (or a category unseen in training).
/// A single observation fills first, second-to-last and last.
pub fn categorical_lab_features(
    series: &[(Timestamp, &str)],
    categories: &[String],
    pending: bool,
    t: Timestamp,
) -> Block<6> {
    let mut b = Block::<6>::missing();
    let code = |c: &str| categories.iter().position(|k| k == c).map(|i| (i + 1) as f64);
    b.set(4, if series.is_empty() { 0.0 } else { 1.0 });
    b.set(5, if pending { 1.0 } else { 0.0 });
    let n = series.len();
    if n == 0 {
        return b;
    }
    let stl = if n >= 2 { series[n - 2].1 } else { series[0].1 };
    for (i, c) in [(0, series[0].1), (1, stl), (2, series[n - 1].1)] {
        if let Some(v) = code(c) {
            b.set(i, v);
        }
    }
    b.set(3, hours_between(series[n - 1].0, t));
    b
}

/// 4 medication features from the orders placed up to `t`.
pub fn medication_features(orders: &[(Timestamp, crate::record::OrderKind)], t: Timestamp) -> Block<4> {
    let mut b = Block::<4>::missing();
    let Some(&(t_last, last_kind)) = orders.last() else {
        b.set(0, 0.0);
        return b;
    };
    b.set(0, if last_kind.is_administration() { 1.0 } else { 0.0 });
    b.set(1, hours_between(orders[0].0, t));
    b.set(2, hours_between(t_last, t));
    if let Some(&(ts, _)) = orders.iter().rev().find(|(_, k)| k.changes_regimen()) {
        b.set(3, hours_between(ts, t));
    }
    b
}

/// 3 procedure features from the procedure times up to `t`.
pub fn procedure_features(times: &[Timestamp], t: Timestamp) -> Block<3> {
    let mut b = Block::<3>::missing();
    b.set(0, if times.is_empty() { 0.0 } else { 1.0 });
    if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
        b.set(1, hours_between(first, t));
        b.set(2, hours_between(last, t));
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKind {
    ContinuousLab,
    CategoricalLab,
    Medication,
    Procedure,
    Demographics,
}

/// A contiguous run of feature indices derived from one clinical variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub id: usize,
    pub name: String,
    pub kind: GroupKind,
    pub start: usize,
    pub len: usize,
}

impl FeatureGroup {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEntry {
    pub code: String,
    pub kind: LabKind,
    /// Sorted category labels seen in training (categorical labs only).
    #[serde(default)]
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub min_support: usize,
    pub labs: Vec<LabEntry>,
    pub meds: Vec<String>,
    pub procs: Vec<String>,
    pub sexes: Vec<String>,
    pub races: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    pub feature_names: Vec<String>,
}

impl FeatureCatalog {
    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    /// Retained labs and medications, in catalog order, as prediction targets.
    pub fn action_catalog(&self) -> ActionCatalog {
        let labs = self.labs.iter().map(|l| Action {
            code: l.code.clone(),
            kind: ActionKind::Lab,
        });
        let meds = self.meds.iter().map(|m| Action {
            code: m.clone(),
            kind: ActionKind::Medication,
        });
        ActionCatalog::new(labs.chain(meds).collect())
    }

    pub fn group(&self, id: usize) -> Option<&FeatureGroup> {
        self.groups.get(id)
    }

    pub fn group_by_name(&self, name: &str) -> Option<&FeatureGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Feature indices covered by `group_ids`, ascending.
    pub fn columns(&self, group_ids: &[usize]) -> Vec<usize> {
        let mut cols: Vec<usize> = group_ids
            .iter()
            .filter_map(|&g| self.groups.get(g))
            .flat_map(|g| g.indices())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    fn assemble(
        min_support: usize,
        labs: Vec<LabEntry>,
        meds: Vec<String>,
        procs: Vec<String>,
        sexes: Vec<String>,
        races: Vec<String>,
    ) -> Self {
        let mut groups = Vec::new();
        let mut names = Vec::new();
        let mut push = |name: String, kind: GroupKind, features: Vec<String>| {
            let id = groups.len();
            groups.push(FeatureGroup {
                id,
                name: name.clone(),
                kind,
                start: names.len(),
                len: features.len(),
            });
            names.extend(features.into_iter().map(|f| format!("{name}:{f}")));
        };
        for lab in &labs {
            let (kind, fs): (_, &[&str]) = match lab.kind {
                LabKind::Continuous => (GroupKind::ContinuousLab, &CONTINUOUS_LAB_FEATURES),
                LabKind::Categorical => (GroupKind::CategoricalLab, &CATEGORICAL_LAB_FEATURES),
            };
            push(format!("lab:{}", lab.code), kind, fs.iter().map(|s| s.to_string()).collect());
        }
        for m in &meds {
            push(
                format!("med:{m}"),
                GroupKind::Medication,
                MEDICATION_FEATURES.iter().map(|s| s.to_string()).collect(),
            );
        }
        for p in &procs {
            push(
                format!("proc:{p}"),
                GroupKind::Procedure,
                PROCEDURE_FEATURES.iter().map(|s| s.to_string()).collect(),
            );
        }
        let demo: Vec<String> = sexes
            .iter()
            .map(|s| format!("sex={s}"))
            .chain(races.iter().map(|r| format!("race={r}")))
            .chain(std::iter::once("age".to_string()))
            .chain(DEVICE_FEATURES.iter().map(|s| s.to_string()))
            .collect();
        push("demographics".into(), GroupKind::Demographics, demo);
        Self {
            min_support,
            labs,
            meds,
            procs,
            sexes,
            races,
            groups,
            feature_names: names,
        }
    }
}

/// Builds the catalog from training records. Codes seen in fewer than
/// `min_support` distinct patients are dropped.
pub fn build_catalog(train: &[PatientRecord], min_support: usize) -> Result<FeatureCatalog> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot build a catalog from no records".into()));
    }
    let mut lab_patients: BTreeMap<&str, (LabKind, BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    let mut med_patients: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut proc_patients: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut sexes = BTreeSet::new();
    let mut races = BTreeSet::new();

    for r in train {
        let pid = r.patient_id.as_str();
        sexes.insert(r.demographics.sex.clone());
        races.insert(r.demographics.race.clone());
        for e in &r.lab_events {
            let entry = lab_patients
                .entry(&e.lab_code)
                .or_insert_with(|| (e.kind, BTreeSet::new(), BTreeSet::new()));
            entry.1.insert(pid);
            if let Some(c) = e.category() {
                entry.2.insert(c);
            }
        }
        for e in &r.med_events {
            med_patients.entry(&e.med_code).or_default().insert(pid);
        }
        for e in &r.proc_events {
            proc_patients.entry(&e.proc_code).or_default().insert(pid);
        }
    }

    let labs: Vec<LabEntry> = lab_patients
        .into_iter()
        .filter(|(_, (_, pats, _))| pats.len() >= min_support)
        .map(|(code, (kind, _, cats))| LabEntry {
            code: code.to_string(),
            kind,
            categories: cats.into_iter().map(str::to_string).collect(),
        })
        .collect();
    let keep = |m: BTreeMap<&str, BTreeSet<&str>>| -> Vec<String> {
        m.into_iter()
            .filter(|(_, p)| p.len() >= min_support)
            .map(|(c, _)| c.to_string())
            .collect()
    };
    let meds = keep(med_patients);
    let procs = keep(proc_patients);
    if labs.is_empty() && meds.is_empty() && procs.is_empty() {
        return Err(Error::EmptyCatalog { min_support });
    }
    Ok(FeatureCatalog::assemble(
        min_support,
        labs,
        meds,
        procs,
        sexes.into_iter().collect(),
        races.into_iter().collect(),
    ))
}

/// Dense feature values with a presence mask of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub present: Vec<bool>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn extend<const N: usize>(&mut self, b: Block<N>) {
        self.values.extend_from_slice(&b.values);
        self.present.extend_from_slice(&b.present);
    }
}

/// Featurizes the state of `record` at cut time `t`. Only events with
/// timestamp `<= t` are read.
pub fn featurize_state(record: &PatientRecord, t: Timestamp, catalog: &FeatureCatalog) -> FeatureVector {
    let mut fv = FeatureVector {
        values: Vec::with_capacity(catalog.dimension()),
        present: Vec::with_capacity(catalog.dimension()),
    };

    let mut labs: BTreeMap<&str, Vec<&crate::record::LabEvent>> = BTreeMap::new();
    for e in record.lab_events.iter().filter(|e| e.timestamp <= t) {
        labs.entry(&e.lab_code).or_default().push(e);
    }
    for entry in &catalog.labs {
        let events = labs.get(entry.code.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let last_result = events
            .iter()
            .filter(|e| e.status == LabStatus::Resulted)
            .map(|e| e.timestamp)
            .max();
        let pending = events
            .iter()
            .any(|e| e.status == LabStatus::OrderedPending && last_result.is_none_or(|r| e.timestamp > r));
        match entry.kind {
            LabKind::Continuous => {
                let series: Vec<(Timestamp, f64)> =
                    events.iter().filter_map(|e| e.numeric().map(|v| (e.timestamp, v))).collect();
                fv.extend(continuous_lab_features(&series, pending, t));
            }
            LabKind::Categorical => {
                let series: Vec<(Timestamp, &str)> =
                    events.iter().filter_map(|e| e.category().map(|c| (e.timestamp, c))).collect();
                fv.extend(categorical_lab_features(&series, &entry.categories, pending, t));
            }
        }
    }

    let mut meds: BTreeMap<&str, Vec<(Timestamp, crate::record::OrderKind)>> = BTreeMap::new();
    for e in record.med_events.iter().filter(|e| e.timestamp <= t) {
        meds.entry(&e.med_code).or_default().push((e.timestamp, e.order_kind));
    }
    for code in &catalog.meds {
        let orders = meds.get(code.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        fv.extend(medication_features(orders, t));
    }

    let mut procs: BTreeMap<&str, Vec<Timestamp>> = BTreeMap::new();
    for e in record.proc_events.iter().filter(|e| e.timestamp <= t) {
        procs.entry(&e.proc_code).or_default().push(e.timestamp);
    }
    for code in &catalog.procs {
        let times = procs.get(code.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        fv.extend(procedure_features(times, t));
    }

    let d = &record.demographics;
    for s in &catalog.sexes {
        fv.values.push(if *s == d.sex { 1.0 } else { 0.0 });
    }
    for r in &catalog.races {
        fv.values.push(if *r == d.race { 1.0 } else { 0.0 });
    }
    fv.values.push(d.age);
    fv.values
        .extend(d.support_devices.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    fv.present.resize(fv.values.len(), true);

    assert_eq!(fv.len(), catalog.dimension(), "feature vector does not match catalog");
    fv
}

/// Per-feature mean and standard deviation over the present entries of the
/// training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(vectors: &[FeatureVector]) -> Self {
        let dim = vectors.first().map_or(0, FeatureVector::len);
        let mut mean = vec![0.0; dim];
        let mut std = vec![0.0; dim];
        for j in 0..dim {
            let vals: Vec<f64> = vectors
                .iter()
                .filter(|v| v.present[j])
                .map(|v| v.values[j])
                .collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            mean[j] = m;
            std[j] = var.sqrt();
        }
        Self { mean, std }
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] == 0.0
    }

    pub fn apply(&self, v: &FeatureVector) -> Vec<f64> {
        v.values
            .iter()
            .zip(&v.present)
            .enumerate()
            .map(|(j, (&x, &present))| {
                if !present || self.std[j] == 0.0 {
                    0.0
                } else {
                    (x - self.mean[j]) / self.std[j]
                }
            })
            .collect()
    }
}

/// Standardizes `vectors` with statistics fitted on training data.
pub fn standardize(vectors: &[FeatureVector], stats: &StandardizationStats) -> FeatureMatrix {
    let cols = stats.mean.len();
    let mut data = Vec::with_capacity(vectors.len() * cols);
    for v in vectors {
        data.extend(stats.apply(v));
    }
    FeatureMatrix::from_vec(vectors.len(), cols, data)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

const MATRIX_MAGIC: &[u8; 4] = b"CDFM";
pub const FEATURE_MATRIX_VERSION: u32 = 1;

impl FeatureMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureMatrix::from_vec(self.rows, cols.len(), data)
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix::from_vec(rows.len(), self.cols, data)
    }

    /// Layout (little-endian): magic `CDFM`, u32 version, u64 rows,
    /// u64 cols, then `rows * cols` f64 values in row-major order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MATRIX_MAGIC)?;
        w.write_u32::<LittleEndian>(FEATURE_MATRIX_VERSION)?;
        w.write_u64::<LittleEndian>(self.rows as u64)?;
        w.write_u64::<LittleEndian>(self.cols as u64)?;
        for &v in &self.data {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MATRIX_MAGIC {
            return Err(Error::ModelFormat("not a feature matrix file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FEATURE_MATRIX_VERSION {
            return Err(Error::ModelFormat(format!("unsupported matrix version {version}")));
        }
        let rows = r.read_u64::<LittleEndian>()? as usize;
        let cols = r.read_u64::<LittleEndian>()? as usize;
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        Ok(Self::from_vec(rows, cols, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::fixtures::*;
    use crate::record::{LabEvent, LabValue, OrderKind, ProcedureEvent};
    use proptest::prelude::*;

    fn idx(name: &str) -> usize {
        CONTINUOUS_LAB_FEATURES.iter().position(|f| *f == name).unwrap()
    }

    #[test]
    fn two_point_series_matches_hand_computation() {
        let series = [(ts(1, 8), 100.0), (ts(2, 8), 80.0)];
        let b = continuous_lab_features(&series, false, ts(2, 9));
        let v = |n: &str| b.values[idx(n)];
        assert_eq!(v("last"), 80.0);
        assert_eq!(v("diff_last_two"), -20.0);
        assert_eq!(v("slope_last_two_per_day"), -20.0);
        assert_eq!(v("pct_drop_last_two"), 20.0);
        assert_eq!(v("nadir"), 80.0);
        assert_eq!(v("apex"), 100.0);
        assert_eq!(v("baseline"), 100.0);
        assert_eq!(v("last_minus_apex"), -20.0);
        assert_eq!(v("hours_since_last"), 1.0);
        assert_eq!(v("hours_since_first"), 25.0);
        assert_eq!(v("count"), 2.0);
        assert_eq!(v("mean"), 90.0);
        assert_eq!(v("std"), 10.0);
        assert_eq!(v("diff_vs_24h_prior"), -20.0);
        assert!(b.present.iter().all(|&p| p));
    }

    #[test]
    fn constant_series_has_zero_changes() {
        let series = [(ts(1, 8), 50.0), (ts(2, 8), 50.0), (ts(3, 8), 50.0)];
        let b = continuous_lab_features(&series, false, ts(3, 9));
        let v = |n: &str| b.values[idx(n)];
        for n in ["diff_last_two", "slope_last_two_per_day", "pct_drop_last_two", "std"] {
            assert_eq!(v(n), 0.0, "{n}");
        }
        for n in ["nadir", "apex", "baseline", "last"] {
            assert_eq!(v(n), 50.0, "{n}");
        }
    }

    #[test]
    fn empty_series_is_all_missing_except_indicators() {
        let b = continuous_lab_features(&[], true, ts(3, 9));
        assert!(b.values[..27].iter().all(|&v| v == 0.0));
        assert_eq!(b.values[idx("pending_order")], 1.0);
        assert_eq!(b.values[idx("ever_measured")], 0.0);
        let present: Vec<&str> = CONTINUOUS_LAB_FEATURES
            .iter()
            .zip(b.present)
            .filter(|(_, p)| *p)
            .map(|(n, _)| *n)
            .collect();
        assert_eq!(present, ["count", "measured_last_24h", "ever_measured", "pending_order"]);
    }

    #[test]
    fn pct_drop_with_zero_previous_value_is_zero() {
        let b = continuous_lab_features(&[(ts(1, 8), 0.0), (ts(2, 8), 5.0)], false, ts(2, 9));
        assert_eq!(b.values[idx("pct_drop_last_two")], 0.0);
    }

    #[test]
    fn categorical_features_follow_the_documented_layout() {
        let cats = vec!["neg".to_string(), "pos".to_string()];
        let b = categorical_lab_features(&[(ts(1, 8), "pos"), (ts(2, 8), "neg")], &cats, false, ts(3, 8));
        assert_eq!(b.values, [2.0, 2.0, 1.0, 24.0, 1.0, 0.0]);

        let b = categorical_lab_features(&[], &cats, true, ts(3, 8));
        assert_eq!(b.values[4..], [0.0, 1.0]);
        assert!(!b.present[0]);

        let b = categorical_lab_features(&[(ts(1, 8), "neg")], &cats, false, ts(3, 8));
        assert_eq!(b.values[..3], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn medication_features_track_orders() {
        let b = medication_features(&[(ts(1, 8), OrderKind::Start), (ts(3, 8), OrderKind::Change)], ts(4, 8));
        assert_eq!(b.values, [1.0, 72.0, 24.0, 24.0]);

        let b = medication_features(&[], ts(4, 8));
        assert_eq!(b.values, [0.0; 4]);
        assert_eq!(b.present, [true, false, false, false]);

        let b = medication_features(&[(ts(1, 8), OrderKind::Start), (ts(2, 8), OrderKind::Stop)], ts(3, 8));
        assert_eq!(b.values[0], 0.0);
        assert_eq!(b.values[3], 24.0);
    }

    #[test]
    fn procedure_features_track_first_and_last() {
        assert_eq!(procedure_features(&[ts(1, 8), ts(2, 8)], ts(4, 8)).values, [1.0, 72.0, 48.0]);
        let b = procedure_features(&[], ts(4, 8));
        assert_eq!(b.values, [0.0; 3]);
        assert_eq!(b.present, [true, false, false]);
        let b = procedure_features(&[ts(2, 8)], ts(4, 8));
        assert_eq!(b.values[1], b.values[2]);
    }

    fn patient(id: &str, labs: &[&str], meds: &[&str], procs: &[&str]) -> PatientRecord {
        let mut r = empty_record(id, ts(1, 6), ts(6, 12));
        r.lab_events = labs.iter().map(|c| lab(c, ts(2, 6), 1.0)).collect();
        r.med_events = meds.iter().map(|c| med(c, ts(2, 6), OrderKind::Start)).collect();
        r.proc_events = procs
            .iter()
            .map(|c| ProcedureEvent {
                proc_code: c.to_string(),
                timestamp: ts(2, 6),
            })
            .collect();
        r
    }

    #[test]
    fn min_support_boundary_is_inclusive() {
        let mut cohort: Vec<_> = (0..20)
            .map(|i| patient(&format!("p{i}"), &["A", "B", "C"], &["M1", "M2"], &["P1"]))
            .collect();
        // lab D appears in 19 patients only
        for r in cohort.iter_mut().take(19) {
            r.lab_events.push(lab("D", ts(2, 7), 1.0));
        }
        let cat = build_catalog(&cohort, 20).unwrap();
        let codes: Vec<_> = cat.labs.iter().map(|l| l.code.as_str()).collect();
        assert_eq!(codes, ["A", "B", "C"]);
        let demographics = 1 + 1 + 1 + 4; // one sex, one race, age, devices
        assert_eq!(cat.dimension(), 3 * 28 + 2 * 4 + 3 + demographics);
        assert_eq!(cat.groups.len(), 3 + 2 + 1 + 1);
    }

    #[test]
    fn catalog_with_nothing_retained_is_an_error() {
        let cohort = vec![patient("p", &["A"], &[], &[])];
        assert!(matches!(build_catalog(&cohort, 20), Err(Error::EmptyCatalog { .. })));
    }

    #[test]
    fn groups_partition_the_feature_range() {
        let cohort: Vec<_> = (0..3).map(|i| patient(&format!("p{i}"), &["A"], &["M"], &["P"])).collect();
        let cat = build_catalog(&cohort, 1).unwrap();
        let mut covered = vec![0usize; cat.dimension()];
        for g in &cat.groups {
            for i in g.indices() {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    fn catalog_one_of_each() -> FeatureCatalog {
        let mut cohort: Vec<_> = (0..3).map(|i| patient(&format!("p{i}"), &["A"], &["M"], &["P"])).collect();
        cohort[0].lab_events.push(LabEvent {
            lab_code: "C".into(),
            timestamp: ts(2, 6),
            kind: LabKind::Categorical,
            value: Some(LabValue::Category("pos".into())),
            status: LabStatus::Resulted,
        });
        build_catalog(&cohort, 1).unwrap()
    }

    #[test]
    fn record_without_events_is_missing_except_demographics() {
        let cat = catalog_one_of_each();
        let fv = featurize_state(&empty_record("x", ts(1, 6), ts(5, 6)), ts(3, 8), &cat);
        let demo = cat.group_by_name("demographics").unwrap();
        for g in &cat.groups {
            for i in g.indices() {
                if g.kind != GroupKind::Demographics && !cat.feature_names[i].ends_with("count") {
                    assert_eq!(fv.values[i], 0.0, "{}", cat.feature_names[i]);
                }
            }
        }
        assert!(demo.indices().all(|i| fv.present[i]));
        assert_eq!(fv.values[demo.start + demo.len - 5], 64.0); // age
    }

    #[test]
    fn quiet_day_only_advances_elapsed_time() {
        let cat = catalog_one_of_each();
        let r = patient("p", &["A"], &["M"], &["P"]);
        let a = featurize_state(&r, ts(4, 8), &cat);
        let b = featurize_state(&r, ts(5, 8), &cat);
        for (i, name) in cat.feature_names.iter().enumerate() {
            let delta = b.values[i] - a.values[i];
            assert_eq!(a.present[i], b.present[i], "{name}");
            if name.contains(":hours_since") && a.present[i] {
                assert_eq!(delta, 24.0, "{name}");
            } else {
                assert_eq!(delta, 0.0, "{name}");
            }
        }
    }

    #[test]
    fn pending_order_clears_once_resulted() {
        let cat = catalog_one_of_each();
        let mut r = patient("p", &["A"], &[], &[]);
        r.lab_events.push(LabEvent {
            value: None,
            status: LabStatus::OrderedPending,
            ..lab("A", ts(3, 6), 0.0)
        });
        r.lab_events.push(lab("A", ts(4, 6), 2.0));
        let pending = cat.group_by_name("lab:A").unwrap().start + 27;
        assert_eq!(featurize_state(&r, ts(3, 8), &cat).values[pending], 1.0);
        assert_eq!(featurize_state(&r, ts(4, 8), &cat).values[pending], 0.0);
    }

    #[test]
    fn standardize_uses_training_statistics() {
        let train = vec![
            FeatureVector {
                values: vec![8.0, 3.0],
                present: vec![true, true],
            },
            FeatureVector {
                values: vec![12.0, 3.0],
                present: vec![true, true],
            },
        ];
        let stats = StandardizationStats::fit(&train);
        assert_eq!(stats.mean[0], 10.0);
        assert_eq!(stats.std[0], 2.0);
        assert!(stats.is_constant(1));
        let test = FeatureVector {
            values: vec![14.0, 99.0],
            present: vec![true, true],
        };
        assert_eq!(stats.apply(&test), vec![2.0, 0.0]);
        let missing = FeatureVector {
            values: vec![14.0, 3.0],
            present: vec![false, true],
        };
        assert_eq!(stats.apply(&missing)[0], 0.0);
    }

    #[test]
    fn matrix_file_round_trips() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, -2.5], vec![f64::MAX, 0.0]]);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 4 * 8);
        assert_eq!(FeatureMatrix::read_from(buf.as_slice()).unwrap(), m);
    }

    proptest! {
        #[test]
        fn nadir_apex_bracket_observations(values in prop::collection::vec(-1e3f64..1e3, 1..20)) {
            let series: Vec<_> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| (ts(1, 0) + Duration::hours(i as i64 * 5), v))
                .collect();
            let b = continuous_lab_features(&series, false, ts(10, 0));
            let (nadir, apex) = (b.values[idx("nadir")], b.values[idx("apex")]);
            prop_assert!(values.iter().all(|&v| nadir <= v && v <= apex));
            prop_assert_eq!(b.values[idx("baseline")], values[0]);
            prop_assert!(b.values.iter().all(|v| v.is_finite()));
        }
    }
}
