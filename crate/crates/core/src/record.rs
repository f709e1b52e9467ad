//! Event-stream patient records, the JSON-Lines cohort format, and the
//! patient-level temporal train/test split.
//!
//! One patient per line. Timestamps are ISO-8601 UTC (`2024-03-04T08:00:00Z`).
//! Event lists may appear in any order on disk; they are sorted on parse.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub admission_time: Timestamp,
    pub discharge_time: Timestamp,
    pub demographics: Demographics,
    #[serde(default)]
    pub lab_events: Vec<LabEvent>,
    #[serde(default)]
    pub med_events: Vec<MedOrderEvent>,
    #[serde(default)]
    pub proc_events: Vec<ProcedureEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub sex: String,
    pub age: f64,
    pub race: String,
    pub support_devices: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabStatus {
    Resulted,
    OrderedPending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabValue {
    Number(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEvent {
    pub lab_code: String,
    pub timestamp: Timestamp,
    pub kind: LabKind,
    /// Absent for pending orders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<LabValue>,
    pub status: LabStatus,
}

impl LabEvent {
    pub fn numeric(&self) -> Option<f64> {
        match (&self.status, &self.value) {
            (LabStatus::Resulted, Some(LabValue::Number(v))) => Some(*v),
            _ => None,
        }
    }

    pub fn category(&self) -> Option<&str> {
        match (&self.status, &self.value) {
            (LabStatus::Resulted, Some(LabValue::Category(c))) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderKind {
    Start,
    Continue,
    Change,
    Stop,
}

impl OrderKind {
    /// Start, continue and change orders count as administration and leave
    /// the medication active; stop closes the active interval.
    pub fn is_administration(self) -> bool {
        !matches!(self, OrderKind::Stop)
    }

    /// Orders that change the medication regimen (everything except a plain continuation).
    pub fn changes_regimen(self) -> bool {
        !matches!(self, OrderKind::Continue)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedOrderEvent {
    pub med_code: String,
    pub timestamp: Timestamp,
    pub order_kind: OrderKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureEvent {
    pub proc_code: String,
    pub timestamp: Timestamp,
}

impl PatientRecord {
    /// Sorts every event list ascending by timestamp. Medication orders that
    /// share a timestamp are ordered start < continue < change < stop.
    pub fn sort_events(&mut self) {
        self.lab_events.sort_by_key(|e| e.timestamp);
        self.med_events.sort_by_key(|e| (e.timestamp, e.order_kind));
        self.proc_events.sort_by_key(|e| e.timestamp);
    }

    /// Checks every record-level invariant except cohort-wide ones.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidRecord {
            patient_id: self.patient_id.clone(),
            message,
        };
        if self.patient_id.is_empty() {
            return Err(invalid("empty patient_id".into()));
        }
        if self.admission_time >= self.discharge_time {
            return Err(invalid("admission_time must precede discharge_time".into()));
        }
        if !(self.demographics.age.is_finite() && self.demographics.age >= 0.0) {
            return Err(invalid("age must be a non-negative real".into()));
        }
        if let Some((event, ts)) = self.first_out_of_range() {
            return Err(invalid(format!("{event} at {ts} lies outside the stay")));
        }
        for (i, e) in self.lab_events.iter().enumerate() {
            match (e.status, e.kind, &e.value) {
                (LabStatus::OrderedPending, _, _) => {}
                (LabStatus::Resulted, LabKind::Continuous, Some(LabValue::Number(v))) if v.is_finite() => {}
                (LabStatus::Resulted, LabKind::Categorical, Some(LabValue::Category(_))) => {}
                _ => {
                    return Err(invalid(format!(
                        "lab_events[{i}] ({}) value does not match kind {:?}",
                        e.lab_code, e.kind
                    )))
                }
            }
        }
        if !is_sorted(self.lab_events.iter().map(|e| e.timestamp))
            || !is_sorted(self.med_events.iter().map(|e| (e.timestamp, e.order_kind)))
            || !is_sorted(self.proc_events.iter().map(|e| e.timestamp))
        {
            return Err(invalid("event lists must be sorted by timestamp".into()));
        }
        Ok(())
    }

    fn first_out_of_range(&self) -> Option<(String, Timestamp)> {
        let in_stay = |ts: Timestamp| ts >= self.admission_time && ts <= self.discharge_time;
        let labs = self
            .lab_events
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("lab_events[{i}] ({})", e.lab_code), e.timestamp));
        let meds = self
            .med_events
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("med_events[{i}] ({})", e.med_code), e.timestamp));
        let procs = self
            .proc_events
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("proc_events[{i}] ({})", e.proc_code), e.timestamp));
        labs.chain(meds).chain(procs).find(|(_, ts)| !in_stay(*ts))
    }
}

fn is_sorted<T: PartialOrd>(mut it: impl Iterator<Item = T>) -> bool {
    let Some(mut prev) = it.next() else {
        return true;
    };
    for next in it {
        if next < prev {
            return false;
        }
        prev = next;
    }
    true
}

/// Parses a JSON-Lines cohort. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_records<R: BufRead>(source: R) -> Result<Vec<PatientRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut lab_kinds: BTreeMap<String, LabKind> = BTreeMap::new();

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let mut record: PatientRecord =
            serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Malformed {
                line: line_no,
                field: match e.path().to_string() {
                    p if p == "." => "<record>".to_string(),
                    p => p,
                },
                message: e.inner().to_string(),
            })?;
        record.sort_events();

        if let Some((event, ts)) = record.first_out_of_range() {
            return Err(Error::EventOutOfRange {
                line: line_no,
                patient_id: record.patient_id,
                event,
                timestamp: ts.to_rfc3339(),
            });
        }
        record.validate().map_err(|e| Error::Malformed {
            line: line_no,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        if !seen.insert(record.patient_id.clone()) {
            return Err(Error::DuplicatePatient {
                line: line_no,
                patient_id: record.patient_id,
            });
        }
        for e in &record.lab_events {
            let kind = *lab_kinds.entry(e.lab_code.clone()).or_insert(e.kind);
            if kind != e.kind {
                return Err(Error::Malformed {
                    line: line_no,
                    field: "lab_events.kind".into(),
                    message: format!("lab `{}` changes kind across the cohort", e.lab_code),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes records as canonical JSON-Lines.
pub fn write_records<W: Write>(mut out: W, records: &[PatientRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Splits a cohort by whole patients in admission order: the earliest
/// `fraction` of patients go to training. Equal admission times are ordered
/// by `patient_id`.
pub fn split_cohort(
    records: Vec<PatientRecord>,
    fraction: f64,
) -> Result<(Vec<PatientRecord>, Vec<PatientRecord>)> {
    if records.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 records, got {}",
            records.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("fraction {fraction} is outside (0, 1)")));
    }
    let n = records.len();
    let n_train = (fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Split(format!(
            "fraction {fraction} of {n} records leaves one side empty"
        )));
    }
    let mut records = records;
    sort_by_admission(&mut records);
    let test = records.split_off(n_train);
    Ok((records, test))
}

pub fn sort_by_admission(records: &mut [PatientRecord]) {
    records.sort_by(|a, b| {
        a.admission_time
            .cmp(&b.admission_time)
            .then_with(|| a.patient_id.cmp(&b.patient_id))
    });
}

/// Summary printed by `ingest --validate`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub records: usize,
    pub lab_events: usize,
    pub med_events: usize,
    pub proc_events: usize,
    pub distinct_labs: usize,
    pub distinct_meds: usize,
    pub distinct_procs: usize,
    pub earliest_admission: Option<Timestamp>,
    pub latest_discharge: Option<Timestamp>,
}

impl ValidationReport {
    pub fn from_records(records: &[PatientRecord]) -> Self {
        let mut labs = HashSet::new();
        let mut meds = HashSet::new();
        let mut procs = HashSet::new();
        let mut report = ValidationReport {
            records: records.len(),
            ..Default::default()
        };
        for r in records {
            report.lab_events += r.lab_events.len();
            report.med_events += r.med_events.len();
            report.proc_events += r.proc_events.len();
            labs.extend(r.lab_events.iter().map(|e| e.lab_code.as_str()));
            meds.extend(r.med_events.iter().map(|e| e.med_code.as_str()));
            procs.extend(r.proc_events.iter().map(|e| e.proc_code.as_str()));
            report.earliest_admission = Some(match report.earliest_admission {
                Some(t) => t.min(r.admission_time),
                None => r.admission_time,
            });
            report.latest_discharge = Some(match report.latest_discharge {
                Some(t) => t.max(r.discharge_time),
                None => r.discharge_time,
            });
        }
        report.distinct_labs = labs.len();
        report.distinct_meds = meds.len();
        report.distinct_procs = procs.len();
        report
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub fn ts(day: u32, hour: u32) -> Timestamp {
        Utc.with_ymd_and_hms(2024, 1, day, hour, 0, 0).unwrap()
    }

    pub fn demographics() -> Demographics {
        Demographics {
            sex: "F".into(),
            age: 64.0,
            race: "white".into(),
            support_devices: [false, true, false, false],
        }
    }

    pub fn empty_record(id: &str, admit: Timestamp, discharge: Timestamp) -> PatientRecord {
        PatientRecord {
            patient_id: id.into(),
            admission_time: admit,
            discharge_time: discharge,
            demographics: demographics(),
            lab_events: vec![],
            med_events: vec![],
            proc_events: vec![],
        }
    }

    pub fn lab(code: &str, at: Timestamp, value: f64) -> LabEvent {
        LabEvent {
            lab_code: code.into(),
            timestamp: at,
            kind: LabKind::Continuous,
            value: Some(LabValue::Number(value)),
            status: LabStatus::Resulted,
        }
    }

    pub fn med(code: &str, at: Timestamp, kind: OrderKind) -> MedOrderEvent {
        MedOrderEvent {
            med_code: code.into(),
            timestamp: at,
            order_kind: kind,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    fn to_line(r: &PatientRecord) -> String {
        serde_json::to_string(r).unwrap()
    }

    #[test]
    fn empty_input_parses_to_empty_cohort() {
        assert!(parse_records("".as_bytes()).unwrap().is_empty());
        assert!(parse_records("\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn events_are_sorted_on_parse() {
        let mut r = empty_record("p1", ts(1, 6), ts(4, 12));
        r.lab_events = vec![lab("K", ts(3, 6), 4.0), lab("K", ts(2, 6), 3.5)];
        let parsed = parse_records(to_line(&r).as_bytes()).unwrap();
        let times: Vec<_> = parsed[0].lab_events.iter().map(|e| e.timestamp).collect();
        assert_eq!(times, vec![ts(2, 6), ts(3, 6)]);
    }

    #[test]
    fn event_before_admission_is_rejected_with_event_name() {
        let mut r = empty_record("p1", ts(2, 6), ts(4, 12));
        r.lab_events = vec![lab("K", ts(1, 6), 4.0)];
        let err = parse_records(to_line(&r).as_bytes()).unwrap_err();
        match err {
            Error::EventOutOfRange { line, event, .. } => {
                assert_eq!(line, 1);
                assert!(event.contains("lab_events[0]"), "{event}");
                assert!(event.contains("K"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn malformed_line_names_line_and_field() {
        let good = to_line(&empty_record("p1", ts(1, 6), ts(4, 12)));
        let bad = r#"{"patient_id":"p2","admission_time":"not a time","discharge_time":"2024-01-04T12:00:00Z","demographics":{"sex":"F","age":1.0,"race":"x","support_devices":[false,false,false,false]}}"#;
        let input = format!("{good}\n{bad}\n");
        match parse_records(input.as_bytes()).unwrap_err() {
            Error::Malformed { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "admission_time");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn wrong_device_count_is_malformed() {
        let bad = r#"{"patient_id":"p2","admission_time":"2024-01-01T06:00:00Z","discharge_time":"2024-01-04T12:00:00Z","demographics":{"sex":"F","age":1.0,"race":"x","support_devices":[false,false,false]}}"#;
        match parse_records(bad.as_bytes()).unwrap_err() {
            Error::Malformed { field, .. } => assert_eq!(field, "demographics.support_devices"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_patient_is_rejected() {
        let line = to_line(&empty_record("p1", ts(1, 6), ts(4, 12)));
        let input = format!("{line}\n{line}\n");
        assert!(matches!(
            parse_records(input.as_bytes()).unwrap_err(),
            Error::DuplicatePatient { line: 2, .. }
        ));
    }

    #[test]
    fn lab_kind_must_be_consistent_across_cohort() {
        let mut a = empty_record("a", ts(1, 6), ts(4, 12));
        a.lab_events = vec![lab("K", ts(2, 6), 4.0)];
        let mut b = empty_record("b", ts(1, 6), ts(4, 12));
        b.lab_events = vec![LabEvent {
            kind: LabKind::Categorical,
            value: Some(LabValue::Category("pos".into())),
            ..lab("K", ts(2, 6), 0.0)
        }];
        let input = format!("{}\n{}\n", to_line(&a), to_line(&b));
        assert!(parse_records(input.as_bytes()).is_err());
    }

    #[test]
    fn split_takes_earliest_admissions_for_training() {
        let records: Vec<_> = (0..10)
            .rev()
            .map(|i| empty_record(&format!("p{i}"), ts(1 + i, 6), ts(20, 6)))
            .collect();
        let (train, test) = split_cohort(records, 0.6).unwrap();
        let ids = |v: &[PatientRecord]| v.iter().map(|r| r.patient_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&train), ["p0", "p1", "p2", "p3", "p4", "p5"]);
        assert_eq!(ids(&test), ["p6", "p7", "p8", "p9"]);
    }

    #[test]
    fn split_rejects_empty_side() {
        let records: Vec<_> = (0..3)
            .map(|i| empty_record(&format!("p{i}"), ts(1 + i, 6), ts(20, 6)))
            .collect();
        assert!(matches!(split_cohort(records.clone(), 0.2), Err(Error::Split(_))));
        assert!(matches!(split_cohort(records[..1].to_vec(), 0.5), Err(Error::Split(_))));
    }

    #[test]
    fn split_breaks_admission_ties_by_patient_id() {
        let records = vec![
            empty_record("b", ts(1, 6), ts(5, 6)),
            empty_record("a", ts(1, 6), ts(5, 6)),
        ];
        let (train, test) = split_cohort(records, 0.5).unwrap();
        assert_eq!(train[0].patient_id, "a");
        assert_eq!(test[0].patient_id, "b");
    }

    fn arb_record() -> impl Strategy<Value = PatientRecord> {
        (
            "[a-z0-9]{1,8}",
            0u32..200,
            1i64..6000,
            prop::collection::vec((0.0f64..1.0, -50.0f64..50.0), 0..6),
            prop::collection::vec((0.0f64..1.0, 0usize..4), 0..6),
        )
            .prop_map(|(id, admit_h, stay_min, labs, meds)| {
                let admit = ts(1, 0) + chrono::Duration::hours(admit_h as i64);
                let discharge = admit + chrono::Duration::minutes(stay_min);
                let at = |f: f64| admit + chrono::Duration::minutes((f * stay_min as f64) as i64);
                let kinds = [OrderKind::Start, OrderKind::Continue, OrderKind::Change, OrderKind::Stop];
                let mut r = empty_record(&id, admit, discharge);
                r.lab_events = labs.iter().map(|&(f, v)| lab("K", at(f), v)).collect();
                r.med_events = meds.iter().map(|&(f, k)| med("M", at(f), kinds[k])).collect();
                r.sort_events();
                r
            })
    }

    proptest! {
        #[test]
        fn canonical_round_trip_is_identity(records in prop::collection::vec(arb_record(), 0..5)) {
            let mut records = records;
            records.dedup_by(|a, b| a.patient_id == b.patient_id);
            let mut seen = HashSet::new();
            records.retain(|r| seen.insert(r.patient_id.clone()));
            let mut buf = Vec::new();
            write_records(&mut buf, &records).unwrap();
            let parsed = parse_records(buf.as_slice()).unwrap();
            prop_assert_eq!(parsed, records);
        }

        #[test]
        fn split_is_a_temporal_partition(n in 2usize..30, fraction in 0.05f64..0.95, hours in prop::collection::vec(0i64..500, 30)) {
            let records: Vec<_> = (0..n)
                .map(|i| {
                    let admit = ts(1, 0) + chrono::Duration::hours(hours[i]);
                    empty_record(&format!("p{i:02}"), admit, admit + chrono::Duration::days(3))
                })
                .collect();
            match split_cohort(records.clone(), fraction) {
                Ok((train, test)) => {
                    prop_assert_eq!(train.len() + test.len(), n);
                    let train_ids: HashSet<_> = train.iter().map(|r| &r.patient_id).collect();
                    prop_assert!(test.iter().all(|r| !train_ids.contains(&r.patient_id)));
                    let last_train = train.iter().map(|r| r.admission_time).max().unwrap();
                    prop_assert!(test.iter().all(|r| r.admission_time >= last_train));
                }
                Err(Error::Split(_)) => {
                    let k = (fraction * n as f64 + 1e-9).floor() as usize;
                    prop_assert!(k == 0 || k == n);
                }
                Err(e) => prop_assert!(false, "unexpected {}", e),
            }
        }
    }
}
