//! Reviewer assignment and the assessment store behind the review service.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Duration;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, AssessmentRecord, EvaluationConfig, EvaluationReport, ReviewGroup};
use crate::features::{featurize_state, FeatureCatalog, StandardizationStats};
use crate::learner::CalibratedActionModel;
use crate::record::{PatientRecord, Timestamp};
use crate::scoring::Alert;

pub const DEFAULT_GROUP_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewAssignment {
    pub reviewer_id: String,
    pub group_id: usize,
    pub alert_ids: Vec<String>,
}

/// Splits reviewers into random groups of `group_size` and spreads the
/// alerts over the groups. All alerts of one patient go to the same group;
/// patient bundles are placed largest first on the least-loaded group, which
/// keeps group loads within one bundle of each other.
pub fn assign_reviews(alerts: &[Alert], reviewers: &[String], group_size: usize, seed: u64) -> Result<Vec<ReviewAssignment>> {
    if group_size == 0 || reviewers.len() < group_size {
        return Err(Error::InvalidArgument(format!(
            "{} reviewers cannot fill a group of {group_size}",
            reviewers.len()
        )));
    }
    if reviewers.len() % group_size != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} reviewers do not divide into groups of {group_size}",
            reviewers.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = reviewers.to_vec();
    shuffled.sort();
    shuffled.dedup();
    if shuffled.len() != reviewers.len() {
        return Err(Error::InvalidArgument("reviewer ids must be unique".into()));
    }
    shuffled.shuffle(&mut rng);
    let n_groups = shuffled.len() / group_size;

    let mut by_patient: BTreeMap<&str, Vec<&Alert>> = BTreeMap::new();
    for a in alerts {
        by_patient.entry(&a.patient_id).or_default().push(a);
    }
    let mut bundles: Vec<Vec<&Alert>> = by_patient.into_values().collect();
    bundles.shuffle(&mut rng);
    bundles.sort_by_key(|b| std::cmp::Reverse(b.len()));

    let mut loads: Vec<Vec<&Alert>> = vec![Vec::new(); n_groups];
    for bundle in bundles {
        let g = (0..n_groups).min_by_key(|&g| (loads[g].len(), g)).unwrap();
        loads[g].extend(bundle);
    }
    let mut out = Vec::with_capacity(shuffled.len());
    for (g, members) in shuffled.chunks(group_size).enumerate() {
        let mut group_alerts = loads[g].clone();
        group_alerts.sort_by(|a, b| (&a.patient_id, a.time, &a.alert_id).cmp(&(&b.patient_id, b.time, &b.alert_id)));
        let ids: Vec<String> = group_alerts.iter().map(|a| a.alert_id.clone()).collect();
        for r in members {
            out.push(ReviewAssignment {
                reviewer_id: r.clone(),
                group_id: g + 1,
                alert_ids: ids.clone(),
            });
        }
    }
    Ok(out)
}

/// Review groups implied by a list of assignments.
pub fn review_groups(assignments: &[ReviewAssignment]) -> Vec<ReviewGroup> {
    let mut groups: BTreeMap<usize, ReviewGroup> = BTreeMap::new();
    for a in assignments {
        let g = groups.entry(a.group_id).or_insert_with(|| ReviewGroup {
            group_id: a.group_id,
            reviewers: Vec::new(),
            alert_ids: a.alert_ids.clone(),
        });
        g.reviewers.push(a.reviewer_id.clone());
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub received_at: Timestamp,
    pub record: AssessmentRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimelineCategory {
    Lab,
    Medication,
    Procedure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub timestamp: Timestamp,
    pub category: TimelineCategory,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub value: f64,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertContext {
    pub alert: Alert,
    pub horizon_hours: i64,
    pub timeline: Vec<TimelineEvent>,
    /// Largest `|w_j x_j|` terms of the model at the earlier cut.
    pub contributions: Vec<Contribution>,
    /// P(action | state) at the earlier cut.
    pub posterior: Option<f64>,
}

/// Everything needed to explain an alert: the records, the feature catalog
/// with its standardization, and the trained models.
#[derive(Debug, Clone)]
pub struct ContextSource {
    pub records: BTreeMap<String, PatientRecord>,
    pub catalog: FeatureCatalog,
    pub stats: StandardizationStats,
    pub models: BTreeMap<String, CalibratedActionModel>,
    pub horizon: Duration,
    pub top_contributions: usize,
}

impl ContextSource {
    pub fn context(&self, alert: &Alert) -> Result<AlertContext> {
        let record = self
            .records
            .get(&alert.patient_id)
            .ok_or_else(|| Error::NotFound(format!("patient {}", alert.patient_id)))?;
        let from = alert.time - self.horizon;
        let within = |t: Timestamp| t >= from && t <= alert.time;
        let mut timeline: Vec<TimelineEvent> = Vec::new();
        for e in record.lab_events.iter().filter(|e| within(e.timestamp)) {
            let detail = match (&e.value, e.status) {
                (_, crate::record::LabStatus::OrderedPending) => "ordered, pending".to_string(),
                (Some(crate::record::LabValue::Number(v)), _) => v.to_string(),
                (Some(crate::record::LabValue::Category(c)), _) => c.clone(),
                (None, _) => String::new(),
            };
            timeline.push(TimelineEvent {
                timestamp: e.timestamp,
                category: TimelineCategory::Lab,
                code: e.lab_code.clone(),
                detail,
            });
        }
        for e in record.med_events.iter().filter(|e| within(e.timestamp)) {
            timeline.push(TimelineEvent {
                timestamp: e.timestamp,
                category: TimelineCategory::Medication,
                code: e.med_code.clone(),
                detail: format!("{:?}", e.order_kind).to_lowercase(),
            });
        }
        for e in record.proc_events.iter().filter(|e| within(e.timestamp)) {
            timeline.push(TimelineEvent {
                timestamp: e.timestamp,
                category: TimelineCategory::Procedure,
                code: e.proc_code.clone(),
                detail: String::new(),
            });
        }
        timeline.sort_by(|a, b| (a.timestamp, &a.code).cmp(&(b.timestamp, &b.code)));

        let (contributions, posterior) = match self.models.get(&alert.action) {
            None => (Vec::new(), None),
            Some(m) => {
                let x = self.stats.apply(&featurize_state(record, alert.prev_time, &self.catalog));
                let weight_of: BTreeMap<usize, f64> = m.columns.iter().copied().zip(m.model.weights.iter().copied()).collect();
                let contributions = m
                    .contributions(&x)
                    .into_iter()
                    .take(self.top_contributions)
                    .map(|(col, c)| Contribution {
                        feature: self.catalog.feature_names[col].clone(),
                        value: x[col],
                        weight: weight_of[&col],
                        contribution: c,
                    })
                    .collect();
                (contributions, Some(m.posterior(&x)?))
            }
        };
        Ok(AlertContext {
            alert: alert.clone(),
            horizon_hours: self.horizon.num_hours(),
            timeline,
            contributions,
            posterior,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    audit_len: u64,
    current: Vec<AssessmentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewProgress {
    pub alerts: usize,
    pub assessments: usize,
    pub expected_assessments: usize,
    pub adjudicated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub progress: ReviewProgress,
    pub report: EvaluationReport,
}

/// Assessments keyed by (alert, reviewer), backed by an append-only
/// JSON-Lines audit log and an occasional snapshot of the current state.
#[derive(Debug)]
pub struct ReviewStore {
    alerts: BTreeMap<String, Alert>,
    alert_order: Vec<String>,
    assignments: BTreeMap<String, ReviewAssignment>,
    current: BTreeMap<(String, String), AssessmentRecord>,
    audit: Vec<AuditEntry>,
    log_path: Option<PathBuf>,
    evaluation: EvaluationConfig,
}

impl ReviewStore {
    pub fn in_memory(alerts: Vec<Alert>, assignments: Vec<ReviewAssignment>, evaluation: EvaluationConfig) -> Self {
        ReviewStore {
            alert_order: alerts.iter().map(|a| a.alert_id.clone()).collect(),
            alerts: alerts.into_iter().map(|a| (a.alert_id.clone(), a)).collect(),
            assignments: assignments.into_iter().map(|a| (a.reviewer_id.clone(), a)).collect(),
            current: BTreeMap::new(),
            audit: Vec::new(),
            log_path: None,
            evaluation,
        }
    }

    /// Opens a store persisted in `dir` (`audit.jsonl`, `snapshot.json`),
    /// replaying any log entries newer than the snapshot.
    pub fn open(dir: &Path, alerts: Vec<Alert>, assignments: Vec<ReviewAssignment>, evaluation: EvaluationConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut store = Self::in_memory(alerts, assignments, evaluation);
        let log_path = dir.join("audit.jsonl");
        let snapshot_path = dir.join("snapshot.json");
        let mut skip = 0;
        if snapshot_path.exists() {
            let snap: Snapshot = serde_json::from_reader(BufReader::new(File::open(&snapshot_path)?))?;
            for r in snap.current {
                store.current.insert((r.alert_id.clone(), r.reviewer_id.clone()), r);
            }
            skip = snap.audit_len;
        }
        if log_path.exists() {
            for line in BufReader::new(File::open(&log_path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: AuditEntry = serde_json::from_str(&line)?;
                if entry.seq >= skip {
                    store
                        .current
                        .insert((entry.record.alert_id.clone(), entry.record.reviewer_id.clone()), entry.record.clone());
                }
                store.audit.push(entry);
            }
        }
        store.log_path = Some(log_path);
        Ok(store)
    }

    pub fn alert(&self, alert_id: &str) -> Result<&Alert> {
        self.alerts
            .get(alert_id)
            .ok_or_else(|| Error::NotFound(format!("alert {alert_id}")))
    }

    pub fn assignment(&self, reviewer_id: &str) -> Result<&ReviewAssignment> {
        self.assignments
            .get(reviewer_id)
            .ok_or_else(|| Error::NotFound(format!("reviewer {reviewer_id}")))
    }

    pub fn assignments(&self) -> impl Iterator<Item = &ReviewAssignment> {
        self.assignments.values()
    }

    pub fn assessment(&self, alert_id: &str, reviewer_id: &str) -> Option<&AssessmentRecord> {
        self.current.get(&(alert_id.to_string(), reviewer_id.to_string()))
    }

    /// Stores `record`, replacing any earlier one for the same (alert,
    /// reviewer). Every call appends to the audit log.
    pub fn submit(&mut self, record: AssessmentRecord, received_at: Timestamp) -> Result<&AuditEntry> {
        self.alert(&record.alert_id)?;
        let assignment = self.assignment(&record.reviewer_id)?;
        if !assignment.alert_ids.contains(&record.alert_id) {
            return Err(Error::Forbidden(format!(
                "alert {} is not assigned to reviewer {}",
                record.alert_id, record.reviewer_id
            )));
        }
        let entry = AuditEntry {
            seq: self.audit.len() as u64,
            received_at,
            record,
        };
        if let Some(path) = &self.log_path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.current.insert(
            (entry.record.alert_id.clone(), entry.record.reviewer_id.clone()),
            entry.record.clone(),
        );
        self.audit.push(entry);
        Ok(self.audit.last().unwrap())
    }

    pub fn audit_trail(&self, alert_id: &str, reviewer_id: &str) -> Vec<&AuditEntry> {
        self.audit
            .iter()
            .filter(|e| e.record.alert_id == alert_id && e.record.reviewer_id == reviewer_id)
            .collect()
    }

    /// Current assessments, ordered by (alert, reviewer).
    pub fn records(&self) -> Vec<AssessmentRecord> {
        self.current.values().cloned().collect()
    }

    /// Writes the current assessments next to the audit log.
    pub fn snapshot(&self) -> Result<()> {
        let Some(log) = &self.log_path else {
            return Ok(());
        };
        let path = log.with_file_name("snapshot.json");
        let tmp = path.with_extension("json.tmp");
        let snap = Snapshot {
            audit_len: self.audit.len() as u64,
            current: self.records(),
        };
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut w, &snap)?;
        w.flush()?;
        drop(w);
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn alerts(&self) -> Vec<Alert> {
        self.alert_order.iter().map(|id| self.alerts[id].clone()).collect()
    }

    pub fn groups(&self) -> Vec<ReviewGroup> {
        let assignments: Vec<ReviewAssignment> = self.assignments.values().cloned().collect();
        review_groups(&assignments)
    }

    /// Live adjudication and rate tables; identical to the batch evaluation
    /// of [`ReviewStore::records`].
    pub fn stats(&self) -> Result<ReviewStats> {
        let records = self.records();
        let report = evaluate(&self.alerts(), &records, &self.groups(), &self.evaluation)?;
        let expected = self.assignments.values().map(|a| a.alert_ids.len()).sum();
        Ok(ReviewStats {
            progress: ReviewProgress {
                alerts: self.alerts.len(),
                assessments: records.len(),
                expected_assessments: expected,
                adjudicated: report.adjudicated.len(),
            },
            report,
        })
    }
}

pub fn write_assignments<W: Write>(out: W, assignments: &[ReviewAssignment]) -> Result<()> {
    serde_json::to_writer_pretty(out, assignments)?;
    Ok(())
}

pub fn read_assignments<R: std::io::Read>(input: R) -> Result<Vec<ReviewAssignment>> {
    Ok(serde_json::from_reader(input)?)
}
