//! End-to-end runs: ingest, segment, featurize, train, score, alert and
//! evaluate, with every artifact digested into a run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{
    alert_ordering_auc, binned_rates, evaluate, simulate_reviews, write_agreement_csv, write_assessments,
    write_binned_csv, write_rates_csv, BinnedRates, EvaluationConfig, OrderingAuc,
};
use crate::features::{build_catalog, standardize, FeatureCatalog, FeatureMatrix, StandardizationStats, DEFAULT_MIN_SUPPORT};
use crate::learner::{write_model, CalibratedActionModel};
use crate::record::{parse_records, split_cohort, PatientRecord};
use crate::review::{assign_reviews, review_groups, write_assignments, DEFAULT_GROUP_SIZE};
use crate::scoring::{
    compute_thresholds, generate_alerts, instance_pairs, score_histogram, score_pairs, write_alerts,
    write_histogram_csv, ScoredPair, ThresholdPolicy, DEFAULT_ALERT_FLOOR, DEFAULT_CAP, DEFAULT_TOP_N,
};
use crate::segmentation::{segment_cohort, write_instance_manifest, SegmentationPolicy, StateActionInstance};
use crate::synth::GroundTruth;
use crate::training::{featurize_instances, train_models, validation_mask, write_selection_csv, TrainingConfig};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// JSON-Lines patient records.
    pub cohort: PathBuf,
    /// Optional ground-truth CSV from the synthetic generator; enables the
    /// detection report and simulated reviews.
    pub ground_truth: Option<PathBuf>,
    /// Output directory for `run`. Not part of the manifest.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            cohort: PathBuf::from("cohort.jsonl"),
            ground_truth: None,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of patients (earliest admissions) used to build models. At 1.0
    /// the models are trained and applied on the whole cohort.
    pub train_fraction: f64,
    pub min_support: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 1.0,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub top_n: usize,
    pub alert_floor: f64,
    pub cap: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            top_n: DEFAULT_TOP_N,
            alert_floor: DEFAULT_ALERT_FLOOR,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    pub reviewers: usize,
    pub group_size: usize,
    /// Symmetric label noise of simulated reviewers.
    pub label_noise: f64,
    pub seed: u64,
    pub permutations: usize,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            reviewers: 15,
            group_size: DEFAULT_GROUP_SIZE,
            label_noise: 0.1,
            seed: 23,
            permutations: 10_000,
        }
    }
}

impl ReviewConfig {
    pub fn reviewer_ids(&self) -> Vec<String> {
        (1..=self.reviewers).map(|i| format!("R{i:02}")).collect()
    }

    pub fn evaluation(&self) -> EvaluationConfig {
        EvaluationConfig {
            reviewers_per_alert: self.group_size,
            permutations: self.permutations,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    /// Bearer token; `CODA_TOKEN` in the environment takes precedence.
    pub token: String,
    pub horizon_hours: i64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 8080,
            token: String::new(),
            horizon_hours: 72,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub segmentation: SegmentationPolicy,
    pub split: SplitConfig,
    pub training: TrainingConfig,
    pub thresholds: ThresholdConfig,
    pub review: ReviewConfig,
    #[serde(skip_serializing)]
    pub service: ServiceConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML config; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
            _ => e.into(),
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.paths.cohort);
        if let Some(p) = config.paths.ground_truth.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.paths.out.as_mut() {
            resolve(p);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        let s = &self.split;
        if !(0.0 < s.train_fraction && s.train_fraction <= 1.0) {
            return Err(Error::Config(format!("train_fraction {} is outside (0, 1]", s.train_fraction)));
        }
        if s.min_support == 0 {
            return Err(Error::Config("min_support must be at least 1".into()));
        }
        let t = &self.thresholds;
        if t.top_n == 0 || t.cap == 0 || !(0.0..=1.0).contains(&t.alert_floor) {
            return Err(Error::Config("thresholds need top_n >= 1, cap >= 1 and alert_floor in [0, 1]".into()));
        }
        let r = &self.review;
        if r.group_size == 0 || r.group_size % 2 == 0 {
            return Err(Error::Config(format!("review group_size {} must be odd", r.group_size)));
        }
        if r.reviewers < r.group_size || r.reviewers % r.group_size != 0 {
            return Err(Error::Config(format!(
                "{} reviewers do not divide into groups of {}",
                r.reviewers, r.group_size
            )));
        }
        if !(0.0..0.5).contains(&r.label_noise) {
            return Err(Error::Config(format!("label_noise {} is outside [0, 0.5)", r.label_noise)));
        }
        if self.service.horizon_hours <= 0 {
            return Err(Error::Config("service horizon_hours must be positive".into()));
        }
        Ok(())
    }
}

/// Catalog sidecar written next to the binary feature matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub segmentation: SegmentationPolicy,
    pub catalog: FeatureCatalog,
    pub stats: StandardizationStats,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub patients: usize,
    pub train_patients: usize,
    pub scored_patients: usize,
    pub train_instances: usize,
    pub scored_instances: usize,
    pub actions: usize,
    pub features: usize,
    pub models_trained: usize,
    pub models_retained: usize,
    pub pairs: usize,
    pub candidates: usize,
    pub alerts: usize,
    pub assessments: usize,
}

/// Alert-score ordering of injected flips among all alert-eligible candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub candidates: usize,
    pub injected: usize,
    pub ordering: OrderingAuc,
    pub binned: BinnedRates,
    pub alerts_injected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub crate_version: String,
    pub formats: BTreeMap<String, u32>,
    pub config: PipelineConfig,
    pub counts: RunCounts,
    /// sha256 of each artifact, keyed by path relative to the run directory.
    pub digests: BTreeMap<String, String>,
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn digest_dir(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(key, sha256_file(&path)?);
            }
        }
    }
    Ok(out)
}

pub fn read_cohort(path: &Path) -> Result<Vec<PatientRecord>> {
    let f = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => e.into(),
    })?;
    parse_records(BufReader::new(f))
}

/// File name for an action's model file.
pub fn model_file_name(code: &str) -> String {
    let safe: String = code
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("models/{safe}.cdam")
}

/// Runs every stage into `out`. Work happens in a sibling `.partial`
/// directory that replaces `out` only on success; on failure it is removed
/// and the error names the failing stage.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    for p in std::iter::once(&config.paths.cohort).chain(config.paths.ground_truth.as_ref()) {
        if !p.exists() {
            return Err(Error::MissingPath(p.clone()));
        }
    }
    let mut partial = out.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    if partial.exists() {
        fs::remove_dir_all(&partial)?;
    }
    fs::create_dir_all(&partial)?;
    match run_stages(config, &partial) {
        Ok(manifest) => {
            if out.exists() {
                fs::remove_dir_all(out)?;
            }
            fs::rename(&partial, out)?;
            Ok(manifest)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&partial);
            Err(e)
        }
    }
}

struct Featurized {
    instances: Vec<StateActionInstance>,
    x: FeatureMatrix,
}

fn run_stages(config: &PipelineConfig, dir: &Path) -> Result<RunManifest> {
    let mut counts = RunCounts::default();

    let records = read_cohort(&config.paths.cohort).map_err(Error::stage("ingest"))?;
    counts.patients = records.len();
    let (train, scored) = if config.split.train_fraction >= 1.0 {
        let mut all = records.clone();
        crate::record::sort_by_admission(&mut all);
        (all.clone(), all)
    } else {
        split_cohort(records.clone(), config.split.train_fraction).map_err(Error::stage("ingest"))?
    };
    counts.train_patients = train.len();
    counts.scored_patients = scored.len();

    let catalog = build_catalog(&train, config.split.min_support).map_err(Error::stage("featurize"))?;
    let actions = catalog.action_catalog();
    counts.actions = actions.len();
    counts.features = catalog.dimension();

    let policy = &config.segmentation;
    let train_instances = segment_cohort(&train, &actions, policy);
    let scored_instances = segment_cohort(&scored, &actions, policy);
    counts.train_instances = train_instances.len();
    counts.scored_instances = scored_instances.len();
    write_file(dir, "instances_train.csv", |w| write_instance_manifest(w, &train_instances))
        .map_err(Error::stage("segment"))?;
    write_file(dir, "instances_scored.csv", |w| write_instance_manifest(w, &scored_instances))
        .map_err(Error::stage("segment"))?;

    let featurize = || -> Result<(StandardizationStats, Featurized, Featurized)> {
        let train_vectors = featurize_instances(&train, &train_instances, &catalog)?;
        let stats = StandardizationStats::fit(&train_vectors);
        let x_train = standardize(&train_vectors, &stats);
        let x_scored = standardize(&featurize_instances(&scored, &scored_instances, &catalog)?, &stats);
        write_file(dir, "features_train.bin", |w| x_train.write_to(w))?;
        write_file(dir, "features_scored.bin", |w| x_scored.write_to(w))?;
        write_json(
            dir,
            "catalog.json",
            &FeatureSidecar {
                segmentation: *policy,
                catalog: catalog.clone(),
                stats: stats.clone(),
            },
        )?;
        Ok((
            stats,
            Featurized {
                instances: train_instances.clone(),
                x: x_train,
            },
            Featurized {
                instances: scored_instances.clone(),
                x: x_scored,
            },
        ))
    };
    let (_stats, train_f, scored_f) = featurize().map_err(Error::stage("featurize"))?;

    let mut train_stage = || -> Result<Vec<CalibratedActionModel>> {
        let is_val = validation_mask(&train, &train_f.instances, config.training.validation_fraction);
        let out = train_models(&catalog, actions.actions(), &train_f.instances, &train_f.x, &is_val, &config.training)?;
        write_file(dir, "selection.csv", |w| write_selection_csv(w, &out.selection))?;
        for m in &out.models {
            write_file(dir, &model_file_name(&m.action.code), |w| write_model(w, m))?;
        }
        counts.models_trained = out
            .selection
            .iter()
            .filter(|r| matches!(r.outcome, crate::training::SelectionOutcome::Trained { .. }))
            .count();
        Ok(out.models)
    };
    let models = train_stage().map_err(Error::stage("train"))?;
    counts.models_retained = models.len();

    let score_stage = || -> Result<(Vec<ScoredPair>, ThresholdPolicy, Vec<crate::scoring::Alert>)> {
        let pairs = instance_pairs(&scored_f.instances, policy.window_length);
        let scored_pairs = score_pairs(&scored_f.instances, &scored_f.x, &pairs, &models, &actions)?;
        let t = &config.thresholds;
        let thresholds = compute_thresholds(&scored_pairs, t.top_n, t.alert_floor, t.cap)?;
        let alerts = generate_alerts(&scored_pairs, &thresholds);
        write_json(dir, "thresholds.json", &thresholds)?;
        write_file(dir, "alerts.jsonl", |w| write_alerts(w, &alerts))?;
        let scores: Vec<f64> = alerts.iter().map(|a| a.alert_score).collect();
        write_file(dir, "alert_histogram.csv", |w| write_histogram_csv(w, &score_histogram(&scores)))?;
        Ok((scored_pairs, thresholds, alerts))
    };
    let (scored_pairs, _thresholds, alerts) = score_stage().map_err(Error::stage("alerts"))?;
    counts.pairs = instance_pairs(&scored_f.instances, policy.window_length).len();
    counts.candidates = scored_pairs.iter().filter(|p| p.alert_type().is_some()).count();
    counts.alerts = alerts.len();

    let evaluate_stage = || -> Result<usize> {
        let r = &config.review;
        let assignments = if alerts.is_empty() {
            Vec::new()
        } else {
            assign_reviews(&alerts, &r.reviewer_ids(), r.group_size, r.seed)?
        };
        write_file(dir, "assignments.json", |w| write_assignments(w, &assignments))?;
        let Some(gt_path) = &config.paths.ground_truth else {
            return Ok(0);
        };
        let truth = GroundTruth::read_csv(File::open(gt_path)?)?;
        let injected = truth.injected_index();
        let label = |patient: &str, t, action: &str| injected.get(&(patient, t, action)).copied().unwrap_or(false);

        let candidates: Vec<&ScoredPair> = scored_pairs.iter().filter(|p| p.alert_type().is_some()).collect();
        let cand_scores: Vec<f64> = candidates.iter().map(|p| p.alert_score()).collect();
        let cand_labels: Vec<bool> = candidates.iter().map(|p| label(&p.patient_id, p.prev_time, &p.action)).collect();
        let alert_truth: Vec<(String, bool)> = alerts
            .iter()
            .map(|a| (a.alert_id.clone(), label(&a.patient_id, a.prev_time, &a.action)))
            .collect();
        if cand_labels.iter().any(|&l| l) && cand_labels.iter().any(|&l| !l) {
            let detection = DetectionReport {
                candidates: candidates.len(),
                injected: cand_labels.iter().filter(|&&l| l).count(),
                ordering: alert_ordering_auc(&cand_scores, &cand_labels, r.permutations, r.seed)?,
                binned: binned_rates(&cand_scores, &cand_labels)?,
                alerts_injected: alert_truth.iter().filter(|t| t.1).count(),
            };
            write_json(dir, "detection.json", &detection)?;
        }
        if assignments.is_empty() {
            return Ok(0);
        }

        let groups = review_groups(&assignments);
        let reviewers_of: BTreeMap<&str, Vec<String>> = groups
            .iter()
            .flat_map(|g| g.alert_ids.iter().map(move |id| (id.as_str(), g.reviewers.clone())))
            .collect();
        let who: Vec<Vec<String>> = alerts.iter().map(|a| reviewers_of[a.alert_id.as_str()].clone()).collect();
        let assessments = simulate_reviews(&alert_truth, &who, r.label_noise, r.seed)?;
        write_file(dir, "assessments.jsonl", |w| write_assessments(w, &assessments))?;
        let report = evaluate(&alerts, &assessments, &groups, &r.evaluation())?;
        write_file(dir, "table_agreement.csv", |w| write_agreement_csv(w, &report.agreement))?;
        write_file(dir, "table_rates.csv", |w| write_rates_csv(w, &report.rates))?;
        write_file(dir, "table_rates_strong.csv", |w| write_rates_csv(w, &report.strong_rates))?;
        write_file(dir, "rates_by_score.csv", |w| {
            write_binned_csv(w, &report.binned_item1, &report.binned_item2)
        })?;
        write_json(dir, "evaluation.json", &report)?;
        Ok(assessments.len())
    };
    counts.assessments = evaluate_stage().map_err(Error::stage("evaluate"))?;

    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        formats: BTreeMap::from([
            ("feature_matrix".to_string(), crate::features::FEATURE_MATRIX_VERSION),
            ("model".to_string(), crate::learner::MODEL_FORMAT_VERSION as u32),
        ]),
        config: config.clone(),
        counts,
        digests: digest_dir(dir)?,
    };
    write_json(dir, "manifest.json", &manifest)?;
    Ok(manifest)
}

/// Reads every `*.cdam` model in `dir`, ordered by file name.
pub fn read_models(dir: &Path) -> Result<Vec<CalibratedActionModel>> {
    if !dir.is_dir() {
        return Err(Error::MissingPath(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "cdam"));
    paths.sort();
    paths
        .iter()
        .map(|p| crate::learner::read_model(BufReader::new(File::open(p)?)))
        .collect()
}

pub fn read_sidecar(path: &Path) -> Result<FeatureSidecar> {
    let f = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => e.into(),
    })?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::write_records;
    use crate::synth::{generate_cohort, GeneratorConfig};

    fn fixture(dir: &Path, patients: usize) -> PipelineConfig {
        let (records, truth) = generate_cohort(&GeneratorConfig {
            patients,
            injection_rate: 0.02,
            seed: 5,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let cohort = dir.join("cohort.jsonl");
        write_records(File::create(&cohort).unwrap(), &records).unwrap();
        let gt = dir.join("truth.csv");
        truth.write_csv(File::create(&gt).unwrap()).unwrap();
        let mut config = PipelineConfig::default();
        config.paths.cohort = cohort;
        config.paths.ground_truth = Some(gt);
        config.training.learner.epochs = 8;
        config.training.k = 5;
        config.review.permutations = 200;
        config
    }

    #[test]
    fn missing_cohort_is_reported_before_any_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = PipelineConfig::default();
        config.paths.cohort = dir.path().join("nope.jsonl");
        let out = dir.path().join("run");
        let err = run_pipeline(&config, &out).unwrap_err();
        assert!(matches!(&err, Error::MissingPath(p) if p.ends_with("nope.jsonl")), "{err}");
        assert!(!out.exists());
        assert!(!dir.path().join("run.partial").exists());
    }

    #[test]
    fn failing_stage_is_named_and_partial_output_removed() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fixture(dir.path(), 30);
        config.split.min_support = 10_000;
        let out = dir.path().join("run");
        let err = run_pipeline(&config, &out).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "featurize", .. }), "{err}");
        assert!(!out.exists());
        assert!(!dir.path().join("run.partial").exists());
    }

    #[test]
    fn run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture(dir.path(), 60);
        let out = dir.path().join("run");
        let m = run_pipeline(&config, &out).unwrap();
        for f in [
            "catalog.json",
            "features_train.bin",
            "features_scored.bin",
            "instances_train.csv",
            "selection.csv",
            "thresholds.json",
            "alerts.jsonl",
            "alert_histogram.csv",
            "assignments.json",
            "assessments.jsonl",
            "table_agreement.csv",
            "table_rates.csv",
            "table_rates_strong.csv",
            "rates_by_score.csv",
            "detection.json",
            "evaluation.json",
        ] {
            assert!(m.digests.contains_key(f), "missing {f}");
            assert_eq!(sha256_file(&out.join(f)).unwrap(), m.digests[f]);
        }
        assert!(m.digests.keys().any(|k| k.starts_with("models/")));
        assert_eq!(read_manifest(&out.join("manifest.json")).unwrap(), m);
        assert!(m.counts.alerts <= m.counts.models_retained * config.thresholds.cap);
        assert_eq!(m.counts.assessments, m.counts.alerts * 3);
    }

    #[test]
    fn config_toml_round_trip_and_validation() {
        let mut config = PipelineConfig::default();
        config.paths.ground_truth = Some("truth.csv".into());
        let text = config.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), config);
        assert!(PipelineConfig::from_toml("[review]\nreviewers = 7\n").is_err());
        assert!(PipelineConfig::from_toml("[bogus]\nx = 1\n").is_err());
        let parsed = PipelineConfig::from_toml("segmentation = \"07:00/12h\"\n[thresholds]\ncap = 5\n").unwrap();
        assert_eq!(parsed.thresholds.cap, 5);
        assert_eq!(parsed.segmentation.to_string(), "07:00/12h");
    }
}
