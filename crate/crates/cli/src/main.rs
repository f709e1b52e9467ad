use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use coda_core::evaluation::{
    evaluate, read_assessments, simulate_reviews, write_agreement_csv, write_assessments, write_binned_csv,
    write_rates_csv, EvaluationConfig, DEFAULT_PERMUTATIONS,
};
use coda_core::features::{build_catalog, standardize, FeatureMatrix, StandardizationStats, DEFAULT_MIN_SUPPORT};
use coda_core::learner::write_model;
use coda_core::pipeline::{
    model_file_name, read_cohort, read_models, read_sidecar, run_pipeline, FeatureSidecar, PipelineConfig,
};
use coda_core::record::{sort_by_admission, PatientRecord, ValidationReport};
use coda_core::review::{assign_reviews, read_assignments, review_groups, write_assignments, DEFAULT_GROUP_SIZE};
use coda_core::scoring::{
    compute_thresholds, generate_alerts, instance_pairs, read_alerts, score_histogram, score_pairs, write_alerts,
    write_histogram_csv, DEFAULT_ALERT_FLOOR, DEFAULT_CAP, DEFAULT_TOP_N,
};
use coda_core::segmentation::{segment_cohort, write_instance_manifest, SegmentationPolicy};
use coda_core::selection::{DEFAULT_K, DEFAULT_MIN_AUC};
use coda_core::synth::{generate_cohort, GeneratorConfig, GroundTruth};
use coda_core::training::{featurize_instances, train_models, validation_mask, write_selection_csv, TrainingConfig};
use coda_cli::{router, ServiceState};

#[derive(Parser)]
#[command(name = "coda", version, about = "Conditional outlier detection and alerting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a JSON-Lines cohort and optionally print a validation report.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        validate: bool,
    },
    /// Cut records into state/action instances and write the instance manifest.
    Segment {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the feature catalog and write the standardized feature matrix.
    Featurize {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Output directory (features.bin, catalog.json, instances.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, select and calibrate one model per action.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Directory written by `featurize`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_AUC)]
        min_auc: f64,
        #[arg(long, default_value_t = 0.25)]
        validation_fraction: f64,
        /// Output directory (models/, selection.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score consecutive instance pairs and emit alerts.
    Alerts {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        top_n: usize,
        #[arg(long, default_value_t = DEFAULT_ALERT_FLOOR)]
        alert_floor: f64,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        /// Output directory (alerts.jsonl, alert_histogram.csv, thresholds.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Split reviewers into groups and distribute alerts across them.
    Assign {
        #[arg(long)]
        alerts: PathBuf,
        /// Number of reviewers, named R01, R02, ...
        #[arg(long, default_value_t = 15, conflicts_with = "reviewer_ids")]
        reviewers: usize,
        /// Explicit comma-separated reviewer ids.
        #[arg(long, value_delimiter = ',')]
        reviewer_ids: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_GROUP_SIZE)]
        group_size: usize,
        #[arg(long, default_value_t = 23)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adjudicate assessments and write the agreement and rate tables.
    Evaluate {
        #[arg(long)]
        alerts: PathBuf,
        #[arg(long)]
        assignments: PathBuf,
        /// Collected assessments (JSON-Lines).
        #[arg(long, required_unless_present = "truth")]
        assessments: Option<PathBuf>,
        /// Ground-truth CSV to simulate reviewers from instead.
        #[arg(long, conflicts_with = "assessments")]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
        permutations: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic cohort with injected anomalous actions.
    Synth {
        /// Generator settings (TOML); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        patients: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        injection_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run every stage from a pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; defaults to `paths.out` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the review API over a finished run directory.
    Serve {
        #[arg(long)]
        run: PathBuf,
        /// Pipeline config supplying the `[service]` table.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, env = "CODA_TOKEN", hide_env_values = true)]
        token: Option<String>,
        #[arg(long)]
        horizon_hours: Option<i64>,
    },
}

#[derive(Args)]
struct CohortArgs {
    #[arg(long)]
    input: PathBuf,
    /// Cut time and window, `HH:MM/<hours>h`.
    #[arg(long, default_value = "08:00/24h")]
    policy: SegmentationPolicy,
    #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
    min_support: usize,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest { input, validate } => ingest(&input, validate),
        Command::Segment { cohort, out } => segment(&cohort, &out),
        Command::Featurize { cohort, out } => featurize(&cohort, &out),
        Command::Train {
            input,
            features,
            k,
            min_auc,
            validation_fraction,
            out,
        } => {
            let config = TrainingConfig {
                k,
                min_auc,
                validation_fraction,
                ..TrainingConfig::default()
            };
            train(&input, &features, &config, &out)
        }
        Command::Alerts {
            input,
            features,
            models,
            top_n,
            alert_floor,
            cap,
            out,
        } => alerts(&input, &features, &models, (top_n, alert_floor, cap), &out),
        Command::Assign {
            alerts,
            reviewers,
            reviewer_ids,
            group_size,
            seed,
            out,
        } => {
            let ids = if reviewer_ids.is_empty() {
                (1..=reviewers).map(|i| format!("R{i:02}")).collect()
            } else {
                reviewer_ids
            };
            let alerts = load_alerts(&alerts)?;
            let assignments = assign_reviews(&alerts, &ids, group_size, seed)?;
            create(&out, |w| Ok(write_assignments(w, &assignments)?))?;
            info!("assigned {} alerts to {} reviewers", alerts.len(), ids.len());
            Ok(())
        }
        Command::Evaluate {
            alerts,
            assignments,
            assessments,
            truth,
            noise,
            permutations,
            seed,
            out,
        } => {
            let config = EvaluationConfig {
                permutations,
                seed,
                ..EvaluationConfig::default()
            };
            evaluate_cmd(&alerts, &assignments, assessments.as_deref(), truth.as_deref(), noise, &config, &out)
        }
        Command::Synth {
            config,
            patients,
            seed,
            injection_rate,
            out,
            truth,
        } => {
            let mut gen = match config {
                Some(p) => toml::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => GeneratorConfig::default(),
            };
            gen.patients = patients.unwrap_or(gen.patients);
            gen.seed = seed.unwrap_or(gen.seed);
            gen.injection_rate = injection_rate.unwrap_or(gen.injection_rate);
            synth(&gen, &out, &truth)
        }
        Command::Run { config, out } => {
            let config = PipelineConfig::load(&config)?;
            let Some(out) = out.or_else(|| config.paths.out.clone()) else {
                bail!("no output directory: pass --out or set paths.out");
            };
            let manifest = run_pipeline(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&manifest.counts)?);
            Ok(())
        }
        Command::Serve {
            run,
            config,
            port,
            token,
            horizon_hours,
        } => {
            let service = match config {
                Some(p) => PipelineConfig::load(&p)?.service,
                None => Default::default(),
            };
            let token = token.unwrap_or(service.token);
            if token.is_empty() {
                bail!("no bearer token: pass --token, set CODA_TOKEN or configure [service].token");
            }
            let state = ServiceState::from_run_dir(&run, token, horizon_hours.unwrap_or(service.horizon_hours))?;
            serve(Arc::new(state), port.unwrap_or(service.port))
        }
    }
}

fn create(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn create_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    create(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn load_alerts(path: &Path) -> Result<Vec<coda_core::scoring::Alert>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_alerts(BufReader::new(f))?)
}

fn ingest(input: &Path, validate: bool) -> Result<()> {
    let records = read_cohort(input)?;
    if validate {
        println!("{}", serde_json::to_string_pretty(&ValidationReport::from_records(&records))?);
    } else {
        println!("{} records", records.len());
    }
    Ok(())
}

/// Cohort in admission order, the order `run` trains in.
fn read_ordered(input: &Path) -> Result<Vec<PatientRecord>> {
    let mut records = read_cohort(input)?;
    sort_by_admission(&mut records);
    Ok(records)
}

fn segment(args: &CohortArgs, out: &Path) -> Result<()> {
    let records = read_ordered(&args.input)?;
    let catalog = build_catalog(&records, args.min_support)?;
    let instances = segment_cohort(&records, &catalog.action_catalog(), &args.policy);
    create(out, |w| Ok(write_instance_manifest(w, &instances)?))?;
    info!("{} instances from {} records", instances.len(), records.len());
    Ok(())
}

fn featurize(args: &CohortArgs, out: &Path) -> Result<()> {
    let records = read_ordered(&args.input)?;
    let catalog = build_catalog(&records, args.min_support)?;
    let instances = segment_cohort(&records, &catalog.action_catalog(), &args.policy);
    let vectors = featurize_instances(&records, &instances, &catalog)?;
    let stats = StandardizationStats::fit(&vectors);
    let x = standardize(&vectors, &stats);
    create(&out.join("instances.csv"), |w| Ok(write_instance_manifest(w, &instances)?))?;
    create(&out.join("features.bin"), |w| Ok(x.write_to(w)?))?;
    let sidecar = FeatureSidecar {
        segmentation: args.policy,
        catalog,
        stats,
    };
    create_json(&out.join("catalog.json"), &sidecar)?;
    info!("{} x {} feature matrix", x.rows(), x.cols());
    Ok(())
}

/// Records, sidecar, re-derived instances and the stored matrix of a
/// `featurize` output directory.
struct Featurized {
    records: Vec<PatientRecord>,
    sidecar: FeatureSidecar,
    instances: Vec<coda_core::segmentation::StateActionInstance>,
    x: FeatureMatrix,
}

fn load_featurized(input: &Path, dir: &Path) -> Result<Featurized> {
    let records = read_ordered(input)?;
    let sidecar = read_sidecar(&dir.join("catalog.json"))?;
    let instances = segment_cohort(&records, &sidecar.catalog.action_catalog(), &sidecar.segmentation);
    let f = File::open(dir.join("features.bin")).context("opening features.bin")?;
    let x = FeatureMatrix::read_from(BufReader::new(f))?;
    if x.rows() != instances.len() || x.cols() != sidecar.catalog.dimension() {
        bail!(
            "features.bin is {}x{} but the cohort gives {}x{}; was it featurized from a different cohort?",
            x.rows(),
            x.cols(),
            instances.len(),
            sidecar.catalog.dimension()
        );
    }
    Ok(Featurized {
        records,
        sidecar,
        instances,
        x,
    })
}

fn train(input: &Path, features: &Path, config: &TrainingConfig, out: &Path) -> Result<()> {
    let f = load_featurized(input, features)?;
    let actions = f.sidecar.catalog.action_catalog();
    let is_val = validation_mask(&f.records, &f.instances, config.validation_fraction);
    let trained = train_models(&f.sidecar.catalog, actions.actions(), &f.instances, &f.x, &is_val, config)?;
    create(&out.join("selection.csv"), |w| Ok(write_selection_csv(w, &trained.selection)?))?;
    for m in &trained.models {
        create(&out.join(model_file_name(&m.action.code)), |w| Ok(write_model(w, m)?))?;
    }
    info!("{} of {} actions retained", trained.models.len(), actions.len());
    Ok(())
}

fn alerts(input: &Path, features: &Path, models: &Path, (top_n, floor, cap): (usize, f64, usize), out: &Path) -> Result<()> {
    let f = load_featurized(input, features)?;
    let models = read_models(&models.join("models"))?;
    let actions = f.sidecar.catalog.action_catalog();
    let pairs = instance_pairs(&f.instances, f.sidecar.segmentation.window_length);
    let scored = score_pairs(&f.instances, &f.x, &pairs, &models, &actions)?;
    let thresholds = compute_thresholds(&scored, top_n, floor, cap)?;
    let alerts = generate_alerts(&scored, &thresholds);
    let scores: Vec<f64> = alerts.iter().map(|a| a.alert_score).collect();
    create_json(&out.join("thresholds.json"), &thresholds)?;
    create(&out.join("alerts.jsonl"), |w| Ok(write_alerts(w, &alerts)?))?;
    create(&out.join("alert_histogram.csv"), |w| {
        Ok(write_histogram_csv(w, &score_histogram(&scores))?)
    })?;
    info!("{} alerts from {} scored pairs", alerts.len(), scored.len());
    Ok(())
}

fn evaluate_cmd(
    alerts: &Path,
    assignments: &Path,
    assessments: Option<&Path>,
    truth: Option<&Path>,
    noise: f64,
    config: &EvaluationConfig,
    out: &Path,
) -> Result<()> {
    let alerts = load_alerts(alerts)?;
    let assignments = read_assignments(File::open(assignments).context("opening assignments")?)?;
    let groups = review_groups(&assignments);
    let records = match (assessments, truth) {
        (Some(p), _) => read_assessments(BufReader::new(File::open(p).context("opening assessments")?))?,
        (None, Some(p)) => {
            let truth = GroundTruth::read_csv(File::open(p).context("opening ground truth")?)?;
            let injected = truth.injected_index();
            let labels: Vec<(String, bool)> = alerts
                .iter()
                .map(|a| {
                    let flipped = injected.get(&(a.patient_id.as_str(), a.prev_time, a.action.as_str()));
                    (a.alert_id.clone(), flipped.copied().unwrap_or(false))
                })
                .collect();
            let mut reviewers = std::collections::BTreeMap::new();
            for g in &groups {
                for id in &g.alert_ids {
                    reviewers.insert(id.as_str(), g.reviewers.clone());
                }
            }
            let who = alerts
                .iter()
                .map(|a| {
                    reviewers
                        .get(a.alert_id.as_str())
                        .cloned()
                        .with_context(|| format!("alert {} has no review group", a.alert_id))
                })
                .collect::<Result<Vec<_>>>()?;
            let simulated = simulate_reviews(&labels, &who, noise, config.seed)?;
            create(&out.join("assessments.jsonl"), |w| Ok(write_assessments(w, &simulated)?))?;
            simulated
        }
        (None, None) => bail!("either --assessments or --truth is required"),
    };
    let report = evaluate(&alerts, &records, &groups, config)?;
    create(&out.join("table_agreement.csv"), |w| Ok(write_agreement_csv(w, &report.agreement)?))?;
    create(&out.join("table_rates.csv"), |w| Ok(write_rates_csv(w, &report.rates)?))?;
    create(&out.join("table_rates_strong.csv"), |w| Ok(write_rates_csv(w, &report.strong_rates)?))?;
    create(&out.join("rates_by_score.csv"), |w| {
        Ok(write_binned_csv(w, &report.binned_item1, &report.binned_item2)?)
    })?;
    create_json(&out.join("evaluation.json"), &report)?;
    info!("{} adjudicated, {} pending", report.adjudicated.len(), report.pending.len());
    Ok(())
}

fn synth(config: &GeneratorConfig, out: &Path, truth_path: &Path) -> Result<()> {
    let (records, truth) = generate_cohort(config)?;
    create(out, |w| Ok(coda_core::record::write_records(w, &records)?))?;
    create(truth_path, |w| Ok(truth.write_csv(w)?))?;
    info!("{} patients, {} injected anomalies", records.len(), truth.injected_count());
    Ok(())
}

fn serve(state: Arc<ServiceState>, port: u16) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr = SocketAddr::from(([0, 0, 0, 0], port));
        let listener = tokio::net::TcpListener::bind(addr).await?;
        info!("review service listening on {addr}");
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(shutdown_signal())
            .await?;
        state.snapshot()?;
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    info!("shutting down");
}
