use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_coda");

fn coda(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("CODA_TOKEN")
        .output()
        .expect("spawn coda")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = coda(dir, args);
    assert!(
        out.status.success(),
        "coda {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
segmentation = "08:00/24h"

[paths]
cohort = "cohort.jsonl"
ground_truth = "truth.csv"

[review]
permutations = 500
"#;

/// Synthetic cohort plus config in a fresh directory.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth", "--patients", "60", "--seed", "11", "--injection-rate", "0.02", "--out", "cohort.jsonl", "--truth",
            "truth.csv",
        ],
    );
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    let path = path.as_ref();
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Asserts two files are byte-identical, reporting the first differing line.
fn assert_same_file(a: &Path, b: &Path) {
    let (x, y) = (read(a), read(b));
    if x != y {
        let (x, y) = (String::from_utf8_lossy(&x), String::from_utf8_lossy(&y));
        let (n, (l, r)) = x
            .lines()
            .zip(y.lines())
            .enumerate()
            .find(|(_, (l, r))| l != r)
            .unwrap_or((x.lines().count().min(y.lines().count()), ("<end>", "<end>")));
        panic!("{} and {} differ at line {}:\n  {l}\n  {r}", a.display(), b.display(), n + 1);
    }
}

#[test]
fn run_twice_gives_identical_manifests() {
    let ws = workspace();
    let d = ws.path();
    ok(d, &["run", "--config", "run.toml", "--out", "a"]);
    ok(d, &["run", "--config", "run.toml", "--out", "b"]);
    assert_same_file(&d.join("a/manifest.json"), &d.join("b/manifest.json"));
    let manifest: serde_json::Value = serde_json::from_slice(&read(d.join("a/manifest.json"))).unwrap();
    let digests = manifest["digests"].as_object().unwrap();
    assert!(digests.contains_key("alerts.jsonl"));
    for name in digests.keys() {
        assert_same_file(&d.join("a").join(name), &d.join("b").join(name));
    }
    assert!(!d.join("a.partial").exists());
}

#[test]
fn stage_verbs_reproduce_the_run_artifacts() {
    let ws = workspace();
    let d = ws.path();
    ok(d, &["run", "--config", "run.toml", "--out", "run"]);
    ok(d, &["segment", "--input", "cohort.jsonl", "--out", "stages/instances.csv"]);
    ok(d, &["featurize", "--input", "cohort.jsonl", "--out", "stages/features"]);
    ok(d, &["train", "--input", "cohort.jsonl", "--features", "stages/features", "--out", "stages/train"]);
    ok(
        d,
        &[
            "alerts", "--input", "cohort.jsonl", "--features", "stages/features", "--models", "stages/train", "--out",
            "stages/alerts",
        ],
    );
    ok(d, &["assign", "--alerts", "stages/alerts/alerts.jsonl", "--out", "stages/assignments.json"]);

    let same = [
        ("stages/instances.csv", "run/instances_scored.csv"),
        ("stages/features/features.bin", "run/features_scored.bin"),
        ("stages/train/selection.csv", "run/selection.csv"),
        ("stages/alerts/alerts.jsonl", "run/alerts.jsonl"),
        ("stages/alerts/thresholds.json", "run/thresholds.json"),
        ("stages/alerts/alert_histogram.csv", "run/alert_histogram.csv"),
        ("stages/assignments.json", "run/assignments.json"),
    ];
    for (a, b) in same {
        assert_same_file(&d.join(a), &d.join(b));
    }
    for entry in fs::read_dir(d.join("run/models")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_same_file(&d.join("run/models").join(&name), &d.join("stages/train/models").join(&name));
    }
}

#[test]
fn evaluate_over_run_assessments_matches_the_run_tables() {
    let ws = workspace();
    let d = ws.path();
    ok(d, &["run", "--config", "run.toml", "--out", "run"]);
    ok(
        d,
        &[
            "evaluate", "--alerts", "run/alerts.jsonl", "--assignments", "run/assignments.json", "--assessments",
            "run/assessments.jsonl", "--permutations", "500", "--seed", "23", "--out", "eval",
        ],
    );
    for name in ["table_agreement.csv", "table_rates.csv", "table_rates_strong.csv", "rates_by_score.csv", "evaluation.json"] {
        assert_same_file(&d.join("eval").join(name), &d.join("run").join(name));
    }

    // Simulating from the ground truth with the run's seed and noise gives
    // the same assessments the run stored.
    ok(
        d,
        &[
            "evaluate", "--alerts", "run/alerts.jsonl", "--assignments", "run/assignments.json", "--truth", "truth.csv",
            "--noise", "0.1", "--permutations", "500", "--seed", "23", "--out", "sim",
        ],
    );
    assert_same_file(&d.join("sim/assessments.jsonl"), &d.join("run/assessments.jsonl"));
}

#[test]
fn missing_cohort_fails_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "[paths]\ncohort = \"nowhere.jsonl\"\n").unwrap();
    let out = coda(d, &["run", "--config", "run.toml", "--out", "run"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere.jsonl"), "{stderr}");
    assert!(!d.join("run").exists() && !d.join("run.partial").exists());
}

#[test]
fn run_takes_the_output_directory_from_the_config() {
    let ws = workspace();
    let d = ws.path();
    fs::write(d.join("out.toml"), format!("{CONFIG}\n").replace("[paths]", "[paths]\nout = \"from-config\"")).unwrap();
    let counts: serde_json::Value = serde_json::from_str(&ok(d, &["run", "--config", "out.toml"])).unwrap();
    assert_eq!(counts["patients"], 60);
    assert!(d.join("from-config/manifest.json").exists());

    fs::write(d.join("bare.toml"), CONFIG).unwrap();
    assert!(!coda(d, &["run", "--config", "bare.toml"]).status.success());
}

#[test]
fn ingest_reports_the_cohort_and_rejects_bad_lines() {
    let ws = workspace();
    let d = ws.path();
    let report: serde_json::Value = serde_json::from_str(&ok(d, &["ingest", "--input", "cohort.jsonl", "--validate"])).unwrap();
    assert_eq!(report["records"], 60);
    assert!(report["lab_events"].as_u64().unwrap() > 0);

    let mut text = fs::read_to_string(d.join("cohort.jsonl")).unwrap();
    text.push_str("{\"patient_id\": 7}\n");
    fs::write(d.join("bad.jsonl"), text).unwrap();
    let out = coda(d, &["ingest", "--input", "bad.jsonl", "--validate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 61"));
}

#[test]
fn synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (out, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        ok(
            d,
            &["synth", "--patients", "20", "--seed", seed, "--out", &format!("{out}.jsonl"), "--truth", &format!("{out}.csv")],
        );
    }
    assert_eq!(read(d.join("a.jsonl")), read(d.join("b.jsonl")));
    assert_eq!(read(d.join("a.csv")), read(d.join("b.csv")));
    assert_ne!(read(d.join("a.jsonl")), read(d.join("c.jsonl")));
}

#[test]
fn assign_rejects_reviewers_that_do_not_divide_into_groups() {
    let ws = workspace();
    let d = ws.path();
    ok(d, &["run", "--config", "run.toml", "--out", "run"]);
    let out = coda(d, &["assign", "--alerts", "run/alerts.jsonl", "--reviewers", "14", "--out", "x.json"]);
    assert!(!out.status.success());
    ok(d, &["assign", "--alerts", "run/alerts.jsonl", "--reviewer-ids", "ana,bo,cy", "--out", "three.json"]);
    let assignments: serde_json::Value = serde_json::from_slice(&read(d.join("three.json"))).unwrap();
    let alerts = fs::read_to_string(d.join("run/alerts.jsonl")).unwrap().lines().count();
    for a in assignments.as_array().unwrap() {
        assert_eq!(a["alert_ids"].as_array().unwrap().len(), alerts);
    }
}

#[test]
fn serve_requires_a_token() {
    let dir = tempfile::tempdir().unwrap();
    let out = coda(dir.path(), &["serve", "--run", "missing"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("token"));
}
