//! Shared inputs for the benchmarks.

use coda_core::features::{build_catalog, standardize, FeatureCatalog, FeatureMatrix, StandardizationStats};
use coda_core::record::PatientRecord;
use coda_core::segmentation::{segment_cohort, SegmentationPolicy, StateActionInstance};
use coda_core::synth::{generate_cohort, GeneratorConfig};
use coda_core::training::featurize_instances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores with roughly 5% exact ties and the matching labels.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.random_bool(0.3);
            let s: f64 = rng.random::<f64>() + if label { 0.3 } else { 0.0 };
            let s = if rng.random_bool(0.05) { (s * 10.0).round() / 10.0 } else { s };
            (s, label)
        })
        .unzip()
}

pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub catalog: FeatureCatalog,
    pub instances: Vec<StateActionInstance>,
    pub x: FeatureMatrix,
}

/// A synthetic cohort segmented and featurized with the default policy.
pub fn cohort(patients: usize) -> Cohort {
    let config = GeneratorConfig {
        patients,
        injection_rate: 0.02,
        ..GeneratorConfig::default()
    };
    let (records, _) = generate_cohort(&config).expect("generator config is valid");
    let catalog = build_catalog(&records, 20).expect("catalog");
    let instances = segment_cohort(&records, &catalog.action_catalog(), &SegmentationPolicy::default());
    let vectors = featurize_instances(&records, &instances, &catalog).expect("featurize");
    let stats = StandardizationStats::fit(&vectors);
    let x = standardize(&vectors, &stats);
    Cohort {
        records,
        catalog,
        instances,
        x,
    }
}
