use coda_bench::{cohort, scored_labels};

#[test]
fn scored_labels_are_seeded_and_tied() {
    let (s, l) = scored_labels(2000, 5);
    assert_eq!((s.clone(), l.clone()), scored_labels(2000, 5));
    let mut sorted = s.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    assert!(sorted.len() < s.len(), "no ties");
    assert!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
}

#[test]
fn cohort_matrix_matches_instances_and_catalog() {
    let c = cohort(30);
    assert_eq!(c.records.len(), 30);
    assert_eq!(c.x.rows(), c.instances.len());
    assert_eq!(c.x.cols(), c.catalog.dimension());
}
