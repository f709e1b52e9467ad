//! Histogram-binning calibration of projection values.
//!
//! Projections are sorted and split into equal-frequency bins. Each bin
//! stores its positive rate with add-one smoothing, `(pos + 1) / (count + 2)`,
//! and the mean projection of its members as its center. A query interpolates
//! linearly between the two neighbouring centers and is clamped to the first
//! and last rate outside the range of centers.

use serde::{Deserialize, Serialize};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub rate: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub bins: Vec<CalibrationBin>,
}

impl Calibrator {
    pub fn query(&self, projection: f64) -> f64 {
        let bins = &self.bins;
        let k = bins.partition_point(|b| b.center <= projection);
        if k == 0 {
            return bins[0].rate;
        }
        if k == bins.len() {
            return bins[k - 1].rate;
        }
        let (lo, hi) = (&bins[k - 1], &bins[k]);
        let frac = (projection - lo.center) / (hi.center - lo.center);
        lo.rate + frac * (hi.rate - lo.rate)
    }
}

/// Fits a calibrator with `n_bins` equal-frequency bins. With fewer examples
/// than bins, one bin per example is used; with no examples, a single bin at
/// 0 with the smoothed prior 1/2.
pub fn fit_calibrator(projections: &[f64], labels: &[bool], n_bins: usize) -> Calibrator {
    assert_eq!(projections.len(), labels.len());
    let n = projections.len();
    if n == 0 {
        return Calibrator {
            bins: vec![CalibrationBin {
                lower: 0.0,
                upper: 0.0,
                center: 0.0,
                rate: 0.5,
                count: 0,
            }],
        };
    }
    let n_bins = n_bins.clamp(1, n);
    let mut pairs: Vec<(f64, bool)> = projections.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut bins: Vec<CalibrationBin> = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let members = &pairs[b * n / n_bins..(b + 1) * n / n_bins];
        let count = members.len() as u64;
        let pos = members.iter().filter(|p| p.1).count() as u64;
        let center = members.iter().map(|p| p.0).sum::<f64>() / count as f64;
        bins.push(CalibrationBin {
            lower: members[0].0,
            upper: members[members.len() - 1].0,
            center,
            rate: (pos + 1) as f64 / (count + 2) as f64,
            count,
        });
    }
    // make the bins contiguous: adjacent edges meet halfway between members
    for b in 1..bins.len() {
        let edge = 0.5 * (bins[b - 1].upper + bins[b].lower);
        bins[b - 1].upper = edge;
        bins[b].lower = edge;
    }
    Calibrator { bins }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_positive_bin_is_smoothed() {
        let c = fit_calibrator(&[0.0; 8], &[true; 8], 1);
        assert_eq!(c.bins[0].rate, 0.9);
    }

    #[test]
    fn all_negative_rates_stay_above_zero() {
        let proj: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let c = fit_calibrator(&proj, &[false; 40], 10);
        assert!(c.bins.iter().all(|b| b.rate == 1.0 / 6.0));
    }

    #[test]
    fn small_data_reduces_bin_count() {
        let c = fit_calibrator(&[1.0, 2.0, 3.0], &[true, false, true], 10);
        assert_eq!(c.bins.len(), 3);
        let empty = fit_calibrator(&[], &[], 10);
        assert_eq!(empty.query(3.0), 0.5);
    }

    #[test]
    fn clamps_and_hits_centers() {
        let proj: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let c = fit_calibrator(&proj, &labels, 2);
        assert_eq!(c.bins[0].center, 4.5);
        assert_eq!(c.query(-100.0), c.bins[0].rate);
        assert_eq!(c.query(100.0), c.bins[1].rate);
        assert_eq!(c.query(4.5), c.bins[0].rate);
        assert_eq!(c.query(14.5), c.bins[1].rate);
        let mid = c.query(9.5);
        assert!((mid - 0.5 * (c.bins[0].rate + c.bins[1].rate)).abs() < 1e-12);
    }

    #[test]
    fn bins_are_contiguous_and_ordered() {
        let proj: Vec<f64> = (0..57).map(|i| ((i * 37) % 57) as f64 * 0.3).collect();
        let labels: Vec<bool> = (0..57).map(|i| i % 3 == 0).collect();
        let c = fit_calibrator(&proj, &labels, 10);
        for w in c.bins.windows(2) {
            assert_eq!(w[0].upper, w[1].lower);
            assert!(w[0].center <= w[1].center);
        }
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<u64>(), 57);
    }

    proptest! {
        #[test]
        fn output_is_a_probability(points in prop::collection::vec((-50.0f64..50.0, any::<bool>()), 0..80),
                                   q in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
            let proj: Vec<f64> = points.iter().map(|p| p.0).collect();
            let labels: Vec<bool> = points.iter().map(|p| p.1).collect();
            let c = fit_calibrator(&proj, &labels, 10);
            let p = c.query(q);
            prop_assert!(p > 0.0 && p < 1.0);
            prop_assert!((p + (1.0 - p) - 1.0).abs() < 1e-15);
        }
    }
}
