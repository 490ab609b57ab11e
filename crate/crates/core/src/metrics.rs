//! Support-recovery scoring.

use serde::{Deserialize, Serialize};

use crate::error::{HigtError, Result};
use crate::model::CoefficientMatrix;

/// Default binarization threshold for estimated coefficients.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub threshold: f64,
    /// False when nothing was estimated nonzero (precision reported as 0).
    pub precision_defined: bool,
    /// False when the truth is all zero (recall reported as 0).
    pub recall_defined: bool,
}

impl RecoveryScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, threshold: f64) -> Self {
        let precision_defined = tp + fp > 0;
        let recall_defined = tp + fn_ > 0;
        let precision = if precision_defined {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if recall_defined {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        RecoveryScore {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            threshold,
            precision_defined,
            recall_defined,
        }
    }
}

/// `2PR/(P+R)`, or 0 when both are 0.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// An estimate counts as nonzero when `|β̂| > threshold`; truth when `β ≠ 0`.
pub fn score(
    estimate: &CoefficientMatrix,
    truth: &CoefficientMatrix,
    threshold: f64,
) -> Result<RecoveryScore> {
    if (estimate.k(), estimate.j()) != (truth.k(), truth.j()) {
        return Err(HigtError::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {}x{}",
            estimate.k(),
            estimate.j(),
            truth.k(),
            truth.j()
        )));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(HigtError::InvalidParameter(
            "threshold must be nonnegative".into(),
        ));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (e, t) in estimate.as_array().iter().zip(truth.as_array().iter()) {
        match (e.abs() > threshold, *t != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(RecoveryScore::from_counts(tp, fp, fn_, threshold))
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            sd: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, sd, n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn cm(a: ndarray::Array2<f64>) -> CoefficientMatrix {
        CoefficientMatrix::from_array(a)
    }

    #[test]
    fn perfect_recovery() {
        let t = cm(array![[3.0, 0.0], [0.0, 3.0]]);
        let s = score(&t, &t, 1e-6).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_recall() {
        let t = cm(array![[3.0, 3.0], [0.0, 0.0]]);
        let e = cm(array![[0.7, 0.0], [0.0, 0.0]]);
        let s = score(&e, &t, 1e-6).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_estimate() {
        let t = cm(array![[3.0, 0.0]]);
        let s = score(&cm(array![[0.0, 0.0]]), &t, 1e-6).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(!s.precision_defined);
        assert!(s.recall_defined);
    }

    #[test]
    fn mismatched_shapes() {
        assert!(score(&cm(array![[1.0]]), &cm(array![[1.0, 2.0]]), 0.0).is_err());
    }

    #[test]
    fn summary_uses_sample_sd() {
        let s = summarize(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 1.0);
        assert_eq!(summarize(&[4.0]).sd, 0.0);
    }

    proptest! {
        #[test]
        fn f1_symmetric_and_bounded(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            let f = harmonic_mean(p, r);
            prop_assert!((f - harmonic_mean(r, p)).abs() < 1e-15);
            prop_assert!(f <= p.max(r) + 1e-15);
            prop_assert!(f >= 0.0);
        }

        #[test]
        fn extra_true_positive_never_hurts(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let before = RecoveryScore::from_counts(tp, fp, fn_, 0.0);
            let after = RecoveryScore::from_counts(tp + 1, fp, fn_, 0.0);
            prop_assert!(after.f1 >= before.f1 - 1e-15);
        }

        #[test]
        fn support_invariant_under_upscaling(
            vals in proptest::collection::vec(-2i32..=2, 12),
            c in prop_oneof![1.0f64..10.0, -10.0f64..-1.0],
        ) {
            let est = ndarray::Array2::from_shape_vec((3, 4), vals.iter().map(|&v| v as f64).collect()).unwrap();
            let truth = est.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let a = score(&cm(est.clone()), &cm(truth.clone()), 0.0).unwrap();
            let b = score(&cm(est * c), &cm(truth), 0.0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
