#![allow(dead_code)]

pub mod oracle;

use higt_core::simulation::chained_groups;
use higt_core::{CoefficientMatrix, Dataset, FitResult, GroupStructure, RegParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Problem {
    pub ds: Dataset,
    pub gs: GroupStructure,
    pub b_true: Array2<f64>,
}

impl Problem {
    pub fn x(&self) -> Array2<f64> {
        self.ds.x().to_owned()
    }

    pub fn y(&self) -> Array2<f64> {
        self.ds.y().to_owned()
    }

    pub fn terms(&self, rp: &RegParams) -> Vec<oracle::Term> {
        oracle::penalty_terms(
            self.ds.k(),
            self.ds.j(),
            self.gs.input_groups(),
            self.gs.output_groups(),
            rp.lambda1,
            rp.lambda2,
            rp.lambda3,
        )
    }

    /// Group terms only (no ℓ1 singletons).
    pub fn group_terms(&self, rp: &RegParams) -> Vec<oracle::Term> {
        self.terms(&RegParams {
            lambda1: 0.0,
            ..*rp
        })
    }

    pub fn composite(&self, rp: &RegParams) -> oracle::Composite {
        oracle::Composite::regression(&self.x(), &self.y(), self.terms(rp))
    }
}

/// Gaussian inputs, chained overlapping groups on both sides, a few planted
/// coefficients and unit noise; standardized.
pub fn random_problem(seed: u64, k: usize, j: usize, n: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_groups = chained_groups(j, [3, 5], [1, 2], &mut rng);
    let output_groups = if k == 1 {
        vec![vec![0]]
    } else {
        chained_groups(k, [2, 2], [1, 1], &mut rng)
    };
    let gs = GroupStructure::new(k, j, input_groups, output_groups).unwrap();
    let mut b = Array2::zeros((k, j));
    for _ in 0..(k * j / 4).max(1) {
        let (r, c) = (rng.random_range(0..k), rng.random_range(0..j));
        b[[r, c]] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    let x = Array2::from_shape_simple_fn((j, n), || rng.sample::<f64, _>(StandardNormal));
    let e = Array2::from_shape_simple_fn((k, n), || rng.sample::<f64, _>(StandardNormal));
    let y = b.dot(&x) + e;
    let ds = Dataset::new(x, y).unwrap().standardize().unwrap();
    Problem { ds, gs, b_true: b }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, k: usize, j: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((k, j), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Fails the test unless the trace never increases by more than 1e-12.
pub fn assert_monotone(res: &FitResult) {
    for w in res.objective_trace.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-12,
            "objective increased from {} to {}",
            w[0],
            w[1]
        );
    }
}

pub fn max_abs_diff(a: &CoefficientMatrix, b: &CoefficientMatrix) -> f64 {
    (a.as_array() - b.as_array())
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}
