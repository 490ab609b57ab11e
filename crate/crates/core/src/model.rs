//! Data model and the objective of the multi-task structured-sparsity problem
//!
//! ```text
//! min_B  ½‖Y − BX‖²_F + λ1 Σ_kj w_kj |β_kj|
//!                      + λ2 Σ_k Σ_m ρ_m ‖β_k^{g_m}‖₂
//!                      + λ3 Σ_j Σ_o ν_o ‖β_{h_o}^j‖₂
//! ```
//!
//! `X` is `J×N` (inputs by samples), `Y` is `K×N` (outputs by samples) and `B`
//! is `K×J`. Input groups index columns of `B`, output groups index rows.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{HigtError, MatrixKind, Result};

/// Rows with a population variance below this are rejected.
pub const MIN_ROW_VARIANCE: f64 = 1e-12;

/// Paired input/output data. Samples are columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array2<f64>,
}

/// Per-row affine maps applied by [`Dataset::standardize`], kept so that
/// coefficients can be mapped back to the raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_scale: Vec<f64>,
}

impl Scaling {
    /// Coefficient on the standardized scale that corresponds to a raw-scale
    /// coefficient: `β̃_kj = β_kj · s_j / t_k`.
    pub fn to_standardized(&self, raw: &CoefficientMatrix) -> CoefficientMatrix {
        let mut b = raw.as_array().clone();
        for ((k, j), v) in b.indexed_iter_mut() {
            *v *= self.x_scale[j] / self.y_scale[k];
        }
        CoefficientMatrix(b)
    }

    /// Inverse of [`Scaling::to_standardized`].
    pub fn to_raw(&self, standardized: &CoefficientMatrix) -> CoefficientMatrix {
        let mut b = standardized.as_array().clone();
        for ((k, j), v) in b.indexed_iter_mut() {
            *v *= self.y_scale[k] / self.x_scale[j];
        }
        CoefficientMatrix(b)
    }
}

impl Dataset {
    /// `x` is `J×N`, `y` is `K×N`.
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(HigtError::DimensionMismatch(format!(
                "X has {} samples but Y has {}",
                x.ncols(),
                y.ncols()
            )));
        }
        if x.is_empty() || y.is_empty() {
            return Err(HigtError::DimensionMismatch(
                "X and Y must be non-empty".into(),
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(HigtError::InvalidParameter(
                "data contains NaN or infinite entries".into(),
            ));
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    /// Number of inputs.
    pub fn j(&self) -> usize {
        self.x.nrows()
    }

    /// Number of outputs (tasks).
    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    /// Rejects data with a constant row in either matrix.
    pub fn check_rows_vary(&self) -> Result<()> {
        check_rows(&self.x, MatrixKind::Inputs)?;
        check_rows(&self.y, MatrixKind::Outputs)
    }

    /// Centers every row and scales it to unit population (1/N) variance.
    pub fn standardize(&self) -> Result<Dataset> {
        self.standardize_with_scaling().map(|(ds, _)| ds)
    }

    pub fn standardize_with_scaling(&self) -> Result<(Dataset, Scaling)> {
        let (x, x_mean, x_scale) = standardize_rows(&self.x, MatrixKind::Inputs)?;
        let (y, y_mean, y_scale) = standardize_rows(&self.y, MatrixKind::Outputs)?;
        Ok((
            Dataset { x, y },
            Scaling {
                x_mean,
                x_scale,
                y_mean,
                y_scale,
            },
        ))
    }
}

fn row_moments(row: ndarray::ArrayView1<'_, f64>) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.sum() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn check_rows(m: &Array2<f64>, matrix: MatrixKind) -> Result<()> {
    for (row, r) in m.axis_iter(Axis(0)).enumerate() {
        if row_moments(r).1 < MIN_ROW_VARIANCE {
            return Err(HigtError::ConstantRow { matrix, row });
        }
    }
    Ok(())
}

fn standardize_rows(
    m: &Array2<f64>,
    matrix: MatrixKind,
) -> Result<(Array2<f64>, Vec<f64>, Vec<f64>)> {
    let mut out = m.clone();
    let mut means = Vec::with_capacity(m.nrows());
    let mut scales = Vec::with_capacity(m.nrows());
    for (row, mut r) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (mean, var) = row_moments(r.view());
        if var < MIN_ROW_VARIANCE {
            return Err(HigtError::ConstantRow { matrix, row });
        }
        let sd = var.sqrt();
        r.mapv_inplace(|v| (v - mean) / sd);
        means.push(mean);
        scales.push(sd);
    }
    Ok((out, means, scales))
}

/// Regression coefficients, `K×J` (tasks by inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(Array2<f64>);

impl CoefficientMatrix {
    pub fn zeros(k: usize, j: usize) -> Self {
        CoefficientMatrix(Array2::zeros((k, j)))
    }

    pub fn from_array(b: Array2<f64>) -> Self {
        CoefficientMatrix(b)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn as_array_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn j(&self) -> usize {
        self.0.ncols()
    }

    /// Entries with `|β| > threshold`, in row-major order.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize)> {
        self.0
            .indexed_iter()
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(idx, _)| idx)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Penalty strengths for the element-wise, input-group and output-group terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl RegParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let rp = RegParams {
            lambda1,
            lambda2,
            lambda3,
        };
        rp.validate()?;
        Ok(rp)
    }

    /// All three strengths set to `lambda`.
    pub fn uniform(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HigtError::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> RegParams {
        RegParams {
            lambda1: self.lambda1 * factor,
            lambda2: self.lambda2 * factor,
            lambda3: self.lambda3 * factor,
        }
    }
}

/// Overlapping input groups (over columns of `B`) and output groups (over rows
/// of `B`), with their weights. Indices are 0-based; sorted and deduplicated on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructure {
    n_outputs: usize,
    n_inputs: usize,
    input_groups: Vec<Vec<usize>>,
    output_groups: Vec<Vec<usize>>,
    input_weights: Vec<f64>,
    output_weights: Vec<f64>,
    element_weights: Array2<f64>,
}

impl GroupStructure {
    /// Unit weights everywhere.
    pub fn new(
        n_outputs: usize,
        n_inputs: usize,
        input_groups: Vec<Vec<usize>>,
        output_groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let ni = input_groups.len();
        let no = output_groups.len();
        Self::with_weights(
            n_outputs,
            n_inputs,
            input_groups,
            output_groups,
            vec![1.0; ni],
            vec![1.0; no],
            Array2::ones((n_outputs, n_inputs)),
        )
    }

    pub fn with_weights(
        n_outputs: usize,
        n_inputs: usize,
        mut input_groups: Vec<Vec<usize>>,
        mut output_groups: Vec<Vec<usize>>,
        input_weights: Vec<f64>,
        output_weights: Vec<f64>,
        element_weights: Array2<f64>,
    ) -> Result<Self> {
        normalize_groups(&mut input_groups, n_inputs, "input")?;
        normalize_groups(&mut output_groups, n_outputs, "output")?;
        if input_weights.len() != input_groups.len() {
            return Err(HigtError::InvalidGroups(format!(
                "{} input weights for {} input groups",
                input_weights.len(),
                input_groups.len()
            )));
        }
        if output_weights.len() != output_groups.len() {
            return Err(HigtError::InvalidGroups(format!(
                "{} output weights for {} output groups",
                output_weights.len(),
                output_groups.len()
            )));
        }
        if element_weights.dim() != (n_outputs, n_inputs) {
            return Err(HigtError::DimensionMismatch(format!(
                "element weights are {:?}, expected ({n_outputs}, {n_inputs})",
                element_weights.dim()
            )));
        }
        let positive = |w: &f64| w.is_finite() && *w > 0.0;
        if !input_weights.iter().all(positive)
            || !output_weights.iter().all(positive)
            || !element_weights.iter().all(positive)
        {
            return Err(HigtError::InvalidGroups(
                "all weights must be positive and finite".into(),
            ));
        }
        Ok(GroupStructure {
            n_outputs,
            n_inputs,
            input_groups,
            output_groups,
            input_weights,
            output_weights,
            element_weights,
        })
    }

    /// `K`, the number of rows of `B`.
    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    /// `J`, the number of columns of `B`.
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn input_groups(&self) -> &[Vec<usize>] {
        &self.input_groups
    }

    pub fn output_groups(&self) -> &[Vec<usize>] {
        &self.output_groups
    }

    pub fn input_weights(&self) -> &[f64] {
        &self.input_weights
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output_weights
    }

    pub fn element_weights(&self) -> &Array2<f64> {
        &self.element_weights
    }

    /// Number of penalty terms: one per (row, input group) plus one per
    /// (column, output group).
    pub fn penalty_group_count(&self) -> usize {
        self.n_outputs * self.input_groups.len() + self.n_inputs * self.output_groups.len()
    }

    pub fn check_dims(&self, k: usize, j: usize) -> Result<()> {
        if (self.n_outputs, self.n_inputs) != (k, j) {
            return Err(HigtError::DimensionMismatch(format!(
                "groups are defined for a {}x{} coefficient matrix, got {k}x{j}",
                self.n_outputs, self.n_inputs
            )));
        }
        Ok(())
    }
}

fn normalize_groups(groups: &mut [Vec<usize>], bound: usize, what: &str) -> Result<()> {
    for (i, g) in groups.iter_mut().enumerate() {
        if g.is_empty() {
            return Err(HigtError::InvalidGroups(format!(
                "{what} group {i} is empty"
            )));
        }
        g.sort_unstable();
        g.dedup();
        if let Some(&bad) = g.iter().find(|&&idx| idx >= bound) {
            return Err(HigtError::InvalidGroups(format!(
                "{what} group {i} has index {bad} out of range 0..{bound}"
            )));
        }
    }
    Ok(())
}

fn check_problem(b: &CoefficientMatrix, ds: &Dataset) -> Result<()> {
    if b.k() != ds.k() || b.j() != ds.j() {
        return Err(HigtError::DimensionMismatch(format!(
            "B is {}x{} but data has K={}, J={}",
            b.k(),
            b.j(),
            ds.k(),
            ds.j()
        )));
    }
    Ok(())
}

/// The three-part structured penalty.
pub fn penalty(b: &CoefficientMatrix, gs: &GroupStructure, rp: &RegParams) -> Result<f64> {
    gs.check_dims(b.k(), b.j())?;
    let b = b.as_array();
    let l1: f64 = b
        .iter()
        .zip(gs.element_weights.iter())
        .map(|(v, w)| w * v.abs())
        .sum();

    let mut rows = 0.0;
    for row in b.axis_iter(Axis(0)) {
        for (g, rho) in gs.input_groups.iter().zip(&gs.input_weights) {
            rows += rho * g.iter().map(|&j| row[j] * row[j]).sum::<f64>().sqrt();
        }
    }

    let mut cols = 0.0;
    for col in b.axis_iter(Axis(1)) {
        for (h, nu) in gs.output_groups.iter().zip(&gs.output_weights) {
            cols += nu * h.iter().map(|&k| col[k] * col[k]).sum::<f64>().sqrt();
        }
    }

    Ok(rp.lambda1 * l1 + rp.lambda2 * rows + rp.lambda3 * cols)
}

/// Residual `Y − BX`.
pub fn residual(b: &CoefficientMatrix, ds: &Dataset) -> Result<Array2<f64>> {
    check_problem(b, ds)?;
    Ok(&ds.y - &b.as_array().dot(&ds.x))
}

/// `½‖Y − BX‖²_F`.
pub fn loss(b: &CoefficientMatrix, ds: &Dataset) -> Result<f64> {
    let r = residual(b, ds)?;
    Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>())
}

pub fn objective(
    b: &CoefficientMatrix,
    ds: &Dataset,
    gs: &GroupStructure,
    rp: &RegParams,
) -> Result<f64> {
    Ok(loss(b, ds)? + penalty(b, gs, rp)?)
}

/// Gradient of the smooth loss, `(BX − Y)Xᵀ`.
pub fn smooth_gradient(b: &CoefficientMatrix, ds: &Dataset) -> Result<Array2<f64>> {
    let r = residual(b, ds)?;
    Ok(-r.dot(&ds.x.t()))
}

/// Frobenius norm.
pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
