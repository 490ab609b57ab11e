//! Experiment grids comparing HiGT (screen, then restricted solve) with the
//! unscreened solver on simulated data.
//!
//! A [`BenchGrid`] names one axis to vary, the values to visit, and how many
//! replicates to run per value. Replicate `i` uses seed `base_seed + i`; on the
//! λ axis one dataset per replicate is reused across all λ values.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use higt_core::metrics::{summarize, Summary};
use higt_core::{
    fit, fit_without_screening, score, simulate, FitResult, HigtError, RegParams, SimConfig,
    SimInstance, SolverConfig, TreeConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Core(#[from] HigtError),
    #[error("thread pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAxis {
    Lambda,
    /// Number of input groups; `J` follows from the generated groups.
    NumGroups,
    Samples,
    Inputs,
    Outputs,
}

impl GridAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            GridAxis::Lambda => "lambda",
            GridAxis::NumGroups => "num_groups",
            GridAxis::Samples => "samples",
            GridAxis::Inputs => "inputs",
            GridAxis::Outputs => "outputs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Higt,
    NoScreen,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Higt => "higt",
            Method::NoScreen => "no_screen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaUnits {
    /// Multiplied by `N`; comparable to correlations of standardized data.
    PerSample,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchGrid {
    pub axis: GridAxis,
    pub values: Vec<f64>,
    /// Base simulation settings; the axis overrides one field.
    pub fixed: SimConfig,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    /// Regularization strength when the axis is not λ.
    pub lambda: f64,
    pub lambda_units: LambdaUnits,
    /// Multipliers giving `(λ1, λ2, λ3) = λ · weights`.
    pub lambda_weights: [f64; 3],
    pub tree: TreeConfig,
    pub solver: SolverConfig,
    pub threshold: f64,
    /// Time the second of two identical runs.
    pub warm_repeat: bool,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        BenchGrid {
            axis: GridAxis::Lambda,
            values: vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
            fixed: SimConfig::default(),
            replicates: 10,
            methods: vec![Method::Higt, Method::NoScreen],
            base_seed: 0,
            lambda: 0.07,
            lambda_units: LambdaUnits::PerSample,
            lambda_weights: [1.0, 1.0, 1.0],
            tree: TreeConfig::default(),
            solver: SolverConfig::default(),
            threshold: higt_core::metrics::DEFAULT_THRESHOLD,
            warm_repeat: true,
            jobs: None,
        }
    }
}

impl BenchGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::InvalidGrid(m.into()));
        if self.values.is_empty() {
            return bad("values must be nonempty");
        }
        if self
            .values
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return bad("values must be strictly increasing");
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("values must be finite and nonnegative");
        }
        if self.axis != GridAxis::Lambda && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0)
        {
            return bad("size axes take positive integer values");
        }
        if self.replicates == 0 {
            return bad("replicates must be positive");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive");
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return bad("threshold must be nonnegative");
        }
        self.solver.validate()?;
        Ok(())
    }

    fn sim_config(&self, value: f64, replicate: usize) -> SimConfig {
        let mut cfg = self.fixed.clone();
        cfg.seed = self.base_seed + replicate as u64;
        let v = value as usize;
        match self.axis {
            GridAxis::Lambda => {}
            GridAxis::NumGroups => cfg.input_group_count = Some(v),
            GridAxis::Samples => cfg.n = v,
            GridAxis::Inputs => cfg.j = v,
            GridAxis::Outputs => cfg.k = v,
        }
        cfg
    }

    fn params(&self, value: f64, n: usize) -> Result<RegParams> {
        let lam = if self.axis == GridAxis::Lambda {
            value
        } else {
            self.lambda
        };
        let lam = match self.lambda_units {
            LambdaUnits::PerSample => lam * n as f64,
            LambdaUnits::Absolute => lam,
        };
        let w = self.lambda_weights;
        Ok(RegParams::new(lam * w[0], lam * w[1], lam * w[2])?)
    }
}

/// One method on one replicate at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub value: f64,
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub screen_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
    /// Penalty groups with at least one surviving coefficient.
    pub selected_groups: usize,
    pub total_groups: usize,
    /// Penalty groups that contain a true nonzero.
    pub true_groups: usize,
    pub survivor_coefficients: usize,
    /// True nonzeros outside the survivor set.
    pub missing_true_nonzeros: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// No step of the objective trace rose by more than 1e-12.
    pub trace_monotone: bool,
}

impl CellRecord {
    /// Every field except the timings.
    pub fn outcome(&self) -> impl PartialEq + std::fmt::Debug {
        (
            self.value.to_bits(),
            self.replicate,
            self.seed,
            self.method,
            self.selected_groups,
            self.survivor_coefficients,
            self.missing_true_nonzeros,
            self.f1.to_bits(),
            self.iterations,
            self.final_objective.to_bits(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub value: f64,
    pub method: Method,
    pub screen_ms: Summary,
    pub solve_ms: Summary,
    pub total_ms: Summary,
    pub selected_groups: Summary,
    pub total_groups: Summary,
    pub true_groups: Summary,
    pub missing_true_nonzeros: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub grid: BenchGrid,
    pub records: Vec<CellRecord>,
    pub summary: Vec<CellSummary>,
}

/// Penalty groups (`β_k^g` and `β_h^j`) touching at least one true nonzero.
pub fn true_group_count(inst: &SimInstance) -> usize {
    let gs = &inst.groups;
    let mut groups = BTreeSet::new();
    for (k, j) in inst.true_support() {
        for (m, g) in gs.input_groups().iter().enumerate() {
            if g.contains(&j) {
                groups.insert((0, k, m));
            }
        }
        for (o, h) in gs.output_groups().iter().enumerate() {
            if h.contains(&k) {
                groups.insert((1, j, o));
            }
        }
    }
    groups.len()
}

fn run_method(
    grid: &BenchGrid,
    inst: &SimInstance,
    rp: &RegParams,
    method: Method,
) -> Result<(FitResult, f64)> {
    let once = || -> Result<(FitResult, f64)> {
        let start = Instant::now();
        let res = match method {
            Method::Higt => fit(&inst.dataset, &inst.groups, rp, &grid.tree, &grid.solver)?,
            Method::NoScreen => {
                fit_without_screening(&inst.dataset, &inst.groups, rp, &grid.solver)?
            }
        };
        Ok((res, start.elapsed().as_secs_f64() * 1e3))
    };
    let first = once()?;
    if grid.warm_repeat {
        once()
    } else {
        Ok(first)
    }
}

fn run_cell(
    grid: &BenchGrid,
    inst: &SimInstance,
    value: f64,
    replicate: usize,
) -> Result<Vec<CellRecord>> {
    let rp = grid.params(value, inst.dataset.n())?;
    let total_groups = inst.groups.penalty_group_count();
    let true_groups = true_group_count(inst);
    let truth = inst.true_support();
    grid.methods
        .iter()
        .map(|&method| {
            let (res, total_ms) = run_method(grid, inst, &rp, method)?;
            let s = score(&res.b, &inst.b_true, grid.threshold)?;
            Ok(CellRecord {
                value,
                replicate,
                seed: inst.seed(),
                method,
                screen_ms: res.screen_time.as_secs_f64() * 1e3,
                solve_ms: res.solve_time.as_secs_f64() * 1e3,
                total_ms,
                selected_groups: res.survivor.penalty_group_count(&inst.groups),
                total_groups,
                true_groups,
                survivor_coefficients: res.survivor.coefficient_count(),
                missing_true_nonzeros: res.survivor.missed(truth.iter().copied()).count(),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                iterations: res.iterations,
                converged: res.converged,
                final_objective: res.final_objective(),
                trace_monotone: res.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            })
        })
        .collect()
}

fn run_unit(grid: &BenchGrid, unit: (usize, usize)) -> Result<Vec<CellRecord>> {
    let (vi, replicate) = unit;
    if grid.axis == GridAxis::Lambda {
        let inst = simulate(&grid.sim_config(0.0, replicate))?;
        let mut out = Vec::new();
        for &value in &grid.values {
            out.extend(run_cell(grid, &inst, value, replicate)?);
        }
        Ok(out)
    } else {
        let value = grid.values[vi];
        let inst = simulate(&grid.sim_config(value, replicate))?;
        run_cell(grid, &inst, value, replicate)
    }
}

/// Runs every (value, replicate, method) combination.
pub fn run_grid(grid: &BenchGrid) -> Result<BenchReport> {
    grid.validate()?;
    let value_slots = if grid.axis == GridAxis::Lambda {
        1
    } else {
        grid.values.len()
    };
    let units: Vec<(usize, usize)> = (0..value_slots)
        .flat_map(|v| (0..grid.replicates).map(move |r| (v, r)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = grid.jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let chunks: Vec<Vec<CellRecord>> = pool.install(|| {
        units
            .par_iter()
            .map(|&u| run_unit(grid, u))
            .collect::<Result<_>>()
    })?;

    let mut records: Vec<CellRecord> = chunks.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.method.cmp(&b.method))
            .then(a.replicate.cmp(&b.replicate))
    });
    let summary = summarize_records(grid, &records);
    Ok(BenchReport {
        grid: grid.clone(),
        records,
        summary,
    })
}

fn summarize_records(grid: &BenchGrid, records: &[CellRecord]) -> Vec<CellSummary> {
    let mut methods = grid.methods.clone();
    methods.sort();
    methods.dedup();
    let mut out = Vec::new();
    for &value in &grid.values {
        for &method in &methods {
            let cell: Vec<&CellRecord> = records
                .iter()
                .filter(|r| r.value == value && r.method == method)
                .collect();
            let col = |f: &dyn Fn(&CellRecord) -> f64| {
                summarize(&cell.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            out.push(CellSummary {
                value,
                method,
                screen_ms: col(&|r| r.screen_ms),
                solve_ms: col(&|r| r.solve_ms),
                total_ms: col(&|r| r.total_ms),
                selected_groups: col(&|r| r.selected_groups as f64),
                total_groups: col(&|r| r.total_groups as f64),
                true_groups: col(&|r| r.true_groups as f64),
                missing_true_nonzeros: col(&|r| r.missing_true_nonzeros as f64),
                precision: col(&|r| r.precision),
                recall: col(&|r| r.recall),
                f1: col(&|r| r.f1),
            });
        }
    }
    out
}

/// Column order of [`BenchReport::summary_csv`].
pub const SUMMARY_COLUMNS: &[&str] = &[
    "axis",
    "value",
    "method",
    "replicates",
    "screen_ms_mean",
    "screen_ms_sd",
    "solve_ms_mean",
    "solve_ms_sd",
    "total_ms_mean",
    "total_ms_sd",
    "selected_groups_mean",
    "selected_groups_sd",
    "total_groups_mean",
    "true_groups_mean",
    "missing_true_nonzeros_mean",
    "missing_true_nonzeros_sd",
    "precision_mean",
    "recall_mean",
    "f1_mean",
    "f1_sd",
];

/// Column order of [`BenchReport::records_csv`].
pub const RECORD_COLUMNS: &[&str] = &[
    "axis",
    "value",
    "method",
    "replicate",
    "seed",
    "screen_ms",
    "solve_ms",
    "total_ms",
    "selected_groups",
    "total_groups",
    "true_groups",
    "survivor_coefficients",
    "missing_true_nonzeros",
    "precision",
    "recall",
    "f1",
    "iterations",
    "converged",
];

impl BenchReport {
    /// One row per (value, method) with mean and sample sd over replicates.
    pub fn summary_csv(&self) -> String {
        let mut out = SUMMARY_COLUMNS.join(",");
        out.push('\n');
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.grid.axis.as_str(),
                s.value,
                s.method.as_str(),
                s.f1.n,
                s.screen_ms.mean,
                s.screen_ms.sd,
                s.solve_ms.mean,
                s.solve_ms.sd,
                s.total_ms.mean,
                s.total_ms.sd,
                s.selected_groups.mean,
                s.selected_groups.sd,
                s.total_groups.mean,
                s.true_groups.mean,
                s.missing_true_nonzeros.mean,
                s.missing_true_nonzeros.sd,
                s.precision.mean,
                s.recall.mean,
                s.f1.mean,
                s.f1.sd,
            );
        }
        out
    }

    pub fn records_csv(&self) -> String {
        let mut out = RECORD_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.grid.axis.as_str(),
                r.value,
                r.method.as_str(),
                r.replicate,
                r.seed,
                r.screen_ms,
                r.solve_ms,
                r.total_ms,
                r.selected_groups,
                r.total_groups,
                r.true_groups,
                r.survivor_coefficients,
                r.missing_true_nonzeros,
                r.precision,
                r.recall,
                r.f1,
                r.iterations,
                r.converged,
            );
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| {} | method | screening ms | updating ms | total ms | selected groups | missing β≠0 | F1 |",
            self.grid.axis.as_str()
        );
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "| {} | {} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.1} | {:.1} | {:.3} ± {:.3} |",
                s.value,
                s.method.as_str(),
                s.screen_ms.mean,
                s.screen_ms.sd,
                s.solve_ms.mean,
                s.solve_ms.sd,
                s.total_ms.mean,
                s.total_ms.sd,
                s.selected_groups.mean,
                s.missing_true_nonzeros.mean,
                s.f1.mean,
                s.f1.sd,
            );
        }
        if let Some(first) = self.summary.first() {
            let _ = writeln!(
                out,
                "\nTotal groups: {:.0} (mean); groups containing a true nonzero: {:.1} (mean); replicates: {}.",
                first.total_groups.mean, first.true_groups.mean, self.grid.replicates
            );
        }
        out
    }

    pub fn cell(&self, value: f64, method: Method) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|s| s.value == value && s.method == method)
    }
}
