//! Accelerated proximal-gradient solve of the structured-sparsity problem,
//! optionally restricted to a survivor set.
//!
//! The proximal map of the penalty is computed in two stages: exact
//! soft-thresholding for the ℓ1 term, then block-coordinate ascent on the dual
//! of the (overlapping) group terms. The dual variables persist across outer
//! iterations as a warm start.

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{HigtError, Result};
use crate::model::{CoefficientMatrix, Dataset, GroupStructure, RegParams};
use crate::screening::{precompute_correlation, screen_with_stats, ScreenStats, SurvivorSet};
use crate::tree::build_tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `1/L` with `L = ‖XXᵀ‖₂` estimated by power iteration.
    FixedLipschitz,
    /// Doubling `L` until the quadratic upper model holds.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub rel_obj_tol: f64,
    pub inner_prox_iters: usize,
    pub inner_prox_tol: f64,
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 2000,
            rel_obj_tol: 1e-8,
            inner_prox_iters: 100,
            inner_prox_tol: 1e-10,
            step_rule: StepRule::Backtracking,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.inner_prox_iters == 0 {
            return Err(HigtError::InvalidParameter(
                "iteration limits must be positive".into(),
            ));
        }
        if !(self.rel_obj_tol > 0.0 && self.inner_prox_tol > 0.0) {
            return Err(HigtError::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Shape of the screening tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub block_inputs: usize,
    pub block_outputs: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            block_inputs: 2,
            block_outputs: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub b: CoefficientMatrix,
    /// Objective after every outer iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub screen_time: Duration,
    pub solve_time: Duration,
    pub survivor: SurvivorSet,
    pub screen_stats: Option<ScreenStats>,
    /// Final Lipschitz estimate (inverse step size).
    pub lipschitz: f64,
    /// `L‖z − y‖` at the last proximal step.
    pub gradient_map_norm: f64,
    pub max_inner_sweeps: usize,
    /// Largest dual block change in the last sweep of the last prox call.
    pub last_inner_change: f64,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Coordinates of the free coefficients: the columns holding at least one
/// free coefficient, laid out row-major as `K × cols.len()`.
#[derive(Debug, Clone)]
struct Layout {
    k: usize,
    cols: Vec<usize>,
    col_pos: Vec<Option<usize>>,
    free: Vec<bool>,
}

impl Layout {
    fn new(mask: &Array2<bool>) -> Self {
        let (k, j) = mask.dim();
        let cols: Vec<usize> = (0..j)
            .filter(|&col| mask.column(col).iter().any(|&v| v))
            .collect();
        let mut col_pos = vec![None; j];
        for (a, &col) in cols.iter().enumerate() {
            col_pos[col] = Some(a);
        }
        let mut free = vec![false; k * cols.len()];
        for r in 0..k {
            for (a, &col) in cols.iter().enumerate() {
                free[r * cols.len() + a] = mask[[r, col]];
            }
        }
        Layout {
            k,
            cols,
            col_pos,
            free,
        }
    }

    fn width(&self) -> usize {
        self.cols.len()
    }

    fn flat(&self, r: usize, col: usize) -> Option<usize> {
        let a = self.col_pos[col]?;
        let idx = r * self.width() + a;
        self.free[idx].then_some(idx)
    }
}

#[derive(Debug, Clone)]
struct GroupTerm {
    coords: Vec<usize>,
    weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProxReport {
    pub sweeps: usize,
    pub max_dual_change: f64,
}

/// Proximal map of the penalty over a fixed coordinate layout.
#[derive(Debug, Clone)]
struct ProxOperator {
    free: Vec<bool>,
    l1: Vec<f64>,
    groups: Vec<GroupTerm>,
    duals: Vec<Vec<f64>>,
    u: Vec<f64>,
}

impl ProxOperator {
    fn new(layout: &Layout, gs: &GroupStructure, rp: &RegParams) -> Self {
        let width = layout.width();
        let w = gs.element_weights();
        let mut l1 = vec![0.0; layout.k * width];
        for r in 0..layout.k {
            for (a, &col) in layout.cols.iter().enumerate() {
                l1[r * width + a] = rp.lambda1 * w[[r, col]];
            }
        }

        let mut groups = Vec::new();
        if rp.lambda2 > 0.0 {
            for r in 0..layout.k {
                for (g, rho) in gs.input_groups().iter().zip(gs.input_weights()) {
                    let coords: Vec<usize> =
                        g.iter().filter_map(|&col| layout.flat(r, col)).collect();
                    if !coords.is_empty() {
                        groups.push(GroupTerm {
                            coords,
                            weight: rp.lambda2 * rho,
                        });
                    }
                }
            }
        }
        if rp.lambda3 > 0.0 {
            for &col in &layout.cols {
                for (h, nu) in gs.output_groups().iter().zip(gs.output_weights()) {
                    let coords: Vec<usize> =
                        h.iter().filter_map(|&r| layout.flat(r, col)).collect();
                    if !coords.is_empty() {
                        groups.push(GroupTerm {
                            coords,
                            weight: rp.lambda3 * nu,
                        });
                    }
                }
            }
        }
        let duals = groups.iter().map(|g| vec![0.0; g.coords.len()]).collect();
        ProxOperator {
            free: layout.free.clone(),
            l1,
            groups,
            duals,
            u: vec![0.0; layout.free.len()],
        }
    }

    fn penalty(&self, b: &[f64]) -> f64 {
        let l1: f64 = b.iter().zip(&self.l1).map(|(v, w)| w * v.abs()).sum();
        let grp: f64 = self
            .groups
            .iter()
            .map(|g| g.weight * g.coords.iter().map(|&c| b[c] * b[c]).sum::<f64>().sqrt())
            .sum();
        l1 + grp
    }

    /// `argmin_z ½‖z − v‖² + step·penalty(z)`, written into `out`.
    fn apply(
        &mut self,
        v: &[f64],
        step: f64,
        max_sweeps: usize,
        tol: f64,
        out: &mut [f64],
    ) -> ProxReport {
        for (i, (&vi, ui)) in v.iter().zip(self.u.iter_mut()).enumerate() {
            *ui = if self.free[i] {
                let t = step * self.l1[i];
                vi.signum() * (vi.abs() - t).max(0.0)
            } else {
                0.0
            };
        }
        out.copy_from_slice(&self.u);
        if self.groups.is_empty() {
            return ProxReport::default();
        }

        // Coordinates zeroed by soft-thresholding stay zero in the prox, so
        // each group only acts on its coordinates where u ≠ 0.
        let u = &self.u;
        let mut active = Vec::with_capacity(self.groups.len());
        for (gi, (g, y)) in self.groups.iter().zip(self.duals.iter_mut()).enumerate() {
            let mut any = false;
            for (c, yc) in g.coords.iter().zip(y.iter_mut()) {
                if u[*c] == 0.0 {
                    *yc = 0.0;
                } else {
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let tau = step * g.weight;
            let nrm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > tau {
                let s = tau / nrm;
                y.iter_mut().for_each(|v| *v *= s);
            }
            for (c, yc) in g.coords.iter().zip(y.iter()) {
                out[*c] -= yc;
            }
            active.push(gi);
        }
        if active.is_empty() {
            return ProxReport::default();
        }

        let mut report = ProxReport::default();
        for sweep in 1..=max_sweeps {
            let mut max_change: f64 = 0.0;
            for &gi in &active {
                let g = &self.groups[gi];
                let y = &mut self.duals[gi];
                let tau = step * g.weight;
                let mut nrm2 = 0.0;
                for (c, yc) in g.coords.iter().zip(y.iter()) {
                    if u[*c] != 0.0 {
                        let s = out[*c] + yc;
                        nrm2 += s * s;
                    }
                }
                let nrm = nrm2.sqrt();
                let scale = if nrm <= tau { 1.0 } else { tau / nrm };
                let mut change2 = 0.0;
                for (c, yc) in g.coords.iter().zip(y.iter_mut()) {
                    if u[*c] != 0.0 {
                        let s = out[*c] + *yc;
                        let next = s * scale;
                        change2 += (next - *yc).powi(2);
                        out[*c] = s - next;
                        *yc = next;
                    }
                }
                max_change = max_change.max(change2.sqrt());
            }
            report = ProxReport {
                sweeps: sweep,
                max_dual_change: max_change,
            };
            if max_change <= tol {
                break;
            }
        }

        // The exact prox satisfies 0 ≤ z/u ≤ 1 coordinate-wise.
        for (z, &ui) in out.iter_mut().zip(u.iter()) {
            if *z * ui <= 0.0 {
                *z = 0.0;
            } else if z.abs() > ui.abs() {
                *z = ui;
            }
        }
        report
    }
}

/// Proximal map of `step · penalty` at `v` over all coefficients, from a cold
/// dual start.
pub fn prox_penalty(
    v: &Array2<f64>,
    step: f64,
    gs: &GroupStructure,
    rp: &RegParams,
    cfg: &SolverConfig,
) -> Result<Array2<f64>> {
    prox_penalty_with_report(v, step, gs, rp, cfg).map(|(z, _)| z)
}

pub fn prox_penalty_with_report(
    v: &Array2<f64>,
    step: f64,
    gs: &GroupStructure,
    rp: &RegParams,
    cfg: &SolverConfig,
) -> Result<(Array2<f64>, ProxReport)> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(HigtError::InvalidParameter(format!(
            "prox step must be positive, got {step}"
        )));
    }
    gs.check_dims(v.nrows(), v.ncols())?;
    let layout = Layout::new(&Array2::from_elem(v.dim(), true));
    let mut op = ProxOperator::new(&layout, gs, rp);
    let flat: Vec<f64> = v.iter().copied().collect();
    let mut out = vec![0.0; flat.len()];
    let report = op.apply(
        &flat,
        step,
        cfg.inner_prox_iters,
        cfg.inner_prox_tol,
        &mut out,
    );
    let z = Array2::from_shape_vec(v.dim(), out)
        .map_err(|e| HigtError::DimensionMismatch(e.to_string()))?;
    Ok((z, report))
}

/// Largest eigenvalue of `X Xᵀ` by power iteration.
pub fn lipschitz_estimate(x: ArrayView2<'_, f64>, max_iters: usize, tol: f64) -> f64 {
    let j = x.nrows();
    if j == 0 {
        return 0.0;
    }
    let mut v = ndarray::Array1::from_elem(j, 1.0 / (j as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..max_iters {
        let w = x.dot(&x.t().dot(&v));
        let nrm = w.dot(&w).sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        v = w / nrm;
        let done = (nrm - est).abs() <= tol * nrm;
        est = nrm;
        if done {
            break;
        }
    }
    est
}

struct Restricted<'a> {
    layout: Layout,
    xa: Array2<f64>,
    y: ArrayView2<'a, f64>,
    prox: ProxOperator,
}

impl<'a> Restricted<'a> {
    fn new(ds: &'a Dataset, gs: &GroupStructure, rp: &RegParams, mask: &Array2<bool>) -> Self {
        let layout = Layout::new(mask);
        let xa = ds.x().select(Axis(0), &layout.cols);
        let prox = ProxOperator::new(&layout, gs, rp);
        Restricted {
            layout,
            xa,
            y: ds.y(),
            prox,
        }
    }

    fn loss(&self, b: &Array2<f64>) -> f64 {
        let r = &self.y - &b.dot(&self.xa);
        0.5 * r.iter().map(|v| v * v).sum::<f64>()
    }

    fn loss_grad(&self, b: &Array2<f64>) -> (f64, Array2<f64>) {
        let r = &self.y - &b.dot(&self.xa);
        let f = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        (f, -r.dot(&self.xa.t()))
    }

    fn penalty(&self, b: &Array2<f64>) -> f64 {
        self.prox.penalty(b.as_slice().expect("standard layout"))
    }

    fn embed(&self, b: &Array2<f64>, j: usize) -> CoefficientMatrix {
        let mut full = Array2::zeros((self.layout.k, j));
        for (a, &col) in self.layout.cols.iter().enumerate() {
            full.column_mut(col).assign(&b.column(a));
        }
        CoefficientMatrix::from_array(full)
    }

    fn restrict(&self, full: &CoefficientMatrix) -> Array2<f64> {
        let mut b = full
            .as_array()
            .select(Axis(1), &self.layout.cols)
            .as_standard_layout()
            .into_owned();
        for (v, &free) in b.iter_mut().zip(&self.layout.free) {
            if !free {
                *v = 0.0;
            }
        }
        b
    }
}

struct StepOutcome {
    z: Array2<f64>,
    loss: f64,
    report: ProxReport,
}

fn prox_step(
    prob: &mut Restricted<'_>,
    point: &Array2<f64>,
    f_point: f64,
    grad: &Array2<f64>,
    lip: &mut f64,
    cfg: &SolverConfig,
    iteration: usize,
) -> Result<StepOutcome> {
    let mut out = vec![0.0; point.len()];
    for _ in 0..64 {
        let step = 1.0 / *lip;
        let v = point - &(grad * step);
        let report = prob.prox.apply(
            v.as_slice().expect("standard layout"),
            step,
            cfg.inner_prox_iters,
            cfg.inner_prox_tol,
            &mut out,
        );
        let z = Array2::from_shape_vec(point.dim(), out.clone())
            .map_err(|e| HigtError::DimensionMismatch(e.to_string()))?;
        let fz = prob.loss(&z);
        if !fz.is_finite() {
            return Err(HigtError::NonFiniteObjective { iteration });
        }
        if cfg.step_rule == StepRule::FixedLipschitz {
            return Ok(StepOutcome {
                z,
                loss: fz,
                report,
            });
        }
        let d = &z - point;
        let model = f_point + (grad * &d).sum() + 0.5 * *lip * d.iter().map(|v| v * v).sum::<f64>();
        if fz <= model + 1e-12 * f_point.abs().max(1.0) {
            return Ok(StepOutcome {
                z,
                loss: fz,
                report,
            });
        }
        *lip *= 2.0;
    }
    Err(HigtError::NonFiniteObjective { iteration })
}

/// Solves the problem with every coefficient outside `survivor` fixed at zero,
/// starting from `B = 0`.
pub fn solve_restricted(
    ds: &Dataset,
    gs: &GroupStructure,
    rp: &RegParams,
    survivor: &SurvivorSet,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    solve_restricted_from(ds, gs, rp, survivor, cfg, None)
}

/// Like [`solve_restricted`], starting from `init` (entries outside the
/// survivor set are dropped).
pub fn solve_restricted_from(
    ds: &Dataset,
    gs: &GroupStructure,
    rp: &RegParams,
    survivor: &SurvivorSet,
    cfg: &SolverConfig,
    init: Option<&CoefficientMatrix>,
) -> Result<FitResult> {
    let start = Instant::now();
    rp.validate()?;
    cfg.validate()?;
    gs.check_dims(ds.k(), ds.j())?;
    if survivor.mask().dim() != (ds.k(), ds.j()) {
        return Err(HigtError::DimensionMismatch(
            "survivor set does not match the data".into(),
        ));
    }
    if let Some(b0) = init {
        if (b0.k(), b0.j()) != (ds.k(), ds.j()) {
            return Err(HigtError::DimensionMismatch(
                "initial coefficients do not match the data".into(),
            ));
        }
    }

    if survivor.is_empty() {
        let y = ds.y();
        let f0 = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
        return Ok(FitResult {
            b: CoefficientMatrix::zeros(ds.k(), ds.j()),
            objective_trace: vec![f0],
            iterations: 0,
            converged: true,
            screen_time: Duration::ZERO,
            solve_time: start.elapsed(),
            survivor: survivor.clone(),
            screen_stats: None,
            lipschitz: 0.0,
            gradient_map_norm: 0.0,
            max_inner_sweeps: 0,
            last_inner_change: 0.0,
        });
    }

    let mut prob = Restricted::new(ds, gs, rp, survivor.mask());
    let mut x = match init {
        Some(b0) => prob.restrict(b0),
        None => Array2::zeros((ds.k(), prob.layout.width())),
    };

    let mut lip = match cfg.step_rule {
        // Power iteration approaches the top eigenvalue from below.
        StepRule::FixedLipschitz => lipschitz_estimate(prob.xa.view(), 100, 1e-6) * 1.001,
        StepRule::Backtracking => prob
            .xa
            .rows()
            .into_iter()
            .map(|r| r.dot(&r))
            .fold(0.0, f64::max),
    };
    if lip <= 0.0 {
        lip = 1.0;
    }

    let mut fx = prob.loss(&x) + prob.penalty(&x);
    if !fx.is_finite() {
        return Err(HigtError::NonFiniteObjective { iteration: 0 });
    }
    let mut trace = vec![fx];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_map = f64::NAN;
    let mut max_sweeps = 0;
    let mut last_change = 0.0;

    for it in 1..=cfg.max_outer_iters {
        iterations = it;
        let prev = fx;
        let (fy, gy) = prob.loss_grad(&y);
        let step = prox_step(&mut prob, &y, fy, &gy, &mut lip, cfg, it)?;
        max_sweeps = max_sweeps.max(step.report.sweeps);
        last_change = step.report.max_dual_change;
        grad_map = lip * (&step.z - &y).iter().map(|v| v * v).sum::<f64>().sqrt();
        let fz = step.loss + prob.penalty(&step.z);
        if !fz.is_finite() {
            return Err(HigtError::NonFiniteObjective { iteration: it });
        }

        if fz <= fx {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = &step.z + &((&step.z - &x) * beta);
            x = step.z;
            fx = fz;
            t = t_next;
        } else {
            // Momentum overshot: restart with a plain proximal step from x.
            t = 1.0;
            let (fxs, gx) = prob.loss_grad(&x);
            let plain = prox_step(&mut prob, &x, fxs, &gx, &mut lip, cfg, it)?;
            max_sweeps = max_sweeps.max(plain.report.sweeps);
            last_change = plain.report.max_dual_change;
            grad_map = lip * (&plain.z - &x).iter().map(|v| v * v).sum::<f64>().sqrt();
            let fp = plain.loss + prob.penalty(&plain.z);
            if !fp.is_finite() {
                return Err(HigtError::NonFiniteObjective { iteration: it });
            }
            if fp <= fx {
                x = plain.z;
                fx = fp;
            }
            y = x.clone();
        }
        trace.push(fx);

        let rel = (prev - fx) / prev.abs().max(f64::MIN_POSITIVE);
        if rel <= cfg.rel_obj_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        b: prob.embed(&x, ds.j()),
        objective_trace: trace,
        iterations,
        converged,
        screen_time: Duration::ZERO,
        solve_time: start.elapsed(),
        survivor: survivor.clone(),
        screen_stats: None,
        lipschitz: lip,
        gradient_map_norm: grad_map,
        max_inner_sweeps: max_sweeps,
        last_inner_change: last_change,
    })
}

/// No screening: every coefficient is free.
pub fn fit_without_screening(
    ds: &Dataset,
    gs: &GroupStructure,
    rp: &RegParams,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    gs.check_dims(ds.k(), ds.j())?;
    solve_restricted(ds, gs, rp, &SurvivorSet::full(gs), cfg)
}

/// Build the tree, screen, then solve on the survivors.
pub fn fit(
    ds: &Dataset,
    gs: &GroupStructure,
    rp: &RegParams,
    tree_cfg: &TreeConfig,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    rp.validate()?;
    gs.check_dims(ds.k(), ds.j())?;
    let start = Instant::now();
    let tree = build_tree(gs, tree_cfg.block_inputs, tree_cfg.block_outputs)?;
    let c = precompute_correlation(ds);
    let (survivor, stats) = screen_with_stats(&tree, &c, gs, rp)?;
    let screen_time = start.elapsed();
    let mut res = solve_restricted(ds, gs, rp, &survivor, cfg)?;
    res.screen_time = screen_time;
    res.screen_stats = Some(stats);
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktViolation {
    pub output: usize,
    pub input: usize,
    /// How far the coefficient's optimality condition is from holding, in
    /// correlation units.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktAudit {
    pub checked: usize,
    pub tolerance: f64,
    pub violations: Vec<KktViolation>,
}

/// Re-checks optimality of the screened (zeroed) coefficients against the
/// converged residual: one unrestricted proximal-gradient step from the fitted
/// `B` must leave every screened coefficient at zero. Violations are reported,
/// not repaired.
pub fn kkt_audit(
    ds: &Dataset,
    gs: &GroupStructure,
    rp: &RegParams,
    result: &FitResult,
    cfg: &SolverConfig,
) -> Result<KktAudit> {
    let b = result.b.as_array();
    let grad = crate::model::smooth_gradient(&result.b, ds)?;
    let lip = lipschitz_estimate(ds.x(), 100, 1e-6).max(f64::MIN_POSITIVE);
    let v = b - &(&grad / lip);
    let audit_cfg = SolverConfig {
        inner_prox_iters: cfg.inner_prox_iters.max(1000),
        ..cfg.clone()
    };
    let z = prox_penalty(&v, 1.0 / lip, gs, rp, &audit_cfg)?;
    let tolerance = 1e-4 * rp.lambda1.max(rp.lambda2).max(rp.lambda3).max(1e-12);
    let mut violations = Vec::new();
    let mut checked = 0;
    for ((k, j), &zv) in z.indexed_iter() {
        if result.survivor.contains(k, j) {
            continue;
        }
        checked += 1;
        let excess = lip * zv.abs();
        if excess > tolerance {
            violations.push(KktViolation {
                output: k,
                input: j,
                excess,
            });
        }
    }
    Ok(KktAudit {
        checked,
        tolerance,
        violations,
    })
}
