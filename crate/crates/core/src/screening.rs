//! Block screening over the two-level tree.
//!
//! With `B = 0`, the optimality condition for coefficient `(k, j)` involves only
//! the correlation `c_kj = y_k x_jᵀ`. A leaf block `B_h^g` is certified zero
//! when
//!
//! ```text
//! L = Σ_{k∈h} Σ_{j∈g} max(|c_kj| − λ1 w_kj, 0)  ≤  R = |λ2 ρ √|h| − λ3 ν √|g||
//! ```
//!
//! and an internal node when the sum of its leaves' `L` is at most the sum of
//! their `R`. A screened internal node's leaves are never evaluated.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{HigtError, Result};
use crate::model::{Dataset, GroupStructure, RegParams};
use crate::tree::{BlockNode, NodeKind, ScreeningTree};

/// `C = Y Xᵀ`, `K×J`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(Array2<f64>);

impl CorrelationMatrix {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn from_array(c: Array2<f64>) -> Self {
        CorrelationMatrix(c)
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.0[[k, j]]
    }
}

pub fn precompute_correlation(ds: &Dataset) -> CorrelationMatrix {
    CorrelationMatrix(ds.y().dot(&ds.x().t()))
}

/// `min_{s∈[−1,1]} |c − λ1 s| = max(|c| − λ1, 0)`.
pub fn soft_residual(c: f64, lambda1: f64) -> f64 {
    (c.abs() - lambda1).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuleEvaluation {
    pub lhs: f64,
    pub rhs: f64,
    pub screened: bool,
}

impl RuleEvaluation {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        RuleEvaluation {
            lhs,
            rhs,
            screened: lhs <= rhs,
        }
    }

    /// Multi-block rule from per-block `(L, R)` terms.
    pub fn combine(terms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (lhs, rhs) = terms
            .into_iter()
            .fold((0.0, 0.0), |(l, r), (lo, ro)| (l + lo, r + ro));
        RuleEvaluation::new(lhs, rhs)
    }
}

/// `(L_om, R_om)` for output group `o` and input group `m`.
pub fn block_terms(
    o: usize,
    m: usize,
    c: &CorrelationMatrix,
    gs: &GroupStructure,
    rp: &RegParams,
) -> (f64, f64) {
    let h = &gs.output_groups()[o];
    let g = &gs.input_groups()[m];
    let w = gs.element_weights();
    let mut lhs = 0.0;
    for &k in h {
        for &j in g {
            lhs += soft_residual(c.0[[k, j]], rp.lambda1 * w[[k, j]]);
        }
    }
    let row_budget = rp.lambda2 * gs.input_weights()[m] * (h.len() as f64).sqrt();
    let col_budget = rp.lambda3 * gs.output_weights()[o] * (g.len() as f64).sqrt();
    (lhs, (row_budget - col_budget).abs())
}

pub fn leaf_rule(
    node: &BlockNode,
    c: &CorrelationMatrix,
    gs: &GroupStructure,
    rp: &RegParams,
) -> Result<RuleEvaluation> {
    if node.kind != NodeKind::Leaf {
        return Err(HigtError::NotLeaf(node.kind.as_str()));
    }
    let (lhs, rhs) = block_terms(node.output_group_ids[0], node.input_group_ids[0], c, gs, rp);
    Ok(RuleEvaluation::new(lhs, rhs))
}

pub fn block_rule(
    node: &BlockNode,
    c: &CorrelationMatrix,
    gs: &GroupStructure,
    rp: &RegParams,
) -> Result<RuleEvaluation> {
    if node.kind != NodeKind::Internal {
        return Err(HigtError::NotInternal(node.kind.as_str()));
    }
    Ok(RuleEvaluation::combine(
        node.block_pairs()
            .map(|(o, m)| block_terms(o, m, c, gs, rp)),
    ))
}

/// Coefficients kept for the restricted solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivorSet {
    mask: Array2<bool>,
    input_groups: BTreeSet<usize>,
    output_groups: BTreeSet<usize>,
    /// `(output group, input group)` of every leaf that failed its rule.
    blocks: Vec<(usize, usize)>,
}

impl SurvivorSet {
    pub fn empty(k: usize, j: usize) -> Self {
        SurvivorSet {
            mask: Array2::from_elem((k, j), false),
            input_groups: BTreeSet::new(),
            output_groups: BTreeSet::new(),
            blocks: Vec::new(),
        }
    }

    /// Every coefficient and every group; the no-screening baseline.
    pub fn full(gs: &GroupStructure) -> Self {
        let (k, j) = (gs.n_outputs(), gs.n_inputs());
        SurvivorSet {
            mask: Array2::from_elem((k, j), true),
            input_groups: (0..gs.input_groups().len()).collect(),
            output_groups: (0..gs.output_groups().len()).collect(),
            blocks: (0..gs.output_groups().len())
                .flat_map(|o| (0..gs.input_groups().len()).map(move |m| (o, m)))
                .collect(),
        }
    }

    /// Adds the rectangle `h_o × g_m` and both group ids.
    pub fn add_block(&mut self, o: usize, m: usize, gs: &GroupStructure) {
        for &k in &gs.output_groups()[o] {
            for &j in &gs.input_groups()[m] {
                self.mask[[k, j]] = true;
            }
        }
        self.output_groups.insert(o);
        self.input_groups.insert(m);
        self.blocks.push((o, m));
    }

    pub fn insert(&mut self, k: usize, j: usize) {
        self.mask[[k, j]] = true;
    }

    pub fn contains(&self, k: usize, j: usize) -> bool {
        self.mask[[k, j]]
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn coefficient_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&v| v)
    }

    pub fn input_groups(&self) -> &BTreeSet<usize> {
        &self.input_groups
    }

    pub fn output_groups(&self) -> &BTreeSet<usize> {
        &self.output_groups
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn coefficients(&self) -> Vec<(usize, usize)> {
        self.mask
            .indexed_iter()
            .filter(|(_, &v)| v)
            .map(|(idx, _)| idx)
            .collect()
    }

    /// Number of penalty groups (row groups `β_k^{g_m}` and column groups
    /// `β_{h_o}^j`) that contain at least one surviving coefficient.
    pub fn penalty_group_count(&self, gs: &GroupStructure) -> usize {
        let mut count = 0;
        for k in 0..gs.n_outputs() {
            for g in gs.input_groups() {
                if g.iter().any(|&j| self.mask[[k, j]]) {
                    count += 1;
                }
            }
        }
        for j in 0..gs.n_inputs() {
            for h in gs.output_groups() {
                if h.iter().any(|&k| self.mask[[k, j]]) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Entries of `support` not kept by screening.
    pub fn missed<'a>(
        &'a self,
        support: impl IntoIterator<Item = (usize, usize)> + 'a,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        support.into_iter().filter(|&(k, j)| !self.mask[[k, j]])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScreenStats {
    /// Nodes whose rule was evaluated.
    pub nodes_visited: usize,
    /// Nodes never evaluated because an ancestor was screened.
    pub nodes_skipped: usize,
    pub internal_evaluated: usize,
    pub internal_screened: usize,
    pub leaves_evaluated: usize,
    pub leaves_screened: usize,
    /// Coefficients outside every block, kept by the plain ℓ1 test.
    pub uncovered_kept: usize,
}

pub fn screen(
    tree: &ScreeningTree,
    c: &CorrelationMatrix,
    gs: &GroupStructure,
    rp: &RegParams,
) -> Result<SurvivorSet> {
    screen_with_stats(tree, c, gs, rp).map(|(v, _)| v)
}

/// Depth-first traversal with subtree skipping. Only leaves that fail their
/// rule add coefficients; an internal node that fails only causes descent.
pub fn screen_with_stats(
    tree: &ScreeningTree,
    c: &CorrelationMatrix,
    gs: &GroupStructure,
    rp: &RegParams,
) -> Result<(SurvivorSet, ScreenStats)> {
    let (k, j) = c.0.dim();
    gs.check_dims(k, j)?;
    let order = tree.dfs_order();
    let skip = tree.skip_targets(&order);
    let mut survivors = SurvivorSet::empty(k, j);
    let mut stats = ScreenStats::default();

    let mut t = 0;
    while t < order.len() {
        let node = tree.node(order[t]);
        match node.kind {
            NodeKind::DummyRoot => t += 1,
            NodeKind::Internal => {
                stats.nodes_visited += 1;
                stats.internal_evaluated += 1;
                if block_rule(node, c, gs, rp)?.screened {
                    stats.internal_screened += 1;
                    stats.nodes_skipped += skip[t] - t - 1;
                    t = skip[t];
                } else {
                    t += 1;
                }
            }
            NodeKind::Leaf => {
                stats.nodes_visited += 1;
                stats.leaves_evaluated += 1;
                if leaf_rule(node, c, gs, rp)?.screened {
                    stats.leaves_screened += 1;
                } else {
                    survivors.add_block(node.output_group_ids[0], node.input_group_ids[0], gs);
                }
                t += 1;
            }
        }
    }

    // Coefficients in no leaf block carry only the ℓ1 penalty (plus possibly
    // one kind of group term); keep them when the ℓ1 test at B = 0 fails.
    let mut in_rows = vec![false; k];
    let mut in_cols = vec![false; j];
    for h in gs.output_groups() {
        h.iter().for_each(|&r| in_rows[r] = true);
    }
    for g in gs.input_groups() {
        g.iter().for_each(|&col| in_cols[col] = true);
    }
    let w = gs.element_weights();
    for ((r, col), &v) in c.0.indexed_iter() {
        if !(in_rows[r] && in_cols[col]) && soft_residual(v, rp.lambda1 * w[[r, col]]) > 0.0 {
            survivors.insert(r, col);
            stats.uncovered_kept += 1;
        }
    }

    Ok((survivors, stats))
}
