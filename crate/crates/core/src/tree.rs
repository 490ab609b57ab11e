//! Two-level screening tree.
//!
//! Leaves are single blocks `B_h^g` (one input group × one output group).
//! Internal nodes are unions of blocks over a run of consecutive input groups
//! and a run of consecutive output groups. A dummy root joins all internal
//! nodes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{HigtError, Result};
use crate::model::GroupStructure;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    DummyRoot,
    Internal,
    Leaf,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::DummyRoot => "root",
            NodeKind::Internal => "internal",
            NodeKind::Leaf => "leaf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockNode {
    pub kind: NodeKind,
    /// Indices into `GroupStructure::input_groups`.
    pub input_group_ids: Vec<usize>,
    /// Indices into `GroupStructure::output_groups`.
    pub output_group_ids: Vec<usize>,
    pub children: Vec<NodeId>,
}

impl BlockNode {
    /// The `(output group, input group)` pairs whose blocks make up this node.
    pub fn block_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.output_group_ids
            .iter()
            .flat_map(move |&o| self.input_group_ids.iter().map(move |&m| (o, m)))
    }

    /// Coefficients `(k, j)` covered by this node's blocks.
    pub fn covered(&self, gs: &GroupStructure) -> BTreeSet<(usize, usize)> {
        let mut rows = BTreeSet::new();
        let mut cols = BTreeSet::new();
        for &o in &self.output_group_ids {
            rows.extend(gs.output_groups()[o].iter().copied());
        }
        for &m in &self.input_group_ids {
            cols.extend(gs.input_groups()[m].iter().copied());
        }
        // A union of all pairs in a (run_H × run_G) product is itself a
        // rectangle: rows of any h in the run times columns of any g in the run.
        rows.iter()
            .flat_map(|&k| cols.iter().map(move |&j| (k, j)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningTree {
    nodes: Vec<BlockNode>,
    root: NodeId,
    block_inputs: usize,
    block_outputs: usize,
}

/// Tiles input groups into runs of `block_inputs` consecutive groups and output
/// groups into runs of `block_outputs`; each pair of runs becomes one internal
/// node. A trailing short run forms its own smaller node.
pub fn build_tree(
    gs: &GroupStructure,
    block_inputs: usize,
    block_outputs: usize,
) -> Result<ScreeningTree> {
    if block_inputs == 0 || block_outputs == 0 {
        return Err(HigtError::InvalidParameter(
            "block sizes must be at least 1".into(),
        ));
    }
    let n_in = gs.input_groups().len();
    let n_out = gs.output_groups().len();
    if n_in == 0 || n_out == 0 {
        return Err(HigtError::EmptyGroups);
    }

    let mut nodes = vec![BlockNode {
        kind: NodeKind::DummyRoot,
        input_group_ids: (0..n_in).collect(),
        output_group_ids: (0..n_out).collect(),
        children: Vec::new(),
    }];
    let input_runs: Vec<Vec<usize>> = (0..n_in)
        .collect::<Vec<_>>()
        .chunks(block_inputs)
        .map(<[usize]>::to_vec)
        .collect();
    let output_runs: Vec<Vec<usize>> = (0..n_out)
        .collect::<Vec<_>>()
        .chunks(block_outputs)
        .map(<[usize]>::to_vec)
        .collect();

    for run_g in &input_runs {
        for run_h in &output_runs {
            let internal = nodes.len();
            nodes.push(BlockNode {
                kind: NodeKind::Internal,
                input_group_ids: run_g.clone(),
                output_group_ids: run_h.clone(),
                children: Vec::new(),
            });
            nodes[0].children.push(internal);
            for &m in run_g {
                for &o in run_h {
                    let leaf = nodes.len();
                    nodes.push(BlockNode {
                        kind: NodeKind::Leaf,
                        input_group_ids: vec![m],
                        output_group_ids: vec![o],
                        children: Vec::new(),
                    });
                    nodes[internal].children.push(leaf);
                }
            }
        }
    }

    Ok(ScreeningTree {
        nodes,
        root: 0,
        block_inputs,
        block_outputs,
    })
}

impl ScreeningTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &BlockNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[BlockNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn block_sizes(&self) -> (usize, usize) {
        (self.block_inputs, self.block_outputs)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Leaf)
            .count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Internal)
            .count()
    }

    /// Preorder depth-first sequence starting at the dummy root; children are
    /// visited in insertion order.
    pub fn dfs_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(self.nodes[id].children.iter().rev());
        }
        order
    }

    /// For each position `t` of `order`, the first position after `t` that is
    /// not a descendant of `order[t]`.
    pub fn skip_targets(&self, order: &[NodeId]) -> Vec<usize> {
        let mut size = vec![1usize; self.nodes.len()];
        for &id in order.iter().rev() {
            size[id] += self.nodes[id]
                .children
                .iter()
                .map(|&c| size[c])
                .sum::<usize>();
        }
        order
            .iter()
            .enumerate()
            .map(|(t, &id)| t + size[id])
            .collect()
    }

    /// Indented text rendering: kind, 1-based group ids, and number of
    /// covered coefficients per node.
    pub fn dump(&self, gs: &GroupStructure) -> String {
        let mut out = String::new();
        self.dump_node(gs, self.root, 0, &mut out);
        out
    }

    fn dump_node(&self, gs: &GroupStructure, id: NodeId, depth: usize, out: &mut String) {
        let n = &self.nodes[id];
        let ids = |v: &[usize]| {
            v.iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let kind = n.kind.as_str();
        let covered = n.covered(gs).len();
        let _ = writeln!(
            out,
            "{:indent$}{kind} g=[{}] h=[{}] coefficients={covered}",
            "",
            ids(&n.input_group_ids),
            ids(&n.output_group_ids),
            indent = depth * 2
        );
        for &c in &n.children {
            self.dump_node(gs, c, depth + 1, out);
        }
    }
}
