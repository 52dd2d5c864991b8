use serde::{Deserialize, Serialize};

use super::{ExprTree, Node};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureStats {
    pub node_count: usize,
    pub depth: usize,
    pub lag_count: usize,
    /// Occurrences of each input arm; index `k` counts `x_k`. Trailing arms
    /// that never occur are omitted, so use [`StructureStats::occurrences`].
    pub input_occurrences: Vec<usize>,
}

impl StructureStats {
    pub fn occurrences(&self, arm: usize) -> usize {
        self.input_occurrences.get(arm).copied().unwrap_or(0)
    }
}

pub fn structure_stats(tree: &ExprTree) -> StructureStats {
    let mut input_occurrences = vec![0; tree.max_input().map_or(0, |k| k + 1)];
    let mut lag_count = 0;
    for node in tree.nodes() {
        match node {
            Node::Input(k) => input_occurrences[*k] += 1,
            Node::Lag => lag_count += 1,
            _ => {}
        }
    }
    StructureStats {
        node_count: tree.node_count(),
        depth: tree.depth(),
        lag_count,
        input_occurrences,
    }
}
