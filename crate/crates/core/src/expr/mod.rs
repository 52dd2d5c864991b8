//! Expression-tree genome.
//!
//! Trees are stored as a flat prefix-order node list. A subtree is always a
//! contiguous slice, which keeps crossover and mutation to slice splicing
//! and lets evaluation run as a single reverse sweep over the nodes.
//!
//! The operator set is `{+, -, *, lag}`; terminals are input arms `x_k`
//! and real constants. `lag(e)` at time `t` is `e` at time `t - 1`, so
//! nested lags reach arbitrarily far back without a fixed lag window.

mod eval;
mod parse;
mod simplify;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval::evaluate_series;
pub use parse::parse;
pub use simplify::{canonical_form, simplify, Monomial, Polynomial, SimplifyStatus, Simplified};
pub use stats::{structure_stats, StructureStats};

/// Term-count budget for [`simplify`].
pub const DEFAULT_SIMPLIFY_BUDGET: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Input(usize),
    Const(f64),
    Add,
    Sub,
    Mul,
    Lag,
}

impl Node {
    pub fn arity(self) -> usize {
        match self {
            Node::Input(_) | Node::Const(_) => 0,
            Node::Lag => 1,
            Node::Add | Node::Sub | Node::Mul => 2,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.arity() == 0
    }
}

/// Operators available to evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Add,
    Sub,
    Mul,
    Lag,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Lag];

    pub fn node(self) -> Node {
        match self {
            Op::Add => Node::Add,
            Op::Sub => Node::Sub,
            Op::Mul => Node::Mul,
            Op::Lag => Node::Lag,
        }
    }

    pub fn arity(self) -> usize {
        self.node().arity()
    }
}

/// An expression in prefix order. Always non-empty and well formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ExprTree {
    nodes: Vec<Node>,
}

impl ExprTree {
    /// Build from prefix-ordered nodes, checking that they form exactly one tree.
    pub fn from_prefix(nodes: Vec<Node>) -> Result<Self> {
        let mut open = 1usize;
        for (i, node) in nodes.iter().enumerate() {
            if open == 0 {
                return Err(Error::Evaluation(format!(
                    "prefix sequence has trailing nodes from position {i}"
                )));
            }
            open = open - 1 + node.arity();
        }
        if open != 0 || nodes.is_empty() {
            return Err(Error::Evaluation(
                "prefix sequence is missing operands".into(),
            ));
        }
        Ok(ExprTree { nodes })
    }

    pub fn input(arm: usize) -> Self {
        ExprTree {
            nodes: vec![Node::Input(arm)],
        }
    }

    pub fn constant(value: f64) -> Self {
        ExprTree {
            nodes: vec![Node::Const(value)],
        }
    }

    pub fn lag(child: ExprTree) -> Self {
        let mut nodes = Vec::with_capacity(child.nodes.len() + 1);
        nodes.push(Node::Lag);
        nodes.extend(child.nodes);
        ExprTree { nodes }
    }

    /// `lag` applied `depth` times.
    pub fn lag_n(child: ExprTree, depth: usize) -> Self {
        (0..depth).fold(child, |e, _| ExprTree::lag(e))
    }

    pub fn binary(op: Node, left: ExprTree, right: ExprTree) -> Self {
        assert_eq!(op.arity(), 2, "{op:?} is not a binary operator");
        let mut nodes = Vec::with_capacity(left.nodes.len() + right.nodes.len() + 1);
        nodes.push(op);
        nodes.extend(left.nodes);
        nodes.extend(right.nodes);
        ExprTree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> Node {
        self.nodes[0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// End (exclusive) of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        let mut open = 1usize;
        let mut i = start;
        while open > 0 {
            open = open - 1 + self.nodes[i].arity();
            i += 1;
        }
        i
    }

    pub fn subtree(&self, start: usize) -> ExprTree {
        ExprTree {
            nodes: self.nodes[start..self.subtree_end(start)].to_vec(),
        }
    }

    /// Copy of `self` with the subtree at `start` replaced by `replacement`.
    pub fn replace_subtree(&self, start: usize, replacement: &ExprTree) -> ExprTree {
        let end = self.subtree_end(start);
        let mut nodes =
            Vec::with_capacity(self.nodes.len() - (end - start) + replacement.nodes.len());
        nodes.extend_from_slice(&self.nodes[..start]);
        nodes.extend_from_slice(&replacement.nodes);
        nodes.extend_from_slice(&self.nodes[end..]);
        ExprTree { nodes }
    }

    /// Copy with the single node at `index` swapped for one of equal arity.
    pub fn replace_node(&self, index: usize, node: Node) -> ExprTree {
        assert_eq!(self.nodes[index].arity(), node.arity());
        let mut nodes = self.nodes.clone();
        nodes[index] = node;
        ExprTree { nodes }
    }

    /// Depth of every node (root = 0), in prefix order.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depths = Vec::with_capacity(self.nodes.len());
        // Remaining operand slots per open ancestor.
        let mut stack: Vec<usize> = Vec::new();
        for node in &self.nodes {
            depths.push(stack.len());
            if let Some(top) = stack.last_mut() {
                *top -= 1;
            }
            if node.arity() > 0 {
                stack.push(node.arity());
            }
            while stack.last() == Some(&0) {
                stack.pop();
            }
        }
        depths
    }

    /// Longest root-to-leaf edge count; a single node has depth 0.
    pub fn depth(&self) -> usize {
        self.node_depths().into_iter().max().unwrap_or(0)
    }

    /// Highest input arm referenced, if any.
    pub fn max_input(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Input(k) => Some(*k),
                _ => None,
            })
            .max()
    }

    pub fn uses_op(&self, op: Op) -> bool {
        self.nodes.contains(&op.node())
    }

    /// True when some `lag` node has input arm `arm` beneath it.
    pub fn lags_input(&self, arm: usize) -> bool {
        self.nodes.iter().enumerate().any(|(i, n)| {
            *n == Node::Lag
                && self.nodes[i + 1..self.subtree_end(i)]
                    .iter()
                    .any(|m| *m == Node::Input(arm))
        })
    }

    /// Structural closure check used on every individual in debug builds.
    pub fn validate(&self, max_depth: usize, arity: usize) -> Result<()> {
        ExprTree::from_prefix(self.nodes.clone())?;
        let depth = self.depth();
        if depth > max_depth {
            return Err(Error::Evaluation(format!(
                "tree depth {depth} exceeds the limit {max_depth}"
            )));
        }
        if let Some(k) = self.max_input() {
            if k >= arity {
                return Err(Error::Evaluation(format!(
                    "tree reads x{k} but the data has {arity} input arms"
                )));
            }
        }
        if self
            .nodes
            .iter()
            .any(|n| matches!(n, Node::Const(c) if !c.is_finite()))
        {
            return Err(Error::Evaluation("non-finite constant".into()));
        }
        Ok(())
    }
}

impl std::ops::Add for ExprTree {
    type Output = ExprTree;
    fn add(self, rhs: ExprTree) -> ExprTree {
        ExprTree::binary(Node::Add, self, rhs)
    }
}

impl std::ops::Sub for ExprTree {
    type Output = ExprTree;
    fn sub(self, rhs: ExprTree) -> ExprTree {
        ExprTree::binary(Node::Sub, self, rhs)
    }
}

impl std::ops::Mul for ExprTree {
    type Output = ExprTree;
    fn mul(self, rhs: ExprTree) -> ExprTree {
        ExprTree::binary(Node::Mul, self, rhs)
    }
}

impl TryFrom<String> for ExprTree {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        parse(&s)
    }
}

impl From<ExprTree> for String {
    fn from(t: ExprTree) -> String {
        t.to_string()
    }
}

impl std::str::FromStr for ExprTree {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use proptest::prelude::*;

    /// Random well-formed trees over `arity` inputs up to `depth`.
    pub fn arb_tree(arity: usize, depth: u32) -> impl Strategy<Value = ExprTree> {
        let leaf = prop_oneof![
            (0..arity).prop_map(ExprTree::input),
            (-1.0f64..1.0).prop_map(ExprTree::constant),
        ];
        leaf.prop_recursive(depth, 256, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
                inner.prop_map(ExprTree::lag),
            ]
        })
    }
}
