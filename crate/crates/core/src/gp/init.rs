use rand::Rng;

use super::GpConfig;
use crate::expr::{ExprTree, Node};

/// The function and terminal sets a run draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitives {
    functions: Vec<Node>,
    arity: usize,
    constant_range: Option<(f64, f64)>,
}

impl Primitives {
    pub fn new(config: &GpConfig, arity: usize) -> Self {
        let mut functions: Vec<Node> = Vec::new();
        for op in &config.operators {
            if !functions.contains(&op.node()) {
                functions.push(op.node());
            }
        }
        Primitives {
            functions,
            arity,
            constant_range: config.constant_range,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn functions(&self) -> &[Node] {
        &self.functions
    }

    fn terminal_count(&self) -> usize {
        self.arity + usize::from(self.constant_range.is_some())
    }

    pub(crate) fn random_terminal<R: Rng>(&self, rng: &mut R) -> Node {
        let k = rng.random_range(0..self.terminal_count());
        match self.constant_range {
            Some((lo, hi)) if k == self.arity => Node::Const(rng.random_range(lo..hi)),
            _ => Node::Input(k),
        }
    }

    fn random_function<R: Rng>(&self, rng: &mut R) -> Node {
        self.functions[rng.random_range(0..self.functions.len())]
    }
}

fn build<R: Rng>(
    p: &Primitives,
    depth: usize,
    full: bool,
    root_is_function: bool,
    rng: &mut R,
    out: &mut Vec<Node>,
) {
    let function = depth > 0
        && (full || root_is_function || {
            let nf = p.functions.len();
            rng.random_range(0..nf + p.terminal_count()) < nf
        });
    if !function {
        out.push(p.random_terminal(rng));
        return;
    }
    let node = p.random_function(rng);
    out.push(node);
    for _ in 0..node.arity() {
        build(p, depth - 1, full, false, rng, out);
    }
}

/// A "grow" tree no deeper than `max_depth`; a function is picked over a
/// terminal in proportion to the sizes of the two sets.
pub fn grow_tree<R: Rng>(p: &Primitives, max_depth: usize, rng: &mut R) -> ExprTree {
    let mut nodes = Vec::new();
    build(p, max_depth, false, false, rng, &mut nodes);
    ExprTree::from_prefix(nodes).expect("generated trees are well formed")
}

/// Ramped half-and-half: even indices are full trees and odd ones grown,
/// with target depths cycling through `init_depth_range`. Roots are always
/// functions when the target depth allows.
pub fn init_population<R: Rng>(config: &GpConfig, arity: usize, rng: &mut R) -> Vec<ExprTree> {
    let p = Primitives::new(config, arity);
    let (lo, hi) = config.init_depth_range;
    let span = hi - lo + 1;
    (0..config.population_size)
        .map(|i| {
            let depth = lo + (i / 2) % span;
            let mut nodes = Vec::new();
            build(&p, depth, i % 2 == 0, true, rng, &mut nodes);
            ExprTree::from_prefix(nodes).expect("generated trees are well formed")
        })
        .collect()
}
