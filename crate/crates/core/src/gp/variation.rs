use rand::Rng;

use super::init::{grow_tree, Primitives};
use crate::expr::{ExprTree, Node};

/// Swap a uniformly chosen subtree of each parent. A child deeper than
/// `max_depth` is replaced by a copy of the parent it was rooted in.
pub fn crossover<R: Rng>(
    p1: &ExprTree,
    p2: &ExprTree,
    max_depth: usize,
    rng: &mut R,
) -> (ExprTree, ExprTree) {
    let i = rng.random_range(0..p1.node_count());
    let j = rng.random_range(0..p2.node_count());
    let c1 = p1.replace_subtree(i, &p2.subtree(j));
    let c2 = p2.replace_subtree(j, &p1.subtree(i));
    let guard = |child: ExprTree, parent: &ExprTree| {
        if child.depth() > max_depth {
            parent.clone()
        } else {
            child
        }
    };
    (guard(c1, p1), guard(c2, p2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    /// Replace a uniformly chosen subtree by a freshly grown one.
    Subtree,
    /// Relabel one uniformly chosen node, keeping its arity.
    Point,
}

/// `init_max_depth` bounds freshly grown subtrees, in addition to the room
/// left under `max_depth` at the mutation point.
pub fn mutate<R: Rng>(
    parent: &ExprTree,
    kind: MutationKind,
    prims: &Primitives,
    init_max_depth: usize,
    max_depth: usize,
    rng: &mut R,
) -> ExprTree {
    let i = rng.random_range(0..parent.node_count());
    match kind {
        MutationKind::Subtree => {
            let at = parent.node_depths()[i];
            let budget = init_max_depth.min(max_depth.saturating_sub(at));
            parent.replace_subtree(i, &grow_tree(prims, budget, rng))
        }
        MutationKind::Point => {
            let node = parent.nodes()[i];
            let replacement = match node {
                Node::Lag => return parent.clone(),
                Node::Add | Node::Sub | Node::Mul => {
                    let others: Vec<Node> = prims
                        .functions()
                        .iter()
                        .copied()
                        .filter(|f| f.arity() == 2 && *f != node)
                        .collect();
                    if others.is_empty() {
                        return parent.clone();
                    }
                    others[rng.random_range(0..others.len())]
                }
                Node::Input(_) | Node::Const(_) => prims.random_terminal(rng),
            };
            parent.replace_node(i, replacement)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::gp::GpConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_node_parents() {
        let a = ExprTree::input(0);
        let b = ExprTree::input(0);
        let (c1, c2) = crossover(&a, &b, 17, &mut rng(0));
        assert_eq!((c1, c2), (a, b));
    }

    #[test]
    fn root_swap_and_depth_guard() {
        let a = ExprTree::input(0);
        let b = parse("(x1 + lag(x0))").unwrap();
        // With single-node p1 the p1 point is the root; find a draw that also
        // picks p2's root.
        let mut swapped = false;
        for seed in 0..64 {
            let (c1, c2) = crossover(&a, &b, 17, &mut rng(seed));
            if c1 == b {
                assert_eq!(c2, a);
                swapped = true;
            }
        }
        assert!(swapped);

        let deep = ExprTree::lag_n(ExprTree::input(0), 4);
        for seed in 0..32 {
            let (c1, c2) = crossover(&b, &deep, 4, &mut rng(seed));
            assert!(c1.depth() <= 4 && c2.depth() <= 4);
            assert!(c1 == b || c1.depth() <= 4);
        }
        let (c1, _) = crossover(&ExprTree::lag(ExprTree::input(1)), &deep, 2, &mut rng(3));
        assert!(c1.depth() <= 2);
    }

    #[test]
    fn point_mutation_keeps_arity() {
        let prims = Primitives::new(&GpConfig::default(), 2);
        for seed in 0..50 {
            let c = mutate(&ExprTree::constant(0.5), MutationKind::Point, &prims, 6, 17, &mut rng(seed));
            assert_eq!(c.node_count(), 1);
            assert!(c.root().is_terminal());
        }
        let add = parse("(x0 + x1)").unwrap();
        let mut seen_root_change = false;
        for seed in 0..50 {
            let c = mutate(&add, MutationKind::Point, &prims, 6, 17, &mut rng(seed));
            assert_eq!(c.node_count(), 3);
            if c.root() != Node::Add {
                assert!(matches!(c.root(), Node::Sub | Node::Mul));
                assert_eq!(&c.nodes()[1..], &add.nodes()[1..]);
                seen_root_change = true;
            }
        }
        assert!(seen_root_change);
        let lag = parse("lag(x0)").unwrap();
        for seed in 0..20 {
            let c = mutate(&lag, MutationKind::Point, &prims, 6, 17, &mut rng(seed));
            assert_eq!(c.root(), Node::Lag);
        }
    }

    #[test]
    fn subtree_mutation_stays_in_bounds() {
        let prims = Primitives::new(&GpConfig::default(), 3);
        let t = parse("((x0 + lag(x1)) * (x2 - 0.5))").unwrap();
        for seed in 0..200 {
            let c = mutate(&t, MutationKind::Subtree, &prims, 6, 5, &mut rng(seed));
            c.validate(5, 3).unwrap();
        }
        let leaf = ExprTree::input(0);
        for seed in 0..50 {
            let c = mutate(&leaf, MutationKind::Subtree, &prims, 3, 17, &mut rng(seed));
            assert!(c.depth() <= 3);
        }
    }
}
