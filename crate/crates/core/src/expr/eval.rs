use super::{ExprTree, Node};
use crate::data::DatasetView;
use crate::error::{Error, Result};

/// Intermediate value: constants stay scalar until they meet a series.
enum Val<'a> {
    Scalar(f64),
    Borrowed(&'a [f64]),
    Owned(Vec<f64>),
}

impl<'a> Val<'a> {
    fn into_owned(self, len: usize) -> Vec<f64> {
        match self {
            Val::Scalar(c) => vec![c; len],
            Val::Borrowed(s) => s.to_vec(),
            Val::Owned(v) => v,
        }
    }
}

/// Value of `tree` at every sample of `data`.
///
/// `lag(e)` at a segment's first sample reads `e` at that same sample, so
/// lags never cross the start of the view or a seam between training
/// segments and the output is as long as the view.
pub fn evaluate_series(tree: &ExprTree, data: &DatasetView) -> Result<Vec<f64>> {
    if let Some(k) = tree.max_input() {
        if k >= data.arity() {
            return Err(Error::Evaluation(format!(
                "tree reads x{k} but `{}` has {} input arms",
                data.junction_id(),
                data.arity()
            )));
        }
    }
    let n = data.len();
    let starts = data.segment_starts();
    let mut stack: Vec<Val<'_>> = Vec::with_capacity(tree.depth() + 2);

    for node in tree.nodes().iter().rev() {
        let val = match *node {
            Node::Input(k) => Val::Borrowed(&data.inputs()[k]),
            Node::Const(c) => Val::Scalar(c),
            Node::Lag => match stack.pop().expect("well-formed tree") {
                Val::Scalar(c) => Val::Scalar(c),
                other => {
                    let mut v = other.into_owned(n);
                    lag_in_place(&mut v, starts);
                    Val::Owned(v)
                }
            },
            Node::Add | Node::Sub | Node::Mul => {
                let left = stack.pop().expect("well-formed tree");
                let right = stack.pop().expect("well-formed tree");
                binary(*node, left, right, n)
            }
        };
        stack.push(val);
    }

    let result = stack.pop().expect("well-formed tree");
    debug_assert!(stack.is_empty());
    Ok(result.into_owned(n))
}

fn apply(op: Node, a: f64, b: f64) -> f64 {
    match op {
        Node::Add => a + b,
        Node::Sub => a - b,
        Node::Mul => a * b,
        _ => unreachable!("not a binary operator"),
    }
}

fn binary<'a>(op: Node, left: Val<'a>, right: Val<'a>, n: usize) -> Val<'a> {
    match (left, right) {
        (Val::Scalar(a), Val::Scalar(b)) => Val::Scalar(apply(op, a, b)),
        (Val::Owned(mut a), right) => {
            match right {
                Val::Scalar(b) => a.iter_mut().for_each(|x| *x = apply(op, *x, b)),
                Val::Borrowed(b) => a.iter_mut().zip(b).for_each(|(x, y)| *x = apply(op, *x, *y)),
                Val::Owned(b) => a.iter_mut().zip(&b).for_each(|(x, y)| *x = apply(op, *x, *y)),
            }
            Val::Owned(a)
        }
        (left, Val::Owned(mut b)) => {
            match left {
                Val::Scalar(a) => b.iter_mut().for_each(|y| *y = apply(op, a, *y)),
                Val::Borrowed(a) => b.iter_mut().zip(a).for_each(|(y, x)| *y = apply(op, *x, *y)),
                Val::Owned(_) => unreachable!("handled above"),
            }
            Val::Owned(b)
        }
        (Val::Scalar(a), Val::Borrowed(b)) => Val::Owned(b.iter().map(|y| apply(op, a, *y)).collect()),
        (Val::Borrowed(a), Val::Scalar(b)) => Val::Owned(a.iter().map(|x| apply(op, *x, b)).collect()),
        (Val::Borrowed(a), Val::Borrowed(b)) => {
            debug_assert_eq!(a.len(), n);
            Val::Owned(a.iter().zip(b).map(|(x, y)| apply(op, *x, *y)).collect())
        }
    }
}

/// Shift each segment one sample later, holding its first value.
fn lag_in_place(v: &mut [f64], starts: &[usize]) {
    let n = v.len();
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(n);
        if e > s + 1 {
            v.copy_within(s..e - 1, s + 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::test_support::arb_tree;
    use proptest::prelude::*;

    fn x(k: usize) -> ExprTree {
        ExprTree::input(k)
    }

    fn view(cols: Vec<Vec<f64>>) -> DatasetView {
        let n = cols[0].len();
        DatasetView::from_columns(cols, vec![0.0; n]).unwrap()
    }

    #[test]
    fn identity() {
        let v = view(vec![vec![1.0, 2.0, 3.0]]);
        assert_eq!(evaluate_series(&x(0), &v).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn lag_holds_first_value() {
        let v = view(vec![vec![1.0, 2.0, 3.0]]);
        assert_eq!(
            evaluate_series(&ExprTree::lag(x(0)), &v).unwrap(),
            vec![1.0, 1.0, 2.0]
        );
        let v = view(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(
            evaluate_series(&ExprTree::lag_n(x(0), 2), &v).unwrap(),
            vec![1.0, 1.0, 1.0, 2.0]
        );
    }

    #[test]
    fn weighted_lag_on_constant_stream() {
        let t = ExprTree::constant(0.42) * x(0) + ExprTree::constant(0.42) * ExprTree::lag(x(0));
        let out = evaluate_series(&t, &view(vec![vec![10.0; 3]])).unwrap();
        for v in out {
            assert!((v - 8.4).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn lag_does_not_cross_seams() {
        let v = DatasetView::new(
            "J",
            15,
            vec![vec![1.0, 2.0, 3.0, 10.0, 20.0]],
            vec![0.0; 5],
            vec![0, 3],
        )
        .unwrap();
        assert_eq!(
            evaluate_series(&ExprTree::lag(x(0)), &v).unwrap(),
            vec![1.0, 1.0, 2.0, 10.0, 10.0]
        );
    }

    #[test]
    fn invalid_arm_is_an_error() {
        let v = view(vec![vec![1.0]]);
        assert!(matches!(
            evaluate_series(&x(1), &v),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn constant_tree_fills_series() {
        let v = view(vec![vec![1.0, 5.0]]);
        let t = ExprTree::lag(ExprTree::constant(2.0) * ExprTree::constant(3.0));
        assert_eq!(evaluate_series(&t, &v).unwrap(), vec![6.0, 6.0]);
    }

    /// Naive pointwise evaluator used as an oracle: recursion on the prefix
    /// list with an explicit time index.
    fn eval_at(nodes: &[Node], pos: &mut usize, data: &[Vec<f64>], t: usize) -> f64 {
        let node = nodes[*pos];
        *pos += 1;
        match node {
            Node::Input(k) => data[k][t],
            Node::Const(c) => c,
            Node::Lag => eval_at(nodes, pos, data, t.saturating_sub(1)),
            op => {
                let a = eval_at(nodes, pos, data, t);
                let b = eval_at(nodes, pos, data, t);
                apply(op, a, b)
            }
        }
    }

    proptest! {
        #[test]
        fn matches_pointwise_oracle(
            tree in arb_tree(2, 6),
            cols in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 12), 2),
        ) {
            let v = view(cols.clone());
            let got = evaluate_series(&tree, &v).unwrap();
            for (t, g) in got.iter().enumerate() {
                let want = eval_at(tree.nodes(), &mut 0, &cols, t);
                prop_assert!(g == &want || (g.is_nan() && want.is_nan()), "t={t}: {g} vs {want}");
            }
        }

        #[test]
        fn lag_composition(
            tree in arb_tree(2, 5),
            d in 0usize..6,
            cols in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 16), 2),
        ) {
            let v = view(cols);
            let base = evaluate_series(&tree, &v).unwrap();
            let lagged = evaluate_series(&ExprTree::lag_n(tree, d), &v).unwrap();
            for t in d..base.len() {
                prop_assert!(lagged[t] == base[t - d] || (lagged[t].is_nan() && base[t - d].is_nan()));
            }
        }
    }
}
