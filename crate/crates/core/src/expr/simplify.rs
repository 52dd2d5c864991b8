//! Algebraic simplification into sums of weighted lagged-input products.
//!
//! A tree over `{+, -, *, lag}` is a polynomial in the lagged inputs
//! `lag^d(x_k)`: `lag` distributes over every operator and leaves constants
//! alone, so expansion never changes the value at any sample, seams
//! included. Simplification is for reporting only; evolution never sees it.

use std::collections::BTreeMap;
use std::fmt;

use super::{ExprTree, Node, DEFAULT_SIMPLIFY_BUDGET};

/// Product of lagged inputs, as sorted `(arm, lag depth)` factors.
/// The empty monomial is the constant term.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<(usize, u32)>);

impl Monomial {
    pub fn factors(&self) -> &[(usize, u32)] {
        &self.0
    }

    pub fn is_constant(&self) -> bool {
        self.0.is_empty()
    }

    fn times(&self, other: &Monomial) -> Monomial {
        let mut f = self.0.clone();
        f.extend_from_slice(&other.0);
        f.sort_unstable();
        Monomial(f)
    }

    fn lagged(&self) -> Monomial {
        Monomial(self.0.iter().map(|&(k, d)| (k, d + 1)).collect())
    }

    fn to_tree(&self) -> Option<ExprTree> {
        self.0
            .iter()
            .map(|&(k, d)| ExprTree::lag_n(ExprTree::input(k), d as usize))
            .reduce(|a, b| a * b)
    }
}

// Constant term sorts last; otherwise by factor list.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.is_constant()
            .cmp(&other.is_constant())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Expanded form: coefficient per monomial, exact zeros dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    fn constant(c: f64) -> Self {
        let mut p = Polynomial::default();
        p.add_term(Monomial(Vec::new()), c);
        p
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        let slot = self.terms.entry(m).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            // Cancellation; keeps the term count honest.
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, factors: &[(usize, u32)]) -> f64 {
        let mut key = factors.to_vec();
        key.sort_unstable();
        self.terms.get(&Monomial(key)).copied().unwrap_or(0.0)
    }

    /// True when every term is at most linear in the lagged inputs.
    pub fn is_affine(&self) -> bool {
        self.terms.keys().all(|m| m.0.len() <= 1)
    }

    fn scaled_sum(&self, other: &Polynomial, sign: f64) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), sign * c);
        }
        out
    }

    fn product(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::default();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.times(mb), ca * cb);
            }
        }
        out
    }

    fn lagged(&self) -> Polynomial {
        Polynomial {
            terms: self.terms.iter().map(|(m, c)| (m.lagged(), *c)).collect(),
        }
    }

    /// Emit as a left-leaning sum; negative coefficients become subtractions.
    pub fn to_tree(&self) -> ExprTree {
        let mut acc: Option<ExprTree> = None;
        for (m, c) in &self.terms {
            let magnitude = if acc.is_some() { c.abs() } else { *c };
            let term = match m.to_tree() {
                None => ExprTree::constant(magnitude),
                Some(product) if magnitude == 1.0 => product,
                Some(product) => ExprTree::constant(magnitude) * product,
            };
            acc = Some(match acc {
                None => term,
                Some(a) if *c < 0.0 => a - term,
                Some(a) => a + term,
            });
        }
        acc.unwrap_or_else(|| ExprTree::constant(0.0))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let magnitude = if i == 0 { *c } else { c.abs() };
            if i > 0 {
                f.write_str(if *c < 0.0 { " - " } else { " + " })?;
            }
            if m.is_constant() {
                write!(f, "{magnitude}")?;
                continue;
            }
            if magnitude != 1.0 {
                write!(f, "{magnitude} * ")?;
            }
            for (j, &(k, d)) in m.0.iter().enumerate() {
                if j > 0 {
                    f.write_str(" * ")?;
                }
                for _ in 0..d {
                    f.write_str("lag(")?;
                }
                write!(f, "x{k}")?;
                for _ in 0..d {
                    f.write_str(")")?;
                }
            }
        }
        Ok(())
    }
}

/// Expand a tree, giving up once any intermediate polynomial has more than
/// `budget` terms.
pub fn canonical_form(tree: &ExprTree, budget: usize) -> Option<Polynomial> {
    expand(tree.nodes(), &mut 0, budget)
}

fn expand(nodes: &[Node], pos: &mut usize, budget: usize) -> Option<Polynomial> {
    let node = nodes[*pos];
    *pos += 1;
    let p = match node {
        Node::Const(c) => Polynomial::constant(c),
        Node::Input(k) => {
            let mut p = Polynomial::default();
            p.add_term(Monomial(vec![(k, 0)]), 1.0);
            p
        }
        Node::Lag => expand(nodes, pos, budget)?.lagged(),
        Node::Add | Node::Sub | Node::Mul => {
            let a = expand(nodes, pos, budget)?;
            let b = expand(nodes, pos, budget)?;
            match node {
                Node::Add => a.scaled_sum(&b, 1.0),
                Node::Sub => a.scaled_sum(&b, -1.0),
                _ => a.product(&b),
            }
        }
    };
    (p.term_count() <= budget).then_some(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplifyStatus {
    /// The tree is the expanded weighted sum.
    Canonical,
    /// Expansion succeeded but was larger than the input, which is kept.
    KeptSmaller,
    /// Expansion exceeded the term budget; the input is returned unchanged.
    OverBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simplified {
    pub tree: ExprTree,
    pub status: SimplifyStatus,
}

/// Constant folding, distribution, lag pushing and like-term collection.
///
/// Returns the expanded sum when it fits the default budget and is no larger
/// than the input; otherwise the input tree comes back with a status saying
/// why. Use [`canonical_form`] for the expanded polynomial regardless of size.
pub fn simplify(tree: &ExprTree) -> Simplified {
    simplify_with_budget(tree, DEFAULT_SIMPLIFY_BUDGET)
}

pub fn simplify_with_budget(tree: &ExprTree, budget: usize) -> Simplified {
    match canonical_form(tree, budget) {
        None => Simplified {
            tree: tree.clone(),
            status: SimplifyStatus::OverBudget,
        },
        Some(poly) => {
            let emitted = poly.to_tree();
            if emitted.node_count() <= tree.node_count() {
                Simplified {
                    tree: emitted,
                    status: SimplifyStatus::Canonical,
                }
            } else {
                Simplified {
                    tree: tree.clone(),
                    status: SimplifyStatus::KeptSmaller,
                }
            }
        }
    }
}
