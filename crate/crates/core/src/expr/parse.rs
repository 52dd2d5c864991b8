//! Text form of expression trees.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := 'lag(' expr ')' | 'x' INT | REAL | '(' expr ')'
//! ```
//!
//! Printing fully parenthesises binary nodes and writes constants in their
//! shortest exact decimal form, so `parse(format(t)) == t` structurally.

use std::fmt;

use super::{ExprTree, Node};
use crate::error::{Error, Result};

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(self.nodes(), &mut 0, f)
    }
}

fn write_node(nodes: &[Node], pos: &mut usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let node = nodes[*pos];
    *pos += 1;
    match node {
        Node::Input(k) => write!(f, "x{k}"),
        Node::Const(c) => write!(f, "{c}"),
        Node::Lag => {
            f.write_str("lag(")?;
            write_node(nodes, pos, f)?;
            f.write_str(")")
        }
        Node::Add | Node::Sub | Node::Mul => {
            let sym = match node {
                Node::Add => "+",
                Node::Sub => "-",
                _ => "*",
            };
            f.write_str("(")?;
            write_node(nodes, pos, f)?;
            write!(f, " {sym} ")?;
            write_node(nodes, pos, f)?;
            f.write_str(")")
        }
    }
}

/// Parse the model grammar. Whitespace is ignored between tokens.
pub fn parse(text: &str) -> Result<ExprTree> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let tree = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::ExprParse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8) -> Result<()> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", byte as char)))
        }
    }

    fn expr(&mut self) -> Result<ExprTree> {
        let mut left = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    left = left + self.term()?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    left = left - self.term()?;
                }
                _ => return Ok(left),
            }
        }
    }

    fn term(&mut self) -> Result<ExprTree> {
        let mut left = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            left = left * self.factor()?;
        }
        Ok(left)
    }

    fn factor(&mut self) -> Result<ExprTree> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(b'l') => {
                if !self.src[self.pos..].starts_with(b"lag") {
                    return Err(self.error("unknown identifier"));
                }
                self.pos += 3;
                self.expect(b'(')?;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(ExprTree::lag(inner))
            }
            Some(b'x') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if start == self.pos {
                    return Err(self.error("expected an input index after `x`"));
                }
                let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let arm = digits.parse().map_err(|_| Error::ExprParse {
                    offset: start,
                    message: "input index out of range".into(),
                })?;
                Ok(ExprTree::input(arm))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' || c == b'-' => self.number(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<ExprTree> {
        let start = self.pos;
        if self.src[self.pos] == b'-' {
            self.pos += 1;
        }
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exponent_sign =
                (c == b'-' || c == b'+') && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exponent_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| Error::ExprParse {
            offset: start,
            message: format!("invalid number `{text}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::ExprParse {
                offset: start,
                message: format!("number `{text}` is not finite"),
            });
        }
        Ok(ExprTree::constant(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::test_support::arb_tree;
    use proptest::prelude::*;

    #[test]
    fn formats_lagged_sum() {
        let t = ExprTree::input(0) + ExprTree::lag(ExprTree::input(1));
        assert_eq!(t.to_string(), "(x0 + lag(x1))");
    }

    #[test]
    fn parses_nested_lag() {
        assert_eq!(
            parse("lag(lag(x2))").unwrap(),
            ExprTree::lag(ExprTree::lag(ExprTree::input(2)))
        );
    }

    #[test]
    fn reports_offset_of_truncation() {
        match parse("(x0 +") {
            Err(Error::ExprParse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_whitespace() {
        let t = parse(" 0.42 * x0+0.42*lag( x0 ) - 2 ").unwrap();
        let c = ExprTree::constant;
        let x0 = ExprTree::input(0);
        assert_eq!(t, c(0.42) * x0.clone() + c(0.42) * ExprTree::lag(x0) - c(2.0));
    }

    #[test]
    fn negative_and_exponent_constants() {
        let c = ExprTree::constant;
        assert_eq!(
            parse("(x0 - -0.5)").unwrap(),
            ExprTree::input(0) - c(-0.5)
        );
        assert_eq!(parse("1e-3").unwrap(), c(1e-3));
        assert!(parse("lag x0").is_err());
        assert!(parse("x").is_err());
        assert!(parse("y0").is_err());
        assert!(parse("x0 x1").is_err());
    }

    proptest! {
        #[test]
        fn parse_inverts_format(tree in arb_tree(5, 8)) {
            let text = tree.to_string();
            prop_assert_eq!(parse(&text).unwrap(), tree);
        }
    }
}
