//! Text syntax for integer sets: `[n] -> { [i, j] : 0 <= i, j < n and i <= j }`.

use super::affine::{AffineExpr, Constraint};
use super::{Assumptions, BasicSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Op(&'static str),
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    const OPS: [&str; 17] = [
        "->", "<=", ">=", "==", "<", ">", "=", "+", "-", "*", "(", ")", "[", "]", "{", "}", ":",
    ];
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == ',' {
            out.push((Tok::Op(","), i));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            let v = text[start..i]
                .parse()
                .map_err(|_| Error::syntax("integer literal out of range", start))?;
            out.push((Tok::Int(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
            continue;
        }
        for op in OPS {
            if text[i..].starts_with(op) {
                out.push((Tok::Op(op), i));
                i += op.len();
                continue 'outer;
            }
        }
        return Err(Error::syntax(format!("unexpected character `{c}`"), i));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    text: &'a str,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Result<Self> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
            text,
        })
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.text.len(), |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(Tok::Op(o)) if *o == op)
    }

    fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Error::syntax(format!("expected `{op}`"), self.offset()))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(Error::syntax("expected identifier", self.offset())),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>> {
        self.expect_op("[")?;
        let mut names = Vec::new();
        if !self.peek_op("]") {
            loop {
                names.push(self.ident()?);
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op("]")?;
        Ok(names)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    // affine := term (('+'|'-') term)*
    fn affine(&mut self) -> Result<AffineExpr> {
        let mut acc = if self.eat_op("-") {
            -self.product()?
        } else {
            self.product()?
        };
        loop {
            if self.eat_op("+") {
                acc = acc + self.product()?;
            } else if self.eat_op("-") {
                acc = acc - self.product()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<AffineExpr> {
        let start = self.offset();
        let mut acc = self.atom()?;
        while self.eat_op("*") {
            let rhs = self.atom()?;
            acc = match (acc.as_constant(), rhs.as_constant()) {
                (Some(k), _) => rhs.scale(k),
                (_, Some(k)) => acc.scale(k),
                _ => return Err(Error::syntax("non-affine term: product of two variables", start)),
            };
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<AffineExpr> {
        let off = self.offset();
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                // `16i` style juxtaposition
                if let Some(Tok::Ident(s)) = self.peek().cloned() {
                    if s != "and" && s != "mod" {
                        self.pos += 1;
                        return Ok(AffineExpr::term(&s, v));
                    }
                }
                Ok(AffineExpr::constant(v))
            }
            Some(Tok::Ident(s)) if s != "and" && s != "mod" => {
                self.pos += 1;
                Ok(AffineExpr::var(&s))
            }
            Some(Tok::Op("(")) => {
                self.pos += 1;
                let e = self.affine()?;
                self.expect_op(")")?;
                Ok(e)
            }
            Some(Tok::Op("-")) => {
                self.pos += 1;
                Ok(-self.atom()?)
            }
            _ => Err(Error::syntax("expected affine expression", off)),
        }
    }

    fn comparison_op(&mut self) -> Option<&'static str> {
        for op in ["<=", "<", ">=", ">", "=", "=="] {
            if self.eat_op(op) {
                return Some(op);
            }
        }
        None
    }

    /// A chain like `0 <= i, j < n`, expanded pairwise.
    fn chain(&mut self, out: &mut Vec<Constraint>) -> Result<()> {
        let mut groups = vec![self.affine_list()?];
        let mut ops = Vec::new();
        while let Some(op) = self.comparison_op() {
            ops.push(op);
            groups.push(self.affine_list()?);
        }
        if ops.is_empty() {
            return Err(Error::syntax("expected comparison", self.offset()));
        }
        for (k, op) in ops.iter().enumerate() {
            for a in &groups[k] {
                for b in &groups[k + 1] {
                    out.push(relation(a.clone(), op, b.clone()));
                }
            }
        }
        Ok(())
    }

    fn affine_list(&mut self) -> Result<Vec<AffineExpr>> {
        let mut v = vec![self.affine()?];
        while self.eat_op(",") {
            v.push(self.affine()?);
        }
        Ok(v)
    }

    fn constraints(&mut self) -> Result<Vec<Constraint>> {
        let mut out = Vec::new();
        loop {
            self.chain(&mut out)?;
            if self.peek_kw("and") {
                self.pos += 1;
            } else {
                return Ok(out);
            }
        }
    }
}

fn relation(a: AffineExpr, op: &str, b: AffineExpr) -> Constraint {
    match op {
        "<=" => Constraint::le(a, b),
        "<" => Constraint::le(a + 1, b),
        ">=" => Constraint::le(b, a),
        ">" => Constraint::le(b + 1, a),
        _ => Constraint::eq_zero(a - b),
    }
}

pub fn parse_set(text: &str) -> Result<BasicSet> {
    let mut p = Parser::new(text)?;
    let mut declared_params = Vec::new();
    if p.peek_op("[") {
        declared_params = p.ident_list()?;
        p.expect_op("->")?;
    }
    p.expect_op("{")?;
    let dims = p.ident_list()?;
    let constraints = if p.eat_op(":") {
        p.constraints()?
    } else {
        Vec::new()
    };
    p.expect_op("}")?;
    if !p.at_end() {
        return Err(Error::syntax("trailing input after set", p.offset()));
    }
    let mut params = declared_params;
    for c in &constraints {
        for v in c.expr().vars() {
            if !dims.iter().any(|d| d == v) && !params.iter().any(|q| q == v) {
                params.push(v.to_string());
            }
        }
    }
    BasicSet::new(dims, params, constraints)
}

/// One assumption: `expr mod K = 0` or a chain of affine comparisons.
pub(crate) enum Assumption {
    Divisible(AffineExpr, i64),
    Constraints(Vec<Constraint>),
}

pub(crate) fn parse_assumption(text: &str) -> Result<Assumption> {
    let mut p = Parser::new(text)?;
    let start = p.pos;
    let lhs = p.affine()?;
    if p.peek_kw("mod") {
        p.pos += 1;
        let off = p.offset();
        let modulus = match p.peek().cloned() {
            Some(Tok::Int(k)) => {
                p.pos += 1;
                k
            }
            _ => return Err(Error::syntax("expected integer modulus", off)),
        };
        if !(p.eat_op("=") || p.eat_op("==")) {
            return Err(Error::syntax("expected `= 0` after modulus", p.offset()));
        }
        let off = p.offset();
        if p.peek() != Some(&Tok::Int(0)) {
            return Err(Error::syntax("only `mod K = 0` assumptions are supported", off));
        }
        p.pos += 1;
        if !p.at_end() {
            return Err(Error::syntax("trailing input", p.offset()));
        }
        if modulus < 2 {
            return Err(Error::syntax("modulus must be at least 2", off));
        }
        return Ok(Assumption::Divisible(lhs, modulus));
    }
    p.pos = start;
    let cs = p.constraints()?;
    if !p.at_end() {
        return Err(Error::syntax("trailing input", p.offset()));
    }
    Ok(Assumption::Constraints(cs))
}

impl Assumptions {
    /// Parses and appends an assumption; rejects any name in `forbidden`.
    pub fn add_text(&mut self, text: &str, is_forbidden: &dyn Fn(&str) -> bool) -> Result<()> {
        match parse_assumption(text)? {
            Assumption::Divisible(e, m) => {
                if let Some(v) = e.vars().find(|v| is_forbidden(v)) {
                    return Err(Error::set(format!("assumption mentions iname `{v}`")));
                }
                self.add_divisibility(e, m)
            }
            Assumption::Constraints(cs) => {
                for c in &cs {
                    if let Some(v) = c.expr().vars().find(|v| is_forbidden(v)) {
                        return Err(Error::set(format!("assumption mentions iname `{v}`")));
                    }
                }
                for c in cs {
                    self.add_constraint(c);
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comma_lists_expand() {
        let s = parse_set("{[i,j,n,n2]: 0<=i,j<npart and 0<=n,n2<3}").unwrap();
        assert_eq!(s.dims(), ["i", "j", "n", "n2"]);
        assert_eq!(s.params(), ["npart"]);
        assert_eq!(s.constraints().len(), 8);
    }

    #[test]
    fn nonaffine_rejected() {
        let err = parse_set("{[i]: 0 <= i*n < 4}").unwrap_err();
        assert!(matches!(err, Error::Syntax { .. }), "{err}");
    }

    #[test]
    fn syntax_error_has_offset() {
        match parse_set("{[i]: 0 <= i <}") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn assumption_forms() {
        assert!(matches!(parse_assumption("n mod 16 = 0").unwrap(), Assumption::Divisible(_, 16)));
        assert!(matches!(parse_assumption("n >= 1").unwrap(), Assumption::Constraints(_)));
        assert!(parse_assumption("n mod 1 = 0").is_err());
    }
}
