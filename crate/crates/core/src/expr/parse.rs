//! Parser for expressions and kernel-body statements.

use super::{BinOp, CmpOp, Expr, RedOp, RuleCall, SubstitutionRule, UnOp};
use crate::error::{Error, Result};
use crate::types::DType;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Op(&'static str),
}

const OPS: [&str; 17] = [
    "**", "<=", ">=", "==", "!=", "<", ">", "!", "+", "-", "*", "/", "(", ")", "[", "]", "$",
];

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
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
        let starts_number = c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()));
        if starts_number {
            let start = i;
            let mut is_float = false;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                is_float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    is_float = true;
                    i = j;
                }
            }
            let lit = &text[start..i];
            let tok = if is_float {
                Tok::Float(lit.parse().map_err(|_| Error::syntax("bad float literal", start))?)
            } else {
                Tok::Int(lit.parse().map_err(|_| Error::syntax("integer literal out of range", start))?)
            };
            out.push((tok, start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
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

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    base: usize,
}

impl Parser {
    fn new(text: &str, base: usize) -> Result<Self> {
        let toks = lex(text).map_err(|e| shift(e, base))?;
        Ok(Parser {
            toks,
            pos: 0,
            end: text.len(),
            base,
        })
    }

    fn offset(&self) -> usize {
        self.base + self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::syntax(msg, self.offset())
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(Tok::Op(o)) if *o == op)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        let hit = self.peek_op(op);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_op(&mut self, op: &str) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{op}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn comparison(&mut self) -> Result<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Op("<")) => CmpOp::Lt,
            Some(Tok::Op("<=")) => CmpOp::Le,
            Some(Tok::Op(">")) => CmpOp::Gt,
            Some(Tok::Op(">=")) => CmpOp::Ge,
            Some(Tok::Op("==")) => CmpOp::Eq,
            Some(Tok::Op("!=")) => CmpOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.additive()?;
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr> {
        let mut acc = self.multiplicative()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                return Ok(acc);
            };
            acc = Expr::binary(op, acc, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("/") {
                BinOp::Div
            } else {
                return Ok(acc);
            };
            acc = Expr::binary(op, acc, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op("-") {
            return Ok(match self.unary()? {
                Expr::Int(v) => Expr::Int(-v),
                Expr::Float(v) => Expr::Float(-v),
                e => Expr::neg(e),
            });
        }
        if self.eat_op("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op("**") {
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn args(&mut self, close: &str) -> Result<Vec<Expr>> {
        let mut out = Vec::new();
        if self.eat_op(close) {
            return Ok(out);
        }
        loop {
            out.push(self.comparison()?);
            if self.eat_op(close) {
                return Ok(out);
            }
            self.expect_op(",")?;
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let start = self.offset();
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Int(v))
            }
            Some(Tok::Float(v)) => {
                self.pos += 1;
                Ok(Expr::Float(v))
            }
            Some(Tok::Op("(")) => {
                self.pos += 1;
                let e = self.comparison()?;
                self.expect_op(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat_op("$") {
                    let tag = self.ident()?;
                    let args = if self.eat_op("(") { self.args(")")? } else { Vec::new() };
                    return Ok(Expr::Rule(RuleCall {
                        name,
                        tag: Some(tag),
                        args,
                    }));
                }
                if self.eat_op("[") {
                    return Ok(Expr::Subscript(name, self.args("]")?));
                }
                if self.eat_op("(") {
                    let args = self.args(")")?;
                    return reduction_or_call(name, args, start);
                }
                Ok(Expr::Var(name))
            }
            _ => Err(self.err("expected expression")),
        }
    }
}

fn red_op(name: &str) -> Option<RedOp> {
    match name {
        "sum" => Some(RedOp::Sum),
        "product" => Some(RedOp::Product),
        "min" => Some(RedOp::Min),
        "max" => Some(RedOp::Max),
        _ => None,
    }
}

fn reduction_or_call(name: String, mut args: Vec<Expr>, start: usize) -> Result<Expr> {
    match name.as_str() {
        "sum" | "product" => {
            if args.len() != 2 {
                return Err(Error::syntax(format!("`{name}` takes an iname and a body"), start));
            }
            let body = args.pop().unwrap();
            let Expr::Var(iname) = args.pop().unwrap() else {
                return Err(Error::syntax(format!("first argument of `{name}` must be an iname"), start));
            };
            Ok(Expr::Reduce(red_op(&name).unwrap(), iname, Box::new(body)))
        }
        "reduce" => {
            if args.len() != 3 {
                return Err(Error::syntax("`reduce` takes an operation, an iname and a body", start));
            }
            let body = args.pop().unwrap();
            let iname = args.pop().unwrap();
            let op = args.pop().unwrap();
            let (Expr::Var(op), Expr::Var(iname)) = (op, iname) else {
                return Err(Error::syntax("malformed `reduce`", start));
            };
            let op = red_op(&op).ok_or_else(|| Error::syntax(format!("unknown reduction `{op}`"), start))?;
            Ok(Expr::Reduce(op, iname, Box::new(body)))
        }
        _ => Ok(Expr::Call(name, args)),
    }
}

fn shift(e: Error, base: usize) -> Error {
    match e {
        Error::Syntax { msg, offset } => Error::Syntax {
            msg,
            offset: offset + base,
        },
        other => other,
    }
}

fn parse_expr_at(text: &str, base: usize) -> Result<Expr> {
    let mut p = Parser::new(text, base)?;
    let e = p.comparison()?;
    if p.pos < p.toks.len() {
        return Err(p.err("trailing input after expression"));
    }
    Ok(e)
}

pub fn parse_expr(text: &str) -> Result<Expr> {
    parse_expr_at(text, 0)
}

/// Metadata attached to an instruction with a trailing `{...}` block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InsnOptions {
    pub id: Option<String>,
    pub deps: Option<Vec<String>>,
    pub inames: Option<Vec<String>>,
    pub tags: Vec<String>,
    /// `(flag, negated)`
    pub predicates: Vec<(String, bool)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstructionStmt {
    /// `Some(dtype)` when the statement declares a temporary with `<>`;
    /// the inner `None` means the type is inferred.
    pub temp_decl: Option<Option<DType>>,
    pub lhs: Expr,
    pub rhs: Expr,
    pub options: InsnOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    Rule(SubstitutionRule),
    Instruction(InstructionStmt),
}

/// Byte offset of the first top-level (outside brackets) occurrence of `pat`
/// accepted by `ok`.
fn find_top_level(text: &str, pat: &str, ok: &dyn Fn(usize) -> bool) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    for i in 0..bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            _ => {}
        }
        if depth == 0 && text[i..].starts_with(pat) && ok(i) {
            return Some(i);
        }
    }
    None
}

fn parse_options(text: &str, base: usize) -> Result<InsnOptions> {
    let mut opts = InsnOptions::default();
    let list = |v: &str| -> Vec<String> { v.split(':').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect() };
    let mut off = base;
    for item in text.split(',') {
        let here = off;
        off += item.len() + 1;
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let Some((k, v)) = item.split_once('=') else {
            return Err(Error::syntax(format!("expected `key=value` in options, got `{item}`"), here));
        };
        let v = v.trim();
        match k.trim() {
            "id" => opts.id = Some(v.to_string()),
            "dep" => opts.deps = Some(list(v)),
            "inames" => opts.inames = Some(list(v)),
            "tags" => opts.tags = list(v),
            "if" => {
                opts.predicates = list(v)
                    .into_iter()
                    .map(|p| match p.strip_prefix('!') {
                        Some(rest) => (rest.trim().to_string(), true),
                        None => (p, false),
                    })
                    .collect()
            }
            other => return Err(Error::syntax(format!("unknown instruction option `{other}`"), here)),
        }
    }
    Ok(opts)
}

/// Parses one statement of a kernel body; `base` is added to error offsets.
pub fn parse_statement(text: &str, base: usize) -> Result<Statement> {
    if let Some(pos) = find_top_level(text, ":=", &|_| true) {
        let (head, body) = (&text[..pos], &text[pos + 2..]);
        let head_expr = parse_expr_at(head, base)?;
        let (name, params) = match head_expr {
            Expr::Var(n) => (n, Vec::new()),
            Expr::Call(n, args) => {
                let mut params = Vec::new();
                for a in args {
                    match a {
                        Expr::Var(p) => params.push(p),
                        _ => return Err(Error::syntax("rule parameters must be names", base)),
                    }
                }
                (n, params)
            }
            _ => return Err(Error::syntax("malformed substitution rule head", base)),
        };
        let body = parse_expr_at(body, base + pos + 2)?;
        return Ok(Statement::Rule(SubstitutionRule::new(name, params, body)));
    }

    let mut text_end = text.len();
    let mut options = InsnOptions::default();
    let trimmed = text.trim_end();
    if trimmed.ends_with('}') {
        let open = trimmed.rfind('{').ok_or_else(|| Error::syntax("unbalanced `}`", base + trimmed.len() - 1))?;
        options = parse_options(&trimmed[open + 1..trimmed.len() - 1], base + open + 1)?;
        text_end = open;
    }
    let body = &text[..text_end];

    let bytes = body.as_bytes();
    let is_assign = |i: usize| {
        let prev = if i > 0 { bytes[i - 1] } else { b' ' };
        let next = bytes.get(i + 1).copied().unwrap_or(b' ');
        !matches!(prev, b'<' | b'>' | b'=' | b'!') && next != b'='
    };
    let eq = find_top_level(body, "=", &is_assign)
        .ok_or_else(|| Error::syntax("expected `=` or `:=` in statement", base))?;
    let mut lhs_text = &body[..eq];
    let mut lhs_base = base;
    let mut temp_decl = None;
    let lt = lhs_text.trim_start();
    if lt.starts_with('<') {
        let lead = lhs_text.len() - lt.len();
        let close = lt.find('>').ok_or_else(|| Error::syntax("unterminated `<...>` declaration", base + lead))?;
        let ty = lt[1..close].trim();
        temp_decl = Some(if ty.is_empty() {
            None
        } else {
            Some(DType::parse(ty).ok_or_else(|| Error::syntax(format!("unknown dtype `{ty}`"), base + lead + 1))?)
        });
        lhs_base = base + lead + close + 1;
        lhs_text = &lt[close + 1..];
    }
    let lhs = parse_expr_at(lhs_text, lhs_base)?;
    match &lhs {
        Expr::Var(_) => {}
        Expr::Subscript(_, _) if temp_decl.is_none() => {}
        Expr::Subscript(_, _) => return Err(Error::syntax("`<>` declarations must assign a scalar", base)),
        _ => return Err(Error::syntax("assignment target must be a variable or array element", base)),
    }
    let rhs = parse_expr_at(&body[eq + 1..], base + eq + 1)?;
    Ok(Statement::Instruction(InstructionStmt {
        temp_decl,
        lhs,
        rhs,
        options,
    }))
}

/// Splits kernel-body text into statements: strips `#` comments, joins
/// lines ending in `\`, drops blank lines. Yields `(offset, text)`.
pub fn split_statements(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let code = line.split('#').next().unwrap_or("").trim_end_matches(['\n', '\r']);
        let (code, continued) = match code.trim_end().strip_suffix('\\') {
            Some(c) => (c, true),
            None => (code, false),
        };
        let entry = pending.get_or_insert_with(|| (start, String::new()));
        if !entry.1.is_empty() {
            entry.1.push(' ');
        }
        entry.1.push_str(code);
        if !continued {
            let (off, s) = pending.take().unwrap();
            if !s.trim().is_empty() {
                out.push((off, s));
            }
        }
    }
    if let Some((off, s)) = pending {
        if !s.trim().is_empty() {
            out.push((off, s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse_expr("-x**2").unwrap();
        assert_eq!(e, Expr::neg(Expr::binary(BinOp::Pow, Expr::var("x"), Expr::Int(2))));
        let e = parse_expr("a - b - c").unwrap();
        assert_eq!(
            e,
            Expr::binary(BinOp::Sub, Expr::binary(BinOp::Sub, Expr::var("a"), Expr::var("b")), Expr::var("c"))
        );
        assert_eq!(parse_expr("2**3**2").unwrap().to_string(), "2**3**2");
        assert_eq!(parse_expr("-3*x").unwrap(), Expr::binary(BinOp::Mul, Expr::Int(-3), Expr::var("x")));
    }

    #[test]
    fn reductions_and_rules() {
        assert!(matches!(parse_expr("sum(j, a[i, j])").unwrap(), Expr::Reduce(RedOp::Sum, _, _)));
        assert!(matches!(parse_expr("reduce(max, j, a[j])").unwrap(), Expr::Reduce(RedOp::Max, _, _)));
        assert!(matches!(parse_expr("min(a, b)").unwrap(), Expr::Call(_, _)));
        match parse_expr("h$two(i)").unwrap() {
            Expr::Rule(r) => assert_eq!((r.name.as_str(), r.tag.as_deref()), ("h", Some("two"))),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("sum(2, x)").is_err());
    }

    #[test]
    fn float_literals() {
        assert_eq!(parse_expr("1e-3").unwrap(), Expr::Float(1e-3));
        assert_eq!(parse_expr(".5").unwrap(), Expr::Float(0.5));
        assert_eq!(parse_expr("2.").unwrap(), Expr::Float(2.0));
    }

    #[test]
    fn statements() {
        match parse_statement("f(x) := x*a[x]", 0).unwrap() {
            Statement::Rule(r) => assert_eq!(r.params, ["x"]),
            other => panic!("{other:?}"),
        }
        match parse_statement("<f32> t = a[i] {id=s1, dep=s0:s2, if=!c}", 0).unwrap() {
            Statement::Instruction(s) => {
                assert_eq!(s.temp_decl, Some(Some(DType::F32)));
                assert_eq!(s.options.id.as_deref(), Some("s1"));
                assert_eq!(s.options.deps, Some(vec!["s0".into(), "s2".into()]));
                assert_eq!(s.options.predicates, vec![("c".to_string(), true)]);
            }
            other => panic!("{other:?}"),
        }
        match parse_statement("c = a >= 3", 0).unwrap() {
            Statement::Instruction(s) => assert!(matches!(s.rhs, Expr::Compare(CmpOp::Ge, _, _))),
            other => panic!("{other:?}"),
        }
        assert!(parse_statement("a + 1", 0).is_err());
    }

    #[test]
    fn error_offsets_are_shifted() {
        match parse_statement("out[i] = a[i] + ", 10) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 26),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn statement_splitting() {
        let text = "a = 1 # one\n\n b = 2 + \\\n 3\n";
        let parts = split_statements(text);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], (0, "a = 1 ".to_string()));
        assert_eq!(parts[1].0, 13);
        assert!(parse_statement(&parts[1].1, 0).is_ok());
    }
}
