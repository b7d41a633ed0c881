use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::matching::parse_match;
use crate::transforms as t;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptValue {
    Str(String),
    Int(i64),
    None,
    /// A bare identifier; only valid as the kernel argument.
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptArg {
    pub keyword: Option<String>,
    pub value: ScriptValue,
}

/// `target = [lp.]verb(args...)`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptStmt {
    pub target: String,
    pub verb: String,
    pub args: Vec<ScriptArg>,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransformScript {
    pub stmts: Vec<ScriptStmt>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Str,
    Int,
    OptStr,
}

/// (verb, parameters after the kernel: name, kind, default)
type Signature = (&'static str, &'static [(&'static str, Kind, Option<ScriptDefault>)]);

#[derive(Clone, Copy, Debug)]
enum ScriptDefault {
    None,
    Str(&'static str),
}

const VERBS: &[Signature] = &[
    (
        "split_iname",
        &[
            ("iname", Kind::Str, None),
            ("factor", Kind::Int, None),
            ("outer_tag", Kind::OptStr, Some(ScriptDefault::None)),
            ("inner_tag", Kind::OptStr, Some(ScriptDefault::None)),
        ],
    ),
    ("assume", &[("assumptions", Kind::Str, None)]),
    ("tag_instructions", &[("match", Kind::Str, None), ("tag", Kind::Str, None)]),
    ("tag_inames", &[("tags", Kind::Str, None)]),
    (
        "extract_subst",
        &[
            ("subst_name", Kind::Str, None),
            ("template", Kind::Str, None),
            ("parameters", Kind::Str, Some(ScriptDefault::Str(""))),
        ],
    ),
    ("wrap_variable_access", &[("var", Kind::Str, None), ("rule_name", Kind::Str, None)]),
    ("temporary_to_subst", &[("temp_name", Kind::Str, None)]),
    ("expand_subst", &[("match", Kind::Str, Some(ScriptDefault::Str("*")))]),
    ("expand_all_rules", &[]),
    (
        "precompute",
        &[
            ("subst_use", Kind::Str, None),
            ("sweep_inames", Kind::Str, Some(ScriptDefault::Str(""))),
            ("default_tag", Kind::OptStr, Some(ScriptDefault::None)),
        ],
    ),
];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Punct(char),
    Newline,
}

fn lex(text: &str, first_line: usize) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = first_line;
    let err = |msg: String, line: usize| Error::Script { msg, line };
    while let Some(c) = chars.next() {
        match c {
            '\n' => {
                out.push((Tok::Newline, line));
                line += 1;
            }
            ';' => out.push((Tok::Newline, line)),
            c if c.is_whitespace() => {}
            '#' => {
                while chars.peek().is_some_and(|c| *c != '\n') {
                    chars.next();
                }
            }
            '"' | '\'' => {
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some(q) if q == c => break,
                        Some('\n') | None => return Err(err("unterminated string".into(), line)),
                        Some(ch) => s.push(ch),
                    }
                }
                out.push((Tok::Str(s), line));
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut s = c.to_string();
                while chars.peek().is_some_and(|c| c.is_ascii_digit()) {
                    s.push(chars.next().expect("peeked"));
                }
                let v = s.parse().map_err(|_| err(format!("bad integer `{s}`"), line))?;
                out.push((Tok::Int(v), line));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = c.to_string();
                while chars.peek().is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    s.push(chars.next().expect("peeked"));
                }
                out.push((Tok::Ident(s), line));
            }
            '=' | '(' | ')' | ',' | '.' => out.push((Tok::Punct(c), line)),
            _ => return Err(err(format!("unexpected character `{c}`"), line)),
        }
    }
    out.push((Tok::Newline, line));
    Ok(out)
}

impl TransformScript {
    /// Parses a script; `first_line` is the line number of its first line in
    /// the enclosing file, used in diagnostics.
    pub fn parse(text: &str, first_line: usize) -> Result<TransformScript> {
        let toks = lex(text, first_line)?;
        let mut stmts = Vec::new();
        let mut i = 0;
        // newlines inside parentheses do not end a statement
        let mut depth = 0;
        let mut current: Vec<(Tok, usize)> = Vec::new();
        while i < toks.len() {
            let (tok, line) = toks[i].clone();
            i += 1;
            match tok {
                Tok::Punct('(') => depth += 1,
                Tok::Punct(')') => depth -= 1,
                Tok::Newline if depth <= 0 => {
                    if !current.is_empty() {
                        stmts.push(parse_stmt(&current)?);
                        current.clear();
                    }
                    depth = 0;
                    continue;
                }
                Tok::Newline => continue,
                _ => {}
            }
            current.push((tok, line));
        }
        Ok(TransformScript { stmts })
    }
}

fn parse_stmt(toks: &[(Tok, usize)]) -> Result<ScriptStmt> {
    let line = toks[0].1;
    let err = |msg: &str| Error::Script {
        msg: msg.to_string(),
        line,
    };
    let at = |p: usize| toks.get(p).map(|(t, _)| t.clone());
    let mut pos = 0;
    macro_rules! next {
        () => {{
            pos += 1;
            at(pos - 1)
        }};
    }
    let Some(Tok::Ident(target)) = next!() else {
        return Err(err("expected `name = transform(...)`"));
    };
    if next!() != Some(Tok::Punct('=')) {
        return Err(err("expected `=` after the target name"));
    }
    let Some(Tok::Ident(mut verb)) = next!() else {
        return Err(err("expected a transform name"));
    };
    let mut tok = next!();
    if tok == Some(Tok::Punct('.')) {
        if verb != "lp" {
            return Err(err(&format!("unknown module `{verb}` (only `lp.` is recognised)")));
        }
        let Some(Tok::Ident(v)) = next!() else {
            return Err(err("expected a transform name after `lp.`"));
        };
        verb = v;
        tok = next!();
    }
    if tok != Some(Tok::Punct('(')) {
        return Err(err("expected `(`"));
    }
    let mut args = Vec::new();
    loop {
        let mut tok = next!().ok_or_else(|| err("unclosed argument list"))?;
        if tok == Tok::Punct(')') {
            break;
        }
        let mut keyword = None;
        if let Tok::Ident(name) = &tok {
            if toks.get(pos).map(|t| &t.0) == Some(&Tok::Punct('=')) {
                keyword = Some(name.clone());
                pos += 1;
                tok = next!().ok_or_else(|| err("missing keyword value"))?;
            }
        }
        let value = match tok {
            Tok::Str(s) => ScriptValue::Str(s),
            Tok::Int(v) => ScriptValue::Int(v),
            Tok::Ident(n) if n == "None" => ScriptValue::None,
            Tok::Ident(n) => ScriptValue::Name(n),
            // a tuple of strings, as in `parameters=("alpha",)`, means the
            // comma-separated list
            Tok::Punct('(') => {
                let mut items = Vec::new();
                loop {
                    match next!() {
                        Some(Tok::Str(s)) => items.push(s),
                        Some(Tok::Punct(')')) => break,
                        _ => return Err(err("expected a string in tuple")),
                    }
                    match next!() {
                        Some(Tok::Punct(',')) => {}
                        Some(Tok::Punct(')')) => break,
                        _ => return Err(err("expected `,` or `)` in tuple")),
                    }
                }
                ScriptValue::Str(items.join(", "))
            }
            other => return Err(err(&format!("unexpected {other:?} in argument list"))),
        };
        args.push(ScriptArg { keyword, value });
        match next!() {
            Some(Tok::Punct(',')) => {}
            Some(Tok::Punct(')')) => break,
            _ => return Err(err("expected `,` or `)`")),
        }
    }
    if pos < toks.len() {
        return Err(err("trailing input after `)`"));
    }
    Ok(ScriptStmt {
        target,
        verb,
        args,
        line,
    })
}

/// Arguments of one statement matched against its verb's signature.
struct Bound {
    kernel: String,
    values: Vec<ScriptValue>,
}

fn bind(stmt: &ScriptStmt) -> Result<Bound> {
    let err = |msg: String| Error::Script { msg, line: stmt.line };
    let (_, params) = VERBS
        .iter()
        .find(|(v, _)| *v == stmt.verb)
        .ok_or_else(|| err(format!("unknown transform `{}`", stmt.verb)))?;
    let mut slots: Vec<Option<ScriptValue>> = vec![None; params.len() + 1];
    let mut positional = 0;
    for a in &stmt.args {
        let idx = match &a.keyword {
            None => {
                if positional > params.len() {
                    return Err(err(format!("too many arguments to `{}`", stmt.verb)));
                }
                positional += 1;
                positional - 1
            }
            Some(k) if k == "kernel" || k == "knl" => 0,
            Some(k) => {
                1 + params
                    .iter()
                    .position(|(n, _, _)| n == k)
                    .ok_or_else(|| err(format!("`{}` has no parameter `{k}`", stmt.verb)))?
            }
        };
        if slots[idx].is_some() {
            return Err(err(format!("argument {idx} of `{}` given twice", stmt.verb)));
        }
        slots[idx] = Some(a.value.clone());
    }
    let kernel = match slots[0].take() {
        Some(ScriptValue::Name(n)) => n,
        Some(other) => return Err(err(format!("first argument must be a kernel name, got {other:?}"))),
        None => return Err(err(format!("`{}` needs a kernel argument", stmt.verb))),
    };
    let mut values = Vec::new();
    for ((name, kind, default), slot) in params.iter().zip(slots.into_iter().skip(1)) {
        let v = match (slot, default) {
            (Some(v), _) => v,
            (None, Some(ScriptDefault::None)) => ScriptValue::None,
            (None, Some(ScriptDefault::Str(s))) => ScriptValue::Str(s.to_string()),
            (None, None) => return Err(err(format!("`{}` is missing argument `{name}`", stmt.verb))),
        };
        let ok = matches!(
            (kind, &v),
            (Kind::Str, ScriptValue::Str(_))
                | (Kind::Int, ScriptValue::Int(_))
                | (Kind::OptStr, ScriptValue::Str(_) | ScriptValue::None)
        );
        if !ok {
            return Err(err(format!("argument `{name}` of `{}` has the wrong type", stmt.verb)));
        }
        values.push(v);
    }
    Ok(Bound { kernel, values })
}

fn apply(k: &Kernel, verb: &str, v: &[ScriptValue]) -> Result<Kernel> {
    let s = |i: usize| match &v[i] {
        ScriptValue::Str(s) => s.as_str(),
        _ => "",
    };
    let opt = |i: usize| match &v[i] {
        ScriptValue::Str(s) => Some(s.as_str()),
        _ => None,
    };
    match verb {
        "split_iname" => {
            let ScriptValue::Int(factor) = v[1] else { unreachable!("checked by bind") };
            t::split_iname(k, s(0), factor, opt(2), opt(3))
        }
        "assume" => t::assume(k, s(0)),
        "tag_instructions" => t::tag_instructions(k, &parse_match(s(0))?, s(1)),
        "tag_inames" => t::tag_inames(k, s(0)),
        "extract_subst" => t::extract_subst(k, s(0), s(1), &t::name_list(s(2))),
        "wrap_variable_access" => t::wrap_variable_access(k, s(0), s(1)),
        "temporary_to_subst" => t::temporary_to_subst(k, s(0)),
        "expand_subst" => t::expand_subst(k, &parse_match(s(0))?),
        "expand_all_rules" => t::expand_all_rules(k),
        "precompute" => t::precompute(k, &parse_match(s(0))?, &t::name_list(s(1)), opt(2)),
        _ => unreachable!("verbs are checked by bind"),
    }
}

/// Applies the script statement by statement. The whole script is checked
/// (verbs, arguments, kernel names) before anything runs.
pub fn run_transform_script(kernels: &IndexMap<String, Kernel>, script: &TransformScript) -> Result<IndexMap<String, Kernel>> {
    let mut scope: Vec<String> = kernels.keys().cloned().collect();
    let mut bound = Vec::new();
    for stmt in &script.stmts {
        let b = bind(stmt)?;
        if !scope.contains(&b.kernel) {
            return Err(Error::Script {
                msg: format!("unknown kernel `{}`", b.kernel),
                line: stmt.line,
            });
        }
        if !scope.contains(&stmt.target) {
            scope.push(stmt.target.clone());
        }
        bound.push(b);
    }
    let mut out = kernels.clone();
    for (stmt, b) in script.stmts.iter().zip(bound) {
        let k = &out[&b.kernel];
        let next = apply(k, &stmt.verb, &b.values).map_err(|e| Error::Script {
            msg: e.to_string(),
            line: stmt.line,
        })?;
        out.insert(stmt.target.clone(), next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_kernel;

    fn fill() -> IndexMap<String, Kernel> {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "out[i] = a", "fill").unwrap();
        [("fill".to_string(), k)].into_iter().collect()
    }

    #[test]
    fn fill_pragma_script() {
        let s = TransformScript::parse(
            " fill = lp.split_iname(fill, \"i\", 128,\n     outer_tag=\"g.0\", inner_tag=\"l.0\")\n",
            10,
        )
        .unwrap();
        assert_eq!(s.stmts.len(), 1);
        assert_eq!(s.stmts[0].line, 10);
        let out = run_transform_script(&fill(), &s).unwrap();
        assert_eq!(out["fill"].inames(), ["i_outer", "i_inner"]);
    }

    #[test]
    fn validation_happens_first() {
        let s = TransformScript::parse("fill = lp.split_iname(fill, \"i\", 4)\nfill = lp.frobnicate(fill)\n", 1).unwrap();
        match run_transform_script(&fill(), &s) {
            Err(Error::Script { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("frobnicate"));
            }
            other => panic!("{other:?}"),
        }
        let s = TransformScript::parse("x = split_iname(other, \"i\", 4)", 1).unwrap();
        assert!(run_transform_script(&fill(), &s).is_err());
        let s = TransformScript::parse("fill = split_iname(fill, 4, \"i\")", 1).unwrap();
        assert!(run_transform_script(&fill(), &s).is_err());
    }

    #[test]
    fn tuple_arguments() {
        let s = TransformScript::parse("knl = lp.extract_subst(knl, \"b2\", \"alpha*b[i]\", parameters=(\"alpha\",))", 1).unwrap();
        assert_eq!(s.stmts[0].args[3].value, ScriptValue::Str("alpha".into()));
        let s = TransformScript::parse("knl = f(knl, (\"a\", \"b\"))", 1).unwrap();
        assert_eq!(s.stmts[0].args[1].value, ScriptValue::Str("a, b".into()));
        assert!(TransformScript::parse("knl = f(knl, (1,))", 1).is_err());
    }

    #[test]
    fn empty_script() {
        let s = TransformScript::parse("  # nothing\n\n", 1).unwrap();
        assert_eq!(run_transform_script(&fill(), &s).unwrap(), fill());
    }
}
