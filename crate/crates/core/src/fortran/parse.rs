use indexmap::IndexMap;

use super::{Decl, FortranUnit, Pragma, PragmaKind, Stmt};
use crate::error::{Error, Result, Span};
use crate::expr::{BinOp, CmpOp, Expr, UnOp};
use crate::types::DType;

/// Statements outside the supported subset, with the reason given in
/// diagnostics.
const RESTRICTED: &[(&str, &str, &str)] = &[
    ("exit", "EXIT", "early exits are not supported"),
    ("cycle", "CYCLE", "early exits are not supported"),
    ("return", "RETURN", "early exits are not supported"),
    ("stop", "STOP", "early exits are not supported"),
    ("entry", "ENTRY", "mid-subroutine entry points are not supported"),
    ("call", "CALL", "calls to other subroutines are not supported"),
    ("common", "COMMON", "COMMON data is not supported"),
    ("save", "SAVE", "SAVE data is not supported"),
    ("goto", "GOTO", "unstructured control flow is not supported"),
    ("go", "GOTO", "unstructured control flow is not supported"),
    ("read", "READ", "I/O is not supported"),
    ("write", "WRITE", "I/O is not supported"),
    ("print", "PRINT", "I/O is not supported"),
    ("open", "OPEN", "I/O is not supported"),
    ("close", "CLOSE", "I/O is not supported"),
    ("inquire", "INQUIRE", "I/O is not supported"),
    ("rewind", "REWIND", "I/O is not supported"),
    ("format", "FORMAT", "I/O is not supported"),
    ("pointer", "POINTER", "pointers are not supported"),
    ("allocate", "ALLOCATE", "dynamic memory management is not supported"),
    ("deallocate", "DEALLOCATE", "dynamic memory management is not supported"),
    ("equivalence", "EQUIVALENCE", "storage association is not supported"),
    ("data", "DATA", "DATA statements are not supported"),
    ("function", "FUNCTION", "function subprograms are not supported"),
    ("program", "PROGRAM", "only a single subroutine is translated"),
    ("module", "MODULE", "only a single subroutine is translated"),
];

#[derive(Clone, Debug)]
enum Line {
    Code { text: String, span: Span },
    TagBegin(String, Span),
    TagEnd(String, Span),
}

fn restricted(construct: &str, msg: &str, span: Span) -> Error {
    Error::Restricted {
        construct: construct.to_string(),
        msg: msg.to_string(),
        span,
    }
}

/// Byte index of a trailing `!` comment, ignoring quoted text.
fn comment_start(line: &str) -> Option<usize> {
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (quote, c) {
            (None, '\'' | '"') => quote = Some(c),
            (Some(q), _) if c == q => quote = None,
            (None, '!') => return Some(i),
            _ => {}
        }
    }
    None
}

fn is_fixed_form_comment(raw: &str) -> bool {
    let mut chars = raw.chars();
    matches!(chars.next(), Some('c' | 'C' | '*')) && chars.next().is_none_or(|c| c.is_whitespace())
}

/// Splits the source into logical lines, collecting transform blocks.
fn logical_lines(source: &str, pragmas: &mut Vec<Pragma>) -> Result<Vec<Line>> {
    let mut out = Vec::new();
    let mut transform: Option<(Span, String)> = None;
    let mut pending: Option<(String, Span)> = None;
    for (n, raw) in source.lines().enumerate() {
        let indent = raw.len() - raw.trim_start().len();
        let span = Span::new(n + 1, indent + 1);
        let trimmed = raw.trim();
        if let Some(rest) = trimmed.strip_prefix('!') {
            let lower = trimmed.to_ascii_lowercase();
            if let Some(directive) = lower.strip_prefix("!$loopy") {
                let words: Vec<&str> = directive.split_whitespace().collect();
                match words.as_slice() {
                    ["begin", "transform"] if transform.is_none() => transform = Some((span, String::new())),
                    ["end", "transform"] => match transform.take() {
                        Some((start, text)) => pragmas.push(Pragma {
                            kind: PragmaKind::Transform,
                            text,
                            span: start,
                        }),
                        None => return Err(Error::fortran("`end transform` without `begin transform`", span)),
                    },
                    ["begin", "tagged:", tag] | ["begin", "tagged", ":", tag] => {
                        pragmas.push(Pragma {
                            kind: PragmaKind::Tagged(tag.to_string()),
                            text: String::new(),
                            span,
                        });
                        out.push(Line::TagBegin(tag.to_string(), span));
                    }
                    ["end", "tagged:", tag] | ["end", "tagged", ":", tag] => out.push(Line::TagEnd(tag.to_string(), span)),
                    _ => return Err(Error::fortran(format!("malformed pragma `{trimmed}`"), span)),
                }
            } else if let Some((_, text)) = transform.as_mut() {
                text.push_str(rest);
                text.push('\n');
            }
            continue;
        }
        if transform.is_some() && !trimmed.is_empty() {
            return Err(Error::fortran("code inside a transform block (payload lines must be comments)", span));
        }
        if trimmed.is_empty() || is_fixed_form_comment(raw) {
            continue;
        }
        let code = match comment_start(trimmed) {
            Some(i) => trimmed[..i].trim_end(),
            None => trimmed,
        };
        let code = code.to_ascii_lowercase();
        let (code, continued) = match code.strip_suffix('&') {
            Some(c) => (c.trim_end().to_string(), true),
            None => (code, false),
        };
        let joined = match pending.take() {
            Some((mut prev, start)) => {
                prev.push(' ');
                prev.push_str(code.trim_start_matches('&').trim_start());
                (prev, start)
            }
            None => (code, span),
        };
        if continued {
            pending = Some(joined);
            continue;
        }
        let (text, start) = joined;
        for part in text.split(';') {
            let part = strip_label(part.trim());
            if !part.is_empty() {
                out.push(Line::Code {
                    text: part.to_string(),
                    span: start,
                });
            }
        }
    }
    if let Some((span, _)) = transform {
        return Err(Error::fortran("unterminated transform block", span));
    }
    if let Some((_, span)) = pending {
        return Err(Error::fortran("dangling continuation", span));
    }
    Ok(out)
}

fn strip_label(s: &str) -> &str {
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 && s[digits..].starts_with(char::is_whitespace) {
        s[digits..].trim_start()
    } else {
        s
    }
}

fn leading_word(s: &str) -> &str {
    let end = s.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(s.len());
    &s[..end]
}

/// Index just past the parenthesis group starting at `open`.
fn matching_paren(s: &str, open: usize) -> Option<usize> {
    let mut depth = 0;
    for (i, c) in s[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Position of the `=` of an assignment `name[(...)] = ...`.
fn assignment_eq(s: &str) -> Option<usize> {
    let word = leading_word(s);
    if word.is_empty() || word.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    let mut pos = word.len();
    pos += s[pos..].len() - s[pos..].trim_start().len();
    if s[pos..].starts_with('(') {
        pos = matching_paren(s, pos)?;
        pos += s[pos..].len() - s[pos..].trim_start().len();
    }
    (s[pos..].starts_with('=') && !s[pos..].starts_with("==")).then_some(pos)
}

/// Splits at top-level occurrences of `sep`.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// `(dtype, rest)` for a type-declaration statement.
fn type_spec(s: &str, span: Span) -> Result<Option<(DType, &str)>> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let word = leading_word(s);
    let base = match word {
        "real" => DType::F32,
        "integer" => DType::I32,
        "double" => {
            let rest = s[word.len()..].trim_start();
            if leading_word(rest) != "precision" {
                return Err(Error::fortran("expected `double precision`", span));
            }
            let rest = rest["precision".len()..].trim_start();
            return Ok(Some((DType::F64, rest.strip_prefix("::").unwrap_or(rest).trim_start())));
        }
        "logical" | "character" | "complex" => {
            return Err(Error::fortran(format!("type `{word}` is not supported"), span));
        }
        _ => return Ok(None),
    };
    if compact.starts_with(&format!("{word}function")) {
        return Err(restricted("FUNCTION", "function subprograms are not supported", span));
    }
    let mut rest = s[word.len()..].trim_start();
    let mut kind = None;
    if let Some(r) = rest.strip_prefix('*') {
        let r = r.trim_start();
        let digits = leading_word(r);
        kind = Some(digits.to_string());
        rest = r[digits.len()..].trim_start();
    } else if rest.starts_with('(') {
        let end = matching_paren(rest, 0).ok_or_else(|| Error::fortran("unbalanced kind selector", span))?;
        let inner = rest[1..end - 1].replace(' ', "");
        kind = Some(inner.trim_start_matches("kind=").to_string());
        rest = rest[end..].trim_start();
    }
    let dtype = match (base, kind.as_deref()) {
        (d, None) => d,
        (DType::F32, Some("4")) => DType::F32,
        (DType::F32, Some("8")) => DType::F64,
        (DType::I32, Some("4")) => DType::I32,
        (_, Some(k)) => return Err(Error::fortran(format!("unsupported kind `{word}*{k}`"), span)),
    };
    Ok(Some((dtype, rest.strip_prefix("::").unwrap_or(rest).trim_start())))
}

struct Parser {
    lines: Vec<Line>,
    pos: usize,
    decls: IndexMap<String, Decl>,
    tags: Vec<String>,
}

enum End {
    Sub,
    Do,
    If,
    Else,
    ElseIf(Expr),
}

impl Parser {
    fn parse_block(&mut self, depth: usize) -> Result<(Vec<Stmt>, End, Span)> {
        let mut out = Vec::new();
        loop {
            let Some(line) = self.lines.get(self.pos).cloned() else {
                let span = self.last_span();
                return Err(Error::fortran("unexpected end of file (missing `end`)", span));
            };
            self.pos += 1;
            let (text, span) = match line {
                Line::Code { text, span } => (text, span),
                Line::TagBegin(tag, _) => {
                    self.tags.push(tag);
                    continue;
                }
                Line::TagEnd(tag, span) => {
                    if self.tags.pop().as_ref() != Some(&tag) {
                        return Err(Error::fortran(format!("`end tagged: {tag}` does not close the open region"), span));
                    }
                    continue;
                }
            };
            let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            if assignment_eq(&text).is_some() {
                out.push(self.assignment(&text, span)?);
                continue;
            }
            let word = leading_word(&text);
            match word {
                "end" | "endsubroutine" | "enddo" | "endif" => {
                    let end = if compact == "end" || compact.starts_with("endsubroutine") {
                        End::Sub
                    } else if compact == "enddo" {
                        End::Do
                    } else if compact == "endif" {
                        End::If
                    } else {
                        return Err(Error::fortran(format!("unsupported statement `{text}`"), span));
                    };
                    return Ok((out, end, span));
                }
                "else" | "elseif" => {
                    if compact == "else" {
                        return Ok((out, End::Else, span));
                    }
                    let rest = compact.strip_prefix("elseif").unwrap_or("");
                    let (cond, tail) = self.paren_condition(rest, span)?;
                    if tail != "then" {
                        return Err(Error::fortran("expected `then` after `else if (...)`", span));
                    }
                    return Ok((out, End::ElseIf(cond), span));
                }
                "do" => {
                    if compact.starts_with("dowhile") {
                        return Err(restricted("DO WHILE", "data-dependent loops are not supported", span));
                    }
                    out.push(self.do_loop(&text, span, depth)?);
                }
                "if" => {
                    let rest = text[2..].trim_start();
                    let (cond, tail) = self.paren_condition(rest, span)?;
                    if tail == "then" {
                        out.push(self.if_block(cond, span, depth)?);
                    } else if tail.is_empty() {
                        return Err(Error::fortran("`if (...)` without statement or `then`", span));
                    } else {
                        let body = self.simple_statement(tail, span)?;
                        out.push(Stmt::If {
                            cond,
                            then_body: vec![body],
                            else_body: Vec::new(),
                            span,
                        });
                    }
                }
                "continue" if compact == "continue" => {}
                "implicit" => {
                    if compact != "implicitnone" {
                        return Err(Error::fortran("only `implicit none` is supported", span));
                    }
                }
                "subroutine" => {
                    return Err(Error::fortran("nested or multiple subroutines are not supported", span));
                }
                _ => {
                    if let Some((dtype, rest)) = type_spec(&text, span)? {
                        if depth > 0 {
                            return Err(Error::fortran("declaration inside executable block", span));
                        }
                        self.declare(dtype, rest, span)?;
                        continue;
                    }
                    return Err(self.unsupported(word, &text, span));
                }
            }
        }
    }

    fn unsupported(&self, word: &str, text: &str, span: Span) -> Error {
        match RESTRICTED.iter().find(|(w, _, _)| *w == word) {
            Some((_, construct, msg)) => restricted(construct, msg, span),
            None => Error::fortran(format!("unsupported statement `{text}`"), span),
        }
    }

    fn last_span(&self) -> Span {
        match self.lines.last() {
            Some(Line::Code { span, .. } | Line::TagBegin(_, span) | Line::TagEnd(_, span)) => *span,
            None => Span::new(1, 1),
        }
    }

    /// Statement of a one-line `if`.
    fn simple_statement(&mut self, text: &str, span: Span) -> Result<Stmt> {
        if assignment_eq(text).is_some() {
            return self.assignment(text, span);
        }
        Err(self.unsupported(leading_word(text), text, span))
    }

    /// Parses `(cond) tail`, returning the condition and trimmed tail.
    fn paren_condition<'a>(&self, s: &'a str, span: Span) -> Result<(Expr, &'a str)> {
        let s = s.trim_start();
        if !s.starts_with('(') {
            return Err(Error::fortran("expected `(` after `if`", span));
        }
        let end = matching_paren(s, 0).ok_or_else(|| Error::fortran("unbalanced parentheses", span))?;
        let cond = parse_fexpr(&s[1..end - 1], span)?;
        Ok((cond, s[end..].trim()))
    }

    fn if_block(&mut self, cond: Expr, span: Span, depth: usize) -> Result<Stmt> {
        let (then_body, end, end_span) = self.parse_block(depth + 1)?;
        let else_body = match end {
            End::If => Vec::new(),
            End::Else => {
                let (body, end, end_span) = self.parse_block(depth + 1)?;
                if !matches!(end, End::If) {
                    return Err(Error::fortran("expected `end if`", end_span));
                }
                body
            }
            End::ElseIf(c) => vec![self.if_block(c, end_span, depth)?],
            _ => return Err(Error::fortran("`if` block closed by the wrong `end`", end_span)),
        };
        Ok(Stmt::If {
            cond,
            then_body,
            else_body,
            span,
        })
    }

    fn do_loop(&mut self, text: &str, span: Span, depth: usize) -> Result<Stmt> {
        let rest = text[2..].trim_start();
        if rest.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(restricted("labeled DO", "use `do ... end do`", span));
        }
        let var = leading_word(rest);
        let after = rest[var.len()..].trim_start();
        let Some(range) = after.strip_prefix('=') else {
            return Err(Error::fortran("expected `do var = lo, hi`", span));
        };
        let parts = split_top(range, ',');
        if parts.len() < 2 || parts.len() > 3 {
            return Err(Error::fortran("expected `do var = lo, hi[, step]`", span));
        }
        let lo = parse_fexpr(parts[0], span)?;
        let hi = parse_fexpr(parts[1], span)?;
        if let Some(step) = parts.get(2) {
            if parse_fexpr(step, span)? != Expr::Int(1) {
                return Err(Error::fortran(format!("non-unit loop stride `{}`", step.trim()), span));
            }
        }
        let (body, end, end_span) = self.parse_block(depth + 1)?;
        if !matches!(end, End::Do) {
            return Err(Error::fortran("`do` loop closed by the wrong `end`", end_span));
        }
        Ok(Stmt::Do {
            var: var.to_string(),
            lo,
            hi,
            body,
            span,
        })
    }

    fn assignment(&mut self, text: &str, span: Span) -> Result<Stmt> {
        let eq = assignment_eq(text).expect("checked by caller");
        let lhs = parse_fexpr(&text[..eq], span)?;
        let rhs = parse_fexpr(&text[eq + 1..], span)?;
        if !matches!(lhs, Expr::Var(_) | Expr::Call(..)) {
            return Err(Error::fortran(format!("cannot assign to `{lhs}`"), span));
        }
        Ok(Stmt::Assign {
            lhs,
            rhs,
            tags: self.tags.clone(),
            span,
        })
    }

    fn declare(&mut self, dtype: DType, rest: &str, span: Span) -> Result<()> {
        for item in split_top(rest, ',') {
            let item = item.trim();
            let name = leading_word(item);
            if name.is_empty() {
                return Err(Error::fortran(format!("bad declaration item `{item}`"), span));
            }
            let tail = item[name.len()..].trim();
            let mut dims = Vec::new();
            if !tail.is_empty() {
                if !tail.starts_with('(') || matching_paren(tail, 0) != Some(tail.len()) {
                    return Err(Error::fortran(format!("bad declaration item `{item}`"), span));
                }
                for d in split_top(&tail[1..tail.len() - 1], ',') {
                    if d.trim() == "*" {
                        return Err(Error::fortran("assumed-size arrays are not supported", span));
                    }
                    let bounds = split_top(d, ':');
                    dims.push(match bounds.as_slice() {
                        [hi] => (Expr::Int(1), parse_fexpr(hi, span)?),
                        [lo, hi] => (parse_fexpr(lo, span)?, parse_fexpr(hi, span)?),
                        _ => return Err(Error::fortran(format!("bad dimension `{d}`"), span)),
                    });
                }
            }
            if self.decls.contains_key(name) {
                return Err(Error::fortran(format!("`{name}` declared twice"), span));
            }
            self.decls.insert(
                name.to_string(),
                Decl {
                    name: name.to_string(),
                    dtype,
                    dims,
                    span,
                },
            );
        }
        Ok(())
    }
}

/// Parses one subroutine plus its `!$loopy` pragmas.
pub fn parse_fortran(source: &str) -> Result<FortranUnit> {
    let mut pragmas = Vec::new();
    let lines = logical_lines(source, &mut pragmas)?;
    let mut p = Parser {
        lines,
        pos: 0,
        decls: IndexMap::new(),
        tags: Vec::new(),
    };
    let (head, span) = match p.lines.first() {
        Some(Line::Code { text, span }) => (text.clone(), *span),
        Some(Line::TagBegin(_, span) | Line::TagEnd(_, span)) => {
            return Err(Error::fortran("tagged region outside the subroutine", *span));
        }
        None => return Err(Error::fortran("no subroutine found", Span::new(1, 1))),
    };
    let word = leading_word(&head);
    if word != "subroutine" {
        if let Some((_, construct, msg)) = RESTRICTED.iter().find(|(w, _, _)| *w == word) {
            return Err(restricted(construct, msg, span));
        }
        if type_spec(&head, span)?.is_some_and(|(_, rest)| leading_word(rest) == "function") {
            return Err(restricted("FUNCTION", "function subprograms are not supported", span));
        }
        return Err(Error::fortran("expected `subroutine`", span));
    }
    p.pos = 1;
    let rest = head["subroutine".len()..].trim();
    let name = leading_word(rest).to_string();
    if name.is_empty() {
        return Err(Error::fortran("subroutine without a name", span));
    }
    let params = rest[name.len()..].trim();
    let args = if params.is_empty() {
        Vec::new()
    } else {
        if !params.starts_with('(') || !params.ends_with(')') {
            return Err(Error::fortran("malformed argument list", span));
        }
        params[1..params.len() - 1]
            .split(',')
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty())
            .collect()
    };
    let (body, end, end_span) = p.parse_block(0)?;
    if !matches!(end, End::Sub) {
        return Err(Error::fortran("subroutine closed by the wrong `end`", end_span));
    }
    if !p.tags.is_empty() {
        return Err(Error::fortran(format!("tagged region `{}` is never closed", p.tags[0]), end_span));
    }
    if let Some(Line::Code { span, .. }) = p.lines[p.pos..].iter().find(|l| matches!(l, Line::Code { .. })) {
        return Err(Error::fortran("only a single subroutine per file is supported", *span));
    }
    Ok(FortranUnit {
        name,
        args,
        decls: p.decls,
        body,
        pragmas,
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Op(&'static str),
}

const DOT_OPS: &[(&str, &str)] = &[
    (".ge.", ">="),
    (".le.", "<="),
    (".gt.", ">"),
    (".lt.", "<"),
    (".eq.", "=="),
    (".ne.", "!="),
    (".not.", "!"),
];

fn lex(s: &str, span: Span) -> Result<Vec<Tok>> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let dot_word = |i: usize| -> Option<&str> {
        let rest = &s[i + 1..];
        let w = leading_word(rest);
        (!w.is_empty() && w.chars().all(|c| c.is_ascii_alphabetic()) && rest[w.len()..].starts_with('.'))
            .then_some(w)
    };
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let w = leading_word(&s[i..]);
            out.push(Tok::Ident(w.to_string()));
            i += w.len();
        } else if c.is_ascii_digit() || (c == '.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if i < b.len() && b[i] == b'.' && dot_word(i).is_none() {
                real = true;
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let mantissa_end = i;
            if i < b.len() && matches!(b[i], b'e' | b'd') {
                let mut j = i + 1;
                if j < b.len() && matches!(b[j], b'+' | b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    while j < b.len() && b[j].is_ascii_digit() {
                        j += 1;
                    }
                    real = true;
                    i = j;
                }
            }
            let text = &s[start..i];
            if real {
                let normal = format!("{}{}", &s[start..mantissa_end], s[mantissa_end..i].replace('d', "e"));
                let v: f64 = normal
                    .parse()
                    .map_err(|_| Error::fortran(format!("bad real literal `{text}`"), span))?;
                out.push(Tok::Real(v));
            } else {
                let v: i64 = text
                    .parse()
                    .map_err(|_| Error::fortran(format!("bad integer literal `{text}`"), span))?;
                out.push(Tok::Int(v));
            }
        } else if c == '.' {
            let w = dot_word(i).ok_or_else(|| Error::fortran(format!("unexpected `.` in `{s}`"), span))?;
            let full = format!(".{w}.");
            let op = DOT_OPS
                .iter()
                .find(|(d, _)| *d == full)
                .map(|(_, op)| *op)
                .ok_or_else(|| Error::fortran(format!("operator `{full}` is not supported"), span))?;
            out.push(Tok::Op(op));
            i += full.len();
        } else {
            let two = s.get(i..i + 2).unwrap_or("");
            let (op, len) = match two {
                "**" => ("**", 2),
                "<=" => ("<=", 2),
                ">=" => (">=", 2),
                "==" => ("==", 2),
                "/=" => ("!=", 2),
                _ => (
                    match c {
                        '+' => "+",
                        '-' => "-",
                        '*' => "*",
                        '/' => "/",
                        '(' => "(",
                        ')' => ")",
                        ',' => ",",
                        '<' => "<",
                        '>' => ">",
                        _ => return Err(Error::fortran(format!("unexpected character `{c}`"), span)),
                    },
                    1,
                ),
            };
            out.push(Tok::Op(op));
            i += len;
        }
    }
    Ok(out)
}

struct ExprParser {
    toks: Vec<Tok>,
    pos: usize,
    span: Span,
}

impl ExprParser {
    fn peek_op(&self) -> Option<&'static str> {
        match self.toks.get(self.pos) {
            Some(Tok::Op(o)) => Some(o),
            _ => None,
        }
    }

    fn eat(&mut self, op: &str) -> bool {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::fortran(msg.to_string(), self.span)
    }

    fn not_expr(&mut self) -> Result<Expr> {
        if self.eat("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek_op() {
            Some("<") => CmpOp::Lt,
            Some("<=") => CmpOp::Le,
            Some(">") => CmpOp::Gt,
            Some(">=") => CmpOp::Ge,
            Some("==") => CmpOp::Eq,
            Some("!=") => CmpOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.additive()?;
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr> {
        let mut acc = if self.eat("-") {
            negate(self.term()?)
        } else {
            self.eat("+");
            self.term()?
        };
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(acc);
            };
            acc = Expr::binary(op, acc, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.power()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(acc);
            };
            acc = Expr::binary(op, acc, self.power()?);
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat("**") {
            let exp = if self.eat("-") { negate(self.power()?) } else { self.power()? };
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let tok = self.toks.get(self.pos).cloned().ok_or_else(|| self.err("unexpected end of expression"))?;
        self.pos += 1;
        match tok {
            Tok::Int(v) => Ok(Expr::Int(v)),
            Tok::Real(v) => Ok(Expr::Float(v)),
            Tok::Ident(name) => {
                if !self.eat("(") {
                    return Ok(Expr::Var(name));
                }
                let mut args = Vec::new();
                if !self.eat(")") {
                    loop {
                        args.push(self.not_expr()?);
                        if self.eat(")") {
                            break;
                        }
                        if !self.eat(",") {
                            return Err(self.err("expected `,` or `)`"));
                        }
                    }
                }
                Ok(Expr::Call(name, args))
            }
            Tok::Op("(") => {
                let e = self.not_expr()?;
                if !self.eat(")") {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Tok::Op("-") => Ok(negate(self.power()?)),
            Tok::Op(o) => Err(self.err(&format!("unexpected `{o}`"))),
        }
    }
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Int(v) => Expr::Int(-v),
        Expr::Float(v) => Expr::Float(-v),
        other => Expr::neg(other),
    }
}

/// Parses a Fortran expression. Array references and function calls both
/// come out as `Expr::Call`.
pub(crate) fn parse_fexpr(text: &str, span: Span) -> Result<Expr> {
    let toks = lex(text, span)?;
    let mut p = ExprParser { toks, pos: 0, span };
    let e = p.not_expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::fortran(format!("trailing input in expression `{}`", text.trim()), span));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILL: &str = "
      subroutine fill(out, a, n)
        implicit none
        real*8 a, out(n)
        integer n

        do i = 1, n
          out(i) = a
        end do
      end
      !$loopy begin transform
      ! fill = lp.split_iname(fill, \"i\", 128,
      !     outer_tag=\"g.0\", inner_tag=\"l.0\")
      !$loopy end transform
    ";

    #[test]
    fn fill_structure() {
        let u = parse_fortran(FILL).unwrap();
        assert_eq!(u.name, "fill");
        assert_eq!(u.args, ["out", "a", "n"]);
        assert_eq!(u.decls["out"].dtype, DType::F64);
        assert_eq!(u.decls["out"].dims.len(), 1);
        assert_eq!(u.body.len(), 1);
        let Stmt::Do { var, body, .. } = &u.body[0] else { panic!() };
        assert_eq!(var, "i");
        assert_eq!(body.len(), 1);
        let blocks = u.transform_blocks();
        assert_eq!(blocks.len(), 1);
        assert!(blocks[0].1.contains("outer_tag=\"g.0\""));
        assert_eq!(blocks[0].0, 12);
    }

    #[test]
    fn expressions() {
        let s = Span::default();
        assert_eq!(parse_fexpr("a.ge.3", s).unwrap().to_string(), "a >= 3");
        assert_eq!(parse_fexpr("1.5d0*x", s).unwrap().to_string(), "1.5*x");
        assert_eq!(parse_fexpr("1.e-3", s).unwrap(), Expr::Float(1e-3));
        assert_eq!(parse_fexpr("2**3**2", s).unwrap().to_string(), "2**3**2");
        assert_eq!(parse_fexpr("-a**2", s).unwrap().to_string(), "-a**2");
        assert_eq!(parse_fexpr("1.eq.x", s).unwrap().to_string(), "1 == x");
        assert!(parse_fexpr("a .and. b", s).is_err());
    }

    #[test]
    fn restricted_constructs() {
        for (stmt, construct) in [("exit", "EXIT"), ("go to 10", "GOTO"), ("call foo(x)", "CALL"), ("write(*,*) x", "WRITE")] {
            let src = format!("subroutine s(n)\n integer n\n do i = 1, n\n {stmt}\n end do\nend\n");
            match parse_fortran(&src) {
                Err(Error::Restricted { construct: c, span, .. }) => {
                    assert_eq!(c, construct);
                    assert_eq!(span.line, 4);
                }
                other => panic!("{stmt}: {other:?}"),
            }
        }
    }

    #[test]
    fn else_if_nests() {
        let src = "subroutine s(x, n)\n real x(n)\n integer n\n do i=1,n\n if (x(i) > 0) then\n x(i) = 1\n else if (x(i) < 0) then\n x(i) = -1\n else\n x(i) = 0\n endif\n enddo\nend subroutine\n";
        let u = parse_fortran(src).unwrap();
        let Stmt::Do { body, .. } = &u.body[0] else { panic!() };
        let Stmt::If { else_body, .. } = &body[0] else { panic!() };
        assert!(matches!(&else_body[0], Stmt::If { else_body, .. } if else_body.len() == 1));
    }

    #[test]
    fn tagged_region() {
        let src = "subroutine s(a, b, n)\n real a(n), b(n)\n integer n\n do i=1,n\n!$loopy begin tagged: input\n a(i) = 1\n!$loopy end tagged: input\n b(i) = a(i)\n end do\nend\n";
        let u = parse_fortran(src).unwrap();
        let Stmt::Do { body, .. } = &u.body[0] else { panic!() };
        assert!(matches!(&body[0], Stmt::Assign { tags, .. } if tags == &["input".to_string()]));
        assert!(matches!(&body[1], Stmt::Assign { tags, .. } if tags.is_empty()));
    }
}
