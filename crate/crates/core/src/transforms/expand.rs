use std::collections::BTreeSet;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::expr::{Expr, RuleCall, SubstitutionRule};
use crate::kernel::{fresh_name_in, Kernel};
use crate::matching::{parse_match, MatchExpr, StackFrame};

const MAX_DEPTH: usize = 64;

/// Rule-aware expression walker tracking the expansion stack.
struct Expander<'a> {
    pattern: &'a MatchExpr,
    rules: IndexMap<String, SubstitutionRule>,
    used: BTreeSet<String>,
    /// (original rule, rewritten body) -> copy name
    copies: Vec<(String, Expr, String)>,
    matched: usize,
    /// outermost frame first
    stack: Vec<StackFrame>,
}

impl Expander<'_> {
    fn stack_matches(&self) -> bool {
        let innermost_first: Vec<StackFrame> = self.stack.iter().rev().cloned().collect();
        self.pattern.matches(&innermost_first)
    }

    fn copy_of(&mut self, name: &str, body: Expr) -> String {
        if let Some((_, _, copy)) = self.copies.iter().find(|(n, b, _)| n == name && *b == body) {
            return copy.clone();
        }
        let copy = fresh_name_in(&self.used, name);
        self.used.insert(copy.clone());
        let mut rule = self.rules[name].clone();
        rule.name = copy.clone();
        rule.body = body.clone();
        self.rules.insert(copy.clone(), rule);
        self.copies.push((name.to_string(), body, copy.clone()));
        copy
    }

    fn walk(&mut self, e: &Expr) -> Result<Expr> {
        Ok(match e {
            Expr::Int(_) | Expr::Float(_) | Expr::Var(_) => e.clone(),
            Expr::Subscript(n, xs) => Expr::Subscript(n.clone(), self.walk_all(xs)?),
            Expr::Call(n, xs) => Expr::Call(n.clone(), self.walk_all(xs)?),
            Expr::Binary(op, a, b) => Expr::binary(*op, self.walk(a)?, self.walk(b)?),
            Expr::Compare(op, a, b) => Expr::Compare(*op, Box::new(self.walk(a)?), Box::new(self.walk(b)?)),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(self.walk(a)?)),
            Expr::Reduce(op, i, a) => Expr::Reduce(*op, i.clone(), Box::new(self.walk(a)?)),
            Expr::Rule(call) => self.walk_invocation(call)?,
        })
    }

    fn walk_all(&mut self, xs: &[Expr]) -> Result<Vec<Expr>> {
        xs.iter().map(|x| self.walk(x)).collect()
    }

    fn walk_invocation(&mut self, call: &RuleCall) -> Result<Expr> {
        let args = self.walk_all(&call.args)?;
        let rule = self
            .rules
            .get(&call.name)
            .cloned()
            .ok_or_else(|| Error::transform("expand_subst", format!("undefined rule `{}`", call.name)))?;
        if self.stack.len() > MAX_DEPTH {
            let chain: Vec<&str> = self.stack.iter().skip(1).map(|f| f.id.as_str()).take(8).collect();
            return Err(Error::transform(
                "expand_subst",
                format!("substitution rules are recursive ({} ...)", chain.join(" -> ")),
            ));
        }
        self.stack.push(StackFrame::rule(&call.name, call.tag.as_deref()));
        let matched = self.stack_matches();
        let body = self.walk(&rule.body);
        self.stack.pop();
        let body = body?;
        if matched {
            self.matched += 1;
            let instantiated = SubstitutionRule { body, ..rule };
            return Ok(instantiated.instantiate(&args));
        }
        let name = if body == rule.body {
            call.name.clone()
        } else {
            self.copy_of(&call.name, body)
        };
        Ok(Expr::Rule(RuleCall {
            name,
            tag: call.tag.clone(),
            args,
        }))
    }
}

/// Expands the rule invocations whose expansion stack matches `m`. Rules
/// whose bodies change only along matched paths are copied (`h` -> `h_0`)
/// so that unmatched invocation sites keep their meaning.
pub fn expand_subst(k: &Kernel, m: &MatchExpr) -> Result<Kernel> {
    let (out, matched) = expand_once(k, m)?;
    if matched == 0 {
        log::warn!("expand_subst: `{m}` matched no rule invocation");
    }
    Ok(out)
}

fn expand_once(k: &Kernel, m: &MatchExpr) -> Result<(Kernel, usize)> {
    let mut ex = Expander {
        pattern: m,
        rules: k.rules.clone(),
        used: k.used_names(),
        copies: Vec::new(),
        matched: 0,
        stack: Vec::new(),
    };
    let mut out = k.clone();
    for insn in out.instructions.iter_mut() {
        ex.stack = vec![StackFrame::instruction(&insn.id, &insn.tags)];
        insn.rhs = ex.walk(&insn.rhs)?;
        if let Expr::Subscript(n, xs) = &insn.lhs {
            insn.lhs = Expr::Subscript(n.clone(), ex.walk_all(xs)?);
        }
    }
    out.rules = ex.rules;
    out.validate()?;
    Ok((out, ex.matched))
}

/// Inlines every rule invocation and empties the rule table.
pub fn expand_all_rules(k: &Kernel) -> Result<Kernel> {
    let all = parse_match("*").expect("valid pattern");
    let mut cur = k.clone();
    loop {
        let (next, matched) = expand_once(&cur, &all)?;
        cur = next;
        if matched == 0 {
            break;
        }
    }
    cur.rules.clear();
    cur.validate()?;
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_kernel;

    fn fgh() -> Kernel {
        let body = "
            f(x) := x*a[x]
            g(x) := 12 + f(x)
            h(x) := 1 + g(x) + 20*g$three(x)
            a[i] = h$one(i) * h$two(i)
        ";
        make_kernel(&["{[i]: 0<=i<n}"], body, "fgh").unwrap()
    }

    #[test]
    fn targeted_expansion_copies_rule() {
        let k = fgh();
        let e = expand_subst(&k, &parse_match("g$three < h$two").unwrap()).unwrap();
        assert_eq!(e.instructions[0].rhs.to_string(), "h$one(i)*h_0$two(i)");
        assert_eq!(e.rules["h_0"].render(), "h_0(x) := 1 + g(x) + 20*(12 + f(x))");
        assert_eq!(e.rules["h"], k.rules["h"]);
    }

    #[test]
    fn full_expansion() {
        let e = expand_all_rules(&fgh()).unwrap();
        assert!(e.rules.is_empty());
        assert!(e.instructions[0].rhs.rule_calls().is_empty());
        let star = expand_subst(&fgh(), &parse_match("*").unwrap()).unwrap();
        assert!(star.instructions[0].rhs.rule_calls().is_empty());
    }

    #[test]
    fn recursion_is_reported() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "f(x) := 1 + g(x)\ng(x) := f(x)\nout[i] = f(i)", "rec").unwrap_err();
        // construction itself must reject recursive rules
        assert!(k.to_string().contains("recursive"), "{k}");
    }
}
