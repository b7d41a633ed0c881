use std::collections::{BTreeMap, BTreeSet};

use super::Kernel;
use crate::error::{Error, Result};
use crate::expr::{free_variables, is_intrinsic, Expr};

/// Closed-world well-formedness check.
pub(super) fn validate(k: &Kernel) -> Result<()> {
    let inames: BTreeSet<String> = k.inames().into_iter().collect();
    let params: BTreeSet<String> = k.params().into_iter().collect();

    let mut owner: BTreeMap<String, &'static str> = BTreeMap::new();
    let mut claim = |name: &str, what: &'static str| -> Result<()> {
        match owner.insert(name.to_string(), what) {
            Some(prev) => Err(Error::kernel(format!("name `{name}` is used as both {prev} and {what}"))),
            None => Ok(()),
        }
    };
    for i in &inames {
        claim(i, "iname")?;
    }
    for r in k.rules.keys() {
        claim(r, "rule")?;
    }
    for t in k.temporaries.keys() {
        claim(t, "temporary")?;
    }
    let mut arg_names = BTreeSet::new();
    for a in &k.args {
        if !arg_names.insert(a.name.as_str()) {
            return Err(Error::kernel(format!("argument `{}` declared twice", a.name)));
        }
        if params.contains(&a.name) {
            continue;
        }
        claim(&a.name, "argument")?;
        if a.shape.len() != a.strides.len() {
            return Err(Error::kernel(format!("argument `{}` has mismatched shape and strides", a.name)));
        }
    }
    for p in &params {
        if k.arg(p).is_none() {
            return Err(Error::kernel(format!("parameter `{p}` has no argument declaration")));
        }
    }

    let known = |n: &str| {
        inames.contains(n) || params.contains(n) || k.arg(n).is_some() || k.temporaries.contains_key(n)
    };

    for (name, rule) in &k.rules {
        let mut bound: BTreeSet<String> = rule.params.iter().cloned().collect();
        bound.extend(rule.implicit.iter().map(|(n, _)| n.clone()));
        check_expr(k, &rule.body, &|n| bound.contains(n) || known(n), &format!("rule `{name}`"))?;
    }

    let mut ids = BTreeSet::new();
    for insn in &k.instructions {
        if !ids.insert(insn.id.as_str()) {
            return Err(Error::kernel(format!("duplicate instruction id `{}`", insn.id)));
        }
    }
    for insn in &k.instructions {
        let ctx = format!("instruction `{}`", insn.id);
        let target = insn.assignee();
        if k.arg(target).is_none() && !k.temporaries.contains_key(target) {
            return Err(Error::kernel(format!("{ctx} writes undeclared variable `{target}`")));
        }
        check_expr(k, &insn.lhs, &known, &ctx)?;
        check_expr(k, &insn.rhs, &known, &ctx)?;
        for w in &insn.within_inames {
            if !inames.contains(w) {
                return Err(Error::kernel(format!("{ctx} is within unknown iname `{w}`")));
            }
        }
        for d in &insn.depends_on {
            if !ids.contains(d.as_str()) {
                return Err(Error::kernel(format!("{ctx} depends on unknown instruction `{d}`")));
            }
        }
        for p in &insn.predicates {
            if !known(&p.flag) {
                return Err(Error::kernel(format!("{ctx} is predicated on unknown flag `{}`", p.flag)));
            }
        }
    }
    for t in k.iname_tags.keys() {
        if !inames.contains(t) {
            return Err(Error::kernel(format!("tag on unknown iname `{t}`")));
        }
    }
    if let Some(cycle) = find_cycle(k) {
        return Err(Error::kernel(format!("dependency cycle: {}", cycle.join(" -> "))));
    }
    for insn in &k.instructions {
        let deps = transitive_deps(k, &insn.id);
        for p in &insn.predicates {
            if k.arg(&p.flag).is_some_and(|a| !a.is_output) {
                continue;
            }
            if !k.writers(&p.flag).iter().any(|w| deps.contains(*w)) {
                return Err(Error::kernel(format!(
                    "flag `{}` of instruction `{}` is not written by any of its dependencies",
                    p.flag, insn.id
                )));
            }
        }
    }
    Ok(())
}

fn check_expr(k: &Kernel, e: &Expr, known: &dyn Fn(&str) -> bool, ctx: &str) -> Result<()> {
    for v in free_variables(e) {
        if !known(&v) {
            return Err(Error::kernel(format!("{ctx} refers to undefined variable `{v}`")));
        }
    }
    let mut err = None;
    e.visit(&mut |x| match x {
        Expr::Rule(r) if !k.rules.contains_key(&r.name) => {
            err.get_or_insert_with(|| Error::kernel(format!("{ctx} invokes undefined rule `{}`", r.name)));
        }
        Expr::Rule(r) if k.rules[&r.name].params.len() != r.args.len() => {
            err.get_or_insert_with(|| Error::kernel(format!("{ctx} invokes rule `{}` with wrong arity", r.name)));
        }
        Expr::Call(n, _) if !is_intrinsic(n) => {
            err.get_or_insert_with(|| Error::kernel(format!("{ctx} calls unknown function `{n}`")));
        }
        Expr::Reduce(_, i, _) if !k.is_iname(i) => {
            err.get_or_insert_with(|| Error::kernel(format!("{ctx} reduces over unknown iname `{i}`")));
        }
        _ => {}
    });
    err.map_or(Ok(()), Err)
}

pub(crate) fn transitive_deps(k: &Kernel, id: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![id.to_string()];
    while let Some(cur) = stack.pop() {
        if let Some(insn) = k.instruction(&cur) {
            for d in &insn.depends_on {
                if seen.insert(d.clone()) {
                    stack.push(d.clone());
                }
            }
        }
    }
    seen
}

fn find_cycle(k: &Kernel) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let index: BTreeMap<&str, usize> = k.instructions.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect();
    let mut mark = vec![Mark::New; k.instructions.len()];
    let mut path: Vec<usize> = Vec::new();

    fn visit(
        k: &Kernel,
        index: &BTreeMap<&str, usize>,
        mark: &mut [Mark],
        path: &mut Vec<usize>,
        n: usize,
    ) -> Option<Vec<String>> {
        mark[n] = Mark::Active;
        path.push(n);
        for d in &k.instructions[n].depends_on {
            let Some(&m) = index.get(d.as_str()) else { continue };
            match mark[m] {
                Mark::Active => {
                    let start = path.iter().position(|&p| p == m).unwrap();
                    let mut cyc: Vec<String> = path[start..].iter().map(|&p| k.instructions[p].id.clone()).collect();
                    cyc.push(k.instructions[m].id.clone());
                    return Some(cyc);
                }
                Mark::New => {
                    if let Some(c) = visit(k, index, mark, path, m) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        path.pop();
        mark[n] = Mark::Done;
        None
    }

    for n in 0..k.instructions.len() {
        if mark[n] == Mark::New {
            if let Some(c) = visit(k, &index, &mut mark, &mut path, n) {
                return Some(c);
            }
        }
    }
    None
}
