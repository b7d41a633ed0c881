use std::collections::BTreeSet;

use super::parse_optional_tag;
use crate::error::{Error, Result};
use crate::expr::{Expr, RuleCall};
use crate::kernel::{
    expand_for_analysis, expr_type, fresh_name_in, AddressSpace, InameTag, Instruction, Kernel, TemporaryDecl,
};
use crate::matching::{MatchExpr, StackFrame};
use crate::polyset::{bounds_for, AffineExpr, BasicSet, Constraint};

const T: &str = "precompute";

struct Site {
    insn: usize,
    actuals: Vec<AffineExpr>,
}

/// Per-dimension interval `[lo, lo + extent)`.
struct Interval {
    lo: AffineExpr,
    extent: i64,
}

fn matching_calls(e: &Expr, insn: &Instruction, m: &MatchExpr, out: &mut Vec<RuleCall>) {
    e.visit(&mut |x| {
        if let Expr::Rule(call) = x {
            let stack = [
                StackFrame::rule(&call.name, call.tag.as_deref()),
                StackFrame::instruction(&insn.id, &insn.tags),
            ];
            if m.matches(&stack) {
                out.push(call.clone());
            }
        }
    });
}

fn insn_exprs(insn: &Instruction) -> Vec<&Expr> {
    let mut out = vec![&insn.rhs];
    out.extend(insn.lhs_indices());
    out
}

/// Smallest `[L, U]` among candidate bounds whose width is a constant.
fn tightest_box(k: &Kernel, site_set: &BasicSet, fixed: &[String]) -> Result<Interval> {
    let b = bounds_for(site_set, "__fp", fixed, &k.assumptions)
        .map_err(|e| Error::transform(T, format!("unbounded footprint: {e}")))?;
    let mut best: Option<Interval> = None;
    for l in b.lower.iter().filter(|l| l.denominator == 1) {
        for u in b.upper.iter().filter(|u| u.denominator == 1) {
            if let Some(w) = (u.numerator.clone() - l.numerator.clone()).as_constant() {
                if w >= 0 && best.as_ref().is_none_or(|b| w + 1 < b.extent) {
                    best = Some(Interval {
                        lo: l.numerator.clone(),
                        extent: w + 1,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| Error::transform(T, "footprint is not a rectangle of constant size"))
}

fn union(a: Interval, b: Interval) -> Result<Interval> {
    let shift = (b.lo.clone() - a.lo.clone())
        .as_constant()
        .ok_or_else(|| Error::transform(T, "footprints of the invocations are not aligned"))?;
    let lo = if shift < 0 { b.lo.clone() } else { a.lo.clone() };
    let hi = (a.extent - 1).max(shift + b.extent - 1);
    let base = shift.min(0);
    Ok(Interval { lo, extent: hi - base + 1 })
}

/// Precomputes the values of a rule over the iteration box of `sweep` into a
/// temporary and rewrites the matched invocations to read from it.
pub fn precompute(k: &Kernel, m: &MatchExpr, sweep: &[String], default_tag: Option<&str>) -> Result<Kernel> {
    let tag = parse_optional_tag(T, default_tag)?;
    for s in sweep {
        if !k.is_iname(s) {
            return Err(Error::transform(T, format!("unknown sweep iname `{s}`")));
        }
        if let Some(InameTag::Group(_)) = k.tag_of(s) {
            return Err(Error::transform(T, format!("cannot sweep group-parallel iname `{s}`")));
        }
    }
    for r in k.rules.values() {
        let probe = Instruction::new("", Expr::Int(0), r.body.clone());
        let mut nested = Vec::new();
        matching_calls(&r.body, &probe, m, &mut nested);
        if let Some(c) = nested.first() {
            return Err(Error::transform(
                T,
                format!("`{}` is invoked inside rule `{}`; expand that rule first", c.name, r.name),
            ));
        }
    }

    let mut sites = Vec::new();
    let mut rule_name: Option<String> = None;
    for (idx, insn) in k.instructions.iter().enumerate() {
        let mut calls = Vec::new();
        for e in insn_exprs(insn) {
            matching_calls(e, insn, m, &mut calls);
        }
        for c in calls {
            match &rule_name {
                Some(n) if *n != c.name => {
                    return Err(Error::transform(T, format!("`{m}` matches both `{n}` and `{}`", c.name)));
                }
                _ => rule_name = Some(c.name.clone()),
            }
            let actuals = c
                .args
                .iter()
                .map(|a| a.to_affine().ok_or_else(|| Error::transform(T, format!("argument `{a}` is not affine"))))
                .collect::<Result<Vec<_>>>()?;
            sites.push(Site { insn: idx, actuals });
        }
    }
    let Some(rule_name) = rule_name else {
        log::warn!("precompute: `{m}` matched no invocation");
        return Ok(k.clone());
    };
    let rule = k.rules[&rule_name].clone();
    for (bound, value) in &rule.implicit {
        let mentions_sweep = crate::expr::free_variables(value).iter().any(|v| sweep.contains(v));
        if mentions_sweep {
            return Err(Error::transform(
                T,
                format!("rule `{rule_name}` depends on swept iname through `{bound}`"),
            ));
        }
    }

    // the fetch runs inside every loop of the consumers except the swept ones
    let first = &k.instructions[sites[0].insn];
    let outer: BTreeSet<String> = first.within_inames.iter().filter(|i| !sweep.contains(i)).cloned().collect();
    for site in &sites {
        let insn = &k.instructions[site.insn];
        let rest: BTreeSet<String> = insn.within_inames.iter().filter(|i| !sweep.contains(i)).cloned().collect();
        if rest != outer {
            return Err(Error::transform(
                T,
                format!("invocations in `{}` and `{}` are nested in different loops", first.id, insn.id),
            ));
        }
        if let Some(s) = sweep.iter().find(|s| !insn.within_inames.contains(*s)) {
            return Err(Error::transform(T, format!("`{s}` is not a loop of instruction `{}`", insn.id)));
        }
    }
    let fixed: Vec<String> = k.inames().into_iter().filter(|i| outer.contains(i)).collect();
    let site_inames: BTreeSet<String> = outer.iter().chain(sweep).cloned().collect();
    let site_domain = k.domains.domain_of(&site_inames)?;

    let ndims = rule.params.len();
    let mut intervals: Vec<Interval> = Vec::with_capacity(ndims);
    let mut on_axis = vec![false; ndims];
    for d in 0..ndims {
        let mut acc: Option<Interval> = None;
        for site in &sites {
            let a = &site.actuals[d];
            if let Some(v) = a.vars().find(|v| k.is_iname(v) && !site_inames.contains(*v)) {
                return Err(Error::transform(T, format!("argument `{a}` uses iname `{v}` outside the sweep")));
            }
            on_axis[d] |= a.vars().any(|v| sweep.iter().any(|s| s == v));
            let mut dims = site_domain.dims().to_vec();
            dims.push("__fp".into());
            let mut cs = site_domain.constraints().to_vec();
            cs.push(Constraint::eq_zero(AffineExpr::var("__fp") - a.clone()));
            let mut params = site_domain.params().to_vec();
            params.extend(a.vars().filter(|v| !dims.iter().any(|x| x == v)).map(String::from));
            params.sort();
            params.dedup();
            let set = BasicSet::new(dims, params, cs)?;
            let b = tightest_box(k, &set, &fixed)?;
            acc = Some(match acc {
                None => b,
                Some(prev) => union(prev, b)?,
            });
        }
        let iv = acc.expect("at least one site");
        on_axis[d] |= iv.extent > 1;
        intervals.push(iv);
    }

    let temp = k.fresh_name(&rule_name);
    let mut used = k.used_names();
    for p in &rule.params {
        if !k.is_iname(p) && !k.params().contains(p) && k.arg(p).is_none() && !k.temporaries.contains_key(p) {
            used.remove(p);
        }
    }
    used.insert(temp.clone());
    let mut axis_inames = Vec::new();
    let mut fetch_args = Vec::new();
    for d in 0..ndims {
        if on_axis[d] {
            let p = fresh_name_in(&used, &rule.params[d]);
            used.insert(p.clone());
            fetch_args.push(Expr::from_affine(&(intervals[d].lo.clone() + AffineExpr::var(&p))));
            axis_inames.push((d, p));
        } else {
            fetch_args.push(Expr::from_affine(&intervals[d].lo));
        }
    }
    let fetch_rhs = rule.instantiate(&fetch_args).canonicalize_indices();
    let fetch_lhs = if axis_inames.is_empty() {
        Expr::var(&temp)
    } else {
        Expr::Subscript(temp.clone(), axis_inames.iter().map(|(_, p)| Expr::var(p)).collect())
    };

    let mut out = k.clone();
    if !axis_inames.is_empty() {
        let mut cs = Vec::new();
        for (d, p) in &axis_inames {
            cs.push(Constraint::ge_zero(AffineExpr::var(p)));
            cs.push(Constraint::le(AffineExpr::var(p), AffineExpr::constant(intervals[*d].extent - 1)));
        }
        // keep the fetch inside the arrays it reads
        let analysed = expand_for_analysis(&k.rules, &fetch_rhs)?;
        let mut reads = Vec::new();
        analysed.visit(&mut |e| {
            if let Expr::Subscript(n, idx) = e {
                reads.push((n.clone(), idx.clone()));
            }
        });
        for (name, idx) in reads {
            let Some(arg) = k.arg(&name) else { continue };
            for (ix, extent) in idx.iter().zip(&arg.shape) {
                let Some(a) = ix.to_affine() else { continue };
                if !axis_inames.iter().any(|(_, p)| a.mentions(p)) {
                    continue;
                }
                cs.push(Constraint::ge_zero(a.clone()));
                cs.push(Constraint::le(a, extent.clone() + (-1)));
            }
        }
        let dims: Vec<String> = axis_inames.iter().map(|(_, p)| p.clone()).collect();
        let mut params: Vec<String> = Vec::new();
        for c in &cs {
            for v in c.expr().vars() {
                if !dims.iter().any(|d| d == v) && !params.iter().any(|p| p == v) {
                    params.push(v.to_string());
                }
            }
        }
        let node = BasicSet::new(dims, params, cs)?;
        out.domains.add_node_auto(node)?;
    }

    let address_space = if sweep.iter().any(|s| matches!(k.tag_of(s), Some(InameTag::Local(_)))) {
        AddressSpace::Workgroup
    } else {
        AddressSpace::Private
    };
    out.temporaries.insert(
        temp.clone(),
        TemporaryDecl {
            name: temp.clone(),
            dtype: expr_type(k, &fetch_rhs).resolve(),
            shape: axis_inames
                .iter()
                .map(|(d, _)| AffineExpr::constant(intervals[*d].extent))
                .collect(),
            address_space,
            base_offsets: axis_inames.iter().map(|(d, _)| intervals[*d].lo.clone()).collect(),
        },
    );

    let fetch_id = fresh_name_in(
        &k.instructions.iter().map(|i| i.id.clone()).collect(),
        &format!("{temp}_fetch"),
    );
    let mut fetch = Instruction::new(&fetch_id, fetch_lhs, fetch_rhs);
    fetch.within_inames = outer.iter().cloned().chain(axis_inames.iter().map(|(_, p)| p.clone())).collect();
    let analysed = expand_for_analysis(&k.rules, &fetch.rhs)?;
    let mut reads = crate::expr::free_variables(&analysed);
    reads.extend(analysed.subscripted_arrays());
    for r in &reads {
        fetch.depends_on.extend(k.writers(r).into_iter().map(String::from));
    }

    let consumers: BTreeSet<usize> = sites.iter().map(|s| s.insn).collect();
    for &idx in &consumers {
        let insn = &k.instructions[idx];
        let mut rewritten = insn.map_exprs(&mut |e| {
            e.map_bottom_up(&mut |x| {
                let Expr::Rule(call) = &x else { return x };
                let stack = [
                    StackFrame::rule(&call.name, call.tag.as_deref()),
                    StackFrame::instruction(&insn.id, &insn.tags),
                ];
                if !m.matches(&stack) {
                    return x;
                }
                let idx: Vec<Expr> = axis_inames
                    .iter()
                    .map(|(d, _)| {
                        let a = call.args[*d].to_affine().expect("checked affine");
                        Expr::from_affine(&(a - intervals[*d].lo.clone()))
                    })
                    .collect();
                if idx.is_empty() {
                    Expr::var(&temp)
                } else {
                    Expr::Subscript(temp.clone(), idx)
                }
            })
        });
        rewritten.depends_on.insert(fetch_id.clone());
        out.instructions[idx] = rewritten;
    }
    let pos = *consumers.iter().next().expect("one consumer");
    out.instructions.insert(pos, fetch);
    if let Some(t) = tag {
        for (_, p) in &axis_inames {
            out.iname_tags.insert(p.clone(), t);
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::parse_match;
    use crate::transforms::{assume, extract_subst, split_iname};
    use crate::kernel::make_kernel;

    fn fd(divisible: bool) -> Kernel {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "result[i] = u[i+1]-u[i]", "fd").unwrap();
        let mut k = split_iname(&k, "i", 16, None, None).unwrap();
        if divisible {
            k = assume(&k, "n mod 16 = 0").unwrap();
        }
        extract_subst(&k, "u_acc", "u[j]", &["j".to_string()]).unwrap()
    }

    #[test]
    fn forward_difference_footprint() {
        let k = precompute(&fd(true), &parse_match("u_acc").unwrap(), &["i_inner".into()], None).unwrap();
        let t = &k.temporaries["u_acc_0"];
        assert_eq!(t.shape, vec![AffineExpr::constant(17)]);
        assert_eq!(t.address_space, AddressSpace::Private);
        assert_eq!(t.base_offsets, vec![AffineExpr::term("i_outer", 16)]);
        let fetch = &k.instructions[0];
        assert_eq!(fetch.lhs.to_string(), "u_acc_0[j]");
        assert_eq!(fetch.rhs.to_string(), "u[i_outer*16 + j]");
        assert_eq!(fetch.within_inames, ["i_outer".to_string(), "j".to_string()].into());
        let c = &k.instructions[1];
        assert_eq!(c.rhs.to_string(), "u_acc_0[1 + i_inner] - u_acc_0[i_inner]");
        assert!(c.depends_on.contains(&fetch.id));
    }

    #[test]
    fn scalar_precompute() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "s(x) := 2*x\nout[i] = s(a)*u[i]", "k").unwrap();
        let p = precompute(&k, &parse_match("s").unwrap(), &[], None).unwrap();
        assert!(p.temporaries["s_0"].shape.is_empty());
        assert_eq!(p.instructions[0].rhs.to_string(), "2*a");
        assert_eq!(p.instructions[1].rhs.to_string(), "s_0*u[i]");
    }

    #[test]
    fn precompute_errors() {
        let k = fd(true);
        assert!(precompute(&k, &parse_match("u_acc").unwrap(), &["nope".into()], None).is_err());
        let g = crate::transforms::tag_inames(&k, "i_outer:g.0").unwrap();
        assert!(precompute(&g, &parse_match("u_acc").unwrap(), &["i_outer".into()], None).is_err());
        let tri = make_kernel(&["{[i,j]: 0<=j<=i<n}"], "r(x) := u[x]\nout[i,j] = r(j)", "tri").unwrap();
        assert!(precompute(&tri, &parse_match("r").unwrap(), &["j".into()], None).is_err());
    }
}
