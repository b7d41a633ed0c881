use std::collections::{BTreeMap, BTreeSet};

use super::map_all_exprs;
use crate::error::{Error, Result};
use crate::expr::{free_variables, parse_expr, Expr, RuleCall, SubstitutionRule};
use crate::kernel::{expand_for_analysis, fresh_name_in, Kernel};

/// First-order matching of `pattern` against `e`; names in `vars` are
/// pattern variables, everything else must match literally.
fn unify(pattern: &Expr, e: &Expr, vars: &[String], b: &mut BTreeMap<String, Expr>) -> bool {
    match (pattern, e) {
        (Expr::Var(p), _) if vars.contains(p) => match b.get(p) {
            Some(prev) => prev == e,
            None => {
                b.insert(p.clone(), e.clone());
                true
            }
        },
        (Expr::Int(x), Expr::Int(y)) => x == y,
        (Expr::Float(x), Expr::Float(y)) => x.to_bits() == y.to_bits(),
        (Expr::Var(x), Expr::Var(y)) => x == y,
        (Expr::Subscript(n, xs), Expr::Subscript(m, ys)) | (Expr::Call(n, xs), Expr::Call(m, ys)) => {
            n == m && unify_all(xs, ys, vars, b)
        }
        (Expr::Rule(r), Expr::Rule(s)) => r.name == s.name && r.tag == s.tag && unify_all(&r.args, &s.args, vars, b),
        (Expr::Binary(o1, a1, b1), Expr::Binary(o2, a2, b2)) => {
            o1 == o2 && unify(a1, a2, vars, b) && unify(b1, b2, vars, b)
        }
        (Expr::Compare(o1, a1, b1), Expr::Compare(o2, a2, b2)) => {
            o1 == o2 && unify(a1, a2, vars, b) && unify(b1, b2, vars, b)
        }
        (Expr::Unary(o1, a1), Expr::Unary(o2, a2)) => o1 == o2 && unify(a1, a2, vars, b),
        (Expr::Reduce(o1, i1, a1), Expr::Reduce(o2, i2, a2)) => o1 == o2 && i1 == i2 && unify(a1, a2, vars, b),
        _ => false,
    }
}

fn unify_all(xs: &[Expr], ys: &[Expr], vars: &[String], b: &mut BTreeMap<String, Expr>) -> bool {
    xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| unify(x, y, vars, b))
}

fn canonical_arg(e: Expr) -> Expr {
    match e.to_affine() {
        Some(a) => Expr::from_affine(&a),
        None => e,
    }
}

/// Replaces maximal subexpressions matching `template` by invocations.
fn replace_matches(e: &Expr, template: &Expr, params: &[String], rule: &str, count: &mut usize) -> Expr {
    let mut b = BTreeMap::new();
    if unify(template, e, params, &mut b) {
        *count += 1;
        return Expr::Rule(RuleCall {
            name: rule.to_string(),
            tag: None,
            args: params.iter().map(|p| canonical_arg(b[p].clone())).collect(),
        });
    }
    let rec = |x: &Expr, count: &mut usize| replace_matches(x, template, params, rule, count);
    match e {
        Expr::Int(_) | Expr::Float(_) | Expr::Var(_) => e.clone(),
        Expr::Subscript(n, xs) => Expr::Subscript(n.clone(), xs.iter().map(|x| rec(x, count)).collect()),
        Expr::Call(n, xs) => Expr::Call(n.clone(), xs.iter().map(|x| rec(x, count)).collect()),
        Expr::Rule(r) => Expr::Rule(RuleCall {
            name: r.name.clone(),
            tag: r.tag.clone(),
            args: r.args.iter().map(|x| rec(x, count)).collect(),
        }),
        Expr::Binary(op, a, c) => Expr::binary(*op, rec(a, count), rec(c, count)),
        Expr::Compare(op, a, c) => Expr::Compare(*op, Box::new(rec(a, count)), Box::new(rec(c, count))),
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(rec(a, count))),
        Expr::Reduce(op, i, a) => Expr::Reduce(*op, i.clone(), Box::new(rec(a, count))),
    }
}

/// Turns every subexpression matching `template` into an invocation of a new
/// rule. Free inames of the template that are not parameters are renamed in
/// the rule body (`i` -> `i_0`) and re-bound at each use.
pub fn extract_subst(k: &Kernel, rule_name: &str, template_text: &str, parameters: &[String]) -> Result<Kernel> {
    const T: &str = "extract_subst";
    let template = parse_expr(template_text).map_err(|e| Error::transform(T, e.to_string()))?;
    extract_template(k, T, rule_name, template, parameters)
}

fn extract_template(
    k: &Kernel,
    transform: &'static str,
    rule_name: &str,
    template: Expr,
    parameters: &[String],
) -> Result<Kernel> {
    let free = free_variables(&template);
    if let Some(p) = parameters.iter().find(|p| !free.contains(*p)) {
        return Err(Error::transform(transform, format!("parameter `{p}` does not occur in the template")));
    }
    let mut used = k.used_names();
    let name = fresh_name_in(&used, rule_name);
    used.insert(name.clone());

    let mut count = 0;
    let mut out = map_all_exprs(k, &mut |e| replace_matches(e, &template, parameters, &name, &mut count));
    // implicit bindings must keep referring to the site's own inames
    for (rname, r) in out.rules.iter_mut() {
        r.implicit = k.rules[rname].implicit.clone();
    }
    if count == 0 {
        log::warn!("{transform}: template matched nothing");
    }

    let mut renames = BTreeMap::new();
    let mut implicit = Vec::new();
    for v in &free {
        if parameters.contains(v) || !k.is_iname(v) {
            continue;
        }
        let fresh = fresh_name_in(&used, v);
        used.insert(fresh.clone());
        renames.insert(v.clone(), Expr::Var(fresh.clone()));
        implicit.push((fresh, Expr::Var(v.clone())));
    }
    let body = crate::expr::substitute(&template, &renames);
    let mut rule = SubstitutionRule::new(&name, parameters.to_vec(), body);
    rule.implicit = implicit;
    out.rules.insert(name, rule);
    out.validate()?;
    Ok(out)
}

/// Wraps every read of `var` in an invocation of a new rule
/// `rule_name(p_0, ...) := var[p_0, ...]`.
pub fn wrap_variable_access(k: &Kernel, var: &str, rule_name: &str) -> Result<Kernel> {
    const T: &str = "wrap_variable_access";
    let rank = if let Some(a) = k.arg(var) {
        a.shape.len()
    } else if let Some(t) = k.temporaries.get(var) {
        t.shape.len()
    } else {
        return Err(Error::transform(T, format!("unknown variable `{var}`")));
    };
    let params: Vec<String> = (0..rank).map(|d| format!("p_{d}")).collect();
    let template = if rank == 0 {
        Expr::var(var)
    } else {
        Expr::Subscript(var.to_string(), params.iter().map(|p| Expr::var(p)).collect())
    };
    extract_template(k, T, rule_name, template, &params)
}

/// Replaces a temporary by a rule computing its value at each read site.
pub fn temporary_to_subst(k: &Kernel, temp: &str) -> Result<Kernel> {
    const T: &str = "temporary_to_subst";
    let decl = k
        .temporaries
        .get(temp)
        .ok_or_else(|| Error::transform(T, format!("unknown temporary `{temp}`")))?;
    let writers = k.writers(temp);
    let def = match writers.as_slice() {
        [one] => k.instruction(one).expect("writer exists"),
        [] => return Err(Error::transform(T, format!("temporary `{temp}` is never written"))),
        _ => return Err(Error::transform(T, format!("temporary `{temp}` has {} writers", writers.len()))),
    };
    if !def.predicates.is_empty() {
        return Err(Error::transform(T, format!("definition of `{temp}` is predicated")));
    }
    let mut lhs_params = Vec::new();
    for ix in def.lhs_indices() {
        match ix {
            Expr::Var(v) if k.is_iname(v) && !lhs_params.contains(v) => lhs_params.push(v.clone()),
            other => {
                return Err(Error::transform(T, format!("definition subscript `{other}` is not a plain iname")));
            }
        }
    }
    if decl.shape.len() != lhs_params.len() {
        return Err(Error::transform(T, format!("definition of `{temp}` does not write whole elements")));
    }
    let rhs_vars = free_variables(&expand_for_analysis(&k.rules, &def.rhs)?);
    if rhs_vars.contains(temp) {
        return Err(Error::transform(T, format!("definition of `{temp}` reads itself")));
    }
    let params: Vec<String> = k
        .inames()
        .into_iter()
        .filter(|i| def.within_inames.contains(i) && (lhs_params.contains(i) || rhs_vars.contains(i)))
        .collect();

    let name = k.fresh_name(&format!("{temp}_subst"));
    let mut failure = None;
    let mut readers_inames: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut replace = |e: &Expr, within: Option<&BTreeSet<String>>| -> Expr {
        e.map_bottom_up(&mut |x| {
            let actual_idx = match &x {
                Expr::Subscript(n, idx) if n == temp => idx.clone(),
                Expr::Var(n) if n == temp => Vec::new(),
                _ => return x,
            };
            if actual_idx.len() != lhs_params.len() {
                failure.get_or_insert_with(|| format!("read `{x}` has the wrong rank"));
                return x;
            }
            let args = params
                .iter()
                .map(|p| match lhs_params.iter().position(|q| q == p) {
                    Some(pos) => actual_idx[pos].clone(),
                    None => {
                        if within.is_some_and(|w| !w.contains(p)) {
                            failure.get_or_insert_with(|| format!("read `{x}` is outside loop `{p}`"));
                        }
                        Expr::var(p)
                    }
                })
                .collect();
            Expr::Rule(RuleCall {
                name: name.clone(),
                tag: None,
                args,
            })
        })
    };

    let mut out = k.clone();
    out.instructions.retain(|i| i.id != def.id);
    for insn in out.instructions.iter_mut() {
        if insn.predicates.iter().any(|p| p.flag == temp) {
            return Err(Error::transform(T, format!("`{temp}` is used as a predicate")));
        }
        let within = insn.within_inames.clone();
        *insn = insn.map_exprs(&mut |e| replace(e, Some(&within)));
        if insn.depends_on.remove(&def.id) {
            insn.depends_on.extend(def.depends_on.iter().cloned());
        }
        readers_inames.insert(insn.id.clone(), within);
    }
    for r in out.rules.values_mut() {
        r.body = replace(&r.body, None);
    }
    if let Some(msg) = failure {
        return Err(Error::transform(T, msg));
    }
    out.temporaries.shift_remove(temp);
    out.rules.insert(name.clone(), SubstitutionRule::new(&name, params, def.rhs.clone()));
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_kernel;
    use crate::transforms::expand_all_rules;

    #[test]
    fn bsquare() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "a[i] = 23*b[i]**2 + 25*b[i]**2", "bsq").unwrap();
        let e = extract_subst(&k, "bsquare", "alpha*b[i]**2", &["alpha".to_string()]).unwrap();
        assert_eq!(e.rules["bsquare"].render(), "bsquare(alpha) := alpha*b[i_0]**2");
        assert_eq!(e.instructions[0].rhs.to_string(), "bsquare(23) + bsquare(25)");
        let back = expand_all_rules(&e).unwrap();
        assert_eq!(back.instructions[0].rhs, k.instructions[0].rhs);
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "a[i] = b[i]", "k").unwrap();
        assert!(extract_subst(&k, "r", "b[i]", &["q".to_string()]).is_err());
    }

    #[test]
    fn wrap_matches_extract() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "result[i] = u[i+1]-u[i]", "fd").unwrap();
        let w = wrap_variable_access(&k, "u", "u_acc").unwrap();
        let x = extract_subst(&k, "u_acc", "u[j]", &["j".to_string()]).unwrap();
        assert_eq!(w.instructions, x.instructions);
        assert_eq!(w.instructions[0].rhs.to_string(), "u_acc(1 + i) - u_acc(i)");
        let s = make_kernel(&["{[i]: 0<=i<n}"], "out[i] = a*u[i]", "sc").unwrap();
        let w = wrap_variable_access(&s, "a", "a_subst").unwrap();
        assert_eq!(w.rules["a_subst"].render(), "a_subst() := a");
        assert_eq!(w.instructions[0].rhs.to_string(), "a_subst()*u[i]");
    }

    #[test]
    fn temporary_becomes_rule() {
        let mut k = make_kernel(&["{[i]: 0<=i<n}"], "out[i] = 5*inp[i]", "k").unwrap();
        k.temporaries.insert(
            "t".into(),
            crate::kernel::TemporaryDecl {
                shape: vec![crate::polyset::AffineExpr::var("n")],
                ..crate::kernel::TemporaryDecl::scalar("t", crate::types::DType::F32)
            },
        );
        let def = crate::kernel::Instruction {
            within_inames: ["i".to_string()].into(),
            ..crate::kernel::Instruction::new("def", parse_expr("t[i]").unwrap(), parse_expr("6*inp[i]").unwrap())
        };
        k.instructions.insert(0, def);
        k.instructions[1].rhs = parse_expr("5*t[i]").unwrap();
        k.instructions[1].depends_on.insert("def".into());
        k.validate().unwrap();
        let s = temporary_to_subst(&k, "t").unwrap();
        assert_eq!(s.rules["t_subst"].render(), "t_subst(i) := 6*inp[i]");
        assert_eq!(s.instructions.len(), 1);
        assert_eq!(s.instructions[0].rhs.to_string(), "5*t_subst(i)");
        assert!(s.instructions[0].depends_on.is_empty());
        assert!(!s.temporaries.contains_key("t"));
    }

    #[test]
    fn scalar_temporary() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "<> t = 2*x\nout[i] = t*u[i]", "k").unwrap();
        let s = temporary_to_subst(&k, "t").unwrap();
        assert_eq!(s.rules["t_subst"].render(), "t_subst() := 2*x");
        assert_eq!(s.instructions[0].rhs.to_string(), "t_subst()*u[i]");
    }
}
