use std::collections::{BTreeMap, BTreeSet};

use super::{free_variables, Expr, RuleCall};

/// Replaces free occurrences of variables by expressions. Reduction inames
/// shadow bindings and are renamed when a replacement would be captured.
pub fn substitute(e: &Expr, bindings: &BTreeMap<String, Expr>) -> Expr {
    if bindings.is_empty() {
        return e.clone();
    }
    match e {
        Expr::Int(_) | Expr::Float(_) => e.clone(),
        Expr::Var(n) => bindings.get(n).cloned().unwrap_or_else(|| e.clone()),
        Expr::Subscript(n, xs) => Expr::Subscript(n.clone(), substitute_all(xs, bindings)),
        Expr::Call(n, xs) => Expr::Call(n.clone(), substitute_all(xs, bindings)),
        Expr::Rule(r) => Expr::Rule(RuleCall {
            name: r.name.clone(),
            tag: r.tag.clone(),
            args: substitute_all(&r.args, bindings),
        }),
        Expr::Binary(op, a, b) => Expr::binary(*op, substitute(a, bindings), substitute(b, bindings)),
        Expr::Compare(op, a, b) => {
            Expr::Compare(*op, Box::new(substitute(a, bindings)), Box::new(substitute(b, bindings)))
        }
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(substitute(a, bindings))),
        Expr::Reduce(op, i, body) => {
            let mut inner = bindings.clone();
            inner.remove(i);
            let mut taken: BTreeSet<String> = inner.values().flat_map(free_variables).collect();
            if !taken.contains(i) {
                return Expr::Reduce(*op, i.clone(), Box::new(substitute(body, &inner)));
            }
            taken.extend(free_variables(body));
            taken.extend(inner.keys().cloned());
            let fresh = (0..)
                .map(|k| format!("{i}_{k}"))
                .find(|c| !taken.contains(c))
                .unwrap();
            inner.insert(i.clone(), Expr::Var(fresh.clone()));
            Expr::Reduce(*op, fresh, Box::new(substitute(body, &inner)))
        }
    }
}

pub fn substitute_all(xs: &[Expr], bindings: &BTreeMap<String, Expr>) -> Vec<Expr> {
    xs.iter().map(|x| substitute(x, bindings)).collect()
}
