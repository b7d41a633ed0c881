//! A small integer-set engine for loop domains.
//!
//! Sets are conjunctions of affine equalities and inequalities over named
//! dimensions (inames) and symbolic parameters. Projection is Fourier–Motzkin
//! over the rationals with integer tightening of every derived constraint, so
//! emptiness proofs are sound for integer points while projections may
//! over-approximate. Code that iterates projected bounds must guard with the
//! full constraint set.

mod affine;
mod bounds;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use affine::{ceil_div, floor_div, gcd, AffineExpr, Constraint, ConstraintKind};
pub use bounds::{bounds_for, enumerate_points, Bound, IndexBounds};
pub use parse::parse_set;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicSet {
    dims: Vec<String>,
    params: Vec<String>,
    constraints: Vec<Constraint>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl BasicSet {
    pub fn new(dims: Vec<String>, params: Vec<String>, constraints: Vec<Constraint>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for name in dims.iter().chain(&params) {
            if !is_identifier(name) {
                return Err(Error::set(format!("`{name}` is not an identifier")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::set(format!("duplicate dimension or parameter `{name}`")));
            }
        }
        for c in &constraints {
            if let Some(v) = c.expr().vars().find(|v| !seen.contains(v)) {
                return Err(Error::set(format!("constraint `{c}` names unknown variable `{v}`")));
            }
        }
        Ok(BasicSet {
            dims,
            params,
            constraints: normalize(constraints),
        })
    }

    /// The set over `dims` with no constraints.
    pub fn universe(dims: Vec<String>, params: Vec<String>) -> Result<Self> {
        Self::new(dims, params, Vec::new())
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn has_dim(&self, name: &str) -> bool {
        self.dims.iter().any(|d| d == name)
    }

    fn has_name(&self, name: &str) -> bool {
        self.has_dim(name) || self.params.iter().any(|p| p == name)
    }

    pub fn with_constraint(&self, c: Constraint) -> Result<Self> {
        let mut cs = self.constraints.clone();
        cs.push(c);
        Self::new(self.dims.clone(), self.params.clone(), cs)
    }

    /// Adds a parameter name (no-op when present).
    pub fn with_param(&self, name: &str) -> Result<Self> {
        if self.has_name(name) {
            return Ok(self.clone());
        }
        let mut params = self.params.clone();
        params.push(name.to_string());
        Self::new(self.dims.clone(), params, self.constraints.clone())
    }

    /// Renames a dimension or parameter.
    pub fn rename(&self, from: &str, to: &str) -> Result<Self> {
        if !self.has_name(from) {
            return Err(Error::set(format!("unknown variable `{from}`")));
        }
        if from != to && self.has_name(to) {
            return Err(Error::set(format!("name `{to}` already in use")));
        }
        let swap = |v: &Vec<String>| v.iter().map(|d| if d == from { to.to_string() } else { d.clone() }).collect();
        Self::new(
            swap(&self.dims),
            swap(&self.params),
            self.constraints.iter().map(|c| c.substitute(from, &AffineExpr::var(to))).collect(),
        )
    }

    /// Replaces parameter `name` by an affine expression in other parameters.
    pub fn substitute_param(&self, name: &str, replacement: &AffineExpr) -> Result<Self> {
        if self.has_dim(name) {
            return Err(Error::set(format!("`{name}` is a dimension, not a parameter")));
        }
        let mut params: Vec<String> = self.params.iter().filter(|p| *p != name).cloned().collect();
        for v in replacement.vars() {
            if !self.has_dim(v) && !params.iter().any(|p| p == v) {
                params.push(v.to_string());
            }
        }
        let cs = self.constraints.iter().map(|c| c.substitute(name, replacement)).collect();
        Self::new(self.dims.clone(), params, cs)
    }

    /// Replaces `iname` by `factor*outer + inner` with `0 <= inner < factor`.
    /// The two new dimensions take the place of `iname` in the dimension order.
    pub fn split_dim(&self, iname: &str, factor: i64, outer: &str, inner: &str) -> Result<Self> {
        if factor < 1 {
            return Err(Error::set(format!("split factor must be positive, got {factor}")));
        }
        let pos = self
            .dims
            .iter()
            .position(|d| d == iname)
            .ok_or_else(|| Error::set(format!("unknown iname `{iname}`")))?;
        for n in [outer, inner] {
            if self.has_name(n) || outer == inner {
                return Err(Error::set(format!("name `{n}` already in use")));
            }
        }
        let repl = AffineExpr::term(outer, factor) + AffineExpr::var(inner);
        let mut cs: Vec<Constraint> = self.constraints.iter().map(|c| c.substitute(iname, &repl)).collect();
        cs.push(Constraint::ge_zero(AffineExpr::var(inner)));
        cs.push(Constraint::le(AffineExpr::var(inner), AffineExpr::constant(factor - 1)));
        let mut dims = self.dims.clone();
        dims.splice(pos..=pos, [outer.to_string(), inner.to_string()]);
        Self::new(dims, self.params.clone(), cs)
    }

    /// Fourier–Motzkin elimination of `iname` (rational over-approximation of
    /// the integer projection).
    pub fn project_out(&self, iname: &str) -> Result<Self> {
        if !self.has_dim(iname) {
            return Err(Error::set(format!("unknown iname `{iname}`")));
        }
        let dims = self.dims.iter().filter(|d| *d != iname).cloned().collect();
        Self::new(dims, self.params.clone(), eliminate(&self.constraints, iname))
    }

    /// Projects out every dimension not in `keep`.
    pub fn project_onto(&self, keep: &dyn Fn(&str) -> bool) -> Result<Self> {
        let mut s = self.clone();
        for d in self.dims.iter().filter(|d| !keep(d)) {
            s = s.project_out(d)?;
        }
        Ok(s)
    }

    /// Like [`BasicSet::project_onto`], also reporting whether the rational
    /// shadow is exactly the integer projection.
    pub fn project_onto_exact(&self, keep: &dyn Fn(&str) -> bool) -> Result<(Self, bool)> {
        let mut s = self.clone();
        let mut exact = true;
        for d in self.dims.iter().filter(|d| !keep(d)) {
            exact &= elimination_exact(&s.constraints, d);
            s = s.project_out(d)?;
        }
        Ok((s, exact))
    }

    /// True when the set provably has no integer point for any parameter value.
    pub fn is_empty(&self) -> bool {
        constraints_infeasible(&self.constraints)
    }

    /// Membership test for a full assignment of dims and params.
    pub fn contains(&self, values: &dyn Fn(&str) -> Option<i64>) -> Result<bool> {
        for c in &self.constraints {
            match c.holds(values) {
                Some(true) => {}
                Some(false) => return Ok(false),
                None => return Err(Error::set(format!("unbound variable in `{c}`"))),
            }
        }
        Ok(true)
    }

    /// The set with parameters replaced by integer values.
    pub fn fix_params(&self, values: &BTreeMap<String, i64>) -> Result<Self> {
        let mut cs = self.constraints.clone();
        for (p, v) in values {
            if self.params.contains(p) {
                cs = cs.iter().map(|c| c.substitute(p, &AffineExpr::constant(*v))).collect();
            }
        }
        let params = self.params.iter().filter(|p| !values.contains_key(*p)).cloned().collect();
        Self::new(self.dims.clone(), params, cs)
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BasicSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.params.is_empty() {
            write!(f, "[{}] -> ", self.params.join(", "))?;
        }
        write!(f, "{{ [{}]", self.dims.join(", "))?;
        if !self.constraints.is_empty() {
            let cs: Vec<String> = self.constraints.iter().map(|c| c.to_string()).collect();
            write!(f, " : {}", cs.join(" and "))?;
        }
        write!(f, " }}")
    }
}

/// Sorts, deduplicates, drops tautologies and keeps only the tightest of
/// parallel inequalities.
pub(crate) fn normalize(constraints: Vec<Constraint>) -> Vec<Constraint> {
    if constraints.iter().any(Constraint::is_contradiction) {
        return vec![Constraint::ge_zero(AffineExpr::constant(-1))];
    }
    let mut tightest: BTreeMap<(ConstraintKind, Vec<(String, i64)>), i64> = BTreeMap::new();
    let mut contradiction = false;
    for c in constraints.into_iter().filter(|c| !c.is_tautology()) {
        let (kind, vars, k) = c.sort_key();
        match tightest.get_mut(&(kind, vars.clone())) {
            Some(old) => {
                if kind == ConstraintKind::Equality {
                    contradiction |= *old != k;
                } else {
                    *old = (*old).min(k);
                }
            }
            None => {
                tightest.insert((kind, vars), k);
            }
        }
    }
    if contradiction {
        return vec![Constraint::ge_zero(AffineExpr::constant(-1))];
    }
    tightest
        .into_iter()
        .map(|((kind, vars), k)| {
            let e = AffineExpr::from_parts(vars.iter().map(|(v, c)| (v.as_str(), *c)), k);
            match kind {
                ConstraintKind::Equality => Constraint::eq_zero(e),
                ConstraintKind::Inequality => Constraint::ge_zero(e),
            }
        })
        .collect()
}

/// One Fourier–Motzkin step.
/// Whether eliminating `var` loses no integer information: a unit pivot for
/// equalities, otherwise a unit coefficient in every lower/upper pair.
pub(crate) fn elimination_exact(constraints: &[Constraint], var: &str) -> bool {
    let pivot = constraints
        .iter()
        .filter(|c| c.is_equality() && c.mentions(var))
        .min_by_key(|c| c.expr().coeff(var).abs());
    if let Some(eq) = pivot {
        return eq.expr().coeff(var).abs() == 1;
    }
    let coeffs: Vec<i64> = constraints.iter().map(|c| c.expr().coeff(var)).filter(|&k| k != 0).collect();
    coeffs
        .iter()
        .filter(|&&a| a > 0)
        .all(|&a| coeffs.iter().filter(|&&b| b < 0).all(|&b| a == 1 || b == -1))
}

pub(crate) fn eliminate(constraints: &[Constraint], var: &str) -> Vec<Constraint> {
    // prefer an equality with the smallest coefficient as a pivot
    let pivot = constraints
        .iter()
        .filter(|c| c.is_equality() && c.mentions(var))
        .min_by_key(|c| c.expr().coeff(var).abs());
    if let Some(eq) = pivot {
        let a = eq.expr().coeff(var);
        let mut out = Vec::new();
        for c in constraints {
            if std::ptr::eq(c, eq) {
                continue;
            }
            let k = c.expr().coeff(var);
            if k == 0 {
                out.push(c.clone());
                continue;
            }
            // |a|*c - sign(a)*k*eq  has no `var`
            let e = c.expr().scale(a.abs()) - eq.expr().scale(a.signum() * k);
            out.push(match c.kind() {
                ConstraintKind::Equality => Constraint::eq_zero(e),
                ConstraintKind::Inequality => Constraint::ge_zero(e),
            });
        }
        return normalize(out);
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut out = Vec::new();
    for c in constraints {
        match c.expr().coeff(var) {
            0 => out.push(c.clone()),
            k if k > 0 => lower.push(c),
            _ => upper.push(c),
        }
    }
    for l in &lower {
        let a = l.expr().coeff(var);
        for u in &upper {
            let b = -u.expr().coeff(var);
            out.push(Constraint::ge_zero(l.expr().scale(b) + u.expr().scale(a)));
        }
    }
    normalize(out)
}

/// Proves infeasibility by eliminating every variable.
pub(crate) fn constraints_infeasible(constraints: &[Constraint]) -> bool {
    let mut cs = normalize(constraints.to_vec());
    loop {
        if cs.iter().any(Constraint::is_contradiction) {
            return true;
        }
        let vars: BTreeSet<String> = cs.iter().flat_map(|c| c.expr().vars().map(str::to_string)).collect();
        // eliminate the variable producing the fewest new constraints
        let Some(var) = vars.iter().min_by_key(|v| {
            let lo = cs.iter().filter(|c| c.expr().coeff(v) > 0).count();
            let hi = cs.iter().filter(|c| c.expr().coeff(v) < 0).count();
            let has_eq = cs.iter().any(|c| c.is_equality() && c.mentions(v));
            if has_eq { 0 } else { lo * hi }
        }) else {
            return false;
        };
        cs = eliminate(&cs, var);
        if cs.len() > 4000 {
            // give up: cannot prove emptiness
            return false;
        }
    }
}

/// Whether `context` implies `c` for all integer points.
pub(crate) fn implies(context: &[Constraint], c: &Constraint) -> bool {
    c.as_inequalities().iter().all(|ineq| {
        let mut cs = context.to_vec();
        cs.push(ineq.negated().expect("inequality"));
        constraints_infeasible(&cs)
    })
}

/// Facts about parameters that hold for every kernel invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assumptions {
    divisibility: Vec<(AffineExpr, i64)>,
    param_constraints: Vec<Constraint>,
}

impl Assumptions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn divisibility(&self) -> &[(AffineExpr, i64)] {
        &self.divisibility
    }

    pub fn param_constraints(&self) -> &[Constraint] {
        &self.param_constraints
    }

    pub fn is_empty(&self) -> bool {
        self.divisibility.is_empty() && self.param_constraints.is_empty()
    }

    pub fn add_divisibility(&mut self, expr: AffineExpr, modulus: i64) -> Result<()> {
        if modulus < 2 {
            return Err(Error::set(format!("modulus must be at least 2, got {modulus}")));
        }
        if !self.divisibility.contains(&(expr.clone(), modulus)) {
            self.divisibility.push((expr, modulus));
        }
        Ok(())
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        if !self.param_constraints.contains(&c) {
            self.param_constraints.push(c);
        }
    }

    /// Names mentioned by any assumption.
    pub fn names(&self) -> BTreeSet<String> {
        self.divisibility
            .iter()
            .map(|(e, _)| e)
            .chain(self.param_constraints.iter().map(Constraint::expr))
            .flat_map(|e| e.vars().map(str::to_string))
            .collect()
    }

    /// Substitutions `v := m*q - rest` encoding each divisibility fact with a
    /// fresh quotient variable.
    fn substitutions(&self) -> Vec<(String, AffineExpr)> {
        let mut subs: Vec<(String, AffineExpr)> = Vec::new();
        for (k, (e, m)) in self.divisibility.iter().enumerate() {
            let mut e = e.clone();
            for (v, r) in &subs {
                e = e.substitute(v, r);
            }
            let Some((v, c)) = e.terms().find(|(_, c)| c.abs() == 1).map(|(v, c)| (v.to_string(), c)) else {
                continue;
            };
            // c*v + rest = m*q  ==>  v = c*(m*q - rest)
            let mut rest = e.clone();
            rest.add_term(&v, -c);
            let q = format!("__quot{k}");
            let repl = (AffineExpr::term(&q, *m) - rest).scale(c);
            subs.push((v, repl));
        }
        subs
    }

    /// Rewrites constraints so that divisibility facts become visible to
    /// Fourier–Motzkin reasoning.
    pub(crate) fn rewrite(&self, cs: &[Constraint]) -> Vec<Constraint> {
        let subs = self.substitutions();
        cs.iter()
            .map(|c| subs.iter().fold(c.clone(), |c, (v, r)| c.substitute(v, r)))
            .collect()
    }

    /// Parameter constraints in rewritten form.
    pub(crate) fn context(&self) -> Vec<Constraint> {
        self.rewrite(&self.param_constraints)
    }

    /// Whether `context` together with these assumptions implies `c`.
    pub fn implies(&self, context: &[Constraint], c: &Constraint) -> bool {
        let mut cs = self.rewrite(context);
        cs.extend(self.context());
        let c = self.rewrite(std::slice::from_ref(c)).pop().expect("one constraint");
        implies(&cs, &c)
    }

    /// Whether `expr` is provably a multiple of `d`.
    pub fn proves_divisible(&self, expr: &AffineExpr, d: i64) -> bool {
        if d == 1 {
            return true;
        }
        let rewritten = self.substitutions().iter().fold(expr.clone(), |e, (v, r)| e.substitute(v, r));
        rewritten.constant_term() % d == 0 && rewritten.terms().all(|(_, c)| c % d == 0)
    }

    /// Checks concrete parameter values against every fact.
    pub fn check(&self, values: &BTreeMap<String, i64>) -> Result<()> {
        for (e, m) in &self.divisibility {
            let v = e.eval_map(values)?;
            if v.rem_euclid(*m) != 0 {
                return Err(Error::set(format!("assumption `{e} mod {m} = 0` violated ({e} = {v})")));
            }
        }
        for c in &self.param_constraints {
            if c.holds(&|v| values.get(v).copied()) != Some(true) {
                return Err(Error::set(format!("assumption `{c}` violated")));
            }
        }
        Ok(())
    }

    pub fn render_lines(&self) -> Vec<String> {
        self.divisibility
            .iter()
            .map(|(e, m)| format!("{e} mod {m} = 0"))
            .chain(self.param_constraints.iter().map(|c| c.to_string()))
            .collect()
    }
}

/// Nested loop domains: a child may refer to inames of its ancestors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainTree {
    nodes: Vec<BasicSet>,
    parents: Vec<Option<usize>>,
}

impl DomainTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[BasicSet] {
        &self.nodes
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.parents[node];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parents[p];
        }
        out
    }

    /// Adds a node; its parameters that are inames must be introduced by an ancestor.
    pub fn add_node(&mut self, set: BasicSet, parent: Option<usize>) -> Result<usize> {
        for d in set.dims() {
            if self.node_of(d).is_some() {
                return Err(Error::set(format!("iname `{d}` introduced twice")));
            }
        }
        self.nodes.push(set);
        self.parents.push(parent);
        let idx = self.nodes.len() - 1;
        if let Err(e) = self.check_node(idx) {
            self.nodes.pop();
            self.parents.pop();
            return Err(e);
        }
        Ok(idx)
    }

    /// Adds a node whose parent is inferred as the last node introducing one
    /// of its parameters.
    pub fn add_node_auto(&mut self, set: BasicSet) -> Result<usize> {
        let parent = set.params().iter().filter_map(|p| self.node_of(p)).max();
        self.add_node(set, parent)
    }

    fn check_node(&self, idx: usize) -> Result<()> {
        let anc = self.ancestors(idx);
        for p in self.nodes[idx].params() {
            if let Some(owner) = self.node_of(p) {
                if !anc.contains(&owner) {
                    return Err(Error::set(format!(
                        "domain `{}` refers to iname `{p}` of a non-ancestor domain",
                        self.nodes[idx]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn replace_node(&mut self, idx: usize, set: BasicSet) -> Result<()> {
        let old = std::mem::replace(&mut self.nodes[idx], set);
        let mut seen = BTreeSet::new();
        let dup = self.nodes.iter().flat_map(|n| n.dims()).find(|d| !seen.insert(d.as_str())).cloned();
        if let Some(d) = dup {
            self.nodes[idx] = old;
            return Err(Error::set(format!("iname `{d}` introduced twice")));
        }
        Ok(())
    }

    /// Renames an iname in the node introducing it and in descendants that reference it.
    pub fn rename_iname(&mut self, from: &str, to: &str) -> Result<()> {
        for n in self.nodes.iter_mut() {
            if n.has_name(from) {
                *n = n.rename(from, to)?;
            }
        }
        Ok(())
    }

    pub fn node_of(&self, iname: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.has_dim(iname))
    }

    /// All inames in global nesting order (node order, then dimension order).
    pub fn inames(&self) -> Vec<String> {
        self.nodes.iter().flat_map(|n| n.dims().iter().cloned()).collect()
    }

    pub fn has_iname(&self, iname: &str) -> bool {
        self.node_of(iname).is_some()
    }

    /// Parameters (names that are not inames).
    pub fn params(&self) -> Vec<String> {
        let inames: BTreeSet<String> = self.inames().into_iter().collect();
        let mut out: Vec<String> = Vec::new();
        for n in &self.nodes {
            for p in n.params() {
                if !inames.contains(p) && !out.contains(p) {
                    out.push(p.clone());
                }
            }
        }
        out
    }

    /// Conjunction of every node introducing one of `inames`, plus ancestors,
    /// projected onto `inames`.
    pub fn domain_of(&self, inames: &BTreeSet<String>) -> Result<BasicSet> {
        let mut wanted = BTreeSet::new();
        for i in inames {
            let node = self
                .node_of(i)
                .ok_or_else(|| Error::set(format!("unknown iname `{i}`")))?;
            wanted.insert(node);
            wanted.extend(self.ancestors(node));
        }
        let mut dims: Vec<String> = Vec::new();
        let mut cs = Vec::new();
        for &n in &wanted {
            dims.extend(self.nodes[n].dims().iter().cloned());
            cs.extend(self.nodes[n].constraints().iter().cloned());
        }
        let mut params: Vec<String> = Vec::new();
        for &n in &wanted {
            for p in self.nodes[n].params() {
                if !dims.contains(p) && !params.contains(p) {
                    params.push(p.clone());
                }
            }
        }
        BasicSet::new(dims, params, cs)?.project_onto(&|d| inames.contains(d))
    }

    /// Global position of an iname in nesting order.
    pub fn rank(&self, iname: &str) -> usize {
        self.inames().iter().position(|i| i == iname).unwrap_or(usize::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(s: &BasicSet, params: &[(&str, i64)]) -> Vec<Vec<i64>> {
        let p = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        enumerate_points(s, &p).unwrap()
    }

    #[test]
    fn parse_simple_domain() {
        let s = parse_set("{[i]: 0<=i<n}").unwrap();
        assert_eq!(s.dims(), ["i"]);
        assert_eq!(s.params(), ["n"]);
        let expected = vec![
            Constraint::ge_zero(AffineExpr::var("i")),
            Constraint::ge_zero(AffineExpr::var("n") - AffineExpr::var("i") + (-1)),
        ];
        assert_eq!(s.constraints(), normalize(expected).as_slice());
    }

    #[test]
    fn contradictory_bounds_are_empty() {
        assert!(parse_set("{[i]: 0<=i<0}").unwrap().is_empty());
        assert!(!parse_set("{[i]: 0<=i<n}").unwrap().is_empty());
    }

    #[test]
    fn render_round_trip() {
        let s = parse_set("{[i,j]: 0<=i<n and i<=j<n and 2j <= 3n}").unwrap();
        let again = parse_set(&s.render()).unwrap();
        assert_eq!(s, again);
        assert_eq!(again.render(), s.render());
    }

    #[test]
    fn split_by_sixteen() {
        let s = parse_set("{[i]: 0<=i<n}").unwrap().split_dim("i", 16, "i_outer", "i_inner").unwrap();
        assert_eq!(s.dims(), ["i_outer", "i_inner"]);
        let expected = parse_set("{[i_outer,i_inner]: 0<=16*i_outer+i_inner<n and 0<=i_inner<16}").unwrap();
        assert_eq!(s, expected);
        let points = pts(&s, &[("n", 32)]);
        assert_eq!(points.len(), 32);
        assert!(points.iter().all(|p| (0..2).contains(&p[0]) && (0..16).contains(&p[1])));
    }

    #[test]
    fn split_collisions_rejected() {
        let s = parse_set("{[i,j]: 0<=i,j<n}").unwrap();
        assert!(s.split_dim("k", 4, "a", "b").is_err());
        assert!(s.split_dim("i", 4, "j", "b").is_err());
        assert!(s.split_dim("i", 4, "n", "b").is_err());
    }

    #[test]
    fn split_of_37_by_8_is_bijective() {
        let s = parse_set("{[i]: 0<=i<37}").unwrap();
        let split = s.split_dim("i", 8, "io", "ii").unwrap();
        let mut mapped: Vec<i64> = pts(&split, &[]).iter().map(|p| 8 * p[0] + p[1]).collect();
        mapped.sort();
        assert_eq!(mapped, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn project_inner_of_split() {
        let s = parse_set("{[i]: 0<=i<n}").unwrap().split_dim("i", 16, "i_outer", "i_inner").unwrap();
        let p = s.project_out("i_inner").unwrap();
        let expected = parse_set("{[i_outer]: 0 <= i_outer and 16*i_outer <= n - 1 and n >= 1}").unwrap();
        assert_eq!(p, expected);
        // integer projection agrees with brute force for n = 1..64
        for n in 1..=64 {
            let direct: BTreeSet<i64> = pts(&s, &[("n", n)]).iter().map(|p| p[0]).collect();
            let projected: BTreeSet<i64> = pts(&p, &[("n", n)]).iter().map(|p| p[0]).collect();
            assert_eq!(direct, projected, "n = {n}");
        }
    }

    #[test]
    fn projecting_only_dim_leaves_parameter_condition() {
        let p = parse_set("{[i]: 0<=i<n}").unwrap().project_out("i").unwrap();
        assert!(p.dims().is_empty());
        assert_eq!(p.constraints(), [Constraint::ge_zero(AffineExpr::var("n") + (-1))]);
    }

    #[test]
    fn project_triangle() {
        let s = parse_set("{[i,j]: 0<=i<n and i<=j<n}").unwrap();
        let p = s.project_out("j").unwrap();
        assert_eq!(p, parse_set("{[i]: 0<=i<n}").unwrap());
        for n in 1..=8 {
            let direct: BTreeSet<i64> = pts(&s, &[("n", n)]).iter().map(|p| p[0]).collect();
            let projected: BTreeSet<i64> = pts(&p, &[("n", n)]).iter().map(|p| p[0]).collect();
            assert_eq!(direct, projected);
        }
    }

    #[test]
    fn divisibility_makes_bound_implied() {
        let s = parse_set("{[io,ii]: 0<=16io+ii<n and 0<=ii<16}").unwrap();
        let ctx = vec![
            Constraint::ge_zero(AffineExpr::var("io")),
            Constraint::le(AffineExpr::term("io", 16), AffineExpr::var("n") + (-1)),
            Constraint::ge_zero(AffineExpr::var("ii")),
            Constraint::le(AffineExpr::var("ii"), AffineExpr::constant(15)),
        ];
        let target = s.constraints().iter().find(|c| c.mentions("io") && c.mentions("ii") && c.mentions("n")).unwrap();
        let none = Assumptions::new();
        assert!(!none.implies(&ctx, target));
        let mut asm = Assumptions::new();
        asm.add_divisibility(AffineExpr::var("n"), 16).unwrap();
        assert!(asm.implies(&ctx, target));
    }

    #[test]
    fn domain_tree_rejects_duplicate_inames() {
        let mut t = DomainTree::new();
        t.add_node(parse_set("{[i]: 0<=i<n}").unwrap(), None).unwrap();
        assert!(t.add_node(parse_set("{[i]: 0<=i<m}").unwrap(), None).is_err());
        let child = parse_set("{[j]: i<=j<n}").unwrap();
        let c = t.add_node_auto(child).unwrap();
        assert_eq!(t.parent(c), Some(0));
        assert_eq!(t.params(), ["n"]);
        let d = t.domain_of(&["j".to_string()].into_iter().collect()).unwrap();
        assert_eq!(d.dims(), ["j"]);
    }
}
