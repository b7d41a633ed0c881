use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;

use super::{row_major_strides, ArgDecl, Instruction, Kernel, Predicate, TemporaryDecl};
use crate::error::{Error, Result};
use crate::expr::{
    free_variables, is_intrinsic, parse_statement, split_statements, Expr, InstructionStmt, RuleCall, Statement,
    SubstitutionRule,
};
use crate::polyset::{bounds_for, parse_set, AffineExpr, BasicSet, Constraint, DomainTree};
use crate::types::{DType, Ty};

/// Everything needed to build a kernel from native text.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub name: String,
    pub domains: Vec<String>,
    pub body: String,
    /// Data type of arguments without an explicit entry in `arg_dtypes`.
    pub default_dtype: DType,
    pub arg_dtypes: BTreeMap<String, DType>,
    pub assumptions: Vec<String>,
}

impl KernelSpec {
    pub fn new(name: &str, domains: &[&str], body: &str) -> Self {
        KernelSpec {
            name: name.to_string(),
            domains: domains.iter().map(|s| s.to_string()).collect(),
            body: body.to_string(),
            default_dtype: DType::F32,
            arg_dtypes: BTreeMap::new(),
            assumptions: Vec::new(),
        }
    }

    pub fn build(&self) -> Result<Kernel> {
        build(self)
    }
}

pub fn make_kernel(domain_texts: &[&str], body: &str, name: &str) -> Result<Kernel> {
    KernelSpec::new(name, domain_texts, body).build()
}

/// Replaces every rule invocation by its instantiated body, recursively.
pub fn expand_for_analysis(rules: &IndexMap<String, SubstitutionRule>, e: &Expr) -> Result<Expr> {
    expand_rec(rules, e, 0)
}

fn expand_rec(rules: &IndexMap<String, SubstitutionRule>, e: &Expr, depth: usize) -> Result<Expr> {
    if depth > 64 {
        return Err(Error::kernel("substitution rules are recursive"));
    }
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let out = e.map_bottom_up(&mut |x| match x {
        Expr::Rule(r) if failure.borrow().is_none() => match rules.get(&r.name) {
            Some(rule) => match expand_rec(rules, &rule.instantiate(&r.args), depth + 1) {
                Ok(v) => v,
                Err(err) => {
                    *failure.borrow_mut() = Some(err);
                    Expr::Int(0)
                }
            },
            None => {
                *failure.borrow_mut() = Some(Error::kernel(format!("undefined substitution rule `{}`", r.name)));
                Expr::Int(0)
            }
        },
        other => other,
    });
    match failure.into_inner() {
        Some(err) => Err(err),
        None => Ok(out),
    }
}

/// Variables read by an instruction: free variables of its (expanded) rhs
/// and lhs indices, plus predicate flags.
pub(crate) fn instruction_reads(k: &Kernel, insn: &Instruction) -> Result<BTreeSet<String>> {
    let mut out = free_variables(&expand_for_analysis(&k.rules, &insn.rhs)?);
    for ix in insn.lhs_indices() {
        out.extend(free_variables(&expand_for_analysis(&k.rules, ix)?));
    }
    out.extend(insn.predicates.iter().map(|p| p.flag.clone()));
    Ok(out)
}

/// Inames referenced anywhere in the instruction, reduction inames excluded.
pub(crate) fn referenced_inames(k: &Kernel, insn: &Instruction) -> Result<BTreeSet<String>> {
    let mut names = free_variables(&expand_for_analysis(&k.rules, &insn.rhs)?);
    for ix in insn.lhs_indices() {
        names.extend(free_variables(&expand_for_analysis(&k.rules, ix)?));
    }
    Ok(names.into_iter().filter(|n| k.is_iname(n)).collect())
}

/// Fills empty `within_inames` sets with every iname the instruction references.
pub fn infer_within_inames(k: &Kernel) -> Result<Kernel> {
    let mut out = k.clone();
    for (idx, insn) in k.instructions.iter().enumerate() {
        if insn.within_inames.is_empty() {
            out.instructions[idx].within_inames = referenced_inames(k, insn)?;
        }
    }
    Ok(out)
}

/// Fills empty `depends_on` sets with the writers of every variable read.
pub fn infer_dependencies(k: &Kernel) -> Result<Kernel> {
    let mut out = k.clone();
    for (idx, insn) in k.instructions.iter().enumerate() {
        if insn.depends_on.is_empty() {
            out.instructions[idx].depends_on = inferred_deps(k, insn)?;
        }
    }
    out.validate()?;
    Ok(out)
}

fn inferred_deps(k: &Kernel, insn: &Instruction) -> Result<BTreeSet<String>> {
    let reads = instruction_reads(k, insn)?;
    Ok(k.instructions
        .iter()
        .filter(|w| w.id != insn.id && reads.contains(w.assignee()))
        .map(|w| w.id.clone())
        .collect())
}

fn build(spec: &KernelSpec) -> Result<Kernel> {
    let mut k = Kernel::empty(&spec.name);
    let mut domains = DomainTree::new();
    for text in &spec.domains {
        domains.add_node_auto(parse_set(text)?)?;
    }
    k.domains = domains;

    let mut stmts = Vec::new();
    for (off, text) in split_statements(&spec.body) {
        match parse_statement(&text, off)? {
            Statement::Rule(r) => {
                if k.rules.contains_key(&r.name) {
                    return Err(Error::syntax(format!("duplicate substitution rule `{}`", r.name), off));
                }
                k.rules.insert(r.name.clone(), r);
            }
            Statement::Instruction(s) => stmts.push((off, s)),
        }
    }
    let rule_names: BTreeMap<String, usize> = k.rules.values().map(|r| (r.name.clone(), r.params.len())).collect();
    let resolve = |e: &Expr| resolve_calls(e, &rule_names);
    let mut rules = IndexMap::new();
    for (name, r) in &k.rules {
        let mut r = r.clone();
        r.body = resolve(&r.body)?;
        rules.insert(name.clone(), r);
    }
    k.rules = rules;

    // instructions, temporaries declared with `<>`
    let mut declared_temps: Vec<(String, Option<DType>)> = Vec::new();
    let mut explicit_within = BTreeSet::new();
    let mut explicit_deps = BTreeSet::new();
    let mut auto_id = 0;
    let taken_ids: BTreeSet<String> = stmts.iter().filter_map(|(_, s)| s.options.id.clone()).collect();
    for (off, s) in &stmts {
        let InstructionStmt {
            temp_decl,
            lhs,
            rhs,
            options,
        } = s;
        let id = match &options.id {
            Some(id) => id.clone(),
            None => loop {
                let cand = format!("insn_{auto_id}");
                auto_id += 1;
                if !taken_ids.contains(&cand) {
                    break cand;
                }
            },
        };
        if k.instructions.iter().any(|i| i.id == id) {
            return Err(Error::syntax(format!("duplicate instruction id `{id}`"), *off));
        }
        let mut insn = Instruction::new(id.clone(), resolve(lhs)?, resolve(rhs)?);
        insn.tags = options.tags.iter().cloned().collect();
        insn.predicates = options
            .predicates
            .iter()
            .map(|(flag, negated)| Predicate {
                flag: flag.clone(),
                negated: *negated,
            })
            .collect();
        if let Some(w) = &options.inames {
            insn.within_inames = w.iter().cloned().collect();
            explicit_within.insert(id.clone());
        }
        if let Some(d) = &options.deps {
            insn.depends_on = d.iter().cloned().collect();
            explicit_deps.insert(id.clone());
        }
        if let Some(dt) = temp_decl {
            let name = insn.assignee().to_string();
            if declared_temps.iter().any(|(n, _)| *n == name) {
                return Err(Error::syntax(format!("temporary `{name}` declared twice"), *off));
            }
            declared_temps.push((name, *dt));
        }
        k.instructions.push(insn);
    }

    declare_args(&mut k, spec, &declared_temps)?;

    // forward dtype propagation for `<>` temporaries
    for (name, dt) in &declared_temps {
        let dtype = match dt {
            Some(d) => *d,
            None => {
                let writer = k.instructions.iter().find(|i| i.assignee() == name).expect("declaring instruction");
                match super::expr_type(&k, &writer.rhs) {
                    Ty::WeakInt => DType::I32,
                    Ty::WeakFloat => DType::F64,
                    Ty::Strong(d) => d,
                }
            }
        };
        k.temporaries.insert(name.clone(), TemporaryDecl::scalar(name, dtype));
    }

    for text in &spec.assumptions {
        let inames: BTreeSet<String> = k.inames().into_iter().collect();
        k.assumptions.add_text(text, &|v| inames.contains(v))?;
    }

    infer_shapes(&mut k)?;

    for idx in 0..k.instructions.len() {
        let insn = &k.instructions[idx];
        if !explicit_within.contains(&insn.id) {
            let w = referenced_inames(&k, insn)?;
            k.instructions[idx].within_inames = w;
        }
    }
    for idx in 0..k.instructions.len() {
        let insn = &k.instructions[idx];
        if !explicit_deps.contains(&insn.id) {
            let d = inferred_deps(&k, insn)?;
            k.instructions[idx].depends_on = d;
        }
    }
    k.validate()?;
    Ok(k)
}

/// Rewrites calls naming rules (and bare names of zero-argument rules) into
/// rule invocations; rejects calls to unknown functions.
fn resolve_calls(e: &Expr, rules: &BTreeMap<String, usize>) -> Result<Expr> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let out = e.map_bottom_up(&mut |x| match x {
        Expr::Call(name, args) if rules.contains_key(&name) => {
            if rules[&name] != args.len() {
                *failure.borrow_mut() = Some(Error::kernel(format!(
                    "rule `{name}` takes {} argument(s), got {}",
                    rules[&name],
                    args.len()
                )));
            }
            Expr::Rule(RuleCall { name, tag: None, args })
        }
        Expr::Call(name, args) => {
            if !is_intrinsic(&name) {
                *failure.borrow_mut() = Some(Error::kernel(format!("call to unknown function `{name}`")));
            }
            Expr::Call(name, args)
        }
        Expr::Var(name) if rules.get(&name) == Some(&0) => Expr::Rule(RuleCall {
            name,
            tag: None,
            args: Vec::new(),
        }),
        Expr::Rule(r) if !rules.contains_key(&r.name) => {
            *failure.borrow_mut() = Some(Error::kernel(format!("undefined substitution rule `{}`", r.name)));
            Expr::Rule(r)
        }
        other => other,
    });
    match failure.into_inner() {
        Some(err) => Err(err),
        None => Ok(out),
    }
}

fn declare_args(k: &mut Kernel, spec: &KernelSpec, temps: &[(String, Option<DType>)]) -> Result<()> {
    let inames: BTreeSet<String> = k.inames().into_iter().collect();
    let params = k.params();
    let is_temp = |n: &str| temps.iter().any(|(t, _)| t == n);
    let dtype_of = |n: &str| spec.arg_dtypes.get(n).copied().unwrap_or(spec.default_dtype);
    let mut args: Vec<ArgDecl> = Vec::new();
    let mut note = |name: &str, array: bool, output: bool| -> Result<()> {
        if inames.contains(name) || params.iter().any(|p| p == name) || is_temp(name) || k.rules.contains_key(name) {
            if array && !is_temp(name) {
                return Err(Error::kernel(format!("`{name}` is subscripted but is not an array")));
            }
            return Ok(());
        }
        match args.iter_mut().find(|a| a.name == name) {
            Some(a) => {
                if a.is_array() != array {
                    return Err(Error::kernel(format!("`{name}` is used both as an array and as a scalar")));
                }
                a.is_output |= output;
            }
            None => {
                let mut a = if array {
                    ArgDecl::array(name, dtype_of(name), Vec::new(), Vec::new())
                } else {
                    ArgDecl::scalar(name, dtype_of(name))
                };
                a.is_output = output;
                args.push(a);
            }
        }
        Ok(())
    };
    let visit_reads = |e: &Expr, bound: &BTreeSet<String>, note: &mut dyn FnMut(&str, bool, bool) -> Result<()>| -> Result<()> {
        for v in free_variables(e) {
            if bound.contains(&v) {
                continue;
            }
            let array = e.subscripted_arrays().contains(&v);
            note(&v, array, false)?;
        }
        Ok(())
    };
    for insn in &k.instructions {
        let target = insn.assignee();
        match &insn.lhs {
            Expr::Var(_) if !is_temp(target) && spec.arg_dtypes.get(target).is_none() => {
                return Err(Error::kernel(format!(
                    "assignment to undeclared scalar `{target}` (declare it with `<>`)"
                )));
            }
            Expr::Var(_) => note(target, false, true)?,
            _ => note(target, true, true)?,
        }
        let empty = BTreeSet::new();
        for ix in insn.lhs_indices() {
            visit_reads(ix, &empty, &mut note)?;
        }
        visit_reads(&insn.rhs, &empty, &mut note)?;
        for p in &insn.predicates {
            note(&p.flag, false, false)?;
        }
    }
    for r in k.rules.values() {
        let mut bound: BTreeSet<String> = r.params.iter().cloned().collect();
        bound.extend(r.implicit.iter().map(|(n, _)| n.clone()));
        visit_reads(&r.body, &bound, &mut note)?;
    }
    for p in &params {
        args.push(ArgDecl::scalar(p, DType::I32));
    }
    k.args = args;
    Ok(())
}

/// Shapes of array arguments from the largest index reached by any access.
fn infer_shapes(k: &mut Kernel) -> Result<()> {
    let arrays: Vec<String> = k
        .args
        .iter()
        .filter(|a| a.is_array() && a.shape.is_empty())
        .map(|a| a.name.clone())
        .collect();
    let mut accesses: BTreeMap<String, Vec<Vec<Expr>>> = BTreeMap::new();
    for insn in &k.instructions {
        let mut exprs = vec![expand_for_analysis(&k.rules, &insn.rhs)?];
        exprs.push(insn.lhs.clone());
        for e in exprs {
            e.visit(&mut |x| {
                if let Expr::Subscript(n, idx) = x {
                    accesses.entry(n.clone()).or_default().push(idx.clone());
                }
            });
        }
    }
    for name in arrays {
        let uses = accesses.get(&name).cloned().unwrap_or_default();
        let rank = uses.first().map_or(0, Vec::len);
        if rank == 0 {
            return Err(Error::kernel(format!("cannot infer the shape of array `{name}`")));
        }
        let mut shape = Vec::new();
        for dim in 0..rank {
            let mut best: Option<AffineExpr> = None;
            for idx in &uses {
                if idx.len() != rank {
                    return Err(Error::kernel(format!("array `{name}` is used with different ranks")));
                }
                let ub = index_upper_bound(k, &idx[dim])
                    .map_err(|e| Error::kernel(format!("cannot infer the shape of array `{name}`: {e}")))?;
                best = Some(match best {
                    None => ub,
                    Some(b) => larger(k, b, ub).ok_or_else(|| {
                        Error::kernel(format!("cannot infer the shape of array `{name}`: incomparable index bounds"))
                    })?,
                });
            }
            shape.push(best.expect("at least one access") + 1);
        }
        let strides = row_major_strides(&shape)?;
        let arg = k.args.iter_mut().find(|a| a.name == name).expect("declared");
        arg.shape = shape;
        arg.strides = strides;
    }
    Ok(())
}

fn larger(k: &Kernel, a: AffineExpr, b: AffineExpr) -> Option<AffineExpr> {
    if k.assumptions.implies(&[], &Constraint::ge_zero(a.clone() - b.clone())) {
        Some(a)
    } else if k.assumptions.implies(&[], &Constraint::ge_zero(b.clone() - a)) {
        Some(b)
    } else {
        None
    }
}

/// Largest value of an affine index over the domain, as an expression in
/// the parameters.
fn index_upper_bound(k: &Kernel, ix: &Expr) -> Result<AffineExpr> {
    let a = ix.to_affine().ok_or_else(|| Error::kernel(format!("index `{ix}` is not affine")))?;
    let inames: BTreeSet<String> = a.vars().filter(|v| k.is_iname(v)).map(str::to_string).collect();
    let dom = if inames.is_empty() {
        BasicSet::universe(Vec::new(), Vec::new())?
    } else {
        k.domains.domain_of(&inames)?
    };
    const X: &str = "__index";
    let mut dims = dom.dims().to_vec();
    dims.push(X.to_string());
    let mut params = dom.params().to_vec();
    for v in a.vars() {
        if !dims.iter().any(|d| d == v) && !params.iter().any(|p| p == v) {
            params.push(v.to_string());
        }
    }
    let mut cs = dom.constraints().to_vec();
    cs.push(Constraint::eq_zero(AffineExpr::var(X) - a));
    let s = BasicSet::new(dims, params, cs)?;
    let b = bounds_for(&s, X, &[], &k.assumptions)?;
    match b.upper.as_slice() {
        [ub] if ub.denominator == 1 => Ok(ub.numerator.clone()),
        [_] => Err(Error::kernel("index bound is not integral")),
        _ => Err(Error::kernel("index has several incomparable upper bounds")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_kernel() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "out[i] = 2*a[i]", "double").unwrap();
        assert_eq!(k.instructions.len(), 1);
        let insn = &k.instructions[0];
        assert_eq!(insn.id, "insn_0");
        assert_eq!(insn.within_inames, ["i".to_string()].into());
        let out = k.arg("out").unwrap();
        assert!(out.is_output && out.is_array());
        assert_eq!(out.shape, vec![AffineExpr::var("n")]);
        assert!(!k.arg("a").unwrap().is_output);
        assert_eq!(k.arg("n").unwrap().dtype, DType::I32);
    }

    #[test]
    fn gravity_kernel() {
        let body = "
            grav_force(m, M, r) := -66.742*m*M/r**2

            <> radc = sqrt(sum(n, (x[i,n]-center[n])**2))
            <> rad_j = sqrt(sum(n2, (x[i,n2]-x[j,n2])**2))

            force[i] = grav_force(mass[i], massc, radc) + \\
                sum(j, grav_force(mass[i], mass[j], rad_j))
        ";
        let k = make_kernel(&["{[i,j,n,n2]: 0<=i,j<npart and 0<=n,n2<3}"], body, "grav").unwrap();
        assert_eq!(k.rules.len(), 1);
        assert_eq!(k.instructions.len(), 3);
        let force = &k.instructions[2];
        assert_eq!(force.within_inames, ["i".to_string()].into());
        assert_eq!(force.depends_on, ["insn_0".to_string(), "insn_1".to_string()].into());
        assert_eq!(k.instructions[1].within_inames, ["i".to_string(), "j".to_string()].into());
        assert_eq!(k.arg("x").unwrap().shape, vec![AffineExpr::var("npart"), AffineExpr::constant(3)]);
        assert!(k.arg("massc").is_some_and(|a| !a.is_array()));
    }

    #[test]
    fn empty_and_constant_kernels() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "", "nothing").unwrap();
        assert!(k.instructions.is_empty());
        let k = make_kernel(&[], "out[0] = 1.5", "once").unwrap();
        assert!(k.instructions[0].within_inames.is_empty());
        assert_eq!(k.arg("out").unwrap().shape, vec![AffineExpr::constant(1)]);
    }

    #[test]
    fn forward_difference_shape() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "result[i] = u[i+1]-u[i]", "fd").unwrap();
        assert_eq!(k.arg("u").unwrap().shape, vec![AffineExpr::var("n") + 1]);
    }

    #[test]
    fn temp_dtype_propagation() {
        let mut spec = KernelSpec::new("t", &["{[i]: 0<=i<n}"], "<> a = 2*x[i]\n<> c = i + 1\nout[i] = a*c");
        spec.arg_dtypes.insert("x".into(), DType::F64);
        let k = spec.build().unwrap();
        assert_eq!(k.temporaries["a"].dtype, DType::F64);
        assert_eq!(k.temporaries["c"].dtype, DType::I32);
    }

    #[test]
    fn errors() {
        assert!(make_kernel(&["{[i]: 0<=i<n}"], "f(x) := x\nf(y) := y\nout[i] = f(i)", "k").is_err());
        assert!(make_kernel(&["{[i]: 0<=i<n}"], "s = a[i]", "k").is_err());
        assert!(make_kernel(&["{[i]: 0<=i<n}"], "out[i] = frob(a[i])", "k").is_err());
        let cyc = make_kernel(&[], "<> a = b + 1\n<> b = a + 1\nout[0] = a", "k").unwrap_err();
        assert!(cyc.to_string().contains("cycle"), "{cyc}");
    }
}
