//! The kernel value: loop domains, instructions, substitution rules and
//! declarations.

pub(crate) mod build;
mod dump;
mod knl;
mod typing;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::expr::{free_variables, Expr, SubstitutionRule};
use crate::polyset::{AffineExpr, Assumptions, DomainTree};
use crate::types::DType;

pub use build::{expand_for_analysis, infer_dependencies, infer_within_inames, make_kernel, KernelSpec};
pub use knl::parse_knl;
pub use typing::expr_type;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InameTag {
    Group(u32),
    Local(u32),
    Unroll,
    Sequential,
}

impl InameTag {
    /// Parses `g.N`, `l.N`, `unroll`, `sequential` (also `for`, `seq`).
    pub fn parse(s: &str) -> Option<InameTag> {
        let axis = |rest: &str| rest.parse::<u32>().ok().filter(|n| *n < 3);
        match s {
            "unroll" => Some(InameTag::Unroll),
            "sequential" | "seq" | "for" => Some(InameTag::Sequential),
            _ => {
                if let Some(r) = s.strip_prefix("g.") {
                    axis(r).map(InameTag::Group)
                } else if let Some(r) = s.strip_prefix("l.") {
                    axis(r).map(InameTag::Local)
                } else {
                    None
                }
            }
        }
    }

    pub fn is_parallel(self) -> bool {
        matches!(self, InameTag::Group(_) | InameTag::Local(_))
    }
}

impl fmt::Display for InameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InameTag::Group(n) => write!(f, "g.{n}"),
            InameTag::Local(n) => write!(f, "l.{n}"),
            InameTag::Unroll => f.write_str("unroll"),
            InameTag::Sequential => f.write_str("sequential"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub flag: String,
    pub negated: bool,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "!{}", self.flag)
        } else {
            f.write_str(&self.flag)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub id: String,
    pub tags: BTreeSet<String>,
    pub lhs: Expr,
    pub rhs: Expr,
    pub within_inames: BTreeSet<String>,
    pub depends_on: BTreeSet<String>,
    pub predicates: BTreeSet<Predicate>,
}

impl Instruction {
    pub fn new(id: impl Into<String>, lhs: Expr, rhs: Expr) -> Self {
        Instruction {
            id: id.into(),
            tags: BTreeSet::new(),
            lhs,
            rhs,
            within_inames: BTreeSet::new(),
            depends_on: BTreeSet::new(),
            predicates: BTreeSet::new(),
        }
    }

    /// Name of the variable written.
    pub fn assignee(&self) -> &str {
        match &self.lhs {
            Expr::Var(n) | Expr::Subscript(n, _) => n,
            _ => unreachable!("instruction lhs is always a variable or subscript"),
        }
    }

    pub fn lhs_indices(&self) -> &[Expr] {
        match &self.lhs {
            Expr::Subscript(_, xs) => xs,
            _ => &[],
        }
    }

    /// Maps `f` over the rhs and the lhs subscript indices.
    pub fn map_exprs(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> Instruction {
        let lhs = match &self.lhs {
            Expr::Subscript(n, xs) => Expr::Subscript(n.clone(), xs.iter().map(&mut *f).collect()),
            other => other.clone(),
        };
        Instruction {
            lhs,
            rhs: f(&self.rhs),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArgKind {
    GlobalArray,
    Scalar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArgDecl {
    pub name: String,
    pub kind: ArgKind,
    pub dtype: DType,
    pub shape: Vec<AffineExpr>,
    pub strides: Vec<AffineExpr>,
    pub is_output: bool,
}

impl ArgDecl {
    pub fn scalar(name: impl Into<String>, dtype: DType) -> Self {
        ArgDecl {
            name: name.into(),
            kind: ArgKind::Scalar,
            dtype,
            shape: Vec::new(),
            strides: Vec::new(),
            is_output: false,
        }
    }

    pub fn array(name: impl Into<String>, dtype: DType, shape: Vec<AffineExpr>, strides: Vec<AffineExpr>) -> Self {
        ArgDecl {
            name: name.into(),
            kind: ArgKind::GlobalArray,
            dtype,
            shape,
            strides,
            is_output: false,
        }
    }

    pub fn is_array(&self) -> bool {
        self.kind == ArgKind::GlobalArray
    }
}

pub fn row_major_strides(shape: &[AffineExpr]) -> Result<Vec<AffineExpr>> {
    let mut strides = vec![AffineExpr::constant(1); shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = affine_product(&strides[k + 1], &shape[k + 1])?;
    }
    Ok(strides)
}

pub fn column_major_strides(shape: &[AffineExpr]) -> Result<Vec<AffineExpr>> {
    let mut strides = vec![AffineExpr::constant(1); shape.len()];
    for k in 1..shape.len() {
        strides[k] = affine_product(&strides[k - 1], &shape[k - 1])?;
    }
    Ok(strides)
}

fn affine_product(a: &AffineExpr, b: &AffineExpr) -> Result<AffineExpr> {
    match (a.as_constant(), b.as_constant()) {
        (Some(k), _) => Ok(b.scale(k)),
        (_, Some(k)) => Ok(a.scale(k)),
        _ => Err(Error::kernel(format!("stride `({a})*({b})` is not affine"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddressSpace {
    Private,
    Workgroup,
}

impl fmt::Display for AddressSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AddressSpace::Private => "private",
            AddressSpace::Workgroup => "workgroup",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporaryDecl {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<AffineExpr>,
    pub address_space: AddressSpace,
    pub base_offsets: Vec<AffineExpr>,
}

impl TemporaryDecl {
    pub fn scalar(name: impl Into<String>, dtype: DType) -> Self {
        TemporaryDecl {
            name: name.into(),
            dtype,
            shape: Vec::new(),
            address_space: AddressSpace::Private,
            base_offsets: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub name: String,
    pub domains: DomainTree,
    pub instructions: Vec<Instruction>,
    pub rules: IndexMap<String, SubstitutionRule>,
    pub args: Vec<ArgDecl>,
    pub temporaries: IndexMap<String, TemporaryDecl>,
    pub assumptions: Assumptions,
    pub iname_tags: BTreeMap<String, InameTag>,
}

impl Kernel {
    pub fn empty(name: impl Into<String>) -> Self {
        Kernel {
            name: name.into(),
            domains: DomainTree::new(),
            instructions: Vec::new(),
            rules: IndexMap::new(),
            args: Vec::new(),
            temporaries: IndexMap::new(),
            assumptions: Assumptions::new(),
            iname_tags: BTreeMap::new(),
        }
    }

    pub fn arg(&self, name: &str) -> Option<&ArgDecl> {
        self.args.iter().find(|a| a.name == name)
    }

    pub fn is_iname(&self, name: &str) -> bool {
        self.domains.has_iname(name)
    }

    pub fn inames(&self) -> Vec<String> {
        self.domains.inames()
    }

    pub fn params(&self) -> Vec<String> {
        self.domains.params()
    }

    pub fn instruction(&self, id: &str) -> Option<&Instruction> {
        self.instructions.iter().find(|i| i.id == id)
    }

    pub fn tag_of(&self, iname: &str) -> Option<InameTag> {
        self.iname_tags.get(iname).copied()
    }

    pub fn is_parallel(&self, iname: &str) -> bool {
        self.tag_of(iname).is_some_and(InameTag::is_parallel)
    }

    /// Data type of a named variable (argument, temporary, iname or parameter).
    pub fn var_dtype(&self, name: &str) -> Option<DType> {
        if let Some(t) = self.temporaries.get(name) {
            return Some(t.dtype);
        }
        if let Some(a) = self.arg(name) {
            return Some(a.dtype);
        }
        if self.is_iname(name) || self.params().iter().any(|p| p == name) {
            return Some(DType::I32);
        }
        None
    }

    /// Every name in use: inames, parameters, arguments, temporaries, rules
    /// and variables occurring in rule bodies.
    pub fn used_names(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.inames().into_iter().collect();
        out.extend(self.params());
        out.extend(self.args.iter().map(|a| a.name.clone()));
        out.extend(self.temporaries.keys().cloned());
        for r in self.rules.values() {
            out.insert(r.name.clone());
            out.extend(r.params.iter().cloned());
            out.extend(free_variables(&r.body));
        }
        out.extend(self.assumptions.names());
        out
    }

    /// `base` if unused, otherwise the first free `base_0`, `base_1`, ...
    pub fn fresh_name(&self, base: &str) -> String {
        fresh_name_in(&self.used_names(), base)
    }

    pub fn fresh_insn_id(&self, base: &str) -> String {
        let ids: BTreeSet<String> = self.instructions.iter().map(|i| i.id.clone()).collect();
        fresh_name_in(&ids, base)
    }

    /// Ids of instructions writing `var`.
    pub fn writers(&self, var: &str) -> Vec<&str> {
        self.instructions
            .iter()
            .filter(|i| i.assignee() == var)
            .map(|i| i.id.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        validate::validate(self)
    }

    /// Deterministic text form of the whole kernel.
    pub fn dump_ir(&self) -> String {
        dump::dump(self)
    }
}

pub fn fresh_name_in(used: &BTreeSet<String>, base: &str) -> String {
    if !used.contains(base) {
        return base.to_string();
    }
    (0..)
        .map(|k| format!("{base}_{k}"))
        .find(|c| !used.contains(c))
        .expect("unbounded search")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_parsing() {
        assert_eq!(InameTag::parse("g.0"), Some(InameTag::Group(0)));
        assert_eq!(InameTag::parse("l.1"), Some(InameTag::Local(1)));
        assert_eq!(InameTag::parse("unroll"), Some(InameTag::Unroll));
        assert_eq!(InameTag::parse("g.7"), None);
        assert_eq!(InameTag::parse("vec"), None);
    }

    #[test]
    fn fresh_names() {
        let used: BTreeSet<String> = ["h", "h_0", "u_acc"].map(String::from).into();
        assert_eq!(fresh_name_in(&used, "h"), "h_1");
        assert_eq!(fresh_name_in(&used, "u_acc"), "u_acc_0");
        assert_eq!(fresh_name_in(&used, "j"), "j");
    }

    #[test]
    fn strides() {
        let shape = vec![AffineExpr::var("m"), AffineExpr::var("l")];
        assert_eq!(row_major_strides(&shape).unwrap(), vec![AffineExpr::var("l"), AffineExpr::constant(1)]);
        assert_eq!(column_major_strides(&shape).unwrap(), vec![AffineExpr::constant(1), AffineExpr::var("m")]);
        let cube = vec![AffineExpr::var("a"), AffineExpr::var("b"), AffineExpr::var("c")];
        assert!(row_major_strides(&cube).is_err());
    }
}
