//! Expression IR of the kernel language.

mod parse;
mod render;
mod subst;

use std::collections::{BTreeMap, BTreeSet};

pub use parse::{parse_expr, parse_statement, split_statements, InsnOptions, InstructionStmt, Statement};
pub use subst::{substitute, substitute_all};

use crate::polyset::AffineExpr;

/// Functions callable from kernel expressions.
pub const INTRINSICS: [&str; 10] = ["sqrt", "sin", "cos", "tan", "exp", "log", "abs", "fabs", "min", "max"];

pub fn is_intrinsic(name: &str) -> bool {
    INTRINSICS.contains(&name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RedOp {
    Sum,
    Product,
    Min,
    Max,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "**",
        }
    }
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

impl RedOp {
    pub fn name(self) -> &'static str {
        match self {
            RedOp::Sum => "sum",
            RedOp::Product => "product",
            RedOp::Min => "min",
            RedOp::Max => "max",
        }
    }
}

/// Use of a substitution rule, optionally tagged (`h$two(i)`).
#[derive(Clone, Debug, PartialEq)]
pub struct RuleCall {
    pub name: String,
    pub tag: Option<String>,
    pub args: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Var(String),
    Subscript(String, Vec<Expr>),
    Call(String, Vec<Expr>),
    Rule(RuleCall),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Reduce(RedOp, String, Box<Expr>),
}

/// A named, parameterized expression macro (`f(x) := x*a[x]`).
#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutionRule {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
    /// Variables of `body` that are re-bound at every expansion
    /// (placeholder name, value at the use site).
    pub implicit: Vec<(String, Expr)>,
}

impl SubstitutionRule {
    pub fn new(name: impl Into<String>, params: Vec<String>, body: Expr) -> Self {
        SubstitutionRule {
            name: name.into(),
            params,
            body,
            implicit: Vec::new(),
        }
    }

    /// The body with formals bound to `args` and implicit names re-bound.
    pub fn instantiate(&self, args: &[Expr]) -> Expr {
        let mut bindings: BTreeMap<String, Expr> =
            self.params.iter().cloned().zip(args.iter().cloned()).collect();
        for (k, v) in &self.implicit {
            bindings.insert(k.clone(), v.clone());
        }
        substitute(&self.body, &bindings)
    }

    /// `name(params) := body` rendering.
    pub fn render(&self) -> String {
        format!("{}({}) := {}", self.name, self.params.join(", "), self.body)
    }
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Unary(UnOp::Neg, Box::new(e))
    }

    /// Pre-order visit of every node.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Int(_) | Expr::Float(_) | Expr::Var(_) => {}
            Expr::Subscript(_, xs) | Expr::Call(_, xs) => xs.iter().for_each(|x| x.visit(f)),
            Expr::Rule(r) => r.args.iter().for_each(|x| x.visit(f)),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Unary(_, a) | Expr::Reduce(_, _, a) => a.visit(f),
        }
    }

    /// Rebuilds the tree bottom-up through `f`.
    pub fn map_bottom_up(&self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Int(_) | Expr::Float(_) | Expr::Var(_) => self.clone(),
            Expr::Subscript(n, xs) => Expr::Subscript(n.clone(), xs.iter().map(|x| x.map_bottom_up(f)).collect()),
            Expr::Call(n, xs) => Expr::Call(n.clone(), xs.iter().map(|x| x.map_bottom_up(f)).collect()),
            Expr::Rule(r) => Expr::Rule(RuleCall {
                name: r.name.clone(),
                tag: r.tag.clone(),
                args: r.args.iter().map(|x| x.map_bottom_up(f)).collect(),
            }),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.map_bottom_up(f), b.map_bottom_up(f)),
            Expr::Compare(op, a, b) => Expr::Compare(*op, Box::new(a.map_bottom_up(f)), Box::new(b.map_bottom_up(f))),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.map_bottom_up(f))),
            Expr::Reduce(op, i, a) => Expr::Reduce(*op, i.clone(), Box::new(a.map_bottom_up(f))),
        };
        f(rebuilt)
    }

    /// Rule invocations anywhere in the tree.
    pub fn rule_calls(&self) -> Vec<&RuleCall> {
        let mut out = Vec::new();
        collect_rule_calls(self, &mut out);
        out
    }

    /// Names of arrays read through subscripts.
    pub fn subscripted_arrays(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Subscript(n, _) = e {
                out.insert(n.clone());
            }
        });
        out
    }

    /// Integer-affine view of the expression, if it has one.
    pub fn to_affine(&self) -> Option<AffineExpr> {
        match self {
            Expr::Int(v) => Some(AffineExpr::constant(*v)),
            Expr::Var(n) => Some(AffineExpr::var(n)),
            Expr::Unary(UnOp::Neg, a) => Some(-a.to_affine()?),
            Expr::Binary(BinOp::Add, a, b) => Some(a.to_affine()? + b.to_affine()?),
            Expr::Binary(BinOp::Sub, a, b) => Some(a.to_affine()? - b.to_affine()?),
            Expr::Binary(BinOp::Mul, a, b) => {
                let (a, b) = (a.to_affine()?, b.to_affine()?);
                match (a.as_constant(), b.as_constant()) {
                    (Some(k), _) => Some(b.scale(k)),
                    (_, Some(k)) => Some(a.scale(k)),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Canonical expression for an affine form: constant first, then
    /// variables in name order (`1 + i_inner + i_outer*16`).
    pub fn from_affine(e: &AffineExpr) -> Expr {
        let mut acc: Option<Expr> = None;
        if e.constant_term() != 0 || e.is_constant() {
            acc = Some(Expr::Int(e.constant_term()));
        }
        for (v, c) in e.terms() {
            let mag = c.abs();
            let term = if mag == 1 {
                Expr::var(v)
            } else {
                Expr::binary(BinOp::Mul, Expr::var(v), Expr::Int(mag))
            };
            acc = Some(match acc {
                None if c < 0 && mag == 1 => Expr::neg(term),
                None if c < 0 => Expr::binary(BinOp::Mul, Expr::neg(Expr::var(v)), Expr::Int(mag)),
                None => term,
                Some(a) if c < 0 => Expr::binary(BinOp::Sub, a, term),
                Some(a) => Expr::binary(BinOp::Add, a, term),
            });
        }
        acc.unwrap_or(Expr::Int(0))
    }

    /// Rewrites affine subscript indices and rule arguments to canonical form.
    pub fn canonicalize_indices(&self) -> Expr {
        let canon = |x: &Expr| x.to_affine().map_or_else(|| x.clone(), |a| Expr::from_affine(&a));
        self.map_bottom_up(&mut |e| match e {
            Expr::Subscript(n, xs) => Expr::Subscript(n, xs.iter().map(canon).collect()),
            Expr::Rule(mut r) => {
                r.args = r.args.iter().map(canon).collect();
                Expr::Rule(r)
            }
            other => other,
        })
    }
}

fn collect_rule_calls<'a>(e: &'a Expr, out: &mut Vec<&'a RuleCall>) {
    match e {
        Expr::Int(_) | Expr::Float(_) | Expr::Var(_) => {}
        Expr::Subscript(_, xs) | Expr::Call(_, xs) => xs.iter().for_each(|x| collect_rule_calls(x, out)),
        Expr::Rule(r) => {
            out.push(r);
            r.args.iter().for_each(|x| collect_rule_calls(x, out));
        }
        Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => {
            collect_rule_calls(a, out);
            collect_rule_calls(b, out);
        }
        Expr::Unary(_, a) | Expr::Reduce(_, _, a) => collect_rule_calls(a, out),
    }
}

/// Array names, scalar names and inames occurring free; reduction inames
/// are bound inside their body. Function and rule names are not variables.
pub fn free_variables(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    free_into(e, &mut Vec::new(), &mut out);
    out
}

fn free_into(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    let mut add = |n: &String, bound: &Vec<String>| {
        if !bound.contains(n) {
            out.insert(n.clone());
        }
    };
    match e {
        Expr::Int(_) | Expr::Float(_) => {}
        Expr::Var(n) => add(n, bound),
        Expr::Subscript(n, xs) => {
            add(n, bound);
            xs.iter().for_each(|x| free_into(x, bound, out));
        }
        Expr::Call(_, xs) => xs.iter().for_each(|x| free_into(x, bound, out)),
        Expr::Rule(r) => r.args.iter().for_each(|x| free_into(x, bound, out)),
        Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => {
            free_into(a, bound, out);
            free_into(b, bound, out);
        }
        Expr::Unary(_, a) => free_into(a, bound, out),
        Expr::Reduce(_, i, a) => {
            bound.push(i.clone());
            free_into(a, bound, out);
            bound.pop();
        }
    }
}

/// Reduction inames used anywhere in the expression.
pub fn reduction_inames(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    e.visit(&mut |x| {
        if let Expr::Reduce(_, i, _) = x {
            out.insert(i.clone());
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_variables_examples() {
        let fv = |s: &str| free_variables(&parse_expr(s).unwrap());
        assert_eq!(fv("2*a[i]"), ["a", "i"].map(String::from).into());
        assert_eq!(fv("sum(j, b[j]*x)"), ["b", "x"].map(String::from).into());
        assert_eq!(fv("-66.742*m*M/r**2"), ["M", "m", "r"].map(String::from).into());
    }

    #[test]
    fn affine_round_trip() {
        let e = parse_expr("i_outer*16 + i_inner + 1").unwrap();
        let a = e.to_affine().unwrap();
        assert_eq!(Expr::from_affine(&a).to_string(), "1 + i_inner + i_outer*16");
        assert_eq!(Expr::from_affine(&(-AffineExpr::var("i"))).to_string(), "-i");
        assert!(parse_expr("i*j").unwrap().to_affine().is_none());
        assert!(parse_expr("i/2").unwrap().to_affine().is_none());
    }
}
