//! Expressions with every operation's precision pinned down. Shared by the
//! emitters and the interpreter so both evaluate exactly the same operations.

use crate::error::{Error, Result};
use crate::expr::{BinOp, CmpOp, Expr, RedOp, UnOp};
use crate::kernel::{expr_type, Kernel};
use crate::types::{DType, Ty};

#[derive(Clone, Debug, PartialEq)]
pub enum TExpr {
    Int(i64),
    Float(f64, DType),
    Iname(String),
    Scalar(String, DType),
    Load(String, Vec<TExpr>, DType),
    Cast(DType, Box<TExpr>),
    /// Operands already have the operation's dtype.
    Bin(BinOp, DType, Box<TExpr>, Box<TExpr>),
    /// Compares operands converted to the given dtype; the result is `i32`.
    Cmp(CmpOp, DType, Box<TExpr>, Box<TExpr>),
    Neg(DType, Box<TExpr>),
    Not(Box<TExpr>),
    Call(String, DType, Vec<TExpr>),
    Reduce(RedOp, String, DType, Box<TExpr>),
}

impl TExpr {
    pub fn dtype(&self) -> DType {
        match self {
            TExpr::Int(_) | TExpr::Iname(_) | TExpr::Cmp(..) | TExpr::Not(_) => DType::I32,
            TExpr::Float(_, d)
            | TExpr::Scalar(_, d)
            | TExpr::Load(_, _, d)
            | TExpr::Cast(d, _)
            | TExpr::Bin(_, d, _, _)
            | TExpr::Neg(d, _)
            | TExpr::Call(_, d, _)
            | TExpr::Reduce(_, _, d, _) => *d,
        }
    }

    pub fn visit(&self, f: &mut dyn FnMut(&TExpr)) {
        f(self);
        match self {
            TExpr::Int(_) | TExpr::Float(..) | TExpr::Iname(_) | TExpr::Scalar(..) => {}
            TExpr::Load(_, xs, _) | TExpr::Call(_, _, xs) => xs.iter().for_each(|x| x.visit(f)),
            TExpr::Cast(_, a) | TExpr::Neg(_, a) | TExpr::Not(a) | TExpr::Reduce(_, _, _, a) => a.visit(f),
            TExpr::Bin(_, _, a, b) | TExpr::Cmp(_, _, a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }
}

fn is_weak(t: Ty) -> bool {
    matches!(t, Ty::WeakInt | Ty::WeakFloat)
}

struct Typer<'a> {
    k: &'a Kernel,
}

impl Typer<'_> {
    /// `ctx` pins the precision of weakly typed (literal-only) subtrees.
    fn build(&self, e: &Expr, ctx: Option<DType>) -> Result<TExpr> {
        let t = expr_type(self.k, e);
        let d = match ctx {
            Some(c) if is_weak(t) => c,
            _ => t.resolve(),
        };
        Ok(match e {
            Expr::Int(v) => {
                if d.is_float() {
                    TExpr::Float(*v as f64, d)
                } else {
                    TExpr::Int(*v)
                }
            }
            Expr::Float(v) => {
                if d.is_float() {
                    TExpr::Float(*v, d)
                } else {
                    TExpr::Float(*v, DType::F64)
                }
            }
            Expr::Var(n) => {
                if self.k.is_iname(n) {
                    TExpr::Iname(n.clone())
                } else {
                    let dt = self
                        .k
                        .var_dtype(n)
                        .ok_or_else(|| Error::codegen(format!("unknown variable `{n}`")))?;
                    TExpr::Scalar(n.clone(), dt)
                }
            }
            Expr::Subscript(n, idx) => {
                let dt = self
                    .k
                    .var_dtype(n)
                    .ok_or_else(|| Error::codegen(format!("unknown array `{n}`")))?;
                let idx = idx
                    .iter()
                    .map(|x| {
                        let ix = self.build(x, Some(DType::I32))?;
                        if ix.dtype() != DType::I32 {
                            return Err(Error::codegen(format!("non-integer subscript `{x}` of `{n}`")));
                        }
                        Ok(ix)
                    })
                    .collect::<Result<Vec<_>>>()?;
                TExpr::Load(n.clone(), idx, dt)
            }
            Expr::Binary(op, a, b) => {
                TExpr::Bin(*op, d, Box::new(self.operand(a, d)?), Box::new(self.operand(b, d)?))
            }
            Expr::Compare(op, a, b) => {
                let od = Ty::combine(expr_type(self.k, a), expr_type(self.k, b)).resolve();
                // integer literals stay integers (`a >= 3`); evaluation converts them
                let side = |x: &Expr| {
                    if expr_type(self.k, x) == Ty::WeakInt {
                        self.build(x, None)
                    } else {
                        self.operand(x, od)
                    }
                };
                TExpr::Cmp(*op, od, Box::new(side(a)?), Box::new(side(b)?))
            }
            Expr::Unary(UnOp::Neg, a) => TExpr::Neg(d, Box::new(self.operand(a, d)?)),
            Expr::Unary(UnOp::Not, a) => {
                let inner = self.build(a, None)?;
                TExpr::Not(Box::new(inner))
            }
            Expr::Call(name, args) => {
                let args = args.iter().map(|a| self.operand(a, d)).collect::<Result<Vec<_>>>()?;
                TExpr::Call(name.clone(), d, args)
            }
            Expr::Reduce(op, i, body) => TExpr::Reduce(*op, i.clone(), d, Box::new(self.operand(body, d)?)),
            Expr::Rule(r) => {
                return Err(Error::codegen(format!("rule invocation `{}` survived expansion", r.name)));
            }
        })
    }

    /// Builds `e` and converts it to `d` if it is strongly typed otherwise.
    fn operand(&self, e: &Expr, d: DType) -> Result<TExpr> {
        let x = self.build(e, Some(d))?;
        Ok(if x.dtype() == d { x } else { TExpr::Cast(d, Box::new(x)) })
    }
}

/// Typed form of an expression of a kernel whose rules are expanded.
pub fn typed(k: &Kernel, e: &Expr) -> Result<TExpr> {
    Typer { k }.build(e, None)
}

/// Typed rhs of an assignment: the value is converted to the target's dtype.
pub fn typed_assignment(k: &Kernel, rhs: &Expr, target: DType) -> Result<TExpr> {
    Typer { k }.operand(rhs, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::kernel::KernelSpec;

    #[test]
    fn literal_pinning() {
        let mut spec = KernelSpec::new("t", &["{[i]: 0<=i<n}"], "out[i] = 2*u[i] + 1.5\nd[i] = i/2");
        spec.arg_dtypes.insert("d".into(), DType::F64);
        let k = spec.build().unwrap();
        let e = typed(&k, &k.instructions[0].rhs).unwrap();
        let mut floats = Vec::new();
        e.visit(&mut |x| {
            if let TExpr::Float(v, d) = x {
                floats.push((*v, *d));
            }
        });
        assert_eq!(floats, [(2.0, DType::F32), (1.5, DType::F32)]);
        let d = typed(&k, &k.instructions[1].rhs).unwrap();
        assert!(matches!(d, TExpr::Bin(BinOp::Div, DType::F64, ref a, _) if matches!(**a, TExpr::Cast(DType::F64, _))));
        let c = typed(&k, &parse_expr("u[i] >= 3").unwrap()).unwrap();
        assert!(matches!(c, TExpr::Cmp(_, DType::F32, _, ref b) if **b == TExpr::Int(3)));
    }
}
