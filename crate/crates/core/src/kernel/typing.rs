use super::Kernel;
use crate::expr::{BinOp, Expr};
use crate::types::{DType, Ty};

/// Static type of `e` in kernel `k`. Rule invocations take the type of their
/// instantiated body; unknown names are treated as weak floats.
pub fn expr_type(k: &Kernel, e: &Expr) -> Ty {
    ty(k, e, 0)
}

fn ty(k: &Kernel, e: &Expr, depth: usize) -> Ty {
    match e {
        Expr::Int(_) => Ty::WeakInt,
        Expr::Float(_) => Ty::WeakFloat,
        Expr::Var(n) | Expr::Subscript(n, _) => k.var_dtype(n).map_or(Ty::WeakFloat, Ty::Strong),
        Expr::Call(name, args) => {
            let arg_ty = args.iter().map(|a| ty(k, a, depth)).reduce(Ty::combine).unwrap_or(Ty::WeakFloat);
            match name.as_str() {
                "min" | "max" | "abs" => arg_ty,
                _ => match arg_ty {
                    Ty::WeakInt | Ty::Strong(DType::I32) => Ty::Strong(DType::F64),
                    t => t,
                },
            }
        }
        Expr::Rule(r) => match k.rules.get(&r.name) {
            Some(rule) if depth < 64 => ty(k, &rule.instantiate(&r.args), depth + 1),
            _ => Ty::WeakFloat,
        },
        Expr::Binary(op, a, b) => {
            let (ta, tb) = (ty(k, a, depth), ty(k, b, depth));
            match op {
                BinOp::Div => Ty::divide(ta, tb),
                _ => Ty::combine(ta, tb),
            }
        }
        Expr::Unary(crate::expr::UnOp::Neg, a) => ty(k, a, depth),
        Expr::Unary(crate::expr::UnOp::Not, _) | Expr::Compare(..) => Ty::Strong(DType::I32),
        Expr::Reduce(_, _, body) => ty(k, body, depth),
    }
}
