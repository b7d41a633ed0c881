//! Textual form of expressions, with the fewest parentheses that re-parse
//! to the same tree.

use std::fmt;

use super::{BinOp, Expr, RedOp, UnOp};

const PREC_CMP: u8 = 1;
const PREC_ADD: u8 = 2;
const PREC_MUL: u8 = 3;
const PREC_UNARY: u8 = 4;
const PREC_POW: u8 = 5;
const PREC_ATOM: u8 = 6;

pub(crate) fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Int(v) if *v < 0 => PREC_UNARY,
        Expr::Float(v) if v.is_sign_negative() => PREC_UNARY,
        Expr::Compare(..) => PREC_CMP,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::Binary(BinOp::Pow, ..) => PREC_POW,
        Expr::Unary(..) => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, xs: &[Expr]) -> fmt::Result {
    for (k, x) in xs.iter().enumerate() {
        if k > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Float(v) => f.write_str(&format_float(*v)),
            Expr::Var(n) => f.write_str(n),
            Expr::Subscript(n, xs) => {
                write!(f, "{n}[")?;
                write_list(f, xs)?;
                f.write_str("]")
            }
            Expr::Call(n, xs) => {
                write!(f, "{n}(")?;
                write_list(f, xs)?;
                f.write_str(")")
            }
            Expr::Rule(r) => {
                f.write_str(&r.name)?;
                if let Some(t) = &r.tag {
                    write!(f, "${t}")?;
                }
                f.write_str("(")?;
                write_list(f, &r.args)?;
                f.write_str(")")
            }
            Expr::Binary(op, a, b) => {
                let p = precedence(self);
                let (lp, rp) = if *op == BinOp::Pow {
                    (precedence(a) <= p, precedence(b) < PREC_UNARY)
                } else {
                    (precedence(a) < p, precedence(b) <= p)
                };
                write_wrapped(f, a, lp)?;
                match op {
                    BinOp::Add | BinOp::Sub => write!(f, " {} ", op.symbol())?,
                    _ => f.write_str(op.symbol())?,
                }
                write_wrapped(f, b, rp)
            }
            Expr::Compare(op, a, b) => {
                write_wrapped(f, a, precedence(a) <= PREC_CMP)?;
                write!(f, " {} ", op.symbol())?;
                write_wrapped(f, b, precedence(b) <= PREC_CMP)
            }
            Expr::Unary(op, a) => {
                f.write_str(if *op == UnOp::Neg { "-" } else { "!" })?;
                let literal = matches!(**a, Expr::Int(_) | Expr::Float(_));
                write_wrapped(f, a, precedence(a) < PREC_UNARY || literal)
            }
            Expr::Reduce(op, i, body) => match op {
                RedOp::Sum | RedOp::Product => write!(f, "{}({i}, {body})", op.name()),
                RedOp::Min | RedOp::Max => write!(f, "reduce({}, {i}, {body})", op.name()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::parse_expr;

    fn rt(s: &str) -> String {
        parse_expr(s).unwrap().to_string()
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(rt("(a + b)*c"), "(a + b)*c");
        assert_eq!(rt("a + (b + c)"), "a + (b + c)");
        assert_eq!(rt("(a + b) + c"), "a + b + c");
        assert_eq!(rt("a - (b - c)"), "a - (b - c)");
        assert_eq!(rt("(2**3)**2"), "(2**3)**2");
        assert_eq!(rt("2**(-1)"), "2**-1");
        assert_eq!(rt("(-2)**2"), "(-2)**2");
        assert_eq!(rt("-(a*b)"), "-(a*b)");
        assert_eq!(rt("-a*b"), "-a*b");
        assert_eq!(rt("a/(b*c)"), "a/(b*c)");
        assert_eq!(rt("(a >= 3)"), "a >= 3");
        assert_eq!(rt("h$one(i)*h_0$two(i)"), "h$one(i)*h_0$two(i)");
        assert_eq!(rt("reduce(min, j, x[j])"), "reduce(min, j, x[j])");
    }

    #[test]
    fn negative_literals_as_operands() {
        assert_eq!(rt("a*(-3)"), "a*-3");
        assert_eq!(rt("-66.742*m"), "-66.742*m");
        assert_eq!(rt("a - -1.5"), "a - -1.5");
    }
}
