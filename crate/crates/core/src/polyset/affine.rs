use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// `sum(coeff * var) + constant` with integer coefficients.
///
/// Zero coefficients are never stored, so structural equality is semantic
/// equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffineExpr {
    coeffs: BTreeMap<String, i64>,
    constant: i64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        AffineExpr::default()
    }

    pub fn constant(c: i64) -> Self {
        AffineExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(name: &str) -> Self {
        Self::term(name, 1)
    }

    pub fn term(name: &str, coeff: i64) -> Self {
        let mut e = AffineExpr::zero();
        e.add_term(name, coeff);
        e
    }

    pub fn from_parts<'a>(terms: impl IntoIterator<Item = (&'a str, i64)>, constant: i64) -> Self {
        let mut e = AffineExpr::constant(constant);
        for (v, c) in terms {
            e.add_term(v, c);
        }
        e
    }

    pub fn add_term(&mut self, name: &str, coeff: i64) {
        if coeff == 0 {
            return;
        }
        let entry = self.coeffs.entry(name.to_string()).or_insert(0);
        *entry += coeff;
        if *entry == 0 {
            self.coeffs.remove(name);
        }
    }

    pub fn constant_term(&self) -> i64 {
        self.constant
    }

    pub fn set_constant(&mut self, c: i64) {
        self.constant = c;
    }

    pub fn coeff(&self, name: &str) -> i64 {
        self.coeffs.get(name).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, i64)> + '_ {
        self.coeffs.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> + '_ {
        self.coeffs.keys().map(String::as_str)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_constant(&self) -> Option<i64> {
        self.is_constant().then_some(self.constant)
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.coeffs.contains_key(name)
    }

    pub fn scale(&self, k: i64) -> Self {
        if k == 0 {
            return AffineExpr::zero();
        }
        AffineExpr {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: self.constant * k,
        }
    }

    /// Replaces `name` by `replacement` everywhere.
    pub fn substitute(&self, name: &str, replacement: &AffineExpr) -> Self {
        let c = self.coeff(name);
        if c == 0 {
            return self.clone();
        }
        let mut out = self.clone();
        out.coeffs.remove(name);
        out + replacement.scale(c)
    }

    pub fn rename(&self, from: &str, to: &str) -> Self {
        self.substitute(from, &AffineExpr::var(to))
    }

    /// Evaluates with the given variable values; `None` if a variable is unbound.
    pub fn eval(&self, values: &dyn Fn(&str) -> Option<i64>) -> Option<i64> {
        let mut acc = self.constant;
        for (v, c) in &self.coeffs {
            acc += c * values(v)?;
        }
        Some(acc)
    }

    pub fn eval_map(&self, values: &BTreeMap<String, i64>) -> Result<i64> {
        self.eval(&|v| values.get(v).copied()).ok_or_else(|| {
            let missing: Vec<_> = self.vars().filter(|v| !values.contains_key(*v)).collect();
            Error::set(format!("unbound variable(s) {} in {}", missing.join(", "), self))
        })
    }

    /// gcd of all coefficients (0 for a constant expression).
    pub fn coeff_gcd(&self) -> i64 {
        self.coeffs.values().fold(0, |g, c| gcd(g, *c))
    }

    /// Renders as `c + a*x + ...` in the set language (constant first).
    pub fn render_with(&self, mul: &str) -> String {
        let mut parts: Vec<String> = Vec::new();
        if self.constant != 0 || self.coeffs.is_empty() {
            parts.push(self.constant.to_string());
        }
        for (v, c) in &self.coeffs {
            parts.push(match *c {
                1 => v.clone(),
                -1 => format!("-{v}"),
                c => format!("{c}{mul}{v}"),
            });
        }
        parts.join(" + ")
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_with("*"))
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        for (v, c) in rhs.coeffs {
            self.add_term(&v, c);
        }
        self.constant += rhs.constant;
        self
    }
}

impl Add<i64> for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: i64) -> AffineExpr {
        self.constant += rhs;
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + rhs.scale(-1)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1)
    }
}

impl Mul<i64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: i64) -> AffineExpr {
        self.scale(rhs)
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn floor_div(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    a.div_euclid(b)
}

pub fn ceil_div(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    -((-a).div_euclid(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// `expr = 0` or `expr >= 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Constraint {
    kind: ConstraintKind,
    expr: AffineExpr,
}

impl Constraint {
    /// `expr >= 0`, tightened to integer content 1.
    pub fn ge_zero(expr: AffineExpr) -> Self {
        Constraint {
            kind: ConstraintKind::Inequality,
            expr,
        }
        .canonical()
    }

    /// `expr = 0`.
    pub fn eq_zero(expr: AffineExpr) -> Self {
        Constraint {
            kind: ConstraintKind::Equality,
            expr,
        }
        .canonical()
    }

    /// `lhs <= rhs`.
    pub fn le(lhs: AffineExpr, rhs: AffineExpr) -> Self {
        Self::ge_zero(rhs - lhs)
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn expr(&self) -> &AffineExpr {
        &self.expr
    }

    pub fn is_equality(&self) -> bool {
        self.kind == ConstraintKind::Equality
    }

    fn canonical(mut self) -> Self {
        let g = self.expr.coeff_gcd();
        match self.kind {
            ConstraintKind::Inequality => {
                if g > 1 {
                    // integer tightening: sum(a*x) + c >= 0  ==>  sum(a/g*x) + floor(c/g) >= 0
                    let c = floor_div(self.expr.constant, g);
                    for v in self.expr.coeffs.values_mut() {
                        *v /= g;
                    }
                    self.expr.constant = c;
                } else if g == 0 {
                    self.expr.constant = self.expr.constant.signum();
                }
            }
            ConstraintKind::Equality => {
                if g == 0 {
                    self.expr.constant = self.expr.constant.signum();
                } else if self.expr.constant % g != 0 {
                    // no integer solution
                    self = Constraint {
                        kind: ConstraintKind::Equality,
                        expr: AffineExpr::constant(1),
                    };
                } else {
                    let sign = self.expr.coeffs.values().next().map_or(1, |c| c.signum());
                    let d = g * sign;
                    for v in self.expr.coeffs.values_mut() {
                        *v /= d;
                    }
                    self.expr.constant /= d;
                }
            }
        }
        self
    }

    /// Always true regardless of variable values.
    pub fn is_tautology(&self) -> bool {
        self.expr.is_constant()
            && match self.kind {
                ConstraintKind::Equality => self.expr.constant == 0,
                ConstraintKind::Inequality => self.expr.constant >= 0,
            }
    }

    /// Never satisfiable.
    pub fn is_contradiction(&self) -> bool {
        self.expr.is_constant() && !self.is_tautology()
    }

    pub fn holds(&self, values: &dyn Fn(&str) -> Option<i64>) -> Option<bool> {
        let v = self.expr.eval(values)?;
        Some(match self.kind {
            ConstraintKind::Equality => v == 0,
            ConstraintKind::Inequality => v >= 0,
        })
    }

    pub fn substitute(&self, name: &str, replacement: &AffineExpr) -> Self {
        Constraint {
            kind: self.kind,
            expr: self.expr.substitute(name, replacement),
        }
        .canonical()
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.expr.mentions(name)
    }

    /// Integer negation of an inequality: `expr >= 0` becomes `-expr - 1 >= 0`.
    pub fn negated(&self) -> Option<Self> {
        match self.kind {
            ConstraintKind::Inequality => Some(Self::ge_zero(-self.expr.clone() + (-1))),
            ConstraintKind::Equality => None,
        }
    }

    /// The two inequalities equivalent to this constraint (one for inequalities).
    pub fn as_inequalities(&self) -> Vec<Constraint> {
        match self.kind {
            ConstraintKind::Inequality => vec![self.clone()],
            ConstraintKind::Equality => vec![
                Self::ge_zero(self.expr.clone()),
                Self::ge_zero(-self.expr.clone()),
            ],
        }
    }

    pub(crate) fn sort_key(&self) -> (ConstraintKind, Vec<(String, i64)>, i64) {
        (
            self.kind,
            self.expr.coeffs.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            self.expr.constant,
        )
    }

    /// Renders as `lhs <= rhs` (or `=`) with all coefficients positive.
    pub fn render_with(&self, mul: &str) -> String {
        let mut lhs = AffineExpr::zero();
        let mut rhs = AffineExpr::constant(self.expr.constant);
        for (v, c) in self.expr.terms() {
            if c < 0 {
                lhs.add_term(v, -c);
            } else {
                rhs.add_term(v, c);
            }
        }
        let op = match self.kind {
            ConstraintKind::Equality => "=",
            ConstraintKind::Inequality => "<=",
        };
        format!("{} {op} {}", lhs.render_with(mul), rhs.render_with(mul))
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_with("*"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_vanish() {
        let e = AffineExpr::var("i") + AffineExpr::term("i", -1) + 3;
        assert!(e.is_constant());
        assert_eq!(e, AffineExpr::constant(3));
    }

    #[test]
    fn inequality_tightening() {
        // 16*x - 1 >= 0  ==>  x - 1 >= 0
        let c = Constraint::ge_zero(AffineExpr::term("x", 16) + (-1));
        assert_eq!(c.expr(), &(AffineExpr::var("x") + (-1)));
        // 2x + 3 >= 0 ==> x + 1 >= 0
        let c = Constraint::ge_zero(AffineExpr::term("x", 2) + 3);
        assert_eq!(c.expr().constant_term(), 1);
    }

    #[test]
    fn equality_without_integer_solution() {
        let c = Constraint::eq_zero(AffineExpr::term("x", 2) + 1);
        assert!(c.is_contradiction());
    }

    #[test]
    fn render_moves_negative_terms_left() {
        let c = Constraint::ge_zero(AffineExpr::var("n") - AffineExpr::var("i") + (-1));
        assert_eq!(c.to_string(), "i <= -1 + n");
        let c = Constraint::ge_zero(AffineExpr::var("i"));
        assert_eq!(c.to_string(), "0 <= i");
    }

    #[test]
    fn floor_and_ceil() {
        assert_eq!(floor_div(-1, 16), -1);
        assert_eq!(ceil_div(-15, 16), 0);
        assert_eq!(ceil_div(17, 16), 2);
    }
}
