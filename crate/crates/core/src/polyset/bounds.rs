use std::collections::BTreeMap;

use super::affine::{ceil_div, floor_div, AffineExpr, Constraint};
use super::{Assumptions, BasicSet};
use crate::error::{Error, Result};

/// `floor(numerator / denominator)` for upper bounds, `ceil(...)` for lower ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bound {
    pub numerator: AffineExpr,
    pub denominator: i64,
}

impl Bound {
    pub fn exact(e: AffineExpr) -> Self {
        Bound {
            numerator: e,
            denominator: 1,
        }
    }

    pub fn eval_upper(&self, values: &dyn Fn(&str) -> Option<i64>) -> Option<i64> {
        Some(floor_div(self.numerator.eval(values)?, self.denominator))
    }

    pub fn eval_lower(&self, values: &dyn Fn(&str) -> Option<i64>) -> Option<i64> {
        Some(ceil_div(self.numerator.eval(values)?, self.denominator))
    }

    /// The constraint `denominator * x <= numerator`.
    pub fn upper_constraint(&self, iname: &str) -> Constraint {
        Constraint::le(AffineExpr::term(iname, self.denominator), self.numerator.clone())
    }

    /// The constraint `denominator * x >= numerator`.
    pub fn lower_constraint(&self, iname: &str) -> Constraint {
        Constraint::le(self.numerator.clone(), AffineExpr::term(iname, self.denominator))
    }

    /// For an upper bound: `(quotient, remainder_expr)` with
    /// `floor(num/den) = quotient + floor(remainder_expr/den)` and the constant
    /// of `remainder_expr` in `[0, den)`.
    pub fn split_floor(&self) -> (i64, AffineExpr) {
        let c = self.numerator.constant_term();
        let q = floor_div(c, self.denominator);
        let mut rest = self.numerator.clone();
        rest.set_constant(c - q * self.denominator);
        (q, rest)
    }

    /// Same as [`Bound::split_floor`] for `ceil(num/den) = floor((num+den-1)/den)`.
    pub fn split_ceil(&self) -> (i64, AffineExpr) {
        Bound {
            numerator: self.numerator.clone() + (self.denominator - 1),
            denominator: self.denominator,
        }
        .split_floor()
    }

    fn vars(&self) -> usize {
        self.numerator.vars().count()
    }
}

/// Lower and upper bounds of one iname, each list combined by max / min.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexBounds {
    pub iname: String,
    pub lower: Vec<Bound>,
    pub upper: Vec<Bound>,
    /// Constraints over `fixed_order` and params that hold wherever the iname
    /// range is nonempty.
    pub context: Vec<Constraint>,
    /// When projecting lost integer information: the unprojected set and the
    /// fixed inames, used to tighten evaluated ranges.
    pub inexact: Option<(BasicSet, Vec<String>)>,
}

impl IndexBounds {
    /// Exact integer range of the iname at the given values. Where the
    /// symbolic bounds are only the rational shadow, the ends are moved in
    /// until each is attained by an integer point.
    pub fn eval(&self, values: &dyn Fn(&str) -> Option<i64>) -> Option<(i64, i64)> {
        let (mut lo, mut hi) = self.eval_shadow(values)?;
        if let Some((set, fixed)) = &self.inexact {
            let attained = |v: i64| -> Option<bool> {
                let mut cs = set.constraints().to_vec();
                let mut subst: Vec<(String, i64)> = vec![(self.iname.clone(), v)];
                for name in fixed.iter().chain(set.params()) {
                    subst.push((name.clone(), values(name)?));
                }
                for (name, x) in &subst {
                    cs = cs.iter().map(|c| c.substitute(name, &AffineExpr::constant(*x))).collect();
                }
                let rest = set.dims().iter().filter(|d| !subst.iter().any(|(n, _)| n == *d)).cloned().collect();
                let slice = BasicSet::new(rest, Vec::new(), cs).ok()?;
                Some(has_integer_point(&slice))
            };
            while lo <= hi && !attained(lo)? {
                lo += 1;
            }
            while hi >= lo && !attained(hi)? {
                hi -= 1;
            }
        }
        Some((lo, hi))
    }

    /// Range given by the symbolic bounds alone. This is what generated loops
    /// iterate over; it can be wider than [`IndexBounds::eval`].
    pub fn eval_shadow(&self, values: &dyn Fn(&str) -> Option<i64>) -> Option<(i64, i64)> {
        let mut lo = i64::MIN;
        for b in &self.lower {
            lo = lo.max(b.eval_lower(values)?);
        }
        let mut hi = i64::MAX;
        for b in &self.upper {
            hi = hi.min(b.eval_upper(values)?);
        }
        Some((lo, hi))
    }

    /// The simplest lower bound.
    pub fn primary_lower(&self) -> &Bound {
        &self.lower[0]
    }

    /// The simplest upper bound.
    pub fn primary_upper(&self) -> &Bound {
        &self.upper[0]
    }
}

/// Derives bounds for `iname` given that the inames in `fixed_order` are
/// fixed by enclosing loops. Every other dimension is projected out.
/// Redundant bounds (implied by another under the context and assumptions)
/// are dropped; the remaining ones are sorted simplest first.
pub fn bounds_for(s: &BasicSet, iname: &str, fixed_order: &[String], asm: &Assumptions) -> Result<IndexBounds> {
    if !s.has_dim(iname) {
        return Err(Error::set(format!("unknown iname `{iname}`")));
    }
    let keep = |d: &str| d == iname || fixed_order.iter().any(|f| f == d);
    let (proj, exact) = s.project_onto_exact(&keep)?;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let context = proj.project_out(iname)?.constraints().to_vec();
    for c in proj.constraints() {
        let a = c.expr().coeff(iname);
        if a == 0 {
            continue;
        }
        let mut rest = c.expr().clone();
        rest.add_term(iname, -a);
        // a*x + rest (>=|=) 0
        if a > 0 || c.is_equality() {
            let (den, num) = if a > 0 { (a, -rest.clone()) } else { (-a, rest.clone()) };
            lower.push(Bound {
                numerator: num,
                denominator: den,
            });
        }
        if a < 0 || c.is_equality() {
            let (den, num) = if a < 0 { (-a, rest) } else { (a, -rest) };
            upper.push(Bound {
                numerator: num,
                denominator: den,
            });
        }
    }
    if lower.is_empty() {
        return Err(Error::set(format!("iname `{iname}` has no lower bound")));
    }
    if upper.is_empty() {
        return Err(Error::set(format!("iname `{iname}` has no upper bound")));
    }
    let lower = prune(lower, &context, asm, false);
    let upper = prune(upper, &context, asm, true);
    Ok(IndexBounds {
        iname: iname.to_string(),
        lower,
        upper,
        context,
        inexact: (!exact).then(|| (s.clone(), fixed_order.to_vec())),
    })
}

/// Drops bounds dominated by another one under `context`.
fn prune(mut bounds: Vec<Bound>, context: &[Constraint], asm: &Assumptions, upper: bool) -> Vec<Bound> {
    bounds.sort_by(|a, b| {
        (a.vars(), a.denominator, a.numerator.to_string()).cmp(&(b.vars(), b.denominator, b.numerator.to_string()))
    });
    bounds.dedup();
    // b1 dominates b2 (upper): n1/d1 <= n2/d2  <=>  d1*n2 - d2*n1 >= 0
    let dominates = |b1: &Bound, b2: &Bound| {
        let diff = b2.numerator.scale(b1.denominator) - b1.numerator.scale(b2.denominator);
        let c = if upper {
            Constraint::ge_zero(diff)
        } else {
            Constraint::ge_zero(-diff)
        };
        asm.implies(context, &c)
    };
    let mut keep = vec![true; bounds.len()];
    for i in (0..bounds.len()).rev() {
        let dominated = (0..bounds.len()).any(|j| j != i && keep[j] && dominates(&bounds[j], &bounds[i]));
        if dominated {
            keep[i] = false;
        }
    }
    bounds.into_iter().zip(keep).filter_map(|(b, k)| k.then_some(b)).collect()
}

/// Lexicographic enumeration of all integer points under `param_values`.
pub fn enumerate_points(s: &BasicSet, param_values: &BTreeMap<String, i64>) -> Result<Vec<Vec<i64>>> {
    if let Some(p) = s.params().iter().find(|p| !param_values.contains_key(*p)) {
        return Err(Error::set(format!("parameter `{p}` is unbound")));
    }
    let fixed = s.fix_params(param_values)?;
    if fixed.is_empty() {
        return Ok(Vec::new());
    }
    let none = Assumptions::new();
    let mut levels = Vec::new();
    for (k, d) in fixed.dims().iter().enumerate() {
        levels.push(bounds_for(&fixed, d, &fixed.dims()[..k], &none)?);
    }
    let mut out = Vec::new();
    let mut point: BTreeMap<String, i64> = BTreeMap::new();
    walk(&fixed, &levels, 0, &mut point, &mut out)?;
    Ok(out)
}

/// Whether a parameter-free set has an integer point.
fn has_integer_point(s: &BasicSet) -> bool {
    if s.is_empty() {
        return false;
    }
    let none = Assumptions::new();
    let levels: Option<Vec<IndexBounds>> = s
        .dims()
        .iter()
        .enumerate()
        .map(|(k, d)| bounds_for(s, d, &s.dims()[..k], &none).ok())
        .collect();
    let Some(levels) = levels else { return false };
    let mut point = BTreeMap::new();
    search(s, &levels, 0, &mut point)
}

fn search(s: &BasicSet, levels: &[IndexBounds], depth: usize, point: &mut BTreeMap<String, i64>) -> bool {
    if depth == levels.len() {
        return s.contains(&|v| point.get(v).copied()).unwrap_or(false);
    }
    let lv = &levels[depth];
    let Some((lo, hi)) = lv.eval_shadow(&|v| point.get(v).copied()) else { return false };
    for v in lo..=hi {
        point.insert(lv.iname.clone(), v);
        if search(s, levels, depth + 1, point) {
            return true;
        }
    }
    point.remove(&lv.iname);
    false
}

fn walk(
    s: &BasicSet,
    levels: &[IndexBounds],
    depth: usize,
    point: &mut BTreeMap<String, i64>,
    out: &mut Vec<Vec<i64>>,
) -> Result<()> {
    if depth == levels.len() {
        if s.contains(&|v| point.get(v).copied())? {
            out.push(s.dims().iter().map(|d| point[d]).collect());
        }
        return Ok(());
    }
    let lv = &levels[depth];
    let (lo, hi) = lv
        .eval_shadow(&|v| point.get(v).copied())
        .ok_or_else(|| Error::set(format!("cannot evaluate bounds of `{}`", lv.iname)))?;
    for v in lo..=hi {
        point.insert(lv.iname.clone(), v);
        walk(s, levels, depth + 1, point, out)?;
    }
    point.remove(&lv.iname);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyset::parse_set;

    fn split16() -> BasicSet {
        parse_set("{[i]: 0<=i<n}").unwrap().split_dim("i", 16, "i_outer", "i_inner").unwrap()
    }

    #[test]
    fn simple_bounds() {
        let s = parse_set("{[i]: 0<=i<n}").unwrap();
        let b = bounds_for(&s, "i", &[], &Assumptions::new()).unwrap();
        assert_eq!(b.lower, vec![Bound::exact(AffineExpr::zero())]);
        assert_eq!(b.upper, vec![Bound::exact(AffineExpr::var("n") + (-1))]);
    }

    #[test]
    fn outer_of_split_uses_floor() {
        let b = bounds_for(&split16(), "i_outer", &[], &Assumptions::new()).unwrap();
        assert_eq!(b.upper.len(), 1);
        let (q, rest) = b.upper[0].split_floor();
        assert_eq!((q, rest.to_string(), b.upper[0].denominator), (-1, "15 + n".to_string(), 16));
    }

    #[test]
    fn inner_of_split_with_divisibility() {
        let mut asm = Assumptions::new();
        asm.add_divisibility(AffineExpr::var("n"), 16).unwrap();
        let b = bounds_for(&split16(), "i_inner", &["i_outer".to_string()], &asm).unwrap();
        assert_eq!(b.lower, vec![Bound::exact(AffineExpr::zero())]);
        assert_eq!(b.upper, vec![Bound::exact(AffineExpr::constant(15))]);
        let without = bounds_for(&split16(), "i_inner", &["i_outer".to_string()], &Assumptions::new()).unwrap();
        assert_eq!(without.upper.len(), 2);
    }

    #[test]
    fn unbounded_is_an_error() {
        let s = parse_set("{[i]: 0<=i}").unwrap();
        let err = bounds_for(&s, "i", &[], &Assumptions::new()).unwrap_err();
        assert!(err.to_string().contains("`i`"));
        assert!(enumerate_points(&s, &BTreeMap::new()).is_err());
    }

    #[test]
    fn enumerate_small() {
        let s = parse_set("{[i]: 0<=i<n}").unwrap();
        let p = [("n".to_string(), 3)].into_iter().collect();
        assert_eq!(enumerate_points(&s, &p).unwrap(), vec![vec![0], vec![1], vec![2]]);
        let e = parse_set("{[i]: 0<=i<0}").unwrap();
        assert!(enumerate_points(&e, &BTreeMap::new()).unwrap().is_empty());
    }

    #[test]
    fn parity_gap_is_closed_on_evaluation() {
        // 2*y must land in [2 - x, x - 8]; x = 5 leaves only -3
        let s = parse_set("{[x, y]: 0 <= x <= 8 and -5 <= y <= 5 and x - 2*y - 8 >= 0 and x + 2*y - 2 >= 0}").unwrap();
        let b = bounds_for(&s, "x", &[], &Assumptions::new()).unwrap();
        assert!(b.inexact.is_some());
        assert_eq!(b.eval_shadow(&|_| None), Some((5, 8)));
        assert_eq!(b.eval(&|_| None), Some((6, 8)));
        let unit = bounds_for(&split16(), "i_inner", &["i_outer".to_string()], &Assumptions::new()).unwrap();
        assert!(unit.inexact.is_none());
    }
}
