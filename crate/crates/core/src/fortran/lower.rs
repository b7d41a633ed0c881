use std::collections::{BTreeMap, BTreeSet};

use super::{FortranUnit, Stmt};
use crate::error::{Error, Result, Span};
use crate::expr::{is_intrinsic, BinOp, Expr};
use crate::kernel::{column_major_strides, fresh_name_in, ArgDecl, Instruction, Kernel, Predicate, TemporaryDecl};
use crate::polyset::{AffineExpr, BasicSet, Constraint};
use crate::types::DType;

/// Double-precision spellings of intrinsics.
const ALIASES: &[(&str, &str)] = &[
    ("dsqrt", "sqrt"),
    ("dsin", "sin"),
    ("dcos", "cos"),
    ("dtan", "tan"),
    ("dexp", "exp"),
    ("dlog", "log"),
    ("alog", "log"),
    ("dabs", "abs"),
    ("amin1", "min"),
    ("amax1", "max"),
    ("dmin1", "min"),
    ("dmax1", "max"),
];

struct Lowerer<'a> {
    unit: &'a FortranUnit,
    k: Kernel,
    used: BTreeSet<String>,
    /// (Fortran variable, iname, lower bound) of the enclosing loops
    scope: Vec<(String, String, AffineExpr)>,
    loop_vars: BTreeSet<String>,
    preds: Vec<Predicate>,
    conds: usize,
    last: Option<String>,
    written: BTreeSet<String>,
}

fn implicit_type(name: &str) -> DType {
    if name.starts_with(|c: char| ('i'..='n').contains(&c)) {
        DType::I32
    } else {
        DType::F32
    }
}

fn collect_loop_vars(body: &[Stmt], out: &mut BTreeSet<String>) {
    for s in body {
        match s {
            Stmt::Do { var, body, .. } => {
                out.insert(var.clone());
                collect_loop_vars(body, out);
            }
            Stmt::If {
                then_body, else_body, ..
            } => {
                collect_loop_vars(then_body, out);
                collect_loop_vars(else_body, out);
            }
            Stmt::Assign { .. } => {}
        }
    }
}

impl Lowerer<'_> {
    fn dtype_of(&self, name: &str) -> DType {
        self.unit.decls.get(name).map_or_else(|| implicit_type(name), |d| d.dtype)
    }

    fn is_array(&self, name: &str) -> bool {
        self.unit.decls.get(name).is_some_and(|d| !d.dims.is_empty())
    }

    fn translate(&self, e: &Expr, span: Span) -> Result<Expr> {
        Ok(match e {
            Expr::Var(v) => {
                if let Some((_, iname, lo)) = self.scope.iter().rev().find(|(f, _, _)| f == v) {
                    Expr::from_affine(&(AffineExpr::var(iname) + lo.clone()))
                } else if self.loop_vars.contains(v) {
                    return Err(Error::fortran(format!("loop variable `{v}` used outside its loop"), span));
                } else if self.is_array(v) {
                    return Err(Error::Restricted {
                        construct: "array expression".into(),
                        msg: format!("whole-array use of `{v}` is not supported"),
                        span,
                    });
                } else {
                    e.clone()
                }
            }
            Expr::Call(name, args) => {
                let args = args.iter().map(|a| self.translate(a, span)).collect::<Result<Vec<_>>>()?;
                if let Some(decl) = self.unit.decls.get(name).filter(|d| !d.dims.is_empty()) {
                    if decl.dims.len() != args.len() {
                        return Err(Error::fortran(
                            format!("`{name}` has rank {}, subscripted with {}", decl.dims.len(), args.len()),
                            span,
                        ));
                    }
                    let idx = args
                        .into_iter()
                        .zip(&decl.dims)
                        .map(|(a, (lo, _))| match (a.to_affine(), lo.to_affine()) {
                            (Some(a), Some(lo)) => Expr::from_affine(&(a - lo)),
                            (_, _) => Expr::binary(BinOp::Sub, a, lo.clone()),
                        })
                        .collect();
                    Expr::Subscript(name.clone(), idx)
                } else {
                    let f = ALIASES.iter().find(|(a, _)| a == name).map_or(name.as_str(), |(_, f)| f);
                    if !is_intrinsic(f) {
                        return Err(Error::fortran(format!("unknown function or undeclared array `{name}`"), span));
                    }
                    Expr::Call(f.to_string(), args)
                }
            }
            Expr::Binary(op, a, b) => Expr::binary(*op, self.translate(a, span)?, self.translate(b, span)?),
            Expr::Compare(op, a, b) => {
                Expr::Compare(*op, Box::new(self.translate(a, span)?), Box::new(self.translate(b, span)?))
            }
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(self.translate(a, span)?)),
            Expr::Int(_) | Expr::Float(_) => e.clone(),
            Expr::Subscript(..) | Expr::Rule(_) | Expr::Reduce(..) => {
                return Err(Error::fortran(format!("unexpected expression `{e}`"), span));
            }
        })
    }

    fn affine(&self, e: &Expr, span: Span, what: &str) -> Result<AffineExpr> {
        let t = self.translate(e, span)?;
        t.to_affine()
            .ok_or_else(|| Error::fortran(format!("{what} `{e}` is not affine"), span))
    }

    fn emit(&mut self, lhs: Expr, rhs: Expr, tags: &[String]) {
        let id = format!("insn_{}", self.k.instructions.len());
        let mut insn = Instruction::new(&id, lhs, rhs);
        insn.within_inames = self.scope.iter().map(|(_, i, _)| i.clone()).collect();
        insn.depends_on.extend(self.last.iter().cloned());
        insn.predicates = self.preds.iter().cloned().collect();
        insn.tags = tags.iter().cloned().collect();
        self.written.insert(insn.assignee().to_string());
        self.k.instructions.push(insn);
        self.last = Some(id);
    }

    fn declare_temp(&mut self, name: &str, dtype: DType) {
        if !self.k.temporaries.contains_key(name) {
            self.k.temporaries.insert(name.to_string(), TemporaryDecl::scalar(name, dtype));
        }
    }

    fn body(&mut self, stmts: &[Stmt]) -> Result<()> {
        for s in stmts {
            match s {
                Stmt::Do {
                    var, lo, hi, body, span,
                } => {
                    if !self.unit.decls.contains_key(var) {
                        log::warn!("line {}: loop variable `{var}` is implicitly typed integer", span.line);
                    }
                    let lo_a = self.affine(lo, *span, "loop bound")?;
                    let hi_a = self.affine(hi, *span, "loop bound")?;
                    let iname = fresh_name_in(&self.used, var);
                    self.used.insert(iname.clone());
                    let extent = hi_a - lo_a.clone();
                    let params: Vec<String> = extent.vars().map(String::from).collect();
                    let cs = vec![
                        Constraint::ge_zero(AffineExpr::var(&iname)),
                        Constraint::le(AffineExpr::var(&iname), extent),
                    ];
                    let set = BasicSet::new(vec![iname.clone()], params, cs)?;
                    let parent = self.scope.last().and_then(|(_, i, _)| self.k.domains.node_of(i));
                    self.k.domains.add_node(set, parent)?;
                    self.scope.push((var.clone(), iname, lo_a));
                    self.body(body)?;
                    self.scope.pop();
                }
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                    span,
                } => {
                    let flag = fresh_name_in(&self.used, &format!("loopy_cond{}", self.conds));
                    self.conds += 1;
                    self.used.insert(flag.clone());
                    self.declare_temp(&flag, DType::I32);
                    let c = self.translate(cond, *span)?;
                    self.emit(Expr::var(&flag), c, &[]);
                    self.preds.push(Predicate {
                        flag: flag.clone(),
                        negated: false,
                    });
                    self.body(then_body)?;
                    self.preds.pop();
                    if !else_body.is_empty() {
                        self.preds.push(Predicate { flag, negated: true });
                        self.body(else_body)?;
                        self.preds.pop();
                    }
                }
                Stmt::Assign { lhs, rhs, tags, span } => {
                    let rhs = self.translate(rhs, *span)?;
                    let lhs = match lhs {
                        Expr::Var(v) => {
                            if self.loop_vars.contains(v) {
                                return Err(Error::fortran(format!("assignment to loop variable `{v}`"), *span));
                            }
                            if self.is_array(v) {
                                return Err(Error::Restricted {
                                    construct: "array assignment".into(),
                                    msg: format!("array-level assignment to `{v}` is not supported"),
                                    span: *span,
                                });
                            }
                            if self.unit.args.contains(v) {
                                return Err(Error::fortran(
                                    format!("assignment to scalar argument `{v}` is not supported"),
                                    *span,
                                ));
                            }
                            self.declare_temp(v, self.dtype_of(v));
                            lhs.clone()
                        }
                        Expr::Call(name, _) if self.is_array(name) => self.translate(lhs, *span)?,
                        _ => return Err(Error::fortran(format!("cannot assign to `{lhs}`"), *span)),
                    };
                    self.emit(lhs, rhs, tags);
                }
            }
        }
        Ok(())
    }

    fn shape(&self, name: &str) -> Result<Vec<AffineExpr>> {
        let decl = &self.unit.decls[name];
        decl.dims
            .iter()
            .map(|(lo, hi)| {
                let lo = self.affine(lo, decl.span, "array bound")?;
                let hi = self.affine(hi, decl.span, "array bound")?;
                Ok(hi - lo + 1)
            })
            .collect()
    }
}

/// Translates the statement tree into a kernel: one domain node per `do`,
/// `loopy_condN` flags for conditionals, program-order dependencies.
pub fn lower_to_kernel(u: &FortranUnit) -> Result<Kernel> {
    let mut loop_vars = BTreeSet::new();
    collect_loop_vars(&u.body, &mut loop_vars);
    let mut used: BTreeSet<String> = u.args.iter().cloned().collect();
    used.extend(u.decls.keys().filter(|d| !loop_vars.contains(*d)).cloned());
    let mut l = Lowerer {
        unit: u,
        k: Kernel::empty(&u.name),
        used,
        scope: Vec::new(),
        loop_vars,
        preds: Vec::new(),
        conds: 0,
        last: None,
        written: BTreeSet::new(),
    };
    for (name, decl) in &u.decls {
        if !decl.dims.is_empty() && !u.args.contains(name) {
            let shape = l.shape(name)?;
            let mut t = TemporaryDecl::scalar(name, decl.dtype);
            t.shape = shape;
            l.k.temporaries.insert(name.clone(), t);
        }
    }
    l.body(&u.body)?;

    let mut args = Vec::new();
    for name in &u.args {
        if l.is_array(name) {
            let shape = l.shape(name)?;
            let strides = column_major_strides(&shape)?;
            let mut a = ArgDecl::array(name, l.dtype_of(name), shape, strides);
            a.is_output = l.written.contains(name);
            args.push(a);
        } else {
            if l.loop_vars.contains(name) {
                let span = u.decls.get(name).map_or_else(Span::default, |d| d.span);
                return Err(Error::fortran(format!("argument `{name}` is used as a loop variable"), span));
            }
            args.push(ArgDecl::scalar(name, l.dtype_of(name)));
        }
    }
    let mut k = l.k;
    k.args = args;
    let arg_names: BTreeMap<&str, DType> = k.args.iter().map(|a| (a.name.as_str(), a.dtype)).collect();
    for p in k.params() {
        match arg_names.get(p.as_str()) {
            Some(DType::I32) => {}
            Some(_) => return Err(Error::kernel(format!("loop or array bound `{p}` is not an integer argument"))),
            None => return Err(Error::kernel(format!("loop or array bound `{p}` is not a subroutine argument"))),
        }
    }
    k.validate()?;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fortran::parse_fortran;

    const COND: &str = "
      subroutine cond(inp, out, n)
        implicit none
        real*8 inp(n), out(n), a, b
        integer n
        do i = 1, n
          a = inp(i)
          if (a.ge.3) then
              b = 2*a
              do j = 1,3
                  b = 3 * b
              end do
              out(i) = 5*b
          else
              out(i) = 4*a
          endif
        end do
      end
    ";

    #[test]
    fn fill_lowering() {
        let src = "subroutine fill(out, a, n)\n implicit none\n real*8 a, out(n)\n integer n\n do i = 1, n\n out(i) = a\n end do\nend\n";
        let k = lower_to_kernel(&parse_fortran(src).unwrap()).unwrap();
        assert_eq!(k.domains.nodes()[0].to_string(), "[n] -> { [i] : i <= -1 + n and 0 <= i }");
        assert_eq!(k.instructions.len(), 1);
        assert_eq!(k.instructions[0].lhs.to_string(), "out[i]");
        assert_eq!(k.instructions[0].rhs.to_string(), "a");
        assert!(k.arg("out").unwrap().is_output);
        assert_eq!(k.arg("n").unwrap().dtype, DType::I32);
    }

    #[test]
    fn conditional_lowering() {
        let k = lower_to_kernel(&parse_fortran(COND).unwrap()).unwrap();
        let text: Vec<String> = k.instructions.iter().map(|i| format!("{} = {}", i.lhs, i.rhs)).collect();
        assert_eq!(
            text,
            ["a = inp[i]", "loopy_cond0 = a >= 3", "b = 2*a", "b = 3*b", "out[i] = 5*b", "out[i] = 4*a"]
        );
        assert!(k.instructions[5].predicates.contains(&Predicate {
            flag: "loopy_cond0".into(),
            negated: true
        }));
        assert_eq!(k.instructions[3].within_inames.len(), 2);
        assert_eq!(k.instructions[4].depends_on, ["insn_3".to_string()].into());
        assert_eq!(k.temporaries["a"].dtype, DType::F64);
    }

    #[test]
    fn loop_variable_collision_renamed() {
        let src = "subroutine t(a, inp, out, n)\n integer n\n real a(n), inp(n), out(n)\n do i = 1, n\n a(i) = 6*inp(i)\n enddo\n do i = 1, n\n out(i) = 5*a(i)\n end do\nend\n";
        let k = lower_to_kernel(&parse_fortran(src).unwrap()).unwrap();
        assert_eq!(k.inames(), ["i", "i_0"]);
        assert_eq!(k.instructions[1].rhs.to_string(), "5*a[i_0]");
    }

    #[test]
    fn column_major_shift() {
        let src = "subroutine s(c, m, n)\n integer m, n\n real*8 c(m, n)\n do j = 1, n\n do i = 2, m\n c(i, j) = c(i - 1, j)\n end do\n end do\nend\n";
        let k = lower_to_kernel(&parse_fortran(src).unwrap()).unwrap();
        assert_eq!(k.instructions[0].lhs.to_string(), "c[1 + i, j]");
        assert_eq!(k.instructions[0].rhs.to_string(), "c[i, j]");
        assert_eq!(k.arg("c").unwrap().strides, vec![AffineExpr::constant(1), AffineExpr::var("m")]);
    }
}
