use std::collections::{BTreeMap, BTreeSet};

use super::schedule::{residual_predicates, SchedNode};
use super::typed::{typed, typed_assignment, TExpr};
use super::{loop_bounds, prepare};
use crate::error::{Error, Result};
use crate::expr::{BinOp, CmpOp, Expr, RedOp};
use crate::kernel::{AddressSpace, InameTag, Kernel, Predicate};
use crate::polyset::{bounds_for, AffineExpr, Bound, Constraint, IndexBounds};
use crate::types::DType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    C,
    OpenCl,
}

impl Target {
    pub fn parse(s: &str) -> Option<Target> {
        match s {
            "c" => Some(Target::C),
            "opencl" | "cl" => Some(Target::OpenCl),
            _ => None,
        }
    }
}

/// One C statement; headed blocks drop their braces around a single statement.
#[derive(Clone, Debug)]
enum CStmt {
    Line(String),
    Comment(String),
    Block { header: Option<String>, body: Vec<CStmt> },
}

fn print(items: &[CStmt], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for it in items {
        match it {
            CStmt::Line(s) => out.push_str(&format!("{pad}{s}\n")),
            CStmt::Comment(s) => out.push_str(&format!("{pad}/* {s} */\n")),
            CStmt::Block { header, body } => {
                if let Some(h) = header {
                    out.push_str(&format!("{pad}{h}\n"));
                    if body.len() == 1 && !matches!(body[0], CStmt::Comment(_)) {
                        print(body, depth + 1, out);
                        continue;
                    }
                }
                out.push_str(&format!("{pad}{{\n"));
                print(body, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

/// Launch geometry of one parallel iname.
struct Launch {
    /// Constraints that hold for every launched work item.
    box_constraints: Vec<Constraint>,
    definition: String,
}

struct Emitter<'a> {
    k: &'a Kernel,
    target: Target,
    stack: Vec<String>,
    guaranteed: BTreeSet<Predicate>,
    launch: BTreeMap<String, Launch>,
    local_sizes: [i64; 3],
    uses_floor_div: bool,
    pending_barrier: BTreeSet<String>,
    acc_names: BTreeSet<String>,
}

// C operator precedence levels used for parenthesization.
const P_EQ: u8 = 5;
const P_REL: u8 = 6;
const P_ADD: u8 = 7;
const P_MUL: u8 = 8;
const P_UNARY: u8 = 9;
const P_ATOM: u8 = 10;

fn paren(s: (String, u8), min: u8) -> String {
    if s.1 < min {
        format!("({})", s.0)
    } else {
        s.0
    }
}

pub fn float_literal(v: f64, d: DType) -> String {
    if d == DType::F32 {
        let x = v as f32;
        if x.is_finite() {
            format!("{x:?}f")
        } else if x.is_nan() {
            "NAN".into()
        } else if x > 0.0 {
            "INFINITY".into()
        } else {
            "-INFINITY".into()
        }
    } else if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "NAN".into()
    } else if v > 0.0 {
        "INFINITY".into()
    } else {
        "-INFINITY".into()
    }
}

/// Integer-affine view of a typed index expression.
fn texpr_affine(e: &TExpr) -> Option<AffineExpr> {
    match e {
        TExpr::Int(v) => Some(AffineExpr::constant(*v)),
        TExpr::Iname(n) | TExpr::Scalar(n, DType::I32) => Some(AffineExpr::var(n)),
        TExpr::Neg(DType::I32, a) => Some(-texpr_affine(a)?),
        TExpr::Bin(op, DType::I32, a, b) => {
            let (a, b) = (texpr_affine(a)?, texpr_affine(b)?);
            match op {
                BinOp::Add => Some(a + b),
                BinOp::Sub => Some(a - b),
                BinOp::Mul => match (a.as_constant(), b.as_constant()) {
                    (Some(c), _) => Some(b.scale(c)),
                    (_, Some(c)) => Some(a.scale(c)),
                    _ => None,
                },
                _ => None,
            }
        }
        _ => None,
    }
}

impl Emitter<'_> {
    fn affine(&self, e: &AffineExpr) -> String {
        self.int_expr(&Expr::from_affine(e)).0
    }

    /// Renders an integer expression over inames and parameters.
    fn int_expr(&self, e: &Expr) -> (String, u8) {
        match e {
            Expr::Int(v) if *v < 0 => (v.to_string(), P_UNARY),
            Expr::Int(v) => (v.to_string(), P_ATOM),
            Expr::Var(n) => (n.clone(), P_ATOM),
            Expr::Unary(_, a) => (format!("-{}", paren(self.int_expr(a), P_UNARY)), P_UNARY),
            Expr::Binary(op, a, b) => {
                let p = if matches!(op, BinOp::Mul | BinOp::Div) { P_MUL } else { P_ADD };
                let l = paren(self.int_expr(a), p);
                let r = paren(self.int_expr(b), p + 1);
                (format!("{l} {} {r}", op.symbol()), p)
            }
            other => (other.to_string(), P_ATOM),
        }
    }

    fn floor_div(&mut self, num: &AffineExpr, den: i64) -> String {
        self.uses_floor_div = true;
        format!("int_floor_div_pos_b({}, {den})", self.affine(num))
    }

    fn bound(&mut self, b: &Bound, upper: bool) -> String {
        if b.denominator == 1 {
            return self.affine(&b.numerator);
        }
        let (q, rest) = if upper { b.split_floor() } else { b.split_ceil() };
        let call = self.floor_div(&rest, b.denominator);
        if q == 0 {
            call
        } else {
            format!("{q} + {call}")
        }
    }

    fn combined(&mut self, bs: &[Bound], upper: bool) -> String {
        let parts: Vec<String> = bs.iter().map(|b| self.bound(b, upper)).collect();
        let cmp = if upper { "<" } else { ">" };
        parts
            .into_iter()
            .reduce(|a, b| format!("({a} {cmp} {b} ? {a} : {b})"))
            .expect("bounds are nonempty")
    }

    fn constraint(&self, c: &Constraint) -> String {
        let op = if c.is_equality() { "==" } else { ">=" };
        format!("{} {op} 0", self.affine(c.expr()))
    }

    // ---- expressions

    fn load_index(&self, name: &str, idx: &[TExpr]) -> Result<String> {
        if let Some(t) = self.k.temporaries.get(name) {
            if idx.len() != t.shape.len() {
                return Err(Error::codegen(format!("`{name}` takes {} subscripts", t.shape.len())));
            }
            let mut s = name.to_string();
            for ix in idx {
                s.push_str(&format!("[{}]", self.expr(ix)?.0));
            }
            return Ok(s);
        }
        let arg = self
            .k
            .arg(name)
            .ok_or_else(|| Error::codegen(format!("unknown array `{name}`")))?;
        if idx.len() != arg.strides.len() {
            return Err(Error::codegen(format!("`{name}` takes {} subscripts", arg.strides.len())));
        }
        // affine when every product has a constant factor
        let mut flat = Some(AffineExpr::zero());
        for (ix, st) in idx.iter().zip(&arg.strides) {
            flat = match (flat, texpr_affine(ix)) {
                (Some(acc), Some(a)) => match (a.as_constant(), st.as_constant()) {
                    (_, Some(c)) => Some(acc + a.scale(c)),
                    (Some(c), _) => Some(acc + st.scale(c)),
                    _ => None,
                },
                _ => None,
            };
        }
        if let Some(f) = flat {
            return Ok(format!("{name}[{}]", self.affine(&f)));
        }
        let mut terms = Vec::new();
        for (ix, st) in idx.iter().zip(&arg.strides) {
            let i = self.expr(ix)?;
            terms.push(match st.as_constant() {
                Some(1) => paren(i, P_ADD),
                _ => format!("{} * {}", paren(i, P_MUL), paren(self.int_expr(&Expr::from_affine(st)), P_UNARY)),
            });
        }
        Ok(format!("{name}[{}]", terms.join(" + ")))
    }

    fn expr(&self, e: &TExpr) -> Result<(String, u8)> {
        Ok(match e {
            TExpr::Int(v) if *v < 0 => (v.to_string(), P_UNARY),
            TExpr::Int(v) => (v.to_string(), P_ATOM),
            TExpr::Float(v, d) => {
                let s = float_literal(*v, *d);
                let p = if s.starts_with('-') { P_UNARY } else { P_ATOM };
                (s, p)
            }
            TExpr::Iname(n) | TExpr::Scalar(n, _) => (n.clone(), P_ATOM),
            TExpr::Load(n, idx, _) => (self.load_index(n, idx)?, P_ATOM),
            TExpr::Cast(d, a) => (format!("({}) {}", d.c_name(), paren(self.expr(a)?, P_UNARY)), P_UNARY),
            TExpr::Bin(BinOp::Sub, d, a, b) if d.is_float() => {
                let l = paren(self.expr(a)?, P_ADD);
                let r = paren(self.expr(b)?, P_UNARY);
                (format!("{l} + {} * {r}", float_literal(-1.0, *d)), P_ADD)
            }
            TExpr::Bin(BinOp::Pow, d, a, b) => {
                let (a, b) = (self.expr(a)?.0, self.expr(b)?.0);
                match d {
                    DType::F32 => (format!("powf({a}, {b})"), P_ATOM),
                    DType::F64 => (format!("pow({a}, {b})"), P_ATOM),
                    DType::I32 => (format!("(int) pow((double) ({a}), (double) ({b}))"), P_UNARY),
                }
            }
            TExpr::Bin(op, _, a, b) => {
                let p = if matches!(op, BinOp::Mul | BinOp::Div) { P_MUL } else { P_ADD };
                let l = paren(self.expr(a)?, p);
                let r = paren(self.expr(b)?, p + 1);
                (format!("{l} {} {r}", op.symbol()), p)
            }
            TExpr::Cmp(op, _, a, b) => {
                let p = if matches!(op, CmpOp::Eq | CmpOp::Ne) { P_EQ } else { P_REL };
                let l = paren(self.expr(a)?, p + 1);
                let r = paren(self.expr(b)?, p + 1);
                (format!("{l} {} {r}", op.symbol()), p)
            }
            TExpr::Neg(_, a) => {
                let inner = self.expr(a)?;
                let s = if inner.0.starts_with('-') || inner.1 < P_UNARY {
                    format!("({})", inner.0)
                } else {
                    inner.0
                };
                (format!("-{s}"), P_UNARY)
            }
            TExpr::Not(a) => (format!("!{}", paren(self.expr(a)?, P_UNARY)), P_UNARY),
            TExpr::Call(name, d, args) => self.call(name, *d, args)?,
            TExpr::Reduce(..) => return Err(Error::codegen("reduction was not hoisted")),
        })
    }

    fn call(&self, name: &str, d: DType, args: &[TExpr]) -> Result<(String, u8)> {
        let rendered = args.iter().map(|a| Ok(self.expr(a)?.0)).collect::<Result<Vec<_>>>()?;
        let f32 = d == DType::F32;
        let func = match (name, d) {
            ("min" | "max", DType::I32) => {
                if rendered.len() != 2 {
                    return Err(Error::codegen(format!("`{name}` takes two arguments")));
                }
                let cmp = if name == "min" { "<" } else { ">" };
                let (a, b) = (&rendered[0], &rendered[1]);
                return Ok((format!("(({a}) {cmp} ({b}) ? ({a}) : ({b}))"), P_ATOM));
            }
            ("abs" | "fabs", DType::I32) => "abs".to_string(),
            ("abs" | "fabs", _) => if f32 { "fabsf" } else { "fabs" }.to_string(),
            ("min", _) => if f32 { "fminf" } else { "fmin" }.to_string(),
            ("max", _) => if f32 { "fmaxf" } else { "fmax" }.to_string(),
            (n, _) if f32 && self.target == Target::C => format!("{n}f"),
            (n, _) => n.to_string(),
        };
        Ok((format!("{func}({})", rendered.join(", ")), P_ATOM))
    }

    /// Replaces reductions by accumulators, appending their loops to `out`.
    fn hoist(&mut self, e: &TExpr, within: &mut Vec<String>, out: &mut Vec<CStmt>) -> Result<TExpr> {
        Ok(match e {
            TExpr::Reduce(op, j, d, body) => {
                let acc = {
                    let mut used = self.k.used_names();
                    used.extend(self.acc_names.iter().cloned());
                    crate::kernel::fresh_name_in(&used, &format!("acc_{j}"))
                };
                self.acc_names.insert(acc.clone());
                let set = self.k.domains.domain_of(&within.iter().cloned().chain([j.clone()]).collect())?;
                let b = bounds_for(&set, j, within, &self.k.assumptions)?;
                let lo = self.combined(&b.lower, false);
                let hi = self.combined(&b.upper, true);
                let ty = d.c_name();
                let init = |v: f64| {
                    if d.is_float() {
                        float_literal(v, *d)
                    } else {
                        (v as i64).to_string()
                    }
                };
                out.push(CStmt::Line(match op {
                    RedOp::Sum => format!("{ty} {acc} = {};", init(0.0)),
                    RedOp::Product => format!("{ty} {acc} = {};", init(1.0)),
                    RedOp::Min | RedOp::Max => format!("{ty} {acc};"),
                }));
                within.push(j.clone());
                let mut inner = Vec::new();
                let body = self.hoist(body, within, &mut inner)?;
                within.pop();
                let accx = TExpr::Scalar(acc.clone(), *d);
                let update = match op {
                    RedOp::Sum => TExpr::Bin(BinOp::Add, *d, Box::new(accx), Box::new(body)),
                    RedOp::Product => TExpr::Bin(BinOp::Mul, *d, Box::new(accx), Box::new(body)),
                    RedOp::Min | RedOp::Max => {
                        let f = if *op == RedOp::Min { "min" } else { "max" };
                        let combined = self.call(f, *d, &[accx, body.clone()])?.0;
                        let first = self.expr(&body)?.0;
                        inner.push(CStmt::Line(format!("{acc} = {j} == {lo} ? {first} : {combined};")));
                        out.push(CStmt::Block {
                            header: Some(format!("for (int {j} = {lo}; {j} <= {hi}; ++{j})")),
                            body: inner,
                        });
                        return Ok(TExpr::Scalar(acc, *d));
                    }
                };
                inner.push(CStmt::Line(format!("{acc} = {};", self.expr(&update)?.0)));
                out.push(CStmt::Block {
                    header: Some(format!("for (int {j} = {lo}; {j} <= {hi}; ++{j})")),
                    body: inner,
                });
                TExpr::Scalar(acc, *d)
            }
            TExpr::Load(n, idx, d) => TExpr::Load(
                n.clone(),
                idx.iter().map(|x| self.hoist(x, within, out)).collect::<Result<_>>()?,
                *d,
            ),
            TExpr::Cast(d, a) => TExpr::Cast(*d, Box::new(self.hoist(a, within, out)?)),
            TExpr::Bin(op, d, a, b) => TExpr::Bin(
                *op,
                *d,
                Box::new(self.hoist(a, within, out)?),
                Box::new(self.hoist(b, within, out)?),
            ),
            TExpr::Cmp(op, d, a, b) => TExpr::Cmp(
                *op,
                *d,
                Box::new(self.hoist(a, within, out)?),
                Box::new(self.hoist(b, within, out)?),
            ),
            TExpr::Neg(d, a) => TExpr::Neg(*d, Box::new(self.hoist(a, within, out)?)),
            TExpr::Not(a) => TExpr::Not(Box::new(self.hoist(a, within, out)?)),
            TExpr::Call(n, d, args) => TExpr::Call(
                n.clone(),
                *d,
                args.iter().map(|x| self.hoist(x, within, out)).collect::<Result<_>>()?,
            ),
            other => other.clone(),
        })
    }

    // ---- statements

    fn statement(&mut self, id: &str) -> Result<Vec<CStmt>> {
        let insn = self.k.instruction(id).expect("scheduled instruction exists");
        let target = self
            .k
            .var_dtype(insn.assignee())
            .ok_or_else(|| Error::codegen(format!("unknown assignee `{}`", insn.assignee())))?;
        let lhs = typed(self.k, &insn.lhs)?;
        let rhs = typed_assignment(self.k, &insn.rhs, target)?;
        let mut setup = Vec::new();
        let mut within = self.stack.clone();
        let rhs = self.hoist(&rhs, &mut within, &mut setup)?;
        let lhs = self.hoist(&lhs, &mut within, &mut setup)?;
        let line = CStmt::Line(format!("{} = {};", self.expr(&lhs)?.0, self.expr(&rhs)?.0));
        let mut out = Vec::new();
        if self.target == Target::OpenCl {
            let reads: BTreeSet<String> = crate::kernel::build::instruction_reads(self.k, insn)?;
            let hit: Vec<String> = self.pending_barrier.intersection(&reads).cloned().collect();
            if !hit.is_empty() {
                out.push(CStmt::Comment(format!(
                    "barrier(CLK_LOCAL_MEM_FENCE) needed before reading {}",
                    hit.join(", ")
                )));
                self.pending_barrier.clear();
            }
            let var = insn.assignee();
            if self.k.temporaries.get(var).is_some_and(|t| t.address_space == AddressSpace::Workgroup) {
                self.pending_barrier.insert(var.to_string());
            }
        }
        let stmt = if setup.is_empty() {
            line
        } else {
            setup.push(line);
            CStmt::Block { header: None, body: setup }
        };
        let residual = residual_predicates(self.k, id, &self.guaranteed);
        out.push(if residual.is_empty() {
            stmt
        } else {
            CStmt::Block {
                header: Some(format!("if ({})", render_preds(&residual))),
                body: vec![stmt],
            }
        });
        Ok(out)
    }

    fn nodes(&mut self, nodes: &[SchedNode]) -> Result<Vec<CStmt>> {
        let mut out = Vec::new();
        for n in nodes {
            match n {
                SchedNode::Stmt(id) => out.extend(self.statement(id)?),
                SchedNode::Cond { preds, body } => {
                    let saved = self.guaranteed.clone();
                    self.guaranteed.extend(preds.iter().cloned());
                    let inner = self.nodes(body)?;
                    self.guaranteed = saved;
                    let ps: Vec<Predicate> = preds.iter().cloned().collect();
                    out.push(CStmt::Block {
                        header: Some(format!("if ({})", render_preds(&ps))),
                        body: inner,
                    });
                }
                SchedNode::Loop { iname, body } => out.extend(self.loop_node(iname, body)?),
            }
        }
        Ok(out)
    }

    fn loop_node(&mut self, iname: &str, body: &[SchedNode]) -> Result<Vec<CStmt>> {
        let b = loop_bounds(self.k, &self.stack, iname)?;
        let enclosing = self.k.domains.domain_of(&self.stack.iter().cloned().collect())?;
        let parallel = self.target == Target::OpenCl && self.k.is_parallel(iname);
        // constraints of the iname's own domain node that only restrict outer loops
        let node = self.k.domains.node_of(iname).expect("scheduled inames exist");
        let outer = |v: &str| self.stack.iter().any(|s| s == v) || !self.k.is_iname(v);
        let mut guards: Vec<String> = self.k.domains.nodes()[node]
            .constraints()
            .iter()
            .filter(|c| !c.mentions(iname) && c.expr().vars().all(outer))
            .filter(|c| !self.k.assumptions.implies(enclosing.constraints(), c))
            .map(|c| self.constraint(c))
            .collect();
        self.stack.push(iname.to_string());
        let result = self.loop_body(iname, body, &b, parallel, enclosing.constraints(), &mut guards);
        self.stack.pop();
        let items = result?;
        Ok(if guards.is_empty() {
            items
        } else {
            vec![CStmt::Block {
                header: Some(format!("if ({})", guards.join(" && "))),
                body: items,
            }]
        })
    }

    fn loop_body(
        &mut self,
        iname: &str,
        body: &[SchedNode],
        b: &IndexBounds,
        parallel: bool,
        enclosing: &[Constraint],
        guards: &mut Vec<String>,
    ) -> Result<Vec<CStmt>> {
        if parallel {
            let mut ctx = enclosing.to_vec();
            ctx.extend(self.launch[iname].box_constraints.iter().cloned());
            for lb in &b.lower {
                if !self.k.assumptions.implies(&ctx, &lb.lower_constraint(iname)) {
                    let s = self.bound(lb, false);
                    guards.push(format!("{iname} >= {s}"));
                }
            }
            for ub in &b.upper {
                if !self.k.assumptions.implies(&ctx, &ub.upper_constraint(iname)) {
                    let s = self.bound(ub, true);
                    guards.push(format!("{iname} <= {s}"));
                }
            }
            return self.nodes(body);
        }
        let lo = self.combined(&b.lower, false);
        let hi = self.combined(&b.upper, true);
        if self.k.tag_of(iname) == Some(InameTag::Unroll) {
            let none = |_: &str| None;
            let (Some(l), Some(h)) = (
                b.lower.iter().map(|x| x.eval_lower(&none)).max().flatten(),
                b.upper.iter().map(|x| x.eval_upper(&none)).min().flatten(),
            ) else {
                return Err(Error::codegen(format!("unrolled iname `{iname}` needs a constant extent")));
            };
            let mut out = Vec::new();
            for v in l..=h {
                let mut copy = vec![CStmt::Line(format!("int const {iname} = {v};"))];
                copy.extend(self.nodes(body)?);
                out.push(CStmt::Block { header: None, body: copy });
            }
            return Ok(out);
        }
        let inner = self.nodes(body)?;
        Ok(vec![CStmt::Block {
            header: Some(format!("for (int {iname} = {lo}; {iname} <= {hi}; ++{iname})")),
            body: inner,
        }])
    }

    /// Index definitions and launch boxes of every parallel iname in use.
    fn plan_launch(&mut self, used: &BTreeSet<String>) -> Result<()> {
        let mut ranges: BTreeMap<String, (Bound, Vec<Bound>)> = BTreeMap::new();
        for iname in used.iter().filter(|i| self.k.is_parallel(i)) {
            let set = self.k.domains.domain_of(&[iname.clone()].into())?;
            let b = bounds_for(&set, iname, &[], &self.k.assumptions)?;
            if b.lower.len() != 1 || b.lower[0].denominator != 1 {
                return Err(Error::codegen(format!("parallel iname `{iname}` has no single exact lower bound")));
            }
            ranges.insert(iname.clone(), (b.lower[0].clone(), b.upper.clone()));
        }
        for (iname, (lo, ups)) in &ranges {
            let tag = self.k.tag_of(iname).expect("parallel inames are tagged");
            let (axis, func) = match tag {
                InameTag::Group(a) => (a, "get_group_id"),
                InameTag::Local(a) => (a, "get_local_id"),
                _ => unreachable!(),
            };
            let lo_s = self.affine(&lo.numerator);
            let definition = if lo.numerator.as_constant() == Some(0) {
                format!("int const {iname} = {func}({axis});")
            } else {
                format!("int const {iname} = {lo_s} + {func}({axis});")
            };
            // work items launched along this axis cover every iname sharing it
            let peers: Vec<&String> = ranges.keys().filter(|p| self.k.tag_of(p) == Some(tag)).collect();
            let mut box_constraints = vec![lo.lower_constraint(iname)];
            if let InameTag::Local(_) = tag {
                let size = |p: &String| -> Result<i64> {
                    let (plo, pups) = &ranges[p];
                    let none = |_: &str| None;
                    match (plo.eval_lower(&none), pups.iter().map(|u| u.eval_upper(&none)).min().flatten()) {
                        (Some(l), Some(h)) => Ok(h - l + 1),
                        _ => Err(Error::codegen(format!(
                            "parallel iname `{p}` has a non-constant extent; local sizes must be constant"
                        ))),
                    }
                };
                let mut n = 0;
                for p in &peers {
                    n = n.max(size(p)?);
                }
                self.local_sizes[axis as usize] = self.local_sizes[axis as usize].max(n);
                box_constraints.push(Constraint::le(
                    AffineExpr::var(iname),
                    lo.numerator.clone() + (n - 1),
                ));
            } else if peers.iter().all(|p| ranges[*p].1 == *ups && ranges[*p].0 == *lo) {
                box_constraints.extend(ups.iter().map(|u| u.upper_constraint(iname)));
            }
            self.launch.insert(
                iname.clone(),
                Launch {
                    box_constraints,
                    definition,
                },
            );
        }
        Ok(())
    }
}

fn render_preds(ps: &[Predicate]) -> String {
    ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" && ")
}

fn used_inames(nodes: &[SchedNode], out: &mut BTreeSet<String>) {
    for n in nodes {
        match n {
            SchedNode::Loop { iname, body } => {
                out.insert(iname.clone());
                used_inames(body, out);
            }
            SchedNode::Cond { body, .. } => used_inames(body, out),
            SchedNode::Stmt(_) => {}
        }
    }
}

/// Renders the kernel as a C function or an OpenCL kernel.
pub fn emit(k: &Kernel, target: Target) -> Result<String> {
    let (k, sched) = prepare(k)?;
    let mut em = Emitter {
        k: &k,
        target,
        stack: Vec::new(),
        guaranteed: BTreeSet::new(),
        launch: BTreeMap::new(),
        local_sizes: [1; 3],
        uses_floor_div: false,
        pending_barrier: BTreeSet::new(),
        acc_names: BTreeSet::new(),
    };
    let mut used = BTreeSet::new();
    used_inames(&sched.nodes, &mut used);
    if target == Target::OpenCl {
        em.plan_launch(&used)?;
    }
    let body = em.nodes(&sched.nodes)?;

    let mut decls = Vec::new();
    for t in k.temporaries.values() {
        let mut dims = String::new();
        for s in &t.shape {
            let n = s
                .as_constant()
                .ok_or_else(|| Error::codegen(format!("temporary `{}` has non-constant extent `{s}`", t.name)))?;
            dims.push_str(&format!("[{n}]"));
        }
        let space = if target == Target::OpenCl && t.address_space == AddressSpace::Workgroup {
            "__local "
        } else {
            ""
        };
        decls.push(format!("{space}{} {}{dims};", t.dtype.c_name(), t.name));
    }
    for l in em.launch.values() {
        decls.push(l.definition.clone());
    }

    let global = if target == Target::OpenCl { "__global " } else { "" };
    let mut params = Vec::new();
    for a in &k.args {
        let ty = a.dtype.c_name();
        params.push(if a.is_array() {
            let konst = if a.is_output { "" } else { " const" };
            format!("{global}{ty}{konst} *restrict {}", a.name)
        } else {
            format!("{ty} const {}", a.name)
        });
    }
    for p in k.params() {
        if k.arg(&p).is_none() {
            params.push(format!("int const {p}"));
        }
    }

    let mut out = String::new();
    let uses_f64 = k.args.iter().any(|a| a.dtype == DType::F64)
        || k.temporaries.values().any(|t| t.dtype == DType::F64);
    match target {
        Target::C => out.push_str("#include <math.h>\n\n"),
        Target::OpenCl if uses_f64 => out.push_str("#pragma OPENCL EXTENSION cl_khr_fp64: enable\n\n"),
        Target::OpenCl => {}
    }
    if em.uses_floor_div {
        out.push_str(
            "static inline int int_floor_div_pos_b(int a, int b)\n{\n  return (a - (a < 0 ? b - 1 : 0)) / b;\n}\n\n",
        );
    }
    let head = match target {
        Target::C => format!("void {}", k.name),
        Target::OpenCl => {
            let [x, y, z] = em.local_sizes;
            format!("__kernel void __attribute__ ((reqd_work_group_size({x}, {y}, {z}))) {}", k.name)
        }
    };
    out.push_str(&format!("{head}({})\n{{\n", params.join(", ")));
    for d in &decls {
        out.push_str(&format!("  {d}\n"));
    }
    if !decls.is_empty() {
        out.push('\n');
    }
    print(&body, 1, &mut out);
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fortran::translate;
    use crate::kernel::make_kernel;
    use crate::matching::parse_match;
    use crate::transforms::{assume, extract_subst, precompute, split_iname};

    const COND: &str = "
      subroutine cond(inp, out, n)
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

    fn body(src: &str) -> String {
        // drop the preamble and signature
        let sig = src.find("\nvoid ").or_else(|| src.find("__kernel")).unwrap();
        let start = sig + src[sig..].find("\n{\n").unwrap() + 3;
        src[start..].lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn conditional_listing() {
        let c = emit(&translate(COND).unwrap(), Target::C).unwrap();
        let expected = "double a;
int loopy_cond0;
double b;
for (int i = 0; i <= -1 + n; ++i)
{
a = inp[i];
loopy_cond0 = a >= 3;
if (loopy_cond0)
{
b = 2.0 * a;
for (int j = 0; j <= 2; ++j)
b = 3.0 * b;
out[i] = 5.0 * b;
}
if (!loopy_cond0)
out[i] = 4.0 * a;
}
}";
        assert_eq!(body(&c), expected);
        assert!(c.starts_with("#include <math.h>\n\nvoid cond(double const *restrict inp, double *restrict out, int const n)"));
        assert!(!c.contains("int_floor_div_pos_b"));
    }

    fn fd() -> Kernel {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "result[i] = u[i+1]-u[i]", "fd").unwrap();
        let k = split_iname(&k, "i", 16, None, None).unwrap();
        let k = assume(&k, "n mod 16 = 0").unwrap();
        let k = extract_subst(&k, "u_acc", "u[j]", &["j".to_string()]).unwrap();
        precompute(&k, &parse_match("u_acc").unwrap(), &["i_inner".into()], None).unwrap()
    }

    #[test]
    fn forward_difference_listing() {
        let c = emit(&fd(), Target::C).unwrap();
        let expected = "float u_acc_0[17];
for (int i_outer = 0; i_outer <= -1 + int_floor_div_pos_b(15 + n, 16); ++i_outer)
{
for (int j = 0; j <= 16; ++j)
u_acc_0[j] = u[i_outer * 16 + j];
for (int i_inner = 0; i_inner <= 15; ++i_inner)
result[i_inner + i_outer * 16] = u_acc_0[1 + i_inner] + -1.0f * u_acc_0[i_inner];
}
}";
        assert_eq!(body(&c), expected);
        assert!(c.contains("return (a - (a < 0 ? b - 1 : 0)) / b;"));
        assert_eq!(c, emit(&fd(), Target::C).unwrap());
    }

    #[test]
    fn opencl_guard_elided_under_divisibility() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "out[i] = a", "fill").unwrap();
        let k = split_iname(&k, "i", 128, Some("g.0"), Some("l.0")).unwrap();
        let guarded = emit(&k, Target::OpenCl).unwrap();
        assert!(guarded.contains("if (i_inner <= -1 - i_outer * 128 + n)"), "{guarded}");
        let exact = emit(&assume(&k, "n mod 128 = 0").unwrap(), Target::OpenCl).unwrap();
        assert!(!exact.contains("if ("), "{exact}");
        assert!(exact.contains("int const i_outer = get_group_id(0);"));
        assert!(exact.contains("int const i_inner = get_local_id(0);"));
        assert!(exact.contains("reqd_work_group_size(128, 1, 1)"));
        assert!(exact.contains("out[i_inner + i_outer * 128] = a;"));
    }

    #[test]
    fn reductions_and_unrolling() {
        let k = make_kernel(&["{[i,j]: 0<=i<n and 0<=j<4}"], "out[i] = sum(j, a[i, j]*2)", "r").unwrap();
        let c = emit(&k, Target::C).unwrap();
        assert!(c.contains("float acc_j = 0.0f;"), "{c}");
        let u = make_kernel(&["{[i,j]: 0<=i<n and 0<=j<3}"], "out[i, j] = a[i, j]", "u").unwrap();
        let u = crate::transforms::tag_inames(&u, "j:unroll").unwrap();
        let c = emit(&u, Target::C).unwrap();
        assert!(!c.contains("for (int j"), "{c}");
        for v in 0..3 {
            assert!(c.contains(&format!("int const j = {v};")), "{c}");
        }
        let m = make_kernel(&["{[i,j]: 0<=i<n and 0<=j<4}"], "out[i] = reduce(max, j, a[i, j])", "r").unwrap();
        let c = emit(&m, Target::C).unwrap();
        assert!(c.contains("acc_j = j == 0 ? a[i * 4 + j] : fmaxf(acc_j, a[i * 4 + j]);"), "{c}");
    }
}
