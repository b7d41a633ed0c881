//! Reference interpreter: runs a kernel on concrete arrays.

mod data;

pub use data::{ArrayData, Buffer};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::codegen::{loop_bounds, prepare, residual_predicates, typed, typed_assignment, SchedNode, Schedule, TExpr};
use crate::error::{Error, Result};
use crate::expr::{BinOp, CmpOp, RedOp};
use crate::kernel::{Kernel, Predicate};
use crate::polyset::{Constraint, IndexBounds};
use crate::types::DType;

/// Parameter bindings and argument arrays. Scalar arguments are rank-0 arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExecutionEnv {
    pub params: BTreeMap<String, i64>,
    pub arrays: BTreeMap<String, ArrayData>,
    /// `(instruction id, lhs indices)` per executed statement, when enabled.
    pub trace: Option<Vec<(String, Vec<i64>)>>,
}

impl ExecutionEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn param(mut self, name: &str, v: i64) -> Self {
        self.params.insert(name.to_string(), v);
        self
    }

    pub fn array(mut self, name: &str, a: ArrayData) -> Self {
        self.arrays.insert(name.to_string(), a);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Value {
    I(i32),
    F32(f32),
    F64(f64),
}

impl Value {
    fn cast(self, d: DType) -> Value {
        match (self, d) {
            (Value::I(v), DType::I32) => Value::I(v),
            (Value::I(v), DType::F32) => Value::F32(v as f32),
            (Value::I(v), DType::F64) => Value::F64(v as f64),
            (Value::F32(v), DType::I32) => Value::I(v as i32),
            (Value::F32(v), DType::F32) => Value::F32(v),
            (Value::F32(v), DType::F64) => Value::F64(v as f64),
            (Value::F64(v), DType::I32) => Value::I(v as i32),
            (Value::F64(v), DType::F32) => Value::F32(v as f32),
            (Value::F64(v), DType::F64) => Value::F64(v),
        }
    }

    fn int(self) -> i64 {
        match self {
            Value::I(v) => v as i64,
            Value::F32(v) => v as i64,
            Value::F64(v) => v as i64,
        }
    }

    fn is_zero(self) -> bool {
        match self {
            Value::I(v) => v == 0,
            Value::F32(v) => v == 0.0,
            Value::F64(v) => v == 0.0,
        }
    }
}

fn read(b: &Buffer, i: usize) -> Value {
    match b {
        Buffer::I32(v) => Value::I(v[i]),
        Buffer::F32(v) => Value::F32(v[i]),
        Buffer::F64(v) => Value::F64(v[i]),
    }
}

fn write(b: &mut Buffer, i: usize, x: Value) {
    let d = b.dtype();
    match (b, x.cast(d)) {
        (Buffer::I32(v), Value::I(x)) => v[i] = x,
        (Buffer::F32(v), Value::F32(x)) => v[i] = x,
        (Buffer::F64(v), Value::F64(x)) => v[i] = x,
        _ => unreachable!("cast to the buffer dtype"),
    }
}

struct Temp {
    shape: Vec<usize>,
    data: Buffer,
    written: Vec<bool>,
}

struct Stmt {
    lhs: TExpr,
    rhs: TExpr,
}

/// A loop's bounds plus constraints of its domain node that restrict only
/// the enclosing loops.
struct LoopInfo {
    bounds: IndexBounds,
    guards: Vec<Constraint>,
}

struct Machine<'a> {
    k: &'a Kernel,
    checked: bool,
    vals: HashMap<String, i64>,
    arrays: BTreeMap<String, ArrayData>,
    /// Evaluated strides of argument arrays.
    strides: HashMap<String, Vec<i64>>,
    temps: HashMap<String, Temp>,
    stmts: HashMap<String, Stmt>,
    loops: HashMap<(Vec<String>, String), LoopInfo>,
    stack: Vec<String>,
    current: String,
    trace: Option<Vec<(String, Vec<i64>)>>,
}

fn fmin<T: PartialOrd + Copy>(a: T, b: T, is_nan: impl Fn(T) -> bool) -> T {
    if is_nan(a) {
        b
    } else if is_nan(b) || a <= b {
        a
    } else {
        b
    }
}

fn fmax<T: PartialOrd + Copy>(a: T, b: T, is_nan: impl Fn(T) -> bool) -> T {
    if is_nan(a) {
        b
    } else if is_nan(b) || a >= b {
        a
    } else {
        b
    }
}

impl Machine<'_> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::interp(format!("instruction `{}`: {msg}", self.current))
    }

    fn lookup(&self, v: &str) -> Option<i64> {
        self.vals.get(v).copied()
    }

    fn loop_info(&mut self, iname: &str) -> Result<&LoopInfo> {
        let key = (self.stack.clone(), iname.to_string());
        if !self.loops.contains_key(&key) {
            let bounds = loop_bounds(self.k, &self.stack, iname)?;
            let node = self.k.domains.node_of(iname).expect("scheduled inames exist");
            let guards = self.k.domains.nodes()[node]
                .constraints()
                .iter()
                .filter(|c| !c.mentions(iname) && c.expr().vars().all(|v| !self.k.is_iname(v) || self.stack.iter().any(|s| s == v)))
                .cloned()
                .collect();
            self.loops.insert(key.clone(), LoopInfo { bounds, guards });
        }
        Ok(&self.loops[&key])
    }

    fn range(&mut self, iname: &str) -> Result<Option<(i64, i64)>> {
        let info = self.loop_info(iname)?;
        let (bounds, guards) = (info.bounds.clone(), info.guards.clone());
        let look = |v: &str| self.lookup(v);
        for g in &guards {
            if g.holds(&look) != Some(true) {
                return Ok(None);
            }
        }
        bounds
            .eval_shadow(&look)
            .map(Some)
            .ok_or_else(|| Error::interp(format!("cannot evaluate bounds of `{iname}`")))
    }

    fn temp_index(&self, name: &str, idx: &[i64]) -> Result<usize> {
        let t = &self.temps[name];
        if idx.len() != t.shape.len() {
            return Err(self.err(format!("`{name}` takes {} subscripts", t.shape.len())));
        }
        if self.checked {
            for (d, (&i, &n)) in idx.iter().zip(&t.shape).enumerate() {
                if i < 0 || i as usize >= n {
                    return Err(self.err(format!(
                        "temporary `{name}` subscript {d} = {i} outside extent {n} at {idx:?}"
                    )));
                }
            }
        }
        let mut flat: i64 = 0;
        for (&i, &n) in idx.iter().zip(&t.shape) {
            flat = flat * n as i64 + i;
        }
        if flat < 0 || flat as usize >= t.data.len() {
            return Err(self.err(format!("out-of-bounds access `{name}{idx:?}`")));
        }
        Ok(flat as usize)
    }

    fn arg_index(&self, name: &str, idx: &[i64]) -> Result<usize> {
        let strides = &self.strides[name];
        if idx.len() != strides.len() {
            return Err(self.err(format!("`{name}` takes {} subscripts", strides.len())));
        }
        let flat: i64 = idx.iter().zip(strides).map(|(i, s)| i * s).sum();
        let len = self.arrays[name].data.len();
        if flat < 0 || flat as usize >= len {
            return Err(self.err(format!("out-of-bounds access `{name}{idx:?}` (flat {flat}, length {len})")));
        }
        Ok(flat as usize)
    }

    fn load(&self, name: &str, idx: &[i64]) -> Result<Value> {
        if self.temps.contains_key(name) {
            let i = self.temp_index(name, idx)?;
            let t = &self.temps[name];
            if !t.written[i] {
                return Err(self.err(format!("read of never-written temporary `{name}{idx:?}`")));
            }
            return Ok(read(&t.data, i));
        }
        if self.arrays.contains_key(name) {
            let i = self.arg_index(name, idx)?;
            return Ok(read(&self.arrays[name].data, i));
        }
        if idx.is_empty() {
            if let Some(v) = self.lookup(name) {
                return Ok(Value::I(v as i32));
            }
        }
        Err(self.err(format!("unbound variable `{name}`")))
    }

    fn store(&mut self, name: &str, idx: &[i64], v: Value) -> Result<()> {
        if self.temps.contains_key(name) {
            let i = self.temp_index(name, idx)?;
            let t = self.temps.get_mut(name).expect("checked above");
            write(&mut t.data, i, v);
            t.written[i] = true;
            return Ok(());
        }
        if self.arrays.contains_key(name) {
            let i = self.arg_index(name, idx)?;
            write(&mut self.arrays.get_mut(name).expect("checked above").data, i, v);
            return Ok(());
        }
        Err(self.err(format!("cannot store to `{name}`")))
    }

    fn indices(&mut self, idx: &[TExpr]) -> Result<Vec<i64>> {
        idx.iter().map(|x| Ok(self.eval(x)?.int())).collect()
    }

    fn eval(&mut self, e: &TExpr) -> Result<Value> {
        Ok(match e {
            TExpr::Int(v) => Value::I(*v as i32),
            TExpr::Float(v, d) => Value::F64(*v).cast(*d),
            TExpr::Iname(n) => Value::I(self.lookup(n).ok_or_else(|| self.err(format!("unbound iname `{n}`")))? as i32),
            TExpr::Scalar(n, _) => self.load(n, &[])?,
            TExpr::Load(n, idx, _) => {
                let ix = self.indices(idx)?;
                self.load(n, &ix)?
            }
            TExpr::Cast(d, a) => self.eval(a)?.cast(*d),
            TExpr::Bin(op, d, a, b) => {
                let (x, y) = (self.eval(a)?.cast(*d), self.eval(b)?.cast(*d));
                binary(*op, x, y).ok_or_else(|| self.err("integer division by zero"))?
            }
            TExpr::Cmp(op, d, a, b) => {
                let (x, y) = (self.eval(a)?.cast(*d), self.eval(b)?.cast(*d));
                let r = match (x, y) {
                    (Value::I(x), Value::I(y)) => compare(*op, x, y),
                    (Value::F32(x), Value::F32(y)) => compare(*op, x, y),
                    (Value::F64(x), Value::F64(y)) => compare(*op, x, y),
                    _ => unreachable!("operands share a dtype"),
                };
                Value::I(r as i32)
            }
            TExpr::Neg(d, a) => match self.eval(a)?.cast(*d) {
                Value::I(v) => Value::I(v.wrapping_neg()),
                Value::F32(v) => Value::F32(-v),
                Value::F64(v) => Value::F64(-v),
            },
            TExpr::Not(a) => Value::I(self.eval(a)?.is_zero() as i32),
            TExpr::Call(name, d, args) => {
                let vs = args.iter().map(|a| Ok(self.eval(a)?.cast(*d))).collect::<Result<Vec<_>>>()?;
                call(name, &vs).ok_or_else(|| self.err(format!("bad call `{name}`")))?
            }
            TExpr::Reduce(op, j, d, body) => self.reduce(*op, j, *d, body)?,
        })
    }

    fn reduce(&mut self, op: RedOp, j: &str, d: DType, body: &TExpr) -> Result<Value> {
        let Some((lo, hi)) = self.range(j)? else {
            return self.empty_reduction(op, d, j);
        };
        self.stack.push(j.to_string());
        let mut acc: Option<Value> = match op {
            RedOp::Sum => Some(Value::I(0).cast(d)),
            RedOp::Product => Some(Value::I(1).cast(d)),
            RedOp::Min | RedOp::Max => None,
        };
        let mut result = Ok(());
        for v in lo..=hi {
            self.vals.insert(j.to_string(), v);
            let x = match self.eval(body) {
                Ok(x) => x.cast(d),
                Err(e) => {
                    result = Err(e);
                    break;
                }
            };
            acc = Some(match (op, acc) {
                (_, None) => x,
                (RedOp::Sum, Some(a)) => binary(BinOp::Add, a, x).expect("addition"),
                (RedOp::Product, Some(a)) => binary(BinOp::Mul, a, x).expect("multiplication"),
                (RedOp::Min, Some(a)) => call("min", &[a, x]).expect("min"),
                (RedOp::Max, Some(a)) => call("max", &[a, x]).expect("max"),
            });
        }
        self.vals.remove(j);
        self.stack.pop();
        result?;
        match acc {
            Some(a) => Ok(a),
            None => self.empty_reduction(op, d, j),
        }
    }

    fn empty_reduction(&self, op: RedOp, d: DType, j: &str) -> Result<Value> {
        match op {
            RedOp::Sum => Ok(Value::I(0).cast(d)),
            RedOp::Product => Ok(Value::I(1).cast(d)),
            _ => Err(self.err(format!("{} reduction over empty `{j}` range", op.name()))),
        }
    }

    fn preds_hold(&self, ps: &[Predicate]) -> Result<bool> {
        for p in ps {
            let v = self.load(&p.flag, &[])?;
            if v.is_zero() != p.negated {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn run(&mut self, nodes: &[SchedNode], guaranteed: &BTreeSet<Predicate>) -> Result<()> {
        for n in nodes {
            match n {
                SchedNode::Stmt(id) => {
                    self.current = id.clone();
                    let residual = residual_predicates(self.k, id, guaranteed);
                    if !self.preds_hold(&residual)? {
                        continue;
                    }
                    let (lhs, rhs) = {
                        let s = &self.stmts[id];
                        (s.lhs.clone(), s.rhs.clone())
                    };
                    let v = self.eval(&rhs)?;
                    let (name, idx) = match &lhs {
                        TExpr::Scalar(n, _) => (n.clone(), Vec::new()),
                        TExpr::Load(n, idx, _) => (n.clone(), self.indices(idx)?),
                        _ => return Err(self.err("unsupported assignment target")),
                    };
                    self.store(&name, &idx, v)?;
                    if let Some(t) = &mut self.trace {
                        t.push((id.clone(), idx));
                    }
                }
                SchedNode::Cond { preds, body } => {
                    self.current = format!("condition {preds:?}");
                    let ps: Vec<Predicate> = preds.iter().cloned().collect();
                    if self.preds_hold(&ps)? {
                        let inner: BTreeSet<Predicate> = guaranteed.union(preds).cloned().collect();
                        self.run(body, &inner)?;
                    }
                }
                SchedNode::Loop { iname, body } => {
                    let Some((lo, hi)) = self.range(iname)? else { continue };
                    self.stack.push(iname.clone());
                    for v in lo..=hi {
                        self.vals.insert(iname.clone(), v);
                        self.run(body, guaranteed)?;
                    }
                    self.vals.remove(iname);
                    self.stack.pop();
                }
            }
        }
        Ok(())
    }
}

fn compare<T: PartialOrd>(op: CmpOp, x: T, y: T) -> bool {
    match op {
        CmpOp::Lt => x < y,
        CmpOp::Le => x <= y,
        CmpOp::Gt => x > y,
        CmpOp::Ge => x >= y,
        CmpOp::Eq => x == y,
        CmpOp::Ne => x != y,
    }
}

fn binary(op: BinOp, x: Value, y: Value) -> Option<Value> {
    Some(match (x, y) {
        (Value::I(a), Value::I(b)) => Value::I(match op {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Div => {
                if b == 0 {
                    return None;
                }
                a.wrapping_div(b)
            }
            BinOp::Pow => (a as f64).powf(b as f64) as i32,
        }),
        (Value::F32(a), Value::F32(b)) => Value::F32(match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }),
        (Value::F64(a), Value::F64(b)) => Value::F64(match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }),
        _ => return None,
    })
}

fn call(name: &str, vs: &[Value]) -> Option<Value> {
    let unary = |f32f: fn(f32) -> f32, f64f: fn(f64) -> f64| match vs {
        [Value::F32(x)] => Some(Value::F32(f32f(*x))),
        [Value::F64(x)] => Some(Value::F64(f64f(*x))),
        _ => None,
    };
    match name {
        "sqrt" => unary(f32::sqrt, f64::sqrt),
        "sin" => unary(f32::sin, f64::sin),
        "cos" => unary(f32::cos, f64::cos),
        "tan" => unary(f32::tan, f64::tan),
        "exp" => unary(f32::exp, f64::exp),
        "log" => unary(f32::ln, f64::ln),
        "abs" | "fabs" => match vs {
            [Value::I(x)] => Some(Value::I(x.wrapping_abs())),
            _ => unary(f32::abs, f64::abs),
        },
        "min" | "max" => {
            let min = name == "min";
            Some(match vs {
                [Value::I(a), Value::I(b)] => Value::I(if min { *a.min(b) } else { *a.max(b) }),
                [Value::F32(a), Value::F32(b)] => Value::F32(if min {
                    fmin(*a, *b, f32::is_nan)
                } else {
                    fmax(*a, *b, f32::is_nan)
                }),
                [Value::F64(a), Value::F64(b)] => Value::F64(if min {
                    fmin(*a, *b, f64::is_nan)
                } else {
                    fmax(*a, *b, f64::is_nan)
                }),
                _ => return None,
            })
        }
        _ => None,
    }
}

/// Number of elements an argument needs under `strides`.
pub(crate) fn required_len(shape: &[i64], strides: &[i64]) -> usize {
    if shape.iter().any(|&n| n <= 0) {
        return 0;
    }
    (shape.iter().zip(strides).map(|(n, s)| (n - 1) * s).sum::<i64>() + 1) as usize
}

/// Runs `k` on `env`. Outputs missing from `env` are allocated zero-filled.
pub fn interpret(k: &Kernel, env: &ExecutionEnv) -> Result<ExecutionEnv> {
    let (k, s) = prepare(k)?;
    run_schedule(&k, &s, env, false)
}

/// Like [`interpret`], additionally checking every temporary subscript
/// against its declared extent.
pub fn interpret_bounds_checked(k: &Kernel, env: &ExecutionEnv) -> Result<ExecutionEnv> {
    let (k, s) = prepare(k)?;
    run_schedule(&k, &s, env, true)
}

/// Executes a given schedule of a kernel whose rules are expanded.
pub fn run_schedule(k: &Kernel, sched: &Schedule, env: &ExecutionEnv, checked: bool) -> Result<ExecutionEnv> {
    let mut params = env.params.clone();
    for p in k.params() {
        if !params.contains_key(&p) {
            // integer scalar arguments double as parameters
            match env.arrays.get(&p).map(|a| &a.data) {
                Some(Buffer::I32(v)) if v.len() == 1 => {
                    params.insert(p.clone(), v[0] as i64);
                }
                _ => return Err(Error::interp(format!("parameter `{p}` is not bound"))),
            }
        }
    }
    k.assumptions.check(&params)?;
    let mut arrays = BTreeMap::new();
    let mut strides = HashMap::new();
    for a in &k.args {
        if !a.is_array() && params.contains_key(&a.name) && a.dtype == DType::I32 {
            continue;
        }
        let sh = a.shape.iter().map(|e| e.eval_map(&params)).collect::<Result<Vec<_>>>()?;
        let st = a.strides.iter().map(|e| e.eval_map(&params)).collect::<Result<Vec<_>>>()?;
        let need = if a.is_array() { required_len(&sh, &st) } else { 1 };
        let data = match env.arrays.get(&a.name) {
            Some(d) => {
                if d.dtype() != a.dtype {
                    return Err(Error::interp(format!(
                        "argument `{}` has dtype {}, data has {}",
                        a.name,
                        a.dtype,
                        d.dtype()
                    )));
                }
                if d.data.len() < need {
                    return Err(Error::interp(format!(
                        "argument `{}` needs {need} elements, data has {}",
                        a.name,
                        d.data.len()
                    )));
                }
                d.clone()
            }
            None if a.is_output => ArrayData::new(sh.iter().map(|&n| n.max(0) as usize).collect(), Buffer::zeros(a.dtype, need)),
            None => return Err(Error::interp(format!("input argument `{}` is not bound", a.name))),
        };
        arrays.insert(a.name.clone(), data);
        strides.insert(a.name.clone(), st);
    }
    let mut temps = HashMap::new();
    for t in k.temporaries.values() {
        let shape = t
            .shape
            .iter()
            .map(|e| Ok(e.eval_map(&params)?.max(0) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        temps.insert(
            t.name.clone(),
            Temp {
                shape,
                data: Buffer::zeros(t.dtype, n),
                written: vec![false; n],
            },
        );
    }
    let mut stmts = HashMap::new();
    for insn in &k.instructions {
        let target = k
            .var_dtype(insn.assignee())
            .ok_or_else(|| Error::interp(format!("unknown assignee `{}`", insn.assignee())))?;
        stmts.insert(
            insn.id.clone(),
            Stmt {
                lhs: typed(k, &insn.lhs)?,
                rhs: typed_assignment(k, &insn.rhs, target)?,
            },
        );
    }
    let mut m = Machine {
        k,
        checked,
        vals: params.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        arrays,
        strides,
        temps,
        stmts,
        loops: HashMap::new(),
        stack: Vec::new(),
        current: String::new(),
        trace: env.trace.clone(),
    };
    m.run(&sched.nodes, &BTreeSet::new())?;
    let mut arrays = env.arrays.clone();
    for (name, a) in m.arrays {
        arrays.insert(name, a);
    }
    Ok(ExecutionEnv {
        params: env.params.clone(),
        arrays,
        trace: m.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fortran::translate;
    use crate::expr::Expr;
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

    fn f64s(env: &ExecutionEnv, name: &str) -> Vec<f64> {
        match &env.arrays[name].data {
            Buffer::F64(v) => v.clone(),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fill() {
        let k = translate("subroutine fill(out, a, n)\n real*8 a, out(n)\n integer n\n do i = 1, n\n out(i) = a\n end do\nend\n").unwrap();
        let env = ExecutionEnv::new().param("n", 4).array("a", ArrayData::scalar_f64(7.0));
        assert_eq!(f64s(&interpret(&k, &env).unwrap(), "out"), [7.0; 4]);
    }

    #[test]
    fn conditional_trace() {
        let k = translate(COND).unwrap();
        let env = ExecutionEnv::new()
            .param("n", 2)
            .array("inp", ArrayData::f64(vec![2], vec![1.0, 5.0]))
            .with_trace();
        let out = interpret(&k, &env).unwrap();
        // i=1: a=5, b=10, three triplings give 270, out = 5*270
        assert_eq!(f64s(&out, "out"), [4.0, 1350.0]);
        let writes: Vec<&(String, Vec<i64>)> = out.trace.as_ref().unwrap().iter().filter(|(_, ix)| !ix.is_empty()).collect();
        assert_eq!(writes.len(), 2);
        assert_eq!(writes[0].1, [0]);
        assert_eq!(writes[1].1, [1]);
    }

    #[test]
    fn predicate_grouping_preserves_results() {
        let (kx, grouped) = crate::codegen::prepare(&translate(COND).unwrap()).unwrap();
        let flat = crate::codegen::schedule(&kx).unwrap();
        assert_ne!(flat, grouped);
        let env = ExecutionEnv::new()
            .param("n", 5)
            .array("inp", ArrayData::f64(vec![5], vec![-1.0, 3.0, 2.5, 9.0, 0.0]))
            .with_trace();
        let a = run_schedule(&kx, &flat, &env, true).unwrap();
        let b = run_schedule(&kx, &grouped, &env, true).unwrap();
        assert!(a.arrays["out"].data.bitwise_eq(&b.arrays["out"].data));
        assert_eq!(a.trace, b.trace);
    }

    fn fd_precomputed() -> Kernel {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "result[i] = u[i+1]-u[i]", "fd").unwrap();
        let k = split_iname(&k, "i", 16, None, None).unwrap();
        let k = assume(&k, "n mod 16 = 0").unwrap();
        let k = extract_subst(&k, "u_acc", "u[j]", &["j".to_string()]).unwrap();
        precompute(&k, &parse_match("u_acc").unwrap(), &["i_inner".into()], None).unwrap()
    }

    #[test]
    fn forward_difference_bounds_checked() {
        let k = fd_precomputed();
        let u: Vec<f32> = (0..33).map(|x| (x * x) as f32 * 0.5).collect();
        let env = ExecutionEnv::new().param("n", 32).array("u", ArrayData::f32(vec![33], u.clone()));
        let out = interpret_bounds_checked(&k, &env).unwrap();
        let Buffer::F32(r) = &out.arrays["result"].data else { panic!() };
        let direct: Vec<f32> = (0..32).map(|i| u[i + 1] - u[i]).collect();
        assert_eq!(r, &direct);

        let mut shrunk = k.clone();
        shrunk.temporaries.get_mut("u_acc_0").unwrap().shape = vec![crate::polyset::AffineExpr::constant(16)];
        let e = interpret_bounds_checked(&shrunk, &env).unwrap_err().to_string();
        assert!(e.contains("u_acc_0") && e.contains("outside extent 16"), "{e}");
    }

    #[test]
    fn unbound_input_and_assumption_violation() {
        let k = fd_precomputed();
        assert!(interpret(&k, &ExecutionEnv::new().param("n", 32)).is_err());
        let env = ExecutionEnv::new().param("n", 20).array("u", ArrayData::f32(vec![21], vec![0.0; 21]));
        assert!(interpret(&k, &env).unwrap_err().to_string().contains("mod 16"));
    }

    #[test]
    fn never_written_temporary() {
        let mut k = fd_precomputed();
        // the fetch now only ever fills slot 0
        k.instructions[0].lhs = Expr::Subscript("u_acc_0".into(), vec![Expr::Int(0)]);
        let env = ExecutionEnv::new().param("n", 16).array("u", ArrayData::f32(vec![17], vec![1.0; 17]));
        let e = interpret(&k, &env).unwrap_err().to_string();
        assert!(e.contains("never-written") && e.contains("u_acc_0[1]"), "{e}");
    }

    #[test]
    fn dgemm_matches_naive_matmul() {
        let k = translate(include_str!("../../corpus/dgemm/input.f")).unwrap();
        let (m, n, l) = (24usize, 16usize, 32usize);
        let gen = |len: usize, seed: u64| -> Vec<f64> {
            (0..len).map(|x| (((x as u64 * 2654435761 + seed) % 1000) as f64) / 997.0 - 0.5).collect()
        };
        let (a, b, c) = (gen(m * l, 1), gen(l * n, 2), gen(m * n, 3));
        let env = ExecutionEnv::new()
            .param("m", m as i64)
            .param("n", n as i64)
            .param("l", l as i64)
            .array("alpha", ArrayData::scalar_f64(1.5))
            .array("a", ArrayData::f64(vec![m, l], a.clone()))
            .array("b", ArrayData::f64(vec![l, n], b.clone()))
            .array("c", ArrayData::f64(vec![m, n], c.clone()));
        let got = f64s(&interpret_bounds_checked(&k, &env).unwrap(), "c");
        let mut want = c;
        for j in 0..n {
            for kk in 0..l {
                for i in 0..m {
                    want[i + j * m] = want[i + j * m] + 1.5 * b[kk + j * l] * a[i + kk * m];
                }
            }
        }
        assert_eq!(got, want);
    }
}
