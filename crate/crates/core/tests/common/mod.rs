//! Oracles shared by the integration tests. Nothing here calls into the
//! code under test except to build the inputs it is compared against.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `sum(coeffs[k] * x_k) + param * n + constant >= 0`, or `== 0`.
#[derive(Clone, Debug)]
pub struct Cons {
    pub coeffs: Vec<i64>,
    pub param: i64,
    pub constant: i64,
    pub eq: bool,
}

impl Cons {
    fn holds(&self, x: &[i64], n: i64) -> bool {
        let v: i64 = self.coeffs.iter().zip(x).map(|(c, x)| c * x).sum::<i64>() + self.param * n + self.constant;
        if self.eq {
            v == 0
        } else {
            v >= 0
        }
    }

    fn render(&self, dims: &[String]) -> String {
        let mut terms = Vec::new();
        for (c, d) in self.coeffs.iter().zip(dims) {
            if *c != 0 {
                terms.push(format!("{c}*{d}"));
            }
        }
        if self.param != 0 {
            terms.push(format!("{}*n", self.param));
        }
        terms.push(self.constant.to_string());
        format!("{} {} 0", terms.join(" + ").replace("+ -", "- "), if self.eq { "=" } else { ">=" })
    }
}

/// A random bounded set over dims `x0..`, parameter `n`, with an explicit
/// bounding box so points can be enumerated by brute force.
#[derive(Clone, Debug)]
pub struct RandomSet {
    pub dims: Vec<String>,
    pub bbox: Vec<(i64, i64)>,
    pub extra: Vec<Cons>,
}

impl RandomSet {
    pub fn generate(seed: u64) -> RandomSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = rng.gen_range(1..=3);
        let dims: Vec<String> = (0..nd).map(|d| format!("x{d}")).collect();
        // keep the box small enough to brute force in three dimensions
        let cap = [40, 40, 16][nd - 1];
        let bbox = (0..nd)
            .map(|_| {
                let lo = rng.gen_range(-3..=3);
                (lo, lo + rng.gen_range(1..=cap) - 1)
            })
            .collect();
        let extra = (0..rng.gen_range(0..=2))
            .map(|_| {
                let mut coeffs: Vec<i64> = (0..nd).map(|_| rng.gen_range(-2..=2)).collect();
                if coeffs.iter().all(|c| *c == 0) {
                    coeffs[rng.gen_range(0..nd)] = 1;
                }
                Cons {
                    coeffs,
                    param: rng.gen_range(-1..=1),
                    constant: rng.gen_range(-10..=30),
                    eq: false,
                }
            })
            .collect();
        RandomSet { dims, bbox, extra }
    }

    pub fn text(&self) -> String {
        let mut cs = Vec::new();
        for (d, (lo, hi)) in self.dims.iter().zip(&self.bbox) {
            cs.push(format!("{lo} <= {d} <= {hi}"));
        }
        cs.extend(self.extra.iter().map(|c| c.render(&self.dims)));
        format!("[n] -> {{ [{}] : {} }}", self.dims.join(", "), cs.join(" and "))
    }

    /// All integer points, lexicographically.
    pub fn points(&self, n: i64) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        let mut x = vec![0; self.dims.len()];
        self.walk(0, &mut x, n, &mut out);
        out
    }

    fn walk(&self, d: usize, x: &mut Vec<i64>, n: i64, out: &mut Vec<Vec<i64>>) {
        if d == self.dims.len() {
            if self.extra.iter().all(|c| c.holds(x, n)) {
                out.push(x.clone());
            }
            return;
        }
        for v in self.bbox[d].0..=self.bbox[d].1 {
            x[d] = v;
            self.walk(d + 1, x, n, out);
        }
    }
}

pub const PARAM_GRID: [i64; 4] = [0, 5, 17, 40];

/// Min and max of coordinate `d` among points sharing each prefix `x[..d]`.
pub fn ranges_by_prefix(points: &[Vec<i64>], d: usize) -> BTreeMap<Vec<i64>, (i64, i64)> {
    let mut out: BTreeMap<Vec<i64>, (i64, i64)> = BTreeMap::new();
    for p in points {
        let e = out.entry(p[..d].to_vec()).or_insert((p[d], p[d]));
        e.0 = e.0.min(p[d]);
        e.1 = e.1.max(p[d]);
    }
    out
}

/// Seeds whose split set fails to map one-to-one onto the original points.
pub fn split_bijection_failures(seeds: std::ops::Range<u64>) -> Vec<String> {
    use loopforge::polyset::{enumerate_points, parse_set};
    let mut bad = Vec::new();
    for seed in seeds {
        let r = RandomSet::generate(seed);
        let d = (seed as usize) % r.dims.len();
        let factor = [2, 3, 8, 16][(seed / 3) as usize % 4];
        let s = parse_set(&r.text()).unwrap();
        let split = s.split_dim(&r.dims[d], factor, "outer", "inner").unwrap();
        let outer = split.dims().iter().position(|x| x == "outer").unwrap();
        let inner = split.dims().iter().position(|x| x == "inner").unwrap();
        for n in PARAM_GRID {
            let want: std::collections::BTreeSet<Vec<i64>> = r.points(n).into_iter().collect();
            let pts = enumerate_points(&split, &[("n".to_string(), n)].into()).unwrap();
            let mut got = std::collections::BTreeSet::new();
            let mut ok = true;
            for p in &pts {
                if p[inner] < 0 || p[inner] >= factor {
                    ok = false;
                }
                let mut q: Vec<i64> = split
                    .dims()
                    .iter()
                    .zip(p)
                    .filter(|(x, _)| *x != "outer" && *x != "inner")
                    .map(|(_, v)| *v)
                    .collect();
                q.insert(d, factor * p[outer] + p[inner]);
                ok &= got.insert(q);
            }
            if !ok || got != want {
                bad.push(format!("seed {seed} n={n} factor {factor}: {} points, expected {}", pts.len(), want.len()));
            }
        }
    }
    bad
}

/// Outcome of comparing `bounds_for` against brute-force enumeration.
#[derive(Debug, Default)]
pub struct BoundsReport {
    /// A bound excluded a point of the set.
    pub unsound: Vec<String>,
    /// A bound admitted a value no point takes.
    pub loose: Vec<String>,
}

/// For every dimension, bounds with nothing fixed are compared against the
/// global range and bounds with all earlier dimensions fixed against each
/// prefix's range.
pub fn bounds_report(seeds: std::ops::Range<u64>) -> BoundsReport {
    use loopforge::polyset::{bounds_for, parse_set, Assumptions};
    let mut rep = BoundsReport::default();
    for seed in seeds {
        let r = RandomSet::generate(seed);
        let s = parse_set(&r.text()).unwrap();
        for n in PARAM_GRID {
            let pts = r.points(n);
            if pts.is_empty() {
                continue;
            }
            for d in 0..r.dims.len() {
                for fixed in [0, d] {
                    let b = match bounds_for(&s, &r.dims[d], &r.dims[..fixed], &Assumptions::new()) {
                        Ok(b) => b,
                        Err(e) => {
                            rep.unsound.push(format!("seed {seed} n={n} {}: {e}", r.dims[d]));
                            continue;
                        }
                    };
                    let proj: Vec<Vec<i64>> = pts
                        .iter()
                        .map(|p| p[..fixed].iter().chain([&p[d]]).copied().collect())
                        .collect();
                    for (prefix, want) in ranges_by_prefix(&proj, fixed) {
                        let vals: BTreeMap<String, i64> =
                            r.dims.iter().cloned().zip(prefix.iter().copied()).chain([("n".to_string(), n)]).collect();
                        let got = b.eval(&|v| vals.get(v).copied());
                        let what = format!("seed {seed} n={n} {} at {prefix:?}: {got:?} vs {want:?}", r.dims[d]);
                        match got {
                            Some((lo, hi)) if lo <= want.0 && hi >= want.1 => {
                                if (lo, hi) != want {
                                    rep.loose.push(what);
                                }
                            }
                            _ => rep.unsound.push(what),
                        }
                    }
                }
            }
        }
    }
    rep
}

use loopforge::expr::{free_variables, Expr};
use loopforge::interp::ExecutionEnv;
use loopforge::kernel::Kernel;
use loopforge::matching::parse_match;
use loopforge::transforms as t;
use loopforge::Error;

/// Inames appearing in the arguments of invocations of `rule`.
fn invocation_inames(k: &Kernel, rule: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut look = |e: &Expr| {
        e.visit(&mut |x| {
            if let Expr::Rule(call) = x {
                if call.name == rule {
                    for a in &call.args {
                        out.extend(free_variables(a).into_iter().filter(|v| k.is_iname(v)));
                    }
                }
            }
        })
    };
    k.instructions.iter().for_each(|i| look(&i.rhs));
    k.rules.values().for_each(|r| look(&r.body));
    out.sort();
    out.dedup();
    out
}

/// Inames indexing reads of array `var`.
fn access_inames(k: &Kernel, var: &str) -> Vec<String> {
    let mut out = Vec::new();
    for i in &k.instructions {
        i.rhs.visit(&mut |x| {
            if let Expr::Subscript(n, idx) = x {
                if n == var {
                    idx.iter().for_each(|e| out.extend(free_variables(e).into_iter().filter(|v| k.is_iname(v))));
                }
            }
        });
    }
    out.sort();
    out.dedup();
    out
}

/// Every transform of the preservation property that can be tried on `k`,
/// labelled. Precondition failures come back as `Error::Transform`.
pub fn transform_catalog(k: &Kernel, seed: u64) -> Vec<(String, loopforge::Result<Kernel>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(String, loopforge::Result<Kernel>)> = Vec::new();
    let inames = k.inames();
    let star = parse_match("*").unwrap();

    let iname = inames[rng.gen_range(0..inames.len())].clone();
    let factor = [2, 3, 4, 5, 16][rng.gen_range(0..5)];
    out.push((format!("split_iname({iname}, {factor})"), t::split_iname(k, &iname, factor, None, None)));
    if k.params().contains(&"n".to_string()) {
        out.push(("assume(n >= 1)".into(), t::assume(k, "n >= 1")));
    }
    out.push(("tag_instructions(*, probe)".into(), t::tag_instructions(k, &star, "probe")));

    let inputs: Vec<String> = k.args.iter().filter(|a| a.is_array() && !a.is_output).map(|a| a.name.clone()).collect();
    for x in &inputs {
        let rank = k.arg(x).unwrap().shape.len();
        let params: Vec<String> = (0..rank).map(|d| format!("p{d}")).collect();
        let pattern = format!("{x}[{}]", params.join(", "));
        out.push((format!("extract_subst({pattern})"), t::extract_subst(k, &format!("{x}_rule"), &pattern, &params)));
        out.push((format!("wrap_variable_access({x})"), t::wrap_variable_access(k, x, &format!("{x}_acc"))));
    }
    for temp in k.temporaries.keys() {
        out.push((format!("temporary_to_subst({temp})"), t::temporary_to_subst(k, temp)));
    }
    if !k.rules.is_empty() {
        out.push(("expand_subst(*)".into(), t::expand_subst(k, &star)));
        out.push(("expand_all_rules".into(), t::expand_all_rules(k)));
    }
    for rule in k.rules.keys() {
        for j in invocation_inames(k, rule) {
            out.push((format!("precompute({rule}, {j})"), t::precompute(k, &parse_match(rule).unwrap(), &[j], None)));
        }
    }
    // prefetching an input through a rule, as for forward differencing
    if let Some(x) = inputs.first() {
        if let Some(j) = access_inames(k, x).first() {
            let staged = t::split_iname(k, j, 4, None, None)
                .and_then(|s| t::wrap_variable_access(&s, x, "pf"))
                .and_then(|s| t::precompute(&s, &parse_match("pf").unwrap(), &[format!("{j}_inner")], None));
            out.push((format!("split+wrap+precompute({x}, {j}_inner)"), staged));
        }
    }
    out
}

/// A precondition the transform checked, as opposed to a broken result.
pub fn not_applicable(e: &Error) -> bool {
    matches!(e, Error::Transform { .. })
}

/// Names of output arguments whose data differ bitwise.
pub fn differing_outputs(k: &Kernel, a: &ExecutionEnv, b: &ExecutionEnv) -> Vec<String> {
    k.args
        .iter()
        .filter(|x| x.is_output)
        .filter(|x| match (a.arrays.get(&x.name), b.arrays.get(&x.name)) {
            (Some(p), Some(q)) => !p.data.bitwise_eq(&q.data),
            _ => true,
        })
        .map(|x| x.name.clone())
        .collect()
}
