//! Seeded random kernels in the native language.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernel::{Kernel, KernelSpec};
use crate::types::DType;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub dims: usize,
    /// Largest constant loop extent. The parameter `n`, when used, is meant
    /// to be bound to at most this too.
    pub extent: i64,
    pub instructions: usize,
    pub rules: usize,
    /// Cap on the product of constant extents, to keep interpretation cheap.
    pub points: i64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            dims: 3,
            extent: 40,
            instructions: 6,
            rules: 2,
            points: 2000,
        }
    }
}

/// Every array axis is always indexed by the same iname (plus a small
/// offset), so shape inference sees comparable bounds.
struct Input {
    name: String,
    axes: Vec<String>,
}

struct Gen {
    rng: ChaCha8Rng,
    inames: Vec<String>,
    inputs: Vec<Input>,
    /// Rule names with the iname their argument is built from.
    rules: Vec<(String, String)>,
    used_rules: Vec<bool>,
    /// Scalar temporaries with the inames they were written within.
    temps: Vec<(String, Vec<String>)>,
}

impl Gen {
    fn literal(&mut self) -> String {
        ["0.5", "1.5", "2", "3", "0.25", "7"].choose(&mut self.rng).unwrap().to_string()
    }

    fn index(&mut self, iname: &str) -> String {
        match self.rng.gen_range(0..4) {
            0 => format!("{iname} + 1"),
            1 => format!("{iname} + 2"),
            _ => iname.to_string(),
        }
    }

    fn load(&mut self, within: &[String]) -> Option<String> {
        let usable: Vec<usize> = (0..self.inputs.len())
            .filter(|&m| self.inputs[m].axes.iter().all(|a| within.contains(a)))
            .collect();
        let &m = usable.choose(&mut self.rng)?;
        let axes = self.inputs[m].axes.clone();
        let idx: Vec<String> = axes.iter().map(|i| self.index(i)).collect();
        Some(format!("{}[{}]", self.inputs[m].name, idx.join(", ")))
    }

    fn leaf(&mut self, within: &[String]) -> String {
        match self.rng.gen_range(0..10) {
            0..=4 => self.load(within).unwrap_or_else(|| self.literal()),
            5 | 6 => self.literal(),
            7 if !within.is_empty() => within.choose(&mut self.rng).unwrap().clone(),
            8 => {
                let usable: Vec<usize> = (0..self.rules.len()).filter(|&r| within.contains(&self.rules[r].1)).collect();
                let Some(&r) = usable.choose(&mut self.rng) else {
                    return self.literal();
                };
                self.used_rules[r] = true;
                let (name, i) = self.rules[r].clone();
                let arg = self.index(&i);
                format!("{name}({arg})")
            }
            _ => {
                let ts: Vec<String> = self.temps.iter().filter(|(_, w)| *w == within).map(|(t, _)| t.clone()).collect();
                ts.choose(&mut self.rng).cloned().unwrap_or_else(|| self.literal())
            }
        }
    }

    fn expr(&mut self, depth: usize, within: &[String], allow_reduce: bool) -> String {
        if depth == 0 {
            return self.leaf(within);
        }
        match self.rng.gen_range(0..12) {
            0..=2 => self.leaf(within),
            3..=7 => {
                let op = ["+", "-", "*", "*", "/"].choose(&mut self.rng).unwrap();
                let a = self.expr(depth - 1, within, allow_reduce);
                let b = self.expr(depth - 1, within, allow_reduce);
                if *op == "/" {
                    format!("({a}) / ({b}*{b} + 1)")
                } else {
                    format!("({a}) {op} ({b})")
                }
            }
            8 => {
                let f = ["sqrt", "sin", "cos", "abs"].choose(&mut self.rng).unwrap();
                let a = self.expr(depth - 1, within, allow_reduce);
                if *f == "sqrt" {
                    format!("sqrt(abs({a}))")
                } else {
                    format!("{f}({a})")
                }
            }
            9 => format!("-({})", self.expr(depth - 1, within, allow_reduce)),
            _ => {
                let free: Vec<String> = self.inames.iter().filter(|i| !within.contains(i)).cloned().collect();
                match free.choose(&mut self.rng).cloned() {
                    Some(j) if allow_reduce => {
                        let op = ["sum", "sum", "product", "reduce(max,", "reduce(min,"].choose(&mut self.rng).unwrap();
                        let mut inner = within.to_vec();
                        inner.push(j.clone());
                        // temporaries vary with `within` only; keep them out of the body
                        let saved = std::mem::take(&mut self.temps);
                        let body = self.expr(depth - 1, &inner, false);
                        self.temps = saved;
                        if op.starts_with("reduce") {
                            format!("{op} {j}, {body})")
                        } else {
                            format!("{op}({j}, {body})")
                        }
                    }
                    _ => self.leaf(within),
                }
            }
        }
    }
}

/// A well-formed random kernel with at least one output array. Same seed,
/// same kernel. The first loop may be bounded by the parameter `n`.
pub fn random_kernel(seed: u64, limits: Limits) -> Kernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = rng.gen_range(1..=limits.dims.max(1));
    let inames: Vec<String> = (0..dims).map(|d| format!("i{d}")).collect();
    let mut budget = limits.points.max(1);
    let mut bounds = Vec::new();
    for (d, i) in inames.iter().enumerate() {
        let remaining = (dims - d) as u32;
        // leave room for the later loops
        let cap = (budget as f64).powf(1.0 / remaining as f64).floor() as i64;
        let e = rng.gen_range(1..=limits.extent.min(cap).max(1));
        budget /= e;
        if d == 0 && rng.gen_bool(0.5) {
            bounds.push(format!("0<={i}<n"));
        } else {
            bounds.push(format!("0<={i}<{e}"));
        }
    }
    let domain = format!("{{[{}]: {}}}", inames.join(","), bounds.join(" and "));

    let n_inputs = rng.gen_range(1..=3);
    let inputs = (0..n_inputs)
        .map(|m| {
            let mut axes = inames.clone();
            axes.shuffle(&mut rng);
            axes.truncate(rng.gen_range(1..=dims));
            Input {
                name: format!("x{m}"),
                axes,
            }
        })
        .collect();
    let mut g = Gen {
        rng,
        inames: inames.clone(),
        inputs,
        rules: Vec::new(),
        used_rules: Vec::new(),
        temps: Vec::new(),
    };

    let mut rule_defs = Vec::new();
    let n_rules = g.rng.gen_range(0..=limits.rules);
    for r in 0..n_rules {
        let name = format!("r{r}");
        let arr = format!("y{r}");
        let e = match g.rng.gen_range(0..3) {
            0 => format!("a*{arr}[a]"),
            1 => format!("{arr}[a] + 0.5*{arr}[a + 1]"),
            _ => format!("{arr}[a]*{arr}[a] - {}", g.literal()),
        };
        rule_defs.push(format!("{name}(a) := {e}"));
        let i = inames.choose(&mut g.rng).unwrap().clone();
        g.rules.push((name, i));
        g.used_rules.push(false);
    }

    let mut body = Vec::new();
    let n_insns = g.rng.gen_range(1..=limits.instructions.max(1));
    for m in 0..n_insns {
        let mut within = inames.clone();
        within.shuffle(&mut g.rng);
        let keep = g.rng.gen_range(1..=dims);
        within.truncate(keep);
        within.sort();
        let depth = g.rng.gen_range(1..=3);
        let rhs = g.expr(depth, &within, true);
        let last = m + 1 == n_insns;
        if !last && g.rng.gen_bool(0.35) {
            let t = format!("t{m}");
            // pin the loops: readers share exactly these
            body.push(format!("<> {t} = {rhs} {{inames={}}}", within.join(":")));
            g.temps.push((t, within));
        } else {
            body.push(format!("o{m}[{}] = {rhs}", within.join(", ")));
        }
    }

    // an unused rule would leave its array without a shape
    let used: Vec<String> = rule_defs.into_iter().zip(&g.used_rules).filter(|(_, u)| **u).map(|(d, _)| d).collect();
    body.splice(0..0, used);

    let mut spec = KernelSpec::new(&format!("rand{seed}"), &[domain.as_str()], &body.join("\n"));
    spec.default_dtype = if g.rng.gen_bool(0.5) { DType::F32 } else { DType::F64 };
    spec.build()
        .unwrap_or_else(|e| panic!("random kernel {seed} is malformed: {e}\n{}", body.join("\n")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_determinism() {
        for seed in 0..20 {
            assert_eq!(random_kernel(seed, Limits::default()), random_kernel(seed, Limits::default()));
        }
        assert_ne!(random_kernel(1, Limits::default()), random_kernel(2, Limits::default()));
    }

    #[test]
    fn kernels_interpret() {
        for seed in 0..200 {
            let k = random_kernel(seed, Limits::default());
            let params = [("n".to_string(), 1 + seed as i64 % 40)].into_iter().collect();
            let env = crate::corpus::random_env(&k, &params, seed).unwrap();
            if let Err(e) = crate::interp::interpret_bounds_checked(&k, &env) {
                panic!("seed {seed}: {e}\n{}", k.dump_ir());
            }
        }
    }
}
