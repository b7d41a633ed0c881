//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Runs without the libtest harness so every line shows.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use loopforge::codegen::{emit, Target};
use loopforge::corpus::{
    c_toolchain, corpus_dir, load_all, random_env, random_kernel, run_emitted_c, tokens, Fixture, Limits,
};
use loopforge::fortran::translate;
use loopforge::interp::{interpret, ArrayData, Buffer, ExecutionEnv};
use loopforge::kernel::parse_knl;
use loopforge::matching::parse_match;
use loopforge::transforms::expand_subst;
use loopforge::Error;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Outcome = Result<Verdict, String>;

fn fixture(id: &str) -> Fixture {
    Fixture::load(&corpus_dir().join(id)).unwrap_or_else(|e| panic!("fixture {id}: {e}"))
}

fn within(limit: Duration, took: Duration, what: &str) -> Result<(), String> {
    if took > limit {
        return Err(format!("{what} took {took:?}, limit {limit:?}"));
    }
    Ok(())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const COND_LISTING: &str = "
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
  }";

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

fn conditional() -> Outcome {
    let start = Instant::now();
    let f = fixture("cond");
    let c = emit(&f.kernel().map_err(|e| e.to_string())?, Target::C).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure(contains_run(&tokens(&c), &tokens(COND_LISTING)), || format!("listing mismatch:\n{c}"))?;
    ensure(c.matches("loopy_cond0 = a >= 3;").count() == 1, || "flag assignment".into())?;
    ensure(c.matches("if (loopy_cond0)").count() == 1, || "one positive block".into())?;
    ensure(c.matches("if (!loopy_cond0)").count() == 1, || "one negative block".into())?;
    within(Duration::from_secs(1), took, "lowering and codegen")?;
    Ok(Verdict::Pass(format!("listing matches, {took:?}")))
}

fn ir_lines(ir: &str) -> Vec<String> {
    ir.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ")).collect()
}

fn bsquare() -> Outcome {
    let ir = fixture("bsquare").kernel().map_err(|e| e.to_string())?.dump_ir();
    let lines = ir_lines(&ir);
    for want in ["bsquare(alpha) := alpha*b[i_0]**2", "a[i] = bsquare(23) + bsquare(25)"] {
        ensure(lines.iter().any(|l| *l == want), || format!("missing `{want}` in\n{ir}"))?;
    }
    let rules = lines.iter().filter(|l| l.contains(":=")).count();
    ensure(rules == 1, || format!("expected one rule, found {rules}"))?;
    Ok(Verdict::Pass("rule and rewritten instruction present".into()))
}

const FGH: &str = "kernel fgh
domain {[i]: 0<=i<n}
default_dtype f64
---
f(x) := x*a[x]
g(x) := 12 + f(x)
h(x) := 1 + g(x) + 20*g$three(x)

a[i] = h$one(i) * h$two(i)
";

fn targeted_expansion() -> Outcome {
    let k = parse_knl(FGH).map_err(|e| e.to_string())?;
    let m = parse_match("g$three < h$two").map_err(|e| e.to_string())?;
    let t = expand_subst(&k, &m).map_err(|e| e.to_string())?;
    let h0 = t.rules.get("h_0").ok_or("no rule `h_0`")?;
    ensure(h0.body.to_string() == "1 + g(x) + 20*(12 + f(x))", || format!("h_0 body `{}`", h0.body))?;
    ensure(t.rules["h"] == k.rules["h"], || "original `h` changed".into())?;
    ensure(["f", "g"].iter().all(|r| t.rules[*r] == k.rules[*r]), || "f or g changed".into())?;
    let insn = t.instructions[0].rhs.to_string();
    ensure(insn == "h$one(i)*h_0$two(i)", || format!("instruction reads `{insn}`"))?;
    Ok(Verdict::Pass("h_0 created, h untouched".into()))
}

fn forward_difference() -> Outcome {
    let k = fixture("fd").kernel().map_err(|e| e.to_string())?;
    let c = emit(&k, Target::C).map_err(|e| e.to_string())?;
    for want in ["u_acc_0[17]", "j <= 16", "u_acc_0[1 + i_inner]", "u_acc_0[i_inner]"] {
        ensure(c.contains(want), || format!("missing `{want}` in\n{c}"))?;
    }
    let n = 48;
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let u: Vec<f32> = (0..=n).map(|_| rng.gen_range(-10.0f32..10.0)).collect();
    let env = ExecutionEnv::new()
        .param("n", n as i64)
        .array("u", ArrayData::f32(vec![n + 1], u.clone()))
        .array("result", ArrayData::f32(vec![n], vec![0.0; n]));
    let out = interpret(&k, &env).map_err(|e| e.to_string())?;
    let Buffer::F32(got) = &out.arrays["result"].data else { return Err("result is not f32".into()) };
    let want: Vec<f32> = (0..n).map(|i| u[i + 1] - u[i]).collect();
    let same = got.len() == n && got.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same, || format!("interpreted {got:?}\nexpected {want:?}"))?;
    Ok(Verdict::Pass("footprint 17, bitwise equal at n=48".into()))
}

fn dgemm() -> Outcome {
    let start = Instant::now();
    let f = fixture("dgemm");
    let (m, n, l) = (24usize, 16usize, 32usize);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fill = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    // column-major, as declared in Fortran
    let (a, b, c0) = (fill(m * l), fill(l * n), fill(m * n));
    let alpha = 1.75;
    let mut c = c0.clone();
    for j in 0..n {
        for k in 0..l {
            for i in 0..m {
                c[i + m * j] = c[i + m * j] + alpha * b[k + l * j] * a[i + m * k];
            }
        }
    }
    let env = ExecutionEnv::new()
        .param("m", m as i64)
        .param("n", n as i64)
        .param("l", l as i64)
        .array("alpha", ArrayData::scalar_f64(alpha))
        .array("a", ArrayData::f64(vec![m, l], a))
        .array("b", ArrayData::f64(vec![l, n], b))
        .array("c", ArrayData::f64(vec![m, n], c0));
    let result = |k: &loopforge::kernel::Kernel| -> Result<Vec<f64>, String> {
        let out = interpret(k, &env).map_err(|e| e.to_string())?;
        match &out.arrays["c"].data {
            Buffer::F64(v) => Ok(v.clone()),
            _ => Err("c is not f64".into()),
        }
    };
    let raw = result(&f.raw_kernel().map_err(|e| e.to_string())?)?;
    ensure(raw.iter().zip(&c).all(|(x, y)| x.to_bits() == y.to_bits()), || "untransformed kernel differs".into())?;
    let got = result(&f.kernel().map_err(|e| e.to_string())?)?;
    let worst = got.iter().zip(&c).map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    ensure(worst <= 1e-12, || format!("relative error {worst:e}"))?;
    let took = start.elapsed();
    within(Duration::from_secs(5), took, "dgemm")?;
    Ok(Verdict::Pass(format!("raw exact, transformed rel err {worst:.1e}, {took:?}")))
}

fn preservation() -> Outcome {
    let start = Instant::now();
    let (mut applied, mut skipped) = (0, 0);
    let mut failures = Vec::new();
    for seed in 0..200u64 {
        let k = random_kernel(seed, Limits::default());
        let mut params = BTreeMap::new();
        if k.params().iter().any(|p| p == "n") {
            params.insert("n".to_string(), 1 + (seed % 40) as i64);
        }
        let env = random_env(&k, &params, seed).map_err(|e| e.to_string())?;
        let base = interpret(&k, &env).map_err(|e| format!("seed {seed}: {e}"))?;
        for (label, t) in common::transform_catalog(&k, seed) {
            match t {
                Err(e) if common::not_applicable(&e) => skipped += 1,
                Err(e) => failures.push(format!("seed {seed} {label}: {e}")),
                Ok(t) => {
                    applied += 1;
                    match interpret(&t, &env) {
                        Ok(out) => {
                            let d = common::differing_outputs(&k, &base, &out);
                            if !d.is_empty() {
                                failures.push(format!("seed {seed} {label}: {d:?} differ"));
                            }
                        }
                        Err(e) => failures.push(format!("seed {seed} {label}: {e}")),
                    }
                }
            }
        }
    }
    let took = start.elapsed();
    if !failures.is_empty() {
        return Ok(Verdict::Fail(format!("{} of {applied}: {}", failures.len(), failures[..failures.len().min(5)].join("; "))));
    }
    within(Duration::from_secs(60), took, "preservation")?;
    Ok(Verdict::Pass(format!("{applied} transformed kernels equal, {skipped} not applicable, {took:?}")))
}

fn polyset_oracles() -> Outcome {
    let start = Instant::now();
    let split = common::split_bijection_failures(0..500);
    let rep = common::bounds_report(0..500);
    let took = start.elapsed();
    ensure(split.is_empty(), || format!("split: {:?}", &split[..split.len().min(3)]))?;
    ensure(rep.unsound.is_empty(), || format!("unsound: {:?}", &rep.unsound[..rep.unsound.len().min(3)]))?;
    ensure(rep.loose.is_empty(), || format!("loose: {:?}", &rep.loose[..rep.loose.len().min(3)]))?;
    within(Duration::from_secs(30), took, "polyset oracles")?;
    Ok(Verdict::Pass(format!("500 sets bijective and tight, {took:?}")))
}

fn emitted_c() -> Outcome {
    let Some(cc) = c_toolchain() else { return Ok(Verdict::Skip("no C toolchain".into())) };
    let fixtures = load_all(&corpus_dir()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    for f in &fixtures {
        let k = f.kernel().map_err(|e| format!("{}: {e}", f.id))?;
        for seed in 0..10 {
            let env = f.random_env(&k, seed).map_err(|e| e.to_string())?;
            let want = interpret(&k, &env).map_err(|e| format!("{}: {e}", f.id))?;
            let work = dir.path().join(format!("{}_{seed}", f.id));
            std::fs::create_dir_all(&work).map_err(|e| e.to_string())?;
            let got = run_emitted_c(&cc, &k, &env, &work).map_err(|e| format!("{}: {e}", f.id))?;
            for (name, a) in &want.arrays {
                let same = got.arrays.get(name).is_some_and(|b| b.data.bitwise_eq(&a.data));
                ensure(same, || format!("{} seed {seed}: `{name}` differs", f.id))?;
            }
            runs += 1;
        }
    }
    Ok(Verdict::Pass(format!("{runs} compiled runs over {} fixtures agree ({cc})", fixtures.len())))
}

fn probe(body: &str) -> String {
    format!("subroutine probe(x, n)\n  implicit none\n  real*8 x(n)\n  integer n, i\n  do i = 1, n\n    x(i) = 1\n{body}\n  end do\nend\n")
}

fn restrictions() -> Outcome {
    let cases = [
        ("EXIT", "    exit"),
        ("CYCLE", "    cycle"),
        ("RETURN", "    return"),
        ("ENTRY", "    entry other(x, n)"),
        ("CALL", "    call helper(x)"),
        ("COMMON", "    common /blk/ i"),
        ("SAVE", "    save"),
        ("READ", "    read(*,*) x(i)"),
        ("WRITE", "    write(*,*) x(i)"),
        ("PRINT", "    print *, x(i)"),
    ];
    for (construct, line) in cases {
        let src = probe(line);
        let r = catch_unwind(AssertUnwindSafe(|| translate(&src))).map_err(|_| format!("{construct}: panicked"))?;
        match r {
            Err(Error::Restricted { construct: c, span, .. }) if c == construct => {
                ensure(span.line == 7, || format!("{construct}: reported at line {}", span.line))?;
            }
            Err(e) => return Err(format!("{construct}: untargeted error `{e}`")),
            Ok(_) => return Err(format!("{construct}: accepted")),
        }
    }
    Ok(Verdict::Pass(format!("{} constructs rejected by name", cases.len())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("conditional lowering", conditional),
        ("extract_subst", bsquare),
        ("targeted expansion", targeted_expansion),
        ("forward differencing", forward_difference),
        ("dgemm", dgemm),
        ("transform preservation", preservation),
        ("polyset oracles", polyset_oracles),
        ("emitted C oracle", emitted_c),
        ("restriction diagnostics", restrictions),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = match catch_unwind(run) {
            Ok(Ok(v)) => v,
            Ok(Err(msg)) => Verdict::Fail(msg),
            Err(_) => Verdict::Fail("panicked".into()),
        };
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Skip(d) => ("SKIP", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
