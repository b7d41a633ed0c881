use std::fmt::Write;

use super::{ArgKind, Kernel};
use crate::polyset::AffineExpr;

fn join_affine(xs: &[AffineExpr]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

pub(super) fn dump(k: &Kernel) -> String {
    let mut s = String::new();
    writeln!(s, "KERNEL {}", k.name).unwrap();

    s.push_str("DOMAINS\n");
    for (idx, node) in k.domains.nodes().iter().enumerate() {
        match k.domains.parent(idx) {
            Some(p) => writeln!(s, "  {idx} (in {p}): {node}").unwrap(),
            None => writeln!(s, "  {idx}: {node}").unwrap(),
        }
    }

    s.push_str("ASSUMPTIONS\n");
    for line in k.assumptions.render_lines() {
        writeln!(s, "  {line}").unwrap();
    }

    s.push_str("INAME TAGS\n");
    for iname in k.inames() {
        if let Some(t) = k.tag_of(&iname) {
            writeln!(s, "  {iname}: {t}").unwrap();
        }
    }

    s.push_str("ARGS\n");
    for a in &k.args {
        let out = if a.is_output { " output" } else { "" };
        match a.kind {
            ArgKind::Scalar => writeln!(s, "  {}: {} scalar{out}", a.name, a.dtype).unwrap(),
            ArgKind::GlobalArray => writeln!(
                s,
                "  {}: {} array[{}] strides[{}]{out}",
                a.name,
                a.dtype,
                join_affine(&a.shape),
                join_affine(&a.strides)
            )
            .unwrap(),
        }
    }

    s.push_str("TEMPORARIES\n");
    for t in k.temporaries.values() {
        write!(s, "  {}: {} {}", t.name, t.dtype, t.address_space).unwrap();
        if t.shape.is_empty() {
            s.push_str(" scalar");
        } else {
            write!(s, " [{}]", join_affine(&t.shape)).unwrap();
        }
        if t.base_offsets.iter().any(|b| *b != AffineExpr::zero()) {
            write!(s, " base[{}]", join_affine(&t.base_offsets)).unwrap();
        }
        s.push('\n');
    }

    s.push_str("RULES\n");
    for r in k.rules.values() {
        writeln!(s, "  {}", r.render()).unwrap();
        if !r.implicit.is_empty() {
            let binds: Vec<String> = r.implicit.iter().map(|(n, e)| format!("{n} = {e}")).collect();
            writeln!(s, "    where {}", binds.join(", ")).unwrap();
        }
    }

    s.push_str("INSTRUCTIONS\n");
    for insn in &k.instructions {
        writeln!(s, "  {} = {}", insn.lhs, insn.rhs).unwrap();
        let mut meta = vec![format!("id={}", insn.id)];
        let join = |xs: Vec<String>| xs.join(":");
        if !insn.within_inames.is_empty() {
            // domain order rather than alphabetical
            let order = k.inames();
            let mut w: Vec<String> = insn.within_inames.iter().cloned().collect();
            w.sort_by_key(|i| order.iter().position(|o| o == i));
            meta.push(format!("inames={}", join(w)));
        }
        if !insn.depends_on.is_empty() {
            meta.push(format!("dep={}", join(insn.depends_on.iter().cloned().collect())));
        }
        if !insn.tags.is_empty() {
            meta.push(format!("tags={}", join(insn.tags.iter().cloned().collect())));
        }
        if !insn.predicates.is_empty() {
            meta.push(format!("if={}", join(insn.predicates.iter().map(|p| p.to_string()).collect())));
        }
        writeln!(s, "    {{{}}}", meta.join(", ")).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use crate::kernel::make_kernel;

    #[test]
    fn dump_is_deterministic_and_complete() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "f(x) := 2*x\nout[i] = f(a[i])", "double").unwrap();
        let d = k.dump_ir();
        assert_eq!(d, k.clone().dump_ir());
        let expected = "\
KERNEL double
DOMAINS
  0: [n] -> { [i] : i <= -1 + n and 0 <= i }
ASSUMPTIONS
INAME TAGS
ARGS
  out: f32 array[n] strides[1] output
  a: f32 array[n] strides[1]
  n: i32 scalar
TEMPORARIES
RULES
  f(x) := 2*x
INSTRUCTIONS
  out[i] = f(a[i])
    {id=insn_0, inames=i}
";
        assert_eq!(d, expected);
    }
}
