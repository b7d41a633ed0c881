use std::collections::BTreeMap;

use super::{map_all_exprs, parse_optional_tag};
use crate::error::{Error, Result};
use crate::expr::{reduction_inames, substitute, Expr};
use crate::kernel::{InameTag, Kernel};
use crate::matching::MatchExpr;
use crate::polyset::AffineExpr;

const SPLIT: &str = "split_iname";

/// Strip-mines `iname` into `<iname>_outer*factor + <iname>_inner`.
pub fn split_iname(
    k: &Kernel,
    iname: &str,
    factor: i64,
    outer_tag: Option<&str>,
    inner_tag: Option<&str>,
) -> Result<Kernel> {
    let node = k
        .domains
        .node_of(iname)
        .ok_or_else(|| Error::transform(SPLIT, format!("unknown iname `{iname}`")))?;
    if factor < 1 {
        return Err(Error::transform(SPLIT, format!("factor must be positive, got {factor}")));
    }
    if k.is_parallel(iname) {
        return Err(Error::transform(SPLIT, format!("iname `{iname}` is already tagged parallel")));
    }
    let outer_tag = parse_optional_tag(SPLIT, outer_tag)?;
    let inner_tag = parse_optional_tag(SPLIT, inner_tag)?;
    let reduces = k
        .instructions
        .iter()
        .map(|i| &i.rhs)
        .chain(k.rules.values().map(|r| &r.body))
        .any(|e| reduction_inames(e).contains(iname));
    if reduces {
        // a nested reduction would re-associate the accumulation
        return Err(Error::transform(SPLIT, format!("cannot split reduction iname `{iname}`")));
    }

    let outer = k.fresh_name(&format!("{iname}_outer"));
    let inner = k.fresh_name(&format!("{iname}_inner"));
    let repl = AffineExpr::term(&outer, factor) + AffineExpr::var(&inner);

    let bindings: BTreeMap<String, Expr> = [(iname.to_string(), Expr::from_affine(&repl))].into();
    let mut out = map_all_exprs(k, &mut |e| substitute(e, &bindings).canonicalize_indices());

    let mut domains = k.domains.clone();
    let split = domains.nodes()[node].split_dim(iname, factor, &outer, &inner)?;
    domains.replace_node(node, split)?;
    for idx in 0..domains.nodes().len() {
        let n = &domains.nodes()[idx];
        if n.params().iter().any(|p| p == iname) {
            let updated = n.substitute_param(iname, &repl)?;
            domains.replace_node(idx, updated)?;
        }
    }
    out.domains = domains;

    for insn in out.instructions.iter_mut() {
        if insn.within_inames.remove(iname) {
            insn.within_inames.insert(outer.clone());
            insn.within_inames.insert(inner.clone());
        }
    }
    for t in out.temporaries.values_mut() {
        for b in t.base_offsets.iter_mut() {
            *b = b.substitute(iname, &repl);
        }
    }
    out.iname_tags.remove(iname);
    if let Some(t) = outer_tag {
        out.iname_tags.insert(outer, t);
    }
    if let Some(t) = inner_tag {
        out.iname_tags.insert(inner, t);
    }
    out.validate()?;
    Ok(out)
}

/// Adds an assumption about parameters (`n mod 16 = 0`, `n >= 1`).
pub fn assume(k: &Kernel, text: &str) -> Result<Kernel> {
    let mut out = k.clone();
    out.assumptions
        .add_text(text, &|v| k.is_iname(v))
        .map_err(|e| Error::transform("assume", e.to_string()))?;
    Ok(out)
}

/// Adds `tag` to every instruction matched by `m`.
pub fn tag_instructions(k: &Kernel, m: &MatchExpr, tag: &str) -> Result<Kernel> {
    let mut out = k.clone();
    let mut count = 0;
    for insn in out.instructions.iter_mut() {
        if m.matches_instruction(&insn.id, &insn.tags) {
            insn.tags.insert(tag.to_string());
            count += 1;
        }
    }
    if count == 0 {
        log::warn!("tag_instructions: `{m}` matched no instruction");
    }
    Ok(out)
}

/// Applies `iname:tag` pairs (`"i_outer:g.0, i_inner:l.0"`).
pub fn tag_inames(k: &Kernel, pairs: &str) -> Result<Kernel> {
    let mut out = k.clone();
    for pair in super::name_list(pairs) {
        let (iname, tag) = pair
            .split_once(':')
            .ok_or_else(|| Error::transform("tag_inames", format!("expected `iname:tag`, got `{pair}`")))?;
        let iname = iname.trim();
        if !k.is_iname(iname) {
            return Err(Error::transform("tag_inames", format!("unknown iname `{iname}`")));
        }
        match parse_optional_tag("tag_inames", Some(tag.trim()))? {
            Some(InameTag::Group(_) | InameTag::Local(_)) if has_reduction_over(k, iname) => {
                return Err(Error::transform("tag_inames", format!("reduction iname `{iname}` cannot be parallel")));
            }
            Some(t) => {
                out.iname_tags.insert(iname.to_string(), t);
            }
            None => {
                out.iname_tags.remove(iname);
            }
        }
    }
    out.validate()?;
    Ok(out)
}

fn has_reduction_over(k: &Kernel, iname: &str) -> bool {
    k.instructions
        .iter()
        .map(|i| &i.rhs)
        .chain(k.rules.values().map(|r| &r.body))
        .any(|e| reduction_inames(e).contains(iname))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_kernel;
    use crate::matching::parse_match;

    #[test]
    fn split_forward_difference() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "result[i] = u[i+1]-u[i]", "fd").unwrap();
        let s = split_iname(&k, "i", 16, None, None).unwrap();
        assert_eq!(s.inames(), ["i_outer", "i_inner"]);
        let insn = &s.instructions[0];
        assert_eq!(insn.lhs.to_string(), "result[i_inner + i_outer*16]");
        assert_eq!(insn.rhs.to_string(), "u[1 + i_inner + i_outer*16] - u[i_inner + i_outer*16]");
        assert_eq!(insn.within_inames.len(), 2);
    }

    #[test]
    fn split_errors_and_tags() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "out[i] = a", "fill").unwrap();
        assert!(split_iname(&k, "q", 4, None, None).is_err());
        assert!(split_iname(&k, "i", 4, Some("g.9"), None).is_err());
        let s = split_iname(&k, "i", 128, Some("g.0"), Some("l.0")).unwrap();
        assert_eq!(s.tag_of("i_outer"), Some(InameTag::Group(0)));
        assert_eq!(s.tag_of("i_inner"), Some(InameTag::Local(0)));
        assert!(split_iname(&s, "i_inner", 2, None, None).is_err());
        let r = make_kernel(&["{[i,j]: 0<=i,j<n}"], "out[i] = sum(j, a[i,j])", "r").unwrap();
        assert!(split_iname(&r, "j", 2, None, None).is_err());
    }

    #[test]
    fn split_updates_child_domains() {
        let k = make_kernel(&["{[i]: 0<=i<n}", "{[j]: 0<=j<=i}"], "out[i,j] = 1", "tri").unwrap();
        let s = split_iname(&k, "i", 4, None, None).unwrap();
        assert!(s.domains.nodes()[1].params().contains(&"i_outer".to_string()));
    }

    #[test]
    fn assumptions_and_tagging() {
        let k = make_kernel(&["{[i]: 0<=i<n}"], "out[i] = a {id=w, tags=x}", "fill").unwrap();
        assert!(assume(&k, "n mod 16 = 0").is_ok());
        assert!(assume(&k, "i >= 0").is_err());
        let t = tag_instructions(&k, &parse_match("w").unwrap(), "input").unwrap();
        assert!(t.instructions[0].tags.contains("input"));
        let t = tag_instructions(&k, &parse_match("*$nope").unwrap(), "input").unwrap();
        assert!(!t.instructions[0].tags.contains("input"));
        let t = tag_inames(&k, "i:unroll").unwrap();
        assert_eq!(t.tag_of("i"), Some(InameTag::Unroll));
    }
}
