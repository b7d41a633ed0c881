//! Kernel-to-kernel transformations. Every function takes a kernel by
//! reference and returns a new, validated kernel.

mod expand;
mod extract;
mod precompute;
mod split;

pub use expand::{expand_all_rules, expand_subst};
pub use precompute::precompute;
pub use extract::{extract_subst, temporary_to_subst, wrap_variable_access};
pub use split::{assume, split_iname, tag_inames, tag_instructions};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::kernel::{InameTag, Kernel};

/// Applies `f` to every expression a kernel evaluates: instruction rhs and
/// lhs indices, rule bodies and implicit rule bindings.
pub(crate) fn map_all_exprs(k: &Kernel, f: &mut dyn FnMut(&Expr) -> Expr) -> Kernel {
    let mut out = k.clone();
    out.instructions = k.instructions.iter().map(|i| i.map_exprs(f)).collect();
    for r in out.rules.values_mut() {
        r.body = f(&r.body);
        for (_, v) in r.implicit.iter_mut() {
            *v = f(v);
        }
    }
    out
}

/// Parses an optional iname tag; `None`/`none`/empty mean "no tag".
pub fn parse_optional_tag(transform: &'static str, tag: Option<&str>) -> Result<Option<InameTag>> {
    match tag {
        None | Some("None") | Some("none") | Some("") => Ok(None),
        Some(t) => InameTag::parse(t)
            .map(Some)
            .ok_or_else(|| Error::transform(transform, format!("unknown iname tag `{t}`"))),
    }
}

/// Splits a comma-separated name list (`"k_inner,i_inner"`).
pub fn name_list(text: &str) -> Vec<String> {
    text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}
