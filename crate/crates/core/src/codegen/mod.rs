//! Scheduling and C / OpenCL emission.

mod c;
mod schedule;
mod typed;

pub use c::{emit, float_literal, Target};
pub use schedule::{group_predicates, loop_nest, residual_predicates, schedule, SchedNode, Schedule};
pub use typed::{typed, typed_assignment, TExpr};

use crate::error::Result;
use crate::kernel::Kernel;
use crate::polyset::{bounds_for, IndexBounds};
use crate::transforms::expand_all_rules;

/// Bounds of `iname` inside loops over `stack`.
pub fn loop_bounds(k: &Kernel, stack: &[String], iname: &str) -> Result<IndexBounds> {
    let inames = stack.iter().cloned().chain([iname.to_string()]).collect();
    let set = k.domains.domain_of(&inames)?;
    bounds_for(&set, iname, stack, &k.assumptions)
}

/// Expands every rule and computes the predicate-grouped schedule.
pub fn prepare(k: &Kernel) -> Result<(Kernel, Schedule)> {
    let k = expand_all_rules(k)?;
    k.validate()?;
    let s = schedule(&k)?;
    let s = group_predicates(&k, &s);
    Ok((k, s))
}
