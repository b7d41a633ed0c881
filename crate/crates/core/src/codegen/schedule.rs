use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::expr::{free_variables, Expr};
use crate::kernel::{InameTag, Kernel, Predicate};
use crate::kernel::build::{instruction_reads, referenced_inames};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchedNode {
    Loop { iname: String, body: Vec<SchedNode> },
    Cond { preds: BTreeSet<Predicate>, body: Vec<SchedNode> },
    Stmt(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schedule {
    pub nodes: Vec<SchedNode>,
}

impl SchedNode {
    fn stmts<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            SchedNode::Stmt(id) => out.push(id),
            SchedNode::Loop { body, .. } | SchedNode::Cond { body, .. } => body.iter().for_each(|n| n.stmts(out)),
        }
    }

    /// Instruction ids in execution order.
    pub fn statements(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.stmts(&mut out);
        out
    }
}

impl Schedule {
    pub fn statements(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.nodes.iter().for_each(|n| n.stmts(&mut out));
        out
    }
}

fn write_nodes(f: &mut fmt::Formatter<'_>, nodes: &[SchedNode], depth: usize) -> fmt::Result {
    for n in nodes {
        let pad = "  ".repeat(depth);
        match n {
            SchedNode::Stmt(id) => writeln!(f, "{pad}{id}")?,
            SchedNode::Loop { iname, body } => {
                writeln!(f, "{pad}for {iname}")?;
                write_nodes(f, body, depth + 1)?;
            }
            SchedNode::Cond { preds, body } => {
                let ps: Vec<String> = preds.iter().map(|p| p.to_string()).collect();
                writeln!(f, "{pad}if {}", ps.join(" && "))?;
                write_nodes(f, body, depth + 1)?;
            }
        }
    }
    Ok(())
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_nodes(f, &self.nodes, 0)
    }
}

fn iname_class(k: &Kernel, i: &str) -> u8 {
    match k.tag_of(i) {
        Some(InameTag::Group(_)) => 0,
        Some(InameTag::Local(_)) => 2,
        _ => 1,
    }
}

/// Global nesting order. Group inames come outermost and local ones
/// innermost. Inside that, an iname shared by a temporary's writer and its
/// reader is placed outside inames only the reader has, so the writer can
/// sit between them. Ties fall back to domain order.
pub fn nest_order(k: &Kernel) -> Vec<String> {
    let inames = k.inames();
    let mut before: BTreeSet<(String, String)> = BTreeSet::new();
    for y in &inames {
        if let Some(node) = k.domains.node_of(y) {
            for p in k.domains.nodes()[node].params() {
                if k.is_iname(p) {
                    before.insert((p.clone(), y.clone()));
                }
            }
        }
    }
    let hard = before.clone();
    for reader in &k.instructions {
        let reads = free_variables(&reader.rhs);
        for dep in &reader.depends_on {
            let Some(w) = k.instruction(dep) else { continue };
            if !k.temporaries.contains_key(w.assignee()) || !reads.contains(w.assignee()) {
                continue;
            }
            for x in reader.within_inames.intersection(&w.within_inames) {
                for y in reader.within_inames.difference(&w.within_inames) {
                    if iname_class(k, x) <= iname_class(k, y) {
                        before.insert((x.clone(), y.clone()));
                    }
                }
            }
        }
    }
    let key = |i: &String| (iname_class(k, i), k.domains.rank(i));
    let topo = |edges: &BTreeSet<(String, String)>| -> Option<Vec<String>> {
        let mut left: Vec<String> = inames.clone();
        let mut out = Vec::new();
        while !left.is_empty() {
            let next = left
                .iter()
                .filter(|y| !edges.iter().any(|(x, z)| z == *y && left.contains(x)))
                .min_by_key(|i| key(i))?
                .clone();
            left.retain(|i| *i != next);
            out.push(next);
        }
        Some(out)
    };
    topo(&before).or_else(|| topo(&hard)).unwrap_or_else(|| {
        let mut v = inames.clone();
        v.sort_by_key(|i| key(i));
        v
    })
}

/// Loop nesting of an instruction, following [`nest_order`].
pub fn loop_nest(k: &Kernel, within: &BTreeSet<String>) -> Vec<String> {
    nest_in(&nest_order(k), within)
}

fn nest_in(order: &[String], within: &BTreeSet<String>) -> Vec<String> {
    order.iter().filter(|i| within.contains(*i)).cloned().collect()
}

struct Scheduler<'a> {
    k: &'a Kernel,
    nests: Vec<Vec<String>>,
    done: Vec<bool>,
    index: BTreeMap<&'a str, usize>,
    /// Loop instance ids enclosing each scheduled instruction, per iname.
    instances: Vec<BTreeMap<String, usize>>,
    next_instance: usize,
}

impl Scheduler<'_> {
    fn ready(&self, i: usize) -> bool {
        !self.done[i]
            && self.k.instructions[i]
                .depends_on
                .iter()
                .all(|d| self.index.get(d.as_str()).is_none_or(|&j| self.done[j]))
    }

    fn inside(&self, i: usize, prefix: &[String]) -> bool {
        self.nests[i].len() >= prefix.len() && self.nests[i][..prefix.len()] == *prefix
    }

    /// Whether opening `i`'s next loop now leaves an instruction that needs
    /// that loop waiting on one that runs outside it.
    fn premature(&self, i: usize, stack: &[String]) -> bool {
        if self.nests[i].len() == stack.len() {
            return false;
        }
        let mut entered = stack.to_vec();
        entered.push(self.nests[i][stack.len()].clone());
        (0..self.nests.len()).any(|j| {
            !self.done[j]
                && self.inside(j, &entered)
                && self.k.instructions[j].depends_on.iter().any(|d| {
                    self.index.get(d.as_str()).is_some_and(|&w| !self.done[w] && !self.inside(w, &entered))
                })
        })
    }

    fn build(&mut self, stack: &[String], open: &BTreeMap<String, usize>) -> Vec<SchedNode> {
        let mut body = Vec::new();
        loop {
            let candidates: Vec<usize> = (0..self.nests.len())
                .filter(|&i| self.ready(i) && self.nests[i].len() >= stack.len() && self.nests[i][..stack.len()] == *stack)
                .collect();
            // entering a loop too early would strand instructions that wait on work outside it
            let Some(&i) = candidates.iter().find(|&&i| !self.premature(i, stack)).or(candidates.first()) else {
                return body;
            };
            if self.nests[i].len() == stack.len() {
                self.done[i] = true;
                self.instances[i] = open.clone();
                body.push(SchedNode::Stmt(self.k.instructions[i].id.clone()));
            } else {
                let iname = self.nests[i][stack.len()].clone();
                let mut inner_stack = stack.to_vec();
                inner_stack.push(iname.clone());
                let mut inner_open = open.clone();
                inner_open.insert(iname.clone(), self.next_instance);
                self.next_instance += 1;
                let inner = self.build(&inner_stack, &inner_open);
                body.push(SchedNode::Loop { iname, body: inner });
            }
        }
    }
}

/// Reduction inames of `e` paired with the variables read inside each one.
fn reduction_reads(e: &Expr) -> Vec<(String, BTreeSet<String>)> {
    let mut out = Vec::new();
    e.visit(&mut |x| {
        if let Expr::Reduce(_, j, body) = x {
            out.push((j.clone(), free_variables(body)));
        }
    });
    out
}

/// Greedy deterministic schedule. Rules must already be expanded.
pub fn schedule(k: &Kernel) -> Result<Schedule> {
    let n = k.instructions.len();
    let mut s = Scheduler {
        k,
        nests: {
            let order = nest_order(k);
            k.instructions.iter().map(|i| nest_in(&order, &i.within_inames)).collect()
        },
        done: vec![false; n],
        index: k.instructions.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect(),
        instances: vec![BTreeMap::new(); n],
        next_instance: 0,
    };
    let nodes = s.build(&[], &BTreeMap::new());
    if s.done.iter().any(|d| !d) {
        let stuck: Vec<&str> = (0..n).filter(|&i| !s.done[i]).map(|i| k.instructions[i].id.as_str()).collect();
        return Err(Error::Schedule(format!(
            "no instruction is ready; cyclic dependencies among {}",
            stuck.join(", ")
        )));
    }
    for (a, insn) in k.instructions.iter().enumerate() {
        let reads = instruction_reads(k, insn)?;
        for dep in &insn.depends_on {
            let Some(&b) = s.index.get(dep.as_str()) else { continue };
            let writer = &k.instructions[b];
            let var = writer.assignee();
            if !k.temporaries.contains_key(var) || !reads.contains(var) {
                continue;
            }
            // a writer that ignores the iname stores the same value in every instance
            let varies = referenced_inames(k, writer)?;
            let indexed = |iname: &str| writer.lhs_indices().iter().any(|ix| free_variables(ix).contains(iname));
            let reds = reduction_reads(&insn.rhs);
            // reduction loops are private to the reader; the writer's value is gone by then
            if let Some((j, _)) = reds.iter().find(|(j, vars)| vars.contains(var) && varies.contains(j) && !indexed(j)) {
                return Err(Error::Schedule(format!(
                    "unschedulable: `{}` reads temporary `{var}` inside a reduction over `{j}`, \
                     but `{dep}` writes one value per `{j}` into the same location",
                    insn.id
                )));
            }
            for (iname, inst) in &s.instances[a] {
                if !indexed(iname) && varies.contains(iname) && s.instances[b].get(iname).is_some_and(|other| other != inst) {
                    return Err(Error::Schedule(format!(
                        "unschedulable: `{}` reads temporary `{var}` written by `{dep}` in the same `{iname}` \
                         iteration, but the two cannot share one `{iname}` loop",
                        insn.id
                    )));
                }
            }
        }
    }
    Ok(Schedule { nodes })
}

fn node_preds(k: &Kernel, n: &SchedNode) -> BTreeSet<Predicate> {
    let ids = n.statements();
    let mut it = ids.iter().map(|id| k.instruction(id).map(|i| i.predicates.clone()).unwrap_or_default());
    let first = it.next().unwrap_or_default();
    it.fold(first, |acc, p| acc.intersection(&p).cloned().collect())
}

fn written_flags(k: &Kernel, nodes: &[SchedNode]) -> BTreeSet<String> {
    nodes
        .iter()
        .flat_map(|n| n.statements())
        .filter_map(|id| k.instruction(id))
        .filter(|i| i.lhs_indices().is_empty())
        .map(|i| i.assignee().to_string())
        .collect()
}

fn group(k: &Kernel, nodes: Vec<SchedNode>, guaranteed: &BTreeSet<Predicate>) -> Vec<SchedNode> {
    let preds: Vec<BTreeSet<Predicate>> = nodes
        .iter()
        .map(|n| node_preds(k, n).difference(guaranteed).cloned().collect())
        .collect();
    let strip = |p: BTreeSet<Predicate>, run: &[SchedNode]| -> BTreeSet<Predicate> {
        let w = written_flags(k, run);
        p.into_iter().filter(|p| !w.contains(&p.flag)).collect()
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let mut common = strip(preds[i].clone(), &nodes[i..=i]);
        if common.is_empty() {
            out.push(match nodes[i].clone() {
                SchedNode::Loop { iname, body } => SchedNode::Loop {
                    iname,
                    body: group(k, body, guaranteed),
                },
                other => other,
            });
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < nodes.len() {
            let next: BTreeSet<Predicate> = common.intersection(&preds[j]).cloned().collect();
            let next = strip(next, &nodes[i..=j]);
            if next.is_empty() {
                break;
            }
            common = next;
            j += 1;
        }
        let inner: BTreeSet<Predicate> = guaranteed.union(&common).cloned().collect();
        out.push(SchedNode::Cond {
            preds: common,
            body: group(k, nodes[i..j].to_vec(), &inner),
        });
        i = j;
    }
    out
}

/// Hoists predicates shared by consecutive statements and loops into
/// conditionals. A flag written inside a run is never hoisted over it.
pub fn group_predicates(k: &Kernel, s: &Schedule) -> Schedule {
    Schedule {
        nodes: group(k, s.nodes.clone(), &BTreeSet::new()),
    }
}

/// Predicates of `id` not already guaranteed by enclosing conditionals.
pub fn residual_predicates(k: &Kernel, id: &str, guaranteed: &BTreeSet<Predicate>) -> Vec<Predicate> {
    k.instruction(id)
        .map(|i| i.predicates.difference(guaranteed).cloned().collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;

    #[test]
    fn disjoint_inames_give_sibling_loops() {
        let k = KernelSpec::new(
            "t",
            &["{[i]: 0<=i<n}", "{[j]: 0<=j<n}"],
            "a[i] = 1 {id=one}\nb[j] = 2 {id=two}",
        )
        .build()
        .unwrap();
        let s = schedule(&k).unwrap();
        assert_eq!(s.to_string(), "for i\n  one\nfor j\n  two\n");
    }

    #[test]
    fn temporary_read_under_reduction_is_unschedulable() {
        let k = KernelSpec::new(
            "grav",
            &["{[i,j]: 0<=i,j<n}"],
            "<> r = x[i] - x[j]\nforce[i] = sum(j, r*r)",
        )
        .build()
        .unwrap();
        let e = schedule(&k).unwrap_err().to_string();
        assert!(e.contains("reduction over `j`"), "{e}");
        // a temporary that does not vary with the reduction iname is fine
        let ok = KernelSpec::new("grav", &["{[i,j]: 0<=i,j<n}"], "<> r = 2*x[i]\nforce[i] = sum(j, r*x[j])")
            .build()
            .unwrap();
        assert!(schedule(&ok).is_ok());
    }

    #[test]
    fn dependency_cycle_is_reported() {
        // validation rejects cycles; build one behind its back
        let mut k = KernelSpec::new("t", &["{[i]: 0<=i<n}"], "a[i] = b[i] {id=one}\nb[i] = 2 {id=two}")
            .build()
            .unwrap();
        k.instructions[1].depends_on.insert("one".into());
        let e = schedule(&k).unwrap_err().to_string();
        assert!(e.contains("one") && e.contains("two"), "{e}");
    }

    #[test]
    fn split_loop_instances_are_unschedulable() {
        // `late` needs `mid`, which needs the whole `first` i-loop, yet `late`
        // reads the scalar `t` of its own i iteration.
        let k = KernelSpec::new(
            "t",
            &["{[i,j]: 0<=i,j<n}"],
            "<> t = i {id=first}\ns[j] = t {id=mid, dep=first}\nc[i] = t + s[n-1] {id=late, dep=first:mid}",
        )
        .build()
        .unwrap();
        let e = schedule(&k).unwrap_err().to_string();
        assert!(e.contains("unschedulable") && e.contains("late"), "{e}");
    }
}
