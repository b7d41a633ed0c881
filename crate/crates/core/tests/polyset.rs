mod common;

use common::{bounds_report, split_bijection_failures, RandomSet};
use loopforge::polyset::parse_set;
use proptest::prelude::*;

#[test]
fn split_is_a_bijection() {
    let bad = split_bijection_failures(0..500);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn bounds_never_exclude_points() {
    let rep = bounds_report(0..500);
    assert!(rep.unsound.is_empty(), "{:#?}", rep.unsound);
}

#[test]
fn box_bounds_are_exact() {
    // without coupling constraints the rational projection is exact
    for seed in 0..200 {
        let mut r = RandomSet::generate(seed);
        r.extra.clear();
        let seed_rep = bounds_report_for(&r);
        assert!(seed_rep, "seed {seed}: {}", r.text());
    }
}

fn bounds_report_for(r: &RandomSet) -> bool {
    use loopforge::polyset::{bounds_for, Assumptions};
    let s = parse_set(&r.text()).unwrap();
    r.dims.iter().enumerate().all(|(d, x)| {
        let b = bounds_for(&s, x, &[], &Assumptions::new()).unwrap();
        b.eval(&|_| Some(0)) == Some(r.bbox[d])
    })
}

proptest! {
    #[test]
    fn render_parse_fixpoint(seed in 0u64..10_000) {
        let r = RandomSet::generate(seed);
        let once = parse_set(&r.text()).unwrap().render();
        let twice = parse_set(&once).unwrap().render();
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn evaluated_bounds_are_tight() {
    let rep = bounds_report(0..500);
    assert!(rep.loose.is_empty(), "{:#?}", rep.loose);
}
