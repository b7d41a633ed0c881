use loopforge::corpus::{corpus_dir, load_all, random_kernel, Limits};
use loopforge::interp::interpret_bounds_checked;

#[test]
fn fixtures_match_blessed_outputs() {
    let fixtures = load_all(&corpus_dir()).unwrap();
    assert!(fixtures.len() >= 9);
    for f in &fixtures {
        let stale = f.check().unwrap();
        assert!(stale.is_empty(), "{}: {stale:?}", f.id);
    }
}

#[test]
fn fixtures_interpret_in_bounds() {
    for f in load_all(&corpus_dir()).unwrap() {
        let k = f.kernel().unwrap();
        let env = f.random_env(&k, 3).unwrap();
        interpret_bounds_checked(&k, &env).unwrap_or_else(|e| panic!("{}: {e}", f.id));
    }
}

#[test]
fn random_kernels_validate() {
    for seed in 0..50 {
        random_kernel(seed, Limits::default()).validate().unwrap();
    }
}
