use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loopforge::interp::{ArrayData, Buffer};

fn loopforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopforge"))
        .args(args)
        .env("LOOPFORGE_COLOR", "0")
        .output()
        .expect("binary runs")
}

fn fixture(id: &str, file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(id).join(file).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn translate_to_opencl() {
    let o = loopforge(&["translate", &fixture("fill", "input.f"), "--target", "opencl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cl = stdout(&o);
    assert!(cl.contains("__kernel"));
    assert!(cl.contains("get_group_id(0)"));
    assert_eq!(cl, std::fs::read_to_string(fixture("fill", "expected.cl")).unwrap());
}

#[test]
fn translate_is_byte_stable() {
    let args = ["translate", &fixture("dgemm", "input.f") as &str];
    let (a, b) = (loopforge(&args), loopforge(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn dump_raw_ir() {
    let o = loopforge(&["dump-ir", &fixture("cond", "input.f"), "--stage", "raw"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ir = stdout(&o);
    assert!(ir.starts_with("KERNEL cond"));
    assert!(ir.contains("loopy_cond0: i32 private scalar"));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let u: Vec<f32> = (0..33).map(|i| (i * i) as f32).collect();
    let inp: PathBuf = dir.path().join("u.bin");
    ArrayData::f32(vec![33], u.clone()).write_file(&inp).unwrap();
    let out = dir.path().join("r.bin");
    let o = loopforge(&[
        "run",
        &fixture("fd", "input.knl"),
        "--transforms",
        &fixture("fd", "transforms.txt"),
        "--param",
        "n=32",
        "--in",
        &format!("u={}", inp.display()),
        "--out",
        &format!("result={}", out.display()),
        "--bounds-check",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = ArrayData::read_file(&out).unwrap();
    assert_eq!(r.shape, [32]);
    let Buffer::F32(v) = r.data else { panic!("f32 expected") };
    assert!(v.iter().enumerate().all(|(i, x)| *x == u[i + 1] - u[i]));
}

#[test]
fn violated_assumption_is_a_user_error() {
    let o = loopforge(&[
        "run",
        &fixture("fd", "input.knl"),
        "--transforms",
        &fixture("fd", "transforms.txt"),
        "--param",
        "n=30",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error:"));
}

#[test]
fn restricted_construct_points_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("probe.f");
    std::fs::write(&f, "subroutine p(x, n)\n  real*8 x(n)\n  integer n, i\n  do i = 1, n\n    exit\n  end do\nend\n").unwrap();
    let o = loopforge(&["translate", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("probe.f:5:5: error: unsupported Fortran construct `EXIT`"), "{err}");
    assert!(err.contains("    exit\n"), "{err}");
    assert!(err.contains('^'), "{err}");
}

#[test]
fn syntax_error_in_native_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.knl");
    std::fs::write(&f, "kernel bad\ndomain {[i]: 0<=i<n}\n---\nout[i] = a[i] +* 2\n").unwrap();
    let o = loopforge(&["dump-ir", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.knl:4:"), "{}", stderr(&o));
}

#[test]
fn missing_file_and_usage_errors() {
    let o = loopforge(&["translate", "/nonexistent/k.f"]);
    assert_eq!(o.status.code(), Some(1));
    let o = loopforge(&["frobnicate"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn check_and_corpus_pass() {
    let o = loopforge(&["check", &fixture("cond", "input.f")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = loopforge(&["corpus"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
}
