//! Compiles emitted C with the system toolchain and runs it on an
//! execution environment. Test-harness plumbing only.

use std::fs;
use std::path::Path;
use std::process::Command;

use crate::codegen::{emit, Target};
use crate::error::{Error, Result};
use crate::interp::{ArrayData, ExecutionEnv};
use crate::kernel::Kernel;

const HELPERS: &str = r#"
static void *lf_load(const char *dir, const char *name, size_t bytes)
{
  char path[4096];
  snprintf(path, sizeof path, "%s/%s.bin", dir, name);
  FILE *f = fopen(path, "rb");
  if (!f) { perror(path); exit(3); }
  void *p = malloc(bytes ? bytes : 1);
  if (fread(p, 1, bytes, f) != bytes) { fprintf(stderr, "short read: %s\n", path); exit(3); }
  fclose(f);
  return p;
}

static void lf_store(const char *dir, const char *name, const void *p, size_t bytes)
{
  char path[4096];
  snprintf(path, sizeof path, "%s/%s.out", dir, name);
  FILE *f = fopen(path, "wb");
  if (!f || fwrite(p, 1, bytes, f) != bytes) { perror(path); exit(3); }
  fclose(f);
}
"#;

/// The first working C compiler among `$CC`, `cc`, `gcc`, `clang`.
pub fn c_toolchain() -> Option<String> {
    let candidates = std::env::var("CC").ok().into_iter().chain(["cc", "gcc", "clang"].map(String::from));
    for cc in candidates {
        if Command::new(&cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Some(cc);
        }
    }
    None
}

fn header_len(a: &ArrayData) -> usize {
    8 + 8 * a.shape.len()
}

fn io(e: std::io::Error, what: &Path) -> Error {
    Error::Io(format!("{}: {e}", what.display()))
}

/// A `main` that loads every argument from `<dir>/<name>.bin`, calls the
/// kernel and writes every array argument back to `<dir>/<name>.out`.
fn driver(k: &Kernel, env: &ExecutionEnv) -> Result<String> {
    let mut body = String::from("  const char *dir = argv[1];\n");
    let mut call = Vec::new();
    let mut stores = String::new();
    for a in &k.args {
        let ty = a.dtype.c_name();
        if let Some(data) = env.arrays.get(&a.name) {
            let bytes = data.to_bytes().len() - header_len(data);
            body.push_str(&format!("  {ty} *{0} = lf_load(dir, \"{0}\", {bytes});\n", a.name));
            if a.is_array() {
                call.push(a.name.clone());
                stores.push_str(&format!("  lf_store(dir, \"{0}\", {0}, {bytes});\n", a.name));
            } else {
                call.push(format!("*{}", a.name));
            }
        } else if let Some(v) = env.params.get(&a.name) {
            call.push(v.to_string());
        } else {
            return Err(Error::interp(format!("argument `{}` is not bound", a.name)));
        }
    }
    for p in k.params() {
        if k.arg(&p).is_none() {
            let v = env.params.get(&p).ok_or_else(|| Error::interp(format!("parameter `{p}` is not bound")))?;
            call.push(v.to_string());
        }
    }
    Ok(format!(
        "int main(int argc, char **argv)\n{{\n  if (argc < 2) return 2;\n{body}  {}({});\n{stores}  return 0;\n}}\n",
        k.name,
        call.join(", ")
    ))
}

/// Emits C for `k`, compiles it with `cc` inside `workdir` and runs it on
/// `env`. Returns `env` with every array argument replaced by the result.
pub fn run_emitted_c(cc: &str, k: &Kernel, env: &ExecutionEnv, workdir: &Path) -> Result<ExecutionEnv> {
    let src = format!(
        "#include <stdio.h>\n#include <stdlib.h>\n{}\n{HELPERS}\n{}",
        emit(k, Target::C)?,
        driver(k, env)?
    );
    let c_path = workdir.join("kernel.c");
    fs::write(&c_path, src).map_err(|e| io(e, &c_path))?;
    let exe = workdir.join("kernel");
    // no contraction into fma: the interpreter rounds every operation
    let out = Command::new(cc)
        .args(["-std=c99", "-O1", "-ffp-contract=off", "-o"])
        .arg(&exe)
        .arg(&c_path)
        .arg("-lm")
        .output()
        .map_err(|e| io(e, Path::new(cc)))?;
    if !out.status.success() {
        return Err(Error::Io(format!("{cc} failed:\n{}", String::from_utf8_lossy(&out.stderr))));
    }
    for (name, data) in &env.arrays {
        let path = workdir.join(format!("{name}.bin"));
        fs::write(&path, &data.to_bytes()[header_len(data)..]).map_err(|e| io(e, &path))?;
    }
    let run = Command::new(&exe).arg(workdir).output().map_err(|e| io(e, &exe))?;
    if !run.status.success() {
        return Err(Error::Io(format!("compiled kernel failed:\n{}", String::from_utf8_lossy(&run.stderr))));
    }
    let mut result = env.clone();
    for a in k.args.iter().filter(|a| a.is_array()) {
        let Some(data) = env.arrays.get(&a.name) else { continue };
        let path = workdir.join(format!("{}.out", a.name));
        let raw = fs::read(&path).map_err(|e| io(e, &path))?;
        let mut bytes = data.to_bytes()[..header_len(data)].to_vec();
        bytes.extend_from_slice(&raw);
        result.arrays.insert(a.name.clone(), ArrayData::from_bytes(&bytes)?);
    }
    Ok(result)
}
