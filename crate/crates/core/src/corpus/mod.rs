//! Curated fixtures (`corpus/<id>/`) and random kernels for property tests.
//!
//! A fixture directory holds `input.f` or `input.knl`, an optional
//! `transforms.txt` applied after any embedded transform blocks, optional
//! `params.txt` (`name = value` lines) used when running it, and the blessed
//! outputs `expected.ir`, `expected.c` and, for kernels with parallel tags,
//! `expected.cl`.

mod harness;
mod random;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codegen::{emit, Target};
use crate::error::{Error, Result};
use crate::fortran::{lower_to_kernel, parse_fortran, run_transform_script, translate, TransformScript};
use crate::interp::{required_len, ArrayData, Buffer, ExecutionEnv};
use crate::kernel::{parse_knl, Kernel};
use crate::types::DType;

pub use harness::{c_toolchain, run_emitted_c};
pub use random::{random_kernel, Limits};

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Fortran(String),
    Native(String),
}

impl Source {
    /// Picks the front-end from the file extension: `.knl` is native,
    /// everything else Fortran.
    pub fn read(path: &Path) -> Result<Source> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(match path.extension().and_then(|e| e.to_str()) {
            Some("knl") => Source::Native(text),
            _ => Source::Fortran(text),
        })
    }

    pub fn text(&self) -> &str {
        match self {
            Source::Fortran(t) | Source::Native(t) => t,
        }
    }

    /// The kernel as written, before any transform.
    pub fn raw_kernel(&self) -> Result<Kernel> {
        match self {
            Source::Fortran(t) => lower_to_kernel(&parse_fortran(t)?),
            Source::Native(t) => parse_knl(t),
        }
    }

    /// The kernel with embedded transform blocks applied.
    pub fn kernel(&self) -> Result<Kernel> {
        match self {
            Source::Fortran(t) => translate(t),
            Source::Native(t) => parse_knl(t),
        }
    }
}

/// Applies a transform script to a single kernel, which it refers to by name.
pub fn apply_script(k: &Kernel, script: &str) -> Result<Kernel> {
    let script = TransformScript::parse(script, 1)?;
    let mut scope = IndexMap::new();
    scope.insert(k.name.clone(), k.clone());
    let mut out = run_transform_script(&scope, &script)?;
    Ok(out.swap_remove(&k.name).expect("kernel stays in scope"))
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub id: String,
    pub dir: PathBuf,
    pub source: Source,
    pub transforms: String,
    pub params: BTreeMap<String, i64>,
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::Io(format!("{}: {e}", path.display()))),
    }
}

fn parse_params(text: &str) -> Result<BTreeMap<String, i64>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let bad = || Error::Io(format!("malformed parameter line `{line}`"));
        let (name, value) = line.split_once('=').ok_or_else(bad)?;
        out.insert(name.trim().to_string(), value.trim().parse().map_err(|_| bad())?);
    }
    Ok(out)
}

/// What a fixture renders to; compared byte-exact against the blessed files.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub ir: String,
    pub c: String,
    pub opencl: Option<String>,
}

impl Fixture {
    pub fn load(dir: &Path) -> Result<Fixture> {
        let id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Io(format!("bad fixture directory {}", dir.display())))?
            .to_string();
        let source = match (dir.join("input.f"), dir.join("input.knl")) {
            (f, _) if f.exists() => Source::read(&f)?,
            (_, n) if n.exists() => Source::read(&n)?,
            _ => return Err(Error::Io(format!("{}: no input.f or input.knl", dir.display()))),
        };
        Ok(Fixture {
            id,
            dir: dir.to_path_buf(),
            source,
            transforms: read_optional(&dir.join("transforms.txt"))?.unwrap_or_default(),
            params: parse_params(&read_optional(&dir.join("params.txt"))?.unwrap_or_default())?,
        })
    }

    pub fn raw_kernel(&self) -> Result<Kernel> {
        self.source.raw_kernel()
    }

    /// Source kernel with embedded transforms, then `transforms.txt`.
    pub fn kernel(&self) -> Result<Kernel> {
        apply_script(&self.source.kernel()?, &self.transforms)
    }

    pub fn render(&self) -> Result<Rendered> {
        let k = self.kernel()?;
        let parallel = k.inames().iter().any(|i| k.is_parallel(i));
        Ok(Rendered {
            ir: k.dump_ir(),
            c: emit(&k, Target::C)?,
            opencl: if parallel { Some(emit(&k, Target::OpenCl)?) } else { None },
        })
    }

    fn expected_files(r: &Rendered) -> Vec<(&'static str, Option<&str>)> {
        vec![("expected.ir", Some(&r.ir)), ("expected.c", Some(&r.c)), ("expected.cl", r.opencl.as_deref())]
    }

    /// Rewrites the expected outputs from the current pipeline.
    pub fn bless(&self) -> Result<()> {
        let r = self.render()?;
        for (name, content) in Self::expected_files(&r) {
            let path = self.dir.join(name);
            match content {
                Some(c) => fs::write(&path, c).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
                None if path.exists() => fs::remove_file(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
                None => {}
            }
        }
        Ok(())
    }

    /// Names of expected files that differ from (or are missing against)
    /// the current rendering.
    pub fn check(&self) -> Result<Vec<String>> {
        let r = self.render()?;
        let mut bad = Vec::new();
        for (name, content) in Self::expected_files(&r) {
            let on_disk = read_optional(&self.dir.join(name))?;
            if on_disk.as_deref() != content {
                bad.push(name.to_string());
            }
        }
        Ok(bad)
    }

    /// Random inputs for every argument (outputs too, so in-place updates
    /// see defined data), with the fixture's parameter values.
    pub fn random_env(&self, k: &Kernel, seed: u64) -> Result<ExecutionEnv> {
        random_env(k, &self.params, seed)
    }
}

/// Directory of the fixtures shipped with this crate.
pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// All fixtures under `dir`, sorted by id.
pub fn load_all(dir: &Path) -> Result<Vec<Fixture>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    dirs.iter().map(|d| Fixture::load(d)).collect()
}

/// Seeded inputs for all arguments of `k`. Integer scalars named like a
/// parameter take the parameter's value; floats are uniform in [-5, 5).
pub fn random_env(k: &Kernel, params: &BTreeMap<String, i64>, seed: u64) -> Result<ExecutionEnv> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = ExecutionEnv::new();
    for (p, v) in params {
        env = env.param(p, *v);
    }
    for a in &k.args {
        if !a.is_array() && params.contains_key(&a.name) {
            continue;
        }
        let shape = a.shape.iter().map(|e| e.eval_map(params)).collect::<Result<Vec<_>>>()?;
        let strides = a.strides.iter().map(|e| e.eval_map(params)).collect::<Result<Vec<_>>>()?;
        let len = if a.is_array() { required_len(&shape, &strides) } else { 1 };
        let data = match a.dtype {
            DType::I32 => Buffer::I32((0..len).map(|_| rng.gen_range(-5..5)).collect()),
            DType::F32 => Buffer::F32((0..len).map(|_| rng.gen_range(-5.0f32..5.0)).collect()),
            DType::F64 => Buffer::F64((0..len).map(|_| rng.gen_range(-5.0f64..5.0)).collect()),
        };
        let shape = shape.iter().map(|&n| n.max(0) as usize).collect();
        env = env.array(&a.name, ArrayData::new(shape, data));
    }
    Ok(env)
}

/// Token stream of source text with numbering suffixes (`_0`, `_12`)
/// dropped, for structural comparison against listings.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() || c == '_' || c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(strip_suffix(&word).to_string());
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if ["<=", ">=", "==", "!=", "++", "&&", "||", ":=", "**"].contains(&two.as_str()) {
                out.push(two);
                i += 2;
            } else {
                out.push(c.to_string());
                i += 1;
            }
        }
    }
    out
}

fn strip_suffix(word: &str) -> &str {
    match word.rfind('_') {
        Some(p) if p > 0 && p + 1 < word.len() && word[p + 1..].bytes().all(|b| b.is_ascii_digit()) => &word[..p],
        _ => word,
    }
}

/// Equal modulo whitespace and numbering suffixes.
pub fn structurally_equal(a: &str, b: &str) -> bool {
    tokens(a) == tokens(b)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_comparison() {
        assert_eq!(tokens("a_acc_0[i] <= -1+n;"), ["a_acc", "[", "i", "]", "<=", "-", "1", "+", "n", ";"]);
        assert!(structurally_equal("for (int i_1 = 0;\n  i_1 <= 2; ++i_1)", "for (int i = 0; i <= 2; ++i)"));
        assert!(!structurally_equal("b = 3.0 * b;", "b = 3 * b;"));
        // the suffix must be all digits and not the whole word
        assert_eq!(tokens("x_y _0 u_1a"), ["x_y", "_0", "u_1a"]);
    }

    #[test]
    fn params_file() {
        let p = parse_params("# sizes\nm = 24\nn=16\n").unwrap();
        assert_eq!(p, [("m".to_string(), 24), ("n".to_string(), 16)].into_iter().collect());
        assert!(parse_params("n 3").is_err());
    }
}
