//! Native kernel files: a header of `key value` lines, a `---` separator,
//! then the kernel body.
//!
//! ```text
//! kernel fd
//! domain {[i]: 0<=i<n}
//! dtype u f32
//! assume n mod 16 = 0
//! ---
//! result[i] = u[i+1]-u[i]
//! ```

use super::{Kernel, KernelSpec};
use crate::error::{Error, Result};
use crate::polyset::parse_set;
use crate::types::DType;

fn shift(e: Error, by: usize) -> Error {
    match e {
        Error::Syntax { msg, offset } => Error::Syntax {
            msg,
            offset: offset + by,
        },
        other => other,
    }
}

/// Parses a native kernel file. Syntax error offsets refer to `text`.
pub fn parse_knl(text: &str) -> Result<Kernel> {
    let mut spec = KernelSpec::new("kernel", &[], "");
    let mut offset = 0;
    let mut body_start = None;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let code = line.split('#').next().unwrap_or("").trim();
        if code.is_empty() {
            continue;
        }
        if code == "---" {
            body_start = Some(offset);
            break;
        }
        let (key, value) = code.split_once(char::is_whitespace).unwrap_or((code, ""));
        let value = value.trim();
        let value_at = start + line.find(value).unwrap_or(0);
        let dtype = |s: &str| DType::parse(s).ok_or_else(|| Error::syntax(format!("unknown dtype `{s}`"), value_at));
        match key {
            "kernel" => spec.name = value.to_string(),
            "domain" => {
                parse_set(value).map_err(|e| shift(e, value_at))?;
                spec.domains.push(value.to_string());
            }
            "dtype" => {
                let mut parts = value.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(name), Some(ty), None) => {
                        spec.arg_dtypes.insert(name.to_string(), dtype(ty)?);
                    }
                    _ => return Err(Error::syntax("expected `dtype <name> <type>`", value_at)),
                }
            }
            "default_dtype" => spec.default_dtype = dtype(value)?,
            "assume" => spec.assumptions.push(value.to_string()),
            other => return Err(Error::syntax(format!("unknown header key `{other}`"), start)),
        }
    }
    let body_start = body_start.ok_or_else(|| Error::syntax("missing `---` line before the kernel body", text.len()))?;
    spec.body = text[body_start..].to_string();
    spec.build().map_err(|e| shift(e, body_start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_difference_file() {
        let text = "kernel fd\ndomain {[i]: 0<=i<n}\ndtype u f64\n---\nresult[i] = u[i+1]-u[i]\n";
        let k = parse_knl(text).unwrap();
        assert_eq!(k.name, "fd");
        assert_eq!(k.arg("u").unwrap().dtype, DType::F64);
        assert_eq!(k.arg("result").unwrap().dtype, DType::F32);
    }

    #[test]
    fn body_errors_point_into_the_file() {
        let text = "kernel k\ndomain {[i]: 0<=i<n}\n---\nout[i] = (a[i]\n";
        match parse_knl(text) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(&text[offset..offset + 1], "\n"),
            other => panic!("{other:?}"),
        }
        let bad = "kernel k\ndomain {[i]: 0<=i<}\n---\n";
        match parse_knl(bad) {
            Err(Error::Syntax { offset, .. }) => assert!(offset > 9 && offset < 30),
            other => panic!("{other:?}"),
        }
    }
}
