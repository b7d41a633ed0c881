//! Front-end for a Fortran 77 subset with embedded `!$loopy` pragmas.

mod lower;
mod parse;
mod script;

pub use lower::lower_to_kernel;
pub use parse::parse_fortran;
pub use script::{run_transform_script, ScriptArg, ScriptStmt, ScriptValue, TransformScript};

use indexmap::IndexMap;

use crate::error::{Result, Span};
use crate::expr::Expr;
use crate::kernel::Kernel;
use crate::types::DType;

/// A declared variable. `dims` holds `(lower, upper)` bounds in Fortran
/// terms; empty for scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Decl {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<(Expr, Expr)>,
    pub span: Span,
}

/// Statements keep Fortran-level expressions: 1-based subscripts, and array
/// references and function calls both parse as `Expr::Call`.
#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Assign {
        lhs: Expr,
        rhs: Expr,
        tags: Vec<String>,
        span: Span,
    },
    Do {
        var: String,
        lo: Expr,
        hi: Expr,
        body: Vec<Stmt>,
        span: Span,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
        span: Span,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PragmaKind {
    Transform,
    Tagged(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pragma {
    pub kind: PragmaKind,
    /// Payload with the comment markers stripped (transform blocks only).
    pub text: String,
    /// Line of the `begin` marker.
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FortranUnit {
    pub name: String,
    pub args: Vec<String>,
    pub decls: IndexMap<String, Decl>,
    pub body: Vec<Stmt>,
    pub pragmas: Vec<Pragma>,
}

impl FortranUnit {
    /// Concatenated transform blocks, with the line of each block's first
    /// payload line.
    pub fn transform_blocks(&self) -> Vec<(usize, &str)> {
        self.pragmas
            .iter()
            .filter(|p| p.kind == PragmaKind::Transform)
            .map(|p| (p.span.line + 1, p.text.as_str()))
            .collect()
    }
}

/// Parses, lowers and applies the embedded transform blocks in order.
pub fn translate(source: &str) -> Result<Kernel> {
    let unit = parse_fortran(source)?;
    let k = lower_to_kernel(&unit)?;
    let mut kernels = IndexMap::new();
    kernels.insert(k.name.clone(), k);
    for (line, text) in unit.transform_blocks() {
        let script = TransformScript::parse(text, line)?;
        kernels = run_transform_script(&kernels, &script)?;
    }
    Ok(kernels.swap_remove(&unit.name).expect("subroutine kernel stays in scope"))
}
