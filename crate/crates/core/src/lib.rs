pub mod codegen;
pub mod corpus;
pub mod error;
pub mod expr;
pub mod fortran;
pub mod interp;
pub mod kernel;
pub mod matching;
pub mod polyset;
pub mod transforms;
pub mod types;

pub use error::{Error, Result, Span};
