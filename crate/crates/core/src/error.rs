use std::fmt;

use thiserror::Error;

/// Location of a diagnostic inside an input text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Span {
    /// 1-based line, 0 when unknown.
    pub line: usize,
    /// 1-based column, 0 when unknown.
    pub column: usize,
}

impl Span {
    pub fn new(line: usize, column: usize) -> Self {
        Span { line, column }
    }

    /// Span of a byte offset inside `text`.
    pub fn from_offset(text: &str, offset: usize) -> Self {
        let offset = offset.min(text.len());
        let before = &text[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Span { line, column }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { msg: String, offset: usize },

    #[error("integer set: {0}")]
    Set(String),

    #[error("kernel: {0}")]
    Kernel(String),

    #[error("transform {transform}: {msg}")]
    Transform { transform: &'static str, msg: String },

    #[error("line {}: unsupported Fortran construct `{construct}`: {msg}", span.line)]
    Restricted {
        construct: String,
        msg: String,
        span: Span,
    },

    #[error("line {}: {msg}", span.line)]
    Fortran { msg: String, span: Span },

    #[error("transform script line {line}: {msg}")]
    Script { msg: String, line: usize },

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("codegen: {0}")]
    Codegen(String),

    #[error("interpreter: {0}")]
    Interp(String),

    #[error("io: {0}")]
    Io(String),

    /// Bad command-line usage.
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn syntax(msg: impl Into<String>, offset: usize) -> Self {
        Error::Syntax {
            msg: msg.into(),
            offset,
        }
    }

    pub fn set(msg: impl Into<String>) -> Self {
        Error::Set(msg.into())
    }

    pub fn kernel(msg: impl Into<String>) -> Self {
        Error::Kernel(msg.into())
    }

    pub fn transform(transform: &'static str, msg: impl Into<String>) -> Self {
        Error::Transform {
            transform,
            msg: msg.into(),
        }
    }

    pub fn fortran(msg: impl Into<String>, span: Span) -> Self {
        Error::Fortran {
            msg: msg.into(),
            span,
        }
    }

    pub fn interp(msg: impl Into<String>) -> Self {
        Error::Interp(msg.into())
    }

    pub fn codegen(msg: impl Into<String>) -> Self {
        Error::Codegen(msg.into())
    }

    /// The message without any position prefix.
    pub fn message(&self) -> String {
        match self {
            Error::Restricted { construct, msg, .. } => format!("unsupported Fortran construct `{construct}`: {msg}"),
            Error::Fortran { msg, .. } | Error::Script { msg, .. } | Error::Syntax { msg, .. } => msg.clone(),
            other => other.to_string(),
        }
    }

    /// Source position, when the error carries one.
    pub fn span(&self) -> Option<Span> {
        match self {
            Error::Restricted { span, .. } | Error::Fortran { span, .. } => Some(*span),
            Error::Script { line, .. } => Some(Span::new(*line, 1)),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
