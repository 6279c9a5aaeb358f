//! The `.csp` language: a small CSP dialect with goroutines, channels,
//! mutexes, wait groups and condition variables.
//!
//! Programs are parsed with [`parse`], checked with [`validate`], and can be
//! printed back to canonical text with [`pretty`]. [`check`] does the first
//! two in one go.

pub mod ast;
mod lexer;
mod parser;
mod printer;
mod validate;

use std::fmt;

pub use ast::*;
pub use parser::parse;
pub use printer::{expr as pretty_expr, pretty};
pub use validate::{validate, CheckedProgram};

/// A front-end error tied to a source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub loc: SourceLoc,
    pub message: String,
}

impl Diagnostic {
    pub fn new(loc: SourceLoc, message: String) -> Self {
        Diagnostic { loc, message }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.loc, self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Parses and validates in one step.
pub fn check(text: &str, file_name: &str) -> Result<CheckedProgram, Vec<Diagnostic>> {
    validate(parse(text, file_name)?)
}
