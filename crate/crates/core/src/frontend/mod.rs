pub mod diagnostic;
pub mod lexer;
pub mod module;
pub mod parser;
mod printer;

pub use diagnostic::{Diagnostic, Severity, Span};
pub use module::{parse, parse_with_prelude, print_module, Parsed, SourceModule, Value};
pub use printer::{print_expr, print_form, real_literal, Printer};
