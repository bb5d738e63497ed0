//! Core of the form language: the interned expression DAG, index notation,
//! finite element descriptions, forms, symbolic differentiation, a numeric
//! evaluator, and the `.form` parser and printer.

pub mod algorithms;
pub mod cell;
pub mod differentiation;
pub mod dot;
pub mod elements;
pub mod error;
pub mod evaluator;
pub mod forms;
pub mod frontend;
pub mod indexing;
pub mod ir;
pub mod tensor;

pub use cell::Cell;
pub use elements::Element;
pub use error::{Error, Result};
pub use forms::{Form, Measure};
pub use ir::{Expr, Index, Op};
