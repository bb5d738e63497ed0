//! Elaboration of parsed statements into expressions, elements and forms.
//!
//! Every value is built through the core constructors, so shape checks and
//! simplifications happen while the file is read. Coefficient counts and
//! variable labels are numbered per module, starting at zero.

use std::collections::{HashMap, HashSet};

use super::diagnostic::{Diagnostic, Span};
use super::parser::{parse_statements, Ast, BinOp, Node, Statement};
use super::printer::{real_literal, Printer};
use crate::cell::Cell;
use crate::elements::{components, Element, Symmetry};
use crate::error::{Error, Result};
use crate::forms::{make_integral, DomainType, Form, Measure, Wrt};
use crate::indexing::{self, component};
use crate::ir::{self, Expr, FreeIndexMap, Index, IndexTerm, MultiIndex, Op, Payload};
use crate::tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Str(String),
    Expr(Expr),
    Element(Element),
    Cell(Cell),
    Index(Index),
    Measure(Measure),
    Form(Form),
    Tuple(Vec<Value>),
    List(Vec<Value>),
    Dict(Vec<(Value, Value)>),
    Builtin(&'static str),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Real(_) => "real number",
            Value::Str(_) => "string",
            Value::Expr(_) => "expression",
            Value::Element(_) => "element",
            Value::Cell(_) => "cell",
            Value::Index(_) => "index",
            Value::Measure(_) => "measure",
            Value::Form(_) => "form",
            Value::Tuple(_) => "tuple",
            Value::List(_) => "list",
            Value::Dict(_) => "dict",
            Value::Builtin(_) => "function",
        }
    }

    pub fn as_expr(&self) -> Option<Expr> {
        match self {
            Value::Int(v) => Some(ir::int(*v)),
            Value::Real(v) => ir::real(*v).ok(),
            Value::Expr(e) => Some(e.clone()),
            _ => None,
        }
    }
}

/// Names of forms exported by default.
pub const DEFAULT_EXPORTS: [&str; 5] = ["a", "L", "M", "F", "J"];

const BUILTIN_FUNCTIONS: &[&str] = &[
    "FiniteElement",
    "VectorElement",
    "TensorElement",
    "MixedElement",
    "EnrichedElement",
    "RestrictedElement",
    "Identity",
    "PermutationSymbol",
    "UnitVector",
    "SpatialCoordinate",
    "FacetNormal",
    "CellVolume",
    "Circumradius",
    "FacetArea",
    "CellSurfaceArea",
    "Constant",
    "Coefficient",
    "Argument",
    "TestFunction",
    "TrialFunction",
    "Index",
    "zero",
    "as_tensor",
    "as_vector",
    "as_matrix",
    "index_sum",
    "product",
    "sqrt",
    "exp",
    "ln",
    "abs",
    "sign",
    "cos",
    "sin",
    "tan",
    "acos",
    "asin",
    "atan",
    "erf",
    "pow",
    "bessel_J",
    "bessel_Y",
    "bessel_I",
    "bessel_K",
    "dot",
    "inner",
    "outer",
    "cross",
    "transpose",
    "sym",
    "skew",
    "dev",
    "tr",
    "det",
    "cofac",
    "inv",
    "diag",
    "diag_vector",
    "elem_mult",
    "elem_div",
    "elem_pow",
    "elem_op",
    "grad",
    "nabla_grad",
    "div",
    "nabla_div",
    "curl",
    "rot",
    "Dx",
    "Dn",
    "variable",
    "diff",
    "exterior_derivative",
    "coefficient_derivative",
    "avg",
    "jump",
    "eq",
    "ne",
    "le",
    "ge",
    "lt",
    "gt",
    "And",
    "Or",
    "Not",
    "conditional",
    "derivative",
    "action",
    "adjoint",
    "replace",
    "lhs",
    "rhs",
    "Measure",
];

/// Builtin names other than functions and the predefined index letters.
fn builtin_constant(name: &str) -> Option<Value> {
    Some(match name {
        "interval" => Value::Cell(Cell::Interval),
        "triangle" => Value::Cell(Cell::Triangle),
        "tetrahedron" => Value::Cell(Cell::Tetrahedron),
        "dx" => Value::Measure(Measure::dx()),
        "ds" => Value::Measure(Measure::ds()),
        "dS" => Value::Measure(Measure::dS()),
        "pi" => Value::Real(std::f64::consts::PI),
        "True" => Value::Int(1),
        "False" => Value::Int(0),
        _ => return None,
    })
}

fn builtin(name: &str) -> Option<Value> {
    if let Some(v) = builtin_constant(name) {
        return Some(v);
    }
    if let Some(i) = Index::predefined(name) {
        return Some(Value::Index(i));
    }
    BUILTIN_FUNCTIONS
        .iter()
        .find(|f| **f == name)
        .map(|f| Value::Builtin(f))
}

/// True for names a statement may not rebind. The index letters may be
/// rebound; they then stop referring to the predefined indices.
pub fn is_reserved(name: &str) -> bool {
    Index::predefined(name).is_none() && builtin(name).is_some()
}

fn scalar_fn_op(name: &str) -> Option<Op> {
    Op::ALL
        .iter()
        .copied()
        .find(|op| op.group() == ir::Group::ScalarFunction && op.name() == name)
}

#[derive(Debug, Clone)]
pub struct Binding {
    pub name: String,
    pub span: Span,
    pub value: Value,
}

/// The result of elaborating a file: named values in definition order and
/// the exported forms and elements.
#[derive(Debug, Clone, Default)]
pub struct SourceModule {
    pub bindings: Vec<Binding>,
    by_name: HashMap<String, usize>,
    pub exports: Vec<String>,
    pub exported_elements: Vec<String>,
}

impl SourceModule {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.by_name.get(name).map(|&k| &self.bindings[k].value)
    }

    pub fn binding(&self, name: &str) -> Option<&Binding> {
        self.by_name.get(name).map(|&k| &self.bindings[k])
    }

    pub fn form(&self, name: &str) -> Option<&Form> {
        match self.get(name) {
            Some(Value::Form(f)) => Some(f),
            _ => None,
        }
    }

    pub fn expr(&self, name: &str) -> Option<&Expr> {
        match self.get(name) {
            Some(Value::Expr(e)) => Some(e),
            _ => None,
        }
    }

    /// Exported forms in export order.
    pub fn exported_forms(&self) -> Vec<(&str, &Form)> {
        self.exports
            .iter()
            .filter_map(|n| self.form(n).map(|f| (n.as_str(), f)))
            .collect()
    }

    /// A printer that writes every named value by its name.
    pub fn printer(&self) -> Printer {
        let mut p = Printer::new();
        for b in &self.bindings {
            p.reserve(&b.name);
        }
        for b in &self.bindings {
            match &b.value {
                Value::Expr(e) => p.name_expr(e, &b.name),
                Value::Element(e) => p.name_element(e, &b.name),
                _ => {}
            }
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub module: SourceModule,
    pub diagnostics: Vec<Diagnostic>,
}

impl Parsed {
    pub fn has_errors(&self) -> bool {
        !self.diagnostics.is_empty()
    }
}

/// Marker kind for errors caused by an earlier failed statement. They are
/// not reported again.
const CASCADE: &str = "Cascade";

type EResult<T> = std::result::Result<T, Diagnostic>;

fn core_err(span: Span) -> impl Fn(Error) -> Diagnostic {
    move |e| Diagnostic::from_error(span, &e)
}

fn type_err(span: Span, what: &str, got: &Value) -> Diagnostic {
    Diagnostic::error(
        span,
        "TypeError",
        format!("expected {what}, got {}", got.type_name()),
    )
}

struct Arg {
    value: Value,
    span: Span,
}

struct Call<'a> {
    name: &'a str,
    span: Span,
    args: Vec<Arg>,
    kwargs: Vec<(String, Arg)>,
}

impl Call<'_> {
    fn arity(&self, min: usize, max: usize) -> EResult<()> {
        let n = self.args.len();
        if n < min || n > max {
            let want = if min == max {
                min.to_string()
            } else if max == usize::MAX {
                format!("at least {min}")
            } else {
                format!("{min} to {max}")
            };
            return Err(Diagnostic::error(
                self.span,
                "ArityError",
                format!("{} takes {want} arguments, got {n}", self.name),
            ));
        }
        Ok(())
    }

    fn keywords(&self, allowed: &[&str]) -> EResult<()> {
        for (k, a) in &self.kwargs {
            if !allowed.contains(&k.as_str()) {
                return Err(Diagnostic::error(
                    a.span,
                    "TypeError",
                    format!("{} has no keyword argument '{k}'", self.name),
                ));
            }
        }
        Ok(())
    }

    fn kw(&self, key: &str) -> Option<&Arg> {
        self.kwargs.iter().find(|(k, _)| k == key).map(|(_, a)| a)
    }

    fn expr(&self, i: usize) -> EResult<Expr> {
        to_expr(&self.args[i])
    }

    fn err(&self) -> impl Fn(Error) -> Diagnostic {
        core_err(self.span)
    }
}

fn to_expr(a: &Arg) -> EResult<Expr> {
    match &a.value {
        Value::Real(v) => ir::real(*v).map_err(core_err(a.span)),
        v => v
            .as_expr()
            .ok_or_else(|| type_err(a.span, "an expression", v)),
    }
}

fn to_usize(a: &Arg) -> EResult<usize> {
    match a.value {
        Value::Int(v) if v >= 0 => Ok(v as usize),
        _ => Err(type_err(a.span, "a non-negative integer", &a.value)),
    }
}

fn to_cell(a: &Arg) -> EResult<Cell> {
    match a.value {
        Value::Cell(c) => Ok(c),
        _ => Err(type_err(a.span, "a cell", &a.value)),
    }
}

fn to_element(a: &Arg) -> EResult<Element> {
    match &a.value {
        Value::Element(e) => Ok(e.clone()),
        _ => Err(type_err(a.span, "an element", &a.value)),
    }
}

fn to_str(a: &Arg) -> EResult<String> {
    match &a.value {
        Value::Str(s) => Ok(s.clone()),
        _ => Err(type_err(a.span, "a string", &a.value)),
    }
}

fn to_form(a: &Arg) -> EResult<Form> {
    match &a.value {
        Value::Form(f) => Ok(f.clone()),
        _ => Err(type_err(a.span, "a form", &a.value)),
    }
}

fn to_index(v: &Value, span: Span) -> EResult<Index> {
    match v {
        Value::Index(i) => Ok(*i),
        _ => Err(type_err(span, "an index", v)),
    }
}

/// One index or a tuple of indices.
fn to_indices(a: &Arg) -> EResult<Vec<Index>> {
    match &a.value {
        Value::Tuple(items) | Value::List(items) => {
            items.iter().map(|v| to_index(v, a.span)).collect()
        }
        v => Ok(vec![to_index(v, a.span)?]),
    }
}

fn to_term(v: &Value, span: Span) -> EResult<IndexTerm> {
    match v {
        Value::Int(k) if *k >= 0 => Ok(IndexTerm::Fixed(*k as usize)),
        Value::Index(i) => Ok(IndexTerm::Free(*i)),
        _ => Err(type_err(span, "an index or a non-negative integer", v)),
    }
}

fn to_shape(a: &Arg) -> EResult<Vec<usize>> {
    match &a.value {
        Value::Tuple(items) | Value::List(items) => items
            .iter()
            .map(|v| match v {
                Value::Int(k) if *k > 0 => Ok(*k as usize),
                _ => Err(type_err(a.span, "a positive dimension", v)),
            })
            .collect(),
        Value::Int(k) if *k > 0 => Ok(vec![*k as usize]),
        v => Err(type_err(a.span, "a shape tuple", v)),
    }
}

/// Expressions of a tuple, or the single expression.
fn to_expr_list(a: &Arg) -> EResult<Vec<Expr>> {
    match &a.value {
        Value::Tuple(items) | Value::List(items) => items
            .iter()
            .map(|v| {
                to_expr(&Arg {
                    value: v.clone(),
                    span: a.span,
                })
            })
            .collect(),
        _ => Ok(vec![to_expr(a)?]),
    }
}

/// Nested tuples of expressions as a list tensor.
fn nested_tensor(v: &Value, span: Span) -> EResult<Expr> {
    match v {
        Value::Tuple(items) | Value::List(items) => {
            let parts = items
                .iter()
                .map(|x| nested_tensor(x, span))
                .collect::<EResult<Vec<_>>>()?;
            indexing::list_tensor(&parts).map_err(core_err(span))
        }
        v => v
            .as_expr()
            .ok_or_else(|| type_err(span, "an expression", v)),
    }
}

struct Elab {
    env: HashMap<String, Value>,
    failed: HashSet<String>,
    next_count: usize,
    next_label: u64,
}

impl Elab {
    fn lookup(&self, name: &str, span: Span) -> EResult<Value> {
        if let Some(v) = self.env.get(name) {
            return Ok(v.clone());
        }
        if self.failed.contains(name) {
            return Err(Diagnostic::error(span, CASCADE, name));
        }
        builtin(name).ok_or_else(|| {
            Diagnostic::error(span, "NameError", format!("name '{name}' is not defined"))
        })
    }

    fn count(&mut self, explicit: Option<usize>) -> usize {
        match explicit {
            Some(c) => {
                self.next_count = self.next_count.max(c + 1);
                c
            }
            None => {
                self.next_count += 1;
                self.next_count - 1
            }
        }
    }

    fn eval(&mut self, n: &Node) -> EResult<Value> {
        match &n.ast {
            Ast::Int(v) => Ok(Value::Int(*v)),
            Ast::Real(v) => Ok(Value::Real(*v)),
            Ast::Str(s) => Ok(Value::Str(s.clone())),
            Ast::Name(name) => self.lookup(name, n.span),
            Ast::Tuple(items) => Ok(Value::Tuple(
                items.iter().map(|x| self.eval(x)).collect::<EResult<_>>()?,
            )),
            Ast::List(items) => Ok(Value::List(
                items.iter().map(|x| self.eval(x)).collect::<EResult<_>>()?,
            )),
            Ast::Dict(items) => {
                let mut out = Vec::new();
                for (k, v) in items {
                    out.push((self.eval(k)?, self.eval(v)?));
                }
                Ok(Value::Dict(out))
            }
            Ast::Neg(x) => {
                let v = self.eval(x)?;
                self.negate(v, n)
            }
            Ast::Binary { op, lhs, rhs } => {
                let a = self.eval(lhs)?;
                let b = self.eval(rhs)?;
                self.binary(*op, a, b, n)
            }
            Ast::Subscript { base, items } => {
                let b = self.eval(base)?;
                let idx = items
                    .iter()
                    .map(|x| Ok((self.eval(x)?, x.span)))
                    .collect::<EResult<Vec<_>>>()?;
                self.subscript(b, &idx, n.span)
            }
            Ast::Call { func, args, kwargs } => {
                let f = self.eval(func)?;
                let args = args
                    .iter()
                    .map(|x| {
                        Ok(Arg {
                            value: self.eval(x)?,
                            span: x.span,
                        })
                    })
                    .collect::<EResult<Vec<_>>>()?;
                let kwargs = kwargs
                    .iter()
                    .map(|(k, x)| {
                        Ok((
                            k.clone(),
                            Arg {
                                value: self.eval(x)?,
                                span: x.span,
                            },
                        ))
                    })
                    .collect::<EResult<Vec<_>>>()?;
                self.apply(f, args, kwargs, n.span)
            }
        }
    }

    fn negate(&mut self, v: Value, n: &Node) -> EResult<Value> {
        let err = core_err(n.op_span);
        match v {
            Value::Int(k) => Ok(Value::Int(-k)),
            Value::Real(x) => Ok(Value::Real(-x)),
            Value::Expr(e) => Ok(Value::Expr(ir::neg(&e).map_err(err)?)),
            Value::Form(f) => Ok(Value::Form(f.neg().map_err(err)?)),
            v => Err(type_err(n.op_span, "an expression or form to negate", &v)),
        }
    }

    fn binary(&mut self, op: BinOp, a: Value, b: Value, n: &Node) -> EResult<Value> {
        let span = n.op_span;
        let err = core_err(span);
        let unsupported = |a: &Value, b: &Value| {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "**",
            };
            Diagnostic::error(
                span,
                "TypeError",
                format!(
                    "unsupported operand types for {sym}: {} and {}",
                    a.type_name(),
                    b.type_name()
                ),
            )
        };
        match (op, &a, &b) {
            (BinOp::Add, Value::Form(f), Value::Form(g)) => {
                return Ok(Value::Form(f.add(g).map_err(err)?))
            }
            (BinOp::Sub, Value::Form(f), Value::Form(g)) => {
                return Ok(Value::Form(f.sub(g).map_err(err)?))
            }
            (BinOp::Add, Value::Element(u), Value::Element(v)) => {
                return Ok(Value::Element(u.enriched_with(v).map_err(err)?))
            }
            (BinOp::Mul, Value::Element(u), Value::Element(v)) => {
                return Ok(Value::Element(u.mixed_with(v).map_err(err)?))
            }
            (BinOp::Mul, _, Value::Measure(m)) | (BinOp::Mul, Value::Measure(m), _) => {
                let other = if matches!(b, Value::Measure(_)) {
                    &a
                } else {
                    &b
                };
                let e = other.as_expr().ok_or_else(|| unsupported(&a, &b))?;
                return Ok(Value::Form(make_integral(&e, m).map_err(err)?));
            }
            (BinOp::Mul, Value::Form(f), other) | (BinOp::Mul, other, Value::Form(f)) => {
                let s = other.as_expr().ok_or_else(|| unsupported(&a, &b))?;
                if !s.is_scalar() || !s.free().is_empty() {
                    return Err(Diagnostic::error(
                        span,
                        "ShapeMismatch",
                        "a form can only be scaled by a scalar expression",
                    ));
                }
                return Ok(Value::Form(f.scale(&s).map_err(err)?));
            }
            _ => {}
        }
        let (x, y) = match (a.as_expr(), b.as_expr()) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(unsupported(&a, &b)),
        };
        let r = match op {
            BinOp::Add => ir::sum(&x, &y),
            BinOp::Sub => ir::sub(&x, &y),
            BinOp::Mul => indexing::star(&x, &y),
            BinOp::Div => ir::division(&x, &y),
            BinOp::Pow => ir::power(&x, &y),
        };
        Ok(Value::Expr(r.map_err(err)?))
    }

    fn subscript(&mut self, base: Value, idx: &[(Value, Span)], span: Span) -> EResult<Value> {
        match base {
            Value::Element(e) => match idx {
                [(Value::Str(domain), _)] => {
                    Ok(Value::Element(e.restrict(domain).map_err(core_err(span))?))
                }
                _ => Err(Diagnostic::error(
                    span,
                    "TypeError",
                    "an element is restricted with a single string, as in V['facet']",
                )),
            },
            Value::Expr(e) => {
                let mut terms = idx
                    .iter()
                    .map(|(v, s)| to_term(v, *s))
                    .collect::<EResult<Vec<_>>>()?;
                if terms.len() > e.rank() {
                    return Err(Diagnostic::error(
                        span,
                        "RankMismatch",
                        format!(
                            "{} indices for an expression of shape {}",
                            terms.len(),
                            ir::shape_str(e.shape())
                        ),
                    ));
                }
                // A[i] on a matrix is the row A[i, :] as a tensor.
                let rest: Vec<Index> = (terms.len()..e.rank()).map(|_| Index::fresh()).collect();
                terms.extend(rest.iter().map(|&i| IndexTerm::Free(i)));
                let x = indexing::indexed(&e, &MultiIndex(terms))
                    .and_then(|x| indexing::as_tensor(&x, &rest))
                    .map_err(core_err(span))?;
                Ok(Value::Expr(x))
            }
            v => Err(type_err(span, "an expression or element to index", &v)),
        }
    }

    fn apply(
        &mut self,
        f: Value,
        args: Vec<Arg>,
        kwargs: Vec<(String, Arg)>,
        span: Span,
    ) -> EResult<Value> {
        match f {
            Value::Builtin(name) => self.builtin_call(Call {
                name,
                span,
                args,
                kwargs,
            }),
            Value::Measure(m) => {
                let c = Call {
                    name: "measure",
                    span,
                    args,
                    kwargs,
                };
                c.keywords(&["subdomain_id", "metadata"])?;
                c.arity(0, 1)?;
                let mut m = m.clone();
                if let Some(a) = c.args.first().or(c.kw("subdomain_id")) {
                    m = m.with_id(to_usize(a)?);
                }
                if let Some(a) = c.kw("metadata") {
                    m.metadata = metadata(a)?;
                }
                Ok(Value::Measure(m))
            }
            Value::Expr(e) => match args.as_slice() {
                [Arg {
                    value: Value::Str(side),
                    span: s,
                }] if kwargs.is_empty() => {
                    let side = match side.as_str() {
                        "+" => ir::Side::Plus,
                        "-" => ir::Side::Minus,
                        _ => {
                            return Err(Diagnostic::error(
                                *s,
                                "TypeError",
                                format!("restriction side must be '+' or '-', got '{side}'"),
                            ))
                        }
                    };
                    Ok(Value::Expr(
                        ir::restricted(&e, side).map_err(core_err(span))?,
                    ))
                }
                _ => Err(Diagnostic::error(
                    span,
                    "TypeError",
                    "an expression can only be called with '+' or '-' to restrict it",
                )),
            },
            v => Err(type_err(span, "a function", &v)),
        }
    }

    fn builtin_call(&mut self, c: Call) -> EResult<Value> {
        let err = c.err();
        let expr = |r: Result<Expr>| r.map(Value::Expr).map_err(&err);
        match c.name {
            "FiniteElement" => {
                c.keywords(&["quad_scheme"])?;
                c.arity(3, 3)?;
                let scheme = c.kw("quad_scheme").map(to_str).transpose()?;
                let e = Element::finite_with_scheme(
                    &to_str(&c.args[0])?,
                    to_cell(&c.args[1])?,
                    to_usize(&c.args[2])? as u32,
                    scheme,
                );
                e.map(Value::Element).map_err(err)
            }
            "VectorElement" => {
                c.keywords(&["dim"])?;
                let dim_pos = if matches!(c.args.first().map(|a| &a.value), Some(Value::Element(_)))
                {
                    c.arity(1, 2)?;
                    1
                } else {
                    c.arity(3, 4)?;
                    3
                };
                let dim = c
                    .args
                    .get(dim_pos)
                    .or(c.kw("dim"))
                    .map(to_usize)
                    .transpose()?;
                let e = if dim_pos == 1 {
                    Element::vector_of(to_element(&c.args[0])?, dim)
                } else {
                    Element::vector(
                        &to_str(&c.args[0])?,
                        to_cell(&c.args[1])?,
                        to_usize(&c.args[2])? as u32,
                        dim,
                    )
                };
                e.map(Value::Element).map_err(err)
            }
            "TensorElement" => {
                c.keywords(&["shape", "symmetry"])?;
                let from_element =
                    matches!(c.args.first().map(|a| &a.value), Some(Value::Element(_)));
                let base = if from_element { 1 } else { 3 };
                c.arity(base, base + 2)?;
                let shape = c
                    .args
                    .get(base)
                    .or(c.kw("shape"))
                    .map(to_shape)
                    .transpose()?;
                let symmetry = match c.args.get(base + 1).or(c.kw("symmetry")) {
                    None => Symmetry::None,
                    Some(a) => symmetry(a)?,
                };
                let e = if from_element {
                    Element::tensor_of(to_element(&c.args[0])?, shape, symmetry)
                } else {
                    Element::tensor(
                        &to_str(&c.args[0])?,
                        to_cell(&c.args[1])?,
                        to_usize(&c.args[2])? as u32,
                        shape,
                        symmetry,
                    )
                };
                e.map(Value::Element).map_err(err)
            }
            "MixedElement" | "EnrichedElement" => {
                c.keywords(&[])?;
                c.arity(1, usize::MAX)?;
                let subs: Vec<Element> = match (c.args.len(), &c.args[0].value) {
                    (1, Value::Tuple(items) | Value::List(items)) => items
                        .iter()
                        .map(|v| match v {
                            Value::Element(e) => Ok(e.clone()),
                            v => Err(type_err(c.args[0].span, "an element", v)),
                        })
                        .collect::<EResult<_>>()?,
                    _ => c.args.iter().map(to_element).collect::<EResult<_>>()?,
                };
                let e = if c.name == "MixedElement" {
                    Element::mixed(subs)
                } else {
                    Element::enriched(subs)
                };
                e.map(Value::Element).map_err(err)
            }
            "RestrictedElement" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                Element::restricted(to_element(&c.args[0])?, &to_str(&c.args[1])?)
                    .map(Value::Element)
                    .map_err(err)
            }
            "Identity" | "PermutationSymbol" => {
                c.keywords(&[])?;
                c.arity(1, 1)?;
                let d = to_usize(&c.args[0])?;
                expr(if c.name == "Identity" {
                    ir::identity(d)
                } else {
                    ir::permutation_symbol(d)
                })
            }
            "UnitVector" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                expr(ir::unit_vector(
                    to_usize(&c.args[0])?,
                    to_usize(&c.args[1])?,
                ))
            }
            "SpatialCoordinate" | "FacetNormal" | "CellVolume" | "Circumradius" | "FacetArea"
            | "CellSurfaceArea" => {
                c.keywords(&[])?;
                c.arity(1, 1)?;
                let cell = to_cell(&c.args[0])?;
                Ok(Value::Expr(match c.name {
                    "SpatialCoordinate" => ir::spatial_coordinate(cell),
                    "FacetNormal" => ir::facet_normal(cell),
                    "CellVolume" => ir::cell_volume(cell),
                    "Circumradius" => ir::circumradius(cell),
                    "FacetArea" => ir::facet_area(cell),
                    _ => ir::cell_surface_area(cell),
                }))
            }
            "Constant" => {
                c.keywords(&["count"])?;
                c.arity(1, 1)?;
                let cell = to_cell(&c.args[0])?;
                let explicit = c.kw("count").map(to_usize).transpose()?;
                Ok(Value::Expr(ir::constant(cell, Some(self.count(explicit)))))
            }
            "Coefficient" => {
                c.keywords(&["count"])?;
                c.arity(1, 1)?;
                let el = to_element(&c.args[0])?;
                let explicit = c.kw("count").map(to_usize).transpose()?;
                Ok(Value::Expr(ir::coefficient(
                    &el,
                    Some(self.count(explicit)),
                )))
            }
            "Argument" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                Ok(Value::Expr(ir::argument(
                    &to_element(&c.args[0])?,
                    to_usize(&c.args[1])?,
                )))
            }
            "TestFunction" | "TrialFunction" => {
                c.keywords(&[])?;
                c.arity(1, 1)?;
                let n = usize::from(c.name == "TrialFunction");
                Ok(Value::Expr(ir::argument(&to_element(&c.args[0])?, n)))
            }
            "Index" => {
                c.keywords(&[])?;
                c.arity(0, 1)?;
                Ok(Value::Index(match c.args.first() {
                    Some(a) => {
                        let id = to_usize(a)?;
                        let id = u32::try_from(id).map_err(|_| {
                            Diagnostic::error(a.span, "IndexOutOfRange", "index id too large")
                        })?;
                        Index::with_id(id)
                    }
                    None => Index::fresh(),
                }))
            }
            "zero" => {
                c.keywords(&[])?;
                c.arity(1, 2)?;
                let shape = match &c.args[0].value {
                    Value::Tuple(t) if t.is_empty() => vec![],
                    _ => to_shape(&c.args[0])?,
                };
                let mut free = FreeIndexMap::new();
                if let Some(a) = c.args.get(1) {
                    let Value::Dict(entries) = &a.value else {
                        return Err(type_err(a.span, "a dict of index dimensions", &a.value));
                    };
                    for (k, v) in entries {
                        let i = to_index(k, a.span)?;
                        let d = match v {
                            Value::Int(d) if *d > 0 => *d as usize,
                            v => return Err(type_err(a.span, "a positive dimension", v)),
                        };
                        free.insert(i, d);
                    }
                }
                Ok(Value::Expr(ir::zero(&shape, &free)))
            }
            "as_tensor" | "as_vector" | "as_matrix" => {
                c.keywords(&[])?;
                c.arity(1, 2)?;
                if c.args.len() == 2 {
                    let e = c.expr(0)?;
                    let idx = to_indices(&c.args[1])?;
                    let want = match c.name {
                        "as_vector" => Some(1),
                        "as_matrix" => Some(2),
                        _ => None,
                    };
                    if want.is_some_and(|w| w != idx.len()) {
                        return Err(Diagnostic::error(
                            c.args[1].span,
                            "RankMismatch",
                            format!("{} takes {} indices", c.name, want.unwrap_or(0)),
                        ));
                    }
                    return expr(indexing::as_tensor(&e, &idx));
                }
                match &c.args[0].value {
                    v @ (Value::Tuple(_) | Value::List(_)) => {
                        Ok(Value::Expr(nested_tensor(v, c.args[0].span)?))
                    }
                    // as_tensor(A) of an existing tensor is A itself.
                    _ => Ok(Value::Expr(c.expr(0)?)),
                }
            }
            "index_sum" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                expr(indexing::index_sum(
                    &c.expr(0)?,
                    to_index(&c.args[1].value, c.args[1].span)?,
                ))
            }
            "product" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                expr(ir::product(&c.expr(0)?, &c.expr(1)?))
            }
            "pow" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                expr(ir::power(&c.expr(0)?, &c.expr(1)?))
            }
            "bessel_J" | "bessel_Y" | "bessel_I" | "bessel_K" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                let op = scalar_fn_op(c.name).expect("bessel op");
                expr(ir::bessel(op, &c.expr(0)?, &c.expr(1)?))
            }
            "sqrt" | "exp" | "ln" | "abs" | "sign" | "cos" | "sin" | "tan" | "acos" | "asin"
            | "atan" | "erf" => {
                c.keywords(&[])?;
                c.arity(1, 1)?;
                let op = scalar_fn_op(c.name).expect("scalar function op");
                expr(ir::math_fn(op, &c.expr(0)?))
            }
            "dot" | "inner" | "outer" | "cross" | "elem_mult" | "elem_div" | "elem_pow" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                let (a, b) = (c.expr(0)?, c.expr(1)?);
                expr(match c.name {
                    "dot" => tensor::dot(&a, &b),
                    "inner" => tensor::inner(&a, &b),
                    "outer" => tensor::outer(&a, &b),
                    "cross" => tensor::cross(&a, &b),
                    "elem_mult" => tensor::elem_mult(&a, &b),
                    "elem_div" => tensor::elem_div(&a, &b),
                    _ => tensor::elem_pow(&a, &b),
                })
            }
            "elem_op" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                let op = match &c.args[0].value {
                    Value::Builtin(name) => {
                        scalar_fn_op(name).filter(|op| !op.name().starts_with("bessel"))
                    }
                    _ => None,
                }
                .ok_or_else(|| {
                    type_err(
                        c.args[0].span,
                        "a one-argument scalar function",
                        &c.args[0].value,
                    )
                })?;
                expr(tensor::elem_op(op, &c.expr(1)?))
            }
            "transpose" | "sym" | "skew" | "dev" | "tr" | "det" | "cofac" | "inv" | "diag"
            | "diag_vector" => {
                c.keywords(&[])?;
                c.arity(1, 1)?;
                let op = match c.name {
                    "transpose" => Op::Transposed,
                    "sym" => Op::Sym,
                    "skew" => Op::Skew,
                    "dev" => Op::Dev,
                    "tr" => Op::Trace,
                    "det" => Op::Det,
                    "cofac" => Op::Cofac,
                    "inv" => Op::Inverse,
                    "diag" => Op::Diag,
                    _ => Op::DiagVector,
                };
                expr(tensor::unary(op, &c.expr(0)?))
            }
            "grad"
            | "nabla_grad"
            | "div"
            | "nabla_div"
            | "curl"
            | "rot"
            | "Dn"
            | "exterior_derivative"
            | "avg"
            | "Not" => {
                c.keywords(&[])?;
                c.arity(1, 1)?;
                let a = c.expr(0)?;
                expr(match c.name {
                    "grad" => ir::grad(&a),
                    "nabla_grad" => ir::nabla_grad(&a),
                    "div" => ir::div(&a),
                    "nabla_div" => ir::nabla_div(&a),
                    "curl" => ir::curl(&a),
                    "rot" => ir::rot(&a),
                    "Dn" => ir::dn(&a),
                    "exterior_derivative" => ir::exterior_derivative(&a),
                    "avg" => ir::avg(&a),
                    _ => ir::not(&a),
                })
            }
            "Dx" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                let t = to_term(&c.args[1].value, c.args[1].span)?;
                expr(ir::dx(&c.expr(0)?, t))
            }
            "variable" => {
                c.keywords(&["label"])?;
                c.arity(1, 1)?;
                let explicit = c.kw("label").map(to_usize).transpose()?;
                let label = match explicit {
                    Some(l) => {
                        self.next_label = self.next_label.max(l as u64 + 1);
                        l as u64
                    }
                    None => {
                        self.next_label += 1;
                        self.next_label - 1
                    }
                };
                expr(ir::variable(&c.expr(0)?, Some(label)))
            }
            "diff" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                expr(ir::variable_derivative(&c.expr(0)?, &c.expr(1)?))
            }
            "coefficient_derivative" => {
                c.keywords(&[])?;
                c.arity(3, 4)?;
                let targets = to_expr_list(&c.args[1])?;
                let dirs = to_expr_list(&c.args[2])?;
                let mut overrides = Vec::new();
                if let Some(a) = c.args.get(3) {
                    let Value::Dict(entries) = &a.value else {
                        return Err(type_err(a.span, "a dict of derivative overrides", &a.value));
                    };
                    for (k, v) in entries {
                        let k = k
                            .as_expr()
                            .ok_or_else(|| type_err(a.span, "an expression", k))?;
                        let v = v
                            .as_expr()
                            .ok_or_else(|| type_err(a.span, "an expression", v))?;
                        overrides.push((k, v));
                    }
                }
                expr(ir::coefficient_derivative(
                    &c.expr(0)?,
                    &targets,
                    &dirs,
                    &overrides,
                ))
            }
            "jump" => {
                c.keywords(&[])?;
                c.arity(1, 2)?;
                let a = c.expr(0)?;
                expr(match c.args.get(1) {
                    Some(n) => ir::jump_n(&a, &to_expr(n)?),
                    None => ir::jump(&a),
                })
            }
            "eq" | "ne" | "le" | "ge" | "lt" | "gt" | "And" | "Or" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                let (a, b) = (c.expr(0)?, c.expr(1)?);
                expr(match c.name {
                    "And" => ir::and(&a, &b),
                    "Or" => ir::or(&a, &b),
                    name => {
                        let op = Op::ALL
                            .iter()
                            .copied()
                            .find(|op| op.name() == name)
                            .expect("comparison op");
                        ir::compare(op, &a, &b)
                    }
                })
            }
            "conditional" => {
                c.keywords(&[])?;
                c.arity(3, 3)?;
                expr(ir::conditional(&c.expr(0)?, &c.expr(1)?, &c.expr(2)?))
            }
            "derivative" => {
                c.keywords(&[])?;
                c.arity(2, 3)?;
                let f = to_form(&c.args[0])?;
                let wrt = match &c.args[1].value {
                    Value::Tuple(_) | Value::List(_) => Wrt::Tuple(to_expr_list(&c.args[1])?),
                    _ => Wrt::from_expr(&c.expr(1)?).map_err(core_err(c.args[1].span))?,
                };
                let dir = match c.args.get(2) {
                    None => None,
                    Some(
                        a @ Arg {
                            value: Value::Tuple(_) | Value::List(_),
                            ..
                        },
                    ) => Some(flat_concat(&to_expr_list(a)?).map_err(core_err(a.span))?),
                    Some(a) => Some(to_expr(a)?),
                };
                f.derivative(&wrt, dir.as_ref())
                    .map(Value::Form)
                    .map_err(err)
            }
            "action" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                to_form(&c.args[0])?
                    .action(&c.expr(1)?)
                    .map(Value::Form)
                    .map_err(err)
            }
            "adjoint" | "lhs" | "rhs" => {
                c.keywords(&[])?;
                c.arity(1, 1)?;
                let f = to_form(&c.args[0])?;
                match c.name {
                    "adjoint" => f.adjoint(),
                    "lhs" => f.lhs(),
                    _ => f.rhs(),
                }
                .map(Value::Form)
                .map_err(err)
            }
            "replace" => {
                c.keywords(&[])?;
                c.arity(2, 2)?;
                let f = to_form(&c.args[0])?;
                let Value::Dict(entries) = &c.args[1].value else {
                    return Err(type_err(c.args[1].span, "a dict", &c.args[1].value));
                };
                let mut map = HashMap::new();
                for (k, v) in entries {
                    let s = c.args[1].span;
                    let k = k.as_expr().ok_or_else(|| type_err(s, "an expression", k))?;
                    let v = v.as_expr().ok_or_else(|| type_err(s, "an expression", v))?;
                    map.insert(k, v);
                }
                f.replace(&map).map(Value::Form).map_err(err)
            }
            "Measure" => {
                c.keywords(&["subdomain_id", "metadata"])?;
                c.arity(1, 2)?;
                let name = to_str(&c.args[0])?;
                let dt = DomainType::from_name(&name).ok_or_else(|| {
                    Diagnostic::error(
                        c.args[0].span,
                        "UnsupportedMeasure",
                        format!("unknown integration domain '{name}'"),
                    )
                })?;
                let id = match c.args.get(1).or(c.kw("subdomain_id")) {
                    Some(a) => to_usize(a)?,
                    None => 0,
                };
                let mut m = Measure::new(dt, id);
                if let Some(a) = c.kw("metadata") {
                    m.metadata = metadata(a)?;
                }
                Ok(Value::Measure(m))
            }
            name => Err(Diagnostic::error(
                c.span,
                "NameError",
                format!("'{name}' cannot be called"),
            )),
        }
    }
}

fn symmetry(a: &Arg) -> EResult<Symmetry> {
    match &a.value {
        Value::Int(0) => Ok(Symmetry::None),
        Value::Int(1) => Ok(Symmetry::Symmetric),
        Value::Dict(entries) => {
            let mut map = std::collections::BTreeMap::new();
            let comp = |v: &Value| -> EResult<Vec<usize>> {
                match v {
                    Value::Tuple(items) => items
                        .iter()
                        .map(|x| match x {
                            Value::Int(k) if *k >= 0 => Ok(*k as usize),
                            x => Err(type_err(a.span, "a component index", x)),
                        })
                        .collect(),
                    Value::Int(k) if *k >= 0 => Ok(vec![*k as usize]),
                    v => Err(type_err(a.span, "a component tuple", v)),
                }
            };
            for (k, v) in entries {
                map.insert(comp(k)?, comp(v)?);
            }
            Ok(Symmetry::Map(map))
        }
        v => Err(type_err(a.span, "True or a symmetry dict", v)),
    }
}

fn metadata(a: &Arg) -> EResult<std::collections::BTreeMap<String, String>> {
    let Value::Dict(entries) = &a.value else {
        return Err(type_err(a.span, "a metadata dict", &a.value));
    };
    let text = |v: &Value| match v {
        Value::Str(s) => Ok(s.clone()),
        Value::Int(k) => Ok(k.to_string()),
        v => Err(type_err(a.span, "a string or integer", v)),
    };
    entries
        .iter()
        .map(|(k, v)| Ok((text(k)?, text(v)?)))
        .collect()
}

/// All scalar components of several expressions in one vector, the
/// direction for a derivative with respect to a tuple of coefficients.
fn flat_concat(exprs: &[Expr]) -> Result<Expr> {
    let mut parts = Vec::new();
    for e in exprs {
        for c in components(e.shape()) {
            parts.push(component(e, &c)?);
        }
    }
    indexing::as_vector(&parts)
}

/// A statement that folds to a literal binds the number itself, so that
/// `e = atan(0.4)` and its printed form `e = 0.3805...` bind equal values.
fn literal_as_number(v: Value) -> Value {
    match &v {
        Value::Expr(e) => match e.payload() {
            Payload::Int(k) if e.op() == Op::IntValue => Value::Int(*k),
            Payload::Real(r) if e.op() == Op::RealValue => Value::Real(r.0),
            _ => v,
        },
        _ => v,
    }
}

/// Parses and elaborates a module. Names in `prelude` are visible as if
/// bound by earlier statements, but are not part of the module.
pub fn parse_with_prelude(src: &str, prelude: &[(&str, Value)]) -> Parsed {
    let (stmts, mut diagnostics) = parse_statements(src);
    let mut el = Elab {
        env: prelude
            .iter()
            .map(|(n, v)| (n.to_string(), v.clone()))
            .collect(),
        failed: HashSet::new(),
        next_count: 0,
        next_label: 0,
    };
    let mut module = SourceModule::default();
    let mut lists: Vec<(&Statement, &'static str)> = Vec::new();
    for s in &stmts {
        if is_reserved(&s.name) {
            diagnostics.push(Diagnostic::error(
                s.name_span,
                "NameError",
                format!("'{}' is a builtin name and cannot be rebound", s.name),
            ));
            continue;
        }
        if el.env.contains_key(&s.name) || el.failed.contains(&s.name) {
            diagnostics.push(Diagnostic::error(
                s.name_span,
                "NameError",
                format!("'{}' is already defined; names are assigned once", s.name),
            ));
            continue;
        }
        match el.eval(&s.value).map(literal_as_number) {
            Ok(v) => {
                if s.name == "forms" || s.name == "elements" {
                    lists.push((s, if s.name == "forms" { "form" } else { "element" }));
                }
                module.by_name.insert(s.name.clone(), module.bindings.len());
                module.bindings.push(Binding {
                    name: s.name.clone(),
                    span: s.span(),
                    value: v.clone(),
                });
                el.env.insert(s.name.clone(), v);
            }
            Err(d) => {
                el.failed.insert(s.name.clone());
                if d.kind != CASCADE {
                    diagnostics.push(d);
                }
            }
        }
    }
    let mut explicit_forms = false;
    for (s, what) in lists {
        let (Ast::List(items) | Ast::Tuple(items)) = &s.value.ast else {
            diagnostics.push(Diagnostic::error(
                s.value.span,
                "TypeError",
                format!("'{}' must be a list of {what} names", s.name),
            ));
            continue;
        };
        let mut names = Vec::new();
        for it in items {
            let ok = match &it.ast {
                Ast::Name(n) => match module.get(n) {
                    Some(Value::Form(_)) => what == "form",
                    Some(Value::Element(_)) => what == "element",
                    _ => false,
                },
                _ => false,
            };
            if let (true, Ast::Name(n)) = (ok, &it.ast) {
                names.push(n.clone());
            } else {
                diagnostics.push(Diagnostic::error(
                    it.span,
                    "TypeError",
                    format!("'{}' lists must name {what}s", s.name),
                ));
            }
        }
        if what == "form" {
            explicit_forms = true;
            module.exports = names;
        } else {
            module.exported_elements = names;
        }
    }
    if !explicit_forms {
        module.exports = module
            .bindings
            .iter()
            .filter(|b| DEFAULT_EXPORTS.contains(&b.name.as_str()))
            .filter(|b| matches!(b.value, Value::Form(_)))
            .map(|b| b.name.clone())
            .collect();
    }
    Parsed {
        module,
        diagnostics,
    }
}

pub fn parse(src: &str) -> Parsed {
    parse_with_prelude(src, &[])
}

fn print_value(p: &Printer, v: &Value, earlier: &[Binding]) -> String {
    if let Value::Form(_) | Value::Measure(_) = v {
        if let Some(b) = earlier.iter().find(|b| b.value == *v) {
            return b.name.clone();
        }
    }
    match v {
        Value::Int(k) => k.to_string(),
        Value::Real(x) => real_literal(*x),
        Value::Str(s) => format!("{s:?}"),
        Value::Expr(e) => p.expr(e),
        Value::Element(e) => p.element(e),
        Value::Cell(c) => c.name().to_string(),
        Value::Index(i) => p.index(*i),
        Value::Measure(m) => p.measure(m),
        Value::Form(f) => p.form(f),
        Value::Builtin(n) => n.to_string(),
        Value::Tuple(items) => {
            let parts: Vec<String> = items.iter().map(|x| print_value(p, x, earlier)).collect();
            if parts.len() == 1 {
                format!("({},)", parts[0])
            } else {
                format!("({})", parts.join(", "))
            }
        }
        Value::List(items) => {
            let parts: Vec<String> = items.iter().map(|x| print_value(p, x, earlier)).collect();
            format!("[{}]", parts.join(", "))
        }
        Value::Dict(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|(k, x)| {
                    format!(
                        "{}: {}",
                        print_value(p, k, earlier),
                        print_value(p, x, earlier)
                    )
                })
                .collect();
            format!("{{{}}}", parts.join(", "))
        }
    }
}

/// Canonical text of a module: one statement per binding, each value
/// written in terms of the names bound before it.
pub fn print_module(m: &SourceModule) -> String {
    let mut p = Printer::new();
    for b in &m.bindings {
        p.reserve(&b.name);
    }
    let mut out = String::new();
    for (k, b) in m.bindings.iter().enumerate() {
        let earlier = &m.bindings[..k];
        let text = match (&b.value, b.name.as_str()) {
            (Value::List(items), "forms" | "elements") => {
                let names: Vec<String> = items
                    .iter()
                    .map(|x| {
                        earlier
                            .iter()
                            .find(|e| e.value == *x)
                            .map_or_else(|| print_value(&p, x, earlier), |e| e.name.clone())
                    })
                    .collect();
                format!("[{}]", names.join(", "))
            }
            (v, _) => print_value(&p, v, earlier),
        };
        out.push_str(&format!("{} = {text}\n", b.name));
        match &b.value {
            Value::Expr(e) => p.name_expr(e, &b.name),
            Value::Element(e) => p.name_element(e, &b.name),
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const POISSON: &str = "\
element = FiniteElement(\"Lagrange\", triangle, 1)
u = TrialFunction(element)
v = TestFunction(element)
f = Coefficient(element)
g = Coefficient(element)
kappa = Coefficient(element)
a = kappa*inner(grad(u), grad(v))*dx
L = f*v*dx - g*v*ds
";

    fn ok(src: &str) -> SourceModule {
        let p = parse(src);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        p.module
    }

    #[test]
    fn poisson_exports_a_and_l() {
        let m = ok(POISSON);
        assert_eq!(m.exports, vec!["a", "L"]);
        assert_eq!(m.form("a").unwrap().arity().unwrap(), 2);
        assert_eq!(m.form("L").unwrap().arity().unwrap(), 1);
        assert_eq!(m.form("L").unwrap().integrals().len(), 2);
    }

    #[test]
    fn counts_are_per_module() {
        let m = ok(POISSON);
        let counts: Vec<usize> = ["f", "g", "kappa"]
            .iter()
            .map(|n| m.expr(n).unwrap().count().unwrap())
            .collect();
        assert_eq!(counts, vec![0, 1, 2]);
        assert_eq!(ok(POISSON).expr("kappa"), m.expr("kappa"));
    }

    #[test]
    fn two_integral_bilinear_form() {
        let m = ok("V = FiniteElement(\"CG\", triangle, 1)\nu = TrialFunction(V)\nv = TestFunction(V)\nf = Coefficient(V)\na = u*v*dx(0) + f*u*v*ds(1)\n");
        let a = m.form("a").unwrap();
        assert_eq!(a.integrals().len(), 2);
        assert_eq!(a.arity().unwrap(), 2);
        assert_eq!(a.integrals()[1].measure().to_string(), "ds(1)");
    }

    #[test]
    fn explicit_forms_list() {
        let m = ok(&format!("{POISSON}b = u*v*dx\nforms = [b, a]\n"));
        assert_eq!(m.exports, vec!["b", "a"]);
    }

    #[test]
    fn errors_carry_spans() {
        let src = "V = VectorElement(\"CG\", triangle, 1)\nu = Coefficient(V)\nbad = u + 1\nworse = bad*2\n";
        let p = parse(src);
        assert_eq!(p.diagnostics.len(), 1, "{:?}", p.diagnostics);
        let d = &p.diagnostics[0];
        assert_eq!(d.kind, "ShapeMismatch");
        assert_eq!(&src[d.span.start..d.span.end], "+");
    }

    #[test]
    fn names_are_single_assignment() {
        let p = parse("x = 1\nx = 2\ndx = 3\n");
        let kinds: Vec<&str> = p.diagnostics.iter().map(|d| d.kind.as_str()).collect();
        assert_eq!(kinds, vec!["NameError", "NameError"]);
        let p = parse("y = z + 1\n");
        assert!(p.diagnostics[0].message.contains("'z'"));
    }

    #[test]
    fn index_letters_can_be_rebound() {
        let m = ok("P = FiniteElement(\"CG\", triangle, 1)\np = Coefficient(P)\nq = p*p\n");
        assert!(m.expr("q").is_some());
    }

    #[test]
    fn partial_indexing_takes_a_row() {
        let m = ok("V = VectorElement(\"CG\", triangle, 1)\nu = Coefficient(V)\nr = grad(u)[0]\n");
        assert_eq!(m.expr("r").unwrap().shape(), &[2]);
    }

    #[test]
    fn module_round_trip() {
        let m = ok(POISSON);
        let text = print_module(&m);
        let m2 = ok(&text);
        for name in ["a", "L"] {
            assert_eq!(m.form(name), m2.form(name), "{text}");
        }
        assert_eq!(print_module(&m2), text);
    }

    #[test]
    fn real_minus_one_keeps_its_type() {
        let src =
            "V = FiniteElement(\"CG\", triangle, 1)\nf = Coefficient(V)\ny = -1.0*f\nz = -f\n";
        let m = ok(src);
        let text = print_module(&m);
        assert!(text.contains("y = -1.0*f"), "{text}");
        assert!(text.contains("z = -f"), "{text}");
        let m2 = ok(&text);
        assert_eq!(m.expr("y"), m2.expr("y"));
        assert_ne!(m.expr("y"), m.expr("z"));
    }
}
