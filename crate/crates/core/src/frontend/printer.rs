//! Canonical text for expressions, forms and modules.
//!
//! The output is valid `.form` syntax: parsing it back yields the same
//! interned nodes. Operand order is the canonical order stored in the DAG,
//! so printing does not depend on handle ids.

use std::collections::{HashMap, HashSet};

use crate::elements::Element;
use crate::forms::{Form, Measure};
use crate::ir::{shape_str, Expr, Index, IndexTerm, MultiIndex, Op, Payload};

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn wrap(s: String, prec: u8, min: u8) -> String {
    if prec < min {
        format!("({s})")
    } else {
        s
    }
}

/// Prints a real so that it reads back as the same real literal.
pub fn real_literal(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Default)]
pub struct Printer {
    names: HashMap<Expr, String>,
    element_names: HashMap<Element, String>,
    shadowed: HashSet<String>,
}

impl Printer {
    pub fn new() -> Printer {
        Printer::default()
    }

    /// Prints `e` as `name` wherever it occurs.
    pub fn name_expr(&mut self, e: &Expr, name: &str) {
        self.shadowed.insert(name.to_string());
        self.names.insert(e.clone(), name.to_string());
    }

    pub fn name_element(&mut self, e: &Element, name: &str) {
        self.shadowed.insert(name.to_string());
        self.element_names.insert(e.clone(), name.to_string());
    }

    /// Marks a name as taken so predefined index letters print explicitly.
    pub fn reserve(&mut self, name: &str) {
        self.shadowed.insert(name.to_string());
    }

    pub fn element(&self, e: &Element) -> String {
        if let Some(n) = self.element_names.get(e) {
            return n.clone();
        }
        use crate::elements::ElementKind as K;
        match e.kind() {
            K::Primitive { .. } => e.to_string(),
            K::Vector { sub, dim } => format!("VectorElement({}, dim={dim})", self.element(sub)),
            K::Tensor {
                sub,
                shape,
                symmetry,
            } => {
                let mut s = format!(
                    "TensorElement({}, shape={}",
                    self.element(sub),
                    shape_str(shape)
                );
                if !symmetry.is_empty() {
                    let entries: Vec<String> = symmetry
                        .iter()
                        .map(|(k, v)| format!("{}: {}", shape_str(k), shape_str(v)))
                        .collect();
                    s.push_str(&format!(", symmetry={{{}}}", entries.join(", ")));
                }
                s + ")"
            }
            K::Mixed(subs) => {
                let parts: Vec<String> = subs.iter().map(|s| self.element(s)).collect();
                format!("MixedElement({})", parts.join(", "))
            }
            K::Enriched(subs) => {
                let parts: Vec<String> = subs.iter().map(|s| self.element(s)).collect();
                format!("EnrichedElement({})", parts.join(", "))
            }
            K::Restricted { sub, domain } => {
                format!("RestrictedElement({}, \"{domain}\")", self.element(sub))
            }
        }
    }

    pub fn index(&self, i: Index) -> String {
        match i.name() {
            Some(n) if !self.shadowed.contains(n) => n.to_string(),
            _ => format!("Index({})", i.0),
        }
    }

    fn term(&self, t: &IndexTerm) -> String {
        match t {
            IndexTerm::Fixed(v) => v.to_string(),
            IndexTerm::Free(i) => self.index(*i),
        }
    }

    fn multi_index(&self, m: &MultiIndex) -> String {
        m.0.iter()
            .map(|t| self.term(t))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn index_tuple(&self, idx: &[Index]) -> String {
        match idx {
            [i] => format!("({},)", self.index(*i)),
            _ => format!(
                "({})",
                idx.iter()
                    .map(|i| self.index(*i))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }

    pub fn expr(&self, e: &Expr) -> String {
        let mut memo = HashMap::new();
        self.go(e, &mut memo).0
    }

    fn call(
        &self,
        name: &str,
        args: &[&Expr],
        memo: &mut HashMap<Expr, (String, u8)>,
    ) -> (String, u8) {
        let parts: Vec<String> = args.iter().map(|a| self.go(a, memo).0).collect();
        (format!("{name}({})", parts.join(", ")), ATOM)
    }

    fn go(&self, e: &Expr, memo: &mut HashMap<Expr, (String, u8)>) -> (String, u8) {
        if let Some(n) = self.names.get(e) {
            return (n.clone(), ATOM);
        }
        if let Some(r) = memo.get(e) {
            return r.clone();
        }
        let r = self.node(e, memo);
        memo.insert(e.clone(), r.clone());
        r
    }

    fn node(&self, e: &Expr, memo: &mut HashMap<Expr, (String, u8)>) -> (String, u8) {
        let ops = e.operands();
        let sub = |m: &mut HashMap<Expr, (String, u8)>, x: &Expr, min: u8| {
            let (s, p) = self.go(x, m);
            wrap(s, p, min)
        };
        match (e.op(), e.payload()) {
            (Op::Zero, Payload::Zero { shape, free }) => {
                if shape.is_empty() && free.is_empty() {
                    ("0".into(), ATOM)
                } else if free.is_empty() {
                    (format!("zero({})", shape_str(shape)), ATOM)
                } else {
                    let entries: Vec<String> = free
                        .iter()
                        .map(|(i, d)| format!("{}: {d}", self.index(*i)))
                        .collect();
                    (
                        format!("zero({}, {{{}}})", shape_str(shape), entries.join(", ")),
                        ATOM,
                    )
                }
            }
            (Op::IntValue, Payload::Int(v)) => (v.to_string(), if *v < 0 { UNARY } else { ATOM }),
            (Op::RealValue, Payload::Real(r)) => {
                (real_literal(r.0), if r.0 < 0.0 { UNARY } else { ATOM })
            }
            (Op::Identity, Payload::Dim(d)) => (format!("Identity({d})"), ATOM),
            (Op::PermutationSymbol, Payload::Dim(d)) => (format!("PermutationSymbol({d})"), ATOM),
            (Op::UnitVector, Payload::UnitVector { dim, axis }) => {
                (format!("UnitVector({dim}, {axis})"), ATOM)
            }
            (op, Payload::Cell(c)) => {
                let name = match op {
                    Op::SpatialCoordinate => "SpatialCoordinate",
                    Op::FacetNormal => "FacetNormal",
                    Op::CellVolume => "CellVolume",
                    Op::Circumradius => "Circumradius",
                    Op::FacetArea => "FacetArea",
                    _ => "CellSurfaceArea",
                };
                (format!("{name}({c})"), ATOM)
            }
            (Op::Constant, Payload::Constant { cell, count }) => {
                (format!("Constant({cell}, count={count})"), ATOM)
            }
            (Op::Coefficient, Payload::Function { element, count }) => (
                format!("Coefficient({}, count={count})", self.element(element)),
                ATOM,
            ),
            (Op::Argument, Payload::Function { element, count }) => (
                format!("Argument({}, {count})", self.element(element)),
                ATOM,
            ),
            (Op::Indexed, Payload::MultiIndex(m)) => (
                format!("{}[{}]", sub(memo, &ops[0], ATOM), self.multi_index(m)),
                ATOM,
            ),
            (Op::ComponentTensor, Payload::MultiIndex(m)) => {
                let idx = m.as_all_free().unwrap_or_default();
                (
                    format!(
                        "as_tensor({}, {})",
                        self.go(&ops[0], memo).0,
                        self.index_tuple(&idx)
                    ),
                    ATOM,
                )
            }
            (Op::IndexSum, Payload::Index(i)) => {
                if let Some(s) = self.implicit_sum(e, memo) {
                    return s;
                }
                (
                    format!(
                        "index_sum({}, {})",
                        self.go(&ops[0], memo).0,
                        self.index(*i)
                    ),
                    ATOM,
                )
            }
            (Op::ListTensor, _) => {
                let parts: Vec<String> = ops.iter().map(|o| self.go(o, memo).0).collect();
                let tuple = if parts.len() == 1 {
                    format!("({},)", parts[0])
                } else {
                    format!("({})", parts.join(", "))
                };
                (format!("as_vector({tuple})"), ATOM)
            }
            (Op::Sum, _) => {
                let left = sub(memo, &ops[0], SUM);
                match negated(&ops[1]) {
                    Some(x) => (format!("{left} - {}", sub(memo, &x, PRODUCT)), SUM),
                    None => (format!("{left} + {}", sub(memo, &ops[1], PRODUCT)), SUM),
                }
            }
            (Op::Product, _) => {
                if ops[0].free().keys().any(|i| ops[1].free().contains_key(i)) {
                    return self.call("product", &[&ops[0], &ops[1]], memo);
                }
                if is_minus_one(&ops[0]) {
                    return (format!("-{}", sub(memo, &ops[1], POWER)), UNARY);
                }
                (
                    format!(
                        "{}*{}",
                        sub(memo, &ops[0], PRODUCT),
                        sub(memo, &ops[1], UNARY)
                    ),
                    PRODUCT,
                )
            }
            (Op::Division, _) => (
                format!(
                    "{}/{}",
                    sub(memo, &ops[0], PRODUCT),
                    sub(memo, &ops[1], UNARY)
                ),
                PRODUCT,
            ),
            (Op::Power, _) => (
                format!(
                    "{}**{}",
                    sub(memo, &ops[0], ATOM),
                    sub(memo, &ops[1], UNARY)
                ),
                POWER,
            ),
            (Op::Transposed, _) => self.call("transpose", &[&ops[0]], memo),
            (Op::Dx, Payload::Term(t)) => (
                format!("Dx({}, {})", self.go(&ops[0], memo).0, self.term(t)),
                ATOM,
            ),
            (Op::Variable, Payload::Label(l)) => (
                format!("variable({}, label={l})", self.go(&ops[0], memo).0),
                ATOM,
            ),
            (Op::VariableDerivative, _) => self.call("diff", &[&ops[0], &ops[1]], memo),
            (Op::CoefficientDerivative, Payload::Count(n)) => {
                let tuple = |m: &mut HashMap<Expr, (String, u8)>, xs: &[Expr]| {
                    let parts: Vec<String> = xs.iter().map(|x| self.go(x, m).0).collect();
                    if parts.len() == 1 {
                        format!("({},)", parts[0])
                    } else {
                        format!("({})", parts.join(", "))
                    }
                };
                let body = self.go(&ops[0], memo).0;
                let targets = tuple(memo, &ops[1..1 + n]);
                let dirs = tuple(memo, &ops[1 + n..1 + 2 * n]);
                let pairs = &ops[1 + 2 * n..];
                if pairs.is_empty() {
                    (
                        format!("coefficient_derivative({body}, {targets}, {dirs})"),
                        ATOM,
                    )
                } else {
                    let entries: Vec<String> = pairs
                        .chunks(2)
                        .map(|c| format!("{}: {}", self.go(&c[0], memo).0, self.go(&c[1], memo).0))
                        .collect();
                    (
                        format!(
                            "coefficient_derivative({body}, {targets}, {dirs}, {{{}}})",
                            entries.join(", ")
                        ),
                        ATOM,
                    )
                }
            }
            (Op::PositiveRestricted, _) => (format!("{}('+')", sub(memo, &ops[0], ATOM)), ATOM),
            (Op::NegativeRestricted, _) => (format!("{}('-')", sub(memo, &ops[0], ATOM)), ATOM),
            (Op::And, _) => self.call("And", &[&ops[0], &ops[1]], memo),
            (Op::Or, _) => self.call("Or", &[&ops[0], &ops[1]], memo),
            (Op::Not, _) => self.call("Not", &[&ops[0]], memo),
            (op, _) => {
                let args: Vec<&Expr> = ops.iter().collect();
                self.call(op.name(), &args, memo)
            }
        }
    }

    /// `a*b` for a chain of index sums over exactly the indices shared by
    /// the two factors, in the order `*` introduces them; `Dx(e, i)` when
    /// the sum is over an index already free in `e`.
    fn implicit_sum(
        &self,
        e: &Expr,
        memo: &mut HashMap<Expr, (String, u8)>,
    ) -> Option<(String, u8)> {
        let mut summed = Vec::new();
        let mut cur = e.clone();
        while cur.op() == Op::IndexSum && !self.names.contains_key(&cur) {
            if let Payload::Index(i) = cur.payload() {
                summed.push(*i);
            }
            cur = cur.operand(0).clone();
        }
        summed.reverse();
        if self.names.contains_key(&cur) {
            return None;
        }
        match cur.op() {
            Op::Product => {
                let (a, b) = (cur.operand(0), cur.operand(1));
                let shared: Vec<Index> = a
                    .free()
                    .keys()
                    .filter(|i| b.free().contains_key(i))
                    .copied()
                    .collect();
                if shared != summed || !a.is_scalar() || !b.is_scalar() {
                    return None;
                }
                let l = self.go(a, memo);
                let r = self.go(b, memo);
                Some((
                    format!("{}*{}", wrap(l.0, l.1, PRODUCT), wrap(r.0, r.1, UNARY)),
                    PRODUCT,
                ))
            }
            Op::Dx => {
                let inner = cur.operand(0);
                match (cur.payload(), summed.as_slice()) {
                    (Payload::Term(IndexTerm::Free(i)), [s])
                        if i == s && inner.free().contains_key(i) =>
                    {
                        Some((
                            format!("Dx({}, {})", self.go(inner, memo).0, self.index(*i)),
                            ATOM,
                        ))
                    }
                    _ => None,
                }
            }
            _ => None,
        }
    }

    pub fn measure(&self, m: &Measure) -> String {
        m.to_string()
    }

    pub fn form(&self, f: &Form) -> String {
        if f.integrals().is_empty() {
            return "0*dx".into();
        }
        let mut out = String::new();
        for (k, itg) in f.integrals().iter().enumerate() {
            let mut memo = HashMap::new();
            let (sign, integrand) = match negated(itg.integrand()) {
                Some(x) if k > 0 => (" - ", x),
                _ => (" + ", itg.integrand().clone()),
            };
            let (s, p) = self.go(&integrand, &mut memo);
            if k > 0 {
                out.push_str(sign);
            }
            out.push_str(&format!(
                "{}*{}",
                wrap(s, p, PRODUCT),
                self.measure(itg.measure())
            ));
        }
        out
    }
}

// Only the integer literal: `-x` reads back as `-1*x`, while a real -1.0
// factor must keep its type.
fn is_minus_one(e: &Expr) -> bool {
    matches!(e.payload(), Payload::Int(-1))
}

/// `x` if `e` is `-1*x`.
fn negated(e: &Expr) -> Option<Expr> {
    if e.op() == Op::Product && is_minus_one(e.operand(0)) {
        let x = e.operand(1);
        if !x.free().keys().any(|i| e.operand(0).free().contains_key(i)) {
            return Some(x.clone());
        }
    }
    None
}

/// Canonical text of a single expression with every terminal written out.
pub fn print_expr(e: &Expr) -> String {
    Printer::new().expr(e)
}

pub fn print_form(f: &Form) -> String {
    Printer::new().form(f)
}
