//! Measures, integrals and forms, the form operators (lhs/rhs, adjoint,
//! action, replace, derivative) and structural validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::algorithms::{build_list_dag, replace_terminals};
use crate::elements::{Element, ElementKind};
use crate::error::{Error, Result};
use crate::indexing::{component, from_components};
use crate::ir::{self, argument, int, product, rebuild, shape_str, sum, Expr, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainType {
    Cell,
    ExteriorFacet,
    InteriorFacet,
    Surface,
    Point,
    MacroCell,
}

impl DomainType {
    pub const ALL: [DomainType; 6] = [
        DomainType::Cell,
        DomainType::ExteriorFacet,
        DomainType::InteriorFacet,
        DomainType::Surface,
        DomainType::Point,
        DomainType::MacroCell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainType::Cell => "cell",
            DomainType::ExteriorFacet => "exterior_facet",
            DomainType::InteriorFacet => "interior_facet",
            DomainType::Surface => "surface",
            DomainType::Point => "point",
            DomainType::MacroCell => "macro_cell",
        }
    }

    pub fn from_name(name: &str) -> Option<DomainType> {
        DomainType::ALL.into_iter().find(|d| d.name() == name)
    }

    /// The short measure symbol, for the three kinds that have one.
    pub fn symbol(self) -> Option<&'static str> {
        match self {
            DomainType::Cell => Some("dx"),
            DomainType::ExteriorFacet => Some("ds"),
            DomainType::InteriorFacet => Some("dS"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Measure {
    pub domain_type: DomainType,
    pub subdomain_id: usize,
    pub metadata: BTreeMap<String, String>,
}

impl Measure {
    pub fn new(domain_type: DomainType, subdomain_id: usize) -> Measure {
        Measure {
            domain_type,
            subdomain_id,
            metadata: BTreeMap::new(),
        }
    }

    pub fn dx() -> Measure {
        Measure::new(DomainType::Cell, 0)
    }

    pub fn ds() -> Measure {
        Measure::new(DomainType::ExteriorFacet, 0)
    }

    #[allow(non_snake_case)]
    pub fn dS() -> Measure {
        Measure::new(DomainType::InteriorFacet, 0)
    }

    pub fn with_id(mut self, id: usize) -> Measure {
        self.subdomain_id = id;
        self
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let meta = if self.metadata.is_empty() {
            String::new()
        } else {
            let entries: Vec<String> = self
                .metadata
                .iter()
                .map(|(k, v)| format!("{k:?}: {v:?}"))
                .collect();
            format!(", metadata={{{}}}", entries.join(", "))
        };
        match self.domain_type.symbol() {
            Some(sym) if self.subdomain_id == 0 && meta.is_empty() => f.write_str(sym),
            Some(sym) => write!(f, "{sym}({}{meta})", self.subdomain_id),
            None => write!(
                f,
                "Measure(\"{}\", {}{meta})",
                self.domain_type.name(),
                self.subdomain_id
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Integral {
    integrand: Expr,
    measure: Measure,
}

impl Integral {
    pub fn integrand(&self) -> &Expr {
        &self.integrand
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }
}

/// A sum of integrals. Integrals over the same measure are merged.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Form {
    integrals: Vec<Integral>,
}

/// Location of a problem inside a form: integral position and the operand
/// positions leading from the integrand to the offending node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub integral: usize,
    pub path: Vec<usize>,
    pub error: Error,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path: Vec<String> = self.path.iter().map(|p| p.to_string()).collect();
        write!(
            f,
            "{}: {} (integral {}, node path [{}])",
            self.error.kind_name(),
            self.error,
            self.integral,
            path.join(", ")
        )
    }
}

/// Finds a function or cellwise quantity outside any restriction (for
/// interior facets) or any restriction at all (elsewhere).
fn restriction_violation(integrand: &Expr, interior: bool) -> Option<(Vec<usize>, Error)> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<(Expr, bool, Vec<usize>)> = vec![(integrand.clone(), false, vec![])];
    while let Some((e, under, path)) = stack.pop() {
        if !seen.insert((e.id(), under)) {
            continue;
        }
        let restriction = matches!(e.op(), Op::PositiveRestricted | Op::NegativeRestricted);
        if restriction && !interior {
            return Some((
                path,
                Error::SpuriousRestriction(format!(
                    "{} outside an interior facet integral",
                    e.op().name()
                )),
            ));
        }
        if !interior && !e.contains_restriction() {
            continue;
        }
        if interior && !under && needs_restriction(&e) {
            return Some((
                path,
                Error::MissingRestriction(format!(
                    "{} in an interior facet integral",
                    e.op().name()
                )),
            ));
        }
        for (k, o) in e.operands().iter().enumerate() {
            let mut p = path.clone();
            p.push(k);
            stack.push((o.clone(), under || restriction, p));
        }
    }
    None
}

/// Functions and cellwise geometric quantities take different values on the
/// two sides of an interior facet.
fn needs_restriction(e: &Expr) -> bool {
    match e.op() {
        Op::Coefficient | Op::Argument => !e.element().is_some_and(Element::is_global_constant),
        Op::FacetNormal | Op::CellVolume | Op::Circumradius | Op::CellSurfaceArea => true,
        _ => false,
    }
}

fn check_integrand(integrand: &Expr, measure: &Measure) -> Option<(Vec<usize>, Error)> {
    if integrand.is_boolean() {
        return Some((vec![], Error::BooleanMisuse("boolean integrand".into())));
    }
    if !integrand.is_scalar() {
        return Some((
            vec![],
            Error::NonScalarIntegrand(shape_str(integrand.shape())),
        ));
    }
    if !integrand.free().is_empty() {
        let names: Vec<String> = integrand.free().keys().map(|i| i.to_string()).collect();
        return Some((vec![], Error::FreeIndexInIntegrand(names.join(", "))));
    }
    restriction_violation(integrand, measure.domain_type == DomainType::InteriorFacet)
}

/// `integrand * measure`. A zero integrand gives the empty form.
pub fn make_integral(integrand: &Expr, measure: &Measure) -> Result<Form> {
    if let Some((_, err)) = check_integrand(integrand, measure) {
        return Err(err);
    }
    if integrand.is_zero() {
        return Ok(Form::default());
    }
    Ok(Form {
        integrals: vec![Integral {
            integrand: integrand.clone(),
            measure: measure.clone(),
        }],
    })
}

/// Argument numbers appearing below `e`, memoized over the DAG.
struct ArgSets {
    memo: HashMap<Expr, BTreeSet<usize>>,
}

impl ArgSets {
    fn new() -> Self {
        ArgSets {
            memo: HashMap::new(),
        }
    }

    fn of(&mut self, e: &Expr) -> BTreeSet<usize> {
        if let Some(s) = self.memo.get(e) {
            return s.clone();
        }
        let dag = build_list_dag(e);
        for (v, edges) in dag.vertices.iter().zip(&dag.edges) {
            if self.memo.contains_key(v) {
                continue;
            }
            let mut s = BTreeSet::new();
            if v.op() == Op::Argument {
                s.insert(v.count().expect("argument number"));
            }
            for &j in edges {
                s.extend(self.memo[&dag.vertices[j]].iter().copied());
            }
            self.memo.insert(v.clone(), s);
        }
        self.memo[e].clone()
    }
}

fn is_bilinear(op: Op) -> bool {
    matches!(
        op,
        Op::Product | Op::Dot | Op::Inner | Op::Outer | Op::Cross
    )
}

fn is_linear_unary(op: Op) -> bool {
    matches!(
        op,
        Op::Indexed
            | Op::ComponentTensor
            | Op::IndexSum
            | Op::PositiveRestricted
            | Op::NegativeRestricted
            | Op::Transposed
            | Op::Trace
            | Op::Sym
            | Op::Skew
            | Op::Dev
            | Op::Diag
            | Op::DiagVector
    )
}

fn sum_all(terms: &[Expr]) -> Result<Expr> {
    let mut it = terms.iter();
    let first = it.next().expect("at least one term").clone();
    it.try_fold(first, |acc, t| sum(&acc, t))
}

/// Groups terms by argument set, summing each group.
fn group_terms(terms: Vec<Expr>, sets: &mut ArgSets) -> Result<Vec<(BTreeSet<usize>, Expr)>> {
    let mut groups: Vec<(BTreeSet<usize>, Vec<Expr>)> = Vec::new();
    for t in terms {
        let s = sets.of(&t);
        match groups.iter_mut().find(|(g, _)| *g == s) {
            Some((_, ts)) => ts.push(t),
            None => groups.push((s, vec![t])),
        }
    }
    groups
        .into_iter()
        .map(|(s, ts)| Ok((s, sum_all(&ts)?)))
        .collect()
}

/// Splits `e` into additive terms with uniform argument sets, distributing
/// products and linear operators over sums only where the summands differ
/// in their arguments.
fn split_terms(e: &Expr, sets: &mut ArgSets) -> Result<Vec<Expr>> {
    let op = e.op();
    if op == Op::Sum {
        let mut out = split_terms(e.operand(0), sets)?;
        out.extend(split_terms(e.operand(1), sets)?);
        return Ok(out);
    }
    let linear_slots: Vec<usize> = if is_bilinear(op) {
        vec![0, 1]
    } else if op == Op::Division || is_linear_unary(op) {
        vec![0]
    } else {
        return Ok(vec![e.clone()]);
    };
    let mut choices: Vec<Vec<Expr>> = Vec::new();
    let mut split_any = false;
    for (k, o) in e.operands().iter().enumerate() {
        if linear_slots.contains(&k) {
            let groups = group_terms(split_terms(o, sets)?, sets)?;
            split_any |= groups.len() > 1;
            choices.push(groups.into_iter().map(|(_, t)| t).collect());
        } else {
            choices.push(vec![o.clone()]);
        }
    }
    if !split_any {
        return Ok(vec![e.clone()]);
    }
    let mut combos: Vec<Vec<Expr>> = vec![vec![]];
    for c in &choices {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                c.iter().map(move |x| {
                    let mut p = prefix.clone();
                    p.push(x.clone());
                    p
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for ops in combos {
        let t = rebuild(e, &ops)?;
        if !t.is_zero() {
            out.push(t);
        }
    }
    Ok(out)
}

/// Structural linearity check of one term: returns the argument set or the
/// path to a node where arguments enter nonlinearly.
fn check_linear(
    e: &Expr,
    sets: &mut ArgSets,
) -> std::result::Result<BTreeSet<usize>, (Vec<usize>, Error)> {
    let nonlinear = |what: &str| Error::Arity(format!("argument used nonlinearly in {what}"));
    let op = e.op();
    let ops = e.operands();
    let child = |k: usize, sets: &mut ArgSets| {
        check_linear(&ops[k], sets).map_err(|(mut p, err)| {
            p.insert(0, k);
            (p, err)
        })
    };
    if e.is_terminal() {
        return Ok(sets.of(e));
    }
    if sets.of(e).is_empty() {
        return Ok(BTreeSet::new());
    }
    match op {
        Op::Sum => {
            let (a, b) = (child(0, sets)?, child(1, sets)?);
            if a != b {
                return Err((
                    vec![],
                    Error::Arity("sum of terms with different arguments".into()),
                ));
            }
            Ok(a)
        }
        _ if is_bilinear(op) => {
            let (a, b) = (child(0, sets)?, child(1, sets)?);
            if !a.is_disjoint(&b) {
                return Err((vec![], nonlinear("a product of an argument with itself")));
            }
            Ok(a.union(&b).copied().collect())
        }
        Op::Division => {
            if !sets.of(&ops[1]).is_empty() {
                return Err((vec![1], nonlinear("a denominator")));
            }
            child(0, sets)
        }
        Op::Conditional => {
            if !sets.of(&ops[0]).is_empty() {
                return Err((vec![0], nonlinear("a condition")));
            }
            let (a, b) = (child(1, sets)?, child(2, sets)?);
            if a != b {
                return Err((
                    vec![],
                    Error::Arity("conditional branches with different arguments".into()),
                ));
            }
            Ok(a)
        }
        Op::ListTensor => {
            let mut common: Option<BTreeSet<usize>> = None;
            for k in 0..ops.len() {
                let s = child(k, sets)?;
                if ops[k].is_zero() {
                    continue;
                }
                match &common {
                    None => common = Some(s),
                    Some(c) if *c != s => {
                        return Err((
                            vec![k],
                            Error::Arity("components with different arguments".into()),
                        ))
                    }
                    _ => {}
                }
            }
            Ok(common.unwrap_or_default())
        }
        _ if is_linear_unary(op)
            || matches!(
                op,
                Op::Grad
                    | Op::NablaGrad
                    | Op::Div
                    | Op::NablaDiv
                    | Op::Curl
                    | Op::Rot
                    | Op::Dx
                    | Op::Variable
                    | Op::VariableDerivative
                    | Op::CoefficientDerivative
                    | Op::ExteriorDerivative
            ) =>
        {
            child(0, sets)
        }
        _ => {
            let k = (0..ops.len())
                .find(|&k| !sets.of(&ops[k]).is_empty())
                .unwrap_or(0);
            Err((vec![k], nonlinear(op.name())))
        }
    }
}

fn negate(e: &Expr) -> Result<Expr> {
    if e.op() == Op::Product {
        if let Some(c) = e.operand(0).literal_value() {
            if c == -1.0 {
                return Ok(e.operand(1).clone());
            }
            let lit = if e.operand(0).op() == Op::IntValue {
                int(-(c as i64))
            } else {
                ir::real(-c)?
            };
            return product(&lit, e.operand(1));
        }
    }
    ir::neg(e)
}

impl Form {
    pub fn empty() -> Form {
        Form::default()
    }

    pub fn integrals(&self) -> &[Integral] {
        &self.integrals
    }

    pub fn is_empty(&self) -> bool {
        self.integrals.is_empty()
    }

    fn push(&mut self, integral: Integral) -> Result<()> {
        match self
            .integrals
            .iter()
            .position(|i| i.measure == integral.measure)
        {
            Some(k) => {
                let merged = sum(&self.integrals[k].integrand, &integral.integrand)?;
                if merged.is_zero() {
                    self.integrals.remove(k);
                } else {
                    self.integrals[k].integrand = merged;
                }
            }
            None if integral.integrand.is_zero() => {}
            None => self.integrals.push(integral),
        }
        Ok(())
    }

    /// Builds a form from integrands, validating each and merging measures.
    pub fn from_integrals(items: impl IntoIterator<Item = (Expr, Measure)>) -> Result<Form> {
        let mut f = Form::default();
        for (e, m) in items {
            f = f.add(&make_integral(&e, &m)?)?;
        }
        Ok(f)
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        let mut out = self.clone();
        for i in &other.integrals {
            out.push(i.clone())?;
        }
        Ok(out)
    }

    pub fn neg(&self) -> Result<Form> {
        self.map_integrands(negate)
    }

    pub fn sub(&self, other: &Form) -> Result<Form> {
        self.add(&other.neg()?)
    }

    /// Multiplies every integrand by the scalar `s`.
    pub fn scale(&self, s: &Expr) -> Result<Form> {
        self.map_integrands(|e| product(s, e))
    }

    pub fn map_integrands(&self, mut f: impl FnMut(&Expr) -> Result<Expr>) -> Result<Form> {
        let mut out = Form::default();
        for i in &self.integrals {
            let e = f(&i.integrand)?;
            if let Some((_, err)) = check_integrand(&e, &i.measure) {
                return Err(err);
            }
            out.push(Integral {
                integrand: e,
                measure: i.measure.clone(),
            })?;
        }
        Ok(out)
    }

    fn terminals_where(&self, pred: impl Fn(&Expr) -> bool) -> Vec<Expr> {
        let mut seen = BTreeMap::new();
        for i in &self.integrals {
            for t in build_list_dag(&i.integrand).terminals() {
                if pred(t) {
                    seen.insert(
                        (t.count().unwrap_or(0), t.structural_hash(), t.id()),
                        t.clone(),
                    );
                }
            }
        }
        seen.into_values().collect()
    }

    /// Argument terminals, ordered by number.
    pub fn arguments(&self) -> Vec<Expr> {
        self.terminals_where(|t| t.op() == Op::Argument)
    }

    /// Coefficient and constant terminals, ordered by count.
    pub fn coefficients(&self) -> Vec<Expr> {
        self.terminals_where(|t| matches!(t.op(), Op::Coefficient | Op::Constant))
    }

    /// Additive terms of every integrand with their argument sets.
    fn classified_terms(&self) -> Result<Vec<(usize, BTreeSet<usize>, Expr)>> {
        let mut sets = ArgSets::new();
        let mut out = Vec::new();
        for (k, i) in self.integrals.iter().enumerate() {
            for (s, t) in group_terms(split_terms(&i.integrand, &mut sets)?, &mut sets)? {
                out.push((k, s, t));
            }
        }
        Ok(out)
    }

    /// Number of distinct arguments. Uniformity across terms is checked by
    /// [`validate_form`].
    pub fn arity(&self) -> Result<usize> {
        if self.integrals.is_empty() {
            return Err(Error::Arity("the empty form has no arity".into()));
        }
        Ok(self.arguments().len())
    }

    fn terms_of_arity(&self, n: usize, negated: bool) -> Result<Form> {
        let mut sets = ArgSets::new();
        let mut out = Form::default();
        for (k, s, t) in self.classified_terms()? {
            if let Err((_, err)) = check_linear(&t, &mut sets) {
                return Err(err);
            }
            if s.is_empty() || s.len() > 2 {
                return Err(Error::Arity(format!(
                    "a term with {} arguments has no place in lhs or rhs",
                    s.len()
                )));
            }
            if s.len() == n {
                let t = if negated { negate(&t)? } else { t };
                out.push(Integral {
                    integrand: t,
                    measure: self.integrals[k].measure.clone(),
                })?;
            }
        }
        Ok(out)
    }

    /// Sum of the bilinear terms.
    pub fn lhs(&self) -> Result<Form> {
        self.terms_of_arity(2, false)
    }

    /// Negated sum of the linear terms.
    pub fn rhs(&self) -> Result<Form> {
        self.terms_of_arity(1, true)
    }

    pub fn system(&self) -> Result<(Form, Form)> {
        Ok((self.lhs()?, self.rhs()?))
    }

    /// Substitutes terminals throughout every integrand.
    pub fn replace(&self, mapping: &HashMap<Expr, Expr>) -> Result<Form> {
        self.map_integrands(|e| replace_terminals(e, mapping))
    }

    /// Swaps the numbers of the two arguments of a bilinear form.
    pub fn adjoint(&self) -> Result<Form> {
        let args = self.arguments();
        if args.len() != 2 {
            return Err(Error::Arity(format!(
                "adjoint needs a bilinear form, got arity {}",
                args.len()
            )));
        }
        let (test, trial) = (&args[0], &args[1]);
        let elem = |a: &Expr| a.element().expect("argument element").clone();
        let mapping = HashMap::from([
            (
                test.clone(),
                argument(&elem(test), trial.count().expect("argument number")),
            ),
            (
                trial.clone(),
                argument(&elem(trial), test.count().expect("argument number")),
            ),
        ]);
        self.replace(&mapping)
    }

    /// Replaces the highest-numbered argument by `w`.
    pub fn action(&self, w: &Expr) -> Result<Form> {
        let args = self.arguments();
        let Some(trial) = args.last() else {
            return Err(Error::Arity(
                "action needs a form with at least one argument".into(),
            ));
        };
        if trial.shape() != w.shape() || !w.free().is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "action with a function of shape {} on an argument of shape {}",
                shape_str(w.shape()),
                shape_str(trial.shape())
            )));
        }
        self.replace(&HashMap::from([(trial.clone(), w.clone())]))
    }

    /// Gateaux derivative of every integrand. Without a direction a new
    /// argument numbered after the existing ones is created.
    pub fn derivative(&self, wrt: &Wrt, direction: Option<&Expr>) -> Result<Form> {
        let next = self
            .arguments()
            .iter()
            .filter_map(|a| a.count())
            .max()
            .map_or(0, |n| n + 1);
        let (targets, directions) = derivative_directions(wrt, direction, next)?;
        self.map_integrands(|e| {
            let d = ir::coefficient_derivative(e, &targets, &directions, &[])?;
            crate::differentiation::apply_derivatives(&d)
        })
    }
}

/// What a form derivative is taken with respect to.
#[derive(Debug, Clone)]
pub enum Wrt {
    Coefficient(Expr),
    /// Several coefficients differentiated together; the direction lives
    /// on the mixed space of their elements.
    Tuple(Vec<Expr>),
    /// One component of a coefficient; the direction is padded with zeros.
    Component(Expr, Vec<usize>),
}

impl Wrt {
    /// Classifies an expression: a coefficient, a fixed component of one,
    /// or a list of coefficients.
    pub fn from_expr(e: &Expr) -> Result<Wrt> {
        match e.op() {
            Op::Coefficient | Op::Constant => Ok(Wrt::Coefficient(e.clone())),
            Op::Indexed if matches!(e.operand(0).op(), Op::Coefficient | Op::Constant) => {
                let mi = e.multi_index().expect("indexed payload");
                let fixed: Option<Vec<usize>> =
                    mi.0.iter()
                        .map(|t| match t {
                            ir::IndexTerm::Fixed(v) => Some(*v),
                            ir::IndexTerm::Free(_) => None,
                        })
                        .collect();
                match fixed {
                    Some(c) => Ok(Wrt::Component(e.operand(0).clone(), c)),
                    None => Err(Error::NotACoefficient(
                        "component selection with free indices".into(),
                    )),
                }
            }
            _ => Err(Error::NotACoefficient(format!(
                "cannot differentiate with respect to {}",
                e.op().name()
            ))),
        }
    }
}

fn coefficient_element(c: &Expr) -> Result<Element> {
    match c.op() {
        Op::Coefficient => Ok(c.element().expect("coefficient element").clone()),
        Op::Constant => {
            let cell = ir::cell_of_dim(c.gdim().unwrap_or(1))?;
            Element::finite("Real", cell, 0)
        }
        _ => Err(Error::NotACoefficient(format!(
            "{} is not a coefficient",
            c.op().name()
        ))),
    }
}

fn check_direction(expected: &[usize], v: &Expr) -> Result<()> {
    if v.shape() != expected || !v.free().is_empty() {
        return Err(Error::ElementMismatch(format!(
            "direction of shape {} where {} is needed",
            shape_str(v.shape()),
            shape_str(expected)
        )));
    }
    Ok(())
}

/// Targets and matching directions for a form derivative.
fn derivative_directions(
    wrt: &Wrt,
    direction: Option<&Expr>,
    next: usize,
) -> Result<(Vec<Expr>, Vec<Expr>)> {
    match wrt {
        Wrt::Coefficient(u) => {
            let elem = coefficient_element(u)?;
            let v = match direction {
                Some(v) => v.clone(),
                None => argument(&elem, next),
            };
            check_direction(u.shape(), &v)?;
            Ok((vec![u.clone()], vec![v]))
        }
        Wrt::Tuple(us) => {
            if us.is_empty() {
                return Err(Error::NotACoefficient("empty coefficient tuple".into()));
            }
            let elems = us
                .iter()
                .map(coefficient_element)
                .collect::<Result<Vec<_>>>()?;
            let total: usize = us.iter().map(|u| u.shape().iter().product::<usize>()).sum();
            let v = match direction {
                Some(v) => v.clone(),
                None if elems.len() == 1 => argument(&elems[0], next),
                None => argument(&Element::mixed(elems)?, next),
            };
            let flat_shape: Vec<usize> = if us.len() == 1 {
                us[0].shape().to_vec()
            } else {
                vec![total]
            };
            check_direction(&flat_shape, &v)?;
            if us.len() == 1 {
                return Ok((us.clone(), vec![v]));
            }
            let mut offset = 0;
            let mut dirs = Vec::new();
            for u in us {
                let shape = u.shape().to_vec();
                let size: usize = shape.iter().product();
                let base = offset;
                dirs.push(from_components(&shape, &mut |c| {
                    component(&v, &[base + crate::elements::flat_index(&shape, c)])
                })?);
                offset += size;
            }
            Ok((us.clone(), dirs))
        }
        Wrt::Component(u, c) => {
            let elem = coefficient_element(u)?;
            let sub_shape: Vec<usize> = u.shape()[c.len()..].to_vec();
            let v = match direction {
                Some(v) => v.clone(),
                None => {
                    let sub = match elem.kind() {
                        ElementKind::Vector { sub, .. } | ElementKind::Tensor { sub, .. }
                            if sub_shape.is_empty() =>
                        {
                            sub.clone()
                        }
                        _ => {
                            return Err(Error::ElementMismatch(
                                "cannot derive a direction space for this component".into(),
                            ))
                        }
                    };
                    argument(&sub, next)
                }
            };
            check_direction(&sub_shape, &v)?;
            let padded = crate::differentiation::pad_direction(u, std::slice::from_ref(c), &v)?;
            Ok((vec![u.clone()], vec![padded]))
        }
    }
}

/// Checks every integral of `form` and lists the problems found.
pub fn validate_form(form: &Form) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut sets = ArgSets::new();
    let mut common: Option<BTreeSet<usize>> = None;
    for (k, integral) in form.integrals.iter().enumerate() {
        if let Some((path, error)) = check_integrand(&integral.integrand, &integral.measure) {
            out.push(Violation {
                integral: k,
                path,
                error,
            });
            continue;
        }
        let terms = match split_terms(&integral.integrand, &mut sets)
            .and_then(|t| group_terms(t, &mut sets))
        {
            Ok(t) => t,
            Err(error) => {
                out.push(Violation {
                    integral: k,
                    path: vec![],
                    error,
                });
                continue;
            }
        };
        for (s, t) in terms {
            if let Err((path, error)) = check_linear(&t, &mut sets) {
                let path = locate(&integral.integrand, &t).map(|mut p| {
                    p.extend(path.iter().copied());
                    p
                });
                out.push(Violation {
                    integral: k,
                    path: path.unwrap_or_default(),
                    error,
                });
            }
            match &common {
                None => common = Some(s),
                Some(c) if *c != s => out.push(Violation {
                    integral: k,
                    path: locate(&integral.integrand, &t).unwrap_or_default(),
                    error: Error::Arity("terms depend on different sets of arguments".into()),
                }),
                _ => {}
            }
        }
    }
    out
}

/// Operand path from `root` to `target`, if `target` occurs in it.
fn locate(root: &Expr, target: &Expr) -> Option<Vec<usize>> {
    if root == target {
        return Some(vec![]);
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![(root.clone(), vec![])];
    while let Some((e, path)) = stack.pop() {
        if !seen.insert(e.id()) {
            continue;
        }
        for (k, o) in e.operands().iter().enumerate() {
            let mut p: Vec<usize> = path.clone();
            p.push(k);
            if o == target {
                return Some(p);
            }
            stack.push((o.clone(), p));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Cell;
    use crate::ir::{coefficient, grad, restricted, Side};
    use crate::tensor::inner;

    fn p1() -> Element {
        Element::finite("Lagrange", Cell::Triangle, 1).unwrap()
    }

    #[test]
    fn measure_display() {
        assert_eq!(Measure::dx().to_string(), "dx");
        assert_eq!(Measure::ds().with_id(2).to_string(), "ds(2)");
        assert_eq!(
            Measure::new(DomainType::Surface, 1).to_string(),
            "Measure(\"surface\", 1)"
        );
    }

    #[test]
    fn bilinear_poisson() {
        let (v, u) = (argument(&p1(), 0), argument(&p1(), 1));
        let a = make_integral(
            &inner(&grad(&u).unwrap(), &grad(&v).unwrap()).unwrap(),
            &Measure::dx(),
        )
        .unwrap();
        assert_eq!(a.arity().unwrap(), 2);
        assert!(a.coefficients().is_empty());
        assert!(validate_form(&a).is_empty());
    }

    #[test]
    fn integrand_errors() {
        let vel = coefficient(
            &Element::vector("Lagrange", Cell::Triangle, 1, None).unwrap(),
            None,
        );
        assert!(matches!(
            make_integral(&vel, &Measure::dx()),
            Err(Error::NonScalarIntegrand(_))
        ));
        let u = coefficient(&p1(), None);
        assert!(matches!(
            make_integral(&u, &Measure::dS()),
            Err(Error::MissingRestriction(_))
        ));
        let up = restricted(&u, Side::Plus).unwrap();
        assert!(matches!(
            make_integral(&up, &Measure::dx()),
            Err(Error::SpuriousRestriction(_))
        ));
        assert!(make_integral(&up, &Measure::dS()).is_ok());
        assert!(Form::empty().arity().is_err());
    }

    #[test]
    fn lhs_rhs_split() {
        let (v, u) = (argument(&p1(), 0), argument(&p1(), 1));
        let f = coefficient(&p1(), None);
        let uv = product(&u, &v).unwrap();
        let fv = product(&f, &v).unwrap();
        let form = make_integral(&uv, &Measure::dx())
            .unwrap()
            .sub(&make_integral(&fv, &Measure::dx()).unwrap())
            .unwrap();
        assert_eq!(
            form.lhs().unwrap(),
            make_integral(&uv, &Measure::dx()).unwrap()
        );
        assert_eq!(
            form.rhs().unwrap(),
            make_integral(&fv, &Measure::dx()).unwrap()
        );
        let bad = make_integral(&product(&uv, &u).unwrap(), &Measure::dx()).unwrap();
        assert!(matches!(bad.lhs(), Err(Error::Arity(_))));
        assert!(!validate_form(&bad).is_empty());
    }

    #[test]
    fn adjoint_and_action() {
        let (v, u) = (argument(&p1(), 0), argument(&p1(), 1));
        let a = make_integral(&product(&u, &v).unwrap(), &Measure::dx()).unwrap();
        assert_eq!(a.adjoint().unwrap().adjoint().unwrap(), a);
        let w = coefficient(&p1(), None);
        let act = a.action(&w).unwrap();
        assert_eq!(act.arity().unwrap(), 1);
        assert_eq!(act.arguments(), vec![v.clone()]);
        let l = make_integral(&v, &Measure::dx()).unwrap();
        assert!(matches!(l.adjoint(), Err(Error::Arity(_))));
    }
}
