//! Constructors for terminals, arithmetic, scalar functions, booleans,
//! conditionals, restrictions and differential operators.
//!
//! Local simplifications happen here, before interning: multiplication by
//! one, addition of zero, annihilation by zero (keeping shape and free
//! indices), and folding of literal-only scalar applications. Nothing is
//! expanded or reassociated.

use super::*;

const EXACT_INT_LIMIT: i64 = 1 << 53;

fn terminal_node(op: Op, payload: Payload, shape: Shape) -> Expr {
    intern(op, vec![], payload, shape, FreeIndexMap::new())
        .expect("terminals carry no operands to conflict")
}

/// Literal zero annotated with a shape and free indices.
pub fn zero(shape: &[usize], free: &FreeIndexMap) -> Expr {
    let payload = Payload::Zero {
        shape: shape.to_vec(),
        free: free.iter().map(|(i, d)| (*i, *d)).collect(),
    };
    intern(Op::Zero, vec![], payload, shape.to_vec(), free.clone()).expect("zero has no operands")
}

pub fn scalar_zero() -> Expr {
    zero(&[], &FreeIndexMap::new())
}

/// A zero with the shape and free indices of `e`.
pub fn zero_like(e: &Expr) -> Expr {
    zero(e.shape(), e.free())
}

pub fn int(v: i64) -> Expr {
    if v == 0 {
        return scalar_zero();
    }
    terminal_node(Op::IntValue, Payload::Int(v), vec![])
}

pub fn real(v: f64) -> Result<Expr> {
    if !v.is_finite() {
        return Err(Error::InvalidTerminal(format!("non-finite literal {v}")));
    }
    if v == 0.0 {
        return Ok(scalar_zero());
    }
    Ok(terminal_node(Op::RealValue, Payload::Real(Real(v)), vec![]))
}

pub fn identity(dim: usize) -> Result<Expr> {
    if dim == 0 {
        return Err(Error::InvalidTerminal(
            "Identity dimension must be positive".into(),
        ));
    }
    Ok(terminal_node(
        Op::Identity,
        Payload::Dim(dim),
        vec![dim, dim],
    ))
}

pub fn permutation_symbol(dim: usize) -> Result<Expr> {
    if dim == 0 {
        return Err(Error::InvalidTerminal(
            "PermutationSymbol dimension must be positive".into(),
        ));
    }
    Ok(terminal_node(
        Op::PermutationSymbol,
        Payload::Dim(dim),
        vec![dim; dim],
    ))
}

pub fn unit_vector(dim: usize, axis: usize) -> Result<Expr> {
    if axis >= dim {
        return Err(Error::InvalidTerminal(format!(
            "UnitVector axis {axis} out of range for dimension {dim}"
        )));
    }
    Ok(terminal_node(
        Op::UnitVector,
        Payload::UnitVector { dim, axis },
        vec![dim],
    ))
}

pub fn spatial_coordinate(cell: Cell) -> Expr {
    terminal_node(
        Op::SpatialCoordinate,
        Payload::Cell(cell),
        vec![cell.geometric_dimension()],
    )
}

pub fn facet_normal(cell: Cell) -> Expr {
    terminal_node(
        Op::FacetNormal,
        Payload::Cell(cell),
        vec![cell.geometric_dimension()],
    )
}

pub fn cell_volume(cell: Cell) -> Expr {
    terminal_node(Op::CellVolume, Payload::Cell(cell), vec![])
}

pub fn circumradius(cell: Cell) -> Expr {
    terminal_node(Op::Circumradius, Payload::Cell(cell), vec![])
}

pub fn facet_area(cell: Cell) -> Expr {
    terminal_node(Op::FacetArea, Payload::Cell(cell), vec![])
}

pub fn cell_surface_area(cell: Cell) -> Expr {
    terminal_node(Op::CellSurfaceArea, Payload::Cell(cell), vec![])
}

/// A scalar constant on `cell`. Counts are shared with coefficients.
pub fn constant(cell: Cell, count: Option<usize>) -> Expr {
    let count = function_count(count);
    terminal_node(Op::Constant, Payload::Constant { cell, count }, vec![])
}

pub fn coefficient(element: &Element, count: Option<usize>) -> Expr {
    let count = function_count(count);
    let shape = element.value_shape();
    terminal_node(
        Op::Coefficient,
        Payload::Function {
            element: element.clone(),
            count,
        },
        shape,
    )
}

pub fn argument(element: &Element, number: usize) -> Expr {
    let shape = element.value_shape();
    terminal_node(
        Op::Argument,
        Payload::Function {
            element: element.clone(),
            count: number,
        },
        shape,
    )
}

/// Description of a terminal, for callers that build terminals from data.
#[derive(Debug, Clone)]
pub enum TerminalSpec {
    IntLiteral(i64),
    RealLiteral(f64),
    Identity(usize),
    PermutationSymbol(usize),
    UnitVector {
        dim: usize,
        axis: usize,
    },
    SpatialCoordinate(Cell),
    FacetNormal(Cell),
    CellVolume(Cell),
    Circumradius(Cell),
    FacetArea(Cell),
    CellSurfaceArea(Cell),
    Constant {
        cell: Cell,
        count: Option<usize>,
    },
    Coefficient {
        element: Element,
        count: Option<usize>,
    },
    Argument {
        element: Element,
        number: usize,
    },
    Variable {
        expr: Expr,
        label: Option<u64>,
    },
}

pub fn intern_terminal(spec: TerminalSpec) -> Result<Expr> {
    Ok(match spec {
        TerminalSpec::IntLiteral(v) => int(v),
        TerminalSpec::RealLiteral(v) => real(v)?,
        TerminalSpec::Identity(d) => identity(d)?,
        TerminalSpec::PermutationSymbol(d) => permutation_symbol(d)?,
        TerminalSpec::UnitVector { dim, axis } => unit_vector(dim, axis)?,
        TerminalSpec::SpatialCoordinate(c) => spatial_coordinate(c),
        TerminalSpec::FacetNormal(c) => facet_normal(c),
        TerminalSpec::CellVolume(c) => cell_volume(c),
        TerminalSpec::Circumradius(c) => circumradius(c),
        TerminalSpec::FacetArea(c) => facet_area(c),
        TerminalSpec::CellSurfaceArea(c) => cell_surface_area(c),
        TerminalSpec::Constant { cell, count } => constant(cell, count),
        TerminalSpec::Coefficient { element, count } => coefficient(&element, count),
        TerminalSpec::Argument { element, number } => argument(&element, number),
        TerminalSpec::Variable { expr, label } => variable(&expr, label)?,
    })
}

pub(crate) fn reject_boolean(e: &Expr, context: &str) -> Result<()> {
    if e.is_boolean() {
        return Err(Error::BooleanMisuse(format!(
            "{} used as operand of {context}",
            e.op().name()
        )));
    }
    Ok(())
}

fn require_scalar(e: &Expr, context: &str) -> Result<()> {
    if !e.is_scalar() {
        return Err(Error::ShapeMismatch(format!(
            "{context} requires a scalar operand, got shape {}",
            shape_str(e.shape())
        )));
    }
    Ok(())
}

fn require_no_free(e: &Expr, context: &str) -> Result<()> {
    if !e.free().is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{context} requires an operand without free indices"
        )));
    }
    Ok(())
}

fn int_value(e: &Expr) -> Option<i64> {
    match (e.op(), e.payload()) {
        (Op::IntValue, Payload::Int(v)) => Some(*v),
        (Op::Zero, _) if e.is_scalar() && e.free().is_empty() => Some(0),
        _ => None,
    }
}

fn folded(v: f64) -> Option<Expr> {
    real(v).ok()
}

fn exact_int(v: Option<i64>) -> Option<Expr> {
    v.filter(|v| v.abs() <= EXACT_INT_LIMIT).map(int)
}

/// Orders the operands of a commutative node canonically.
pub fn canonical_pair(a: &Expr, b: &Expr) -> (Expr, Expr) {
    if canonical_cmp(a, b) == std::cmp::Ordering::Greater {
        (b.clone(), a.clone())
    } else {
        (a.clone(), b.clone())
    }
}

pub fn sum(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "sum")?;
    reject_boolean(b, "sum")?;
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "cannot add shapes {} and {}",
            shape_str(a.shape()),
            shape_str(b.shape())
        )));
    }
    if a.free() != b.free() {
        return Err(Error::FreeIndexConflict(
            "summands have different free indices".into(),
        ));
    }
    if a.is_zero() {
        return Ok(b.clone());
    }
    if b.is_zero() {
        return Ok(a.clone());
    }
    if let (Some(x), Some(y)) = (int_value(a), int_value(b)) {
        if let Some(e) = exact_int(x.checked_add(y)) {
            return Ok(e);
        }
    }
    if let (Some(x), Some(y)) = (a.literal_value(), b.literal_value()) {
        if let Some(e) = folded(x + y) {
            return Ok(e);
        }
    }
    let (a, b) = canonical_pair(a, b);
    let (shape, free) = a.signature();
    intern(Op::Sum, vec![a, b], Payload::None, shape, free)
}

pub fn neg(a: &Expr) -> Result<Expr> {
    product(&int(-1), a)
}

pub fn sub(a: &Expr, b: &Expr) -> Result<Expr> {
    sum(a, &neg(b)?)
}

/// Raw product node: scalars, or a scalar times a tensor. Free indices are
/// merged, never summed; implicit summation lives in `star`.
pub fn product(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "product")?;
    reject_boolean(b, "product")?;
    if !a.is_scalar() && !b.is_scalar() {
        return Err(Error::ShapeMismatch(format!(
            "product of non-scalar shapes {} and {}",
            shape_str(a.shape()),
            shape_str(b.shape())
        )));
    }
    let shape = if a.is_scalar() {
        b.shape().to_vec()
    } else {
        a.shape().to_vec()
    };
    let free = merge_free(a.free(), b.free())?;
    if a.is_zero() || b.is_zero() {
        return Ok(zero(&shape, &free));
    }
    if a.is_literal_value(1.0) {
        return Ok(b.clone());
    }
    if b.is_literal_value(1.0) {
        return Ok(a.clone());
    }
    if let (Some(x), Some(y)) = (int_value(a), int_value(b)) {
        if let Some(e) = exact_int(x.checked_mul(y)) {
            return Ok(e);
        }
    }
    if let (Some(x), Some(y)) = (a.literal_value(), b.literal_value()) {
        if let Some(e) = folded(x * y) {
            return Ok(e);
        }
    }
    let (a, b) = canonical_pair(a, b);
    intern(Op::Product, vec![a, b], Payload::None, shape, free)
}

/// `a / b` with scalar `b`; `a` may be a tensor.
pub fn division(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "division")?;
    reject_boolean(b, "division")?;
    require_scalar(b, "division denominator")?;
    let free = merge_free(a.free(), b.free())?;
    if b.is_zero() {
        return Err(Error::DivisionByZero);
    }
    if a.is_zero() {
        return Ok(zero(a.shape(), &free));
    }
    if b.is_literal_value(1.0) {
        return Ok(a.clone());
    }
    if let (Some(x), Some(y)) = (a.literal_value(), b.literal_value()) {
        if let Some(e) = folded(x / y) {
            return Ok(e);
        }
    }
    intern(
        Op::Division,
        vec![a.clone(), b.clone()],
        Payload::None,
        a.shape().to_vec(),
        free,
    )
}

pub fn power(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "power")?;
    reject_boolean(b, "power")?;
    require_scalar(a, "power base")?;
    require_scalar(b, "power exponent")?;
    require_no_free(b, "power exponent")?;
    if b.is_zero() && a.free().is_empty() {
        return Ok(int(1));
    }
    if b.is_literal_value(1.0) {
        return Ok(a.clone());
    }
    if a.is_zero() && b.literal_value().is_some_and(|v| v > 0.0) {
        return Ok(a.clone());
    }
    if let (Some(x), Some(y)) = (int_value(a), int_value(b)) {
        if (0..=u32::MAX as i64).contains(&y) {
            if let Some(e) = exact_int(x.checked_pow(y as u32)) {
                return Ok(e);
            }
        }
    }
    if let (Some(x), Some(y)) = (a.literal_value(), b.literal_value()) {
        if let Some(e) = folded(x.powf(y)) {
            return Ok(e);
        }
    }
    intern(
        Op::Power,
        vec![a.clone(), b.clone()],
        Payload::None,
        vec![],
        a.free().clone(),
    )
}

/// Numeric value of a one-argument scalar function, shared by constant
/// folding and the evaluator.
pub fn apply_scalar_fn(op: Op, x: f64) -> Option<f64> {
    let v = match op {
        Op::Sqrt => x.sqrt(),
        Op::Exp => x.exp(),
        Op::Ln => x.ln(),
        Op::Abs => x.abs(),
        Op::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Op::Cos => x.cos(),
        Op::Sin => x.sin(),
        Op::Tan => x.tan(),
        Op::Acos => x.acos(),
        Op::Asin => x.asin(),
        Op::Atan => x.atan(),
        Op::Erf => libm::erf(x),
        _ => return None,
    };
    v.is_finite().then_some(v)
}

/// Numeric Bessel function value for integer orders; `None` where the host
/// math library has no implementation.
pub fn apply_bessel(op: Op, nu: f64, x: f64) -> Option<f64> {
    if nu.fract() != 0.0 || nu.abs() > i32::MAX as f64 {
        return None;
    }
    let n = nu as i32;
    let v = match op {
        Op::BesselJ => libm::jn(n, x),
        Op::BesselY => libm::yn(n, x),
        _ => return None,
    };
    v.is_finite().then_some(v)
}

/// One-argument scalar function such as `sin` or `sqrt`.
pub fn math_fn(op: Op, a: &Expr) -> Result<Expr> {
    if op.group() != Group::ScalarFunction || op.name().starts_with("bessel") {
        return Err(Error::Arity(format!(
            "{} is not a one-argument scalar function",
            op.name()
        )));
    }
    reject_boolean(a, op.name())?;
    require_scalar(a, op.name())?;
    require_no_free(a, op.name())?;
    if let Some(x) = a.literal_value() {
        if let Some(v) = apply_scalar_fn(op, x) {
            return real(v);
        }
    }
    intern(
        op,
        vec![a.clone()],
        Payload::None,
        vec![],
        FreeIndexMap::new(),
    )
}

pub fn bessel(op: Op, nu: &Expr, x: &Expr) -> Result<Expr> {
    if !matches!(op, Op::BesselJ | Op::BesselY | Op::BesselI | Op::BesselK) {
        return Err(Error::Arity(format!(
            "{} is not a Bessel function",
            op.name()
        )));
    }
    for e in [nu, x] {
        reject_boolean(e, op.name())?;
        require_scalar(e, op.name())?;
        require_no_free(e, op.name())?;
    }
    if let (Some(n), Some(v)) = (nu.literal_value(), x.literal_value()) {
        if let Some(r) = apply_bessel(op, n, v) {
            return real(r);
        }
    }
    intern(
        op,
        vec![nu.clone(), x.clone()],
        Payload::None,
        vec![],
        FreeIndexMap::new(),
    )
}

pub fn compare(op: Op, a: &Expr, b: &Expr) -> Result<Expr> {
    if !matches!(op, Op::Eq | Op::Ne | Op::Le | Op::Ge | Op::Lt | Op::Gt) {
        return Err(Error::Arity(format!("{} is not a comparison", op.name())));
    }
    reject_boolean(a, op.name())?;
    reject_boolean(b, op.name())?;
    require_scalar(a, op.name())?;
    require_scalar(b, op.name())?;
    let free = merge_free(a.free(), b.free())?;
    let (a, b) = if op.is_commutative() {
        canonical_pair(a, b)
    } else {
        (a.clone(), b.clone())
    };
    intern(op, vec![a, b], Payload::None, vec![], free)
}

fn require_boolean(e: &Expr, context: &str) -> Result<()> {
    if !e.is_boolean() {
        return Err(Error::ShapeMismatch(format!(
            "{context} requires a boolean operand"
        )));
    }
    Ok(())
}

pub fn and(a: &Expr, b: &Expr) -> Result<Expr> {
    require_boolean(a, "And")?;
    require_boolean(b, "And")?;
    let free = merge_free(a.free(), b.free())?;
    let (a, b) = canonical_pair(a, b);
    intern(Op::And, vec![a, b], Payload::None, vec![], free)
}

pub fn or(a: &Expr, b: &Expr) -> Result<Expr> {
    require_boolean(a, "Or")?;
    require_boolean(b, "Or")?;
    let free = merge_free(a.free(), b.free())?;
    let (a, b) = canonical_pair(a, b);
    intern(Op::Or, vec![a, b], Payload::None, vec![], free)
}

pub fn not(a: &Expr) -> Result<Expr> {
    require_boolean(a, "Not")?;
    intern(
        Op::Not,
        vec![a.clone()],
        Payload::None,
        vec![],
        a.free().clone(),
    )
}

pub fn conditional(c: &Expr, t: &Expr, f: &Expr) -> Result<Expr> {
    require_boolean(c, "conditional condition")?;
    reject_boolean(t, "conditional")?;
    reject_boolean(f, "conditional")?;
    if t.shape() != f.shape() {
        return Err(Error::ShapeMismatch(format!(
            "conditional branches have shapes {} and {}",
            shape_str(t.shape()),
            shape_str(f.shape())
        )));
    }
    if t.free() != f.free() {
        return Err(Error::FreeIndexConflict(
            "conditional branches have different free indices".into(),
        ));
    }
    let free = merge_free(c.free(), t.free())?;
    if t == f && free == *t.free() {
        return Ok(t.clone());
    }
    intern(
        Op::Conditional,
        vec![c.clone(), t.clone(), f.clone()],
        Payload::None,
        t.shape().to_vec(),
        free,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn symbol(self) -> &'static str {
        match self {
            Side::Plus => "+",
            Side::Minus => "-",
        }
    }
}

/// `e('+')` or `e('-')`. Literals have the same value on both sides and
/// are returned unchanged.
pub fn restricted(e: &Expr, side: Side) -> Result<Expr> {
    reject_boolean(e, "restriction")?;
    if e.contains_restriction() {
        return Err(Error::DoubleRestriction(format!(
            "'{}' applied to a restricted expression",
            side.symbol()
        )));
    }
    if e.gdim().is_none() {
        return Ok(e.clone());
    }
    let op = match side {
        Side::Plus => Op::PositiveRestricted,
        Side::Minus => Op::NegativeRestricted,
    };
    intern(
        op,
        vec![e.clone()],
        Payload::None,
        e.shape().to_vec(),
        e.free().clone(),
    )
}

/// `avg(f) = (f('+') + f('-')) / 2`.
pub fn avg(e: &Expr) -> Result<Expr> {
    let s = sum(&restricted(e, Side::Plus)?, &restricted(e, Side::Minus)?)?;
    division(&s, &int(2))
}

/// `jump(f) = f('+') - f('-')`.
pub fn jump(e: &Expr) -> Result<Expr> {
    sub(&restricted(e, Side::Plus)?, &restricted(e, Side::Minus)?)
}

/// `jump(f, n)`: `f+ n+ + f- n-` for scalar `f`, otherwise the sum of the
/// contractions of each side with its normal.
pub fn jump_n(f: &Expr, n: &Expr) -> Result<Expr> {
    let (fp, fm) = (restricted(f, Side::Plus)?, restricted(f, Side::Minus)?);
    let (np, nm) = (restricted(n, Side::Plus)?, restricted(n, Side::Minus)?);
    if f.is_scalar() {
        sum(&product(&fp, &np)?, &product(&fm, &nm)?)
    } else {
        sum(
            &crate::tensor::dot(&fp, &np)?,
            &crate::tensor::dot(&fm, &nm)?,
        )
    }
}

fn spatial_dim(e: &Expr, context: &str) -> Result<usize> {
    e.gdim().ok_or_else(|| {
        Error::DomainMismatch(format!(
            "{context} of an expression that is not defined on a domain"
        ))
    })
}

pub fn grad(e: &Expr) -> Result<Expr> {
    reject_boolean(e, "grad")?;
    let d = spatial_dim(e, "grad")?;
    let mut shape = e.shape().to_vec();
    shape.push(d);
    intern(
        Op::Grad,
        vec![e.clone()],
        Payload::None,
        shape,
        e.free().clone(),
    )
}

pub fn nabla_grad(e: &Expr) -> Result<Expr> {
    reject_boolean(e, "nabla_grad")?;
    let d = spatial_dim(e, "nabla_grad")?;
    let mut shape = vec![d];
    shape.extend_from_slice(e.shape());
    intern(
        Op::NablaGrad,
        vec![e.clone()],
        Payload::None,
        shape,
        e.free().clone(),
    )
}

pub fn div(e: &Expr) -> Result<Expr> {
    reject_boolean(e, "div")?;
    let d = spatial_dim(e, "div")?;
    match e.shape().last() {
        Some(&last) if last == d => {}
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "div needs a last axis of dimension {d}, got shape {}",
                shape_str(e.shape())
            )))
        }
    }
    let shape = e.shape()[..e.rank() - 1].to_vec();
    intern(
        Op::Div,
        vec![e.clone()],
        Payload::None,
        shape,
        e.free().clone(),
    )
}

pub fn nabla_div(e: &Expr) -> Result<Expr> {
    reject_boolean(e, "nabla_div")?;
    let d = spatial_dim(e, "nabla_div")?;
    match e.shape().first() {
        Some(&first) if first == d => {}
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "nabla_div needs a first axis of dimension {d}, got shape {}",
                shape_str(e.shape())
            )))
        }
    }
    let shape = e.shape()[1..].to_vec();
    intern(
        Op::NablaDiv,
        vec![e.clone()],
        Payload::None,
        shape,
        e.free().clone(),
    )
}

/// Curl of a 3-vector field on a 3D domain.
pub fn curl(e: &Expr) -> Result<Expr> {
    reject_boolean(e, "curl")?;
    let d = spatial_dim(e, "curl")?;
    if d != 3 || e.shape() != [3] {
        return Err(Error::ShapeMismatch(format!(
            "curl needs a 3-vector on a 3D domain, got shape {} in {d}D",
            shape_str(e.shape())
        )));
    }
    intern(
        Op::Curl,
        vec![e.clone()],
        Payload::None,
        vec![3],
        e.free().clone(),
    )
}

/// `rot(v)`: the scalar `v1,0 - v0,1` in 2D, the curl in 3D.
pub fn rot(e: &Expr) -> Result<Expr> {
    reject_boolean(e, "rot")?;
    let d = spatial_dim(e, "rot")?;
    match (d, e.shape()) {
        (2, [2]) => intern(
            Op::Rot,
            vec![e.clone()],
            Payload::None,
            vec![],
            e.free().clone(),
        ),
        (3, [3]) => intern(
            Op::Rot,
            vec![e.clone()],
            Payload::None,
            vec![3],
            e.free().clone(),
        ),
        _ => Err(Error::ShapeMismatch(format!(
            "rot needs a {d}-vector in 2D or 3D, got shape {}",
            shape_str(e.shape())
        ))),
    }
}

/// The bare derivative node `d e / d x_term` with the term's index free.
fn dx_node(e: &Expr, term: IndexTerm) -> Result<Expr> {
    reject_boolean(e, "Dx")?;
    let d = spatial_dim(e, "Dx")?;
    let mut free = e.free().clone();
    match term {
        IndexTerm::Fixed(v) if v >= d => {
            return Err(Error::IndexOutOfRange(format!("Dx direction {v} in {d}D")));
        }
        IndexTerm::Fixed(_) => {}
        IndexTerm::Free(i) => match free.get(&i) {
            Some(&di) if di != d => {
                return Err(Error::FreeIndexConflict(format!(
                    "index {i} has dimension {di} but differentiates in {d}D"
                )))
            }
            _ => {
                free.insert(i, d);
            }
        },
    }
    intern(
        Op::Dx,
        vec![e.clone()],
        Payload::Term(term),
        e.shape().to_vec(),
        free,
    )
}

/// `e.dx(i)`. A free `i` already carried by `e` is summed over.
pub fn dx(e: &Expr, term: IndexTerm) -> Result<Expr> {
    let node = dx_node(e, term)?;
    match term {
        IndexTerm::Free(i) if e.free().contains_key(&i) => crate::indexing::index_sum(&node, i),
        _ => Ok(node),
    }
}

/// `Dn(e) = dot(grad(e), n)`.
pub fn dn(e: &Expr) -> Result<Expr> {
    let d = spatial_dim(e, "Dn")?;
    let n = facet_normal(cell_of_dim(d)?);
    crate::tensor::dot(&grad(e)?, &n)
}

/// Annotates `e` as a variable that expressions can be differentiated by.
pub fn variable(e: &Expr, label: Option<u64>) -> Result<Expr> {
    reject_boolean(e, "variable")?;
    let label = variable_label(label);
    intern(
        Op::Variable,
        vec![e.clone()],
        Payload::Label(label),
        e.shape().to_vec(),
        e.free().clone(),
    )
}

/// `diff(e, v)`, the derivative of `e` with respect to the variable `v`.
pub fn variable_derivative(e: &Expr, v: &Expr) -> Result<Expr> {
    reject_boolean(e, "diff")?;
    if v.op() != Op::Variable {
        return Err(Error::NotAVariable(format!(
            "cannot differentiate with respect to {}",
            v.op().name()
        )));
    }
    if !v.free().is_empty() {
        return Err(Error::Unsupported(
            "differentiation by a variable with free indices".into(),
        ));
    }
    let mut shape = e.shape().to_vec();
    shape.extend_from_slice(v.shape());
    if e.is_zero() {
        return Ok(zero(&shape, e.free()));
    }
    intern(
        Op::VariableDerivative,
        vec![e.clone(), v.clone()],
        Payload::None,
        shape,
        e.free().clone(),
    )
}

/// Gateaux derivative node: `e` differentiated w.r.t. each target in the
/// matching direction, with optional `(g, dg/du)` override pairs.
pub fn coefficient_derivative(
    e: &Expr,
    targets: &[Expr],
    directions: &[Expr],
    overrides: &[(Expr, Expr)],
) -> Result<Expr> {
    reject_boolean(e, "derivative")?;
    if targets.is_empty() || targets.len() != directions.len() {
        return Err(Error::Arity(format!(
            "{} targets but {} directions",
            targets.len(),
            directions.len()
        )));
    }
    for (t, v) in targets.iter().zip(directions) {
        if !matches!(t.op(), Op::Coefficient | Op::Constant) {
            return Err(Error::NotACoefficient(format!(
                "cannot differentiate with respect to {}",
                t.op().name()
            )));
        }
        if t.shape() != v.shape() || !v.free().is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "direction of shape {} for a coefficient of shape {}",
                shape_str(v.shape()),
                shape_str(t.shape())
            )));
        }
    }
    for (g, h) in overrides {
        if !matches!(g.op(), Op::Coefficient | Op::Constant) {
            return Err(Error::NotACoefficient(
                "override target must be a coefficient".into(),
            ));
        }
        let mut expected = g.shape().to_vec();
        expected.extend_from_slice(targets[0].shape());
        if targets.len() != 1 || h.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "override derivative has shape {}, expected {}",
                shape_str(h.shape()),
                shape_str(&expected)
            )));
        }
    }
    if e.is_zero() {
        return Ok(e.clone());
    }
    let mut operands = vec![e.clone()];
    operands.extend_from_slice(targets);
    operands.extend_from_slice(directions);
    for (g, h) in overrides {
        operands.push(g.clone());
        operands.push(h.clone());
    }
    intern(
        Op::CoefficientDerivative,
        operands,
        Payload::Count(targets.len()),
        e.shape().to_vec(),
        e.free().clone(),
    )
}

/// Represented only; no differentiation or evaluation rules exist.
pub fn exterior_derivative(e: &Expr) -> Result<Expr> {
    reject_boolean(e, "exterior_derivative")?;
    spatial_dim(e, "exterior_derivative")?;
    intern(
        Op::ExteriorDerivative,
        vec![e.clone()],
        Payload::None,
        e.shape().to_vec(),
        e.free().clone(),
    )
}

/// Rebuilds a node of the same kind and payload over new operands, going
/// through the public constructors so every simplification applies.
pub fn rebuild(e: &Expr, ops: &[Expr]) -> Result<Expr> {
    use crate::{indexing, tensor};
    let o = |i: usize| &ops[i];
    Ok(match e.op() {
        op if op.is_terminal() => e.clone(),
        Op::Indexed => indexing::indexed(o(0), e.multi_index().expect("indexed payload"))?,
        Op::ComponentTensor => {
            let idx = e
                .multi_index()
                .expect("component tensor payload")
                .as_all_free()
                .expect("free indices");
            indexing::as_tensor(o(0), &idx)?
        }
        Op::IndexSum => match e.payload() {
            Payload::Index(i) => indexing::index_sum(o(0), *i)?,
            _ => unreachable!("index sum payload"),
        },
        Op::ListTensor => indexing::list_tensor(ops)?,
        Op::Sum => sum(o(0), o(1))?,
        Op::Product => product(o(0), o(1))?,
        Op::Division => division(o(0), o(1))?,
        Op::Power => power(o(0), o(1))?,
        Op::BesselJ | Op::BesselY | Op::BesselI | Op::BesselK => bessel(e.op(), o(0), o(1))?,
        op if op.group() == Group::ScalarFunction => math_fn(op, o(0))?,
        Op::Dot => tensor::dot(o(0), o(1))?,
        Op::Inner => tensor::inner(o(0), o(1))?,
        Op::Outer => tensor::outer(o(0), o(1))?,
        Op::Cross => tensor::cross(o(0), o(1))?,
        op if op.group() == Group::TensorAlgebra => tensor::unary(op, o(0))?,
        Op::Grad => grad(o(0))?,
        Op::NablaGrad => nabla_grad(o(0))?,
        Op::Div => div(o(0))?,
        Op::NablaDiv => nabla_div(o(0))?,
        Op::Curl => curl(o(0))?,
        Op::Rot => rot(o(0))?,
        // The implicit sum of a repeated index is a separate IndexSum node.
        Op::Dx => match e.payload() {
            Payload::Term(t) => dx_node(o(0), *t)?,
            _ => unreachable!("dx payload"),
        },
        Op::Variable => match e.payload() {
            Payload::Label(l) => {
                if ops[0] == e.operands()[0] {
                    e.clone()
                } else {
                    intern(
                        Op::Variable,
                        vec![o(0).clone()],
                        Payload::Label(*l),
                        o(0).shape().to_vec(),
                        o(0).free().clone(),
                    )?
                }
            }
            _ => unreachable!("variable payload"),
        },
        Op::VariableDerivative => variable_derivative(o(0), o(1))?,
        Op::CoefficientDerivative => {
            let n = match e.payload() {
                Payload::Count(n) => *n,
                _ => unreachable!("coefficient derivative payload"),
            };
            let targets = &ops[1..1 + n];
            let dirs = &ops[1 + n..1 + 2 * n];
            let pairs: Vec<(Expr, Expr)> = ops[1 + 2 * n..]
                .chunks(2)
                .map(|c| (c[0].clone(), c[1].clone()))
                .collect();
            coefficient_derivative(o(0), targets, dirs, &pairs)?
        }
        Op::ExteriorDerivative => exterior_derivative(o(0))?,
        Op::PositiveRestricted => restricted(o(0), Side::Plus)?,
        Op::NegativeRestricted => restricted(o(0), Side::Minus)?,
        Op::Eq | Op::Ne | Op::Le | Op::Ge | Op::Lt | Op::Gt => compare(e.op(), o(0), o(1))?,
        Op::And => and(o(0), o(1))?,
        Op::Or => or(o(0), o(1))?,
        Op::Not => not(o(0))?,
        Op::Conditional => conditional(o(0), o(1), o(2))?,
        op => return Err(Error::UnhandledKind(op.name().to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::Element;

    fn p1() -> Element {
        Element::finite("Lagrange", Cell::Triangle, 1).unwrap()
    }

    #[test]
    fn literal_zero_is_annotated_zero() {
        let z = real(0.0).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.shape(), &[] as &[usize]);
        assert_eq!(int(0), z);
    }

    #[test]
    fn multiply_by_one_and_add_zero() {
        let f = coefficient(&p1(), None);
        assert_eq!(product(&int(1), &f).unwrap(), f);
        assert_eq!(product(&f, &real(1.0).unwrap()).unwrap(), f);
        assert_eq!(sum(&scalar_zero(), &f).unwrap(), f);
    }

    #[test]
    fn constant_folding_keeps_integers_exact() {
        let six = product(&int(2), &int(3)).unwrap();
        assert_eq!(six, int(6));
        let big = product(&int(1 << 40), &int(1 << 20)).unwrap();
        assert_eq!(big.op(), Op::RealValue);
        assert_eq!(big.literal_value(), Some((1u64 << 60) as f64));
        assert_eq!(
            sum(&int(2), &real(0.5).unwrap()).unwrap().literal_value(),
            Some(2.5)
        );
    }

    #[test]
    fn sums_are_canonically_ordered_and_binary() {
        let a = coefficient(&p1(), None);
        let b = coefficient(&p1(), None);
        let c = coefficient(&p1(), None);
        assert_eq!(sum(&a, &b).unwrap(), sum(&b, &a).unwrap());
        let ac = sum(&a, &c).unwrap();
        let acb = sum(&ac, &b).unwrap();
        assert!(acb.operands().contains(&ac));
    }

    #[test]
    fn factored_products_are_not_expanded() {
        let a = coefficient(&p1(), None);
        let b = coefficient(&p1(), None);
        let d = sub(&a, &b).unwrap();
        let sq = product(&d, &d).unwrap();
        assert_eq!(sq.op(), Op::Product);
        assert_eq!(sq.operands(), &[d.clone(), d]);
    }

    #[test]
    fn adding_mismatched_shapes_fails() {
        let v = coefficient(
            &Element::vector("Lagrange", Cell::Triangle, 1, None).unwrap(),
            None,
        );
        let f = coefficient(&p1(), None);
        assert!(matches!(sum(&v, &f), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn scalar_functions_fold_and_reject_tensors() {
        assert_eq!(
            math_fn(Op::Sqrt, &int(4)).unwrap().literal_value(),
            Some(2.0)
        );
        assert_eq!(math_fn(Op::Sign, &scalar_zero()).unwrap(), scalar_zero());
        let a = identity(2).unwrap();
        assert!(matches!(math_fn(Op::Sin, &a), Err(Error::ShapeMismatch(_))));
        let f = coefficient(&p1(), None);
        assert_eq!(math_fn(Op::Ln, &f).unwrap().op(), Op::Ln);
        assert!(math_fn(Op::Ln, &int(-1)).unwrap().op() == Op::Ln);
    }

    #[test]
    fn division_by_literal_zero_is_an_error() {
        let f = coefficient(&p1(), None);
        assert_eq!(division(&f, &scalar_zero()), Err(Error::DivisionByZero));
        assert_eq!(division(&scalar_zero(), &f).unwrap(), scalar_zero());
    }

    #[test]
    fn boolean_operands_only_in_conditions() {
        let f = coefficient(&p1(), None);
        let c = compare(Op::Eq, &f, &int(1)).unwrap();
        assert!(matches!(sum(&c, &f), Err(Error::BooleanMisuse(_))));
        assert!(conditional(&c, &f, &int(1)).is_ok());
    }

    #[test]
    fn conditional_branches_must_agree() {
        let x = spatial_coordinate(Cell::Triangle);
        let f = coefficient(&p1(), None);
        let c = compare(Op::Lt, &f, &scalar_zero()).unwrap();
        assert!(matches!(
            conditional(&c, &x, &f),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn restrictions_cannot_nest() {
        let f = coefficient(&p1(), None);
        let fp = restricted(&f, Side::Plus).unwrap();
        assert!(matches!(
            restricted(&fp, Side::Minus),
            Err(Error::DoubleRestriction(_))
        ));
        let s = sum(&fp, &f).unwrap();
        assert!(matches!(avg(&s), Err(Error::DoubleRestriction(_))));
    }

    #[test]
    fn jump_with_normal_is_vector_for_scalars() {
        let f = coefficient(&p1(), None);
        let n = facet_normal(Cell::Triangle);
        let j = jump_n(&f, &n).unwrap();
        assert_eq!(j.shape(), &[2]);
        let v = coefficient(
            &Element::vector("Lagrange", Cell::Triangle, 1, None).unwrap(),
            None,
        );
        assert_eq!(jump_n(&v, &n).unwrap().shape(), &[] as &[usize]);
    }

    #[test]
    fn grad_appends_the_geometric_dimension() {
        let f = coefficient(&p1(), None);
        assert_eq!(grad(&f).unwrap().shape(), &[2]);
        assert_eq!(grad(&grad(&f).unwrap()).unwrap().shape(), &[2, 2]);
        assert!(matches!(grad(&int(2)), Err(Error::DomainMismatch(_))));
    }

    #[test]
    fn div_and_rot_shapes() {
        let v = coefficient(
            &Element::vector("Lagrange", Cell::Triangle, 1, None).unwrap(),
            None,
        );
        assert_eq!(div(&v).unwrap().shape(), &[] as &[usize]);
        assert_eq!(rot(&v).unwrap().shape(), &[] as &[usize]);
        assert!(curl(&v).is_err());
        let f = coefficient(&p1(), None);
        assert!(matches!(div(&f), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn dx_with_free_index_adds_it() {
        let f = coefficient(&p1(), None);
        let i = Index::predefined("i").unwrap();
        let d = dx(&f, IndexTerm::Free(i)).unwrap();
        assert_eq!(d.free().get(&i), Some(&2));
        assert!(matches!(
            dx(&f, IndexTerm::Fixed(2)),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn diff_requires_a_variable() {
        let f = coefficient(&p1(), None);
        assert!(matches!(
            variable_derivative(&f, &f),
            Err(Error::NotAVariable(_))
        ));
        let v = variable(&f, None).unwrap();
        assert_eq!(
            variable_derivative(&f, &v).unwrap().op(),
            Op::VariableDerivative
        );
    }

    #[test]
    fn interning_is_deterministic() {
        let e = p1();
        assert_eq!(coefficient(&e, Some(3)), coefficient(&e, Some(3)));
        let auto = coefficient(&e, None);
        assert!(auto.count().unwrap() > 3);
    }

    #[test]
    fn mixed_domains_are_rejected() {
        let f = coefficient(&p1(), None);
        let g = coefficient(
            &Element::finite("Lagrange", Cell::Tetrahedron, 1).unwrap(),
            None,
        );
        assert!(matches!(product(&f, &g), Err(Error::DomainMismatch(_))));
    }
}
