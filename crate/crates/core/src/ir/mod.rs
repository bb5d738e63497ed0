//! The immutable, hash-consed expression DAG.
//!
//! Every node is interned on construction: building a structurally equal node
//! twice returns the same handle, so handle equality is structural equality.
//! Shape, free indices, geometric dimension and a structural hash are cached
//! on the node so no constructor ever walks its operands' sub-DAGs.

mod build;

pub use build::*;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock, Mutex};

use crate::cell::Cell;
use crate::elements::Element;
use crate::error::{Error, Result};

/// A symbolic tensor index. Ids 0..8 are the predefined names `i`..`s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Index(pub u32);

pub const PREDEFINED_INDEX_NAMES: [&str; 8] = ["i", "j", "k", "l", "p", "q", "r", "s"];
const FIRST_FRESH_INDEX: u32 = 100;

static NEXT_INDEX: AtomicU32 = AtomicU32::new(FIRST_FRESH_INDEX);

impl Index {
    /// A fresh index, distinct from every index handed out so far.
    pub fn fresh() -> Index {
        Index(NEXT_INDEX.fetch_add(1, Ordering::Relaxed))
    }

    /// The index with an explicit id. Fresh indices are never reused ids.
    pub fn with_id(id: u32) -> Index {
        if id >= FIRST_FRESH_INDEX {
            NEXT_INDEX.fetch_max(id + 1, Ordering::Relaxed);
        }
        Index(id)
    }

    pub fn predefined(name: &str) -> Option<Index> {
        PREDEFINED_INDEX_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|p| Index(p as u32))
    }

    pub fn name(self) -> Option<&'static str> {
        PREDEFINED_INDEX_NAMES.get(self.0 as usize).copied()
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(f, "Index({})", self.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexTerm {
    Fixed(usize),
    Free(Index),
}

impl fmt::Display for IndexTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexTerm::Fixed(v) => write!(f, "{v}"),
            IndexTerm::Free(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiIndex(pub Vec<IndexTerm>);

impl MultiIndex {
    pub fn free(indices: &[Index]) -> MultiIndex {
        MultiIndex(indices.iter().map(|&i| IndexTerm::Free(i)).collect())
    }

    pub fn fixed(values: &[usize]) -> MultiIndex {
        MultiIndex(values.iter().map(|&v| IndexTerm::Fixed(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn free_indices(&self) -> impl Iterator<Item = Index> + '_ {
        self.0.iter().filter_map(|t| match t {
            IndexTerm::Free(i) => Some(*i),
            IndexTerm::Fixed(_) => None,
        })
    }

    /// Returns the free indices if every term is free.
    pub fn as_all_free(&self) -> Option<Vec<Index>> {
        self.0
            .iter()
            .map(|t| match t {
                IndexTerm::Free(i) => Some(*i),
                IndexTerm::Fixed(_) => None,
            })
            .collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(", "))
    }
}

pub type Shape = Vec<usize>;

/// Free indices of an expression with the dimension each one ranges over.
pub type FreeIndexMap = BTreeMap<Index, usize>;

/// Formats a shape the way tuples print: `()`, `(2,)`, `(2, 3)`.
pub fn shape_str(shape: &[usize]) -> String {
    match shape.len() {
        0 => "()".into(),
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

/// Operator groups; terminals first, then operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    MultiIndex,
    Literal,
    Geometric,
    Coefficient,
    Argument,
    Indexing,
    Arithmetic,
    ScalarFunction,
    TensorAlgebra,
    Differential,
    Restriction,
    Boolean,
    Conditional,
}

impl Group {
    pub const ALL: [Group; 13] = [
        Group::MultiIndex,
        Group::Literal,
        Group::Geometric,
        Group::Coefficient,
        Group::Argument,
        Group::Indexing,
        Group::Arithmetic,
        Group::ScalarFunction,
        Group::TensorAlgebra,
        Group::Differential,
        Group::Restriction,
        Group::Boolean,
        Group::Conditional,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            Group::MultiIndex
                | Group::Literal
                | Group::Geometric
                | Group::Coefficient
                | Group::Argument
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::MultiIndex => "multi_index",
            Group::Literal => "literal",
            Group::Geometric => "geometric",
            Group::Coefficient => "coefficient",
            Group::Argument => "argument",
            Group::Indexing => "indexing",
            Group::Arithmetic => "arithmetic",
            Group::ScalarFunction => "scalar_function",
            Group::TensorAlgebra => "tensor_algebra",
            Group::Differential => "differential",
            Group::Restriction => "restriction",
            Group::Boolean => "boolean",
            Group::Conditional => "conditional",
        }
    }
}

macro_rules! ops {
    ($($variant:ident => ($name:literal, $group:ident)),* $(,)?) => {
        /// Concrete node kinds. The table is closed; `Op::ALL` enumerates it.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Op {
            $($variant),*
        }

        impl Op {
            pub const ALL: &'static [Op] = &[$(Op::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Op::$variant => $name),*
                }
            }

            pub fn group(self) -> Group {
                match self {
                    $(Op::$variant => Group::$group),*
                }
            }
        }
    };
}

ops! {
    Zero => ("zero", Literal),
    IntValue => ("int_value", Literal),
    RealValue => ("real_value", Literal),
    Identity => ("identity", Literal),
    PermutationSymbol => ("permutation_symbol", Literal),
    UnitVector => ("unit_vector", Literal),
    SpatialCoordinate => ("spatial_coordinate", Geometric),
    FacetNormal => ("facet_normal", Geometric),
    CellVolume => ("cell_volume", Geometric),
    Circumradius => ("circumradius", Geometric),
    FacetArea => ("facet_area", Geometric),
    CellSurfaceArea => ("cell_surface_area", Geometric),
    Constant => ("constant", Coefficient),
    Coefficient => ("coefficient", Coefficient),
    Argument => ("argument", Argument),
    Indexed => ("indexed", Indexing),
    ComponentTensor => ("component_tensor", Indexing),
    IndexSum => ("index_sum", Indexing),
    ListTensor => ("list_tensor", Indexing),
    Sum => ("sum", Arithmetic),
    Product => ("product", Arithmetic),
    Division => ("division", Arithmetic),
    Power => ("power", Arithmetic),
    Sqrt => ("sqrt", ScalarFunction),
    Exp => ("exp", ScalarFunction),
    Ln => ("ln", ScalarFunction),
    Abs => ("abs", ScalarFunction),
    Sign => ("sign", ScalarFunction),
    Cos => ("cos", ScalarFunction),
    Sin => ("sin", ScalarFunction),
    Tan => ("tan", ScalarFunction),
    Acos => ("acos", ScalarFunction),
    Asin => ("asin", ScalarFunction),
    Atan => ("atan", ScalarFunction),
    Erf => ("erf", ScalarFunction),
    BesselJ => ("bessel_J", ScalarFunction),
    BesselY => ("bessel_Y", ScalarFunction),
    BesselI => ("bessel_I", ScalarFunction),
    BesselK => ("bessel_K", ScalarFunction),
    Dot => ("dot", TensorAlgebra),
    Inner => ("inner", TensorAlgebra),
    Outer => ("outer", TensorAlgebra),
    Cross => ("cross", TensorAlgebra),
    Transposed => ("transposed", TensorAlgebra),
    Sym => ("sym", TensorAlgebra),
    Skew => ("skew", TensorAlgebra),
    Dev => ("dev", TensorAlgebra),
    Trace => ("tr", TensorAlgebra),
    Det => ("det", TensorAlgebra),
    Cofac => ("cofac", TensorAlgebra),
    Inverse => ("inv", TensorAlgebra),
    Diag => ("diag", TensorAlgebra),
    DiagVector => ("diag_vector", TensorAlgebra),
    Grad => ("grad", Differential),
    NablaGrad => ("nabla_grad", Differential),
    Div => ("div", Differential),
    NablaDiv => ("nabla_div", Differential),
    Curl => ("curl", Differential),
    Rot => ("rot", Differential),
    Dx => ("dx", Differential),
    Variable => ("variable", Differential),
    VariableDerivative => ("variable_derivative", Differential),
    CoefficientDerivative => ("coefficient_derivative", Differential),
    ExteriorDerivative => ("exterior_derivative", Differential),
    PositiveRestricted => ("positive_restricted", Restriction),
    NegativeRestricted => ("negative_restricted", Restriction),
    Eq => ("eq", Boolean),
    Ne => ("ne", Boolean),
    Le => ("le", Boolean),
    Ge => ("ge", Boolean),
    Lt => ("lt", Boolean),
    Gt => ("gt", Boolean),
    And => ("and", Boolean),
    Or => ("or", Boolean),
    Not => ("not", Boolean),
    Conditional => ("conditional", Conditional),
}

impl Op {
    pub fn is_terminal(self) -> bool {
        self.group().is_terminal()
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            Op::Sum | Op::Product | Op::Inner | Op::And | Op::Or | Op::Eq | Op::Ne
        )
    }

    /// Derivative operators that `apply_derivatives` eliminates.
    pub fn is_derivative(self) -> bool {
        matches!(
            self,
            Op::Grad
                | Op::NablaGrad
                | Op::Div
                | Op::NablaDiv
                | Op::Curl
                | Op::Rot
                | Op::Dx
                | Op::VariableDerivative
                | Op::CoefficientDerivative
        )
    }
}

/// A finite f64 ordered and hashed by its bit pattern.
#[derive(Debug, Clone, Copy)]
pub struct Real(pub f64);

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}
impl Eq for Real {}
impl Hash for Real {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}
impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Real {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Immutable per-kind data stored on a node besides its operands.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Payload {
    None,
    Int(i64),
    Real(Real),
    Dim(usize),
    UnitVector {
        dim: usize,
        axis: usize,
    },
    Cell(Cell),
    Constant {
        cell: Cell,
        count: usize,
    },
    Function {
        element: Element,
        count: usize,
    },
    Zero {
        shape: Shape,
        free: Vec<(Index, usize)>,
    },
    MultiIndex(MultiIndex),
    Index(Index),
    Term(IndexTerm),
    Label(u64),
    /// Number of differentiation targets of a coefficient derivative.
    Count(usize),
}

pub struct Node {
    id: u64,
    op: Op,
    operands: Vec<Expr>,
    payload: Payload,
    shape: Shape,
    free: FreeIndexMap,
    gdim: Option<usize>,
    restricted: bool,
    shash: u64,
}

/// Handle to an interned node. Cloning is cheap; equality is identity.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}
impl Eq for Expr {}
impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.id.hash(state);
    }
}
impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Expr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.id.cmp(&other.0.id)
    }
}

impl Expr {
    pub fn id(&self) -> u64 {
        self.0.id
    }
    pub fn op(&self) -> Op {
        self.0.op
    }
    pub fn group(&self) -> Group {
        self.0.op.group()
    }
    pub fn operands(&self) -> &[Expr] {
        &self.0.operands
    }
    pub fn operand(&self, i: usize) -> &Expr {
        &self.0.operands[i]
    }
    pub fn payload(&self) -> &Payload {
        &self.0.payload
    }
    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }
    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }
    pub fn free(&self) -> &FreeIndexMap {
        &self.0.free
    }
    /// Shape and free indices together.
    pub fn signature(&self) -> (Shape, FreeIndexMap) {
        (self.0.shape.clone(), self.0.free.clone())
    }
    pub fn gdim(&self) -> Option<usize> {
        self.0.gdim
    }
    /// True if a restriction occurs anywhere below (or at) this node.
    pub fn contains_restriction(&self) -> bool {
        self.0.restricted
    }
    /// Hash of the structure, independent of handle ids.
    pub fn structural_hash(&self) -> u64 {
        self.0.shash
    }
    pub fn is_terminal(&self) -> bool {
        self.0.op.is_terminal()
    }
    pub fn is_scalar(&self) -> bool {
        self.0.shape.is_empty()
    }
    pub fn is_zero(&self) -> bool {
        self.0.op == Op::Zero
    }
    pub fn is_boolean(&self) -> bool {
        self.group() == Group::Boolean
    }
    /// The numeric value of a scalar literal without free indices.
    pub fn literal_value(&self) -> Option<f64> {
        match (&self.0.op, &self.0.payload) {
            (Op::Zero, _) if self.0.shape.is_empty() && self.0.free.is_empty() => Some(0.0),
            (Op::IntValue, Payload::Int(v)) => Some(*v as f64),
            (Op::RealValue, Payload::Real(r)) => Some(r.0),
            _ => None,
        }
    }
    pub fn is_literal_value(&self, v: f64) -> bool {
        self.literal_value() == Some(v)
    }
    pub fn multi_index(&self) -> Option<&MultiIndex> {
        match &self.0.payload {
            Payload::MultiIndex(m) => Some(m),
            _ => None,
        }
    }
    pub fn element(&self) -> Option<&Element> {
        match &self.0.payload {
            Payload::Function { element, .. } => Some(element),
            _ => None,
        }
    }
    /// Coefficient/Constant count or Argument number.
    pub fn count(&self) -> Option<usize> {
        match &self.0.payload {
            Payload::Function { count, .. } | Payload::Constant { count, .. } => Some(*count),
            _ => None,
        }
    }
    pub fn is_function(&self) -> bool {
        matches!(self.op(), Op::Coefficient | Op::Constant | Op::Argument)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::frontend::print_expr(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::frontend::print_expr(self))
    }
}

type Key = (Op, Payload, Vec<u64>);

struct Interner {
    map: HashMap<Key, Expr>,
    next_id: u64,
}

static INTERNER: LazyLock<Mutex<Interner>> = LazyLock::new(|| {
    Mutex::new(Interner {
        map: HashMap::new(),
        next_id: 0,
    })
});

static INTERN_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of intern requests made so far in this process.
pub fn intern_call_count() -> u64 {
    INTERN_CALLS.load(Ordering::Relaxed)
}

/// Number of distinct nodes interned so far in this process.
pub fn interned_node_count() -> u64 {
    INTERNER.lock().expect("interner poisoned").next_id
}

/// Interns a node whose shape and free indices have already been derived.
/// All validation happens in the constructors; this only deduplicates.
pub(crate) fn intern(
    op: Op,
    operands: Vec<Expr>,
    payload: Payload,
    shape: Shape,
    free: FreeIndexMap,
) -> Result<Expr> {
    INTERN_CALLS.fetch_add(1, Ordering::Relaxed);
    let mut gdim = match &payload {
        Payload::Cell(c) | Payload::Constant { cell: c, .. } => Some(c.geometric_dimension()),
        Payload::Function { element, .. } => Some(element.cell().geometric_dimension()),
        _ => None,
    };
    for o in &operands {
        match (gdim, o.gdim()) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::DomainMismatch(format!(
                    "operands defined on domains of dimension {a} and {b}"
                )))
            }
            (None, Some(b)) => gdim = Some(b),
            _ => {}
        }
    }
    let restricted = matches!(op, Op::PositiveRestricted | Op::NegativeRestricted)
        || operands.iter().any(Expr::contains_restriction);
    let key: Key = (op, payload, operands.iter().map(Expr::id).collect());
    let mut interner = INTERNER.lock().expect("interner poisoned");
    if let Some(e) = interner.map.get(&key) {
        return Ok(e.clone());
    }
    let mut h = DefaultHasher::new();
    key.0.hash(&mut h);
    key.1.hash(&mut h);
    for o in &operands {
        o.structural_hash().hash(&mut h);
    }
    let node = Node {
        id: interner.next_id,
        op,
        operands,
        payload: key.1.clone(),
        shape,
        free,
        gdim,
        restricted,
        shash: h.finish(),
    };
    interner.next_id += 1;
    let e = Expr(Arc::new(node));
    interner.map.insert(key, e.clone());
    Ok(e)
}

static NEXT_COUNT: AtomicUsize = AtomicUsize::new(0);
static NEXT_LABEL: AtomicU64 = AtomicU64::new(0);

/// Next Coefficient/Constant count, or registers an explicit one so later
/// automatic counts stay above it.
pub(crate) fn function_count(explicit: Option<usize>) -> usize {
    match explicit {
        Some(c) => {
            NEXT_COUNT.fetch_max(c + 1, Ordering::Relaxed);
            c
        }
        None => NEXT_COUNT.fetch_add(1, Ordering::Relaxed),
    }
}

pub(crate) fn variable_label(explicit: Option<u64>) -> u64 {
    match explicit {
        Some(l) => {
            NEXT_LABEL.fetch_max(l + 1, Ordering::Relaxed);
            l
        }
        None => NEXT_LABEL.fetch_add(1, Ordering::Relaxed),
    }
}

/// Ordering key for the operands of commutative nodes. It depends only on
/// structure, except as a last resort on handle ids.
pub fn canonical_cmp(a: &Expr, b: &Expr) -> std::cmp::Ordering {
    (a.op(), a.payload(), a.structural_hash(), a.id()).cmp(&(
        b.op(),
        b.payload(),
        b.structural_hash(),
        b.id(),
    ))
}

/// Merges two free-index maps, checking that shared indices agree.
pub fn merge_free(a: &FreeIndexMap, b: &FreeIndexMap) -> Result<FreeIndexMap> {
    let mut out = a.clone();
    for (i, d) in b {
        match out.get(i) {
            Some(d0) if d0 != d => {
                return Err(Error::FreeIndexConflict(format!(
                    "index {i} bound to dimensions {d0} and {d}"
                )))
            }
            _ => {
                out.insert(*i, *d);
            }
        }
    }
    Ok(out)
}

/// The simplex cell of a geometric dimension.
pub fn cell_of_dim(d: usize) -> Result<Cell> {
    Cell::ALL
        .into_iter()
        .find(|c| c.geometric_dimension() == d)
        .ok_or_else(|| Error::DomainMismatch(format!("no cell of dimension {d}")))
}
