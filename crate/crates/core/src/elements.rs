//! Finite element descriptions and the element algebra.
//!
//! Elements here are purely symbolic: they carry a family, a cell and a
//! degree and derive a value shape, but no basis functions. Mixed elements
//! flatten the value components of their subelements into one vector.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, LazyLock, RwLock};

use crate::cell::Cell;
use crate::error::{Error, Result};

/// How a family's value shape depends on the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShapeRule {
    Scalar,
    /// Vector valued with one component per geometric dimension.
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinDegree {
    Fixed(u32),
    /// Bubbles need degree at least `d + 1` on a cell of dimension `d`.
    GdimPlusOne,
}

/// An entry of the family table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementFamily {
    pub canonical_name: String,
    pub aliases: Vec<String>,
    pub value_shape_rule: ValueShapeRule,
    pub min_degree: MinDegree,
    pub max_degree: Option<u32>,
}

impl ElementFamily {
    pub fn new(
        canonical_name: &str,
        aliases: &[&str],
        value_shape_rule: ValueShapeRule,
        min_degree: MinDegree,
        max_degree: Option<u32>,
    ) -> Self {
        ElementFamily {
            canonical_name: canonical_name.to_string(),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
            value_shape_rule,
            min_degree,
            max_degree,
        }
    }

    fn matches(&self, name: &str) -> bool {
        self.canonical_name == name || self.aliases.iter().any(|a| a == name)
    }

    pub fn degree_range(&self, cell: Cell) -> (u32, Option<u32>) {
        let min = match self.min_degree {
            MinDegree::Fixed(m) => m,
            MinDegree::GdimPlusOne => cell.geometric_dimension() as u32 + 1,
        };
        (min, self.max_degree)
    }

    pub fn value_shape(&self, cell: Cell) -> Vec<usize> {
        match self.value_shape_rule {
            ValueShapeRule::Scalar => vec![],
            ValueShapeRule::Vector => vec![cell.geometric_dimension()],
        }
    }
}

fn builtin_families() -> Vec<ElementFamily> {
    use MinDegree::*;
    use ValueShapeRule::*;
    vec![
        ElementFamily::new("Lagrange", &["P", "CG"], Scalar, Fixed(1), None),
        ElementFamily::new("Discontinuous Lagrange", &["DG"], Scalar, Fixed(0), None),
        ElementFamily::new("Brezzi-Douglas-Marini", &["BDM"], Vector, Fixed(1), None),
        ElementFamily::new("Raviart-Thomas", &["RT"], Vector, Fixed(1), None),
        ElementFamily::new(
            "Nedelec 1st kind H(curl)",
            &["N1curl"],
            Vector,
            Fixed(1),
            None,
        ),
        ElementFamily::new(
            "Nedelec 2nd kind H(curl)",
            &["N2curl"],
            Vector,
            Fixed(1),
            None,
        ),
        ElementFamily::new("Crouzeix-Raviart", &["CR"], Scalar, Fixed(1), Some(1)),
        ElementFamily::new("Bubble", &["B"], Scalar, GdimPlusOne, None),
        ElementFamily::new("Real", &["R"], Scalar, Fixed(0), Some(0)),
        ElementFamily::new("Quadrature", &["Q"], Scalar, Fixed(0), None),
    ]
}

static FAMILIES: LazyLock<RwLock<Vec<ElementFamily>>> =
    LazyLock::new(|| RwLock::new(builtin_families()));

/// Adds a family to the table. Fails if the name or an alias is taken.
pub fn register_family(family: ElementFamily) -> Result<()> {
    let mut table = FAMILIES.write().expect("family table poisoned");
    let taken = std::iter::once(&family.canonical_name)
        .chain(family.aliases.iter())
        .find(|n| table.iter().any(|f| f.matches(n)));
    if let Some(name) = taken {
        return Err(Error::UnknownFamily(format!(
            "family name '{name}' already registered"
        )));
    }
    table.push(family);
    Ok(())
}

/// Resolves a family by canonical name or alias.
pub fn lookup_family(name: &str) -> Result<ElementFamily> {
    FAMILIES
        .read()
        .expect("family table poisoned")
        .iter()
        .find(|f| f.matches(name))
        .cloned()
        .ok_or_else(|| Error::UnknownFamily(name.to_string()))
}

/// Symmetry specification for tensor elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symmetry {
    None,
    /// `A_ij = A_ji` for a square rank-2 tensor.
    Symmetric,
    Map(BTreeMap<Vec<usize>, Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementKind {
    Primitive {
        family: String,
        cell: Cell,
        degree: u32,
        quad_scheme: Option<String>,
    },
    Vector {
        sub: Element,
        dim: usize,
    },
    Tensor {
        sub: Element,
        shape: Vec<usize>,
        symmetry: BTreeMap<Vec<usize>, Vec<usize>>,
    },
    Mixed(Vec<Element>),
    Enriched(Vec<Element>),
    Restricted {
        sub: Element,
        domain: String,
    },
}

/// An immutable, cheaply clonable element description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(Arc<ElementKind>);

/// One scalar component of an element and the flat position it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSlot {
    pub sub: usize,
    pub component: Vec<usize>,
    pub flat: usize,
}

impl Element {
    pub fn kind(&self) -> &ElementKind {
        &self.0
    }

    /// `FiniteElement(family, cell, degree)`.
    pub fn finite(family: &str, cell: Cell, degree: u32) -> Result<Element> {
        Element::finite_with_scheme(family, cell, degree, None)
    }

    pub fn finite_with_scheme(
        family: &str,
        cell: Cell,
        degree: u32,
        quad_scheme: Option<String>,
    ) -> Result<Element> {
        let fam = lookup_family(family)?;
        let (lo, hi) = fam.degree_range(cell);
        if degree < lo || hi.is_some_and(|h| degree > h) {
            return Err(Error::BadDegree(format!(
                "{} requires degree in [{lo}, {}], got {degree}",
                fam.canonical_name,
                hi.map_or("inf".to_string(), |h| h.to_string())
            )));
        }
        Ok(Element(Arc::new(ElementKind::Primitive {
            family: fam.canonical_name,
            cell,
            degree,
            quad_scheme,
        })))
    }

    /// `VectorElement(family, cell, degree, dim)`; `dim` defaults to the
    /// geometric dimension of the cell.
    pub fn vector(family: &str, cell: Cell, degree: u32, dim: Option<usize>) -> Result<Element> {
        let sub = Element::finite(family, cell, degree)?;
        Element::vector_of(sub, dim)
    }

    pub fn vector_of(sub: Element, dim: Option<usize>) -> Result<Element> {
        let dim = dim.unwrap_or_else(|| sub.cell().geometric_dimension());
        if dim == 0 {
            return Err(Error::ShapeMismatch(
                "vector element dimension must be positive".into(),
            ));
        }
        Ok(Element(Arc::new(ElementKind::Vector { sub, dim })))
    }

    /// `TensorElement(family, cell, degree, shape, symmetry)`; `shape`
    /// defaults to `(d, d)`.
    pub fn tensor(
        family: &str,
        cell: Cell,
        degree: u32,
        shape: Option<Vec<usize>>,
        symmetry: Symmetry,
    ) -> Result<Element> {
        let sub = Element::finite(family, cell, degree)?;
        Element::tensor_of(sub, shape, symmetry)
    }

    pub fn tensor_of(
        sub: Element,
        shape: Option<Vec<usize>>,
        symmetry: Symmetry,
    ) -> Result<Element> {
        let d = sub.cell().geometric_dimension();
        let shape = shape.unwrap_or_else(|| vec![d, d]);
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "invalid tensor element shape {shape:?}"
            )));
        }
        let symmetry = match symmetry {
            Symmetry::None => BTreeMap::new(),
            Symmetry::Symmetric => {
                if shape.len() != 2 || shape[0] != shape[1] {
                    return Err(Error::BadSymmetry(format!(
                        "boolean symmetry requires a square rank-2 shape, got {shape:?}"
                    )));
                }
                let n = shape[0];
                let mut map = BTreeMap::new();
                for i in 0..n {
                    for j in 0..i {
                        map.insert(vec![i, j], vec![j, i]);
                    }
                }
                map
            }
            Symmetry::Map(map) => {
                let in_range = |c: &Vec<usize>| {
                    c.len() == shape.len() && c.iter().zip(&shape).all(|(a, b)| a < b)
                };
                for (k, v) in &map {
                    if !in_range(k) || !in_range(v) {
                        return Err(Error::BadSymmetry(format!(
                            "component {k:?} -> {v:?} outside shape {shape:?}"
                        )));
                    }
                    if k == v {
                        return Err(Error::BadSymmetry(format!(
                            "component {k:?} mapped to itself"
                        )));
                    }
                    if map.contains_key(v) {
                        return Err(Error::BadSymmetry(format!(
                            "component {k:?} mapped to {v:?}, which is itself mapped"
                        )));
                    }
                }
                map
            }
        };
        Ok(Element(Arc::new(ElementKind::Tensor {
            sub,
            shape,
            symmetry,
        })))
    }

    /// Mixed element of the given subelements. All share one cell and
    /// quadrature scheme.
    pub fn mixed(subs: Vec<Element>) -> Result<Element> {
        if subs.is_empty() {
            return Err(Error::ShapeMismatch(
                "mixed element needs at least one subelement".into(),
            ));
        }
        let cell = subs[0].cell();
        let scheme = subs[0].quad_scheme();
        for s in &subs[1..] {
            if s.cell() != cell {
                return Err(Error::CellMismatch(format!(
                    "mixed element over {cell} and {}",
                    s.cell()
                )));
            }
            if s.quad_scheme() != scheme {
                return Err(Error::CellMismatch(
                    "subelements of a mixed element use different quadrature schemes".into(),
                ));
            }
        }
        Ok(Element(Arc::new(ElementKind::Mixed(subs))))
    }

    /// Enriched element; all subelements share cell and value shape.
    pub fn enriched(subs: Vec<Element>) -> Result<Element> {
        if subs.is_empty() {
            return Err(Error::ShapeMismatch(
                "enriched element needs at least one subelement".into(),
            ));
        }
        let cell = subs[0].cell();
        let shape = subs[0].value_shape();
        for s in &subs[1..] {
            if s.cell() != cell {
                return Err(Error::CellMismatch(format!(
                    "enriched element over {cell} and {}",
                    s.cell()
                )));
            }
            if s.value_shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "enriched element with value shapes {:?} and {:?}",
                    shape,
                    s.value_shape()
                )));
            }
        }
        Ok(Element(Arc::new(ElementKind::Enriched(subs))))
    }

    /// Restriction to a cell or to `"facet"`.
    pub fn restricted(sub: Element, domain: &str) -> Result<Element> {
        let ok = domain == "facet" || domain.parse::<Cell>().is_ok();
        if !ok {
            return Err(Error::CellMismatch(format!(
                "cannot restrict an element to '{domain}'"
            )));
        }
        Ok(Element(Arc::new(ElementKind::Restricted {
            sub,
            domain: domain.to_string(),
        })))
    }

    /// `U * V`: a binary mixed element.
    pub fn mixed_with(&self, other: &Element) -> Result<Element> {
        Element::mixed(vec![self.clone(), other.clone()])
    }

    /// `U + V`: a binary enriched element.
    pub fn enriched_with(&self, other: &Element) -> Result<Element> {
        Element::enriched(vec![self.clone(), other.clone()])
    }

    /// `V[domain]`.
    pub fn restrict(&self, domain: &str) -> Result<Element> {
        Element::restricted(self.clone(), domain)
    }

    pub fn cell(&self) -> Cell {
        match self.kind() {
            ElementKind::Primitive { cell, .. } => *cell,
            ElementKind::Vector { sub, .. }
            | ElementKind::Tensor { sub, .. }
            | ElementKind::Restricted { sub, .. } => sub.cell(),
            ElementKind::Mixed(subs) | ElementKind::Enriched(subs) => subs[0].cell(),
        }
    }

    pub fn degree(&self) -> u32 {
        match self.kind() {
            ElementKind::Primitive { degree, .. } => *degree,
            ElementKind::Vector { sub, .. }
            | ElementKind::Tensor { sub, .. }
            | ElementKind::Restricted { sub, .. } => sub.degree(),
            ElementKind::Mixed(subs) | ElementKind::Enriched(subs) => {
                subs.iter().map(Element::degree).max().unwrap_or(0)
            }
        }
    }

    pub fn quad_scheme(&self) -> Option<&str> {
        match self.kind() {
            ElementKind::Primitive { quad_scheme, .. } => quad_scheme.as_deref(),
            ElementKind::Vector { sub, .. }
            | ElementKind::Tensor { sub, .. }
            | ElementKind::Restricted { sub, .. } => sub.quad_scheme(),
            ElementKind::Mixed(subs) | ElementKind::Enriched(subs) => subs[0].quad_scheme(),
        }
    }

    pub fn value_shape(&self) -> Vec<usize> {
        match self.kind() {
            ElementKind::Primitive { family, cell, .. } => lookup_family(family)
                .map(|f| f.value_shape(*cell))
                .unwrap_or_default(),
            ElementKind::Vector { sub, dim } => {
                let mut s = vec![*dim];
                s.extend(sub.value_shape());
                s
            }
            ElementKind::Tensor { sub, shape, .. } => {
                let mut s = shape.clone();
                s.extend(sub.value_shape());
                s
            }
            ElementKind::Mixed(subs) => vec![subs.iter().map(Element::value_size).sum()],
            ElementKind::Enriched(subs) => subs[0].value_shape(),
            ElementKind::Restricted { sub, .. } => sub.value_shape(),
        }
    }

    /// Number of scalar components, the product of the value shape.
    pub fn value_size(&self) -> usize {
        self.value_shape().iter().product()
    }

    /// Number of subelements; for tensor elements symmetric components do
    /// not count.
    pub fn num_sub_elements(&self) -> usize {
        match self.kind() {
            ElementKind::Primitive { .. } | ElementKind::Restricted { .. } => 1,
            ElementKind::Vector { dim, .. } => *dim,
            ElementKind::Tensor {
                shape, symmetry, ..
            } => shape.iter().product::<usize>() - symmetry.len(),
            ElementKind::Mixed(subs) | ElementKind::Enriched(subs) => subs.len(),
        }
    }

    /// Subelements in order: mixed/enriched parts, or the single element.
    pub fn sub_elements(&self) -> Vec<Element> {
        match self.kind() {
            ElementKind::Mixed(subs) | ElementKind::Enriched(subs) => subs.clone(),
            _ => vec![self.clone()],
        }
    }

    /// True when every function of the space is constant on each cell.
    pub fn is_piecewise_constant(&self) -> bool {
        match self.kind() {
            ElementKind::Primitive { family, degree, .. } => {
                family == "Real" || (*degree == 0 && family == "Discontinuous Lagrange")
            }
            ElementKind::Vector { sub, .. }
            | ElementKind::Tensor { sub, .. }
            | ElementKind::Restricted { sub, .. } => sub.is_piecewise_constant(),
            ElementKind::Mixed(subs) | ElementKind::Enriched(subs) => {
                subs.iter().all(Element::is_piecewise_constant)
            }
        }
    }

    /// True for the global-constant family `Real`.
    pub fn is_global_constant(&self) -> bool {
        match self.kind() {
            ElementKind::Primitive { family, .. } => family == "Real",
            ElementKind::Vector { sub, .. }
            | ElementKind::Tensor { sub, .. }
            | ElementKind::Restricted { sub, .. } => sub.is_global_constant(),
            ElementKind::Mixed(subs) | ElementKind::Enriched(subs) => {
                subs.iter().all(Element::is_global_constant)
            }
        }
    }

    fn symmetry_representative(&self, component: &[usize]) -> Vec<usize> {
        if let ElementKind::Tensor {
            symmetry, shape, ..
        } = self.kind()
        {
            let (head, tail) = component.split_at(shape.len().min(component.len()));
            if let Some(rep) = symmetry.get(head) {
                let mut c = rep.clone();
                c.extend_from_slice(tail);
                return c;
            }
        }
        component.to_vec()
    }
}

/// Enumerates all multi-indices of `shape` in row-major order.
pub fn components(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in shape {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |i| {
                    let mut c = prefix.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    out
}

/// Row-major flat position of `component` within `shape`.
pub fn flat_index(shape: &[usize], component: &[usize]) -> usize {
    component
        .iter()
        .zip(shape)
        .fold(0, |acc, (&c, &d)| acc * d + c)
}

/// Maps every (subelement, component) pair to its position in the flattened
/// value vector. Subelements are concatenated in order; components inside a
/// subelement are row-major, and symmetric tensor components share the slot
/// of their representative.
pub fn flatten_component_map(element: &Element) -> Vec<ComponentSlot> {
    let subs = match element.kind() {
        ElementKind::Mixed(subs) => subs.clone(),
        _ => vec![element.clone()],
    };
    let mut out = Vec::new();
    let mut offset = 0;
    for (si, sub) in subs.iter().enumerate() {
        let shape = sub.value_shape();
        for component in components(&shape) {
            let rep = sub.symmetry_representative(&component);
            out.push(ComponentSlot {
                sub: si,
                flat: offset + flat_index(&shape, &rep),
                component,
            });
        }
        offset += sub.value_size();
    }
    out
}

fn fmt_shape_tuple(dims: &[usize]) -> String {
    match dims.len() {
        0 => "()".into(),
        1 => format!("({},)", dims[0]),
        _ => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

fn fmt_component(c: &[usize]) -> String {
    fmt_shape_tuple(c)
}

impl fmt::Display for Element {
    /// Prints the element in the surface syntax accepted by the parser.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            ElementKind::Primitive {
                family,
                cell,
                degree,
                quad_scheme,
            } => {
                write!(f, "FiniteElement(\"{family}\", {cell}, {degree}")?;
                if let Some(q) = quad_scheme {
                    write!(f, ", quad_scheme=\"{q}\"")?;
                }
                write!(f, ")")
            }
            ElementKind::Vector { sub, dim } => write!(f, "VectorElement({sub}, dim={dim})"),
            ElementKind::Tensor {
                sub,
                shape,
                symmetry,
            } => {
                write!(f, "TensorElement({sub}, shape={}", fmt_shape_tuple(shape))?;
                if !symmetry.is_empty() {
                    let entries: Vec<String> = symmetry
                        .iter()
                        .map(|(k, v)| format!("{}: {}", fmt_component(k), fmt_component(v)))
                        .collect();
                    write!(f, ", symmetry={{{}}}", entries.join(", "))?;
                }
                write!(f, ")")
            }
            ElementKind::Mixed(subs) => {
                let parts: Vec<String> = subs.iter().map(|s| s.to_string()).collect();
                write!(f, "MixedElement({})", parts.join(", "))
            }
            ElementKind::Enriched(subs) => {
                let parts: Vec<String> = subs.iter().map(|s| s.to_string()).collect();
                write!(f, "EnrichedElement({})", parts.join(", "))
            }
            ElementKind::Restricted { sub, domain } => {
                write!(f, "RestrictedElement({sub}, \"{domain}\")")
            }
        }
    }
}
