//! Index notation: `Indexed`, `ComponentTensor`, `IndexSum`, `ListTensor`,
//! and the `*` operator with implicit summation over repeated indices.

use crate::error::{Error, Result};
use crate::ir::{
    intern, merge_free, product, shape_str, zero, Expr, FreeIndexMap, Index, IndexTerm, MultiIndex,
    Op, Payload,
};

/// `e[mi]`. The result is scalar; free terms of `mi` become free indices
/// with the dimension of the axis they index.
pub fn indexed(e: &Expr, mi: &MultiIndex) -> Result<Expr> {
    crate::ir::reject_boolean(e, "indexing")?;
    if mi.len() != e.rank() {
        return Err(Error::RankMismatch(format!(
            "{} indices for an expression of shape {}",
            mi.len(),
            shape_str(e.shape())
        )));
    }
    if mi.is_empty() {
        return Ok(e.clone());
    }
    let mut free = e.free().clone();
    let mut own = FreeIndexMap::new();
    for (term, &dim) in mi.0.iter().zip(e.shape()) {
        match *term {
            IndexTerm::Fixed(v) if v >= dim => {
                return Err(Error::IndexOutOfRange(format!(
                    "index {v} on an axis of dimension {dim}"
                )));
            }
            IndexTerm::Fixed(_) => {}
            IndexTerm::Free(i) => {
                own = merge_free(&own, &FreeIndexMap::from([(i, dim)]))?;
            }
        }
    }
    free = merge_free(&free, &own)?;
    if e.is_zero() {
        return Ok(zero(&[], &free));
    }
    match e.op() {
        Op::ComponentTensor if e.multi_index() == Some(mi) => return Ok(e.operand(0).clone()),
        Op::ListTensor => {
            if let IndexTerm::Fixed(k) = mi.0[0] {
                return indexed(&e.operands()[k], &MultiIndex(mi.0[1..].to_vec()));
            }
        }
        Op::Identity => {
            if let (IndexTerm::Fixed(a), IndexTerm::Fixed(b)) = (mi.0[0], mi.0[1]) {
                return Ok(crate::ir::int(i64::from(a == b)));
            }
        }
        _ => {}
    }
    intern(
        Op::Indexed,
        vec![e.clone()],
        Payload::MultiIndex(mi.clone()),
        vec![],
        free,
    )
}

/// `e[c0, c1, ...]` with fixed indices.
pub fn component(e: &Expr, c: &[usize]) -> Result<Expr> {
    indexed(e, &MultiIndex::fixed(c))
}

/// `as_tensor(e, indices)`: turns the listed free indices of the scalar `e`
/// into tensor axes.
pub fn as_tensor(e: &Expr, indices: &[Index]) -> Result<Expr> {
    crate::ir::reject_boolean(e, "as_tensor")?;
    if indices.is_empty() {
        return Ok(e.clone());
    }
    if !e.is_scalar() {
        return Err(Error::ShapeMismatch(format!(
            "as_tensor needs a scalar expression, got shape {}",
            shape_str(e.shape())
        )));
    }
    let mut free = e.free().clone();
    let mut shape = Vec::with_capacity(indices.len());
    for (n, i) in indices.iter().enumerate() {
        if indices[..n].contains(i) {
            return Err(Error::DuplicateIndex(format!("index {i} listed twice")));
        }
        match free.remove(i) {
            Some(d) => shape.push(d),
            None => {
                return Err(Error::UnboundIndex(format!(
                    "index {i} is not free in the expression"
                )))
            }
        }
    }
    if e.is_zero() {
        return Ok(zero(&shape, &free));
    }
    let mi = MultiIndex::free(indices);
    if e.op() == Op::Indexed && e.multi_index() == Some(&mi) {
        let inner = e.operand(0);
        if indices.iter().all(|i| !inner.free().contains_key(i)) {
            return Ok(inner.clone());
        }
    }
    intern(
        Op::ComponentTensor,
        vec![e.clone()],
        Payload::MultiIndex(mi),
        shape,
        free,
    )
}

/// Stacks equally shaped components along a new leading axis.
pub fn list_tensor(components: &[Expr]) -> Result<Expr> {
    let first = components
        .first()
        .ok_or_else(|| Error::ShapeMismatch("as_vector needs at least one component".into()))?;
    for c in components {
        crate::ir::reject_boolean(c, "as_vector")?;
        if c.shape() != first.shape() {
            return Err(Error::ShapeMismatch(format!(
                "components of shapes {} and {}",
                shape_str(first.shape()),
                shape_str(c.shape())
            )));
        }
        if c.free() != first.free() {
            return Err(Error::FreeIndexConflict(
                "components have different free indices".into(),
            ));
        }
    }
    let mut shape = vec![components.len()];
    shape.extend_from_slice(first.shape());
    if components.iter().all(Expr::is_zero) {
        return Ok(zero(&shape, first.free()));
    }
    // as_vector((v[0], v[1], ..., v[n-1])) is v itself.
    if let Some(base) = first.operands().first() {
        let all_components = components.iter().enumerate().all(|(k, c)| {
            c.op() == Op::Indexed
                && c.operand(0) == base
                && c.multi_index().map(|m| m.0.as_slice()) == Some(&[IndexTerm::Fixed(k)])
        });
        if all_components && base.shape() == [components.len()] {
            return Ok(base.clone());
        }
    }
    intern(
        Op::ListTensor,
        components.to_vec(),
        Payload::None,
        shape,
        first.free().clone(),
    )
}

/// `as_vector((a, b, c))`.
pub fn as_vector(components: &[Expr]) -> Result<Expr> {
    list_tensor(components)
}

/// `as_matrix(((a, b), (c, d)))`.
pub fn as_matrix(rows: &[Vec<Expr>]) -> Result<Expr> {
    let rows = rows
        .iter()
        .map(|r| list_tensor(r))
        .collect::<Result<Vec<_>>>()?;
    list_tensor(&rows)
}

/// Builds a tensor of `shape` from a function of its component.
pub fn from_components(
    shape: &[usize],
    f: &mut dyn FnMut(&[usize]) -> Result<Expr>,
) -> Result<Expr> {
    fn go(
        shape: &[usize],
        prefix: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> Result<Expr>,
    ) -> Result<Expr> {
        if prefix.len() == shape.len() {
            return f(prefix);
        }
        let n = shape[prefix.len()];
        let mut parts = Vec::with_capacity(n);
        for k in 0..n {
            prefix.push(k);
            parts.push(go(shape, prefix, f)?);
            prefix.pop();
        }
        list_tensor(&parts)
    }
    go(shape, &mut Vec::new(), f)
}

/// Explicit sum of `e` over the free index `i`.
pub fn index_sum(e: &Expr, i: Index) -> Result<Expr> {
    crate::ir::reject_boolean(e, "index_sum")?;
    let mut free = e.free().clone();
    if free.remove(&i).is_none() {
        return Err(Error::UnboundIndex(format!(
            "index {i} is not free in the summand"
        )));
    }
    if e.is_zero() {
        return Ok(zero(e.shape(), &free));
    }
    intern(
        Op::IndexSum,
        vec![e.clone()],
        Payload::Index(i),
        e.shape().to_vec(),
        free,
    )
}

/// The `*` operator: scaling, matrix products, and products of scalars with
/// implicit summation over indices free in both factors.
pub fn star(a: &Expr, b: &Expr) -> Result<Expr> {
    let repeated: Vec<Index> = a
        .free()
        .keys()
        .filter(|i| b.free().contains_key(i))
        .copied()
        .collect();
    if a.is_scalar() || b.is_scalar() {
        if !repeated.is_empty() && !(a.is_scalar() && b.is_scalar()) {
            return Err(Error::FreeIndexConflict(
                "implicit summation over a repeated index needs scalar operands".into(),
            ));
        }
        let mut p = product(a, b)?;
        for i in repeated {
            p = index_sum(&p, i)?;
        }
        return Ok(p);
    }
    if !a.free().is_empty() || !b.free().is_empty() {
        return Err(Error::FreeIndexConflict(
            "tensor-valued operands of * cannot carry free indices".into(),
        ));
    }
    match (a.shape(), b.shape()) {
        ([_, n], [m]) | ([_, n], [m, _]) if n == m => crate::tensor::dot(a, b),
        _ => Err(Error::ShapeMismatch(format!(
            "cannot multiply shapes {} and {}",
            shape_str(a.shape()),
            shape_str(b.shape())
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Cell;
    use crate::elements::Element;
    use crate::ir::coefficient;

    fn tensor_coefficient(shape: &[usize]) -> Expr {
        let e = match shape {
            [] => Element::finite("Lagrange", Cell::Triangle, 1).unwrap(),
            [n] => Element::vector("Lagrange", Cell::Triangle, 1, Some(*n)).unwrap(),
            _ => Element::tensor(
                "Lagrange",
                Cell::Triangle,
                1,
                Some(shape.to_vec()),
                crate::elements::Symmetry::None,
            )
            .unwrap(),
        };
        coefficient(&e, None)
    }

    fn ij() -> (Index, Index) {
        (
            Index::predefined("i").unwrap(),
            Index::predefined("j").unwrap(),
        )
    }

    #[test]
    fn indexing_collects_free_dimensions() {
        let a = tensor_coefficient(&[3, 3]);
        let (i, j) = ij();
        let aij = indexed(&a, &MultiIndex::free(&[i, j])).unwrap();
        assert!(aij.is_scalar());
        assert_eq!(aij.free(), &FreeIndexMap::from([(i, 3), (j, 3)]));
    }

    #[test]
    fn indexing_errors() {
        let a = tensor_coefficient(&[2, 2]);
        assert!(matches!(
            component(&a, &[5, 0]),
            Err(Error::IndexOutOfRange(_))
        ));
        assert!(matches!(component(&a, &[0]), Err(Error::RankMismatch(_))));
        let (i, _) = ij();
        let b = tensor_coefficient(&[2, 3]);
        assert!(matches!(
            indexed(&b, &MultiIndex::free(&[i, i])),
            Err(Error::FreeIndexConflict(_))
        ));
    }

    #[test]
    fn canceling_in_both_directions() {
        let b = tensor_coefficient(&[2, 2]);
        let (i, j) = ij();
        let bij = indexed(&b, &MultiIndex::free(&[i, j])).unwrap();
        assert_eq!(as_tensor(&bij, &[i, j]).unwrap(), b);
        let bji = indexed(&b, &MultiIndex::free(&[j, i])).unwrap();
        let t = as_tensor(&bji, &[i, j]).unwrap();
        assert_eq!(t.op(), Op::ComponentTensor);
        assert_eq!(indexed(&t, &MultiIndex::free(&[i, j])).unwrap(), bji);
    }

    #[test]
    fn as_tensor_errors() {
        let b = tensor_coefficient(&[2]);
        let (i, j) = ij();
        let bi = indexed(&b, &MultiIndex::free(&[i])).unwrap();
        assert!(matches!(as_tensor(&bi, &[j]), Err(Error::UnboundIndex(_))));
        assert!(matches!(
            as_tensor(&bi, &[i, i]),
            Err(Error::DuplicateIndex(_))
        ));
        let v = as_tensor(&bi, &[i]).unwrap();
        assert_eq!(v, b);
    }

    #[test]
    fn implicit_summation() {
        let u = tensor_coefficient(&[2]);
        let v = tensor_coefficient(&[2]);
        let (i, _) = ij();
        let ui = indexed(&u, &MultiIndex::free(&[i])).unwrap();
        let vi = indexed(&v, &MultiIndex::free(&[i])).unwrap();
        let s = star(&ui, &vi).unwrap();
        assert_eq!(s.op(), Op::IndexSum);
        assert!(s.free().is_empty());
        assert_eq!(s, index_sum(&product(&ui, &vi).unwrap(), i).unwrap());
    }

    #[test]
    fn matrix_vector_star() {
        let a = tensor_coefficient(&[2, 2]);
        let x = tensor_coefficient(&[2]);
        assert_eq!(star(&a, &x).unwrap().shape(), &[2]);
        assert!(matches!(star(&x, &a), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_times_tensor_keeps_shape() {
        let g = crate::ir::grad(&tensor_coefficient(&[])).unwrap();
        let z = star(&crate::ir::scalar_zero(), &g).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.shape(), &[2]);
    }

    #[test]
    fn list_tensor_shapes() {
        let f = tensor_coefficient(&[]);
        let v = as_vector(&[f.clone(), f.clone(), crate::ir::int(2)]).unwrap();
        assert_eq!(v.shape(), &[3]);
        let m = as_matrix(&[vec![f.clone(), f.clone()], vec![f.clone(), f]]).unwrap();
        assert_eq!(m.shape(), &[2, 2]);
        let u = tensor_coefficient(&[2]);
        let again =
            as_vector(&[component(&u, &[0]).unwrap(), component(&u, &[1]).unwrap()]).unwrap();
        assert_eq!(again, u);
    }

    #[test]
    fn index_sum_requires_a_free_index() {
        let f = tensor_coefficient(&[]);
        let (i, _) = ij();
        assert!(matches!(index_sum(&f, i), Err(Error::UnboundIndex(_))));
    }
}
