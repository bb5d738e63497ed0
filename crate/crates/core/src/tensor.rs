//! Tensor algebra operators.

use crate::error::{Error, Result};
use crate::indexing::{component, from_components};
use crate::ir::{
    division, intern, math_fn, merge_free, power, product, reject_boolean, shape_str, zero, Expr,
    FreeIndexMap, Op, Payload,
};

fn no_repeated_free(a: &Expr, b: &Expr, context: &str) -> Result<FreeIndexMap> {
    if a.free().keys().any(|i| b.free().contains_key(i)) {
        return Err(Error::FreeIndexConflict(format!(
            "operands of {context} share a free index"
        )));
    }
    merge_free(a.free(), b.free())
}

fn binary(op: Op, a: &Expr, b: &Expr, shape: Vec<usize>, free: FreeIndexMap) -> Result<Expr> {
    if a.is_zero() || b.is_zero() {
        return Ok(zero(&shape, &free));
    }
    intern(op, vec![a.clone(), b.clone()], Payload::None, shape, free)
}

/// Contracts the last axis of `a` with the first axis of `b`. Two vectors
/// give the same node as `inner`.
pub fn dot(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "dot")?;
    reject_boolean(b, "dot")?;
    let free = no_repeated_free(a, b, "dot")?;
    if a.is_scalar() || b.is_scalar() {
        return product(a, b);
    }
    let (sa, sb) = (a.shape(), b.shape());
    if sa[sa.len() - 1] != sb[0] {
        return Err(Error::ShapeMismatch(format!(
            "dot of shapes {} and {}",
            shape_str(sa),
            shape_str(sb)
        )));
    }
    if sa.len() == 1 && sb.len() == 1 {
        return inner(a, b);
    }
    let mut shape = sa[..sa.len() - 1].to_vec();
    shape.extend_from_slice(&sb[1..]);
    binary(Op::Dot, a, b, shape, free)
}

/// Full contraction of two tensors of equal shape.
pub fn inner(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "inner")?;
    reject_boolean(b, "inner")?;
    let free = no_repeated_free(a, b, "inner")?;
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "inner of shapes {} and {}",
            shape_str(a.shape()),
            shape_str(b.shape())
        )));
    }
    if a.is_scalar() {
        return product(a, b);
    }
    let (a, b) = crate::ir::canonical_pair(a, b);
    binary(Op::Inner, &a, &b, vec![], free)
}

pub fn outer(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "outer")?;
    reject_boolean(b, "outer")?;
    let free = no_repeated_free(a, b, "outer")?;
    if a.is_scalar() || b.is_scalar() {
        return product(a, b);
    }
    let mut shape = a.shape().to_vec();
    shape.extend_from_slice(b.shape());
    binary(Op::Outer, a, b, shape, free)
}

pub fn cross(a: &Expr, b: &Expr) -> Result<Expr> {
    reject_boolean(a, "cross")?;
    reject_boolean(b, "cross")?;
    let free = no_repeated_free(a, b, "cross")?;
    if a.shape() != [3] || b.shape() != [3] {
        return Err(Error::ShapeMismatch(format!(
            "cross needs two 3-vectors, got {} and {}",
            shape_str(a.shape()),
            shape_str(b.shape())
        )));
    }
    binary(Op::Cross, a, b, vec![3], free)
}

fn square_matrix(op: Op, a: &Expr) -> Result<usize> {
    match a.shape() {
        [n, m] if n == m => Ok(*n),
        [_, _] => Err(Error::ShapeMismatch(format!(
            "{} needs a square matrix, got {}",
            op.name(),
            shape_str(a.shape())
        ))),
        s => Err(Error::Rank(format!(
            "{} needs a rank-2 tensor, got rank {}",
            op.name(),
            s.len()
        ))),
    }
}

/// One-operand tensor operators: transpose, sym, skew, dev, tr, det,
/// cofac, inv, diag, diag_vector.
pub fn unary(op: Op, a: &Expr) -> Result<Expr> {
    reject_boolean(a, op.name())?;
    let free = a.free().clone();
    let shape = match op {
        Op::Transposed => match a.shape() {
            [m, n] => {
                if a.op() == Op::Transposed {
                    return Ok(a.operand(0).clone());
                }
                vec![*n, *m]
            }
            s => {
                return Err(Error::Rank(format!(
                    "transpose needs a rank-2 tensor, got rank {}",
                    s.len()
                )))
            }
        },
        Op::Sym | Op::Skew | Op::Dev | Op::Cofac => {
            let n = square_matrix(op, a)?;
            vec![n, n]
        }
        Op::Trace => {
            square_matrix(op, a)?;
            vec![]
        }
        Op::Det | Op::Inverse => {
            if a.is_scalar() {
                return match op {
                    Op::Det => Ok(a.clone()),
                    _ => division(&crate::ir::int(1), a),
                };
            }
            let n = square_matrix(op, a)?;
            if op == Op::Det {
                vec![]
            } else {
                vec![n, n]
            }
        }
        Op::Diag => match a.shape() {
            [n] => vec![*n, *n],
            [n, m] if n == m => vec![*n, *n],
            [_, _] => return Err(Error::ShapeMismatch("diag needs a square matrix".into())),
            s => {
                return Err(Error::Rank(format!(
                    "diag needs rank 1 or 2, got rank {}",
                    s.len()
                )))
            }
        },
        Op::DiagVector => vec![square_matrix(op, a)?],
        _ => {
            return Err(Error::Arity(format!(
                "{} is not a unary tensor operator",
                op.name()
            )))
        }
    };
    if a.is_zero() && op != Op::Inverse {
        return Ok(zero(&shape, &free));
    }
    if op == Op::Inverse && a.is_zero() {
        return Err(Error::DivisionByZero);
    }
    intern(op, vec![a.clone()], Payload::None, shape, free)
}

pub fn transpose(a: &Expr) -> Result<Expr> {
    unary(Op::Transposed, a)
}

fn same_shape(a: &Expr, b: &Expr, context: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{context} of shapes {} and {}",
            shape_str(a.shape()),
            shape_str(b.shape())
        )));
    }
    Ok(())
}

/// Componentwise product; lowered to a list of component products.
pub fn elem_mult(a: &Expr, b: &Expr) -> Result<Expr> {
    same_shape(a, b, "elem_mult")?;
    from_components(a.shape(), &mut |c| {
        product(&component(a, c)?, &component(b, c)?)
    })
}

pub fn elem_div(a: &Expr, b: &Expr) -> Result<Expr> {
    same_shape(a, b, "elem_div")?;
    from_components(a.shape(), &mut |c| {
        division(&component(a, c)?, &component(b, c)?)
    })
}

pub fn elem_pow(a: &Expr, b: &Expr) -> Result<Expr> {
    same_shape(a, b, "elem_pow")?;
    from_components(a.shape(), &mut |c| {
        power(&component(a, c)?, &component(b, c)?)
    })
}

/// Applies a one-argument scalar function to every component.
pub fn elem_op(op: Op, a: &Expr) -> Result<Expr> {
    from_components(a.shape(), &mut |c| math_fn(op, &component(a, c)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Cell;
    use crate::elements::{Element, Symmetry};
    use crate::ir::coefficient;

    fn tc(shape: &[usize]) -> Expr {
        let e = match shape {
            [n] => Element::vector("Lagrange", Cell::Tetrahedron, 1, Some(*n)).unwrap(),
            _ => Element::tensor(
                "Lagrange",
                Cell::Tetrahedron,
                1,
                Some(shape.to_vec()),
                Symmetry::None,
            )
            .unwrap(),
        };
        coefficient(&e, None)
    }

    #[test]
    fn inner_of_matrices_is_scalar() {
        let a = tc(&[2, 2]);
        let b = tc(&[2, 2]);
        assert!(inner(&a, &b).unwrap().is_scalar());
        assert!(matches!(inner(&a, &tc(&[2])), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn dot_of_vectors_is_inner() {
        let v = tc(&[2]);
        let w = tc(&[2]);
        assert_eq!(dot(&v, &w).unwrap(), inner(&v, &w).unwrap());
        assert_eq!(dot(&tc(&[3, 2]), &tc(&[2, 4])).unwrap().shape(), &[3, 4]);
    }

    #[test]
    fn transpose_is_an_involution() {
        let a = tc(&[2, 3]);
        let t = transpose(&a).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(transpose(&t).unwrap(), a);
    }

    #[test]
    fn rank_errors() {
        let v = tc(&[3]);
        assert!(matches!(unary(Op::Det, &v), Err(Error::Rank(_))));
        assert!(matches!(
            unary(Op::Trace, &tc(&[2, 3])),
            Err(Error::ShapeMismatch(_))
        ));
        assert_eq!(unary(Op::Diag, &v).unwrap().shape(), &[3, 3]);
        assert_eq!(cross(&v, &tc(&[3])).unwrap().shape(), &[3]);
    }

    #[test]
    fn elementwise_ops_keep_shape() {
        let a = tc(&[2, 2]);
        let b = tc(&[2, 2]);
        assert_eq!(elem_mult(&a, &b).unwrap().shape(), &[2, 2]);
        assert_eq!(elem_op(Op::Sin, &a).unwrap().shape(), &[2, 2]);
        assert!(matches!(
            elem_div(&a, &tc(&[2])),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
