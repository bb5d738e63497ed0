//! Derivative elimination. The outer pass walks the DAG bottom-up so the
//! innermost derivative is evaluated first; each derivative node is then
//! handed to a forward-mode engine that sees a derivative-free operand.
//!
//! The engine represents the derivative of `e` as an expression of the same
//! shape as `e` whose free indices gain the differentiation axes `W`: one
//! spatial index for gradients, the variable's axes for `diff`, and none for
//! Gateaux derivatives.

use std::collections::HashMap;

use crate::algorithms::build_list_dag;
use crate::elements::Element;
use crate::error::{Error, Result};
use crate::indexing::{as_tensor, component, from_components, index_sum, indexed, list_tensor};
use crate::ir::{
    self, bessel, conditional, division, identity, int, math_fn, merge_free, neg, power, product,
    real, restricted, shape_str, sub, sum, zero, Expr, FreeIndexMap, Index, IndexTerm, MultiIndex,
    Op, Payload, Side,
};
use crate::tensor::{cross, dot, inner, outer, unary};

enum Mode<'a> {
    Spatial {
        k: Index,
        dim: usize,
    },
    Variable {
        label: u64,
        beta: Vec<Index>,
        shape: Vec<usize>,
    },
    Directional {
        targets: &'a [Expr],
        dirs: &'a [Expr],
        overrides: Vec<(Expr, Expr)>,
    },
}

fn literal(v: f64) -> Result<Expr> {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Ok(int(v as i64))
    } else {
        real(v)
    }
}

fn fresh(n: usize) -> Vec<Index> {
    (0..n).map(|_| Index::fresh()).collect()
}

fn free_mi(indices: &[Index]) -> MultiIndex {
    MultiIndex::free(indices)
}

/// Strips a chain of gradients down to the terminal it is applied to.
fn grad_base(e: &Expr) -> Option<&Expr> {
    let mut b = e;
    while b.op() == Op::Grad {
        b = b.operand(0);
    }
    b.is_terminal().then_some(b)
}

fn grad_depth(e: &Expr) -> usize {
    let mut n = 0;
    let mut b = e;
    while b.op() == Op::Grad {
        b = b.operand(0);
        n += 1;
    }
    n
}

/// Terminals whose spatial gradient is kept symbolic.
fn varies_in_space(t: &Expr) -> bool {
    match t.op() {
        Op::Coefficient | Op::Argument => !t.element().is_some_and(Element::is_piecewise_constant),
        _ => false,
    }
}

/// `as_tensor(d[α], α + w)`: turns derivative axes carried as free indices
/// into trailing tensor axes.
fn axes_to_shape(d: &Expr, shape: &[usize], w: &[Index]) -> Result<Expr> {
    let alpha = fresh(shape.len());
    let body = indexed(d, &free_mi(&alpha))?;
    let mut all = alpha;
    all.extend_from_slice(w);
    as_tensor(&body, &all)
}

struct Engine<'a> {
    mode: Mode<'a>,
    memo: HashMap<Expr, Expr>,
}

impl<'a> Engine<'a> {
    fn new(mode: Mode<'a>) -> Self {
        Engine {
            mode,
            memo: HashMap::new(),
        }
    }

    fn w_free(&self) -> FreeIndexMap {
        match &self.mode {
            Mode::Spatial { k, dim } => FreeIndexMap::from([(*k, *dim)]),
            Mode::Variable { beta, shape, .. } => {
                beta.iter().copied().zip(shape.iter().copied()).collect()
            }
            Mode::Directional { .. } => FreeIndexMap::new(),
        }
    }

    fn zero_of(&self, e: &Expr) -> Result<Expr> {
        Ok(zero(e.shape(), &merge_free(e.free(), &self.w_free())?))
    }

    /// Rule for nodes treated as terminals: actual terminals and gradient
    /// chains over them. Returns None for operator nodes.
    fn terminal_rule(&self, e: &Expr) -> Result<Option<Expr>> {
        let Some(base) = grad_base(e) else {
            if e.op() == Op::Variable {
                if let Mode::Variable { label, beta, shape } = &self.mode {
                    if e.payload() == &Payload::Label(*label) {
                        return Ok(Some(delta(shape, beta)?));
                    }
                }
            }
            return Ok(None);
        };
        let depth = grad_depth(e);
        Ok(Some(match &self.mode {
            Mode::Spatial { k, .. } => {
                if base.op() == Op::SpatialCoordinate && depth == 0 {
                    let a = Index::fresh();
                    let d = e.shape()[0];
                    as_tensor(&indexed(&identity(d)?, &free_mi(&[a, *k]))?, &[a])?
                } else if varies_in_space(base) {
                    let g = ir::grad(e)?;
                    let alpha = fresh(e.rank());
                    let mut mi: Vec<IndexTerm> =
                        alpha.iter().map(|&i| IndexTerm::Free(i)).collect();
                    mi.push(IndexTerm::Free(*k));
                    as_tensor(&indexed(&g, &MultiIndex(mi))?, &alpha)?
                } else {
                    self.zero_of(e)?
                }
            }
            Mode::Variable { .. } => self.zero_of(e)?,
            Mode::Directional {
                targets,
                dirs,
                overrides,
            } => {
                if let Some(p) = targets.iter().position(|t| t == base) {
                    grad_n(&dirs[p], depth)?
                } else if let Some((_, h)) = overrides.iter().find(|(g, _)| g == base) {
                    grad_n(&contract_trailing(h, &dirs[0])?, depth)?
                } else {
                    self.zero_of(e)?
                }
            }
        }))
    }

    /// Derivative of `root`, computed bottom-up with an explicit stack.
    fn d(&mut self, root: &Expr) -> Result<Expr> {
        let mut stack = vec![(root.clone(), false)];
        while let Some((e, expanded)) = stack.pop() {
            if self.memo.contains_key(&e) {
                continue;
            }
            if let Some(r) = self.terminal_rule(&e)? {
                self.memo.insert(e, r);
                continue;
            }
            if e.is_terminal() {
                let z = self.zero_of(&e)?;
                self.memo.insert(e, z);
                continue;
            }
            if expanded {
                let r = self.rule(&e)?;
                self.memo.insert(e, r);
                continue;
            }
            stack.push((e.clone(), true));
            for o in differentiated_operands(&e) {
                if !self.memo.contains_key(o) {
                    stack.push((o.clone(), false));
                }
            }
        }
        Ok(self.memo[root].clone())
    }

    fn rule(&self, e: &Expr) -> Result<Expr> {
        let ops = e.operands();
        let a = || &ops[0];
        let da = || self.memo[&ops[0]].clone();
        let db = || self.memo[&ops[1]].clone();
        let chain = |f: Expr| product(&f, &da());
        Ok(match e.op() {
            Op::Sum => sum(&da(), &db())?,
            Op::Product => sum(&product(&da(), &ops[1])?, &product(&ops[0], &db())?)?,
            Op::Division => {
                let q = division(&ops[0], &ops[1])?;
                division(&sub(&da(), &product(&q, &db())?)?, &ops[1])?
            }
            Op::Power => {
                let (base, exp) = (&ops[0], &ops[1]);
                let dexp = db();
                if dexp.is_zero() {
                    let lowered = match exp.literal_value() {
                        Some(c) if c - 1.0 == 0.0 => int(1),
                        Some(c) if c - 1.0 == 1.0 => base.clone(),
                        Some(c) => power(base, &literal(c - 1.0)?)?,
                        None => power(base, &sub(exp, &int(1))?)?,
                    };
                    product(exp, &product(&lowered, &da())?)?
                } else {
                    let t = sum(
                        &product(&dexp, &math_fn(Op::Ln, base)?)?,
                        &division(&product(exp, &da())?, base)?,
                    )?;
                    product(e, &t)?
                }
            }
            Op::Sqrt => division(&da(), &product(&int(2), e)?)?,
            Op::Exp => chain(e.clone())?,
            Op::Ln => division(&da(), a())?,
            Op::Abs => chain(math_fn(Op::Sign, a())?)?,
            Op::Sign => self.zero_of(e)?,
            Op::Cos => chain(neg(&math_fn(Op::Sin, a())?)?)?,
            Op::Sin => chain(math_fn(Op::Cos, a())?)?,
            Op::Tan => chain(sum(&int(1), &power(e, &int(2))?)?)?,
            Op::Acos | Op::Asin => {
                let s = math_fn(Op::Sqrt, &sub(&int(1), &power(a(), &int(2))?)?)?;
                let q = division(&da(), &s)?;
                if e.op() == Op::Acos {
                    neg(&q)?
                } else {
                    q
                }
            }
            Op::Atan => division(&da(), &sum(&int(1), &power(a(), &int(2))?)?)?,
            Op::Erf => {
                let c = real(2.0 / std::f64::consts::PI.sqrt())?;
                chain(product(
                    &c,
                    &math_fn(Op::Exp, &neg(&power(a(), &int(2))?)?)?,
                )?)?
            }
            Op::BesselJ | Op::BesselY | Op::BesselI | Op::BesselK => {
                let (nu, x) = (&ops[0], &ops[1]);
                let Some(n) = nu.literal_value() else {
                    return Err(Error::UnsupportedDerivative(
                        "Bessel function of a non-literal order".into(),
                    ));
                };
                let op = e.op();
                let at = |m: f64| bessel(op, &literal(m)?, x);
                let f = if n == 0.0 {
                    match op {
                        Op::BesselJ | Op::BesselY | Op::BesselK => neg(&at(1.0)?)?,
                        _ => at(1.0)?,
                    }
                } else {
                    let (lo, hi) = (at(n - 1.0)?, at(n + 1.0)?);
                    let half = real(0.5)?;
                    match op {
                        Op::BesselJ | Op::BesselY => product(&half, &sub(&lo, &hi)?)?,
                        Op::BesselI => product(&half, &sum(&lo, &hi)?)?,
                        _ => neg(&product(&half, &sum(&lo, &hi)?)?)?,
                    }
                };
                product(&f, &db())?
            }
            Op::Indexed => {
                let mi = e.multi_index().expect("indexed payload");
                if let Mode::Spatial { k, .. } = self.mode {
                    if grad_base(a()).is_some_and(varies_in_space) {
                        let mut terms = mi.0.clone();
                        terms.push(IndexTerm::Free(k));
                        return indexed(&ir::grad(a())?, &MultiIndex(terms));
                    }
                }
                indexed(&da(), mi)?
            }
            Op::ComponentTensor => {
                let idx = e
                    .multi_index()
                    .and_then(MultiIndex::as_all_free)
                    .expect("component tensor payload");
                as_tensor(&da(), &idx)?
            }
            Op::IndexSum => match e.payload() {
                Payload::Index(i) => index_sum(&da(), *i)?,
                _ => unreachable!("index sum payload"),
            },
            Op::ListTensor => {
                let parts: Vec<Expr> = ops.iter().map(|o| self.memo[o].clone()).collect();
                list_tensor(&parts)?
            }
            Op::Dot => sum(&dot(&da(), &ops[1])?, &dot(&ops[0], &db())?)?,
            Op::Inner => sum(&inner(&da(), &ops[1])?, &inner(&ops[0], &db())?)?,
            Op::Outer => sum(&outer(&da(), &ops[1])?, &outer(&ops[0], &db())?)?,
            Op::Cross => sum(&cross(&da(), &ops[1])?, &cross(&ops[0], &db())?)?,
            Op::Transposed
            | Op::Sym
            | Op::Skew
            | Op::Dev
            | Op::Trace
            | Op::Diag
            | Op::DiagVector => unary(e.op(), &da())?,
            Op::Det => inner(&unary(Op::Cofac, a())?, &da())?,
            Op::Inverse => neg(&dot(&dot(e, &da())?, e)?)?,
            Op::Cofac => {
                if a().shape() == [2, 2] {
                    unary(Op::Cofac, &da())?
                } else {
                    // cofac(A) = det(A) inv(A)^T
                    let inv = unary(Op::Inverse, a())?;
                    let dinv = neg(&dot(&dot(&inv, &da())?, &inv)?)?;
                    let ddet = inner(e, &da())?;
                    sum(
                        &product(&ddet, &unary(Op::Transposed, &inv)?)?,
                        &product(&unary(Op::Det, a())?, &unary(Op::Transposed, &dinv)?)?,
                    )?
                }
            }
            Op::Conditional => conditional(&ops[0], &self.memo[&ops[1]], &self.memo[&ops[2]])?,
            Op::PositiveRestricted => restricted(&da(), Side::Plus)?,
            Op::NegativeRestricted => restricted(&da(), Side::Minus)?,
            Op::Variable => da(),
            op => {
                return Err(Error::UnsupportedDerivative(format!(
                    "no derivative rule for {}",
                    op.name()
                )));
            }
        })
    }
}

/// Operands whose derivatives a rule needs.
fn differentiated_operands(e: &Expr) -> &[Expr] {
    let ops = e.operands();
    match e.op() {
        Op::Conditional => &ops[1..],
        Op::BesselJ | Op::BesselY | Op::BesselI | Op::BesselK => &ops[1..],
        op if e.is_boolean() || op.group() == ir::Group::Boolean => &[],
        _ => ops,
    }
}

/// The identity on a variable of `shape`, with the variable's axes carried
/// by the free indices `beta`.
fn delta(shape: &[usize], beta: &[Index]) -> Result<Expr> {
    if shape.is_empty() {
        return Ok(int(1));
    }
    let alpha = fresh(shape.len());
    let mut p = int(1);
    for ((&a, &b), &n) in alpha.iter().zip(beta).zip(shape) {
        p = product(&p, &indexed(&identity(n)?, &free_mi(&[a, b]))?)?;
    }
    as_tensor(&p, &alpha)
}

/// `h[α, β] v[β]` summed over β, where `v` fills the trailing axes of `h`.
fn contract_trailing(h: &Expr, v: &Expr) -> Result<Expr> {
    let lead = h.rank() - v.rank();
    let alpha = fresh(lead);
    let beta = fresh(v.rank());
    let mut mi = alpha.clone();
    mi.extend_from_slice(&beta);
    let mut t = product(&indexed(h, &free_mi(&mi))?, &indexed(v, &free_mi(&beta))?)?;
    for &b in &beta {
        t = index_sum(&t, b)?;
    }
    as_tensor(&t, &alpha)
}

fn grad_n(e: &Expr, n: usize) -> Result<Expr> {
    let mut g = e.clone();
    for _ in 0..n {
        g = spatial_grad(&g, None)?;
    }
    Ok(g)
}

/// Gradient of a derivative-free expression with `grad` left only on
/// spatially varying terminals. `dim` is needed for expressions without a
/// domain of their own.
pub fn spatial_grad(e: &Expr, dim: Option<usize>) -> Result<Expr> {
    let Some(dim) = e.gdim().or(dim) else {
        return Err(Error::DomainMismatch(
            "grad of an expression that is not defined on a domain".into(),
        ));
    };
    if grad_base(e).is_some_and(varies_in_space) {
        return ir::grad(e);
    }
    let k = Index::fresh();
    let mut engine = Engine::new(Mode::Spatial { k, dim });
    let d = engine.d(e)?;
    axes_to_shape(&d, e.shape(), &[k])
}

/// `E_XD`: the spatial gradient of `e`.
pub fn diff_spatial(e: &Expr) -> Result<Expr> {
    spatial_grad(e, None)
}

/// `E_VD`: the derivative of `e` with respect to the variable `v`.
pub fn diff_variable(e: &Expr, v: &Expr) -> Result<Expr> {
    let Payload::Label(label) = v.payload() else {
        return Err(Error::NotAVariable(format!(
            "cannot differentiate with respect to {}",
            v.op().name()
        )));
    };
    let beta = fresh(v.rank());
    let mut engine = Engine::new(Mode::Variable {
        label: *label,
        beta: beta.clone(),
        shape: v.shape().to_vec(),
    });
    let d = engine.d(e)?;
    axes_to_shape(&d, e.shape(), &beta)
}

/// `E_DD`: the Gateaux derivative of `e` with respect to `targets` in the
/// matching `dirs`, with user-supplied partial derivatives `(g, dg/du)`.
pub fn diff_directional(
    e: &Expr,
    targets: &[Expr],
    dirs: &[Expr],
    overrides: &[(Expr, Expr)],
) -> Result<Expr> {
    for (t, v) in targets.iter().zip(dirs) {
        if t.shape() != v.shape() {
            return Err(Error::ShapeMismatch(format!(
                "direction of shape {} for a target of shape {}",
                shape_str(v.shape()),
                shape_str(t.shape())
            )));
        }
    }
    let mut engine = Engine::new(Mode::Directional {
        targets,
        dirs,
        overrides: overrides.to_vec(),
    });
    engine.d(e)
}

/// Grad-based lowering of the remaining spatial derivative operators.
fn lower_spatial(op: Op, node: &Expr, a: &Expr) -> Result<Expr> {
    let g = spatial_grad(a, node.gdim())?;
    let r = a.rank();
    match op {
        Op::Grad => Ok(g),
        Op::Dx => {
            let Payload::Term(term) = node.payload() else {
                unreachable!("Dx payload")
            };
            let alpha = fresh(r);
            let mut mi: Vec<IndexTerm> = alpha.iter().map(|&i| IndexTerm::Free(i)).collect();
            mi.push(*term);
            as_tensor(&indexed(&g, &MultiIndex(mi))?, &alpha)
        }
        Op::NablaGrad => {
            let alpha = fresh(r);
            let k = Index::fresh();
            let mut mi = alpha.clone();
            mi.push(k);
            let mut axes = vec![k];
            axes.extend_from_slice(&alpha);
            as_tensor(&indexed(&g, &free_mi(&mi))?, &axes)
        }
        Op::Div => {
            let alpha = fresh(r - 1);
            let i = Index::fresh();
            let mut mi = alpha.clone();
            mi.extend([i, i]);
            as_tensor(&index_sum(&indexed(&g, &free_mi(&mi))?, i)?, &alpha)
        }
        Op::NablaDiv => {
            let beta = fresh(r - 1);
            let i = Index::fresh();
            let mut mi = vec![i];
            mi.extend_from_slice(&beta);
            mi.push(i);
            as_tensor(&index_sum(&indexed(&g, &free_mi(&mi))?, i)?, &beta)
        }
        Op::Curl | Op::Rot => {
            let c = |i: usize, j: usize| component(&g, &[i, j]);
            if a.shape() == [2] {
                return sub(&c(1, 0)?, &c(0, 1)?);
            }
            let parts = [
                sub(&c(2, 1)?, &c(1, 2)?)?,
                sub(&c(0, 2)?, &c(2, 0)?)?,
                sub(&c(1, 0)?, &c(0, 1)?)?,
            ];
            list_tensor(&parts)
        }
        _ => unreachable!("not a spatial derivative"),
    }
}

fn apply_one(node: &Expr, ops: &[Expr]) -> Result<Expr> {
    match node.op() {
        op @ (Op::Grad | Op::Dx | Op::NablaGrad | Op::Div | Op::NablaDiv | Op::Curl | Op::Rot) => {
            lower_spatial(op, node, &ops[0])
        }
        Op::VariableDerivative => diff_variable(&ops[0], &ops[1]),
        Op::CoefficientDerivative => {
            let Payload::Count(n) = node.payload() else {
                unreachable!("coefficient derivative payload")
            };
            let n = *n;
            let targets = &ops[1..1 + n];
            let dirs = &ops[1 + n..1 + 2 * n];
            let overrides: Vec<(Expr, Expr)> = ops[1 + 2 * n..]
                .chunks(2)
                .map(|p| (p[0].clone(), p[1].clone()))
                .collect();
            diff_directional(&ops[0], targets, dirs, &overrides)
        }
        Op::ExteriorDerivative => Err(Error::UnsupportedDerivative(
            "exterior_derivative has no differentiation rules".into(),
        )),
        op => unreachable!("{} is not a derivative", op.name()),
    }
}

/// Eliminates every derivative node, innermost first. A derivative-free
/// input is returned as is.
pub fn apply_derivatives(root: &Expr) -> Result<Expr> {
    let dag = build_list_dag(root);
    let mut out: Vec<Expr> = Vec::with_capacity(dag.len());
    for (v, edges) in dag.vertices.iter().zip(&dag.edges) {
        let ops: Vec<Expr> = edges.iter().map(|&j| out[j].clone()).collect();
        let r = if v.op().is_derivative() || v.op() == Op::ExteriorDerivative {
            apply_one(v, &ops)?
        } else if ops.iter().zip(v.operands()).all(|(a, b)| a == b) {
            v.clone()
        } else {
            ir::rebuild(v, &ops)?
        };
        out.push(r);
    }
    Ok(out.pop().expect("root"))
}

/// Places `v_hat` in the selected components of a direction for `u` and
/// zeros elsewhere. Each selection entry is a component prefix of `u`'s
/// shape; with several entries `v_hat` stacks them along a leading axis.
pub fn pad_direction(u: &Expr, selection: &[Vec<usize>], v_hat: &Expr) -> Result<Expr> {
    let shape = u.shape().to_vec();
    let Some(first) = selection.first() else {
        return Err(Error::ComponentOutOfRange(
            "empty component selection".into(),
        ));
    };
    let depth = first.len();
    for s in selection {
        if s.len() != depth || s.len() > shape.len() || s.iter().zip(&shape).any(|(c, n)| c >= n) {
            return Err(Error::ComponentOutOfRange(format!(
                "component {s:?} of a function of shape {}",
                shape_str(&shape)
            )));
        }
    }
    let sub_shape = shape[depth..].to_vec();
    let mut expected = sub_shape.clone();
    if selection.len() > 1 {
        expected.insert(0, selection.len());
    }
    if v_hat.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "direction of shape {} for {} selected components of shape {}",
            shape_str(v_hat.shape()),
            selection.len(),
            shape_str(&sub_shape)
        )));
    }
    let full: Vec<Vec<usize>> = crate::elements::components(&shape[..depth]);
    if selection == full.as_slice() && depth == 1 || depth == 0 {
        return Ok(v_hat.clone());
    }
    let multi = selection.len() > 1;
    from_components(
        &shape,
        &mut |c| match selection.iter().position(|s| c.starts_with(s)) {
            Some(j) => {
                let mut idx = if multi { vec![j] } else { vec![] };
                idx.extend_from_slice(&c[depth..]);
                component(v_hat, &idx)
            }
            None => Ok(zero(&[], v_hat.free())),
        },
    )
}

/// Flat selection of the components a sub-element occupies in a mixed
/// element's value vector.
pub fn sub_element_selection(element: &Element, sub: usize) -> Result<Vec<Vec<usize>>> {
    let slots = crate::elements::flatten_component_map(element);
    let sel: Vec<Vec<usize>> = slots
        .iter()
        .filter(|s| s.sub == sub)
        .map(|s| vec![s.flat])
        .collect();
    if sel.is_empty() {
        return Err(Error::ComponentOutOfRange(format!("no sub-element {sub}")));
    }
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Cell;
    use crate::ir::{
        argument, coefficient, coefficient_derivative, constant, grad, spatial_coordinate, variable,
    };

    fn p2() -> Element {
        Element::finite("Lagrange", Cell::Triangle, 2).unwrap()
    }

    #[test]
    fn product_rule_textbook() {
        let f = coefficient(&p2(), None);
        let g = coefficient(&p2(), None);
        let v = variable(&f, None).unwrap();
        let fg = product(&v, &g).unwrap();
        let d = apply_derivatives(&ir::variable_derivative(&fg, &v).unwrap()).unwrap();
        assert_eq!(d, g);
    }

    #[test]
    fn derivative_free_input_is_reused() {
        let f = coefficient(&p2(), None);
        let e = product(&f, &math_fn(Op::Sin, &f).unwrap()).unwrap();
        assert_eq!(apply_derivatives(&e).unwrap(), e);
    }

    #[test]
    fn spatial_terminals() {
        let x = spatial_coordinate(Cell::Triangle);
        let gx = diff_spatial(&x).unwrap();
        assert_eq!(gx.shape(), &[2, 2]);
        let c = constant(Cell::Triangle, None);
        let gc = diff_spatial(&c).unwrap();
        assert!(gc.is_zero());
        assert_eq!(gc.shape(), &[2]);
        let f = coefficient(&p2(), None);
        assert_eq!(diff_spatial(&f).unwrap(), grad(&f).unwrap());
    }

    #[test]
    fn grad_lands_on_terminals() {
        let u = coefficient(&p2(), None);
        let v = argument(&p2(), 0);
        let g = apply_derivatives(&grad(&product(&u, &v).unwrap()).unwrap()).unwrap();
        for n in build_list_dag(&g).vertices {
            if n.op() == Op::Grad {
                assert!(n.operand(0).is_terminal());
            }
        }
    }

    #[test]
    fn directional_square() {
        let f = coefficient(&p2(), None);
        let v = argument(&p2(), 0);
        let e = product(&f, &f).unwrap();
        let d = apply_derivatives(
            &coefficient_derivative(&e, &[f.clone()], &[v.clone()], &[]).unwrap(),
        )
        .unwrap();
        let expected = sum(&product(&v, &f).unwrap(), &product(&f, &v).unwrap()).unwrap();
        assert_eq!(d, expected);
        let gv = apply_derivatives(
            &coefficient_derivative(&grad(&f).unwrap(), &[f], &[v.clone()], &[]).unwrap(),
        );
        assert_eq!(gv.unwrap(), grad(&v).unwrap());
    }

    #[test]
    fn unrelated_expression_differentiates_to_zero() {
        let f = coefficient(&p2(), None);
        let g = coefficient(&p2(), None);
        let v = variable(&f, None).unwrap();
        assert!(apply_derivatives(&ir::variable_derivative(&f, &v).unwrap())
            .unwrap()
            .is_zero());
        let d = diff_directional(
            &math_fn(Op::Sin, &g).unwrap(),
            &[f.clone()],
            &[argument(&p2(), 0)],
            &[],
        )
        .unwrap();
        assert!(d.is_zero());
    }

    #[test]
    fn override_pairs() {
        let u = coefficient(&p2(), None);
        let g = coefficient(&p2(), None);
        let h = coefficient(&p2(), None);
        let v = argument(&p2(), 0);
        let d = diff_directional(&g, &[u], &[v.clone()], &[(g.clone(), h.clone())]).unwrap();
        assert_eq!(d, product(&h, &v).unwrap());
    }

    #[test]
    fn padding() {
        let e3 = Element::vector("Lagrange", Cell::Tetrahedron, 1, None).unwrap();
        let u = coefficient(&e3, None);
        let s = Element::finite("Lagrange", Cell::Tetrahedron, 1).unwrap();
        let (a, b) = (argument(&s, 0), argument(&s, 1));
        let vh = list_tensor(&[a.clone(), b.clone()]).unwrap();
        let v = pad_direction(&u, &[vec![0], vec![2]], &vh).unwrap();
        assert_eq!(v.op(), Op::ListTensor);
        assert_eq!(v.operand(0), &a);
        assert!(v.operand(1).is_zero());
        assert_eq!(v.operand(2), &b);
        let w = argument(&e3, 0);
        assert_eq!(
            pad_direction(&u, &[vec![0], vec![1], vec![2]], &w).unwrap(),
            w
        );
        assert!(matches!(
            pad_direction(&u, &[vec![3]], &a),
            Err(Error::ComponentOutOfRange(_))
        ));
    }

    #[test]
    fn exterior_derivative_is_unsupported() {
        let f = coefficient(&p2(), None);
        let e = ir::exterior_derivative(&f).unwrap();
        assert!(matches!(
            apply_derivatives(&e),
            Err(Error::UnsupportedDerivative(_))
        ));
    }
}
