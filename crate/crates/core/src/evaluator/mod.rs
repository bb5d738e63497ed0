//! Numeric evaluation of expressions at points and quadrature integration
//! of functionals over small meshes. Used as an oracle in tests and by the
//! `eval` command.
//!
//! A value stores its free-index axes (sorted by index) before its shape
//! axes, row-major.

mod mesh;
mod quadrature;

use std::collections::HashMap;
use std::sync::Arc;

pub use mesh::{BoundaryFacet, CellGeometry, MiniMesh};
pub use quadrature::{
    interval_rule, rule_for, triangle_rule, QuadratureRule, INTERVAL_DEGREES, TRIANGLE_DEGREES,
};

use crate::algorithms::{evaluate_list, evaluate_recursive, DispatchTable};
use crate::differentiation::{apply_derivatives, spatial_grad};
use crate::elements::components;
use crate::error::{Error, Result};
use crate::forms::{DomainType, Form};
use crate::ir::{
    self, apply_bessel, apply_scalar_fn, shape_str, Expr, Index, IndexTerm, Op, Payload,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    pub free: Vec<(Index, usize)>,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Value {
    pub fn scalar(v: f64) -> Value {
        Value {
            free: vec![],
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn tensor(shape: &[usize], data: Vec<f64>) -> Value {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Value {
            free: vec![],
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        (self.data.len() == 1 && self.shape.is_empty() && self.free.is_empty())
            .then(|| self.data[0])
    }

    fn block_len(&self) -> usize {
        self.shape.iter().product()
    }

    fn block(&self, k: usize) -> &[f64] {
        let n = self.block_len();
        &self.data[k * n..(k + 1) * n]
    }

    /// Block number for the values of the free indices in `assign`.
    fn block_of(&self, out_free: &[(Index, usize)], assign: &[usize]) -> usize {
        let mut k = 0;
        for (i, d) in &self.free {
            let pos = out_free
                .iter()
                .position(|(j, _)| j == i)
                .expect("operand free index in result");
            k = k * d + assign[pos];
        }
        k
    }
}

type Callable = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// What a coefficient, argument or constant evaluates to.
#[derive(Clone)]
pub enum Binding {
    /// A function of the spatial point returning the flattened value. The
    /// optional gradient returns the value shape followed by one axis of
    /// spatial dimension.
    Callable {
        value: Callable,
        grad: Option<Callable>,
    },
    /// An expression, typically in the spatial coordinate.
    Expr(Expr),
}

impl Binding {
    pub fn callable(f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Binding {
        Binding::Callable {
            value: Arc::new(f),
            grad: None,
        }
    }

    pub fn with_grad(
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Binding {
        Binding::Callable {
            value: Arc::new(f),
            grad: Some(Arc::new(g)),
        }
    }

    pub fn constant(v: Vec<f64>) -> Binding {
        Binding::callable(move |_| v.clone())
    }

    /// `self + s * other`; expressions stay symbolic.
    pub fn perturbed(&self, other: &Binding, s: f64, env: &EvalEnv) -> Result<Binding> {
        if let (Binding::Expr(a), Binding::Expr(b)) = (self, other) {
            return Ok(Binding::Expr(ir::sum(a, &ir::product(&ir::real(s)?, b)?)?));
        }
        let (fa, fb) = (self.as_callable(env), other.as_callable(env));
        Ok(Binding::callable(move |x| {
            let (a, b) = (fa(x), fb(x));
            a.iter().zip(&b).map(|(p, q)| p + s * q).collect()
        }))
    }

    fn as_callable(&self, env: &EvalEnv) -> Callable {
        match self {
            Binding::Callable { value, .. } => value.clone(),
            Binding::Expr(e) => {
                let (e, env) = (e.clone(), env.clone());
                Arc::new(move |x| {
                    eval_expr(&e, &env, x)
                        .map(|v| v.data)
                        .unwrap_or_else(|_| vec![f64::NAN])
                })
            }
        }
    }
}

impl std::fmt::Debug for Binding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Binding::Callable { grad, .. } => write!(f, "Callable(grad: {})", grad.is_some()),
            Binding::Expr(e) => write!(f, "Expr({e})"),
        }
    }
}

/// Values for the terminals of an expression.
#[derive(Debug, Clone, Default)]
pub struct EvalEnv {
    bindings: HashMap<Expr, Binding>,
    /// Finite-difference step for gradients of callables. Defaults to the
    /// `FORMLANG_FD_STEP` variable, else `1e-6` times the cell diameter.
    pub fd_step: Option<f64>,
}

impl EvalEnv {
    pub fn new() -> EvalEnv {
        EvalEnv::default()
    }

    pub fn bind(&mut self, terminal: &Expr, b: Binding) -> &mut Self {
        self.bindings.insert(terminal.clone(), b);
        self
    }

    pub fn bind_expr(&mut self, terminal: &Expr, e: &Expr) -> &mut Self {
        self.bind(terminal, Binding::Expr(e.clone()))
    }

    pub fn bind_value(&mut self, terminal: &Expr, v: Vec<f64>) -> &mut Self {
        self.bind(terminal, Binding::constant(v))
    }

    pub fn binding(&self, terminal: &Expr) -> Option<&Binding> {
        self.bindings.get(terminal)
    }
}

/// Where an expression is evaluated: the point and, inside an integral,
/// the cell and facet.
#[derive(Debug, Clone, Default)]
pub struct PointContext {
    pub x: Vec<f64>,
    pub cell: Option<CellGeometry>,
    pub facet: Option<(usize, Vec<f64>)>,
}

impl PointContext {
    pub fn at(x: &[f64]) -> PointContext {
        PointContext {
            x: x.to_vec(),
            ..Default::default()
        }
    }
}

fn fd_step(env: &EvalEnv, ctx: &PointContext) -> f64 {
    env.fd_step
        .or_else(|| {
            std::env::var("FORMLANG_FD_STEP")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or_else(|| 1e-6 * ctx.cell.as_ref().map_or(1.0, |c| c.diameter))
}

fn for_each_assign(
    free: &[(Index, usize)],
    mut f: impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    let mut a = vec![0; free.len()];
    if free.iter().any(|(_, d)| *d == 0) {
        return Ok(());
    }
    loop {
        f(&a)?;
        let mut k = free.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            a[k] += 1;
            if a[k] < free[k].1 {
                break;
            }
            a[k] = 0;
        }
    }
}

fn free_of(e: &Expr) -> Vec<(Index, usize)> {
    e.free().iter().map(|(i, d)| (*i, *d)).collect()
}

/// Applies `f` to the operand blocks for every assignment of the result's
/// free indices.
fn blockwise(
    e: &Expr,
    args: &[&Value],
    mut f: impl FnMut(&[&[f64]]) -> Result<Vec<f64>>,
) -> Result<Value> {
    let free = free_of(e);
    let mut data = Vec::new();
    for_each_assign(&free, |a| {
        let blocks: Vec<&[f64]> = args.iter().map(|v| v.block(v.block_of(&free, a))).collect();
        data.extend(f(&blocks)?);
        Ok(())
    })?;
    Ok(Value {
        free,
        shape: e.shape().to_vec(),
        data,
    })
}

fn flat(shape: &[usize], c: &[usize]) -> usize {
    c.iter().zip(shape).fold(0, |acc, (i, n)| acc * n + i)
}

fn matrix_det(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut m = a.to_vec();
            let mut det = 1.0;
            for c in 0..n {
                let piv = (c..n)
                    .max_by(|&x, &y| m[x * n + c].abs().total_cmp(&m[y * n + c].abs()))
                    .unwrap_or(c);
                if m[piv * n + c] == 0.0 {
                    return 0.0;
                }
                if piv != c {
                    for k in 0..n {
                        m.swap(piv * n + k, c * n + k);
                    }
                    det = -det;
                }
                det *= m[c * n + c];
                for r in c + 1..n {
                    let f = m[r * n + c] / m[c * n + c];
                    for k in c..n {
                        m[r * n + k] -= f * m[c * n + k];
                    }
                }
            }
            det
        }
    }
}

/// Cofactor matrix from minors; defined for singular matrices too.
fn matrix_cofac(a: &[f64], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<f64> = (0..n)
                .filter(|&r| r != i)
                .flat_map(|r| (0..n).filter(move |&c| c != j).map(move |c| a[r * n + c]))
                .collect();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            out[i * n + j] = sign * matrix_det(&minor, n - 1);
        }
    }
    out
}

fn matrix_inverse(a: &[f64], n: usize) -> Vec<f64> {
    let det = matrix_det(a, n);
    let cof = matrix_cofac(a, n);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = cof[j * n + i] / det;
        }
    }
    out
}

fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Value of a bound function, or of its `n`-th gradient.
fn function_value(
    e: &Expr,
    base: &Expr,
    n: usize,
    env: &EvalEnv,
    ctx: &PointContext,
) -> Result<Value> {
    let unbound = || Error::UnboundTerminal(format!("{} {}", base.op().name(), ir_name(base)));
    let binding = env.binding(base).ok_or_else(unbound)?;
    let data = match binding {
        Binding::Expr(g) => {
            if g.shape() != base.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "binding of shape {} for a function of shape {}",
                    shape_str(g.shape()),
                    shape_str(base.shape())
                )));
            }
            let mut h = g.clone();
            for _ in 0..n {
                h = spatial_grad(&h, base.gdim())?;
            }
            eval_at(&h, env, ctx)?.data
        }
        Binding::Callable { value, grad } => {
            let h = fd_step(env, ctx);
            let x = ctx.x.clone();
            callable_derivative(value, grad.as_ref(), n, &x, h)
        }
    };
    let size: usize = e.shape().iter().product();
    if data.len() != size {
        return Err(Error::ShapeMismatch(format!(
            "binding returned {} values for shape {}",
            data.len(),
            shape_str(e.shape())
        )));
    }
    Ok(Value::tensor(e.shape(), data))
}

/// `n`-th derivative of a callable by nested central differences, with the
/// exact gradient used for the innermost level when supplied.
fn callable_derivative(
    f: &Callable,
    grad: Option<&Callable>,
    n: usize,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    if n == 0 {
        return f(x);
    }
    if n == 1 {
        if let Some(g) = grad {
            return g(x);
        }
    }
    let d = x.len();
    let mut parts = Vec::with_capacity(d);
    for k in 0..d {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[k] += h;
        xm[k] -= h;
        let inner_grad = if n == 1 { None } else { grad };
        let (p, m) = (
            callable_derivative(f, inner_grad, n - 1, &xp, h),
            callable_derivative(f, inner_grad, n - 1, &xm, h),
        );
        parts.push(
            p.iter()
                .zip(&m)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let len = parts[0].len();
    let mut out = Vec::with_capacity(len * d);
    for c in 0..len {
        for p in &parts {
            out.push(p[c]);
        }
    }
    out
}

fn ir_name(e: &Expr) -> String {
    e.count().map_or_else(String::new, |c| format!("#{c}"))
}

fn geometry<'c>(ctx: &'c PointContext, what: &str) -> Result<&'c CellGeometry> {
    ctx.cell
        .as_ref()
        .ok_or_else(|| Error::UnboundTerminal(format!("{what} outside an integral")))
}

fn eval_terminal(e: &Expr, env: &EvalEnv, ctx: &PointContext) -> Result<Value> {
    let v = match e.op() {
        Op::Zero => Value {
            free: free_of(e),
            shape: e.shape().to_vec(),
            data: vec![
                0.0;
                e.free().values().product::<usize>() * e.shape().iter().product::<usize>()
            ],
        },
        Op::IntValue | Op::RealValue => Value::scalar(e.literal_value().expect("literal")),
        Op::Identity => {
            let n = e.shape()[0];
            Value::tensor(
                e.shape(),
                (0..n * n).map(|k| bool_value(k / n == k % n)).collect(),
            )
        }
        Op::PermutationSymbol => {
            let n = e.shape().len();
            let data = components(e.shape())
                .iter()
                .map(|c| {
                    let mut s = 1.0;
                    for a in 0..n {
                        for b in a + 1..n {
                            if c[a] == c[b] {
                                return 0.0;
                            }
                            if c[a] > c[b] {
                                s = -s;
                            }
                        }
                    }
                    s
                })
                .collect();
            Value::tensor(e.shape(), data)
        }
        Op::UnitVector => match e.payload() {
            Payload::UnitVector { dim, axis } => {
                Value::tensor(&[*dim], (0..*dim).map(|k| bool_value(k == *axis)).collect())
            }
            _ => unreachable!("unit vector payload"),
        },
        Op::SpatialCoordinate => {
            if ctx.x.len() != e.shape()[0] {
                return Err(Error::DomainMismatch(format!(
                    "point of dimension {} for a {}D coordinate",
                    ctx.x.len(),
                    e.shape()[0]
                )));
            }
            Value::tensor(e.shape(), ctx.x.clone())
        }
        Op::FacetNormal => {
            let (_, n) = ctx.facet.as_ref().ok_or_else(|| {
                Error::UnboundTerminal("facet normal outside a facet integral".into())
            })?;
            Value::tensor(e.shape(), n.clone())
        }
        Op::CellVolume => Value::scalar(geometry(ctx, "cell volume")?.volume),
        Op::Circumradius => Value::scalar(geometry(ctx, "circumradius")?.circumradius),
        Op::CellSurfaceArea => Value::scalar(geometry(ctx, "cell surface area")?.surface_area()),
        Op::FacetArea => {
            let g = geometry(ctx, "facet area")?;
            let (f, _) = ctx.facet.as_ref().ok_or_else(|| {
                Error::UnboundTerminal("facet area outside a facet integral".into())
            })?;
            Value::scalar(g.facet_areas[*f])
        }
        Op::Constant | Op::Coefficient | Op::Argument => function_value(e, e, 0, env, ctx)?,
        op => return Err(Error::UnsupportedNode(op.name().to_string())),
    };
    Ok(v)
}

fn scalar_map(e: &Expr, a: &Value, f: impl Fn(f64) -> f64) -> Result<Value> {
    blockwise(e, &[a], |b| Ok(b[0].iter().map(|&x| f(x)).collect()))
}

fn eval_operator(e: &Expr, args: &[Value], env: &EvalEnv, ctx: &PointContext) -> Result<Value> {
    let op = e.op();
    let refs: Vec<&Value> = args.iter().collect();
    let bin = |f: &dyn Fn(f64, f64) -> f64| blockwise(e, &refs, |b| Ok(vec![f(b[0][0], b[1][0])]));
    match op {
        Op::Sum => blockwise(e, &refs, |b| {
            Ok(b[0].iter().zip(b[1]).map(|(x, y)| x + y).collect())
        }),
        Op::Product => blockwise(e, &refs, |b| {
            let (s, t) = if b[0].len() == 1 {
                (b[0][0], b[1])
            } else {
                (b[1][0], b[0])
            };
            Ok(t.iter().map(|x| s * x).collect())
        }),
        Op::Division => blockwise(e, &refs, |b| Ok(b[0].iter().map(|x| x / b[1][0]).collect())),
        Op::Power => bin(&|x, y| {
            if y.fract() == 0.0 && y.abs() < i32::MAX as f64 {
                x.powi(y as i32)
            } else {
                x.powf(y)
            }
        }),
        Op::Sqrt
        | Op::Exp
        | Op::Ln
        | Op::Abs
        | Op::Sign
        | Op::Cos
        | Op::Sin
        | Op::Tan
        | Op::Acos
        | Op::Asin
        | Op::Atan
        | Op::Erf => scalar_map(e, &args[0], |x| apply_scalar_fn(op, x).unwrap_or(f64::NAN)),
        Op::BesselJ | Op::BesselY => bin(&|nu, x| apply_bessel(op, nu, x).unwrap_or(f64::NAN)),
        Op::BesselI | Op::BesselK => Err(Error::UnsupportedNode(op.name().to_string())),
        Op::Indexed => {
            let a = &args[0];
            let mi = e.multi_index().expect("indexed payload");
            let free = free_of(e);
            let mut data = Vec::new();
            for_each_assign(&free, |asg| {
                let comp: Vec<usize> =
                    mi.0.iter()
                        .map(|t| match t {
                            IndexTerm::Fixed(v) => *v,
                            IndexTerm::Free(i) => {
                                asg[free.iter().position(|(j, _)| j == i).expect("index")]
                            }
                        })
                        .collect();
                data.push(a.block(a.block_of(&free, asg))[flat(&a.shape, &comp)]);
                Ok(())
            })?;
            Ok(Value {
                free,
                shape: vec![],
                data,
            })
        }
        Op::ComponentTensor => {
            let a = &args[0];
            let idx = e
                .multi_index()
                .and_then(|m| m.as_all_free())
                .expect("component tensor payload");
            let free = free_of(e);
            let mut all = free.clone();
            all.extend(idx.iter().zip(e.shape()).map(|(i, d)| (*i, *d)));
            let mut data = Vec::new();
            for_each_assign(&free, |asg| {
                for c in components(e.shape()) {
                    let mut full = asg.to_vec();
                    full.extend_from_slice(&c);
                    data.push(a.block(a.block_of(&all, &full))[0]);
                }
                Ok(())
            })?;
            Ok(Value {
                free,
                shape: e.shape().to_vec(),
                data,
            })
        }
        Op::IndexSum => {
            let a = &args[0];
            let Payload::Index(i) = e.payload() else {
                unreachable!("index sum payload")
            };
            let dim = a.free.iter().find(|(j, _)| j == i).expect("summed index").1;
            let free = free_of(e);
            let mut all = free.clone();
            all.push((*i, dim));
            let mut data = Vec::new();
            for_each_assign(&free, |asg| {
                let mut acc = vec![0.0; a.block_len()];
                let mut full = asg.to_vec();
                full.push(0);
                for k in 0..dim {
                    full[asg.len()] = k;
                    for (s, x) in acc.iter_mut().zip(a.block(a.block_of(&all, &full))) {
                        *s += x;
                    }
                }
                data.extend(acc);
                Ok(())
            })?;
            Ok(Value {
                free,
                shape: e.shape().to_vec(),
                data,
            })
        }
        Op::ListTensor => blockwise(e, &refs, |b| Ok(b.concat())),
        Op::Dot => {
            let (sa, sb) = (e.operand(0).shape(), e.operand(1).shape());
            let n = sb[0];
            let m: usize = sa[..sa.len() - 1].iter().product();
            let p: usize = sb[1..].iter().product();
            blockwise(e, &refs, |b| {
                let mut out = vec![0.0; m * p];
                for i in 0..m {
                    for j in 0..p {
                        out[i * p + j] = (0..n).map(|k| b[0][i * n + k] * b[1][k * p + j]).sum();
                    }
                }
                Ok(out)
            })
        }
        Op::Inner => blockwise(e, &refs, |b| {
            Ok(vec![b[0].iter().zip(b[1]).map(|(x, y)| x * y).sum()])
        }),
        Op::Outer => blockwise(e, &refs, |b| {
            Ok(b[0]
                .iter()
                .flat_map(|x| b[1].iter().map(move |y| x * y))
                .collect())
        }),
        Op::Cross => blockwise(e, &refs, |b| {
            let (u, v) = (b[0], b[1]);
            Ok(vec![
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ])
        }),
        Op::Transposed => {
            let s = e.operand(0).shape();
            let (m, n) = (s[0], s[1]);
            blockwise(e, &refs, |b| {
                Ok((0..n * m).map(|k| b[0][(k % m) * n + k / m]).collect())
            })
        }
        Op::Sym
        | Op::Skew
        | Op::Dev
        | Op::Trace
        | Op::Det
        | Op::Cofac
        | Op::Inverse
        | Op::DiagVector => {
            let n = e.operand(0).shape()[0];
            blockwise(e, &refs, |b| {
                let a = b[0];
                Ok(match op {
                    Op::Sym => (0..n * n)
                        .map(|k| 0.5 * (a[k] + a[(k % n) * n + k / n]))
                        .collect(),
                    Op::Skew => (0..n * n)
                        .map(|k| 0.5 * (a[k] - a[(k % n) * n + k / n]))
                        .collect(),
                    Op::Dev => {
                        let tr: f64 = (0..n).map(|i| a[i * n + i]).sum();
                        (0..n * n)
                            .map(|k| a[k] - if k / n == k % n { tr / n as f64 } else { 0.0 })
                            .collect()
                    }
                    Op::Trace => vec![(0..n).map(|i| a[i * n + i]).sum()],
                    Op::Det => vec![matrix_det(a, n)],
                    Op::Cofac => matrix_cofac(a, n),
                    Op::Inverse => matrix_inverse(a, n),
                    _ => (0..n).map(|i| a[i * n + i]).collect(),
                })
            })
        }
        Op::Diag => {
            let vector = e.operand(0).rank() == 1;
            let n = e.shape()[0];
            blockwise(e, &refs, |b| {
                Ok((0..n * n)
                    .map(|k| match (k / n == k % n, vector) {
                        (false, _) => 0.0,
                        (true, true) => b[0][k / n],
                        (true, false) => b[0][k],
                    })
                    .collect())
            })
        }
        Op::Eq => bin(&|x, y| bool_value(x == y)),
        Op::Ne => bin(&|x, y| bool_value(x != y)),
        Op::Le => bin(&|x, y| bool_value(x <= y)),
        Op::Ge => bin(&|x, y| bool_value(x >= y)),
        Op::Lt => bin(&|x, y| bool_value(x < y)),
        Op::Gt => bin(&|x, y| bool_value(x > y)),
        Op::And => bin(&|x, y| bool_value(x != 0.0 && y != 0.0)),
        Op::Or => bin(&|x, y| bool_value(x != 0.0 || y != 0.0)),
        Op::Not => scalar_map(e, &args[0], |x| bool_value(x == 0.0)),
        Op::Conditional => blockwise(e, &refs, |b| {
            Ok(if b[0][0] != 0.0 {
                b[1].to_vec()
            } else {
                b[2].to_vec()
            })
        }),
        Op::Variable => Ok(args[0].clone()),
        Op::Grad => {
            let mut base = e;
            let mut n = 0;
            while base.op() == Op::Grad {
                base = base.operand(0);
                n += 1;
            }
            match base.op() {
                Op::Coefficient | Op::Argument => function_value(e, base, n, env, ctx),
                Op::SpatialCoordinate if n == 1 => {
                    let d = e.shape()[0];
                    Ok(Value::tensor(
                        e.shape(),
                        (0..d * d).map(|k| bool_value(k / d == k % d)).collect(),
                    ))
                }
                _ if base.is_terminal() => Ok(Value {
                    free: free_of(e),
                    shape: e.shape().to_vec(),
                    data: vec![
                        0.0;
                        e.shape().iter().product::<usize>()
                            * e.free().values().product::<usize>()
                    ],
                }),
                _ => Err(Error::UnsupportedNode(
                    "grad of a compound expression; apply derivatives first".into(),
                )),
            }
        }
        _ => Err(Error::UnsupportedNode(op.name().to_string())),
    }
}

/// The dispatch table of the numeric evaluator for one point.
pub fn value_table<'a>(env: &'a EvalEnv, ctx: &'a PointContext) -> DispatchTable<'a, Value> {
    let mut t = DispatchTable::new();
    t.on_terminal(move |e, _| eval_terminal(e, env, ctx));
    t.on_operator(move |e, args| eval_operator(e, args, env, ctx));
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    List,
    Recursive,
}

fn check_finite(v: Value) -> Result<Value> {
    if v.data.iter().any(|x| x.is_nan()) {
        return Err(Error::MathDomain(
            "evaluation left the domain of a function (e.g. ln or sqrt of a negative number)"
                .into(),
        ));
    }
    Ok(v)
}

/// Evaluates a derivative-free expression with the chosen engine.
pub fn eval_with(e: &Expr, env: &EvalEnv, ctx: &PointContext, engine: Engine) -> Result<Value> {
    let table = value_table(env, ctx);
    let v = match engine {
        Engine::List => evaluate_list(e, &table)?,
        Engine::Recursive => evaluate_recursive(e, &table)?,
    };
    check_finite(v)
}

fn eval_at(e: &Expr, env: &EvalEnv, ctx: &PointContext) -> Result<Value> {
    eval_with(e, env, ctx, Engine::List)
}

/// Value of `e` at `point`. Derivatives are eliminated first.
pub fn eval_expr(e: &Expr, env: &EvalEnv, point: &[f64]) -> Result<Value> {
    let e = apply_derivatives(e)?;
    eval_at(&e, env, &PointContext::at(point))
}

/// Largest polynomial degree among the functions in `e`, used to pick a
/// default quadrature degree of `2q + 1`.
pub fn estimated_degree(e: &Expr) -> usize {
    crate::algorithms::terminals(e)
        .iter()
        .filter_map(|t| t.element().map(|el| el.degree() as usize))
        .max()
        .unwrap_or(1)
}

/// Integrates a functional over `mesh`. Cell and exterior facet integrals
/// with subdomain 0 are supported. `degree` selects the quadrature rule.
pub fn integrate_functional(
    form: &Form,
    mesh: &MiniMesh,
    env: &EvalEnv,
    degree: Option<usize>,
) -> Result<f64> {
    if !form.arguments().is_empty() {
        return Err(Error::Arity(format!(
            "only functionals can be integrated, this form has {} arguments",
            form.arguments().len()
        )));
    }
    let mut total = 0.0;
    for integral in form.integrals() {
        let m = integral.measure();
        if m.subdomain_id != 0 {
            return Err(Error::UnsupportedMeasure(format!(
                "subdomain {} of {}",
                m.subdomain_id, m
            )));
        }
        let e = apply_derivatives(integral.integrand())?;
        if let Some(d) = e.gdim() {
            if d != mesh.gdim() {
                return Err(Error::DomainMismatch(format!(
                    "{d}D integrand on a {}D mesh",
                    mesh.gdim()
                )));
            }
        }
        let q = degree.unwrap_or_else(|| 2 * estimated_degree(&e) + 1);
        total += match m.domain_type {
            DomainType::Cell => integrate_cells(&e, mesh, env, q)?,
            DomainType::ExteriorFacet => integrate_boundary(&e, mesh, env, q)?,
            _ => return Err(Error::UnsupportedMeasure(m.to_string())),
        };
    }
    Ok(total)
}

fn integrate_cells(e: &Expr, mesh: &MiniMesh, env: &EvalEnv, degree: usize) -> Result<f64> {
    let rule = rule_for(mesh.cell_type(), degree)?;
    let reference_volume: f64 = rule.weights.iter().sum();
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let geom = mesh.cell(c);
        let scale = geom.volume / reference_volume;
        let mut ctx = PointContext {
            x: vec![],
            cell: Some(geom),
            facet: None,
        };
        let mut cell_sum = 0.0;
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            ctx.x = ctx.cell.as_ref().expect("cell").map(xi);
            cell_sum += w * scalar_of(eval_at(e, env, &ctx)?)?;
        }
        total += scale * cell_sum;
    }
    Ok(total)
}

fn integrate_boundary(e: &Expr, mesh: &MiniMesh, env: &EvalEnv, degree: usize) -> Result<f64> {
    let mut total = 0.0;
    let edge_rule = interval_rule(degree);
    for bf in mesh.boundary_facets() {
        let geom = mesh.cell(bf.cell);
        let (a, b) = match mesh.cell_type() {
            crate::cell::Cell::Interval => {
                let v = geom.vertices[1 - bf.facet].clone();
                (v.clone(), v)
            }
            _ => (
                geom.vertices[(bf.facet + 1) % 3].clone(),
                geom.vertices[(bf.facet + 2) % 3].clone(),
            ),
        };
        let length = geom.facet_areas[bf.facet];
        let mut ctx = PointContext {
            x: vec![],
            cell: Some(geom),
            facet: Some((bf.facet, bf.normal.clone())),
        };
        if mesh.cell_type() == crate::cell::Cell::Interval {
            ctx.x = a;
            total += scalar_of(eval_at(e, env, &ctx)?)?;
            continue;
        }
        let mut s = 0.0;
        for (t, w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            ctx.x = a.iter().zip(&b).map(|(p, q)| p + t[0] * (q - p)).collect();
            s += w * scalar_of(eval_at(e, env, &ctx)?)?;
        }
        total += length * s;
    }
    Ok(total)
}

fn scalar_of(v: Value) -> Result<f64> {
    v.as_scalar()
        .ok_or_else(|| Error::NonScalarIntegrand(shape_str(&v.shape)))
}

/// `(M(f + eps v) - M(f - eps v)) / (2 eps)` with `f` rebound in copies of
/// `env`.
pub fn fd_directional(
    form: &Form,
    f: &Expr,
    v: &Binding,
    eps: f64,
    mesh: &MiniMesh,
    env: &EvalEnv,
    degree: Option<usize>,
) -> Result<f64> {
    let base = env
        .binding(f)
        .ok_or_else(|| Error::UnboundTerminal(format!("{} {}", f.op().name(), ir_name(f))))?;
    let mut plus = env.clone();
    plus.bind(f, base.perturbed(v, eps, env)?);
    let mut minus = env.clone();
    minus.bind(f, base.perturbed(v, -eps, env)?);
    let mp = integrate_functional(form, mesh, &plus, degree)?;
    let mm = integrate_functional(form, mesh, &minus, degree)?;
    Ok((mp - mm) / (2.0 * eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Cell;
    use crate::elements::Element;
    use crate::forms::{make_integral, Measure};
    use crate::indexing::component;
    use crate::ir::{
        coefficient, compare, conditional, identity, int, neg, power, product, spatial_coordinate,
    };
    use crate::tensor::unary;

    fn x0(cell: Cell) -> Expr {
        component(&spatial_coordinate(cell), &[0]).unwrap()
    }

    #[test]
    fn pointwise_examples() {
        let env = EvalEnv::new();
        let x = x0(Cell::Interval);
        let sq = power(&x, &int(2)).unwrap();
        assert_eq!(
            eval_expr(&sq, &env, &[0.5]).unwrap().as_scalar(),
            Some(0.25)
        );
        let tr = unary(Op::Trace, &identity(2).unwrap()).unwrap();
        assert_eq!(eval_expr(&tr, &env, &[]).unwrap().as_scalar(), Some(2.0));
        let c = conditional(
            &compare(Op::Lt, &x, &int(0)).unwrap(),
            &neg(&x).unwrap(),
            &x,
        )
        .unwrap();
        let v = eval_expr(&c, &env, &[-0.3]).unwrap().as_scalar().unwrap();
        assert!((v - 0.3).abs() < 1e-15);
    }

    #[test]
    fn math_domain_error() {
        let x = x0(Cell::Interval);
        let e = ir::math_fn(Op::Ln, &x).unwrap();
        assert!(matches!(
            eval_expr(&e, &EvalEnv::new(), &[-1.0]),
            Err(Error::MathDomain(_))
        ));
    }

    #[test]
    fn unbound_function() {
        let f = coefficient(
            &Element::finite("Lagrange", Cell::Interval, 1).unwrap(),
            None,
        );
        assert!(matches!(
            eval_expr(&f, &EvalEnv::new(), &[0.0]),
            Err(Error::UnboundTerminal(_))
        ));
    }

    #[test]
    fn integrate_polynomial() {
        let x = x0(Cell::Interval);
        let e = product(&int(3), &power(&x, &int(2)).unwrap()).unwrap();
        let m = make_integral(&e, &Measure::dx()).unwrap();
        let mesh = MiniMesh::interval(0.0, 1.0, 4).unwrap();
        let r = integrate_functional(&m, &mesh, &EvalEnv::new(), Some(2)).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fd_gradient_of_callable() {
        let f = coefficient(
            &Element::finite("Lagrange", Cell::Interval, 2).unwrap(),
            None,
        );
        let mut env = EvalEnv::new();
        env.bind(&f, Binding::callable(|x| vec![x[0] * x[0]]));
        let g = ir::grad(&f).unwrap();
        let v = eval_expr(&g, &env, &[0.3]).unwrap();
        assert!((v.data[0] - 0.6).abs() < 1e-8);
    }

    #[test]
    fn matrix_helpers() {
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        assert!((matrix_det(&a, 3) - 18.0).abs() < 1e-12);
        let inv = matrix_inverse(&a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - bool_value(i == j)).abs() < 1e-12);
            }
        }
        let b = [
            1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 1.0, 0.0, 2.0, 3.0, 1.0, 1.0, 1.0,
        ];
        assert!((matrix_det(&b, 4) - matrix_det_by_cofactors(&b, 4)).abs() < 1e-9);
    }

    fn matrix_det_by_cofactors(a: &[f64], n: usize) -> f64 {
        let c = matrix_cofac(a, n);
        (0..n).map(|j| a[j] * c[j]).sum()
    }
}
