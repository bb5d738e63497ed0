//! Generic DAG machinery: the list-based DAG, traversal, dispatch tables,
//! the evaluation engines and the reuse/replace transformers.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ir::{rebuild, shape_str, Expr, Group, Op};

/// Topologically sorted, duplicate-free vertex list of a DAG. `edges[i]`
/// holds the positions of the operands of `vertices[i]`, all below `i`.
#[derive(Debug, Clone)]
pub struct ListDag {
    pub vertices: Vec<Expr>,
    pub edges: Vec<Vec<usize>>,
    positions: HashMap<Expr, usize>,
    /// Number of times a node was expanded while building; equals the
    /// vertex count since each unique node is expanded once.
    pub visits: usize,
}

impl ListDag {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn position(&self, e: &Expr) -> Option<usize> {
        self.positions.get(e).copied()
    }

    pub fn root(&self) -> &Expr {
        self.vertices
            .last()
            .expect("a list DAG has at least its root")
    }

    pub fn terminals(&self) -> impl Iterator<Item = &Expr> {
        self.vertices.iter().filter(|v| v.is_terminal())
    }
}

/// Builds the list representation with an explicit stack, so deep chains
/// do not recurse.
pub fn build_list_dag(root: &Expr) -> ListDag {
    let mut dag = ListDag {
        vertices: Vec::new(),
        edges: Vec::new(),
        positions: HashMap::new(),
        visits: 0,
    };
    let mut stack: Vec<(Expr, bool)> = vec![(root.clone(), false)];
    while let Some((e, expanded)) = stack.pop() {
        if dag.positions.contains_key(&e) {
            continue;
        }
        if expanded {
            let edges = e.operands().iter().map(|o| dag.positions[o]).collect();
            dag.positions.insert(e.clone(), dag.vertices.len());
            dag.vertices.push(e);
            dag.edges.push(edges);
            continue;
        }
        dag.visits += 1;
        stack.push((e.clone(), true));
        for o in e.operands().iter().rev() {
            if !dag.positions.contains_key(o) {
                stack.push((o.clone(), false));
            }
        }
    }
    dag
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Pre,
    Post,
}

/// Nodes below `root` in pre- or post-order. With `dedup`, each unique node
/// is yielded once (at its first occurrence); otherwise every tree
/// occurrence is yielded.
pub fn iterate(
    root: &Expr,
    order: Order,
    dedup: bool,
    filter: Option<&dyn Fn(&Expr) -> bool>,
) -> Vec<Expr> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<(Expr, bool)> = vec![(root.clone(), false)];
    while let Some((e, expanded)) = stack.pop() {
        if expanded {
            if order == Order::Post && filter.is_none_or(|f| f(&e)) {
                out.push(e);
            }
            continue;
        }
        if dedup && !seen.insert(e.clone()) {
            continue;
        }
        if order == Order::Pre && filter.is_none_or(|f| f(&e)) {
            out.push(e.clone());
        }
        stack.push((e.clone(), true));
        for o in e.operands().iter().rev() {
            stack.push((o.clone(), false));
        }
    }
    out
}

/// Distinct terminals reachable from `root`, in post-order.
pub fn terminals(root: &Expr) -> Vec<Expr> {
    build_list_dag(root).terminals().cloned().collect()
}

pub type PostFn<'a, T> = Arc<dyn Fn(&Expr, &[T]) -> Result<T> + Send + Sync + 'a>;
pub type PreFn<'a, T> =
    Arc<dyn Fn(&Expr, &mut dyn FnMut(&Expr) -> Result<T>) -> Result<T> + Send + Sync + 'a>;

/// A handler either receives the values of the operands (post-order), or
/// the raw node plus a callback that evaluates any subexpression.
pub enum Handler<'a, T> {
    Post(PostFn<'a, T>),
    Pre(PreFn<'a, T>),
}

impl<T> Clone for Handler<'_, T> {
    fn clone(&self) -> Self {
        match self {
            Handler::Post(f) => Handler::Post(f.clone()),
            Handler::Pre(f) => Handler::Pre(f.clone()),
        }
    }
}

/// Handlers keyed by node kind, with fallback to the kind's group and then
/// to a terminal or operator default.
pub struct DispatchTable<'a, T> {
    by_op: HashMap<Op, Handler<'a, T>>,
    by_group: HashMap<Group, Handler<'a, T>>,
    terminal: Option<Handler<'a, T>>,
    operator: Option<Handler<'a, T>>,
}

impl<T> Clone for DispatchTable<'_, T> {
    fn clone(&self) -> Self {
        DispatchTable {
            by_op: self.by_op.clone(),
            by_group: self.by_group.clone(),
            terminal: self.terminal.clone(),
            operator: self.operator.clone(),
        }
    }
}

impl<T> Default for DispatchTable<'_, T> {
    fn default() -> Self {
        DispatchTable {
            by_op: HashMap::new(),
            by_group: HashMap::new(),
            terminal: None,
            operator: None,
        }
    }
}

impl<'a, T> DispatchTable<'a, T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(
        &mut self,
        op: Op,
        f: impl Fn(&Expr, &[T]) -> Result<T> + Send + Sync + 'a,
    ) -> &mut Self {
        self.by_op.insert(op, Handler::Post(Arc::new(f)));
        self
    }

    pub fn on_pre(
        &mut self,
        op: Op,
        f: impl Fn(&Expr, &mut dyn FnMut(&Expr) -> Result<T>) -> Result<T> + Send + Sync + 'a,
    ) -> &mut Self {
        self.by_op.insert(op, Handler::Pre(Arc::new(f)));
        self
    }

    pub fn on_group(
        &mut self,
        g: Group,
        f: impl Fn(&Expr, &[T]) -> Result<T> + Send + Sync + 'a,
    ) -> &mut Self {
        self.by_group.insert(g, Handler::Post(Arc::new(f)));
        self
    }

    pub fn on_group_pre(
        &mut self,
        g: Group,
        f: impl Fn(&Expr, &mut dyn FnMut(&Expr) -> Result<T>) -> Result<T> + Send + Sync + 'a,
    ) -> &mut Self {
        self.by_group.insert(g, Handler::Pre(Arc::new(f)));
        self
    }

    pub fn on_terminal(
        &mut self,
        f: impl Fn(&Expr, &[T]) -> Result<T> + Send + Sync + 'a,
    ) -> &mut Self {
        self.terminal = Some(Handler::Post(Arc::new(f)));
        self
    }

    pub fn on_operator(
        &mut self,
        f: impl Fn(&Expr, &[T]) -> Result<T> + Send + Sync + 'a,
    ) -> &mut Self {
        self.operator = Some(Handler::Post(Arc::new(f)));
        self
    }

    /// The closest handler for `op`: its own, its group's, or the default.
    pub fn resolve(&self, op: Op) -> Result<&Handler<'a, T>> {
        self.by_op
            .get(&op)
            .or_else(|| self.by_group.get(&op.group()))
            .or(if op.is_terminal() {
                self.terminal.as_ref()
            } else {
                self.operator.as_ref()
            })
            .ok_or_else(|| Error::UnhandledKind(op.name().to_string()))
    }

    pub fn has_pre_handlers(&self) -> bool {
        let pre = |h: &Handler<'a, T>| matches!(h, Handler::Pre(_));
        self.by_op.values().any(pre)
            || self.by_group.values().any(pre)
            || self.terminal.as_ref().is_some_and(pre)
            || self.operator.as_ref().is_some_and(pre)
    }

    fn fill_defaults(&mut self, terminal: Handler<'a, T>, operator: Handler<'a, T>) {
        self.terminal.get_or_insert(terminal);
        self.operator.get_or_insert(operator);
    }
}

/// Evaluates `root` with `table`: over the list DAG when every handler is
/// post-order, recursively otherwise.
pub fn evaluate<T: Clone>(root: &Expr, table: &DispatchTable<'_, T>) -> Result<T> {
    if table.has_pre_handlers() {
        evaluate_recursive(root, table)
    } else {
        evaluate_list(root, table)
    }
}

/// Single pass over the topologically sorted vertex list; each vertex is
/// evaluated exactly once.
pub fn evaluate_list<T: Clone>(root: &Expr, table: &DispatchTable<'_, T>) -> Result<T> {
    let dag = build_list_dag(root);
    let mut values: Vec<T> = Vec::with_capacity(dag.len());
    for (v, edges) in dag.vertices.iter().zip(&dag.edges) {
        let args: Vec<T> = edges.iter().map(|&j| values[j].clone()).collect();
        let value = match table.resolve(v.op())? {
            Handler::Post(f) => f(v, &args)?,
            Handler::Pre(_) => {
                return Err(Error::Unsupported(
                    "context handlers need recursive evaluation".into(),
                ))
            }
        };
        values.push(value);
    }
    Ok(values.pop().expect("root value"))
}

struct Recursive<'t, 'a, T> {
    table: &'t DispatchTable<'a, T>,
    memo: HashMap<Expr, T>,
}

impl<T: Clone> Recursive<'_, '_, T> {
    fn eval(&mut self, e: &Expr) -> Result<T> {
        if let Some(v) = self.memo.get(e) {
            return Ok(v.clone());
        }
        let value = match self.table.resolve(e.op())?.clone() {
            Handler::Post(f) => {
                let args = e
                    .operands()
                    .iter()
                    .map(|o| self.eval(o))
                    .collect::<Result<Vec<T>>>()?;
                f(e, &args)?
            }
            Handler::Pre(f) => f(e, &mut |x| self.eval(x))?,
        };
        self.memo.insert(e.clone(), value.clone());
        Ok(value)
    }
}

/// Recursive evaluation, memoized per call. Context handlers receive the
/// raw node and decide which subexpressions to evaluate.
pub fn evaluate_recursive<T: Clone>(root: &Expr, table: &DispatchTable<'_, T>) -> Result<T> {
    Recursive {
        table,
        memo: HashMap::new(),
    }
    .eval(root)
}

/// The default rule of the reuse transformer: rebuild the node from the
/// transformed operands, or return it unchanged if they all came back
/// unchanged.
pub fn reuse_operator(e: &Expr, ops: &[Expr]) -> Result<Expr> {
    if ops.iter().zip(e.operands()).all(|(a, b)| a == b) {
        Ok(e.clone())
    } else {
        rebuild(e, ops)
    }
}

/// Applies `overrides` bottom-up; kinds without an override keep terminals
/// and rebuild operators only when an operand changed.
pub fn reuse_transform(root: &Expr, overrides: &DispatchTable<'_, Expr>) -> Result<Expr> {
    let mut table = overrides.clone();
    table.fill_defaults(
        Handler::Post(Arc::new(|e: &Expr, _: &[Expr]| Ok(e.clone()))),
        Handler::Post(Arc::new(reuse_operator)),
    );
    evaluate(root, &table)
}

/// Substitutes terminals according to `mapping`, reusing every subtree
/// that contains no mapped terminal.
pub fn replace_terminals(root: &Expr, mapping: &HashMap<Expr, Expr>) -> Result<Expr> {
    for (from, to) in mapping {
        if from.shape() != to.shape() || from.free() != to.free() {
            return Err(Error::ShapeMismatch(format!(
                "cannot replace {} of shape {} by an expression of shape {}",
                from.op().name(),
                shape_str(from.shape()),
                shape_str(to.shape())
            )));
        }
    }
    let mut table = DispatchTable::new();
    table.on_terminal(move |e, _| Ok(mapping.get(e).cloned().unwrap_or_else(|| e.clone())));
    reuse_transform(root, &table)
}
