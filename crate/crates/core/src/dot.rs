//! Graphviz export of expression graphs.
//!
//! Node ids are topological positions, so an operand always has a smaller id
//! than its parent. With `dedup` each distinct node appears once, as in the
//! list DAG; without it every occurrence in the expanded tree gets a node.

use std::collections::HashMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::forms::Form;
use crate::frontend::real_literal;
use crate::ir::{shape_str, Expr, Index, IndexTerm, MultiIndex, Payload};

/// Refuse to expand trees beyond this many nodes without dedup.
pub const TREE_NODE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub labels: Vec<String>,
    /// Edges from parent to operand, grouped by parent in operand order.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Default)]
struct IndexNames(HashMap<Index, String>);

impl IndexNames {
    // Fresh indices get local names in order of appearance so the output
    // does not depend on how many indices the process created before.
    fn name(&mut self, i: Index) -> String {
        if let Some(n) = i.name() {
            return n.to_string();
        }
        let k = self.0.len();
        self.0.entry(i).or_insert_with(|| format!("i{k}")).clone()
    }

    fn term(&mut self, t: &IndexTerm) -> String {
        match t {
            IndexTerm::Fixed(v) => v.to_string(),
            IndexTerm::Free(i) => self.name(*i),
        }
    }

    fn multi(&mut self, m: &MultiIndex) -> String {
        let parts: Vec<String> = m.0.iter().map(|t| self.term(t)).collect();
        parts.join(", ")
    }
}

fn label(e: &Expr, names: &mut IndexNames) -> String {
    let op = e.op().name();
    let detail = match e.payload() {
        Payload::None => return op.to_string(),
        Payload::Int(v) => v.to_string(),
        Payload::Real(v) => real_literal(v.0),
        Payload::Dim(d) | Payload::Count(d) => d.to_string(),
        Payload::UnitVector { dim, axis } => format!("{dim}, {axis}"),
        Payload::Cell(c) => c.name().to_string(),
        Payload::Constant { count, .. } => count.to_string(),
        Payload::Function { count, .. } => count.to_string(),
        Payload::Zero { shape, free } => {
            let mut s = shape_str(shape);
            for (i, d) in free {
                let _ = write!(s, " {}:{d}", names.name(*i));
            }
            s
        }
        Payload::MultiIndex(m) => names.multi(m),
        Payload::Index(i) => names.name(*i),
        Payload::Term(t) => names.term(t),
        Payload::Label(l) => l.to_string(),
    };
    format!("{op} {detail}")
}

fn build(roots: &[Expr], dedup: bool) -> Result<Graph> {
    let mut names = IndexNames::default();
    let mut g = Graph {
        labels: Vec::new(),
        edges: Vec::new(),
    };
    let mut seen: HashMap<Expr, usize> = HashMap::new();
    for root in roots {
        // Post-order with an explicit stack; `done` collects operand ids.
        let mut stack: Vec<(Expr, bool)> = vec![(root.clone(), false)];
        let mut done: Vec<usize> = Vec::new();
        while let Some((e, expanded)) = stack.pop() {
            if dedup {
                if let Some(&id) = seen.get(&e) {
                    done.push(id);
                    continue;
                }
            }
            if !expanded {
                stack.push((e.clone(), true));
                for op in e.operands().iter().rev() {
                    stack.push((op.clone(), false));
                }
                continue;
            }
            let n = e.operands().len();
            let ops = done.split_off(done.len() - n);
            let id = g.labels.len();
            if id >= TREE_NODE_LIMIT {
                return Err(Error::Unsupported(format!(
                    "graph has more than {TREE_NODE_LIMIT} nodes; use dedup"
                )));
            }
            g.labels.push(label(&e, &mut names));
            g.edges.extend(ops.into_iter().map(|o| (id, o)));
            if dedup {
                seen.insert(e, id);
            }
            done.push(id);
        }
    }
    g.edges.sort_by_key(|&(parent, _)| parent);
    Ok(g)
}

pub fn expr_graph(e: &Expr, dedup: bool) -> Result<Graph> {
    build(std::slice::from_ref(e), dedup)
}

/// Graph of all integrands of a form, sharing nodes across integrals when
/// `dedup` is on.
pub fn form_graph(f: &Form, dedup: bool) -> Result<Graph> {
    let roots: Vec<Expr> = f
        .integrals()
        .iter()
        .map(|i| i.integrand().clone())
        .collect();
    build(&roots, dedup)
}

impl Graph {
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph {:?} {{", name);
        s.push_str("  node [shape=box, fontname=\"monospace\"];\n");
        for (id, l) in self.labels.iter().enumerate() {
            let _ = writeln!(s, "  n{id} [label={l:?}];");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(s, "  n{a} -> n{b};");
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Cell;
    use crate::elements::Element;
    use crate::ir;

    #[test]
    fn shared_nodes_appear_once() {
        let el = Element::finite("CG", Cell::Triangle, 1).unwrap();
        let f = ir::coefficient(&el, Some(0));
        let s = ir::sum(&f, &ir::int(1)).unwrap();
        let e = ir::product(&s, &ir::math_fn(ir::Op::Sin, &s).unwrap()).unwrap();
        let g = expr_graph(&e, true).unwrap();
        assert_eq!(g.labels.len(), 5);
        assert_eq!(g.edges.len(), 5);
        let t = expr_graph(&e, false).unwrap();
        assert_eq!(t.labels.len(), 8);
        assert_eq!(t.edges.len(), 7);
        for (a, b) in g.edges.iter().chain(&t.edges) {
            assert!(b < a);
        }
    }

    #[test]
    fn single_terminal() {
        let g = expr_graph(&ir::spatial_coordinate(Cell::Interval), true).unwrap();
        assert_eq!(g.labels, vec!["spatial_coordinate interval"]);
        assert!(g.edges.is_empty());
    }
}
