//! Kernel templates: the shared shape of a group's instances with leaves
//! replaced by table columns or literals, plus leaf harvesting and local
//! decomposition.

use crate::decompose::{Decomposition, ItemKind};
use crate::expr::{apply_op, hash, CostTable, ExprArena, ExprRef, OpKind};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarvestError {
    #[error("instance {instance} of a group does not match the group's structure (hash collision)")]
    StructureMismatch { instance: usize },
    #[error("group has no instances")]
    EmptyGroup,
    #[error("block members reference each other cyclically")]
    CyclicBlock,
}

/// One template node. Children always have smaller indices than parents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TNode {
    Op {
        op: OpKind,
        children: Vec<u32>,
    },
    /// Per-instance leaf read from a leaf-table column.
    Column(u32),
    /// Constant shared by all instances.
    Literal(f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub nodes: Vec<TNode>,
    pub roots: Vec<u32>,
}

/// What a leaf position holds for one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeafPayload {
    /// Value-array entry: an input variable or a materialized node.
    Value(ExprRef),
    Const(f64),
    /// Result of root `k` of the same block instance.
    OwnRoot(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnClass {
    Variable,
    VaryingConst,
    Uniform(f64),
    DuplicateOf(u32),
    OwnRoot(u32),
}

/// Column-major leaf table: `columns[c][i]` is column `c` of instance `i`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafTable {
    pub instances: usize,
    pub columns: Vec<Vec<LeafPayload>>,
}

impl LeafTable {
    pub fn row(&self, i: usize) -> Vec<LeafPayload> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

impl Template {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Evaluate every node for one instance given a column lookup; returns
    /// the root values.
    pub fn eval(&self, column: &mut dyn FnMut(u32) -> f64) -> Vec<f64> {
        let mut vals = vec![0.0f64; self.nodes.len()];
        let mut args = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            vals[i] = match n {
                TNode::Column(c) => column(*c),
                TNode::Literal(v) => *v,
                TNode::Op { op, children } => {
                    args.clear();
                    args.extend(children.iter().map(|&c| vals[c as usize]));
                    apply_op(*op, &args)
                }
            };
        }
        self.roots.iter().map(|&r| vals[r as usize]).collect()
    }

    /// Columns referenced by the template, ascending.
    pub fn used_columns(&self) -> Vec<u32> {
        let mut cols: Vec<u32> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TNode::Column(c) => Some(*c),
                _ => None,
            })
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    /// Tree-sum complexity of every node.
    pub fn complexities(&self, costs: &CostTable) -> Vec<u64> {
        let mut out = vec![0u64; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let TNode::Op { op, children } = n {
                out[i] = children.iter().fold(costs.node_cost(*op, children.len()), |acc, &c| {
                    acc.saturating_add(out[c as usize])
                });
            }
        }
        out
    }

    /// Total cost of evaluating each distinct node once.
    pub fn dag_cost(&self, costs: &CostTable) -> u64 {
        self.nodes
            .iter()
            .map(|n| match n {
                TNode::Op { op, children } => costs.node_cost(*op, children.len()),
                _ => 0,
            })
            .sum()
    }

    /// Merge identical nodes (same op and ordered children, same column or
    /// literal bits) and drop nodes unreachable from the roots.
    pub fn canonicalize(&self) -> Template {
        let mut live = vec![false; self.nodes.len()];
        for &r in &self.roots {
            live[r as usize] = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if live[i] {
                if let TNode::Op { children, .. } = &self.nodes[i] {
                    for &c in children {
                        live[c as usize] = true;
                    }
                }
            }
        }
        let mut out = Template::default();
        let mut remap = vec![u32::MAX; self.nodes.len()];
        let mut seen: HashMap<TKey, u32> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !live[i] {
                continue;
            }
            let node = match n {
                TNode::Op { op, children } => TNode::Op {
                    op: *op,
                    children: children.iter().map(|&c| remap[c as usize]).collect(),
                },
                other => other.clone(),
            };
            let key = TKey::of(&node);
            let idx = *seen.entry(key).or_insert_with(|| {
                out.nodes.push(node);
                (out.nodes.len() - 1) as u32
            });
            remap[i] = idx;
        }
        out.roots = self.roots.iter().map(|&r| remap[r as usize]).collect();
        out
    }

    /// Lower into an arena. Columns become variables `column_var(c)`.
    pub fn to_expr(&self, arena: &mut ExprArena, column_var: &dyn Fn(u32) -> u32) -> Vec<ExprRef> {
        let mut refs: Vec<ExprRef> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let r = match n {
                TNode::Column(c) => arena.var(column_var(*c)),
                TNode::Literal(v) => arena.constant(*v).expect("template literals are finite"),
                TNode::Op { op, children } => {
                    let kids: Vec<ExprRef> = children.iter().map(|&c| refs[c as usize]).collect();
                    arena.apply(*op, &kids).expect("template nodes are well formed")
                }
            };
            refs.push(r);
        }
        self.roots.iter().map(|&r| refs[r as usize]).collect()
    }

    /// Raise arena expressions back into a template. Variables map to
    /// columns through `var_column`.
    pub fn from_expr(arena: &ExprArena, roots: &[ExprRef], var_column: &dyn Fn(u32) -> u32) -> Template {
        let order = crate::expr::post_order(arena, roots);
        let mut idx: HashMap<ExprRef, u32> = HashMap::with_capacity(order.len());
        let mut t = Template::default();
        for e in order {
            let node = match arena.op(e) {
                OpKind::Var => TNode::Column(var_column(arena.var_id(e).unwrap())),
                OpKind::Const => TNode::Literal(arena.const_value(e).unwrap()),
                op => TNode::Op {
                    op,
                    children: arena.children(e).iter().map(|c| idx[c]).collect(),
                },
            };
            t.nodes.push(node);
            idx.insert(e, (t.nodes.len() - 1) as u32);
        }
        t.roots = roots.iter().map(|r| idx[r]).collect();
        t
    }

    /// Render one root as infix text with columns named by `name`.
    pub fn render(&self, root: usize, name: &dyn Fn(u32) -> String) -> String {
        let mut s = String::new();
        self.render_node(self.roots[root], name, &mut s);
        s
    }

    fn render_node(&self, i: u32, name: &dyn Fn(u32) -> String, out: &mut String) {
        match &self.nodes[i as usize] {
            TNode::Column(c) => out.push_str(&name(*c)),
            TNode::Literal(v) => out.push_str(&crate::expr::format_const(*v)),
            TNode::Op { op, children } => {
                let infix = match op {
                    OpKind::Add => Some("+"),
                    OpKind::Sub => Some("-"),
                    OpKind::Mul => Some("*"),
                    OpKind::Div => Some("/"),
                    _ => None,
                };
                match (infix, op) {
                    (Some(sym), _) => {
                        out.push('(');
                        for (k, &c) in children.iter().enumerate() {
                            if k > 0 {
                                out.push_str(sym);
                            }
                            self.render_node(c, name, out);
                        }
                        out.push(')');
                    }
                    (None, OpKind::Neg) => {
                        out.push_str("(-");
                        self.render_node(children[0], name, out);
                        out.push(')');
                    }
                    _ => {
                        out.push_str(op.name());
                        out.push('(');
                        for (k, &c) in children.iter().enumerate() {
                            if k > 0 {
                                out.push(',');
                            }
                            self.render_node(c, name, out);
                        }
                        out.push(')');
                    }
                }
            }
        }
    }
}

#[derive(Hash, PartialEq, Eq)]
enum TKey {
    Op(u8, Vec<u32>),
    Column(u32),
    Literal(u64),
}

impl TKey {
    fn of(n: &TNode) -> TKey {
        match n {
            TNode::Op { op, children } => TKey::Op(op.tag(), children.clone()),
            TNode::Column(c) => TKey::Column(*c),
            TNode::Literal(v) => TKey::Literal(v.to_bits()),
        }
    }
}

/// Structural hash of a node as seen from inside an item body: materialized
/// nodes hash like variables; `child_hash` supplies the children's hashes.
pub(crate) fn interior_cut_hash(arena: &ExprArena, e: ExprRef, child_hash: impl Fn(ExprRef) -> u64) -> u64 {
    let op = arena.op(e);
    let kids = arena.children(e);
    let h = hash::interior_struct_hash(op, kids.iter().map(|&c| child_hash(c)));
    if op == OpKind::Pow {
        hash::combine(h, arena.const_value(kids[1]).map_or(0, f64::to_bits))
    } else {
        h
    }
}

/// Harvest result for one group before classification.
#[derive(Clone, Debug)]
pub struct Harvest {
    /// Shape of instance 0 with every leaf position a distinct column.
    pub shape: Template,
    pub table: LeafTable,
}

/// Traverse all instances of a group at once, starting at their roots, and
/// collect the leaf table. Interior nodes of instance 0 that are referenced
/// more than once are shared in the shape only when every instance shares
/// them the same way.
pub fn harvest_leaves(arena: &ExprArena, decomp: &Decomposition, instances: &[usize]) -> Result<Harvest, HarvestError> {
    let n_inst = instances.len();
    if n_inst == 0 {
        return Err(HarvestError::EmptyGroup);
    }
    let roots_of = |i: usize| &decomp.items[instances[i]].roots;
    let n_roots = roots_of(0).len();
    for i in 0..n_inst {
        if roots_of(i).len() != n_roots {
            return Err(HarvestError::StructureMismatch { instance: i });
        }
    }
    // Own-root lookup for block items.
    let own_root = |i: usize, e: ExprRef| -> Option<u32> {
        let item = &decomp.items[instances[i]];
        if item.kind != ItemKind::Block {
            return None;
        }
        item.roots.iter().position(|&r| r == e).map(|k| k as u32)
    };
    let is_cut = |e: ExprRef| arena.is_leaf(e) || decomp.is_materialized(e);

    // In-body reference counts of instance 0 decide where sharing is possible.
    let mut refs0: HashMap<ExprRef, u32> = HashMap::new();
    {
        let mut stack: Vec<ExprRef> = Vec::new();
        for &r in roots_of(0) {
            *refs0.entry(r).or_insert(0) += 1;
            if refs0[&r] == 1 && !arena.is_leaf(r) {
                stack.push(r);
            }
        }
        while let Some(e) = stack.pop() {
            for &c in arena.children(e) {
                let cnt = refs0.entry(c).or_insert(0);
                *cnt += 1;
                if *cnt == 1 && !is_cut(c) {
                    stack.push(c);
                }
            }
        }
    }

    let mut shape = Template::default();
    let mut columns: Vec<Vec<LeafPayload>> = Vec::new();
    let mut memo: HashMap<ExprRef, Vec<(Vec<ExprRef>, u32)>> = HashMap::new();

    struct Frame {
        tuple: Vec<ExprRef>,
        next: usize,
        kids: Vec<u32>,
        shared: bool,
    }

    for r in 0..n_roots {
        let root_tuple: Vec<ExprRef> = (0..n_inst).map(|i| roots_of(i)[r]).collect();
        let mut stack: Vec<Frame> = Vec::new();
        let mut result: Option<u32> = None;
        // Enter a position: either resolve it immediately (leaf, memo hit)
        // or push a frame.
        let enter = |tuple: Vec<ExprRef>,
                     top: bool,
                     stack: &mut Vec<Frame>,
                     shape: &mut Template,
                     columns: &mut Vec<Vec<LeafPayload>>,
                     memo: &HashMap<ExprRef, Vec<(Vec<ExprRef>, u32)>>|
         -> Result<Option<u32>, HarvestError> {
            let e0 = tuple[0];
            let leaf0 = arena.is_leaf(e0) || (!top && is_cut(e0));
            if leaf0 {
                let mut col = Vec::with_capacity(n_inst);
                for (i, &e) in tuple.iter().enumerate() {
                    let p = if let (false, Some(k)) = (top, own_root(i, e)) {
                        LeafPayload::OwnRoot(k)
                    } else if let Some(v) = arena.const_value(e) {
                        LeafPayload::Const(v)
                    } else if arena.op(e) == OpKind::Var || (!top && decomp.is_materialized(e)) {
                        LeafPayload::Value(e)
                    } else {
                        return Err(HarvestError::StructureMismatch { instance: i });
                    };
                    col.push(p);
                }
                columns.push(col);
                shape.nodes.push(TNode::Column((columns.len() - 1) as u32));
                return Ok(Some((shape.nodes.len() - 1) as u32));
            }
            let op = arena.op(e0);
            let arity = arena.children(e0).len();
            for (i, &e) in tuple.iter().enumerate().skip(1) {
                let mismatch = arena.op(e) != op
                    || arena.children(e).len() != arity
                    || (!top && is_cut(e))
                    || (op == OpKind::Pow
                        && arena.const_value(arena.children(e)[1]) != arena.const_value(arena.children(e0)[1]));
                if mismatch {
                    return Err(HarvestError::StructureMismatch { instance: i });
                }
            }
            let shared = refs0.get(&e0).copied().unwrap_or(0) > 1;
            if shared {
                if let Some(list) = memo.get(&e0) {
                    if let Some((_, t)) = list.iter().find(|(tp, _)| *tp == tuple) {
                        return Ok(Some(*t));
                    }
                }
            }
            stack.push(Frame {
                tuple,
                next: 0,
                kids: Vec::with_capacity(arity),
                shared,
            });
            Ok(None)
        };

        if let Some(t) = enter(root_tuple, true, &mut stack, &mut shape, &mut columns, &memo)? {
            result = Some(t);
        }
        while let Some(top) = stack.last_mut() {
            let e0 = top.tuple[0];
            let arity = arena.children(e0).len();
            if top.next < arity {
                let k = top.next;
                top.next += 1;
                let child: Vec<ExprRef> = top.tuple.iter().map(|&e| arena.children(e)[k]).collect();
                if let Some(t) = enter(child, false, &mut stack, &mut shape, &mut columns, &memo)? {
                    stack.last_mut().unwrap().kids.push(t);
                }
            } else {
                let f = stack.pop().unwrap();
                shape.nodes.push(TNode::Op {
                    op: arena.op(e0),
                    children: f.kids,
                });
                let t = (shape.nodes.len() - 1) as u32;
                if f.shared {
                    memo.entry(e0).or_default().push((f.tuple, t));
                }
                match stack.last_mut() {
                    Some(parent) => parent.kids.push(t),
                    None => result = Some(t),
                }
            }
        }
        shape.roots.push(result.expect("root resolved"));
    }

    Ok(Harvest {
        shape,
        table: LeafTable {
            instances: n_inst,
            columns,
        },
    })
}

/// Classify every column of a leaf table.
pub fn classify_columns(table: &LeafTable) -> Result<Vec<ColumnClass>, HarvestError> {
    let mut classes = Vec::with_capacity(table.columns.len());
    let mut first_with: HashMap<u64, Vec<u32>> = HashMap::new();
    for (ci, col) in table.columns.iter().enumerate() {
        let class = match col[0] {
            LeafPayload::Const(v0) => {
                if let Some(i) = col.iter().position(|p| !matches!(p, LeafPayload::Const(_))) {
                    return Err(HarvestError::StructureMismatch { instance: i });
                }
                if col
                    .iter()
                    .all(|p| matches!(p, LeafPayload::Const(v) if v.to_bits() == v0.to_bits()))
                {
                    ColumnClass::Uniform(v0)
                } else {
                    ColumnClass::VaryingConst
                }
            }
            LeafPayload::OwnRoot(k) => {
                if let Some(i) = col.iter().position(|p| *p != LeafPayload::OwnRoot(k)) {
                    return Err(HarvestError::StructureMismatch { instance: i });
                }
                ColumnClass::OwnRoot(k)
            }
            LeafPayload::Value(_) => {
                if let Some(i) = col.iter().position(|p| !matches!(p, LeafPayload::Value(_))) {
                    return Err(HarvestError::StructureMismatch { instance: i });
                }
                ColumnClass::Variable
            }
        };
        let class = match class {
            ColumnClass::Variable | ColumnClass::VaryingConst => {
                let h = column_hash(col);
                let bucket = first_with.entry(h).or_default();
                match bucket.iter().find(|&&c| table.columns[c as usize] == *col) {
                    Some(&c) => ColumnClass::DuplicateOf(c),
                    None => {
                        bucket.push(ci as u32);
                        class
                    }
                }
            }
            other => other,
        };
        classes.push(class);
    }
    Ok(classes)
}

fn column_hash(col: &[LeafPayload]) -> u64 {
    col.iter().fold(0u64, |h, p| {
        let w = match p {
            LeafPayload::Value(e) => e.index() as u64,
            LeafPayload::Const(v) => v.to_bits() ^ 0xc0,
            LeafPayload::OwnRoot(k) => *k as u64 ^ 0x0e,
        };
        hash::combine(w, h)
    })
}

/// Template with uniform constants inlined as literals, duplicate columns
/// redirected to their first occurrence and own-root columns replaced by a
/// direct reference to that root's node.
pub fn build_template(shape: &Template, classes: &[ColumnClass]) -> Result<Template, HarvestError> {
    let n = shape.nodes.len();
    let target = |i: usize| -> usize {
        match shape.nodes[i] {
            TNode::Column(c) => match classes[c as usize] {
                ColumnClass::OwnRoot(k) => shape.roots[k as usize] as usize,
                _ => i,
            },
            _ => i,
        }
    };
    // Post-order emission following own-root redirects.
    let mut out = Template::default();
    let mut new_index = vec![u32::MAX; n];
    let mut state = vec![0u8; n];
    for &r in &shape.roots {
        let mut stack = vec![(target(r as usize), false)];
        while let Some((i, expanded)) = stack.pop() {
            if state[i] == 2 {
                continue;
            }
            let kids: &[u32] = match &shape.nodes[i] {
                TNode::Op { children, .. } => children,
                _ => &[],
            };
            if !expanded {
                if state[i] == 1 {
                    return Err(HarvestError::CyclicBlock);
                }
                state[i] = 1;
                stack.push((i, true));
                for &c in kids.iter().rev() {
                    let t = target(c as usize);
                    if state[t] == 1 {
                        return Err(HarvestError::CyclicBlock);
                    }
                    if state[t] == 0 {
                        stack.push((t, false));
                    }
                }
                continue;
            }
            let node = match &shape.nodes[i] {
                TNode::Op { op, children } => TNode::Op {
                    op: *op,
                    children: children.iter().map(|&c| new_index[target(c as usize)]).collect(),
                },
                TNode::Column(c) => match classes[*c as usize] {
                    ColumnClass::Uniform(v) => TNode::Literal(v),
                    ColumnClass::DuplicateOf(d) => TNode::Column(d),
                    _ => TNode::Column(*c),
                },
                TNode::Literal(v) => TNode::Literal(*v),
            };
            out.nodes.push(node);
            new_index[i] = (out.nodes.len() - 1) as u32;
            state[i] = 2;
        }
        out.roots.push(new_index[target(r as usize)]);
    }
    Ok(out.canonicalize())
}

/// Local slots: interior nodes referenced more than once whose reuse saves at
/// least two cost units, `(paths - 1) * complexity >= 2`. Returned in
/// evaluation order.
pub fn local_decompose(t: &Template, costs: &CostTable) -> Vec<u32> {
    let n = t.nodes.len();
    let mut in_edges = vec![0u64; n];
    let mut paths = vec![0u64; n];
    for &r in &t.roots {
        in_edges[r as usize] += 1;
        paths[r as usize] += 1;
    }
    for i in (0..n).rev() {
        if let TNode::Op { children, .. } = &t.nodes[i] {
            for &c in children {
                in_edges[c as usize] += 1;
                paths[c as usize] = paths[c as usize].saturating_add(paths[i]);
            }
        }
    }
    let compl = t.complexities(costs);
    (0..n)
        .filter(|&i| {
            matches!(t.nodes[i], TNode::Op { .. }) && in_edges[i] >= 2 && (paths[i] - 1).saturating_mul(compl[i]) >= 2
        })
        .map(|i| i as u32)
        .collect()
}
