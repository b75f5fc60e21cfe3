//! Hash-consed expression DAG.
//!
//! Nodes live in an append-only [`ExprArena`] and are addressed by
//! [`ExprRef`] indices. Every node caches a structural hash (equal for trees
//! that differ only in leaf payloads), an algebraic hash (equal for many
//! algebraically equivalent expressions) and a complexity in cost units.

mod collisions;
mod eval;
pub mod hash;
mod op;
mod traverse;

pub use collisions::{check_hash_collisions, check_hash_collisions_masked, CollisionReport};
pub use eval::{apply_op, eval_numeric, eval_tree, powi, Bindings, Evaluator};
pub use op::{Arity, CostTable, OpKind};
pub use traverse::{post_order, traverse, Order, Visitor};

use hashbrown::HashTable;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("constant {0} is not finite")]
    NonFinite(f64),
    #[error("{op} expects {expected} children, got {got}")]
    Arity { op: OpKind, expected: Arity, got: usize },
    #[error("{0} is a leaf operation; use the var/constant constructors")]
    LeafApply(OpKind),
    #[error("expression reference {0} is not in this arena")]
    InvalidRef(u32),
    #[error("pow exponent must be a constant integer >= 2")]
    PowExponent,
    #[error("no binding for variable {0}")]
    MissingBinding(u32),
}

/// Index of a node in an [`ExprArena`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExprRef(u32);

impl ExprRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(index: usize) -> ExprRef {
        ExprRef(u32::try_from(index).expect("arena exceeds u32 indices"))
    }
}

impl std::fmt::Display for ExprRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// One immutable DAG node. Children are stored in the arena's shared pool.
#[derive(Clone, Debug)]
pub struct ExprNode {
    op: OpKind,
    /// Variable id for `Var`, IEEE-754 bits for `Const`, zero otherwise.
    payload: u64,
    child_start: u32,
    child_len: u32,
    struct_hash: u64,
    alg_hash: u64,
    complexity: u64,
}

impl ExprNode {
    pub fn op(&self) -> OpKind {
        self.op
    }

    pub fn var_id(&self) -> Option<u32> {
        (self.op == OpKind::Var).then_some(self.payload as u32)
    }

    pub fn const_value(&self) -> Option<f64> {
        (self.op == OpKind::Const).then(|| f64::from_bits(self.payload))
    }

    pub fn struct_hash(&self) -> u64 {
        self.struct_hash
    }

    pub fn alg_hash(&self) -> u64 {
        self.alg_hash
    }

    pub fn complexity(&self) -> u64 {
        self.complexity
    }

    pub fn arity(&self) -> usize {
        self.child_len as usize
    }
}

/// Node-count report used by the CLI statistics.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ArenaStats {
    pub nodes: usize,
    pub variables: usize,
    pub constants: usize,
    pub child_links: usize,
    pub per_op: BTreeMap<String, usize>,
    pub estimated_bytes: usize,
}

/// Append-only, hash-consed node store.
#[derive(Clone)]
pub struct ExprArena {
    nodes: Vec<ExprNode>,
    pool: Vec<ExprRef>,
    cons: HashTable<ExprRef>,
    alg_index: Option<HashMap<u64, ExprRef>>,
    var_count: u32,
    costs: CostTable,
}

impl Default for ExprArena {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ExprArena {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExprArena")
            .field("nodes", &self.nodes.len())
            .field("var_count", &self.var_count)
            .finish()
    }
}

fn cons_key(op: OpKind, payload: u64, children: &[ExprRef]) -> u64 {
    let mut h = hash::combine(op.tag() as u64, payload);
    for c in children {
        h = hash::combine(c.0 as u64, h);
    }
    h
}

impl ExprArena {
    pub fn new() -> Self {
        Self::with_costs(CostTable::default())
    }

    pub fn with_costs(costs: CostTable) -> Self {
        ExprArena {
            nodes: Vec::new(),
            pool: Vec::new(),
            cons: HashTable::new(),
            alg_index: None,
            var_count: 0,
            costs,
        }
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// One past the largest variable id created so far.
    pub fn var_count(&self) -> u32 {
        self.var_count
    }

    pub fn node(&self, e: ExprRef) -> &ExprNode {
        &self.nodes[e.index()]
    }

    pub fn contains(&self, e: ExprRef) -> bool {
        e.index() < self.nodes.len()
    }

    pub fn op(&self, e: ExprRef) -> OpKind {
        self.nodes[e.index()].op
    }

    pub fn children(&self, e: ExprRef) -> &[ExprRef] {
        let n = &self.nodes[e.index()];
        &self.pool[n.child_start as usize..(n.child_start + n.child_len) as usize]
    }

    pub fn struct_hash(&self, e: ExprRef) -> u64 {
        self.nodes[e.index()].struct_hash
    }

    pub fn alg_hash(&self, e: ExprRef) -> u64 {
        self.nodes[e.index()].alg_hash
    }

    pub fn complexity(&self, e: ExprRef) -> u64 {
        self.nodes[e.index()].complexity
    }

    pub fn var_id(&self, e: ExprRef) -> Option<u32> {
        self.nodes[e.index()].var_id()
    }

    pub fn const_value(&self, e: ExprRef) -> Option<f64> {
        self.nodes[e.index()].const_value()
    }

    pub fn is_leaf(&self, e: ExprRef) -> bool {
        self.op(e).is_leaf()
    }

    pub fn refs(&self) -> impl Iterator<Item = ExprRef> {
        (0..self.nodes.len()).map(ExprRef::from_index)
    }

    fn lookup(&self, key: u64, op: OpKind, payload: u64, children: &[ExprRef]) -> Option<ExprRef> {
        self.cons
            .find(key, |&r| {
                let n = &self.nodes[r.index()];
                n.op == op
                    && n.payload == payload
                    && n.child_len as usize == children.len()
                    && self.pool[n.child_start as usize..(n.child_start + n.child_len) as usize] == *children
            })
            .copied()
    }

    fn insert(
        &mut self,
        op: OpKind,
        payload: u64,
        children: &[ExprRef],
        struct_hash: u64,
        alg_hash: u64,
        complexity: u64,
    ) -> ExprRef {
        let key = cons_key(op, payload, children);
        if let Some(found) = self.lookup(key, op, payload, children) {
            return found;
        }
        let r = ExprRef::from_index(self.nodes.len());
        let child_start = u32::try_from(self.pool.len()).expect("child pool exceeds u32");
        self.pool.extend_from_slice(children);
        self.nodes.push(ExprNode {
            op,
            payload,
            child_start,
            child_len: children.len() as u32,
            struct_hash,
            alg_hash,
            complexity,
        });
        let nodes = &self.nodes;
        let pool = &self.pool;
        self.cons.insert_unique(key, r, |&x| {
            let n = &nodes[x.index()];
            cons_key(
                n.op,
                n.payload,
                &pool[n.child_start as usize..(n.child_start + n.child_len) as usize],
            )
        });
        if let Some(index) = self.alg_index.as_mut() {
            index.entry(alg_hash).or_insert(r);
        }
        r
    }

    /// Variable leaf. Repeated calls with the same id return the same node.
    pub fn var(&mut self, var_id: u32) -> ExprRef {
        self.var_count = self.var_count.max(var_id.saturating_add(1));
        self.insert(
            OpKind::Var,
            var_id as u64,
            &[],
            hash::variable_struct_hash(),
            hash::variable_alg_hash(var_id),
            0,
        )
    }

    /// Constant leaf; rejects NaN and infinities.
    pub fn constant(&mut self, value: f64) -> Result<ExprRef, ExprError> {
        if !value.is_finite() {
            return Err(ExprError::NonFinite(value));
        }
        Ok(self.insert(
            OpKind::Const,
            value.to_bits(),
            &[],
            hash::constant_struct_hash(),
            hash::constant_alg_hash(value),
            0,
        ))
    }

    /// Small integer constant (always finite).
    pub fn int(&mut self, value: i32) -> ExprRef {
        self.constant(value as f64).expect("integers are finite")
    }

    /// Build (or reuse) an interior node. Commutative children are sorted by
    /// (struct_hash, alg_hash, index) before lookup.
    pub fn apply(&mut self, op: OpKind, children: &[ExprRef]) -> Result<ExprRef, ExprError> {
        if op.is_leaf() {
            return Err(ExprError::LeafApply(op));
        }
        if !op.arity().accepts(children.len()) {
            return Err(ExprError::Arity {
                op,
                expected: op.arity(),
                got: children.len(),
            });
        }
        if let Some(bad) = children.iter().find(|c| !self.contains(**c)) {
            return Err(ExprError::InvalidRef(bad.0));
        }
        if op == OpKind::Pow {
            match self.const_value(children[1]) {
                Some(k) if k.fract() == 0.0 && (2.0..=64.0).contains(&k) => {}
                _ => return Err(ExprError::PowExponent),
            }
        }
        let mut sorted;
        let children = if op.is_commutative() {
            sorted = children.to_vec();
            sorted.sort_by_key(|&c| {
                let n = &self.nodes[c.index()];
                (n.struct_hash, n.alg_hash, c.0)
            });
            &sorted[..]
        } else {
            children
        };
        let struct_hash = if op == OpKind::Pow {
            // The exponent is part of the operation, so x^2 and x^3 never share
            // a kernel template.
            let k = self.nodes[children[1].index()].payload;
            hash::combine(
                hash::interior_struct_hash(op, children.iter().map(|c| self.struct_hash(*c))),
                k,
            )
        } else {
            hash::interior_struct_hash(op, children.iter().map(|c| self.struct_hash(*c)))
        };
        let child_alg: smallvec::SmallVec<[u64; 4]> = children.iter().map(|c| self.alg_hash(*c)).collect();
        let alg_hash = hash::interior_alg_hash(op, &child_alg);
        let complexity = children
            .iter()
            .fold(self.costs.node_cost(op, children.len()), |acc, c| {
                acc.saturating_add(self.complexity(*c))
            });
        Ok(self.insert(op, 0, children, struct_hash, alg_hash, complexity))
    }

    fn apply_fixed(&mut self, op: OpKind, children: &[ExprRef]) -> ExprRef {
        self.apply(op, children)
            .unwrap_or_else(|e| panic!("fixed-arity constructor failed: {e}"))
    }

    pub fn add(&mut self, a: ExprRef, b: ExprRef) -> ExprRef {
        self.apply_fixed(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: ExprRef, b: ExprRef) -> ExprRef {
        self.apply_fixed(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: ExprRef, b: ExprRef) -> ExprRef {
        self.apply_fixed(OpKind::Mul, &[a, b])
    }

    pub fn div(&mut self, a: ExprRef, b: ExprRef) -> ExprRef {
        self.apply_fixed(OpKind::Div, &[a, b])
    }

    pub fn neg(&mut self, a: ExprRef) -> ExprRef {
        self.apply_fixed(OpKind::Neg, &[a])
    }

    pub fn unary(&mut self, op: OpKind, a: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(op, &[a])
    }

    /// `cond < 0 ? if_neg : if_nonneg`.
    pub fn select(&mut self, cond: ExprRef, if_neg: ExprRef, if_nonneg: ExprRef) -> ExprRef {
        self.apply_fixed(OpKind::Select, &[cond, if_neg, if_nonneg])
    }

    /// Integer power. `k = 0` gives the constant one and `k = 1` the base.
    pub fn powi(&mut self, base: ExprRef, k: u32) -> Result<ExprRef, ExprError> {
        match k {
            0 => Ok(self.int(1)),
            1 => Ok(base),
            2..=64 => {
                let e = self.int(k as i32);
                self.apply(OpKind::Pow, &[base, e])
            }
            _ => Err(ExprError::PowExponent),
        }
    }

    /// Sum of any number of terms: zero terms give `0`, one term is returned
    /// unchanged.
    pub fn sum(&mut self, terms: &[ExprRef]) -> ExprRef {
        match terms.len() {
            0 => self.int(0),
            1 => terms[0],
            _ => self.apply_fixed(OpKind::Add, terms),
        }
    }

    /// Product of any number of factors: zero factors give `1`.
    pub fn product(&mut self, factors: &[ExprRef]) -> ExprRef {
        match factors.len() {
            0 => self.int(1),
            1 => factors[0],
            _ => self.apply_fixed(OpKind::Mul, factors),
        }
    }

    /// Maintain an alg_hash → first node index alongside the cons map.
    pub fn enable_alg_index(&mut self) {
        if self.alg_index.is_none() {
            let mut index = HashMap::with_capacity(self.nodes.len());
            for (i, n) in self.nodes.iter().enumerate() {
                index.entry(n.alg_hash).or_insert(ExprRef::from_index(i));
            }
            self.alg_index = Some(index);
        }
    }

    pub fn lookup_alg(&self, alg_hash: u64) -> Option<ExprRef> {
        self.alg_index.as_ref()?.get(&alg_hash).copied()
    }

    pub fn stats(&self) -> ArenaStats {
        let mut per_op = BTreeMap::new();
        let (mut variables, mut constants) = (0, 0);
        for n in &self.nodes {
            *per_op.entry(n.op.name().to_string()).or_insert(0) += 1;
            match n.op {
                OpKind::Var => variables += 1,
                OpKind::Const => constants += 1,
                _ => {}
            }
        }
        let estimated_bytes = self.nodes.capacity() * std::mem::size_of::<ExprNode>()
            + self.pool.capacity() * std::mem::size_of::<ExprRef>()
            + self.cons.capacity() * (std::mem::size_of::<ExprRef>() + 1)
            + self
                .alg_index
                .as_ref()
                .map_or(0, |m| m.capacity() * (8 + std::mem::size_of::<ExprRef>() + 1));
        ArenaStats {
            nodes: self.nodes.len(),
            variables,
            constants,
            child_links: self.pool.len(),
            per_op,
            estimated_bytes,
        }
    }

    /// Infix rendering for diagnostics and golden tests. Variables print as
    /// `v<id>` unless `names` supplies a name.
    pub fn render(&self, e: ExprRef, names: &dyn Fn(u32) -> Option<String>) -> String {
        let mut out = String::new();
        self.render_into(e, names, &mut out);
        out
    }

    fn render_into(&self, e: ExprRef, names: &dyn Fn(u32) -> Option<String>, out: &mut String) {
        let n = self.node(e);
        let kids = self.children(e);
        let sep = |op: OpKind| match op {
            OpKind::Add => "+",
            OpKind::Sub => "-",
            OpKind::Mul => "*",
            OpKind::Div => "/",
            _ => ",",
        };
        match n.op {
            OpKind::Var => {
                let id = n.payload as u32;
                out.push_str(&names(id).unwrap_or_else(|| format!("v{id}")));
            }
            OpKind::Const => out.push_str(&format_const(f64::from_bits(n.payload))),
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
                out.push('(');
                for (i, c) in kids.iter().enumerate() {
                    if i > 0 {
                        out.push_str(sep(n.op));
                    }
                    self.render_into(*c, names, out);
                }
                out.push(')');
            }
            OpKind::Neg => {
                out.push_str("(-");
                self.render_into(kids[0], names, out);
                out.push(')');
            }
            _ => {
                out.push_str(n.op.name());
                out.push('(');
                for (i, c) in kids.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    self.render_into(*c, names, out);
                }
                out.push(')');
            }
        }
    }
}

pub(crate) fn format_const(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variables_are_consed() {
        let mut a = ExprArena::new();
        let x = a.var(0);
        assert_eq!(x, a.var(0));
        let y = a.var(7);
        assert_eq!(a.struct_hash(x), a.struct_hash(y));
        assert_ne!(a.alg_hash(x), a.alg_hash(y));
        assert_eq!(a.var_count(), 8);
    }

    #[test]
    fn constants() {
        let mut a = ExprArena::new();
        let two = a.constant(2.0).unwrap();
        assert_eq!(a.alg_hash(two), 2);
        assert_eq!(two, a.int(2));
        let pi = a.constant(3.1).unwrap();
        assert_eq!(a.struct_hash(two), a.struct_hash(pi));
        assert!(matches!(a.constant(f64::NAN), Err(ExprError::NonFinite(_))));
        assert!(a.constant(f64::INFINITY).is_err());
    }

    #[test]
    fn commutative_children_canonicalized() {
        let mut a = ExprArena::new();
        let (x, y, z) = (a.var(0), a.var(1), a.var(2));
        let s1 = a.apply(OpKind::Add, &[x, y, z]).unwrap();
        let s2 = a.apply(OpKind::Add, &[z, x, y]).unwrap();
        assert_eq!(s1, s2);
        let d1 = a.sub(x, y);
        let d2 = a.sub(y, x);
        assert_ne!(d1, d2);
    }

    #[test]
    fn arity_errors() {
        let mut a = ExprArena::new();
        let x = a.var(0);
        assert!(matches!(a.apply(OpKind::Add, &[x]), Err(ExprError::Arity { .. })));
        assert!(a.apply(OpKind::Sqrt, &[x, x]).is_err());
        assert!(a.apply(OpKind::Var, &[]).is_err());
        assert!(a.apply(OpKind::Neg, &[ExprRef(99)]).is_err());
        let half = a.constant(0.5).unwrap();
        assert!(matches!(a.apply(OpKind::Pow, &[x, half]), Err(ExprError::PowExponent)));
        assert!(a.apply(OpKind::Pow, &[x, x]).is_err());
    }

    #[test]
    fn shared_subexpression_stored_once() {
        let mut a = ExprArena::new();
        let (va, vb) = (a.var(0), a.var(1));
        let s = a.add(va, vb);
        let x = a.mul(va, s);
        let h = a.mul(x, x);
        assert_eq!(a.len(), 5);
        assert_eq!(a.children(h), &[x, x]);
    }

    #[test]
    fn complexity_defaults() {
        let mut a = ExprArena::new();
        let (va, vb, vc) = (a.var(0), a.var(1), a.var(2));
        assert_eq!(a.complexity(va), 0);
        let ab = a.mul(va, vb);
        let e = a.add(ab, vc);
        assert_eq!(a.complexity(e), 2);
        let aa = a.mul(va, va);
        let bb = a.mul(vb, vb);
        let s = a.add(aa, bb);
        let r = a.unary(OpKind::Sqrt, s).unwrap();
        assert_eq!(a.complexity(r), 11);
    }

    #[test]
    fn algebraic_hash_of_expanded_product() {
        // 2(x+y)(z+w) against 2xz + (2z+2w)y + xw + wx
        let mut a = ExprArena::new();
        let (x, y, z, w) = (a.var(0), a.var(1), a.var(2), a.var(3));
        let two = a.int(2);
        let xy = a.add(x, y);
        let zw = a.add(z, w);
        let lhs = a.product(&[two, xy, zw]);
        let t1 = a.product(&[two, x, z]);
        let tz = a.mul(two, z);
        let tw = a.mul(two, w);
        let s = a.add(tz, tw);
        let t2 = a.mul(s, y);
        let t3 = a.mul(x, w);
        let t4 = a.mul(w, x);
        let rhs = a.sum(&[t1, t2, t3, t4]);
        assert_eq!(a.alg_hash(lhs), a.alg_hash(rhs));
        assert_ne!(a.struct_hash(lhs), a.struct_hash(rhs));
    }

    #[test]
    fn pow_exponent_enters_structure() {
        let mut a = ExprArena::new();
        let x = a.var(0);
        let p2 = a.powi(x, 2).unwrap();
        let p3 = a.powi(x, 3).unwrap();
        assert_ne!(a.struct_hash(p2), a.struct_hash(p3));
        assert_eq!(a.powi(x, 1).unwrap(), x);
    }

    #[test]
    fn select_keeps_identical_branches() {
        let mut a = ExprArena::new();
        let (c, x) = (a.var(0), a.var(1));
        let s = a.select(c, x, x);
        assert_eq!(a.op(s), OpKind::Select);
    }

    #[test]
    fn alg_index_lookup() {
        let mut a = ExprArena::new();
        let x = a.var(0);
        a.enable_alg_index();
        let y = a.var(1);
        assert_eq!(a.lookup_alg(a.alg_hash(x)), Some(x));
        assert_eq!(a.lookup_alg(a.alg_hash(y)), Some(y));
    }

    #[test]
    fn stats_histogram() {
        let mut a = ExprArena::new();
        let x = a.var(0);
        let one = a.int(1);
        a.add(x, one);
        let s = a.stats();
        assert_eq!(s.nodes, 3);
        assert_eq!(s.per_op["add"], 1);
        assert_eq!(s.variables, 1);
        assert_eq!(s.constants, 1);
    }
}
