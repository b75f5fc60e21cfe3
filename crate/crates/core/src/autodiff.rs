//! Reverse-mode symbolic differentiation inside the expression arena.
//!
//! Adjoints are propagated over the DAG in reverse topological order. Every
//! node's incoming adjoint contributions are collected first and summed once,
//! so the resulting expressions do not depend on traversal order and shared
//! primal subexpressions are reused by the derivative expressions.

use crate::expr::{post_order, ExprArena, ExprRef, OpKind};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("differentiation needs at least one variable")]
    EmptyWrt,
    #[error("expression reference {0} is not in this arena")]
    InvalidRef(ExprRef),
}

/// Sparse gradient: variables the expression does not depend on are absent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Gradient {
    pub entries: BTreeMap<u32, ExprRef>,
}

impl Gradient {
    pub fn get(&self, var: u32) -> Option<ExprRef> {
        self.entries.get(&var).copied()
    }
}

/// Upper-triangular Hessian; `get(i, j)` and `get(j, i)` return the same node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hessian {
    pub entries: BTreeMap<(u32, u32), ExprRef>,
}

impl Hessian {
    pub fn get(&self, i: u32, j: u32) -> Option<ExprRef> {
        self.entries.get(&(i.min(j), i.max(j))).copied()
    }
}

fn is_one(arena: &ExprArena, e: ExprRef) -> bool {
    arena.const_value(e) == Some(1.0)
}

/// `y * x`, dropping a unit adjoint.
fn scaled(arena: &mut ExprArena, y: ExprRef, x: ExprRef) -> ExprRef {
    if is_one(arena, y) {
        x
    } else {
        arena.mul(y, x)
    }
}

pub fn gradient(arena: &mut ExprArena, root: ExprRef, wrt: &[u32]) -> Result<Gradient, DiffError> {
    if wrt.is_empty() {
        return Err(DiffError::EmptyWrt);
    }
    if !arena.contains(root) {
        return Err(DiffError::InvalidRef(root));
    }
    let order = post_order(arena, &[root]);
    let mut slot = vec![usize::MAX; arena.len()];
    for (i, e) in order.iter().enumerate() {
        slot[e.index()] = i;
    }
    let wanted = |v: u32| wrt.contains(&v);

    // Forward pass: which nodes depend on a requested variable.
    let mut active = vec![false; order.len()];
    for (i, &e) in order.iter().enumerate() {
        active[i] = match arena.var_id(e) {
            Some(v) => wanted(v),
            None => arena.children(e).iter().any(|c| active[slot[c.index()]]),
        };
    }

    let mut grad = Gradient::default();
    if !active[slot[root.index()]] {
        return Ok(grad);
    }
    let mut contrib: Vec<Vec<ExprRef>> = vec![Vec::new(); order.len()];
    contrib[slot[root.index()]].push(arena.int(1));

    for i in (0..order.len()).rev() {
        if contrib[i].is_empty() || !active[i] {
            continue;
        }
        let e = order[i];
        let y = arena.sum(&contrib[i]);
        let op = arena.op(e);
        let kids: Vec<ExprRef> = arena.children(e).to_vec();
        let push = |c: ExprRef, adj: ExprRef, contrib: &mut Vec<Vec<ExprRef>>| {
            contrib[slot[c.index()]].push(adj);
        };
        let act = |c: ExprRef| active[slot[c.index()]];
        match op {
            OpKind::Var => {
                grad.entries.insert(arena.var_id(e).expect("var"), y);
            }
            OpKind::Const => {}
            OpKind::Add => {
                for &c in &kids {
                    if act(c) {
                        push(c, y, &mut contrib);
                    }
                }
            }
            OpKind::Sub => {
                if act(kids[0]) {
                    push(kids[0], y, &mut contrib);
                }
                if act(kids[1]) {
                    let n = arena.neg(y);
                    push(kids[1], n, &mut contrib);
                }
            }
            OpKind::Neg => {
                let n = arena.neg(y);
                push(kids[0], n, &mut contrib);
            }
            OpKind::Mul => {
                for (k, &c) in kids.iter().enumerate() {
                    if !act(c) {
                        continue;
                    }
                    let others: Vec<ExprRef> = kids
                        .iter()
                        .enumerate()
                        .filter(|&(m, _)| m != k)
                        .map(|(_, &o)| o)
                        .collect();
                    let rest = arena.product(&others);
                    let adj = scaled(arena, y, rest);
                    push(c, adj, &mut contrib);
                }
            }
            OpKind::Div => {
                let (a, b) = (kids[0], kids[1]);
                if act(a) {
                    let adj = arena.div(y, b);
                    push(a, adj, &mut contrib);
                }
                if act(b) {
                    let na = arena.neg(a);
                    let bb = arena.mul(b, b);
                    let q = arena.div(na, bb);
                    let adj = arena.mul(q, y);
                    push(b, adj, &mut contrib);
                }
            }
            OpKind::Sqrt => {
                let two = arena.int(2);
                let d = arena.mul(two, e);
                let adj = arena.div(y, d);
                push(kids[0], adj, &mut contrib);
            }
            OpKind::Sin => {
                let c = arena.unary(OpKind::Cos, kids[0]).expect("unary");
                let adj = scaled(arena, y, c);
                push(kids[0], adj, &mut contrib);
            }
            OpKind::Cos => {
                let s = arena.unary(OpKind::Sin, kids[0]).expect("unary");
                let ns = arena.neg(s);
                let adj = scaled(arena, y, ns);
                push(kids[0], adj, &mut contrib);
            }
            OpKind::Exp => {
                let adj = scaled(arena, y, e);
                push(kids[0], adj, &mut contrib);
            }
            OpKind::Log => {
                let adj = arena.div(y, kids[0]);
                push(kids[0], adj, &mut contrib);
            }
            OpKind::Pow => {
                let k = arena.const_value(kids[1]).expect("validated exponent") as u32;
                let lower = arena.powi(kids[0], k - 1).expect("exponent >= 1");
                let kc = arena.int(k as i32);
                let d = arena.mul(kc, lower);
                let adj = scaled(arena, y, d);
                push(kids[0], adj, &mut contrib);
            }
            OpKind::Select => {
                let zero = arena.int(0);
                if act(kids[1]) {
                    let adj = arena.select(kids[0], y, zero);
                    push(kids[1], adj, &mut contrib);
                }
                if act(kids[2]) {
                    let adj = arena.select(kids[0], zero, y);
                    push(kids[2], adj, &mut contrib);
                }
            }
        }
    }
    Ok(grad)
}

/// Gradient of each gradient entry; only `i <= j` (in `wrt` order of variable
/// id) is materialized.
pub fn hessian(arena: &mut ExprArena, root: ExprRef, wrt: &[u32]) -> Result<Hessian, DiffError> {
    let g = gradient(arena, root, wrt)?;
    let mut h = Hessian::default();
    for (&i, &gi) in &g.entries {
        let later: Vec<u32> = wrt.iter().copied().filter(|&j| j >= i).collect();
        let gg = gradient(arena, gi, &later)?;
        for (&j, &e) in &gg.entries {
            h.entries.insert((i, j), e);
        }
    }
    Ok(h)
}
