use super::{post_order, ExprArena, ExprError, ExprRef, OpKind};
use std::collections::{BTreeMap, HashMap};

/// Source of numeric values for variables.
pub trait Bindings {
    fn get(&self, var_id: u32) -> Option<f64>;
}

impl Bindings for [f64] {
    fn get(&self, var_id: u32) -> Option<f64> {
        <[f64]>::get(self, var_id as usize).copied()
    }
}

impl Bindings for Vec<f64> {
    fn get(&self, var_id: u32) -> Option<f64> {
        self.as_slice().get(var_id as usize).copied()
    }
}

impl Bindings for HashMap<u32, f64> {
    fn get(&self, var_id: u32) -> Option<f64> {
        HashMap::get(self, &var_id).copied()
    }
}

impl Bindings for BTreeMap<u32, f64> {
    fn get(&self, var_id: u32) -> Option<f64> {
        BTreeMap::get(self, &var_id).copied()
    }
}

/// Integer power by repeated multiplication, left to right. Non-integer or
/// out-of-range exponents fall back to `powf`. The emitted C helper mirrors
/// this exactly.
#[inline]
pub fn powi(base: f64, exponent: f64) -> f64 {
    let k = exponent as i64;
    if k as f64 == exponent && (1..=64).contains(&k) {
        let mut r = base;
        for _ in 1..k {
            r *= base;
        }
        r
    } else {
        base.powf(exponent)
    }
}

/// Numeric semantics of one interior operation. N-ary sums and products fold
/// left to right in child order.
#[inline]
pub fn apply_op(op: OpKind, args: &[f64]) -> f64 {
    match op {
        OpKind::Add => {
            let mut acc = args[0];
            for &v in &args[1..] {
                acc += v;
            }
            acc
        }
        OpKind::Mul => {
            let mut acc = args[0];
            for &v in &args[1..] {
                acc *= v;
            }
            acc
        }
        OpKind::Sub => args[0] - args[1],
        OpKind::Div => args[0] / args[1],
        OpKind::Neg => -args[0],
        OpKind::Sqrt => args[0].sqrt(),
        OpKind::Sin => args[0].sin(),
        OpKind::Cos => args[0].cos(),
        OpKind::Exp => args[0].exp(),
        OpKind::Log => args[0].ln(),
        OpKind::Pow => powi(args[0], args[1]),
        OpKind::Select => {
            if args[0] < 0.0 {
                args[1]
            } else {
                args[2]
            }
        }
        OpKind::Var | OpKind::Const => unreachable!("leaves carry their own values"),
    }
}

/// Memoized evaluator: the unique-node order is computed once and reused for
/// every set of bindings.
#[derive(Clone, Debug)]
pub struct Evaluator {
    roots: Vec<ExprRef>,
    order: Vec<ExprRef>,
    slot: Vec<u32>,
    values: Vec<f64>,
    visits: usize,
}

impl Evaluator {
    pub fn new(arena: &ExprArena, roots: &[ExprRef]) -> Self {
        let order = post_order(arena, roots);
        let mut slot = vec![u32::MAX; arena.len()];
        for (i, e) in order.iter().enumerate() {
            slot[e.index()] = i as u32;
        }
        Evaluator {
            roots: roots.to_vec(),
            values: vec![0.0; order.len()],
            order,
            slot,
            visits: 0,
        }
    }

    /// Number of node evaluations performed by the last run.
    pub fn visits(&self) -> usize {
        self.visits
    }

    pub fn node_count(&self) -> usize {
        self.order.len()
    }

    pub fn run<B: Bindings + ?Sized>(&mut self, arena: &ExprArena, bindings: &B) -> Result<Vec<f64>, ExprError> {
        self.visits = 0;
        let mut args: Vec<f64> = Vec::with_capacity(8);
        for i in 0..self.order.len() {
            let e = self.order[i];
            let node = arena.node(e);
            let v = match node.op() {
                OpKind::Var => {
                    let id = node.var_id().expect("var node");
                    bindings.get(id).ok_or(ExprError::MissingBinding(id))?
                }
                OpKind::Const => node.const_value().expect("const node"),
                op => {
                    args.clear();
                    args.extend(
                        arena
                            .children(e)
                            .iter()
                            .map(|c| self.values[self.slot[c.index()] as usize]),
                    );
                    apply_op(op, &args)
                }
            };
            self.values[i] = v;
            self.visits += 1;
        }
        Ok(self
            .roots
            .iter()
            .map(|r| self.values[self.slot[r.index()] as usize])
            .collect())
    }
}

/// Evaluate `roots` once, visiting every distinct node exactly once.
pub fn eval_numeric<B: Bindings + ?Sized>(
    arena: &ExprArena,
    roots: &[ExprRef],
    bindings: &B,
) -> Result<Vec<f64>, ExprError> {
    Evaluator::new(arena, roots).run(arena, bindings)
}

/// Plain recursive tree walk without memoization. Shared subtrees are
/// re-evaluated on every path; used as the naive baseline.
pub fn eval_tree<B: Bindings + ?Sized>(arena: &ExprArena, e: ExprRef, bindings: &B) -> Result<f64, ExprError> {
    let node = arena.node(e);
    match node.op() {
        OpKind::Var => {
            let id = node.var_id().expect("var node");
            bindings.get(id).ok_or(ExprError::MissingBinding(id))
        }
        OpKind::Const => Ok(node.const_value().expect("const node")),
        op => {
            let kids = arena.children(e);
            let mut args = smallvec::SmallVec::<[f64; 4]>::with_capacity(kids.len());
            for &c in kids {
                args.push(eval_tree(arena, c, bindings)?);
            }
            Ok(apply_op(op, &args))
        }
    }
}
