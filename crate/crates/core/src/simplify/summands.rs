//! Summand elimination: expand a sum into coefficient-weighted terms, combine
//! terms with equal algebraic hash and rebuild it as `positive - negative`.

use crate::expr::{ExprArena, ExprRef, OpKind};
use std::collections::HashMap;

#[derive(Default)]
struct Terms {
    constant: f64,
    order: Vec<u64>,
    terms: HashMap<u64, (ExprRef, f64)>,
}

impl Terms {
    fn push(&mut self, t: ExprRef, coef: f64, key: u64) {
        match self.terms.get_mut(&key) {
            Some((_, c)) => *c += coef,
            None => {
                self.order.push(key);
                self.terms.insert(key, (t, coef));
            }
        }
    }

    fn expand(&mut self, arena: &mut ExprArena, e: ExprRef, coef: f64) {
        match arena.op(e) {
            OpKind::Add => {
                for c in arena.children(e).to_vec() {
                    self.expand(arena, c, coef);
                }
            }
            OpKind::Sub => {
                let k = arena.children(e).to_vec();
                self.expand(arena, k[0], coef);
                self.expand(arena, k[1], -coef);
            }
            OpKind::Neg => {
                let c = arena.children(e)[0];
                self.expand(arena, c, -coef);
            }
            OpKind::Const => self.constant += coef * arena.const_value(e).unwrap(),
            OpKind::Mul => {
                let kids = arena.children(e).to_vec();
                let k: f64 = kids.iter().filter_map(|&c| arena.const_value(c)).product();
                let rest: Vec<ExprRef> = kids
                    .iter()
                    .copied()
                    .filter(|&c| arena.const_value(c).is_none())
                    .collect();
                if rest.len() == kids.len() {
                    self.push(e, coef, arena.alg_hash(e));
                } else if rest.len() == 1 && matches!(arena.op(rest[0]), OpKind::Add | OpKind::Sub | OpKind::Neg) {
                    self.expand(arena, rest[0], coef * k);
                } else {
                    let t = arena.product(&rest);
                    self.push(t, coef * k, arena.alg_hash(t));
                }
            }
            _ => self.push(e, coef, arena.alg_hash(e)),
        }
    }
}

fn scaled(arena: &mut ExprArena, t: ExprRef, c: f64) -> ExprRef {
    if c == 1.0 {
        t
    } else {
        let k = arena.constant(c).expect("finite coefficient");
        arena.mul(k, t)
    }
}

pub fn eliminate_summands(arena: &mut ExprArena, e: ExprRef) -> Option<ExprRef> {
    if !matches!(arena.op(e), OpKind::Add | OpKind::Sub) {
        return None;
    }
    let mut t = Terms::default();
    t.expand(arena, e, 1.0);
    if !t.constant.is_finite() || t.terms.values().any(|(_, c)| !c.is_finite()) {
        return None;
    }
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for key in &t.order {
        let (term, c) = t.terms[key];
        if c > 0.0 {
            pos.push(scaled(arena, term, c));
        } else if c < 0.0 {
            neg.push(scaled(arena, term, -c));
        }
    }
    if t.constant > 0.0 {
        pos.push(arena.constant(t.constant).ok()?);
    } else if t.constant < 0.0 {
        neg.push(arena.constant(-t.constant).ok()?);
    }
    let r = match (pos.is_empty(), neg.is_empty()) {
        (true, true) => arena.int(0),
        (false, true) => arena.sum(&pos),
        (true, false) => {
            let n = arena.sum(&neg);
            arena.neg(n)
        }
        (false, false) => {
            let p = arena.sum(&pos);
            let n = arena.sum(&neg);
            arena.sub(p, n)
        }
    };
    (r != e).then_some(r)
}
