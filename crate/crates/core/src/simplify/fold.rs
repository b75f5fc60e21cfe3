//! Constant folding, neutral-element removal and hash-predicted constants.

use super::SimplifyConfig;
use crate::expr::{apply_op, eval_numeric, hash, post_order, ExprArena, ExprRef, OpKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONFIRM_POINTS: usize = 3;
const CONFIRM_REL: f64 = 1e-9;

fn removes_sum(op: OpKind) -> bool {
    matches!(op, OpKind::Add | OpKind::Sub)
}

fn contains_op(arena: &ExprArena, e: ExprRef, pred: impl Fn(OpKind) -> bool) -> bool {
    post_order(arena, &[e]).into_iter().any(|n| pred(arena.op(n)))
}

pub fn fold_constants(arena: &mut ExprArena, e: ExprRef, cfg: &SimplifyConfig) -> Option<ExprRef> {
    let op = arena.op(e);
    if op.is_leaf() {
        return None;
    }
    let kids = arena.children(e).to_vec();
    let sums_ok = cfg.sums_enabled || !removes_sum(op);

    // All-constant operands.
    let consts: Vec<Option<f64>> = kids.iter().map(|&c| arena.const_value(c)).collect();
    if sums_ok && consts.iter().all(Option::is_some) {
        let args: Vec<f64> = consts.iter().map(|c| c.unwrap()).collect();
        let v = apply_op(op, &args);
        if let Ok(c) = arena.constant(v) {
            return Some(c);
        }
    }

    match op {
        OpKind::Select => {
            if let Some(c) = consts[0] {
                return Some(if c < 0.0 { kids[1] } else { kids[2] });
            }
            if kids[1] == kids[2] {
                return Some(kids[1]);
            }
        }
        OpKind::Mul => {
            if let Some(r) = fold_nary(arena, op, &kids, &consts, 1.0, |a, b| a * b) {
                return Some(r);
            }
        }
        OpKind::Add if sums_ok => {
            if let Some(r) = fold_nary(arena, op, &kids, &consts, 0.0, |a, b| a + b) {
                return Some(r);
            }
        }
        OpKind::Sub if sums_ok => {
            if consts[1] == Some(0.0) {
                return Some(kids[0]);
            }
            if consts[0] == Some(0.0) {
                return Some(arena.neg(kids[1]));
            }
        }
        OpKind::Div => {
            if consts[1] == Some(1.0) {
                return Some(kids[0]);
            }
        }
        OpKind::Neg if arena.op(kids[0]) == OpKind::Neg => {
            return Some(arena.children(kids[0])[0]);
        }
        _ => {}
    }

    // The algebraic hash predicts a small integer; confirm numerically.
    let predicted = hash::hash_as_small_integer(arena.alg_hash(e))?;
    if !cfg.sums_enabled && contains_op(arena, e, removes_sum) {
        return None;
    }
    if cfg.strict && contains_op(arena, e, |op| op == OpKind::Div) {
        return None;
    }
    let value = predicted as f64;
    if confirm_constant(arena, e, value, cfg.seed) {
        arena.constant(value).ok()
    } else {
        None
    }
}

/// Combine constant operands of an n-ary sum or product and drop the neutral
/// element. Multiplication by zero is left alone.
fn fold_nary(
    arena: &mut ExprArena,
    op: OpKind,
    kids: &[ExprRef],
    consts: &[Option<f64>],
    neutral: f64,
    f: impl Fn(f64, f64) -> f64,
) -> Option<ExprRef> {
    let n_const = consts.iter().filter(|c| c.is_some()).count();
    if n_const == 0 {
        return None;
    }
    let folded = consts.iter().flatten().fold(neutral, |a, &b| f(a, b));
    if n_const == 1 && folded != neutral {
        return None;
    }
    let mut rest: Vec<ExprRef> = kids
        .iter()
        .zip(consts)
        .filter(|(_, c)| c.is_none())
        .map(|(&k, _)| k)
        .collect();
    if folded != neutral {
        rest.push(arena.constant(folded).ok()?);
    }
    Some(match op {
        OpKind::Mul => arena.product(&rest),
        _ => arena.sum(&rest),
    })
}

/// Evaluate `e` at a few pseudo-random points in [0.5, 2] and check that it
/// equals `value` everywhere.
pub(crate) fn confirm_constant(arena: &ExprArena, e: ExprRef, value: f64, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ arena.struct_hash(e));
    let n = arena.var_count() as usize;
    for _ in 0..CONFIRM_POINTS {
        let point: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let Ok(v) = eval_numeric(arena, &[e], &point) else {
            return false;
        };
        let got = v[0];
        if !got.is_finite() || (got - value).abs() > CONFIRM_REL * value.abs().max(1.0) {
            return false;
        }
    }
    true
}
