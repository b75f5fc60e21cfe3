use super::{apply_op, ExprArena, OpKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub nodes: usize,
    pub hash_bits: u32,
    /// Extra structural classes sharing a struct_hash bucket.
    pub struct_collisions: usize,
    /// Extra numeric classes sharing an alg_hash bucket.
    pub alg_collisions: usize,
}

impl CollisionReport {
    pub fn total(&self) -> usize {
        self.struct_collisions + self.alg_collisions
    }
}

/// Full 64-bit collision check over every node of the arena.
pub fn check_hash_collisions(arena: &ExprArena) -> CollisionReport {
    check_hash_collisions_masked(arena, 64)
}

/// Collision check with hashes truncated to their low `bits` bits. Narrow
/// widths exist to exercise the detector.
///
/// Structural identity is decided by exact bottom-up class interning.
/// Algebraic identity is decided by evaluating every node at three random
/// points in [0.5, 2] and comparing with relative tolerance 1e-9.
pub fn check_hash_collisions_masked(arena: &ExprArena, bits: u32) -> CollisionReport {
    let bits = bits.clamp(1, 64);
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    let n = arena.len();

    // Children always have lower indices than parents, so index order is a
    // valid bottom-up order.
    let mut class = vec![0u32; n];
    let mut interner: HashMap<(u8, u64, Vec<u32>), u32> = HashMap::new();
    for e in arena.refs() {
        let op = arena.op(e);
        let payload = match op {
            OpKind::Pow => arena.const_value(arena.children(e)[1]).map_or(0, f64::to_bits),
            _ => 0,
        };
        let key = (
            op.tag(),
            payload,
            arena.children(e).iter().map(|c| class[c.index()]).collect(),
        );
        let next = interner.len() as u32;
        class[e.index()] = *interner.entry(key).or_insert(next);
    }
    let mut struct_buckets: HashMap<u64, Vec<u32>> = HashMap::new();
    for e in arena.refs() {
        let b = struct_buckets.entry(arena.struct_hash(e) & mask).or_default();
        if !b.contains(&class[e.index()]) {
            b.push(class[e.index()]);
        }
    }
    let struct_collisions = struct_buckets.values().map(|b| b.len() - 1).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let vars = arena.var_count() as usize;
    let points: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..vars).map(|_| rng.gen_range(0.5..2.0)).collect())
        .collect();
    let mut values = vec![[0.0f64; 3]; n];
    let mut args = Vec::new();
    for e in arena.refs() {
        for (p, point) in points.iter().enumerate() {
            values[e.index()][p] = match arena.op(e) {
                OpKind::Var => point[arena.var_id(e).unwrap() as usize],
                OpKind::Const => arena.const_value(e).unwrap(),
                op => {
                    args.clear();
                    args.extend(arena.children(e).iter().map(|c| values[c.index()][p]));
                    apply_op(op, &args)
                }
            };
        }
    }
    let same = |a: &[f64; 3], b: &[f64; 3]| {
        a.iter().zip(b).all(|(&x, &y)| {
            if !x.is_finite() || !y.is_finite() {
                x.is_nan() && y.is_nan() || x == y
            } else {
                (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300)
            }
        })
    };
    let mut alg_buckets: HashMap<u64, Vec<[f64; 3]>> = HashMap::new();
    for e in arena.refs() {
        let v = values[e.index()];
        let b = alg_buckets.entry(arena.alg_hash(e) & mask).or_default();
        if !b.iter().any(|r| same(r, &v)) {
            b.push(v);
        }
    }
    let alg_collisions = alg_buckets.values().map(|b| b.len() - 1).sum();

    CollisionReport {
        nodes: n,
        hash_bits: bits,
        struct_collisions,
        alg_collisions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_arena_has_no_collisions() {
        let r = check_hash_collisions(&ExprArena::new());
        assert_eq!(r.total(), 0);
    }

    #[test]
    fn narrow_hash_collides() {
        let mut a = ExprArena::new();
        let mut prev = a.var(0);
        for i in 1..400 {
            let v = a.var(i);
            prev = if i % 2 == 0 { a.add(prev, v) } else { a.mul(prev, v) };
        }
        assert_eq!(check_hash_collisions(&a).total(), 0);
        let weak = check_hash_collisions_masked(&a, 8);
        assert!(weak.struct_collisions > 0);
        assert!(weak.alg_collisions > 0);
    }
}
