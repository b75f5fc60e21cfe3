//! Fixed 64-bit hashing used for structural and algebraic node identity.
//!
//! Everything here is a pure function of its inputs, so hashes are stable
//! across runs and platforms.

use super::OpKind;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 step: add the golden gamma, then finalize.
#[inline]
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Two-word combiner: `mix(a ^ rotl(b, 31))`.
#[inline]
pub fn combine(a: u64, b: u64) -> u64 {
    mix(a ^ b.rotate_left(31))
}

#[inline]
pub fn op_hash(op: OpKind) -> u64 {
    mix(0x5350_4152_5345_0000 | op.tag() as u64)
}

const VARIABLE_SEED: u64 = 0x7661_7269_6162_6c65;
const CONSTANT_SEED: u64 = 0x636f_6e73_7461_6e74;

/// Structural hash shared by every variable leaf.
pub fn variable_struct_hash() -> u64 {
    combine(op_hash(OpKind::Var), mix(VARIABLE_SEED))
}

/// Structural hash shared by every constant leaf.
pub fn constant_struct_hash() -> u64 {
    combine(op_hash(OpKind::Const), mix(CONSTANT_SEED))
}

/// Structural hash of an interior node from its children's structural hashes.
pub fn interior_struct_hash(op: OpKind, children: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = 0u64;
    for c in children {
        h = combine(c, h);
    }
    combine(op_hash(op), h)
}

/// Algebraic hash of a variable. Forced odd so products of variables stay
/// invertible modulo 2^64, which widens where division hashes consistently.
pub fn variable_alg_hash(var_id: u32) -> u64 {
    mix(var_id as u64 ^ VARIABLE_SEED) | 1
}

/// Exact integers with magnitude below 2^32 hash to their own two's-complement
/// value; everything else hashes its IEEE-754 bit pattern.
pub fn constant_alg_hash(value: f64) -> u64 {
    match small_integer(value) {
        Some(i) => i as u64,
        None => mix(value.to_bits() ^ CONSTANT_SEED),
    }
}

pub fn small_integer(value: f64) -> Option<i64> {
    if value.is_finite() && value.fract() == 0.0 && value.abs() < 4_294_967_296.0 {
        Some(value as i64)
    } else {
        None
    }
}

/// Inverse of the small-integer constant hash: which integer, if any, a hash
/// would denote.
pub fn hash_as_small_integer(h: u64) -> Option<i64> {
    let v = h as i64;
    if v.unsigned_abs() < (1u64 << 32) {
        Some(v)
    } else {
        None
    }
}

/// Generic (non-ring) algebraic combination used for operations the hash
/// cannot model arithmetically.
pub fn generic_alg_hash(op: OpKind, children: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = 0u64;
    for c in children {
        h = combine(c, h);
    }
    combine(op_hash(op), h)
}

/// Multiplicative inverse of an odd number modulo 2^64 (Newton iteration).
pub fn inverse_odd(b: u64) -> u64 {
    debug_assert!(b & 1 == 1);
    let mut x = b;
    for _ in 0..6 {
        x = x.wrapping_mul(2u64.wrapping_sub(b.wrapping_mul(x)));
    }
    x
}

/// Algebraic hash of an interior node given its children's algebraic hashes.
///
/// Addition and multiplication are the wrapping sum and product. Subtraction,
/// negation and integer powers follow the same ring so that sum rewrites keep
/// the hash. Division maps equal operands to one and otherwise multiplies by
/// the inverse when the divisor hash is odd.
pub fn interior_alg_hash(op: OpKind, children: &[u64]) -> u64 {
    match op {
        OpKind::Add => children.iter().fold(0u64, |h, &c| h.wrapping_add(c)),
        OpKind::Mul => children.iter().fold(1u64, |h, &c| h.wrapping_mul(c)),
        OpKind::Sub => children[0].wrapping_sub(children[1]),
        OpKind::Neg => children[0].wrapping_neg(),
        OpKind::Pow => match hash_as_small_integer(children[1]) {
            Some(k) if k >= 0 => children[0].wrapping_pow(k as u32),
            _ => generic_alg_hash(op, children.iter().copied()),
        },
        OpKind::Div => {
            let (num, den) = (children[0], children[1]);
            if num == den {
                1
            } else if den & 1 == 1 {
                num.wrapping_mul(inverse_odd(den))
            } else {
                generic_alg_hash(op, children.iter().copied())
            }
        }
        _ => generic_alg_hash(op, children.iter().copied()),
    }
}
