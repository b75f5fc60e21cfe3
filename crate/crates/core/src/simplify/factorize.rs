//! Greedy factorization of sums of products.
//!
//! Among the factor sets shared by at least two summands, the one with the
//! highest total complexity is pulled out first (ties: more summands covered,
//! then lowest structural hash). Both the factored inner sum and the
//! remaining summands are factorized again.

use crate::expr::{hash, ExprArena, ExprRef, OpKind};

/// Sums with more summands are left alone (the candidate search is
/// quadratic in the number of summands).
const MAX_TERMS: usize = 64;

type Factors = Vec<ExprRef>;

fn factors_of(arena: &ExprArena, t: ExprRef) -> Factors {
    let mut f = if arena.op(t) == OpKind::Mul {
        arena.children(t).to_vec()
    } else {
        vec![t]
    };
    f.sort_unstable();
    f
}

/// Multiset intersection of two sorted factor lists.
fn intersect(a: &[ExprRef], b: &[ExprRef]) -> Factors {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// `a \ b` for sorted multisets, or `None` if `b` is not contained in `a`.
fn remove(a: &[ExprRef], b: &[ExprRef]) -> Option<Factors> {
    let (mut i, mut out) = (0, Vec::new());
    for &x in a {
        if i < b.len() && b[i] == x {
            i += 1;
        } else {
            if i < b.len() && b[i] < x {
                return None;
            }
            out.push(x);
        }
    }
    (i == b.len()).then_some(out)
}

pub fn factorize(arena: &mut ExprArena, e: ExprRef) -> Option<ExprRef> {
    if arena.op(e) != OpKind::Add || arena.children(e).len() > MAX_TERMS {
        return None;
    }
    let terms: Vec<Factors> = arena.children(e).iter().map(|&t| factors_of(arena, t)).collect();
    let r = factor_terms(arena, terms)?;
    (r != e).then_some(r)
}

/// Factorized sum of the given products, or `None` when nothing is shared.
fn factor_terms(arena: &mut ExprArena, terms: Vec<Factors>) -> Option<ExprRef> {
    let best = best_common_set(arena, &terms)?;
    let mut covered = Vec::new();
    let mut rest = Vec::new();
    for t in terms {
        match remove(&t, &best) {
            Some(q) => covered.push(q),
            None => rest.push(t),
        }
    }
    let quotients: Vec<ExprRef> = covered.iter().map(|q| arena.product(q)).collect::<Vec<_>>();
    let inner = match factor_terms(arena, covered) {
        Some(f) => f,
        None => arena.sum(&quotients),
    };
    let mut factored = best.clone();
    factored.push(inner);
    factored.sort_unstable();
    if rest.is_empty() {
        return Some(arena.product(&factored));
    }
    let mut next = vec![factored];
    next.extend(rest);
    match factor_terms(arena, next.clone()) {
        Some(f) => Some(f),
        None => {
            let ts: Vec<ExprRef> = next.iter().map(|t| arena.product(t)).collect();
            Some(arena.sum(&ts))
        }
    }
}

fn best_common_set(arena: &ExprArena, terms: &[Factors]) -> Option<Factors> {
    let mut candidates: Vec<Factors> = Vec::new();
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            let c = intersect(&terms[i], &terms[j]);
            if !c.is_empty() && !candidates.contains(&c) {
                candidates.push(c);
            }
        }
    }
    candidates
        .into_iter()
        .map(|c| {
            let weight: u64 = c.iter().map(|&f| arena.complexity(f) + 1).sum();
            let coverage = terms.iter().filter(|t| remove(t, &c).is_some()).count();
            let h = c.iter().fold(0u64, |h, &f| hash::combine(arena.struct_hash(f), h));
            (weight, coverage, std::cmp::Reverse(h), c)
        })
        .filter(|(_, coverage, _, _)| *coverage >= 2)
        .max_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)))
        .map(|(_, _, _, c)| c)
}
