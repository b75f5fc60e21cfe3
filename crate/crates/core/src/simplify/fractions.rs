//! Fraction reduction and square-root consolidation over products.
//!
//! A maximal product/quotient is flattened into a sign, a constant numerator
//! and denominator and a map from atomic factors to integer exponents, then
//! rebuilt as a single `num / den`.

use crate::expr::{post_order, ExprArena, ExprRef, OpKind};
use std::collections::BTreeMap;

/// Largest repetition count rebuilt as a chain of multiplications rather
/// than a `Pow` node.
const MAX_REPEAT: i32 = 13;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProductForm {
    pub negative: bool,
    pub num_coef: f64,
    pub den_coef: f64,
    /// Exponents contributed by numerators.
    pub num: BTreeMap<ExprRef, i32>,
    /// Exponents contributed by denominators (stored positive).
    pub den: BTreeMap<ExprRef, i32>,
}

impl ProductForm {
    pub fn of(arena: &ExprArena, e: ExprRef) -> ProductForm {
        let mut f = ProductForm {
            negative: false,
            num_coef: 1.0,
            den_coef: 1.0,
            ..ProductForm::default()
        };
        f.add(arena, e, 1);
        f
    }

    fn add(&mut self, arena: &ExprArena, e: ExprRef, mult: i32) {
        match arena.op(e) {
            OpKind::Mul => {
                for &c in arena.children(e) {
                    self.add(arena, c, mult);
                }
            }
            OpKind::Div => {
                let k = arena.children(e);
                let (a, b) = (k[0], k[1]);
                self.add(arena, a, mult);
                self.add(arena, b, -mult);
            }
            OpKind::Neg => {
                if mult % 2 != 0 {
                    self.negative = !self.negative;
                }
                self.add(arena, arena.children(e)[0], mult);
            }
            OpKind::Pow => {
                let k = arena.const_value(arena.children(e)[1]).expect("pow exponent") as i32;
                self.add(arena, arena.children(e)[0], mult * k);
            }
            OpKind::Const => {
                let c = arena.const_value(e).unwrap();
                let p = c.abs().powi(mult.abs());
                if c < 0.0 && mult % 2 != 0 {
                    self.negative = !self.negative;
                }
                if mult > 0 {
                    self.num_coef *= p;
                } else {
                    self.den_coef *= p;
                }
            }
            _ => {
                let side = if mult > 0 { &mut self.num } else { &mut self.den };
                *side.entry(e).or_insert(0) += mult.abs();
            }
        }
    }

    /// Net numerator against denominator.
    fn cancel(&mut self) {
        let keys: Vec<ExprRef> = self.den.keys().copied().collect();
        for k in keys {
            let Some(&n) = self.num.get(&k) else { continue };
            let d = self.den[&k];
            let m = n.min(d);
            self.num.insert(k, n - m);
            self.den.insert(k, d - m);
        }
        self.num.retain(|_, v| *v != 0);
        self.den.retain(|_, v| *v != 0);
        let q = self.num_coef / self.den_coef;
        if q.is_finite() && q * self.den_coef == self.num_coef {
            self.num_coef = q;
            self.den_coef = 1.0;
        }
    }

    /// `sqrt(u)^2k → u^k` on each side, then merge the remaining square roots
    /// into one.
    fn merge_sqrt(&mut self, arena: &mut ExprArena) {
        for den in [false, true] {
            let side = if den { &self.den } else { &self.num };
            let roots: Vec<(ExprRef, i32)> = side
                .iter()
                .filter(|(e, v)| arena.op(**e) == OpKind::Sqrt && **v >= 2)
                .map(|(e, v)| (*e, *v))
                .collect();
            for (s, v) in roots {
                let u = arena.children(s)[0];
                let side = if den { &mut self.den } else { &mut self.num };
                side.insert(s, v % 2);
                self.add(arena, u, if den { -(v / 2) } else { v / 2 });
            }
            self.num.retain(|_, v| *v != 0);
            self.den.retain(|_, v| *v != 0);
        }
        let sq = |m: &BTreeMap<ExprRef, i32>, arena: &ExprArena| -> Vec<ExprRef> {
            m.iter()
                .filter(|(e, v)| arena.op(**e) == OpKind::Sqrt && **v == 1)
                .map(|(e, _)| *e)
                .collect()
        };
        let (p, q) = (sq(&self.num, arena), sq(&self.den, arena));
        if p.len() + q.len() < 2 {
            return;
        }
        for s in &p {
            self.num.remove(s);
        }
        for s in &q {
            self.den.remove(s);
        }
        let args =
            |v: &[ExprRef], arena: &ExprArena| -> Vec<ExprRef> { v.iter().map(|&s| arena.children(s)[0]).collect() };
        let (pa, qa) = (args(&p, arena), args(&q, arena));
        if p.is_empty() {
            let arg = arena.product(&qa);
            let s = arena.unary(OpKind::Sqrt, arg).expect("sqrt");
            *self.den.entry(s).or_insert(0) += 1;
        } else {
            let num = arena.product(&pa);
            let arg = if qa.is_empty() {
                num
            } else {
                let den = arena.product(&qa);
                arena.div(num, den)
            };
            let s = arena.unary(OpKind::Sqrt, arg).expect("sqrt");
            *self.num.entry(s).or_insert(0) += 1;
        }
    }

    fn side_factors(arena: &mut ExprArena, coef: f64, m: &BTreeMap<ExprRef, i32>) -> Vec<ExprRef> {
        let mut out = Vec::new();
        if coef != 1.0 {
            if let Ok(c) = arena.constant(coef) {
                out.push(c);
            }
        }
        for (&e, &k) in m {
            if k <= MAX_REPEAT || k > 64 {
                out.extend(std::iter::repeat_n(e, k as usize));
            } else {
                out.push(arena.powi(e, k as u32).expect("exponent in range"));
            }
        }
        out
    }

    pub fn rebuild(&self, arena: &mut ExprArena) -> Option<ExprRef> {
        if !self.num_coef.is_finite() || !self.den_coef.is_finite() || self.den_coef == 0.0 {
            return None;
        }
        let nf = Self::side_factors(arena, self.num_coef, &self.num);
        let df = Self::side_factors(arena, self.den_coef, &self.den);
        let num = arena.product(&nf);
        let r = if df.is_empty() {
            num
        } else {
            let den = arena.product(&df);
            arena.div(num, den)
        };
        Some(if self.negative { arena.neg(r) } else { r })
    }
}

/// Rewrite a product/quotient root. `cancel` nets common factors of
/// numerator and denominator; `merge_sqrt` consolidates square roots.
pub fn reduce_fractions(arena: &mut ExprArena, e: ExprRef, cancel: bool, merge_sqrt: bool) -> Option<ExprRef> {
    if !matches!(arena.op(e), OpKind::Mul | OpKind::Div) {
        return None;
    }
    let mut f = ProductForm::of(arena, e);
    let has_sqrt = f.num.keys().chain(f.den.keys()).any(|&a| arena.op(a) == OpKind::Sqrt);
    if merge_sqrt && !cancel && !has_sqrt {
        return None;
    }
    if merge_sqrt {
        f.merge_sqrt(arena);
    }
    if cancel {
        f.cancel();
    }
    let r = f.rebuild(arena)?;
    (r != e).then_some(r)
}

/// Number of divisions whose denominator holds a square root (candidates for
/// a reciprocal square root instruction).
pub fn count_rsqrt(arena: &ExprArena, roots: &[ExprRef]) -> u64 {
    post_order(arena, roots)
        .into_iter()
        .filter(|&e| {
            if arena.op(e) != OpKind::Div {
                return false;
            }
            let d = arena.children(e)[1];
            arena.op(d) == OpKind::Sqrt
                || (arena.op(d) == OpKind::Mul && arena.children(d).iter().any(|&c| arena.op(c) == OpKind::Sqrt))
        })
        .count() as u64
}
