//! Simplification invariants over random expressions.

use proptest::prelude::*;
use sparsegen::expr::{eval_numeric, ExprArena, ExprRef, OpKind};
use sparsegen::simplify::{simplify, SimplifyConfig, SimplifyStats};

/// Expression recipe; leaves index a pool of variables and constants.
#[derive(Clone, Debug)]
enum Recipe {
    Var(u32),
    Int(i32),
    Add(Vec<Recipe>),
    Sub(Box<Recipe>, Box<Recipe>),
    Mul(Vec<Recipe>),
    Neg(Box<Recipe>),
    Div(Box<Recipe>, Box<Recipe>),
    Sqrt(Box<Recipe>),
    Pow(Box<Recipe>, u32),
}

fn build(a: &mut ExprArena, r: &Recipe) -> ExprRef {
    match r {
        Recipe::Var(v) => a.var(*v),
        Recipe::Int(k) => a.int(*k),
        Recipe::Add(xs) => {
            let t: Vec<_> = xs.iter().map(|x| build(a, x)).collect();
            a.sum(&t)
        }
        Recipe::Mul(xs) => {
            let t: Vec<_> = xs.iter().map(|x| build(a, x)).collect();
            a.product(&t)
        }
        Recipe::Sub(x, y) => {
            let (x, y) = (build(a, x), build(a, y));
            a.sub(x, y)
        }
        Recipe::Neg(x) => {
            let x = build(a, x);
            a.neg(x)
        }
        Recipe::Div(x, y) => {
            let (x, y) = (build(a, x), build(a, y));
            a.div(x, y)
        }
        Recipe::Sqrt(x) => {
            let x = build(a, x);
            a.unary(OpKind::Sqrt, x).unwrap()
        }
        Recipe::Pow(x, k) => {
            let x = build(a, x);
            a.powi(x, *k).unwrap()
        }
    }
}

/// Positive-valued expressions: no cancellation, so every rewrite keeps the
/// value within a few ulps per operation.
fn positive() -> impl Strategy<Value = Recipe> {
    let leaf = prop_oneof![
        4 => (0u32..4).prop_map(Recipe::Var),
        1 => (1i32..4).prop_map(Recipe::Int),
    ];
    leaf.prop_recursive(5, 40, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Recipe::Add),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Recipe::Mul),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| Recipe::Div(Box::new(x), Box::new(y))),
            inner.clone().prop_map(|x| Recipe::Sqrt(Box::new(x))),
            (inner, 2u32..4).prop_map(|(x, k)| Recipe::Pow(Box::new(x), k)),
        ]
    })
}

/// Integer polynomials: exact in floating point for small integer inputs.
fn polynomial() -> impl Strategy<Value = Recipe> {
    let leaf = prop_oneof![
        3 => (0u32..3).prop_map(Recipe::Var),
        1 => (-3i32..4).prop_map(Recipe::Int),
    ];
    leaf.prop_recursive(4, 30, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Recipe::Add),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Recipe::Mul),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| Recipe::Sub(Box::new(x), Box::new(y))),
            inner.clone().prop_map(|x| Recipe::Neg(Box::new(x))),
            (inner, 2u32..3).prop_map(|(x, k)| Recipe::Pow(Box::new(x), k)),
        ]
    })
}

fn run(a: &mut ExprArena, e: ExprRef) -> ExprRef {
    let mut stats = SimplifyStats::default();
    simplify(a, &[e], &SimplifyConfig::default(), &mut stats)[0]
}

const POINTS: [[f64; 4]; 3] = [[0.5, 1.25, 1.75, 0.8], [1.9, 0.6, 1.1, 1.4], [1.0, 2.0, 0.7, 1.3]];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn values_are_preserved(r in positive()) {
        let mut a = ExprArena::new();
        let e = build(&mut a, &r);
        let s = run(&mut a, e);
        for p in POINTS {
            let want = eval_numeric(&a, &[e], &p[..]).unwrap()[0];
            let got = eval_numeric(&a, &[s], &p[..]).unwrap()[0];
            let rel = (got - want).abs() / want.abs();
            prop_assert!(rel <= 1e-12, "{} vs {} ({})", got, want, a.render(s, &|_| None));
        }
    }

    #[test]
    fn complexity_never_grows(r in positive()) {
        let mut a = ExprArena::new();
        let e = build(&mut a, &r);
        let s = run(&mut a, e);
        prop_assert!(a.complexity(s) <= a.complexity(e));
    }

    #[test]
    fn simplification_is_idempotent(r in positive()) {
        let mut a = ExprArena::new();
        let e = build(&mut a, &r);
        let once = run(&mut a, e);
        let twice = run(&mut a, once);
        prop_assert_eq!(once, twice, "{} then {}", a.render(once, &|_| None), a.render(twice, &|_| None));
    }

    #[test]
    fn polynomials_keep_value_and_algebraic_hash(r in polynomial()) {
        let mut a = ExprArena::new();
        let e = build(&mut a, &r);
        let s = run(&mut a, e);
        prop_assert_eq!(a.alg_hash(s), a.alg_hash(e));
        for p in [[1.0, 2.0, 3.0], [-2.0, 1.0, 0.0], [3.0, -1.0, 2.0]] {
            let want = eval_numeric(&a, &[e], &p[..]).unwrap()[0];
            let got = eval_numeric(&a, &[s], &p[..]).unwrap()[0];
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn disabled_rules_change_nothing(r in positive()) {
        let mut a = ExprArena::new();
        let e = build(&mut a, &r);
        let mut stats = SimplifyStats::default();
        let s = simplify(&mut a, &[e], &SimplifyConfig::disabled(), &mut stats)[0];
        prop_assert_eq!(s, e);
        prop_assert_eq!(stats.total_hits(), 0);
    }
}
