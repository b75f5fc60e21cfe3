//! Symbolic scalar type used to trace ordinary numeric code.
//!
//! A [`Tracer`] owns the arena; [`Sym`] values are small copyable handles that
//! record every arithmetic operation as a DAG node. The [`Scalar`] trait lets
//! the same generic program run on `f64` (for numeric reference values) or on
//! `Sym` (to trace it).

use crate::expr::{ExprArena, ExprRef, OpKind};
use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::ops::{Add, Div, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("value {0} is already tagged in a block")]
    AlreadyTagged(ExprRef),
    #[error("cannot tag an empty block")]
    EmptyBlock,
}

/// Tracing session: arena, input allocation and explicit block tags.
#[derive(Debug, Default)]
pub struct Tracer {
    arena: RefCell<ExprArena>,
    next_var: Cell<u32>,
    blocks: RefCell<Vec<Vec<ExprRef>>>,
    tagged: RefCell<HashSet<ExprRef>>,
}

impl Tracer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_arena(arena: ExprArena) -> Self {
        let next = arena.var_count();
        Tracer {
            arena: RefCell::new(arena),
            next_var: Cell::new(next),
            ..Default::default()
        }
    }

    /// Fresh input variable.
    pub fn input(&self) -> Sym<'_> {
        let id = self.next_var.get();
        self.next_var.set(id + 1);
        let e = self.arena.borrow_mut().var(id);
        Sym { t: self, e }
    }

    pub fn inputs(&self, n: usize) -> Vec<Sym<'_>> {
        (0..n).map(|_| self.input()).collect()
    }

    pub fn input_count(&self) -> u32 {
        self.next_var.get()
    }

    pub fn constant(&self, v: f64) -> Sym<'_> {
        let e = self
            .arena
            .borrow_mut()
            .constant(v)
            .unwrap_or_else(|err| panic!("traced program produced a bad constant: {err}"));
        Sym { t: self, e }
    }

    pub fn wrap(&self, e: ExprRef) -> Sym<'_> {
        Sym { t: self, e }
    }

    /// Mark `values` as one block evaluated by a single kernel. Values that
    /// are leaves are ignored; tagging a single value is a no-op.
    pub fn tag_block(&self, values: &[Sym<'_>]) -> Result<(), TraceError> {
        if values.is_empty() {
            return Err(TraceError::EmptyBlock);
        }
        let arena = self.arena.borrow();
        let mut tagged = self.tagged.borrow_mut();
        let mut members = Vec::new();
        for v in values {
            if arena.is_leaf(v.e) || members.contains(&v.e) {
                continue;
            }
            if tagged.contains(&v.e) {
                return Err(TraceError::AlreadyTagged(v.e));
            }
            members.push(v.e);
        }
        if members.len() >= 2 {
            tagged.extend(members.iter().copied());
            self.blocks.borrow_mut().push(members);
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<Vec<ExprRef>> {
        self.blocks.borrow().clone()
    }

    pub fn arena(&self) -> std::cell::Ref<'_, ExprArena> {
        self.arena.borrow()
    }

    pub fn arena_mut(&self) -> std::cell::RefMut<'_, ExprArena> {
        self.arena.borrow_mut()
    }

    /// Finish tracing and hand back the arena and tagged blocks.
    pub fn finish(self) -> (ExprArena, Vec<Vec<ExprRef>>) {
        (self.arena.into_inner(), self.blocks.into_inner())
    }

    fn apply(&self, op: OpKind, children: &[ExprRef]) -> Sym<'_> {
        let e = self
            .arena
            .borrow_mut()
            .apply(op, children)
            .unwrap_or_else(|err| panic!("traced operation failed: {err}"));
        Sym { t: self, e }
    }
}

/// Symbolic scalar bound to a [`Tracer`].
#[derive(Clone, Copy)]
pub struct Sym<'t> {
    t: &'t Tracer,
    e: ExprRef,
}

impl std::fmt::Debug for Sym<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Sym({})", self.e)
    }
}

impl PartialEq for Sym<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.t, other.t) && self.e == other.e
    }
}

impl<'t> Sym<'t> {
    pub fn expr(self) -> ExprRef {
        self.e
    }

    pub fn tracer(self) -> &'t Tracer {
        self.t
    }

    fn same(self, other: Sym<'t>) {
        assert!(std::ptr::eq(self.t, other.t), "mixing symbols from different tracers");
    }

    fn binary(self, op: OpKind, other: Sym<'t>) -> Sym<'t> {
        self.same(other);
        self.t.apply(op, &[self.e, other.e])
    }

    fn unary(self, op: OpKind) -> Sym<'t> {
        self.t.apply(op, &[self.e])
    }

    fn lift_value(self, v: f64) -> Sym<'t> {
        self.t.constant(v)
    }
}

macro_rules! sym_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl<'t> $trait for Sym<'t> {
            type Output = Sym<'t>;
            fn $method(self, rhs: Sym<'t>) -> Sym<'t> {
                self.binary($op, rhs)
            }
        }
        impl<'t> $trait<f64> for Sym<'t> {
            type Output = Sym<'t>;
            fn $method(self, rhs: f64) -> Sym<'t> {
                self.binary($op, self.lift_value(rhs))
            }
        }
        impl<'t> $trait<Sym<'t>> for f64 {
            type Output = Sym<'t>;
            fn $method(self, rhs: Sym<'t>) -> Sym<'t> {
                rhs.lift_value(self).binary($op, rhs)
            }
        }
    };
}

sym_binop!(Add, add, OpKind::Add);
sym_binop!(Sub, sub, OpKind::Sub);
sym_binop!(Mul, mul, OpKind::Mul);
sym_binop!(Div, div, OpKind::Div);

impl<'t> Neg for Sym<'t> {
    type Output = Sym<'t>;
    fn neg(self) -> Sym<'t> {
        self.unary(OpKind::Neg)
    }
}

/// Numeric type a program can be written against.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A constant in the same context as `self`.
    fn lift(self, v: f64) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    /// Integer power, `k >= 2` recorded as one operation.
    fn powi(self, k: u32) -> Self;
    /// `self < 0 ? if_neg : if_nonneg`.
    fn select(self, if_neg: Self, if_nonneg: Self) -> Self;
}

impl Scalar for f64 {
    fn lift(self, v: f64) -> f64 {
        v
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn powi(self, k: u32) -> f64 {
        match k {
            0 => 1.0,
            _ => crate::expr::powi(self, k as f64),
        }
    }
    fn select(self, if_neg: f64, if_nonneg: f64) -> f64 {
        if self < 0.0 {
            if_neg
        } else {
            if_nonneg
        }
    }
}

impl<'t> Scalar for Sym<'t> {
    fn lift(self, v: f64) -> Self {
        self.lift_value(v)
    }
    fn sqrt(self) -> Self {
        self.unary(OpKind::Sqrt)
    }
    fn sin(self) -> Self {
        self.unary(OpKind::Sin)
    }
    fn cos(self) -> Self {
        self.unary(OpKind::Cos)
    }
    fn exp(self) -> Self {
        self.unary(OpKind::Exp)
    }
    fn ln(self) -> Self {
        self.unary(OpKind::Log)
    }
    fn powi(self, k: u32) -> Self {
        let e = self
            .t
            .arena
            .borrow_mut()
            .powi(self.e, k)
            .unwrap_or_else(|err| panic!("traced pow failed: {err}"));
        Sym { t: self.t, e }
    }
    fn select(self, if_neg: Self, if_nonneg: Self) -> Self {
        self.same(if_neg);
        self.same(if_nonneg);
        self.t.apply(OpKind::Select, &[self.e, if_neg.e, if_nonneg.e])
    }
}
