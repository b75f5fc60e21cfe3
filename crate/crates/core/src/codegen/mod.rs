//! Memory planning, execution plans and the two backends (interpreter and C
//! source emitter).

mod blob;
mod emit;
mod interp;
mod manifest;
mod native;
mod plan;

pub use blob::{decode_blob, encode_blob, BlobData, BlobError, BLOB_MAGIC, BLOB_VERSION};
pub use emit::{emit_harness, emit_source, EmitOptions, Parallel};
pub use interp::{AddressLoad, Interpreter, RunError};
pub use manifest::{load_plan, parse_plan, save_plan, KernelSummary, Manifest, PlanFiles};
pub use native::{build_native, find_cc, run_native, NativeError, NativeProgram, NativeRun, CFLAGS};
pub use plan::{build_plan, decoalesce, KernelInput, LayoutConfig};

use crate::decompose::ItemKind;
use crate::template::{TNode, Template};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("value array of {0} entries does not fit 32-bit positions")]
    TooLarge(u64),
    #[error("invalid plan: {0}")]
    Invalid(String),
}

fn is_c_identifier(s: &str) -> bool {
    let mut b = s.bytes();
    matches!(b.next(), Some(c) if c.is_ascii_alphabetic() || c == b'_')
        && b.all(|c| c.is_ascii_alphanumeric() || c == b'_')
        && s.len() <= 64
}

fn invalid(msg: impl Into<String>) -> PlanError {
    PlanError::Invalid(msg.into())
}

/// How one template column is loaded for instance `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnAccess {
    /// `x[p[index(slot, i)]]`
    Position { slot: u32 },
    /// Same position as an earlier independent column plus a fixed offset.
    Coherent { base: u32, delta: i64 },
    /// `c[index(slot, i)]`
    Constant { slot: u32 },
}

/// One kernel: a template evaluated for `instances` group members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub name: String,
    pub kind: ItemKind,
    pub level: u32,
    pub instances: u64,
    pub template: Template,
    /// Template nodes kept in named temporaries, in evaluation order.
    pub locals: Vec<u32>,
    /// Access for every template column (dense ids).
    pub columns: Vec<ColumnAccess>,
    /// Root `r` of instance `i` is stored at `out_base + r * out_stride + i`.
    pub out_base: u64,
    pub out_stride: u64,
    pub p_offset: u64,
    pub p_slots: u32,
    pub c_offset: u64,
    pub c_slots: u32,
    /// Slot-major (`slot * instances + i`) instead of instance-major
    /// (`i * slots + slot`) index and constant tables.
    pub coalesced: bool,
}

impl Kernel {
    #[inline]
    pub fn table_index(&self, offset: u64, slots: u32, slot: u32, i: u64) -> u64 {
        if self.coalesced {
            offset + slot as u64 * self.instances + i
        } else {
            offset + i * slots as u64 + slot as u64
        }
    }

    #[inline]
    pub fn p_index(&self, slot: u32, i: u64) -> u64 {
        self.table_index(self.p_offset, self.p_slots, slot, i)
    }

    #[inline]
    pub fn c_index(&self, slot: u32, i: u64) -> u64 {
        self.table_index(self.c_offset, self.c_slots, slot, i)
    }

    #[inline]
    pub fn out_index(&self, root: usize, i: u64) -> u64 {
        self.out_base + root as u64 * self.out_stride + i
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanMeta {
    pub simplified: bool,
    pub vector_width: u32,
    pub t_ref: u32,
    pub t_compl: u64,
    /// Free-form description of the traced program, used to re-trace it.
    pub program: Option<serde_json::Value>,
}

/// Everything needed to run a compiled program without the expression arena.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub n_inputs: u64,
    pub value_len: u64,
    pub outputs: Vec<u64>,
    pub kernels: Vec<Kernel>,
    pub positions: Vec<u32>,
    pub constants: Vec<f64>,
    pub meta: PlanMeta,
}

impl ExecutionPlan {
    /// Structural checks so that the interpreter cannot index out of bounds.
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.n_inputs > self.value_len {
            return Err(invalid("more inputs than value slots"));
        }
        if self.value_len > u32::MAX as u64 {
            return Err(PlanError::TooLarge(self.value_len));
        }
        for &o in &self.outputs {
            if o >= self.value_len {
                return Err(invalid(format!("output position {o} out of range")));
            }
        }
        for &p in &self.positions {
            if p as u64 >= self.value_len {
                return Err(invalid(format!("position {p} out of range")));
            }
        }
        let mut names = std::collections::HashSet::new();
        for (ki, k) in self.kernels.iter().enumerate() {
            let bad = |m: &str| invalid(format!("kernel {ki}: {m}"));
            if !is_c_identifier(&k.name) || k.name.starts_with("sg_") || !names.insert(k.name.as_str()) {
                return Err(bad("name must be a unique C identifier not starting with sg_"));
            }
            let t = &k.template;
            if t.roots.is_empty() {
                return Err(bad("no roots"));
            }
            for (i, n) in t.nodes.iter().enumerate() {
                match n {
                    TNode::Op { op, children } => {
                        if op.is_leaf() || !op.arity().accepts(children.len()) {
                            return Err(bad("malformed operation"));
                        }
                        if children.iter().any(|&c| c as usize >= i) {
                            return Err(bad("children must precede parents"));
                        }
                    }
                    TNode::Column(c) => {
                        if *c as usize >= k.columns.len() {
                            return Err(bad("column out of range"));
                        }
                    }
                    TNode::Literal(v) => {
                        if !v.is_finite() {
                            return Err(bad("non-finite literal"));
                        }
                    }
                }
            }
            if t.roots.iter().any(|&r| r as usize >= t.nodes.len()) {
                return Err(bad("root out of range"));
            }
            let mut prev = None;
            for &l in &k.locals {
                if l as usize >= t.nodes.len() || prev.is_some_and(|p| p >= l) {
                    return Err(bad("locals must be ascending node ids"));
                }
                prev = Some(l);
            }
            let n = k.instances;
            let span = |off: u64, slots: u32| off.checked_add((slots as u64).checked_mul(n)?);
            if n > 0 {
                let roots = t.roots.len() as u64;
                if k.out_stride < n {
                    return Err(bad("output stride below instance count"));
                }
                let end = (roots - 1)
                    .checked_mul(k.out_stride)
                    .and_then(|v| v.checked_add(k.out_base))
                    .and_then(|v| v.checked_add(n));
                if end.is_none_or(|e| e > self.value_len) || k.out_base < self.n_inputs {
                    return Err(bad("output range out of bounds"));
                }
                if span(k.p_offset, k.p_slots).is_none_or(|e| e > self.positions.len() as u64) {
                    return Err(bad("position table out of bounds"));
                }
                if span(k.c_offset, k.c_slots).is_none_or(|e| e > self.constants.len() as u64) {
                    return Err(bad("constant table out of bounds"));
                }
            }
            for (ci, col) in k.columns.iter().enumerate() {
                match *col {
                    ColumnAccess::Position { slot } => {
                        if slot >= k.p_slots {
                            return Err(bad("position slot out of range"));
                        }
                    }
                    ColumnAccess::Constant { slot } => {
                        if slot >= k.c_slots {
                            return Err(bad("constant slot out of range"));
                        }
                    }
                    ColumnAccess::Coherent { base, delta } => {
                        let Some(ColumnAccess::Position { slot }) = k.columns.get(base as usize) else {
                            return Err(bad("coherent column must follow an indexed column"));
                        };
                        if base as usize >= ci {
                            return Err(bad("coherent base must precede the column"));
                        }
                        for i in 0..n {
                            let a = self.positions[k.p_index(*slot, i) as usize] as i64 + delta;
                            if a < 0 || a as u64 >= self.value_len {
                                return Err(bad("coherent address out of range"));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kernel_count(&self) -> usize {
        self.kernels.len()
    }
}
