//! Memory planning: value-array layout, position and constant tables,
//! offset coherence and coalescing.

use super::{ColumnAccess, ExecutionPlan, Kernel, PlanError, PlanMeta};
use crate::decompose::{Decomposition, ItemKind};
use crate::expr::{ExprArena, ExprRef, OpKind};
use crate::template::{ColumnClass, LeafPayload, LeafTable, TNode, Template};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub vector_width: u32,
    pub coalesce: bool,
    pub coherence: bool,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            vector_width: 4,
            coalesce: true,
            coherence: true,
        }
    }
}

/// A finished group ready for memory planning.
#[derive(Clone, Debug)]
pub struct KernelInput {
    pub items: Vec<usize>,
    pub kind: ItemKind,
    pub level: u32,
    /// Template over the group's original column ids.
    pub template: Template,
    pub classes: Vec<ColumnClass>,
    pub table: LeafTable,
    pub locals: Vec<u32>,
}

fn round_up(n: u64, w: u64) -> u64 {
    n.div_ceil(w) * w
}

/// Lay out the value array and build every kernel's tables. Kernels must be
/// given in a valid execution order.
pub fn build_plan(
    arena: &ExprArena,
    decomp: &Decomposition,
    kernels: &[KernelInput],
    layout: &LayoutConfig,
    meta: PlanMeta,
) -> Result<ExecutionPlan, PlanError> {
    let vw = layout.vector_width.max(1) as u64;
    let n_inputs = arena.var_count() as u64;

    // Result ranges, in schedule order.
    let mut cursor = round_up(n_inputs, vw);
    let mut bases = Vec::with_capacity(kernels.len());
    let mut item_slot = vec![(usize::MAX, 0u64); decomp.items.len()];
    for (k, kin) in kernels.iter().enumerate() {
        let n = kin.items.len() as u64;
        let stride = round_up(n, vw);
        bases.push((cursor, stride));
        for (i, &item) in kin.items.iter().enumerate() {
            item_slot[item] = (k, i as u64);
        }
        cursor += kin.template.roots.len() as u64 * stride;
    }
    let value_len = cursor;
    if value_len > u32::MAX as u64 {
        return Err(PlanError::TooLarge(value_len));
    }

    let item_root_addr = |item: usize, root: usize| -> u64 {
        let (k, i) = item_slot[item];
        let (base, stride) = bases[k];
        base + root as u64 * stride + i
    };
    let addr = |e: ExprRef| -> Result<u64, PlanError> {
        if arena.op(e) == OpKind::Var {
            return Ok(arena.var_id(e).unwrap() as u64);
        }
        let &(item, root) = decomp
            .location
            .get(&e)
            .ok_or_else(|| PlanError::Invalid(format!("{e} is read but never materialized")))?;
        Ok(item_root_addr(item, root))
    };

    let mut plan = ExecutionPlan {
        n_inputs,
        value_len,
        meta,
        ..ExecutionPlan::default()
    };

    for (k, kin) in kernels.iter().enumerate() {
        let n = kin.items.len() as u64;
        let used = kin.template.used_columns();
        let mut dense = vec![u32::MAX; kin.classes.len()];
        for (d, &c) in used.iter().enumerate() {
            dense[c as usize] = d as u32;
        }
        let template = Template {
            nodes: kin
                .template
                .nodes
                .iter()
                .map(|t| match t {
                    TNode::Column(c) => TNode::Column(dense[*c as usize]),
                    other => other.clone(),
                })
                .collect(),
            roots: kin.template.roots.clone(),
        };

        let mut columns = Vec::with_capacity(used.len());
        let mut pos_cols: Vec<(u32, Vec<u32>)> = Vec::new(); // (column, positions)
        let mut const_cols: Vec<Vec<f64>> = Vec::new();
        for (d, &c) in used.iter().enumerate() {
            let col = &kin.table.columns[c as usize];
            match kin.classes[c as usize] {
                ColumnClass::Variable => {
                    let mut pos = Vec::with_capacity(col.len());
                    for p in col {
                        let LeafPayload::Value(e) = p else {
                            return Err(PlanError::Invalid("variable column holds a non-value".into()));
                        };
                        pos.push(addr(*e)? as u32);
                    }
                    let coherent = if layout.coherence {
                        pos_cols.iter().find_map(|(base, bp)| {
                            let delta = pos[0] as i64 - bp[0] as i64;
                            bp.iter()
                                .zip(&pos)
                                .all(|(&b, &p)| p as i64 - b as i64 == delta)
                                .then_some((*base, delta))
                        })
                    } else {
                        None
                    };
                    match coherent {
                        Some((base, delta)) => columns.push(ColumnAccess::Coherent { base, delta }),
                        None => {
                            columns.push(ColumnAccess::Position {
                                slot: pos_cols.len() as u32,
                            });
                            pos_cols.push((d as u32, pos));
                        }
                    }
                }
                ColumnClass::VaryingConst => {
                    let vals: Vec<f64> = col
                        .iter()
                        .map(|p| match p {
                            LeafPayload::Const(v) => Ok(*v),
                            _ => Err(PlanError::Invalid("constant column holds a non-constant".into())),
                        })
                        .collect::<Result<_, _>>()?;
                    columns.push(ColumnAccess::Constant {
                        slot: const_cols.len() as u32,
                    });
                    const_cols.push(vals);
                }
                other => {
                    return Err(PlanError::Invalid(format!(
                        "column class {other:?} left in a finished template"
                    )))
                }
            }
        }

        let (base, stride) = bases[k];
        let kernel = Kernel {
            name: format!("k{k}_{}_l{}", kind_name(kin.kind), kin.level),
            kind: kin.kind,
            level: kin.level,
            instances: n,
            template,
            locals: kin.locals.clone(),
            columns,
            out_base: base,
            out_stride: stride,
            p_offset: plan.positions.len() as u64,
            p_slots: pos_cols.len() as u32,
            c_offset: plan.constants.len() as u64,
            c_slots: const_cols.len() as u32,
            coalesced: layout.coalesce,
        };
        let pos_data: Vec<Vec<u32>> = pos_cols.into_iter().map(|(_, p)| p).collect();
        plan.positions.extend(lay_out(&pos_data, n, kernel.coalesced));
        plan.constants.extend(lay_out(&const_cols, n, kernel.coalesced));
        plan.kernels.push(kernel);
    }

    plan.outputs = decomp
        .outputs
        .iter()
        .map(|&(item, root)| item_root_addr(item, root))
        .collect();
    Ok(plan)
}

fn kind_name(k: ItemKind) -> &'static str {
    match k {
        ItemKind::Output => "out",
        ItemKind::Global => "glob",
        ItemKind::Block => "block",
    }
}

fn lay_out<T: Copy>(cols: &[Vec<T>], n: u64, coalesced: bool) -> Vec<T> {
    let mut out = Vec::with_capacity(cols.len() * n as usize);
    if coalesced {
        for c in cols {
            out.extend_from_slice(c);
        }
    } else {
        for i in 0..n as usize {
            for c in cols {
                out.push(c[i]);
            }
        }
    }
    out
}

/// Same plan with every table converted to the instance-major layout.
pub fn decoalesce(plan: &ExecutionPlan) -> ExecutionPlan {
    let mut out = plan.clone();
    for k in &mut out.kernels {
        if !k.coalesced {
            continue;
        }
        let n = k.instances as usize;
        let take = |table: &mut Vec<u32>, off: u64, slots: u32| {
            let src: Vec<u32> = table[off as usize..off as usize + slots as usize * n].to_vec();
            for s in 0..slots as usize {
                for i in 0..n {
                    table[off as usize + i * slots as usize + s] = src[s * n + i];
                }
            }
        };
        take(&mut out.positions, k.p_offset, k.p_slots);
        let off = k.c_offset as usize;
        let slots = k.c_slots as usize;
        let src: Vec<f64> = out.constants[off..off + slots * n].to_vec();
        for s in 0..slots {
            for i in 0..n {
                out.constants[off + i * slots + s] = src[s * n + i];
            }
        }
        k.coalesced = false;
    }
    out
}
