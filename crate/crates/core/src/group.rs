//! Grouping of items into kernels: items whose bodies have the same shape
//! (with materialized nodes cut off) share one template.

use crate::decompose::{DecomposeError, Decomposition, ItemKind};
use crate::expr::{hash, ExprArena, ExprRef, OpKind};
use crate::template::interior_cut_hash;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

const OWN_ROOT_SEED: u64 = 0x6f77_6e72_6f6f_7400;

/// A set of items computed by one kernel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSpec {
    pub items: Vec<usize>,
    pub kind: ItemKind,
    pub level: u32,
    pub shape_hash: u64,
}

/// Shape hash of every item: the structural hash of its roots with
/// materialized nodes hashed as variables and, for blocks, references to the
/// block's own roots hashed by position.
pub fn item_shape_hashes(arena: &ExprArena, decomp: &Decomposition) -> Vec<u64> {
    // Cut hashes are memoized for nodes whose value does not depend on the
    // enclosing item (everything outside blocks).
    let mut memo: HashMap<ExprRef, u64> = HashMap::new();
    let mut out = Vec::with_capacity(decomp.items.len());
    for item in &decomp.items {
        let own: HashMap<ExprRef, u32> = if item.kind == ItemKind::Block {
            item.roots.iter().enumerate().map(|(k, &r)| (r, k as u32)).collect()
        } else {
            HashMap::new()
        };
        let mut local: HashMap<ExprRef, u64> = HashMap::new();
        let mut h = hash::mix(item.roots.len() as u64 ^ item.kind as u64);
        for &r in &item.roots {
            let rh = body_hash(arena, decomp, r, &own, &mut memo, &mut local);
            h = hash::combine(rh, h);
        }
        out.push(h);
    }
    out
}

/// Hash of a position inside an item body, cutting at materialized nodes and
/// own roots. `e` itself is never cut.
fn body_hash(
    arena: &ExprArena,
    decomp: &Decomposition,
    e: ExprRef,
    own: &HashMap<ExprRef, u32>,
    memo: &mut HashMap<ExprRef, u64>,
    local: &mut HashMap<ExprRef, u64>,
) -> u64 {
    if arena.is_leaf(e) {
        return arena.struct_hash(e);
    }
    // Explicit post-order stack; block bodies use a per-item memo because
    // own-root references change the hash.
    let use_local = !own.is_empty();
    let cut_value = |c: ExprRef| -> Option<u64> {
        if let Some(&k) = own.get(&c) {
            return Some(hash::combine(OWN_ROOT_SEED, k as u64));
        }
        if arena.is_leaf(c) {
            return Some(arena.struct_hash(c));
        }
        if decomp.is_materialized(c) {
            return Some(hash::variable_struct_hash());
        }
        None
    };
    let mut stack: Vec<(ExprRef, bool)> = vec![(e, false)];
    let mut top_hash = 0u64;
    while let Some((n, expanded)) = stack.pop() {
        let table = if use_local { &*local } else { &*memo };
        if n != e && table.contains_key(&n) {
            continue;
        }
        if !expanded {
            stack.push((n, true));
            for &c in arena.children(n) {
                let table = if use_local { &*local } else { &*memo };
                if cut_value(c).is_none() && !table.contains_key(&c) {
                    stack.push((c, false));
                }
            }
            continue;
        }
        let table = if use_local { &*local } else { &*memo };
        let h = interior_cut_hash(arena, n, |c| cut_value(c).unwrap_or_else(|| table[&c]));
        if n == e {
            top_hash = h;
        } else if use_local {
            local.insert(n, h);
        } else {
            memo.insert(n, h);
        }
    }
    top_hash
}

/// Height of each item: longest producer chain below it.
pub fn item_heights(decomp: &Decomposition, topo: &[usize]) -> Vec<u32> {
    let mut h = vec![0u32; decomp.items.len()];
    for &i in topo {
        h[i] = decomp.items[i].producers.iter().map(|&p| h[p] + 1).max().unwrap_or(0);
    }
    h
}

/// Partition items into groups by (shape, level, kind). Groups whose members
/// depend on each other are split by intra-group dependency depth. Returned
/// in a valid execution order.
pub fn group_items(arena: &ExprArena, decomp: &Decomposition) -> Result<Vec<GroupSpec>, DecomposeError> {
    let shapes = item_shape_hashes(arena, decomp);
    let topo = decomp.topological_order()?;
    let heights = item_heights(decomp, &topo);

    let mut index: HashMap<(u64, u32, ItemKind), usize> = HashMap::new();
    let mut groups: Vec<GroupSpec> = Vec::new();
    for (i, item) in decomp.items.iter().enumerate() {
        let key = (shapes[i], item.level, item.kind);
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(GroupSpec {
                items: Vec::new(),
                kind: item.kind,
                level: item.level,
                shape_hash: shapes[i],
            });
            groups.len() - 1
        });
        groups[g].items.push(i);
    }

    let mut split = Vec::with_capacity(groups.len());
    let mut in_group = vec![false; decomp.items.len()];
    let mut depth = vec![0u32; decomp.items.len()];
    for g in groups {
        let h0 = heights[g.items[0]];
        if g.items.iter().all(|&i| heights[i] == h0) {
            split.push(g);
            continue;
        }
        for &i in &g.items {
            in_group[i] = true;
        }
        for &i in &topo {
            depth[i] = decomp.items[i]
                .producers
                .iter()
                .map(|&p| depth[p] + in_group[p] as u32)
                .max()
                .unwrap_or(0);
        }
        let mut parts: Vec<(u32, Vec<usize>)> = Vec::new();
        for &i in &g.items {
            match parts.iter_mut().find(|(d, _)| *d == depth[i]) {
                Some((_, v)) => v.push(i),
                None => parts.push((depth[i], vec![i])),
            }
        }
        parts.sort_by_key(|(d, _)| *d);
        for (_, items) in parts {
            split.push(GroupSpec { items, ..g.clone() });
        }
        for &i in &g.items {
            in_group[i] = false;
        }
    }

    match schedule(decomp, &split) {
        Some(order) => Ok(order.into_iter().map(|g| split[g].clone()).collect()),
        None => {
            // Mutual dependencies between groups: refine by height, which is
            // always acyclic.
            let mut fine: Vec<GroupSpec> = Vec::new();
            for g in &split {
                let mut parts: Vec<(u32, Vec<usize>)> = Vec::new();
                for &i in &g.items {
                    match parts.iter_mut().find(|(h, _)| *h == heights[i]) {
                        Some((_, v)) => v.push(i),
                        None => parts.push((heights[i], vec![i])),
                    }
                }
                parts.sort_by_key(|(h, _)| *h);
                for (_, items) in parts {
                    fine.push(GroupSpec { items, ..g.clone() });
                }
            }
            let order = schedule(decomp, &fine).ok_or(DecomposeError::Cycle(0))?;
            Ok(order.into_iter().map(|g| fine[g].clone()).collect())
        }
    }
}

/// Topological order of groups; ties prefer deeper levels, then lower group
/// index. `None` if the group graph has a cycle.
fn schedule(decomp: &Decomposition, groups: &[GroupSpec]) -> Option<Vec<usize>> {
    let mut owner = vec![usize::MAX; decomp.items.len()];
    for (g, spec) in groups.iter().enumerate() {
        for &i in &spec.items {
            owner[i] = g;
        }
    }
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    let mut indeg = vec![0usize; groups.len()];
    for (g, spec) in groups.iter().enumerate() {
        let mut preds: Vec<usize> = spec
            .items
            .iter()
            .flat_map(|&i| decomp.items[i].producers.iter().map(|&p| owner[p]))
            .collect();
        preds.sort_unstable();
        preds.dedup();
        for p in preds {
            if p == g {
                return None;
            }
            succ[p].push(g);
            indeg[g] += 1;
        }
    }
    let mut heap: BinaryHeap<(u32, Reverse<usize>)> = groups
        .iter()
        .enumerate()
        .filter(|(g, _)| indeg[*g] == 0)
        .map(|(g, s)| (s.level, Reverse(g)))
        .collect();
    let mut order = Vec::with_capacity(groups.len());
    while let Some((_, Reverse(g))) = heap.pop() {
        order.push(g);
        for &s in &succ[g] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                heap.push((groups[s].level, Reverse(s)));
            }
        }
    }
    (order.len() == groups.len()).then_some(order)
}

/// Full structural equality of two item bodies with cuts, used as an
/// independent check of hash-based grouping.
pub fn same_shape(arena: &ExprArena, decomp: &Decomposition, a: usize, b: usize) -> bool {
    let (ia, ib) = (&decomp.items[a], &decomp.items[b]);
    if ia.kind != ib.kind || ia.roots.len() != ib.roots.len() {
        return false;
    }
    let own = |item: &crate::decompose::Item, e: ExprRef| {
        if item.kind == ItemKind::Block {
            item.roots.iter().position(|&r| r == e)
        } else {
            None
        }
    };
    let mut stack: Vec<(ExprRef, ExprRef, bool)> =
        ia.roots.iter().zip(&ib.roots).map(|(&x, &y)| (x, y, true)).collect();
    while let Some((x, y, top)) = stack.pop() {
        if !top {
            let (ox, oy) = (own(ia, x), own(ib, y));
            if ox.is_some() || oy.is_some() {
                if ox != oy {
                    return false;
                }
                continue;
            }
            let (mx, my) = (decomp.is_materialized(x), decomp.is_materialized(y));
            if mx || my {
                let leafish = |e: ExprRef, m: bool| m || arena.op(e) == OpKind::Var;
                if !(leafish(x, mx) && leafish(y, my)) {
                    return false;
                }
                continue;
            }
        }
        let (opx, opy) = (arena.op(x), arena.op(y));
        let var_like = |op| op == OpKind::Var;
        if var_like(opx) || var_like(opy) {
            if !(var_like(opx) && var_like(opy)) {
                return false;
            }
            continue;
        }
        if opx != opy || arena.children(x).len() != arena.children(y).len() {
            return false;
        }
        if opx == OpKind::Const {
            continue;
        }
        if opx == OpKind::Pow && arena.const_value(arena.children(x)[1]) != arena.const_value(arena.children(y)[1]) {
            return false;
        }
        for (&cx, &cy) in arena.children(x).iter().zip(arena.children(y)) {
            stack.push((cx, cy, false));
        }
    }
    true
}
