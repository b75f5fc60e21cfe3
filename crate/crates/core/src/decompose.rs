//! Global decomposition: choose which shared subexpressions are materialized
//! in the value array, and build the dependency graph between the resulting
//! items (outputs, global intermediates and tagged blocks).

use crate::expr::{ExprArena, ExprRef};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("t_ref must be at least 2, got {0}")]
    BadThreshold(u32),
    #[error("dependency graph has a cycle through item {0}; check block tags")]
    Cycle(usize),
    #[error("expression reference {0} is not in this arena")]
    InvalidRef(ExprRef),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub t_ref: u32,
    pub t_compl: u64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig { t_ref: 2, t_compl: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ItemKind {
    Output,
    Global,
    Block,
}

/// One node of the dependency graph: a set of roots computed together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Item {
    pub kind: ItemKind,
    pub roots: Vec<ExprRef>,
    /// Items whose results this item reads, sorted.
    pub producers: Vec<usize>,
    /// Shortest distance from an item holding an output.
    pub level: u32,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub items: Vec<Item>,
    pub globals: Vec<ExprRef>,
    pub blocks: Vec<Vec<ExprRef>>,
    /// Materialized non-leaf node → (item, root index).
    pub location: HashMap<ExprRef, (usize, usize)>,
    /// For every requested output: (item, root index).
    pub outputs: Vec<(usize, usize)>,
}

impl Decomposition {
    pub fn is_materialized(&self, e: ExprRef) -> bool {
        self.location.contains_key(&e)
    }

    /// Items in an order where producers precede consumers.
    pub fn topological_order(&self) -> Result<Vec<usize>, DecomposeError> {
        topo_sort(&self.items)
    }

    pub fn to_dot(&self, arena: &ExprArena) -> String {
        let mut s = String::from("digraph deps {\n");
        for (i, it) in self.items.iter().enumerate() {
            let label = it
                .roots
                .iter()
                .map(|r| format!("{r}:{}", arena.op(*r)))
                .collect::<Vec<_>>()
                .join(" ");
            s.push_str(&format!("  n{i} [label=\"{:?} L{} {label}\"];\n", it.kind, it.level));
            for p in &it.producers {
                s.push_str(&format!("  n{i} -> n{p};\n"));
            }
        }
        s.push_str("}\n");
        s
    }
}

/// DAG in-edge counts reachable from `roots`, counting each unique node's
/// children once (shared subtrees are not re-entered).
pub fn count_references(arena: &ExprArena, roots: &[ExprRef]) -> Vec<u32> {
    let mut counts = vec![0u32; arena.len()];
    let mut seen = vec![false; arena.len()];
    let mut stack: Vec<ExprRef> = Vec::new();
    for &r in roots {
        if !seen[r.index()] {
            seen[r.index()] = true;
            stack.push(r);
        }
        while let Some(e) = stack.pop() {
            for &c in arena.children(e) {
                counts[c.index()] += 1;
                if !seen[c.index()] {
                    seen[c.index()] = true;
                    stack.push(c);
                }
            }
        }
    }
    counts
}

fn topo_sort(items: &[Item]) -> Result<Vec<usize>, DecomposeError> {
    let n = items.len();
    let mut pending: Vec<usize> = items.iter().map(|it| it.producers.len()).collect();
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, it) in items.iter().enumerate() {
        for &p in &it.producers {
            consumers[p].push(i);
        }
    }
    let mut ready: VecDeque<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_front() {
        order.push(i);
        for &c in &consumers[i] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.push_back(c);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| pending[i] > 0).unwrap_or(0);
        return Err(DecomposeError::Cycle(stuck));
    }
    Ok(order)
}

/// Select global intermediates and build the item dependency graph.
///
/// Candidates are non-leaf nodes referenced at least `t_ref` times. Candidates
/// whose (full) complexity is below `t_compl` stay inline in their consumers.
/// Candidates reached from only one item are demoted to locals of that item,
/// repeatedly, until no more change.
pub fn global_decompose(
    arena: &ExprArena,
    outputs: &[ExprRef],
    blocks: &[Vec<ExprRef>],
    cfg: &DecomposeConfig,
) -> Result<Decomposition, DecomposeError> {
    if cfg.t_ref < 2 {
        return Err(DecomposeError::BadThreshold(cfg.t_ref));
    }
    for &o in outputs.iter().chain(blocks.iter().flatten()) {
        if !arena.contains(o) {
            return Err(DecomposeError::InvalidRef(o));
        }
    }
    let n = arena.len();
    let counts = count_references(arena, outputs);
    let mut reachable = vec![false; n];
    for e in crate::expr::post_order(arena, outputs) {
        reachable[e.index()] = true;
    }

    // Effective blocks: reachable non-leaf members, in index order so a
    // member never depends on a later one.
    let mut block_of: Vec<u32> = vec![u32::MAX; n];
    let mut eff_blocks: Vec<Vec<ExprRef>> = Vec::new();
    for b in blocks {
        let mut members: Vec<ExprRef> = b
            .iter()
            .copied()
            .filter(|&e| reachable[e.index()] && !arena.is_leaf(e) && block_of[e.index()] == u32::MAX)
            .collect();
        members.sort();
        members.dedup();
        if members.is_empty() {
            continue;
        }
        for &m in &members {
            block_of[m.index()] = eff_blocks.len() as u32;
        }
        eff_blocks.push(members);
    }

    let mut fixed = vec![false; n];
    for &o in outputs {
        if !arena.is_leaf(o) {
            fixed[o.index()] = true;
        }
    }
    for b in &eff_blocks {
        for m in b {
            fixed[m.index()] = true;
        }
    }

    let mut is_global = vec![false; n];
    for e in arena.refs() {
        let i = e.index();
        if reachable[i]
            && !fixed[i]
            && !arena.is_leaf(e)
            && counts[i] >= cfg.t_ref
            && arena.complexity(e) >= cfg.t_compl
        {
            is_global[i] = true;
        }
    }

    let mut stamp = vec![u32::MAX; n];
    loop {
        let items = layout_items(arena, outputs, &eff_blocks, &is_global, &block_of);
        // owner[g] = first item reaching g, or usize::MAX - 1 when several.
        const MANY: usize = usize::MAX - 1;
        let mut owner = vec![usize::MAX; n];
        for s in stamp.iter_mut() {
            *s = u32::MAX;
        }
        for (ii, roots) in items.iter().enumerate() {
            walk_body(arena, roots, ii as u32, &mut stamp, &fixed, &is_global, |e| {
                if is_global[e.index()] {
                    let o = &mut owner[e.index()];
                    if *o == usize::MAX {
                        *o = ii;
                    } else if *o != ii {
                        *o = MANY;
                    }
                }
            });
        }
        let mut changed = false;
        for e in arena.refs() {
            if is_global[e.index()] && owner[e.index()] != MANY {
                is_global[e.index()] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let roots_per_item = layout_items(arena, outputs, &eff_blocks, &is_global, &block_of);
    let mut location = HashMap::new();
    let mut leaf_item = HashMap::new();
    let mut kinds = Vec::with_capacity(roots_per_item.len());
    for (ii, roots) in roots_per_item.iter().enumerate() {
        let kind = if block_of[roots[0].index()] != u32::MAX {
            ItemKind::Block
        } else if is_global[roots[0].index()] {
            ItemKind::Global
        } else {
            ItemKind::Output
        };
        kinds.push(kind);
        for (ri, &r) in roots.iter().enumerate() {
            if arena.is_leaf(r) {
                leaf_item.insert(r, ii);
            } else {
                location.insert(r, (ii, ri));
            }
        }
    }

    let mut items: Vec<Item> = Vec::with_capacity(roots_per_item.len());
    for s in stamp.iter_mut() {
        *s = u32::MAX;
    }
    for (ii, roots) in roots_per_item.iter().enumerate() {
        let mut producers = Vec::new();
        walk_cut_points(arena, roots, ii as u32, &mut stamp, &fixed, &is_global, |e| {
            let (p, _) = location[&e];
            if p != ii {
                producers.push(p);
            }
        });
        producers.sort_unstable();
        producers.dedup();
        items.push(Item {
            kind: kinds[ii],
            roots: roots.clone(),
            producers,
            level: u32::MAX,
        });
    }

    let outputs_loc: Vec<(usize, usize)> = outputs
        .iter()
        .map(|o| location.get(o).copied().unwrap_or_else(|| (leaf_item[o], 0)))
        .collect();

    // Levels: BFS over consumer → producer edges from items holding outputs.
    let mut queue = VecDeque::new();
    for &(ii, _) in &outputs_loc {
        if items[ii].level == u32::MAX {
            items[ii].level = 0;
            queue.push_back(ii);
        }
    }
    while let Some(i) = queue.pop_front() {
        let next = items[i].level + 1;
        for k in 0..items[i].producers.len() {
            let p = items[i].producers[k];
            if items[p].level == u32::MAX {
                items[p].level = next;
                queue.push_back(p);
            }
        }
    }

    let globals: Vec<ExprRef> = arena.refs().filter(|e| is_global[e.index()]).collect();
    let d = Decomposition {
        items,
        globals,
        blocks: eff_blocks,
        location,
        outputs: outputs_loc,
    };
    d.topological_order()?;
    Ok(d)
}

/// Roots of every item: outputs first (in order of first appearance), then
/// blocks, then globals in index order.
fn layout_items(
    arena: &ExprArena,
    outputs: &[ExprRef],
    blocks: &[Vec<ExprRef>],
    is_global: &[bool],
    block_of: &[u32],
) -> Vec<Vec<ExprRef>> {
    let mut items: Vec<Vec<ExprRef>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &o in outputs {
        if block_of[o.index()] == u32::MAX && seen.insert(o) {
            items.push(vec![o]);
        }
    }
    for b in blocks {
        items.push(b.clone());
    }
    for e in arena.refs() {
        if is_global[e.index()] {
            items.push(vec![e]);
        }
    }
    items
}

/// Visit every node of the item's body: everything reachable from the roots
/// without entering other materialized nodes (which are visited as cut
/// points but not descended into).
fn walk_body(
    arena: &ExprArena,
    roots: &[ExprRef],
    id: u32,
    stamp: &mut [u32],
    fixed: &[bool],
    is_global: &[bool],
    mut f: impl FnMut(ExprRef),
) {
    let mut stack: Vec<ExprRef> = roots.to_vec();
    for r in roots {
        stamp[r.index()] = id;
    }
    while let Some(e) = stack.pop() {
        for &c in arena.children(e) {
            if stamp[c.index()] == id {
                continue;
            }
            stamp[c.index()] = id;
            f(c);
            if !(fixed[c.index()] || is_global[c.index()]) {
                stack.push(c);
            }
        }
    }
}

fn walk_cut_points(
    arena: &ExprArena,
    roots: &[ExprRef],
    id: u32,
    stamp: &mut [u32],
    fixed: &[bool],
    is_global: &[bool],
    mut f: impl FnMut(ExprRef),
) {
    walk_body(arena, roots, id, stamp, fixed, is_global, |c| {
        if fixed[c.index()] || is_global[c.index()] {
            f(c)
        }
    });
}
