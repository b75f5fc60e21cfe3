use super::{ExprArena, ExprRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Pre,
    Post,
}

/// Callback for [`traverse`]. `descend` is asked before a node's children are
/// entered; returning false prunes the subtree below (the node itself is still
/// visited).
pub trait Visitor {
    fn descend(&mut self, _arena: &ExprArena, _e: ExprRef) -> bool {
        true
    }
    fn visit(&mut self, arena: &ExprArena, e: ExprRef);
}

impl<F: FnMut(&ExprArena, ExprRef)> Visitor for F {
    fn visit(&mut self, arena: &ExprArena, e: ExprRef) {
        self(arena, e)
    }
}

/// Depth-first traversal from `roots`, children in stored order. With
/// `skip_visited` each node is visited once across all roots; without it the
/// walk is a full tree walk.
pub fn traverse<V: Visitor + ?Sized>(
    arena: &ExprArena,
    roots: &[ExprRef],
    order: Order,
    skip_visited: bool,
    visitor: &mut V,
) {
    let mut seen = if skip_visited {
        vec![false; arena.len()]
    } else {
        Vec::new()
    };
    // (node, next child index, descend?)
    let mut stack: Vec<(ExprRef, usize, bool)> = Vec::new();
    for &root in roots {
        if skip_visited {
            if seen[root.index()] {
                continue;
            }
            seen[root.index()] = true;
        }
        let d = visitor.descend(arena, root);
        if order == Order::Pre {
            visitor.visit(arena, root);
        }
        stack.push((root, 0, d));
        while let Some(top) = stack.last_mut() {
            let (e, i, d) = *top;
            let kids = arena.children(e);
            if d && i < kids.len() {
                top.1 += 1;
                let c = kids[i];
                if skip_visited {
                    if seen[c.index()] {
                        continue;
                    }
                    seen[c.index()] = true;
                }
                let dc = visitor.descend(arena, c);
                if order == Order::Pre {
                    visitor.visit(arena, c);
                }
                stack.push((c, 0, dc));
            } else {
                stack.pop();
                if order == Order::Post {
                    visitor.visit(arena, e);
                }
            }
        }
    }
}

/// Distinct nodes reachable from `roots`, children before parents.
pub fn post_order(arena: &ExprArena, roots: &[ExprRef]) -> Vec<ExprRef> {
    let mut out = Vec::new();
    traverse(arena, roots, Order::Post, true, &mut |_: &ExprArena, e| out.push(e));
    out
}
