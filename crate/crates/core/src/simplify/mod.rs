//! Algebraic simplification of template expressions.
//!
//! Every rule rewrites a single node whose children are already simplified.
//! A driver applies the enabled rules bottom-up over the whole expression,
//! repeating until nothing changes (or a pass cap is hit). A rewrite is only
//! kept when it does not raise the node's complexity.

mod factorize;
mod fold;
mod fractions;
mod summands;

pub use factorize::factorize;
pub use fold::fold_constants;
pub use fractions::{reduce_fractions, ProductForm};
pub use summands::eliminate_summands;

use crate::expr::{post_order, ExprArena, ExprRef};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

pub const MAX_PASSES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    Constants,
    Fractions,
    Summands,
    Factorize,
    Sqrt,
}

impl Rule {
    pub const DEFAULT_ORDER: [Rule; 5] = [
        Rule::Constants,
        Rule::Fractions,
        Rule::Summands,
        Rule::Factorize,
        Rule::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Constants => "constants",
            Rule::Fractions => "fractions",
            Rule::Summands => "summands",
            Rule::Factorize => "factorize",
            Rule::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplifyConfig {
    pub constants: bool,
    pub fractions: bool,
    pub summands: bool,
    pub factorize: bool,
    pub sqrt: bool,
    /// Master switch for rewrites that reassociate or remove sums.
    pub sums_enabled: bool,
    /// Keep factors that appear in both numerator and denominator.
    pub strict: bool,
    pub order: Vec<Rule>,
    pub max_passes: usize,
    /// Seed for the evaluation points that confirm hash-predicted constants.
    pub seed: u64,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        SimplifyConfig {
            constants: true,
            fractions: true,
            summands: true,
            factorize: true,
            sqrt: true,
            sums_enabled: true,
            strict: false,
            order: Rule::DEFAULT_ORDER.to_vec(),
            max_passes: MAX_PASSES,
            seed: 0x5eed,
        }
    }
}

impl SimplifyConfig {
    pub fn disabled() -> Self {
        SimplifyConfig {
            constants: false,
            fractions: false,
            summands: false,
            factorize: false,
            sqrt: false,
            ..SimplifyConfig::default()
        }
    }

    pub fn is_enabled(&self, rule: Rule) -> bool {
        match rule {
            Rule::Constants => self.constants,
            Rule::Fractions => self.fractions,
            Rule::Summands => self.summands && self.sums_enabled,
            Rule::Factorize => self.factorize && self.sums_enabled,
            Rule::Sqrt => self.sqrt,
        }
    }

    pub fn any_enabled(&self) -> bool {
        Rule::DEFAULT_ORDER.iter().any(|&r| self.is_enabled(r))
    }
}

/// Rewrite counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplifyStats {
    pub hits: BTreeMap<String, u64>,
    /// Reciprocal square roots left in rebuilt products.
    pub rsqrt_sites: u64,
    pub passes: u64,
}

impl SimplifyStats {
    pub fn total_hits(&self) -> u64 {
        self.hits.values().sum()
    }

    pub fn merge(&mut self, other: &SimplifyStats) {
        for (k, v) in &other.hits {
            *self.hits.entry(k.clone()).or_insert(0) += v;
        }
        self.rsqrt_sites += other.rsqrt_sites;
        self.passes += other.passes;
    }
}

/// Apply one rule to a single node. `None` means the rule does not apply.
pub fn apply_rule(arena: &mut ExprArena, e: ExprRef, rule: Rule, cfg: &SimplifyConfig) -> Option<ExprRef> {
    match rule {
        Rule::Constants => fold_constants(arena, e, cfg),
        Rule::Fractions => reduce_fractions(arena, e, !cfg.strict, false),
        Rule::Summands => eliminate_summands(arena, e),
        Rule::Factorize => factorize(arena, e),
        Rule::Sqrt => reduce_fractions(arena, e, false, true),
    }
}

/// Simplify `roots` in place in the arena and return the new roots.
pub fn simplify(
    arena: &mut ExprArena,
    roots: &[ExprRef],
    cfg: &SimplifyConfig,
    stats: &mut SimplifyStats,
) -> Vec<ExprRef> {
    let mut current = roots.to_vec();
    if !cfg.any_enabled() {
        return current;
    }
    for _ in 0..cfg.max_passes {
        stats.passes += 1;
        let mut changed = false;
        for &rule in &cfg.order {
            if !cfg.is_enabled(rule) {
                continue;
            }
            let (next, hits) = rewrite_pass(arena, &current, rule, cfg);
            if hits > 0 {
                *stats.hits.entry(rule.name().to_string()).or_insert(0) += hits;
                changed = true;
            }
            current = next;
        }
        if !changed {
            break;
        }
    }
    if cfg.fractions || cfg.sqrt {
        stats.rsqrt_sites += fractions::count_rsqrt(arena, &current);
    }
    current
}

/// One bottom-up sweep of a single rule.
fn rewrite_pass(arena: &mut ExprArena, roots: &[ExprRef], rule: Rule, cfg: &SimplifyConfig) -> (Vec<ExprRef>, u64) {
    let order = post_order(arena, roots);
    let mut map: HashMap<ExprRef, ExprRef> = HashMap::with_capacity(order.len());
    let mut hits = 0u64;
    for e in order {
        if arena.is_leaf(e) {
            map.insert(e, e);
            continue;
        }
        let kids: Vec<ExprRef> = arena.children(e).iter().map(|c| map[c]).collect();
        let rebuilt = if kids.as_slice() == arena.children(e) {
            e
        } else {
            arena
                .apply(arena.op(e), &kids)
                .expect("rebuilding with simplified children keeps arity")
        };
        let out = match apply_rule(arena, rebuilt, rule, cfg) {
            Some(n) if n != rebuilt && arena.complexity(n) <= arena.complexity(rebuilt) => {
                hits += 1;
                n
            }
            _ => rebuilt,
        };
        map.insert(e, out);
    }
    (roots.iter().map(|r| map[r]).collect(), hits)
}
