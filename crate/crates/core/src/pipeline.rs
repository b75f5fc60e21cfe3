//! End-to-end compilation: decomposition, grouping, harvesting,
//! simplification, local decomposition and memory planning.

use crate::codegen::{build_plan, ExecutionPlan, KernelInput, LayoutConfig, PlanError, PlanMeta};
use crate::decompose::{global_decompose, DecomposeConfig, DecomposeError, Decomposition};
use crate::expr::{check_hash_collisions, CollisionReport, ExprArena, ExprRef};
use crate::group::{group_items, GroupSpec};
use crate::simplify::{simplify, SimplifyConfig, SimplifyStats};
use crate::template::{build_template, classify_columns, harvest_leaves, local_decompose, HarvestError, Template};
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error("group {group}: {source}")]
    Harvest { group: usize, source: HarvestError },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub decompose: DecomposeConfig,
    /// `None` skips simplification entirely.
    pub simplify: Option<SimplifyConfig>,
    pub layout: LayoutConfig,
    pub check_collisions: bool,
    pub program: Option<serde_json::Value>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            decompose: DecomposeConfig::default(),
            simplify: Some(SimplifyConfig::default()),
            layout: LayoutConfig::default(),
            check_collisions: false,
            program: None,
        }
    }
}

impl PipelineConfig {
    /// Configuration whose plan reproduces the traced arithmetic exactly.
    pub fn exact() -> Self {
        PipelineConfig {
            simplify: None,
            ..PipelineConfig::default()
        }
    }
}

/// Statistics in the shape of a per-stage report.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PipelineStats {
    pub arena_nodes: usize,
    pub arena_bytes: usize,
    pub variables: u32,
    pub outputs: usize,
    pub items: usize,
    pub globals: usize,
    pub blocks: usize,
    pub groups: usize,
    pub template_nodes: usize,
    pub local_slots: usize,
    pub value_len: u64,
    pub positions: usize,
    pub constants: usize,
    /// Group size → number of groups of that size.
    pub group_sizes: BTreeMap<usize, usize>,
    pub simplify: SimplifyStats,
    pub collisions: Option<CollisionReport>,
    /// Wall-clock seconds per stage.
    pub seconds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct Compiled {
    pub plan: ExecutionPlan,
    pub decomposition: Decomposition,
    pub groups: Vec<GroupSpec>,
    pub kernels: Vec<KernelInput>,
    pub stats: PipelineStats,
}

/// Harvest, classify and build the template of one group.
pub fn group_template(
    arena: &ExprArena,
    decomp: &Decomposition,
    group: &GroupSpec,
) -> Result<KernelInput, HarvestError> {
    let h = harvest_leaves(arena, decomp, &group.items)?;
    let classes = classify_columns(&h.table)?;
    let template = build_template(&h.shape, &classes)?;
    Ok(KernelInput {
        items: group.items.clone(),
        kind: group.kind,
        level: group.level,
        template,
        classes,
        table: h.table,
        locals: Vec::new(),
    })
}

/// Simplify a template in a scratch arena; columns become variables with the
/// same ids.
pub fn simplify_template(
    t: &Template,
    cfg: &SimplifyConfig,
    costs: &crate::expr::CostTable,
    stats: &mut SimplifyStats,
) -> Template {
    let mut scratch = ExprArena::with_costs(costs.clone());
    let roots = t.to_expr(&mut scratch, &|c| c);
    let out = simplify(&mut scratch, &roots, cfg, stats);
    Template::from_expr(&scratch, &out, &|v| v)
}

pub fn compile(
    arena: &ExprArena,
    outputs: &[ExprRef],
    blocks: &[Vec<ExprRef>],
    cfg: &PipelineConfig,
) -> Result<Compiled, PipelineError> {
    let mut stats = PipelineStats {
        arena_nodes: arena.len(),
        arena_bytes: arena.stats().estimated_bytes,
        variables: arena.var_count(),
        outputs: outputs.len(),
        ..PipelineStats::default()
    };
    let mut clock = Instant::now();
    let mut lap = |name: &str, stats: &mut PipelineStats| {
        let now = Instant::now();
        stats.seconds.insert(name.to_string(), (now - clock).as_secs_f64());
        clock = now;
    };

    if cfg.check_collisions {
        stats.collisions = Some(check_hash_collisions(arena));
        lap("collisions", &mut stats);
    }

    let decomp = global_decompose(arena, outputs, blocks, &cfg.decompose)?;
    stats.items = decomp.items.len();
    stats.globals = decomp.globals.len();
    stats.blocks = decomp.blocks.len();
    lap("decompose", &mut stats);

    let groups = group_items(arena, &decomp)?;
    stats.groups = groups.len();
    for g in &groups {
        *stats.group_sizes.entry(g.items.len()).or_insert(0) += 1;
    }
    lap("group", &mut stats);

    let mut kernels = Vec::with_capacity(groups.len());
    for (gi, g) in groups.iter().enumerate() {
        let k = group_template(arena, &decomp, g).map_err(|source| PipelineError::Harvest { group: gi, source })?;
        kernels.push(k);
    }
    lap("harvest", &mut stats);

    if let Some(sc) = &cfg.simplify {
        for k in &mut kernels {
            k.template = simplify_template(&k.template, sc, arena.costs(), &mut stats.simplify);
        }
    }
    lap("simplify", &mut stats);

    for k in &mut kernels {
        k.locals = local_decompose(&k.template, arena.costs());
        stats.template_nodes += k.template.nodes.len();
        stats.local_slots += k.locals.len();
    }
    lap("local", &mut stats);

    let meta = PlanMeta {
        simplified: cfg.simplify.as_ref().is_some_and(|s| s.any_enabled()),
        vector_width: cfg.layout.vector_width,
        t_ref: cfg.decompose.t_ref,
        t_compl: cfg.decompose.t_compl,
        program: cfg.program.clone(),
    };
    let plan = build_plan(arena, &decomp, &kernels, &cfg.layout, meta)?;
    stats.value_len = plan.value_len;
    stats.positions = plan.positions.len();
    stats.constants = plan.constants.len();
    lap("plan", &mut stats);

    Ok(Compiled {
        plan,
        decomposition: decomp,
        groups,
        kernels,
        stats,
    })
}
