//! Plan files on disk: `manifest.json` (kernels and layout), `data.bin`
//! (position and constant tables) and an optional `stats.json`.

use super::blob::{decode_blob, encode_blob, BlobError};
use super::{ColumnAccess, ExecutionPlan, Kernel, PlanError, PlanMeta};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot access {path}", path = path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("data blob: {0}")]
    Blob(#[from] BlobError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("manifest format {0} is not supported")]
    Format(u32),
    #[error("manifest expects {what} of length {expected}, blob has {got}")]
    Mismatch {
        what: &'static str,
        expected: u64,
        got: u64,
    },
}

/// Human-oriented per-kernel summary stored next to the full kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub name: String,
    pub level: u32,
    pub instances: u64,
    pub template_nodes: usize,
    pub locals: usize,
    pub indexed_slots: u32,
    pub coherent_slots: usize,
    pub constant_slots: u32,
    pub coalesced: bool,
}

impl KernelSummary {
    pub fn of(k: &Kernel) -> Self {
        KernelSummary {
            name: k.name.clone(),
            level: k.level,
            instances: k.instances,
            template_nodes: k.template.nodes.len(),
            locals: k.locals.len(),
            indexed_slots: k.p_slots,
            coherent_slots: k
                .columns
                .iter()
                .filter(|c| matches!(c, ColumnAccess::Coherent { .. }))
                .count(),
            constant_slots: k.c_slots,
            coalesced: k.coalesced,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub n_inputs: u64,
    pub value_len: u64,
    pub outputs: Vec<u64>,
    pub positions_len: u64,
    pub constants_len: u64,
    pub meta: PlanMeta,
    pub summary: Vec<KernelSummary>,
    pub kernels: Vec<Kernel>,
}

impl Manifest {
    pub fn of(plan: &ExecutionPlan) -> Self {
        Manifest {
            format: MANIFEST_FORMAT,
            n_inputs: plan.n_inputs,
            value_len: plan.value_len,
            outputs: plan.outputs.clone(),
            positions_len: plan.positions.len() as u64,
            constants_len: plan.constants.len() as u64,
            meta: plan.meta.clone(),
            summary: plan.kernels.iter().map(KernelSummary::of).collect(),
            kernels: plan.kernels.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanFiles {
    pub manifest: PathBuf,
    pub blob: PathBuf,
    pub stats: PathBuf,
}

impl PlanFiles {
    pub fn in_dir(dir: &Path) -> Self {
        PlanFiles {
            manifest: dir.join("manifest.json"),
            blob: dir.join("data.bin"),
            stats: dir.join("stats.json"),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write manifest, blob and (when given) statistics into `dir`.
pub fn save_plan(
    plan: &ExecutionPlan,
    dir: &Path,
    stats: Option<&serde_json::Value>,
) -> Result<PlanFiles, ManifestError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let files = PlanFiles::in_dir(dir);
    let mut text = serde_json::to_string_pretty(&Manifest::of(plan))?;
    text.push('\n');
    std::fs::write(&files.manifest, text).map_err(io(&files.manifest))?;
    std::fs::write(&files.blob, encode_blob(&plan.positions, &plan.constants)).map_err(io(&files.blob))?;
    if let Some(s) = stats {
        let mut text = serde_json::to_string_pretty(s)?;
        text.push('\n');
        std::fs::write(&files.stats, text).map_err(io(&files.stats))?;
    }
    Ok(files)
}

/// Rebuild and validate a plan from manifest text and blob bytes.
pub fn parse_plan(manifest: &str, blob: &[u8]) -> Result<ExecutionPlan, ManifestError> {
    let m: Manifest = serde_json::from_str(manifest)?;
    if m.format != MANIFEST_FORMAT {
        return Err(ManifestError::Format(m.format));
    }
    let data = decode_blob(blob)?;
    if data.positions.len() as u64 != m.positions_len {
        return Err(ManifestError::Mismatch {
            what: "positions",
            expected: m.positions_len,
            got: data.positions.len() as u64,
        });
    }
    if data.constants.len() as u64 != m.constants_len {
        return Err(ManifestError::Mismatch {
            what: "constants",
            expected: m.constants_len,
            got: data.constants.len() as u64,
        });
    }
    let plan = ExecutionPlan {
        n_inputs: m.n_inputs,
        value_len: m.value_len,
        outputs: m.outputs,
        kernels: m.kernels,
        positions: data.positions,
        constants: data.constants,
        meta: m.meta,
    };
    plan.validate()?;
    Ok(plan)
}

pub fn load_plan(dir: &Path) -> Result<ExecutionPlan, ManifestError> {
    let files = PlanFiles::in_dir(dir);
    let text = std::fs::read_to_string(&files.manifest).map_err(io(&files.manifest))?;
    let blob = std::fs::read(&files.blob).map_err(io(&files.blob))?;
    parse_plan(&text, &blob)
}
