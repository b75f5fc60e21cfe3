//! Build emitted source with the system C compiler and run it through the
//! benchmark harness. Used by the `bench` command and the cross-backend
//! tests; nothing here is needed to interpret a plan.

use super::{emit_harness, emit_source, EmitOptions, ExecutionPlan, Parallel};
use std::path::{Path, PathBuf};
use std::process::Command;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NativeError {
    #[error("no C compiler found (set CC or install cc)")]
    NoCompiler,
    #[error("cannot access {path}", path = path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("compiler failed ({status}):\n{stderr}")]
    Compile { status: String, stderr: String },
    #[error("harness failed ({status}):\n{stderr}")]
    Run { status: String, stderr: String },
    #[error("unexpected harness output: {0}")]
    Output(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> NativeError + '_ {
    move |source| NativeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn works(cc: &Path) -> bool {
    Command::new(cc)
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

/// `$CC` if set, otherwise the first of `cc`, `gcc`, `clang` that runs.
pub fn find_cc() -> Option<PathBuf> {
    if let Some(cc) = std::env::var_os("CC").filter(|v| !v.is_empty()) {
        let cc = PathBuf::from(cc);
        return works(&cc).then_some(cc);
    }
    ["cc", "gcc", "clang"].into_iter().map(PathBuf::from).find(|c| works(c))
}

/// Flags used for every build. Contraction and fast-math stay off so the
/// binary rounds exactly like the interpreter.
pub const CFLAGS: &[&str] = &[
    "-std=c99",
    "-O3",
    "-march=native",
    "-ffp-contract=off",
    "-fno-fast-math",
];

#[derive(Clone, Debug)]
pub struct NativeProgram {
    pub dir: PathBuf,
    pub source: PathBuf,
    pub exe: PathBuf,
}

/// Emit `kernels.c` and `harness.c` into `dir` and compile them.
pub fn build_native(
    plan: &ExecutionPlan,
    opts: &EmitOptions,
    dir: &Path,
    cc: &Path,
) -> Result<NativeProgram, NativeError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let source = dir.join("kernels.c");
    let harness = dir.join("harness.c");
    let exe = dir.join("sg_bench");
    std::fs::write(&source, emit_source(plan, opts)).map_err(io(&source))?;
    std::fs::write(&harness, emit_harness()).map_err(io(&harness))?;
    let mut cmd = Command::new(cc);
    cmd.args(CFLAGS);
    if opts.parallel == Parallel::Pragma {
        cmd.arg("-fopenmp");
    }
    cmd.arg("-o").arg(&exe).arg(&source).arg(&harness).arg("-lm");
    let out = cmd.output().map_err(io(cc))?;
    if !out.status.success() {
        return Err(NativeError::Compile {
            status: out.status.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        });
    }
    Ok(NativeProgram {
        dir: dir.to_path_buf(),
        source,
        exe,
    })
}

#[derive(Clone, Debug)]
pub struct NativeRun {
    /// The whole value array after the last run.
    pub values: Vec<f64>,
    pub mean_seconds: f64,
}

fn write_le<T: Copy>(path: &Path, data: &[T], to_bytes: impl Fn(T) -> Vec<u8>) -> Result<(), NativeError> {
    let bytes: Vec<u8> = data.iter().flat_map(|&v| to_bytes(v)).collect();
    std::fs::write(path, bytes).map_err(io(path))
}

/// Run the harness once untimed, then `iters` timed runs.
pub fn run_native(
    prog: &NativeProgram,
    plan: &ExecutionPlan,
    inputs: &[f64],
    iters: u64,
) -> Result<NativeRun, NativeError> {
    if inputs.len() as u64 != plan.n_inputs {
        return Err(NativeError::Output(format!(
            "expected {} inputs, got {}",
            plan.n_inputs,
            inputs.len()
        )));
    }
    let d = &prog.dir;
    let (fin, fc, fp, fout) = (
        d.join("inputs.bin"),
        d.join("consts.bin"),
        d.join("positions.bin"),
        d.join("out.bin"),
    );
    write_le(&fin, inputs, |v| v.to_le_bytes().to_vec())?;
    write_le(&fc, &plan.constants, |v| v.to_le_bytes().to_vec())?;
    write_le(&fp, &plan.positions, |v| v.to_le_bytes().to_vec())?;
    let out = Command::new(&prog.exe)
        .arg(plan.value_len.to_string())
        .arg(plan.n_inputs.to_string())
        .arg(plan.constants.len().to_string())
        .arg(plan.positions.len().to_string())
        .args([&fin, &fc, &fp, &fout])
        .arg(iters.to_string())
        .output()
        .map_err(io(&prog.exe))?;
    if !out.status.success() {
        return Err(NativeError::Run {
            status: out.status.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        });
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mean_seconds: f64 = stdout
        .trim()
        .parse()
        .map_err(|_| NativeError::Output(stdout.trim().to_string()))?;
    let bytes = std::fs::read(&fout).map_err(io(&fout))?;
    if bytes.len() as u64 != plan.value_len * 8 {
        return Err(NativeError::Output(format!(
            "value file has {} bytes, expected {}",
            bytes.len(),
            plan.value_len * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(NativeRun { values, mean_seconds })
}
