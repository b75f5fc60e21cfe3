//! `sparsegen` command-line front end.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsegen::codegen::{
    build_native, emit_source, find_cc, load_plan, run_native, save_plan, EmitOptions, ExecutionPlan, Interpreter,
    LayoutConfig, Parallel,
};
use sparsegen::decompose::{global_decompose, DecomposeConfig};
use sparsegen::expr::{eval_numeric, eval_tree};
use sparsegen::pipeline::{compile, PipelineConfig};
use sparsegen::programs::{trace_program, PatternSource, ProgramKind, ProgramSpec, TracedProgram};
use sparsegen::simplify::SimplifyConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "sparsegen",
    version,
    about = "Generate sparsity-specific kernels from traced programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trace a built-in program, compile it and write the plan files.
    Trace {
        #[command(flatten)]
        program: ProgramArgs,
        #[command(flatten)]
        opts: CompileArgs,
        /// Output directory for manifest.json, data.bin and stats.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a plan on random inputs and compare it with the traced oracle.
    Check {
        plan: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write the plan as one C99 translation unit.
    Emit {
        plan: PathBuf,
        /// Defaults to kernels.c inside the plan directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ParallelArg::Pragma)]
        parallel: ParallelArg,
        #[arg(long, default_value_t = 4)]
        vector_width: u32,
    },
    /// Time naive tree walking, the interpreter and the compiled source.
    Bench {
        plan: PathBuf,
        #[arg(long, default_value_t = 100)]
        iters: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ParallelArg::None)]
        parallel: ParallelArg,
        #[arg(long, default_value_t = 4)]
        vector_width: u32,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the dependency graph of the global decomposition (Graphviz).
    DumpDeps {
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long, default_value_t = 2)]
        tref: u32,
        #[arg(long, default_value_t = 8)]
        tcompl: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ProgramArgs {
    /// expr1, expr2, expr3, lpow2, lpow3, lpow4, cotan or energy-hessian.
    #[arg(long)]
    program: ProgramKind,
    /// random:n,nnz,seed | grid:WxH | mtx:path
    #[arg(long)]
    pattern: PatternSource,
    /// Tag per-element blocks (the default).
    #[arg(long, overrides_with = "no_tag")]
    tag: bool,
    #[arg(long, overrides_with = "tag")]
    no_tag: bool,
}

impl ProgramArgs {
    fn spec(&self) -> ProgramSpec {
        ProgramSpec {
            program: self.program,
            pattern: self.pattern.clone(),
            tag: !self.no_tag,
        }
    }
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long, default_value_t = 2)]
    tref: u32,
    #[arg(long, default_value_t = 8)]
    tcompl: u64,
    #[arg(long)]
    no_simplify: bool,
    /// Keep sums as traced (no summand elimination or factorization).
    #[arg(long)]
    no_simplify_sums: bool,
    #[arg(long)]
    no_coalesce: bool,
    #[arg(long)]
    no_coherence: bool,
    /// Verify that no two distinct nodes share a hash.
    #[arg(long)]
    check_collisions: bool,
    #[arg(long, default_value_t = 4)]
    vector_width: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParallelArg {
    None,
    Pragma,
}

impl From<ParallelArg> for Parallel {
    fn from(p: ParallelArg) -> Parallel {
        match p {
            ParallelArg::None => Parallel::None,
            ParallelArg::Pragma => Parallel::Pragma,
        }
    }
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Verify(String),
    Error(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Trace { program, opts, out } => cmd_trace(&program, &opts, &out).map_err(Failure::from),
        Cmd::Check { plan, seed } => cmd_check(&plan, seed),
        Cmd::Emit {
            plan,
            out,
            parallel,
            vector_width,
        } => cmd_emit(&plan, out, parallel, vector_width).map_err(Failure::from),
        Cmd::Bench {
            plan,
            iters,
            seed,
            parallel,
            vector_width,
            json,
        } => cmd_bench(&plan, iters, seed, parallel, vector_width, json).map_err(Failure::from),
        Cmd::DumpDeps {
            program,
            tref,
            tcompl,
            out,
        } => cmd_dump_deps(&program, tref, tcompl, out).map_err(Failure::from),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn pipeline_config(spec: &ProgramSpec, o: &CompileArgs) -> Result<PipelineConfig> {
    let simplify = (!o.no_simplify).then(|| SimplifyConfig {
        sums_enabled: !o.no_simplify_sums,
        ..SimplifyConfig::default()
    });
    Ok(PipelineConfig {
        decompose: DecomposeConfig {
            t_ref: o.tref,
            t_compl: o.tcompl,
        },
        simplify,
        layout: LayoutConfig {
            vector_width: o.vector_width.max(1),
            coalesce: !o.no_coalesce,
            coherence: !o.no_coherence,
        },
        check_collisions: o.check_collisions,
        program: Some(serde_json::to_value(spec)?),
    })
}

fn cmd_trace(program: &ProgramArgs, opts: &CompileArgs, out: &Path) -> Result<()> {
    let spec = program.spec();
    let cfg = pipeline_config(&spec, opts)?;
    let t0 = Instant::now();
    let traced = trace_program(&spec)?;
    let trace_secs = t0.elapsed().as_secs_f64();
    let compiled = compile(&traced.arena, &traced.outputs, &traced.blocks, &cfg)?;
    let s = &compiled.stats;
    let analysis: f64 = ["collisions", "decompose", "group", "harvest", "simplify", "local"]
        .iter()
        .filter_map(|k| s.seconds.get(*k))
        .sum();
    let stats = serde_json::json!({
        "program": spec,
        "matrices": traced.matrices,
        "stages": {
            "execution": trace_secs,
            "analysis": analysis,
            "generation": s.seconds.get("plan").copied().unwrap_or(0.0),
        },
        "pipeline": s,
    });
    save_plan(&compiled.plan, out, Some(&stats))?;

    println!("program   {} on {}", spec.program, spec.pattern);
    println!(
        "trace     {} nodes, {} inputs, {} outputs, {} blocks",
        s.arena_nodes,
        s.variables,
        s.outputs,
        traced.blocks.len()
    );
    println!("decompose {} items, {} globals", s.items, s.globals);
    println!(
        "kernels   {} groups, {} template nodes, {} locals",
        s.groups, s.template_nodes, s.local_slots
    );
    println!("simplify  {} rewrites", s.simplify.total_hits());
    if let Some(c) = &s.collisions {
        println!("hashes    {} collisions", c.total());
    }
    println!(
        "layout    {} values, {} positions, {} constants",
        s.value_len, s.positions, s.constants
    );
    println!("wrote     {}", out.display());
    Ok(())
}

/// Re-trace the program recorded in the plan metadata.
fn retrace(plan: &ExecutionPlan) -> Result<(ProgramSpec, TracedProgram)> {
    let v = plan
        .meta
        .program
        .clone()
        .context("plan does not record the traced program")?;
    let spec: ProgramSpec = serde_json::from_value(v).context("bad program record in manifest")?;
    let traced = trace_program(&spec)?;
    if traced.n_inputs() as u64 != plan.n_inputs || traced.outputs.len() != plan.outputs.len() {
        bail!(
            "plan has {} inputs and {} outputs, the program traces to {} and {}",
            plan.n_inputs,
            plan.outputs.len(),
            traced.n_inputs(),
            traced.outputs.len()
        );
    }
    Ok((spec, traced))
}

fn cmd_check(dir: &Path, seed: u64) -> Result<(), Failure> {
    let plan = load_plan(dir).context("loading plan").map_err(Failure::Error)?;
    let (spec, traced) = retrace(&plan)?;
    let x = traced.inputs(seed);
    let want = eval_numeric(&traced.arena, &traced.outputs, &x).map_err(anyhow::Error::from)?;
    let interp = Interpreter::new(&plan).map_err(anyhow::Error::from)?.check_writes(true);
    let values = interp
        .run(&x)
        .map_err(|e| Failure::Verify(format!("run failed: {e}")))?;
    let got = interp.outputs(&values);
    let bitwise = !plan.meta.simplified;
    let mut bad = 0usize;
    let mut worst = 0.0f64;
    for (a, b) in got.iter().zip(&want) {
        let ok = if bitwise {
            a.to_bits() == b.to_bits()
        } else {
            let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(if a == b { 0.0 } else { rel });
            a == b || rel <= 1e-12
        };
        if !ok {
            bad += 1;
        }
    }
    let label = if bitwise { "bitwise" } else { "rel<=1e-12" };
    println!(
        "{} on {}: {} outputs, seed {seed}",
        spec.program,
        spec.pattern,
        got.len()
    );
    if !bitwise {
        println!("max relative error {worst:.3e}");
    }
    if bad == 0 {
        println!("{label}: PASS");
        Ok(())
    } else {
        println!("{label}: FAIL");
        Err(Failure::Verify(format!("{bad} of {} outputs differ", got.len())))
    }
}

fn cmd_emit(dir: &Path, out: Option<PathBuf>, parallel: ParallelArg, vw: u32) -> Result<()> {
    let plan = load_plan(dir).context("loading plan")?;
    let opts = EmitOptions {
        parallel: parallel.into(),
        vector_width: vw.max(1),
    };
    let src = emit_source(&plan, &opts);
    let out = out.unwrap_or_else(|| dir.join("kernels.c"));
    std::fs::write(&out, &src).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} kernels, {} lines -> {}",
        plan.kernels.len(),
        src.lines().count(),
        out.display()
    );
    Ok(())
}

fn mean_secs(iters: u64, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let iters = iters.max(1);
    let t = Instant::now();
    for _ in 0..iters {
        f()?;
    }
    Ok(t.elapsed().as_secs_f64() / iters as f64)
}

fn cmd_bench(dir: &Path, iters: u64, seed: u64, parallel: ParallelArg, vw: u32, json: bool) -> Result<()> {
    let plan = load_plan(dir).context("loading plan")?;
    let (spec, traced) = retrace(&plan)?;
    let x = traced.inputs(seed);
    let mut sink = 0.0;
    let naive = mean_secs(iters, || {
        for &o in &traced.outputs {
            sink += eval_tree(&traced.arena, o, &x)?;
        }
        Ok(())
    })?;
    let interp = Interpreter::new(&plan)?;
    let mut values = Vec::new();
    let interpreted = mean_secs(iters, || {
        values = interp.run(&x)?;
        Ok(())
    })?;
    let opts = EmitOptions {
        parallel: parallel.into(),
        vector_width: vw.max(1),
    };
    let compiled = match find_cc() {
        None => None,
        Some(cc) => {
            let tmp = tempfile::tempdir()?;
            let prog = build_native(&plan, &opts, tmp.path(), &cc)?;
            let run = run_native(&prog, &plan, &x, iters.max(1))?;
            let same = run.values.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits());
            Some((run.mean_seconds, same))
        }
    };
    std::hint::black_box(sink);

    if json {
        let report = serde_json::json!({
            "program": spec,
            "iters": iters.max(1),
            "naive_seconds": naive,
            "interpreter_seconds": interpreted,
            "compiled_seconds": compiled.map(|c| c.0),
            "compiled_matches_interpreter": compiled.map(|c| c.1),
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    println!("{} on {}, mean of {} runs", spec.program, spec.pattern, iters.max(1));
    println!("naive tree walk  {naive:.6e} s");
    println!(
        "interpreter      {interpreted:.6e} s  ({:.2}x vs naive)",
        naive / interpreted
    );
    match compiled {
        Some((secs, same)) => {
            println!("compiled         {secs:.6e} s  ({:.2}x vs naive)", naive / secs);
            println!(
                "compiled vs interpreter: {}",
                if same { "bitwise equal" } else { "DIFFERENT" }
            );
        }
        None => println!("compiled         skipped (no C compiler)"),
    }
    Ok(())
}

fn cmd_dump_deps(program: &ProgramArgs, tref: u32, tcompl: u64, out: Option<PathBuf>) -> Result<()> {
    let spec = program.spec();
    let traced = trace_program(&spec)?;
    let cfg = DecomposeConfig {
        t_ref: tref,
        t_compl: tcompl,
    };
    let d = global_decompose(&traced.arena, &traced.outputs, &traced.blocks, &cfg)?;
    let dot = d.to_dot(&traced.arena);
    match out {
        Some(p) => std::fs::write(&p, dot).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{dot}"),
    }
    Ok(())
}
