//! C99 source emitter.
//!
//! Every kernel becomes a body function for one instance plus a driver with
//! an outer (optionally parallel) loop over blocks of `vector_width`
//! instances, an inner loop the compiler may vectorize, and a scalar tail.
//! Operations are printed fully parenthesized in template order, so with
//! contraction disabled the compiled code rounds exactly like the
//! interpreter.

use super::{ColumnAccess, ExecutionPlan, Kernel};
use crate::expr::OpKind;
use crate::template::TNode;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parallel {
    None,
    #[default]
    Pragma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitOptions {
    pub parallel: Parallel,
    pub vector_width: u32,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            parallel: Parallel::Pragma,
            vector_width: 4,
        }
    }
}

const PRELUDE: &str = r#"#pragma STDC FP_CONTRACT OFF
#include <math.h>

static inline double sg_powi(double b, double e) {
    if (e >= 1.0 && e <= 64.0 && (double)(long)e == e) {
        long k = (long)e;
        double r = b;
        for (long i = 1; i < k; ++i) r *= b;
        return r;
    }
    return pow(b, e);
}
"#;

pub(crate) fn literal(v: f64) -> String {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        format!("({v:.16e})")
    } else {
        format!("{v:.16e}")
    }
}

fn expr(k: &Kernel, node: u32, is_local: &[bool], out: &mut String) {
    if is_local[node as usize] {
        let _ = write!(out, "t{node}");
        return;
    }
    node_expr(k, node, is_local, out);
}

/// Expression for `node` itself, with locals referenced by name.
fn node_expr(k: &Kernel, node: u32, is_local: &[bool], out: &mut String) {
    match &k.template.nodes[node as usize] {
        TNode::Column(c) => {
            let _ = write!(out, "v{c}");
        }
        TNode::Literal(v) => out.push_str(&literal(*v)),
        TNode::Op { op, children } => {
            let infix = match op {
                OpKind::Add => Some(" + "),
                OpKind::Sub => Some(" - "),
                OpKind::Mul => Some(" * "),
                OpKind::Div => Some(" / "),
                _ => None,
            };
            if let Some(sym) = infix {
                // Left fold: ((a + b) + c)
                for _ in 1..children.len() {
                    out.push('(');
                }
                expr(k, children[0], is_local, out);
                for &c in &children[1..] {
                    out.push_str(sym);
                    expr(k, c, is_local, out);
                    out.push(')');
                }
                return;
            }
            match op {
                OpKind::Neg => {
                    out.push_str("(-");
                    expr(k, children[0], is_local, out);
                    out.push(')');
                }
                OpKind::Select => {
                    out.push('(');
                    expr(k, children[0], is_local, out);
                    out.push_str(" < 0.0 ? ");
                    expr(k, children[1], is_local, out);
                    out.push_str(" : ");
                    expr(k, children[2], is_local, out);
                    out.push(')');
                }
                OpKind::Pow => {
                    out.push_str("sg_powi(");
                    expr(k, children[0], is_local, out);
                    out.push_str(", ");
                    expr(k, children[1], is_local, out);
                    out.push(')');
                }
                _ => {
                    let f = match op {
                        OpKind::Sqrt => "sqrt",
                        OpKind::Sin => "sin",
                        OpKind::Cos => "cos",
                        OpKind::Exp => "exp",
                        _ => "log",
                    };
                    out.push_str(f);
                    out.push('(');
                    expr(k, children[0], is_local, out);
                    out.push(')');
                }
            }
        }
    }
}

fn table_index(k: &Kernel, offset: u64, slots: u32, slot: u32) -> String {
    if k.coalesced {
        format!("{} + i", offset + slot as u64 * k.instances)
    } else {
        format!("{offset} + i * {slots} + {slot}")
    }
}

fn emit_kernel(k: &Kernel, opts: &EmitOptions, out: &mut String) {
    let name = &k.name;
    let _ = writeln!(
        out,
        "static inline void {name}_body(double* restrict x, const double* restrict c, const unsigned* restrict p, long i) {{"
    );
    for (ci, col) in k.columns.iter().enumerate() {
        match *col {
            ColumnAccess::Position { slot } => {
                let _ = writeln!(
                    out,
                    "    const long a{ci} = (long)p[{}];",
                    table_index(k, k.p_offset, k.p_slots, slot)
                );
                let _ = writeln!(out, "    const double v{ci} = x[a{ci}];");
            }
            ColumnAccess::Coherent { base, delta } => {
                let _ = writeln!(out, "    const double v{ci} = x[a{base} + ({delta})];");
            }
            ColumnAccess::Constant { slot } => {
                let _ = writeln!(
                    out,
                    "    const double v{ci} = c[{}];",
                    table_index(k, k.c_offset, k.c_slots, slot)
                );
            }
        }
    }
    let mut is_local = vec![false; k.template.nodes.len()];
    for &l in &k.locals {
        let mut s = String::new();
        node_expr(k, l, &is_local, &mut s);
        let _ = writeln!(out, "    const double t{l} = {s};");
        is_local[l as usize] = true;
    }
    for (r, &root) in k.template.roots.iter().enumerate() {
        let mut s = String::new();
        expr(k, root, &is_local, &mut s);
        let _ = writeln!(out, "    x[{} + i] = {s};", k.out_base + r as u64 * k.out_stride);
    }
    out.push_str("    (void)x; (void)c; (void)p;\n}\n\n");

    let vw = opts.vector_width.max(1);
    let n = k.instances;
    let _ = writeln!(
        out,
        "static void {name}(double* restrict x, const double* restrict c, const unsigned* restrict p) {{"
    );
    let _ = writeln!(out, "    const long n = {n};");
    if opts.parallel == Parallel::Pragma {
        out.push_str("    #pragma omp parallel for\n");
    }
    let _ = writeln!(out, "    for (long b = 0; b < n / {vw}; ++b) {{");
    out.push_str("        #pragma GCC ivdep\n");
    let _ = writeln!(
        out,
        "        for (long j = 0; j < {vw}; ++j) {name}_body(x, c, p, b * {vw} + j);"
    );
    out.push_str("    }\n");
    let _ = writeln!(
        out,
        "    for (long i = (n / {vw}) * {vw}; i < n; ++i) {name}_body(x, c, p, i);"
    );
    out.push_str("}\n\n");
}

/// One translation unit with all kernels and the `sg_run` entry point.
pub fn emit_source(plan: &ExecutionPlan, opts: &EmitOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "/* sparsegen: {} kernels, {} values, {} inputs */",
        plan.kernels.len(),
        plan.value_len,
        plan.n_inputs
    );
    out.push_str(PRELUDE);
    out.push('\n');
    let _ = writeln!(out, "#define SG_VALUE_LEN {}L", plan.value_len);
    let _ = writeln!(out, "#define SG_N_INPUTS {}L", plan.n_inputs);
    let _ = writeln!(out, "#define SG_N_POSITIONS {}L", plan.positions.len());
    let _ = writeln!(out, "#define SG_N_CONSTANTS {}L\n", plan.constants.len());
    for k in &plan.kernels {
        emit_kernel(k, opts, &mut out);
    }
    out.push_str("void sg_run(double* x, const double* c, const unsigned* p) {\n");
    for k in &plan.kernels {
        let _ = writeln!(out, "    {}(x, c, p);", k.name);
    }
    out.push_str("}\n");
    out
}

/// A `main` for benchmarking and cross-checking the emitted unit. Arguments:
/// value length, input count, constant count, position count, then the raw
/// little-endian input, constant and position files, the output file and the
/// iteration count. Prints the mean seconds per run.
pub fn emit_harness() -> String {
    r#"#define _POSIX_C_SOURCE 199309L
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>

void sg_run(double* x, const double* c, const unsigned* p);

static void* slurp(const char* path, size_t want) {
    FILE* f = fopen(path, "rb");
    if (!f) { perror(path); exit(2); }
    void* buf = malloc(want ? want : 1);
    if (want && fread(buf, 1, want, f) != want) { fprintf(stderr, "%s: short read\n", path); exit(2); }
    fclose(f);
    return buf;
}

int main(int argc, char** argv) {
    if (argc != 10) {
        fprintf(stderr, "usage: %s value_len n_inputs n_const n_pos inputs consts positions out iters\n", argv[0]);
        return 2;
    }
    long value_len = atol(argv[1]), n_inputs = atol(argv[2]), n_const = atol(argv[3]), n_pos = atol(argv[4]);
    long iters = atol(argv[9]);
    double* in = slurp(argv[5], (size_t)n_inputs * sizeof(double));
    double* c = slurp(argv[6], (size_t)n_const * sizeof(double));
    unsigned* p = slurp(argv[7], (size_t)n_pos * sizeof(unsigned));
    double* x = calloc((size_t)(value_len ? value_len : 1), sizeof(double));
    memcpy(x, in, (size_t)n_inputs * sizeof(double));
    sg_run(x, c, p);
    struct timespec t0, t1;
    clock_gettime(CLOCK_MONOTONIC, &t0);
    for (long it = 0; it < iters; ++it) sg_run(x, c, p);
    clock_gettime(CLOCK_MONOTONIC, &t1);
    double secs = (double)(t1.tv_sec - t0.tv_sec) + 1e-9 * (double)(t1.tv_nsec - t0.tv_nsec);
    printf("%.9e\n", iters > 0 ? secs / (double)iters : 0.0);
    FILE* f = fopen(argv[8], "wb");
    if (!f) { perror(argv[8]); return 2; }
    fwrite(x, sizeof(double), (size_t)value_len, f);
    fclose(f);
    return 0;
}
"#
    .to_string()
}
