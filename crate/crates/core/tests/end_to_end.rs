//! Every built-in program, compiled and interpreted, against the oracle.

use sparsegen::codegen::Interpreter;
use sparsegen::expr::eval_numeric;
use sparsegen::pipeline::{compile, PipelineConfig};
use sparsegen::programs::{trace_program, ProgramSpec};

fn spec(program: &str, pattern: &str, tag: bool) -> ProgramSpec {
    ProgramSpec {
        program: program.parse().unwrap(),
        pattern: pattern.parse().unwrap(),
        tag,
    }
}

fn all_specs() -> Vec<ProgramSpec> {
    vec![
        spec("expr1", "random:30,3,1", false),
        spec("expr2", "random:30,3,2", false),
        spec("expr3", "random:30,3,3", false),
        spec("expr3", "grid:5x4", false),
        spec("lpow2", "grid:5x5", false),
        spec("lpow3", "grid:6x5", false),
        spec("lpow4", "random:20,3,7", false),
        spec("cotan", "grid:5x4", false),
        spec("cotan", "grid:5x4", true),
        spec("energy-hessian", "grid:4x4", false),
        spec("energy-hessian", "grid:4x4", true),
    ]
}

#[test]
fn exact_plans_are_bitwise_equal_to_the_oracle() {
    for s in all_specs() {
        let p = trace_program(&s).unwrap();
        let c = compile(&p.arena, &p.outputs, &p.blocks, &PipelineConfig::exact()).unwrap();
        let x = p.inputs(11);
        let want = eval_numeric(&p.arena, &p.outputs, &x).unwrap();
        let interp = Interpreter::new(&c.plan).unwrap().check_writes(true);
        let got = interp.outputs(&interp.run(&x).unwrap());
        for (k, (a, b)) in got.iter().zip(&want).enumerate() {
            assert_eq!(a.to_bits(), b.to_bits(), "{s:?} output {k}: {a} vs {b}");
        }
    }
}

#[test]
fn simplified_plans_are_close_to_the_oracle() {
    for s in all_specs() {
        let p = trace_program(&s).unwrap();
        let c = compile(&p.arena, &p.outputs, &p.blocks, &PipelineConfig::default()).unwrap();
        let x = p.inputs(12);
        let want = eval_numeric(&p.arena, &p.outputs, &x).unwrap();
        let interp = Interpreter::new(&c.plan).unwrap().check_writes(true);
        let got = interp.outputs(&interp.run(&x).unwrap());
        for (k, (a, b)) in got.iter().zip(&want).enumerate() {
            let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            assert!(rel <= 1e-12 || a == b, "{s:?} output {k}: {a} vs {b}");
        }
    }
}
