//! Reference backend: executes a plan kernel by kernel, instance by
//! instance, following each template's node order exactly.

use super::{ColumnAccess, ExecutionPlan, Kernel, PlanError};
use crate::expr::apply_op;
use crate::template::TNode;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("expected {expected} inputs, got {got}")]
    InputLength { expected: u64, got: usize },
    #[error("kernel {kernel} instance {instance} reads x[{address}] before it is written")]
    ReadBeforeWrite { kernel: usize, instance: u64, address: u64 },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// One value-array load observed while tracing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AddressLoad {
    pub kernel: u32,
    pub instance: u64,
    pub column: u32,
    pub address: u64,
}

#[derive(Clone, Debug)]
pub struct Interpreter<'p> {
    plan: &'p ExecutionPlan,
    check_writes: bool,
}

impl<'p> Interpreter<'p> {
    /// Validates the plan once; runs afterwards cannot index out of bounds.
    pub fn new(plan: &'p ExecutionPlan) -> Result<Self, PlanError> {
        plan.validate()?;
        Ok(Interpreter {
            plan,
            check_writes: false,
        })
    }

    /// Fail on any read of a value slot that no earlier kernel wrote.
    pub fn check_writes(mut self, on: bool) -> Self {
        self.check_writes = on;
        self
    }

    /// Execute and return the whole value array.
    pub fn run(&self, inputs: &[f64]) -> Result<Vec<f64>, RunError> {
        self.execute(inputs, None)
    }

    /// Execute and also record every value-array load.
    pub fn run_traced(&self, inputs: &[f64]) -> Result<(Vec<f64>, Vec<AddressLoad>), RunError> {
        let mut trace = Vec::new();
        let x = self.execute(inputs, Some(&mut trace))?;
        Ok((x, trace))
    }

    /// Execute into a caller-provided value array (inputs already in place).
    pub fn run_in_place(&self, x: &mut [f64]) -> Result<(), RunError> {
        if x.len() as u64 != self.plan.value_len {
            return Err(RunError::InputLength {
                expected: self.plan.value_len,
                got: x.len(),
            });
        }
        let mut written = self.initial_written();
        for (ki, k) in self.plan.kernels.iter().enumerate() {
            self.run_kernel(ki, k, x, written.as_deref_mut(), None)?;
        }
        Ok(())
    }

    pub fn outputs(&self, values: &[f64]) -> Vec<f64> {
        self.plan.outputs.iter().map(|&o| values[o as usize]).collect()
    }

    fn initial_written(&self) -> Option<Vec<bool>> {
        self.check_writes.then(|| {
            let mut w = vec![false; self.plan.value_len as usize];
            w[..self.plan.n_inputs as usize].fill(true);
            w
        })
    }

    fn execute(&self, inputs: &[f64], mut trace: Option<&mut Vec<AddressLoad>>) -> Result<Vec<f64>, RunError> {
        if inputs.len() as u64 != self.plan.n_inputs {
            return Err(RunError::InputLength {
                expected: self.plan.n_inputs,
                got: inputs.len(),
            });
        }
        let mut x = vec![0.0f64; self.plan.value_len as usize];
        x[..inputs.len()].copy_from_slice(inputs);
        let mut written = self.initial_written();
        for (ki, k) in self.plan.kernels.iter().enumerate() {
            self.run_kernel(ki, k, &mut x, written.as_deref_mut(), trace.as_deref_mut())?;
        }
        Ok(x)
    }

    fn run_kernel(
        &self,
        ki: usize,
        k: &Kernel,
        x: &mut [f64],
        mut written: Option<&mut [bool]>,
        mut trace: Option<&mut Vec<AddressLoad>>,
    ) -> Result<(), RunError> {
        let p = &self.plan.positions;
        let c = &self.plan.constants;
        let t = &k.template;
        let mut cols = vec![0.0f64; k.columns.len()];
        let mut addrs = vec![0u64; k.columns.len()];
        let mut vals = vec![0.0f64; t.nodes.len()];
        let mut args: Vec<f64> = Vec::with_capacity(8);
        for i in 0..k.instances {
            for (ci, col) in k.columns.iter().enumerate() {
                let a = match *col {
                    ColumnAccess::Constant { slot } => {
                        cols[ci] = c[k.c_index(slot, i) as usize];
                        continue;
                    }
                    ColumnAccess::Position { slot } => p[k.p_index(slot, i) as usize] as u64,
                    ColumnAccess::Coherent { base, delta } => (addrs[base as usize] as i64 + delta) as u64,
                };
                addrs[ci] = a;
                if let Some(w) = written.as_deref() {
                    if !w[a as usize] {
                        return Err(RunError::ReadBeforeWrite {
                            kernel: ki,
                            instance: i,
                            address: a,
                        });
                    }
                }
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(AddressLoad {
                        kernel: ki as u32,
                        instance: i,
                        column: ci as u32,
                        address: a,
                    });
                }
                cols[ci] = x[a as usize];
            }
            for (ni, node) in t.nodes.iter().enumerate() {
                vals[ni] = match node {
                    TNode::Column(cc) => cols[*cc as usize],
                    TNode::Literal(v) => *v,
                    TNode::Op { op, children } => {
                        args.clear();
                        args.extend(children.iter().map(|&ch| vals[ch as usize]));
                        apply_op(*op, &args)
                    }
                };
            }
            for (r, &root) in t.roots.iter().enumerate() {
                let o = k.out_index(r, i) as usize;
                x[o] = vals[root as usize];
                if let Some(w) = written.as_deref_mut() {
                    w[o] = true;
                }
            }
        }
        Ok(())
    }
}
