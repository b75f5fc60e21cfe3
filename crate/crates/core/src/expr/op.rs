use serde::{Deserialize, Serialize};
use std::fmt;

/// Operation carried by an expression node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum OpKind {
    Var = 0,
    Const = 1,
    Add = 2,
    Sub = 3,
    Mul = 4,
    Div = 5,
    Neg = 6,
    Sqrt = 7,
    Sin = 8,
    Cos = 9,
    Exp = 10,
    Log = 11,
    Pow = 12,
    Select = 13,
}

/// Accepted child count for an operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arity {
    Exactly(usize),
    AtLeast(usize),
}

impl Arity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Arity::Exactly(k) => n == k,
            Arity::AtLeast(k) => n >= k,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Exactly(k) => write!(f, "{k}"),
            Arity::AtLeast(k) => write!(f, "at least {k}"),
        }
    }
}

impl OpKind {
    pub const ALL: [OpKind; 14] = [
        OpKind::Var,
        OpKind::Const,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Neg,
        OpKind::Sqrt,
        OpKind::Sin,
        OpKind::Cos,
        OpKind::Exp,
        OpKind::Log,
        OpKind::Pow,
        OpKind::Select,
    ];

    pub fn arity(self) -> Arity {
        use OpKind::*;
        match self {
            Var | Const => Arity::Exactly(0),
            Add | Mul => Arity::AtLeast(2),
            Sub | Div | Pow => Arity::Exactly(2),
            Select => Arity::Exactly(3),
            Neg | Sqrt | Sin | Cos | Exp | Log => Arity::Exactly(1),
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Mul)
    }

    pub fn is_leaf(self) -> bool {
        matches!(self, OpKind::Var | OpKind::Const)
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<OpKind> {
        OpKind::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        use OpKind::*;
        match self {
            Var => "var",
            Const => "const",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Neg => "neg",
            Sqrt => "sqrt",
            Sin => "sin",
            Cos => "cos",
            Exp => "exp",
            Log => "log",
            Pow => "pow",
            Select => "select",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-operation cost units used for complexity accounting.
///
/// N-ary `Add`/`Mul` nodes are charged `cost * (arity - 1)`, i.e. the number
/// of binary operations they lower to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    costs: [u64; 14],
}

impl Default for CostTable {
    fn default() -> Self {
        use OpKind::*;
        let mut costs = [0u64; 14];
        for op in OpKind::ALL {
            costs[op as usize] = match op {
                Var | Const => 0,
                Add | Sub | Neg | Mul => 1,
                Div => 4,
                Sqrt => 8,
                Sin | Cos | Exp | Log | Pow => 12,
                Select => 2,
            };
        }
        CostTable { costs }
    }
}

impl CostTable {
    pub fn cost(&self, op: OpKind) -> u64 {
        self.costs[op as usize]
    }

    pub fn set(&mut self, op: OpKind, cost: u64) {
        self.costs[op as usize] = cost;
    }

    /// Cost charged for one node of `op` with `arity` children.
    pub fn node_cost(&self, op: OpKind, arity: usize) -> u64 {
        let c = self.cost(op);
        if op.is_commutative() {
            c.saturating_mul(arity.saturating_sub(1) as u64)
        } else {
            c
        }
    }

    /// Parse `op=cost` pairs separated by commas, e.g. `div=6,sqrt=10`.
    pub fn parse_overrides(&mut self, spec: &str) -> Result<(), String> {
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected op=cost, got `{part}`"))?;
            let op = OpKind::ALL
                .into_iter()
                .find(|op| op.name() == name.trim())
                .ok_or_else(|| format!("unknown op `{name}`"))?;
            let cost = value
                .trim()
                .parse::<u64>()
                .map_err(|e| format!("bad cost for {name}: {e}"))?;
            self.set(op, cost);
        }
        Ok(())
    }
}
