//! Vector bytecode: a closed opcode set, fixed-arity instructions whose operands
//! are strided views or scalar constants, and batches of them.

mod asm;
mod validate;

pub use asm::{emit_asm, parse_asm, AsmError, AsmErrorKind, ASM_HEADER};
pub use validate::{validate, ValidationError};

use std::fmt;

use crate::model::{ArrayBase, ArrayView, BaseId, Constant, DType};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Elementwise,
    Reduction,
    Generator,
    System,
    UserFunc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Identity,
    Add,
    Subtract,
    Multiply,
    Divide,
    Power,
    Sqrt,
    Absolute,
    Negative,
    Minimum,
    Maximum,
    Greater,
    Less,
    Equal,
    AddReduce,
    MinimumReduce,
    MaximumReduce,
    Random,
    Sync,
    Discard,
    Free,
    UserFunc,
}

const TABLE: [Opcode; 22] = [
    Opcode::Identity,
    Opcode::Add,
    Opcode::Subtract,
    Opcode::Multiply,
    Opcode::Divide,
    Opcode::Power,
    Opcode::Sqrt,
    Opcode::Absolute,
    Opcode::Negative,
    Opcode::Minimum,
    Opcode::Maximum,
    Opcode::Greater,
    Opcode::Less,
    Opcode::Equal,
    Opcode::AddReduce,
    Opcode::MinimumReduce,
    Opcode::MaximumReduce,
    Opcode::Random,
    Opcode::Sync,
    Opcode::Discard,
    Opcode::Free,
    Opcode::UserFunc,
];

/// The closed opcode set, in opcode order.
pub fn opcode_table() -> &'static [Opcode] {
    &TABLE
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown opcode `{0}`")]
pub struct UnknownOpcode(pub String);

impl Opcode {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Identity => "IDENTITY",
            Opcode::Add => "ADD",
            Opcode::Subtract => "SUBTRACT",
            Opcode::Multiply => "MULTIPLY",
            Opcode::Divide => "DIVIDE",
            Opcode::Power => "POWER",
            Opcode::Sqrt => "SQRT",
            Opcode::Absolute => "ABSOLUTE",
            Opcode::Negative => "NEGATIVE",
            Opcode::Minimum => "MINIMUM",
            Opcode::Maximum => "MAXIMUM",
            Opcode::Greater => "GREATER",
            Opcode::Less => "LESS",
            Opcode::Equal => "EQUAL",
            Opcode::AddReduce => "ADD_REDUCE",
            Opcode::MinimumReduce => "MINIMUM_REDUCE",
            Opcode::MaximumReduce => "MAXIMUM_REDUCE",
            Opcode::Random => "RANDOM",
            Opcode::Sync => "SYNC",
            Opcode::Discard => "DISCARD",
            Opcode::Free => "FREE",
            Opcode::UserFunc => "USERFUNC",
        }
    }

    /// Case-insensitive lookup. A few short assembler aliases (`MUL`, `SUB`, ...)
    /// resolve to their canonical opcode.
    pub fn from_mnemonic(name: &str) -> Result<Opcode, UnknownOpcode> {
        let upper = name.to_ascii_uppercase();
        if let Some(op) = TABLE.iter().find(|op| op.mnemonic() == upper) {
            return Ok(*op);
        }
        let alias = match upper.as_str() {
            "COPY" => Opcode::Identity,
            "SUB" => Opcode::Subtract,
            "MUL" => Opcode::Multiply,
            "DIV" => Opcode::Divide,
            "POW" => Opcode::Power,
            "ABS" => Opcode::Absolute,
            "NEG" => Opcode::Negative,
            "MIN" => Opcode::Minimum,
            "MAX" => Opcode::Maximum,
            "GT" => Opcode::Greater,
            "LT" => Opcode::Less,
            "EQ" => Opcode::Equal,
            _ => return Err(UnknownOpcode(name.to_string())),
        };
        Ok(alias)
    }

    pub fn kind(self) -> OpKind {
        use Opcode::*;
        match self {
            AddReduce | MinimumReduce | MaximumReduce => OpKind::Reduction,
            Random => OpKind::Generator,
            Sync | Discard | Free => OpKind::System,
            UserFunc => OpKind::UserFunc,
            _ => OpKind::Elementwise,
        }
    }

    /// Operand count including the output. `None` for USERFUNC, whose arity is
    /// fixed by the registered function.
    pub fn arity(self) -> Option<usize> {
        use Opcode::*;
        match self {
            Identity | Sqrt | Absolute | Negative => Some(2),
            Add | Subtract | Multiply | Divide | Power | Minimum | Maximum | Greater | Less
            | Equal => Some(3),
            AddReduce | MinimumReduce | MaximumReduce => Some(2),
            Random => Some(1),
            Sync | Discard | Free => Some(1),
            UserFunc => None,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, Opcode::Greater | Opcode::Less | Opcode::Equal)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserFuncId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attr {
    Axis(usize),
    Seed(u64),
    Func(UserFuncId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    View(ArrayView),
    Constant(Constant),
}

impl Operand {
    pub fn view(&self) -> Option<&ArrayView> {
        match self {
            Operand::View(v) => Some(v),
            Operand::Constant(_) => None,
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            Operand::View(v) => v.dtype(),
            Operand::Constant(c) => c.dtype(),
        }
    }
}

impl From<ArrayView> for Operand {
    fn from(v: ArrayView) -> Self {
        Operand::View(v)
    }
}

impl From<&ArrayView> for Operand {
    fn from(v: &ArrayView) -> Self {
        Operand::View(v.clone())
    }
}

impl From<Constant> for Operand {
    fn from(c: Constant) -> Self {
        Operand::Constant(c)
    }
}

/// One opcode applied to its operands. System instructions carry their target
/// view in `inputs` and have no output.
#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub opcode: Opcode,
    pub out: Option<ArrayView>,
    pub inputs: Vec<Operand>,
    pub attr: Option<Attr>,
}

impl Instruction {
    pub fn new(opcode: Opcode, out: ArrayView, inputs: Vec<Operand>) -> Instruction {
        Instruction { opcode, out: Some(out), inputs, attr: None }
    }

    pub fn unary(opcode: Opcode, out: &ArrayView, input: impl Into<Operand>) -> Instruction {
        Instruction::new(opcode, out.clone(), vec![input.into()])
    }

    pub fn binary(
        opcode: Opcode,
        out: &ArrayView,
        lhs: impl Into<Operand>,
        rhs: impl Into<Operand>,
    ) -> Instruction {
        Instruction::new(opcode, out.clone(), vec![lhs.into(), rhs.into()])
    }

    pub fn reduce(opcode: Opcode, out: &ArrayView, input: &ArrayView, axis: usize) -> Instruction {
        Instruction {
            opcode,
            out: Some(out.clone()),
            inputs: vec![Operand::View(input.clone())],
            attr: Some(Attr::Axis(axis)),
        }
    }

    pub fn random(out: &ArrayView, seed: u64) -> Instruction {
        Instruction { opcode: Opcode::Random, out: Some(out.clone()), inputs: vec![], attr: Some(Attr::Seed(seed)) }
    }

    /// SYNC, DISCARD or FREE on the whole base.
    pub fn system(opcode: Opcode, base: &Arc<ArrayBase>) -> Instruction {
        Instruction {
            opcode,
            out: None,
            inputs: vec![Operand::View(ArrayView::flat(base.clone()))],
            attr: None,
        }
    }

    pub fn userfunc(id: UserFuncId, out: &ArrayView, inputs: Vec<Operand>) -> Instruction {
        Instruction { opcode: Opcode::UserFunc, out: Some(out.clone()), inputs, attr: Some(Attr::Func(id)) }
    }

    pub fn kind(&self) -> OpKind {
        self.opcode.kind()
    }

    pub fn operand_count(&self) -> usize {
        self.inputs.len() + usize::from(self.out.is_some())
    }

    pub fn input_views(&self) -> impl Iterator<Item = &ArrayView> {
        self.inputs.iter().filter_map(Operand::view)
    }

    /// Every view operand, output first.
    pub fn views(&self) -> impl Iterator<Item = &ArrayView> {
        self.out.iter().chain(self.input_views())
    }

    /// Base targeted by a system instruction.
    pub fn system_target(&self) -> Option<&Arc<ArrayBase>> {
        if self.kind() != OpKind::System {
            return None;
        }
        self.inputs.first().and_then(Operand::view).map(ArrayView::base)
    }

    pub fn axis(&self) -> Option<usize> {
        match self.attr {
            Some(Attr::Axis(a)) => Some(a),
            _ => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.attr {
            Some(Attr::Seed(s)) => Some(s),
            _ => None,
        }
    }

    pub fn func(&self) -> Option<UserFuncId> {
        match self.attr {
            Some(Attr::Func(f)) => Some(f),
            _ => None,
        }
    }
}

/// An ordered list of instructions executed as one unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub instructions: Vec<Instruction>,
}

impl Batch {
    pub fn new() -> Batch {
        Batch::default()
    }

    pub fn push(&mut self, instr: Instruction) {
        self.instructions.push(instr);
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instruction> {
        self.instructions.iter()
    }

    /// Distinct bases in order of first appearance.
    pub fn bases(&self) -> Vec<Arc<ArrayBase>> {
        let mut seen: Vec<BaseId> = Vec::new();
        let mut out = Vec::new();
        for v in self.instructions.iter().flat_map(Instruction::views) {
            if !seen.contains(&v.base_id()) {
                seen.push(v.base_id());
                out.push(v.base().clone());
            }
        }
        out
    }
}

impl From<Vec<Instruction>> for Batch {
    fn from(instructions: Vec<Instruction>) -> Self {
        Batch { instructions }
    }
}

impl<'a> IntoIterator for &'a Batch {
    type Item = &'a Instruction;
    type IntoIter = std::slice::Iter<'a, Instruction>;

    fn into_iter(self) -> Self::IntoIter {
        self.instructions.iter()
    }
}
