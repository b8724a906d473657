//! Random bytecode programs over small bases: strided, reversed, broadcast and
//! overlapping views, in-place updates, reductions and system instructions.
//! Programs are descriptions; `build` turns one into fresh bases and a batch
//! so every engine run starts from identical storage.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vvm_core::bytecode::{validate, Attr, Batch, Instruction, Opcode, Operand};
use vvm_core::engine::{EngineError, VectorEngine};
use vvm_core::model::{ArrayBase, ArrayView, Buffer, Constant, DType};

use super::reference::Reference;

pub const MAX_INSTRUCTIONS: usize = 30;
pub const MAX_BASE_LEN: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub base: usize,
    pub offset: usize,
    pub shape: Vec<usize>,
    pub strides: Vec<isize>,
}

#[derive(Debug, Clone)]
pub enum OperandSpec {
    View(ViewSpec),
    Const(Constant),
}

#[derive(Debug, Clone)]
pub struct InstrSpec {
    pub opcode: Opcode,
    pub out: Option<ViewSpec>,
    pub inputs: Vec<OperandSpec>,
    pub attr: Option<Attr>,
}

#[derive(Debug, Clone)]
pub struct Program {
    pub bases: Vec<Buffer>,
    pub instrs: Vec<InstrSpec>,
}

pub struct Built {
    pub bases: Vec<Arc<ArrayBase>>,
    pub batch: Batch,
}

fn build_view(bases: &[Arc<ArrayBase>], v: &ViewSpec) -> ArrayView {
    ArrayView::new(bases[v.base].clone(), v.offset, &v.shape, &v.strides).expect("generated view is in bounds")
}

fn build_instr(bases: &[Arc<ArrayBase>], s: &InstrSpec) -> Instruction {
    Instruction {
        opcode: s.opcode,
        out: s.out.as_ref().map(|v| build_view(bases, v)),
        inputs: s
            .inputs
            .iter()
            .map(|op| match op {
                OperandSpec::View(v) => Operand::View(build_view(bases, v)),
                OperandSpec::Const(c) => Operand::Constant(*c),
            })
            .collect(),
        attr: s.attr,
    }
}

impl Program {
    /// Fresh bases whose shared storage holds the initial values.
    pub fn build(&self) -> Built {
        let bases: Vec<Arc<ArrayBase>> = self
            .bases
            .iter()
            .map(|data| {
                let base = ArrayBase::new(data.dtype(), data.len());
                *base.shared() = Some(data.clone());
                base
            })
            .collect();
        let batch = Batch::from(self.instrs.iter().map(|s| build_instr(&bases, s)).collect::<Vec<_>>());
        Built { bases, batch }
    }

    /// Indices of bases still live at the end of the program.
    pub fn live_bases(&self) -> Vec<usize> {
        (0..self.bases.len())
            .filter(|&b| {
                !self.instrs.iter().any(|i| {
                    i.opcode == Opcode::Free && matches!(&i.inputs[0], OperandSpec::View(v) if v.base == b)
                })
            })
            .collect()
    }
}

struct Gen {
    rng: ChaCha8Rng,
    dtypes: Vec<DType>,
    lens: Vec<usize>,
    live: Vec<usize>,
    /// Views already used, so later instructions can reuse them exactly.
    pool: Vec<ViewSpec>,
}

const FLOAT_BINARY: [Opcode; 10] = [
    Opcode::Add,
    Opcode::Subtract,
    Opcode::Multiply,
    Opcode::Divide,
    Opcode::Power,
    Opcode::Minimum,
    Opcode::Maximum,
    Opcode::Greater,
    Opcode::Less,
    Opcode::Equal,
];
const INT_BINARY: [Opcode; 8] = [
    Opcode::Add,
    Opcode::Subtract,
    Opcode::Multiply,
    Opcode::Minimum,
    Opcode::Maximum,
    Opcode::Greater,
    Opcode::Less,
    Opcode::Equal,
];

impl Gen {
    fn initial(&mut self, dtype: DType, len: usize) -> Buffer {
        let rng = &mut self.rng;
        match dtype {
            DType::Float64 => Buffer::Float64(
                (0..len)
                    .map(|_| match rng.gen_range(0..40) {
                        0 => 0.0,
                        1 => -0.0,
                        2 => f64::NAN,
                        3 => f64::INFINITY,
                        _ => rng.gen_range(-4.0..4.0),
                    })
                    .collect(),
            ),
            DType::Int64 => Buffer::Int64((0..len).map(|_| rng.gen_range(-20..=20)).collect()),
            DType::Bool => Buffer::Bool((0..len).map(|_| rng.gen_bool(0.5)).collect()),
            DType::Float32 => Buffer::Float32((0..len).map(|_| rng.gen_range(-4.0f32..4.0)).collect()),
        }
    }

    fn shape(&mut self) -> Vec<usize> {
        let ndim = self.rng.gen_range(1..=3);
        let limit = [0, 64, 16, 6][ndim];
        (0..ndim).map(|_| self.rng.gen_range(1..=limit)).collect()
    }

    fn bases_of(&self, dtype: DType) -> Vec<usize> {
        self.live.iter().copied().filter(|&b| self.dtypes[b] == dtype).collect()
    }

    /// A view of `shape` on `base`: row-major, or random signed strides, with
    /// zero strides allowed when `broadcast`.
    fn view_on(&mut self, base: usize, shape: &[usize], broadcast: bool) -> Option<ViewSpec> {
        let len = self.lens[base];
        for attempt in 0..24 {
            let strides: Vec<isize> = if attempt == 0 && self.rng.gen_bool(0.4) {
                let mut acc = 1isize;
                let mut s = vec![0; shape.len()];
                for d in (0..shape.len()).rev() {
                    s[d] = acc;
                    acc *= shape[d] as isize;
                }
                s
            } else {
                shape
                    .iter()
                    .map(|_| {
                        if broadcast && self.rng.gen_bool(0.25) {
                            0
                        } else {
                            let m = self.rng.gen_range(1..=if attempt < 12 { 8 } else { 2 });
                            if self.rng.gen_bool(0.3) { -m } else { m }
                        }
                    })
                    .collect()
            };
            let lo: isize = shape.iter().zip(&strides).map(|(&n, &s)| (s * (n as isize - 1)).min(0)).sum();
            let hi: isize = shape.iter().zip(&strides).map(|(&n, &s)| (s * (n as isize - 1)).max(0)).sum();
            if hi - lo < len as isize {
                let offset = self.rng.gen_range(-lo..len as isize - hi) as usize;
                return Some(ViewSpec { base, offset, shape: shape.to_vec(), strides });
            }
        }
        None
    }

    fn pooled(&mut self, shape: &[usize], dtype: DType) -> Option<ViewSpec> {
        let live = &self.live;
        let dtypes = &self.dtypes;
        let matches: Vec<ViewSpec> = self
            .pool
            .iter()
            .filter(|v| v.shape == shape && dtypes[v.base] == dtype && live.contains(&v.base))
            .cloned()
            .collect();
        matches.choose(&mut self.rng).cloned()
    }

    fn view(&mut self, shape: &[usize], dtype: DType, broadcast: bool) -> Option<ViewSpec> {
        if self.rng.gen_bool(0.45) {
            if let Some(v) = self.pooled(shape, dtype) {
                return Some(v);
            }
        }
        let base = *self.bases_of(dtype).choose(&mut self.rng)?;
        let v = self.view_on(base, shape, broadcast)?;
        self.pool.push(v.clone());
        Some(v)
    }

    fn constant(&mut self, dtype: DType) -> Constant {
        match dtype {
            DType::Float64 => Constant::Float64(self.rng.gen_range(-3.0..3.0)),
            DType::Int64 => Constant::Int64(self.rng.gen_range(-5..=5)),
            DType::Bool => Constant::Bool(self.rng.gen_bool(0.5)),
            DType::Float32 => Constant::Float32(self.rng.gen_range(-3.0f32..3.0)),
        }
    }

    fn operand(&mut self, shape: &[usize], dtype: DType) -> Option<OperandSpec> {
        if self.rng.gen_bool(0.2) {
            return Some(OperandSpec::Const(self.constant(dtype)));
        }
        self.view(shape, dtype, true).map(OperandSpec::View)
    }

    fn numeric_dtype(&mut self) -> DType {
        if self.rng.gen_bool(0.75) { DType::Float64 } else { DType::Int64 }
    }

    fn elementwise(&mut self) -> Option<InstrSpec> {
        let shape = self.shape();
        let in_dtype = self.numeric_dtype();
        let unary = self.rng.gen_bool(0.3);
        let opcode = if unary {
            let ops: &[Opcode] = if in_dtype == DType::Float64 {
                &[Opcode::Identity, Opcode::Sqrt, Opcode::Absolute, Opcode::Negative]
            } else {
                &[Opcode::Identity, Opcode::Absolute, Opcode::Negative]
            };
            *ops.choose(&mut self.rng)?
        } else if in_dtype == DType::Float64 {
            *FLOAT_BINARY.choose(&mut self.rng)?
        } else {
            *INT_BINARY.choose(&mut self.rng)?
        };
        let out_dtype = if opcode.is_comparison() { DType::Bool } else { in_dtype };
        let out = self.view(&shape, out_dtype, false)?;
        let arity = if unary { 1 } else { 2 };
        let mut inputs: Vec<OperandSpec> = (0..arity).map(|_| self.operand(&shape, in_dtype)).collect::<Option<_>>()?;
        if inputs.iter().all(|i| matches!(i, OperandSpec::Const(_))) {
            inputs[0] = OperandSpec::View(self.view(&shape, in_dtype, true)?);
        }
        if !opcode.is_comparison() && self.rng.gen_bool(0.25) {
            inputs[0] = OperandSpec::View(out.clone());
        }
        Some(InstrSpec { opcode, out: Some(out), inputs, attr: None })
    }

    fn reduction(&mut self) -> Option<InstrSpec> {
        let dtype = self.numeric_dtype();
        let mut in_shape = self.shape();
        if in_shape.len() > 1 && self.rng.gen_bool(0.5) {
            in_shape.pop();
        }
        let axis = self.rng.gen_range(0..in_shape.len());
        in_shape[axis] = self.rng.gen_range(1..=6);
        let mut out_shape: Vec<usize> =
            in_shape.iter().enumerate().filter(|&(d, _)| d != axis).map(|(_, &e)| e).collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let opcode = *[Opcode::AddReduce, Opcode::MinimumReduce, Opcode::MaximumReduce].choose(&mut self.rng)?;
        let out = self.view(&out_shape, dtype, false)?;
        let input = self.view(&in_shape, dtype, true)?;
        Some(InstrSpec { opcode, out: Some(out), inputs: vec![OperandSpec::View(input)], attr: Some(Attr::Axis(axis)) })
    }

    fn random(&mut self) -> Option<InstrSpec> {
        let shape = self.shape();
        let dtype = *self.dtypes.choose(&mut self.rng)?;
        let out = self.view(&shape, dtype, false)?;
        Some(InstrSpec { opcode: Opcode::Random, out: Some(out), inputs: vec![], attr: Some(Attr::Seed(self.rng.gen())) })
    }

    fn system(&mut self, opcode: Opcode, base: usize) -> InstrSpec {
        let whole = ViewSpec { base, offset: 0, shape: vec![self.lens[base]], strides: vec![1] };
        InstrSpec { opcode, out: None, inputs: vec![OperandSpec::View(whole)], attr: None }
    }
}

/// Deterministic program number `seed`.
pub fn generate(seed: u64) -> Program {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), dtypes: vec![], lens: vec![], live: vec![], pool: vec![] };
    let nbases = g.rng.gen_range(2..=5);
    let mut bases = Vec::with_capacity(nbases);
    for b in 0..nbases {
        let dtype = match b {
            0 => DType::Float64,
            1 => DType::Bool,
            _ => *[DType::Float64, DType::Float64, DType::Int64].choose(&mut g.rng).expect("non-empty"),
        };
        let len = g.rng.gen_range(16..=MAX_BASE_LEN);
        g.dtypes.push(dtype);
        g.lens.push(len);
        g.live.push(b);
        bases.push(g.initial(dtype, len));
    }
    let mut instrs = Vec::new();
    let target = g.rng.gen_range(1..=MAX_INSTRUCTIONS);
    let mut tries = 0;
    while instrs.len() < target && tries < 20 * MAX_INSTRUCTIONS {
        tries += 1;
        let roll = g.rng.gen_range(0..100);
        let spec = match roll {
            0..=64 => g.elementwise(),
            65..=76 => g.reduction(),
            77..=82 => g.random(),
            83..=91 => {
                let b = *g.live.choose(&mut g.rng).expect("live base");
                Some(g.system(Opcode::Sync, b))
            }
            92..=97 => {
                let b = *g.live.choose(&mut g.rng).expect("live base");
                Some(g.system(Opcode::Discard, b))
            }
            _ if g.live.len() > 2 => {
                let pos = g.rng.gen_range(2..g.live.len());
                let b = g.live.remove(pos);
                Some(g.system(Opcode::Free, b))
            }
            _ => None,
        };
        let Some(spec) = spec else { continue };
        let probe = Program { bases: bases.clone(), instrs: vec![spec.clone()] };
        if validate(&probe.build().batch.instructions[0]).is_ok() {
            instrs.push(spec);
        }
    }
    for b in g.live.clone() {
        instrs.push(g.system(Opcode::Sync, b));
    }
    Program { bases, instrs }
}

/// A copy of every base's shared storage, `None` where none exists.
pub fn snapshot(bases: &[Arc<ArrayBase>]) -> Vec<Option<Buffer>> {
    bases.iter().map(|b| b.shared().clone()).collect()
}

pub fn same_storage(a: &[Option<Buffer>], b: &[Option<Buffer>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => x.bit_eq(y),
            (None, None) => true,
            _ => false,
        })
}

/// Runs the program on `engine` from fresh bases. Returns the engine result
/// and the shared storage afterwards.
pub fn run_on(engine: &mut dyn VectorEngine, program: &Program) -> (Result<(), EngineError>, Vec<Option<Buffer>>) {
    let built = program.build();
    let result = engine.execute(&built.batch);
    let storage = snapshot(&built.bases);
    engine.shutdown().expect("shutdown");
    (result, storage)
}

/// Shared storage after the naive evaluator, or the failing index.
pub fn run_reference(program: &Program) -> Result<Vec<Option<Buffer>>, (usize, String)> {
    let built = program.build();
    let mut reference = Reference::new();
    for (base, data) in built.bases.iter().zip(&program.bases) {
        reference.set_shared(base.id(), data.clone());
    }
    for (index, instr) in built.batch.iter().enumerate() {
        reference.apply(instr).map_err(|e| (index, e))?;
    }
    Ok(built.bases.iter().map(|b| reference.shared(b.id()).cloned()).collect())
}
