//! A naive element-at-a-time bytecode evaluator that also models the two
//! storage levels: shared storage and the engine's private copies.

use std::collections::HashMap;

use vvm_core::bytecode::{Instruction, OpKind, Opcode, Operand};
use vvm_core::model::{ArrayView, BaseId, Buffer, Constant, DType};

use super::splitmix64_nth;

pub fn row_major_index(flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    let mut rest = flat;
    for d in (0..shape.len()).rev() {
        idx[d] = rest % shape[d];
        rest /= shape[d];
    }
    idx
}

pub fn element(view: &ArrayView, idx: &[usize]) -> usize {
    let pos = view.offset() as isize + idx.iter().zip(view.strides()).map(|(&i, &s)| i as isize * s).sum::<isize>();
    usize::try_from(pos).expect("view stays inside its base")
}

fn min_f(x: f64, y: f64) -> f64 {
    if x.is_nan() {
        x
    } else if y.is_nan() {
        y
    } else if x <= y {
        x
    } else {
        y
    }
}

fn max_f(x: f64, y: f64) -> f64 {
    if x.is_nan() {
        x
    } else if y.is_nan() {
        y
    } else if x >= y {
        x
    } else {
        y
    }
}

pub fn binary(op: Opcode, a: Constant, b: Constant) -> Result<Constant, String> {
    use Constant::{Bool, Float64, Int64};
    Ok(match (a, b) {
        (Float64(x), Float64(y)) => match op {
            Opcode::Add | Opcode::AddReduce => Float64(x + y),
            Opcode::Subtract => Float64(x - y),
            Opcode::Multiply => Float64(x * y),
            Opcode::Divide => Float64(x / y),
            Opcode::Power => Float64(x.powf(y)),
            Opcode::Minimum | Opcode::MinimumReduce => Float64(min_f(x, y)),
            Opcode::Maximum | Opcode::MaximumReduce => Float64(max_f(x, y)),
            Opcode::Greater => Bool(x > y),
            Opcode::Less => Bool(x < y),
            Opcode::Equal => Bool(x == y),
            _ => return Err(format!("{op} on float64")),
        },
        (Int64(x), Int64(y)) => match op {
            Opcode::Add | Opcode::AddReduce => Int64(x.wrapping_add(y)),
            Opcode::Subtract => Int64(x.wrapping_sub(y)),
            Opcode::Multiply => Int64(x.wrapping_mul(y)),
            Opcode::Divide if y == 0 => return Err("integer division by zero".into()),
            Opcode::Divide => Int64(x.wrapping_div(y)),
            Opcode::Power if y < 0 => return Err("negative integer exponent".into()),
            Opcode::Power => Int64(x.wrapping_pow(u32::try_from(y).map_err(|_| "exponent too large")?)),
            Opcode::Minimum | Opcode::MinimumReduce => Int64(x.min(y)),
            Opcode::Maximum | Opcode::MaximumReduce => Int64(x.max(y)),
            Opcode::Greater => Bool(x > y),
            Opcode::Less => Bool(x < y),
            Opcode::Equal => Bool(x == y),
            _ => return Err(format!("{op} on int64")),
        },
        (Bool(x), Bool(y)) if op == Opcode::Equal => Bool(x == y),
        _ => return Err(format!("{op} on {a:?}, {b:?}")),
    })
}

pub fn unary(op: Opcode, a: Constant) -> Result<Constant, String> {
    use Constant::{Float64, Int64};
    Ok(match (op, a) {
        (Opcode::Identity, v) => v,
        (Opcode::Sqrt, Float64(x)) => Float64(x.sqrt()),
        (Opcode::Absolute, Float64(x)) => Float64(x.abs()),
        (Opcode::Absolute, Int64(x)) => Int64(x.wrapping_abs()),
        (Opcode::Negative, Float64(x)) => Float64(-x),
        (Opcode::Negative, Int64(x)) => Int64(x.wrapping_neg()),
        _ => return Err(format!("{op} on {a:?}")),
    })
}

pub fn random_element(dtype: DType, seed: u64, flat: usize) -> Constant {
    let bits = splitmix64_nth(seed, flat as u64);
    match dtype {
        DType::Float64 => Constant::Float64((bits >> 11) as f64 / (1u64 << 53) as f64),
        DType::Float32 => Constant::Float32((bits >> 40) as f32 / (1u32 << 24) as f32),
        DType::Int64 => Constant::Int64((bits >> 1) as i64),
        DType::Bool => Constant::Bool(bits >> 63 == 1),
    }
}

#[derive(Clone)]
struct EngineCopy {
    data: Buffer,
    dirty: bool,
}

/// Shared storage plus engine copies, updated one instruction at a time.
#[derive(Default, Clone)]
pub struct Reference {
    shared: HashMap<BaseId, Buffer>,
    engine: HashMap<BaseId, EngineCopy>,
}

impl Reference {
    pub fn new() -> Reference {
        Reference::default()
    }

    pub fn set_shared(&mut self, id: BaseId, data: Buffer) {
        self.shared.insert(id, data);
    }

    pub fn shared(&self, id: BaseId) -> Option<&Buffer> {
        self.shared.get(&id)
    }

    /// Shared storage holds the newest values of the base.
    pub fn shared_is_current(&self, id: BaseId) -> bool {
        !self.engine.get(&id).is_some_and(|c| c.dirty)
    }

    pub fn has_engine_copy(&self, id: BaseId) -> bool {
        self.engine.contains_key(&id)
    }

    fn ensure(&mut self, view: &ArrayView) {
        let base = view.base();
        let shared = &self.shared;
        self.engine.entry(base.id()).or_insert_with(|| EngineCopy {
            data: shared.get(&base.id()).cloned().unwrap_or_else(|| Buffer::zeros(base.dtype(), base.nelem())),
            dirty: false,
        });
    }

    fn get(&self, op: &Operand, idx: &[usize]) -> Constant {
        match op {
            Operand::Constant(c) => *c,
            Operand::View(v) => self.engine[&v.base_id()].data.get(element(v, idx)).expect("index in range"),
        }
    }

    fn set(&mut self, view: &ArrayView, idx: &[usize], value: Constant) {
        let copy = self.engine.get_mut(&view.base_id()).expect("materialized");
        copy.data.set(element(view, idx), value);
        copy.dirty = true;
    }

    /// Applies one instruction. Errors describe the fault; state after an
    /// error is unspecified.
    pub fn apply(&mut self, instr: &Instruction) -> Result<(), String> {
        if instr.kind() == OpKind::System {
            let id = instr.system_target().expect("system target").id();
            match instr.opcode {
                Opcode::Sync => {
                    if let Some(copy) = self.engine.get_mut(&id) {
                        if copy.dirty {
                            self.shared.insert(id, copy.data.clone());
                            copy.dirty = false;
                        }
                    }
                }
                Opcode::Discard => {
                    self.engine.remove(&id);
                }
                _ => {
                    self.engine.remove(&id);
                    self.shared.remove(&id);
                }
            }
            return Ok(());
        }
        for v in instr.views() {
            self.ensure(v);
        }
        let out = instr.out.as_ref().expect("output view");
        match instr.kind() {
            OpKind::Generator => {
                let seed = instr.seed().expect("seed");
                for flat in 0..out.len() {
                    let idx = row_major_index(flat, out.shape());
                    self.set(out, &idx, random_element(out.dtype(), seed, flat));
                }
            }
            OpKind::Elementwise => {
                for flat in 0..out.len() {
                    let idx = row_major_index(flat, out.shape());
                    let args: Vec<Constant> = instr.inputs.iter().map(|op| self.get(op, &idx)).collect();
                    let value = match args.as_slice() {
                        [a] => unary(instr.opcode, *a)?,
                        [a, b] => binary(instr.opcode, *a, *b)?,
                        _ => return Err("bad arity".into()),
                    };
                    self.set(out, &idx, value);
                }
            }
            OpKind::Reduction => {
                let input = &instr.inputs[0];
                let Operand::View(in_view) = input else { return Err("reduction of a constant".into()) };
                let axis = instr.axis().expect("axis");
                for flat in 0..out.len() {
                    let oidx = row_major_index(flat, out.shape());
                    let mut iidx: Vec<usize> = if in_view.ndim() == 1 { vec![] } else { oidx.clone() };
                    iidx.insert(axis, 0);
                    let mut acc = self.get(input, &iidx);
                    for k in 1..in_view.shape()[axis] {
                        iidx[axis] = k;
                        acc = binary(instr.opcode, acc, self.get(input, &iidx))?;
                    }
                    self.set(out, &oidx, acc);
                }
            }
            _ => return Err(format!("{} is not modelled", instr.opcode)),
        }
        Ok(())
    }
}
