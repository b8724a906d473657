//! Typed instruction kernels over raw engine buffers.
//!
//! Elementwise instructions walk a contiguous range of the output's row-major
//! index space, so the same code serves whole-instruction execution and
//! per-block execution.

use std::collections::HashMap;
use std::marker::PhantomData;
use std::ops::Range;

use smallvec::{smallvec, SmallVec};

use super::store::EngineStore;
use super::{Fault, UserFuncTable};
use crate::bytecode::{validate, Instruction, OpKind, Opcode, Operand};
use crate::model::{unravel, ArrayView, BaseId, Buffer, Constant, DType, DenseArray};
use crate::random::{bits_to_bool, bits_to_f32, bits_to_f64, bits_to_i64, random_bits};

pub(crate) struct RawBuf {
    ptr: *mut u8,
    dtype: DType,
}

impl RawBuf {
    pub(crate) fn new(buf: &mut Buffer) -> RawBuf {
        let dtype = buf.dtype();
        let ptr = match buf {
            Buffer::Float64(v) => v.as_mut_ptr() as *mut u8,
            Buffer::Float32(v) => v.as_mut_ptr() as *mut u8,
            Buffer::Int64(v) => v.as_mut_ptr() as *mut u8,
            Buffer::Bool(v) => v.as_mut_ptr() as *mut u8,
        };
        RawBuf { ptr, dtype }
    }
}

/// Borrowed raw pointers into every buffer of an [`EngineStore`]. Writers must
/// touch disjoint elements; kernel formation and partitioning guarantee that.
pub(crate) struct RawMemory<'a> {
    bufs: HashMap<BaseId, RawBuf>,
    _store: PhantomData<&'a mut EngineStore>,
}

// Sound because the pointers are only dereferenced at disjoint positions across
// threads and the owning store is mutably borrowed for the lifetime.
unsafe impl Send for RawMemory<'_> {}
unsafe impl Sync for RawMemory<'_> {}

impl RawMemory<'_> {
    pub(crate) fn new(bufs: HashMap<BaseId, RawBuf>) -> Self {
        RawMemory { bufs, _store: PhantomData }
    }

    fn typed<T: Elem>(&self, view: &ArrayView) -> *mut T {
        let buf = self.bufs.get(&view.base_id()).expect("base materialized before execution");
        assert_eq!(buf.dtype, T::DTYPE, "engine buffer dtype");
        buf.ptr as *mut T
    }
}

pub(crate) trait Elem: Copy + Default + PartialOrd + Send + Sync + 'static {
    const DTYPE: DType;
    fn from_constant(c: Constant) -> Self;
    fn from_bits(bits: u64) -> Self;
}

macro_rules! elem {
    ($t:ty, $dtype:ident, $bits:ident) => {
        impl Elem for $t {
            const DTYPE: DType = DType::$dtype;
            fn from_constant(c: Constant) -> Self {
                match c.cast(DType::$dtype) {
                    Constant::$dtype(v) => v,
                    _ => unreachable!("cast yields the requested dtype"),
                }
            }
            fn from_bits(bits: u64) -> Self {
                $bits(bits)
            }
        }
    };
}

elem!(f64, Float64, bits_to_f64);
elem!(f32, Float32, bits_to_f32);
elem!(i64, Int64, bits_to_i64);
elem!(bool, Bool, bits_to_bool);

/// Scalar semantics of the numeric opcodes.
pub(crate) trait Arith: Elem {
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Result<Self, Fault>;
    fn pow(self, o: Self) -> Result<Self, Fault>;
    fn sqrt(self) -> Result<Self, Fault>;
    fn abs(self) -> Self;
    fn neg(self) -> Self;
    fn min(self, o: Self) -> Self;
    fn max(self, o: Self) -> Self;
}

macro_rules! float_arith {
    ($t:ty) => {
        impl Arith for $t {
            fn add(self, o: Self) -> Self {
                self + o
            }
            fn sub(self, o: Self) -> Self {
                self - o
            }
            fn mul(self, o: Self) -> Self {
                self * o
            }
            fn div(self, o: Self) -> Result<Self, Fault> {
                Ok(self / o)
            }
            fn pow(self, o: Self) -> Result<Self, Fault> {
                Ok(self.powf(o))
            }
            fn sqrt(self) -> Result<Self, Fault> {
                Ok(<$t>::sqrt(self))
            }
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            fn neg(self) -> Self {
                -self
            }
            // NaN wins; otherwise ties keep the left operand.
            fn min(self, o: Self) -> Self {
                if self.is_nan() || (!o.is_nan() && self <= o) {
                    self
                } else {
                    o
                }
            }
            fn max(self, o: Self) -> Self {
                if self.is_nan() || (!o.is_nan() && self >= o) {
                    self
                } else {
                    o
                }
            }
        }
    };
}

float_arith!(f64);
float_arith!(f32);

impl Arith for i64 {
    fn add(self, o: Self) -> Self {
        self.wrapping_add(o)
    }
    fn sub(self, o: Self) -> Self {
        self.wrapping_sub(o)
    }
    fn mul(self, o: Self) -> Self {
        self.wrapping_mul(o)
    }
    fn div(self, o: Self) -> Result<Self, Fault> {
        if o == 0 {
            return Err(Fault::DivideByZero);
        }
        Ok(self.wrapping_div(o))
    }
    fn pow(self, o: Self) -> Result<Self, Fault> {
        let exp = u32::try_from(o).map_err(|_| if o < 0 { Fault::NegativeExponent } else { Fault::Unsupported })?;
        Ok(self.wrapping_pow(exp))
    }
    fn sqrt(self) -> Result<Self, Fault> {
        Err(Fault::Unsupported)
    }
    fn abs(self) -> Self {
        self.wrapping_abs()
    }
    fn neg(self) -> Self {
        self.wrapping_neg()
    }
    fn min(self, o: Self) -> Self {
        Ord::min(self, o)
    }
    fn max(self, o: Self) -> Self {
        Ord::max(self, o)
    }
}

type Strides = SmallVec<[isize; 4]>;

/// Element pointer plus strides; constants use a pointer to a local slot and
/// all-zero strides.
struct Cursor<T> {
    ptr: *mut T,
    offset: isize,
    strides: Strides,
}

impl<T> Cursor<T> {
    fn at(&self, idx: &[usize]) -> *mut T {
        let pos = idx.iter().zip(&self.strides).fold(self.offset, |acc, (&i, &s)| acc + i as isize * s);
        self.ptr.wrapping_offset(pos)
    }

    fn inner(&self) -> isize {
        self.strides.last().copied().unwrap_or(0)
    }
}

fn view_cursor<T: Elem>(mem: &RawMemory<'_>, view: &ArrayView) -> Cursor<T> {
    Cursor { ptr: mem.typed::<T>(view), offset: view.offset() as isize, strides: view.strides().into() }
}

fn operand_cursor<T: Elem>(mem: &RawMemory<'_>, op: &Operand, slot: &mut T, ndim: usize) -> Cursor<T> {
    match op {
        Operand::View(v) => view_cursor(mem, v),
        Operand::Constant(c) => {
            *slot = T::from_constant(*c);
            Cursor { ptr: slot as *mut T, offset: 0, strides: smallvec![0; ndim] }
        }
    }
}

/// Visits `range` of the row-major index space of `shape` as runs along the
/// last axis: `(multi-index of run start, flat index of run start, run length)`.
/// Stops early when the callback returns false.
fn for_each_run(shape: &[usize], range: Range<usize>, mut f: impl FnMut(&[usize], usize, usize) -> bool) {
    if range.is_empty() {
        return;
    }
    let last = shape.len() - 1;
    let mut idx: SmallVec<[usize; 4]> = smallvec![0; shape.len()];
    unravel(range.start, shape, &mut idx);
    let mut flat = range.start;
    while flat < range.end {
        let run = (shape[last] - idx[last]).min(range.end - flat);
        if !f(&idx, flat, run) {
            return;
        }
        flat += run;
        idx[last] += run;
        let mut d = last;
        while d > 0 && idx[d] == shape[d] {
            idx[d] = 0;
            d -= 1;
            idx[d] += 1;
        }
    }
}

unsafe fn map0<O: Elem>(out: &Cursor<O>, shape: &[usize], range: Range<usize>, f: impl Fn(usize) -> O) {
    let so = out.inner();
    for_each_run(shape, range, |idx, flat, n| {
        let mut po = out.at(idx);
        for k in 0..n {
            *po = f(flat + k);
            po = po.wrapping_offset(so);
        }
        true
    });
}

unsafe fn map1<I: Elem, O: Elem>(
    out: &Cursor<O>,
    a: &Cursor<I>,
    shape: &[usize],
    range: Range<usize>,
    f: impl Fn(I) -> Result<O, Fault>,
) -> Result<(), Fault> {
    let (so, sa) = (out.inner(), a.inner());
    let mut result = Ok(());
    for_each_run(shape, range, |idx, _, n| {
        let (mut po, mut pa) = (out.at(idx), a.at(idx));
        for _ in 0..n {
            match f(*pa) {
                Ok(v) => *po = v,
                Err(e) => {
                    result = Err(e);
                    return false;
                }
            }
            po = po.wrapping_offset(so);
            pa = pa.wrapping_offset(sa);
        }
        true
    });
    result
}

unsafe fn map2<I: Elem, O: Elem>(
    out: &Cursor<O>,
    a: &Cursor<I>,
    b: &Cursor<I>,
    shape: &[usize],
    range: Range<usize>,
    f: impl Fn(I, I) -> Result<O, Fault>,
) -> Result<(), Fault> {
    let (so, sa, sb) = (out.inner(), a.inner(), b.inner());
    let mut result = Ok(());
    for_each_run(shape, range, |idx, _, n| {
        let (mut po, mut pa, mut pb) = (out.at(idx), a.at(idx), b.at(idx));
        for _ in 0..n {
            match f(*pa, *pb) {
                Ok(v) => *po = v,
                Err(e) => {
                    result = Err(e);
                    return false;
                }
            }
            po = po.wrapping_offset(so);
            pa = pa.wrapping_offset(sa);
            pb = pb.wrapping_offset(sb);
        }
        true
    });
    result
}

/// Runs an elementwise or generator instruction over `range` of its output's
/// flattened index space.
///
/// # Safety
/// Every base the instruction touches must be present in `mem`, and no other
/// thread may concurrently write the elements this call reads or writes.
pub(crate) unsafe fn run_range(instr: &Instruction, mem: &RawMemory<'_>, range: Range<usize>) -> Result<(), Fault> {
    let out = instr.out.as_ref().expect("value-producing instruction");
    if instr.kind() == OpKind::Generator {
        let seed = instr.seed().expect("validated seed");
        match out.dtype() {
            DType::Float64 => generate::<f64>(out, mem, range, seed),
            DType::Float32 => generate::<f32>(out, mem, range, seed),
            DType::Int64 => generate::<i64>(out, mem, range, seed),
            DType::Bool => generate::<bool>(out, mem, range, seed),
        }
        return Ok(());
    }
    match instr.inputs[0].dtype() {
        DType::Float64 => numeric::<f64>(instr, out, mem, range),
        DType::Float32 => numeric::<f32>(instr, out, mem, range),
        DType::Int64 => numeric::<i64>(instr, out, mem, range),
        DType::Bool => boolean(instr, out, mem, range),
    }
}

unsafe fn generate<T: Elem>(out: &ArrayView, mem: &RawMemory<'_>, range: Range<usize>, seed: u64) {
    map0(&view_cursor::<T>(mem, out), out.shape(), range, |flat| T::from_bits(random_bits(seed, flat as u64)));
}

unsafe fn numeric<T: Arith>(
    instr: &Instruction,
    out: &ArrayView,
    mem: &RawMemory<'_>,
    range: Range<usize>,
) -> Result<(), Fault> {
    let shape = out.shape();
    let (mut slot_a, mut slot_b) = (T::default(), T::default());
    let a = operand_cursor::<T>(mem, &instr.inputs[0], &mut slot_a, shape.len());
    let b = instr.inputs.get(1).map(|op| operand_cursor::<T>(mem, op, &mut slot_b, shape.len()));

    macro_rules! unary {
        ($f:expr) => {
            map1(&view_cursor::<T>(mem, out), &a, shape, range, $f)
        };
    }
    macro_rules! binary {
        ($o:ty, $f:expr) => {
            map2(&view_cursor::<$o>(mem, out), &a, b.as_ref().expect("binary operand"), shape, range, $f)
        };
    }

    match instr.opcode {
        Opcode::Identity => unary!(Ok),
        Opcode::Sqrt => unary!(T::sqrt),
        Opcode::Absolute => unary!(|x: T| Ok(x.abs())),
        Opcode::Negative => unary!(|x: T| Ok(x.neg())),
        Opcode::Add => binary!(T, |x: T, y| Ok(x.add(y))),
        Opcode::Subtract => binary!(T, |x: T, y| Ok(x.sub(y))),
        Opcode::Multiply => binary!(T, |x: T, y| Ok(x.mul(y))),
        Opcode::Divide => binary!(T, T::div),
        Opcode::Power => binary!(T, T::pow),
        Opcode::Minimum => binary!(T, |x: T, y| Ok(x.min(y))),
        Opcode::Maximum => binary!(T, |x: T, y| Ok(x.max(y))),
        Opcode::Greater => binary!(bool, |x: T, y: T| Ok(x > y)),
        Opcode::Less => binary!(bool, |x: T, y: T| Ok(x < y)),
        Opcode::Equal => binary!(bool, |x: T, y: T| Ok(x == y)),
        _ => Err(Fault::Unsupported),
    }
}

unsafe fn boolean(instr: &Instruction, out: &ArrayView, mem: &RawMemory<'_>, range: Range<usize>) -> Result<(), Fault> {
    let shape = out.shape();
    let (mut slot_a, mut slot_b) = (false, false);
    let a = operand_cursor::<bool>(mem, &instr.inputs[0], &mut slot_a, shape.len());
    let o = view_cursor::<bool>(mem, out);
    match instr.opcode {
        Opcode::Identity => map1(&o, &a, shape, range, Ok),
        Opcode::Equal => {
            let b = operand_cursor::<bool>(mem, &instr.inputs[1], &mut slot_b, shape.len());
            map2(&o, &a, &b, shape, range, |x, y| Ok(x == y))
        }
        _ => Err(Fault::Unsupported),
    }
}

/// Runs a reduction over the whole output, visiting outputs in row-major order
/// and folding each lane in ascending index order starting from its first
/// element. An empty ADD lane yields zero.
///
/// # Safety
/// As for [`run_range`].
pub(crate) unsafe fn run_reduction(instr: &Instruction, mem: &RawMemory<'_>) -> Result<(), Fault> {
    match instr.inputs[0].dtype() {
        DType::Float64 => reduce::<f64>(instr, mem),
        DType::Float32 => reduce::<f32>(instr, mem),
        DType::Int64 => reduce::<i64>(instr, mem),
        DType::Bool => Err(Fault::Unsupported),
    }
}

unsafe fn reduce<T: Arith>(instr: &Instruction, mem: &RawMemory<'_>) -> Result<(), Fault> {
    let out = instr.out.as_ref().expect("reduction output");
    let input = instr.inputs[0].view().expect("reduction input view");
    let axis = instr.axis().expect("validated axis");
    let fold: fn(T, T) -> T = match instr.opcode {
        Opcode::AddReduce => T::add,
        Opcode::MinimumReduce => T::min,
        Opcode::MaximumReduce => T::max,
        _ => return Err(Fault::Unsupported),
    };
    let o = view_cursor::<T>(mem, out);
    let src = view_cursor::<T>(mem, input);
    let extent = input.shape()[axis];
    let step = input.strides()[axis];
    let mut oidx: SmallVec<[usize; 4]> = smallvec![0; out.ndim()];
    let mut iidx: SmallVec<[usize; 4]> = smallvec![0; input.ndim()];
    for flat in 0..out.len() {
        unravel(flat, out.shape(), &mut oidx);
        if input.ndim() > 1 {
            let mut rest = oidx.iter();
            for (d, slot) in iidx.iter_mut().enumerate() {
                *slot = if d == axis { 0 } else { *rest.next().expect("output rank") };
            }
        }
        let mut p = src.at(&iidx);
        let mut acc = T::default();
        for k in 0..extent {
            acc = if k == 0 { *p } else { fold(acc, *p) };
            p = p.wrapping_offset(step);
        }
        *o.at(&oidx) = acc;
    }
    Ok(())
}

/// Materializes every base the instruction touches.
pub(crate) fn prepare(store: &mut EngineStore, instr: &Instruction) {
    for v in instr.views() {
        store.ensure(v.base());
    }
}

/// Executes one instruction to completion on the calling thread.
pub(crate) fn execute_serial(store: &mut EngineStore, funcs: &UserFuncTable, instr: &Instruction) -> Result<(), Fault> {
    validate(instr)?;
    match instr.kind() {
        OpKind::System => {
            let base = instr.system_target().expect("validated system target");
            match instr.opcode {
                Opcode::Sync => store.sync(base),
                Opcode::Discard => store.discard(base.id()),
                _ => store.free(base),
            }
            Ok(())
        }
        OpKind::Elementwise | OpKind::Generator => {
            prepare(store, instr);
            let out = instr.out.as_ref().expect("validated output");
            {
                let mem = store.raw();
                // SAFETY: single-threaded; all bases prepared above.
                unsafe { run_range(instr, &mem, 0..out.len())? };
            }
            store.mark_dirty(out.base_id());
            Ok(())
        }
        OpKind::Reduction => {
            prepare(store, instr);
            let out = instr.out.as_ref().expect("validated output");
            {
                let mem = store.raw();
                // SAFETY: single-threaded; all bases prepared above.
                unsafe { run_reduction(instr, &mem)? };
            }
            store.mark_dirty(out.base_id());
            Ok(())
        }
        OpKind::UserFunc => run_userfunc(store, funcs, instr),
    }
}

fn run_userfunc(store: &mut EngineStore, funcs: &UserFuncTable, instr: &Instruction) -> Result<(), Fault> {
    let id = instr.func().expect("validated func id");
    let func = funcs.get(&id).ok_or(Fault::UnknownUserFunc(id))?;
    if func.arity() != instr.operand_count() {
        return Err(Fault::UserFuncArity { id, expected: func.arity(), found: instr.operand_count() });
    }
    prepare(store, instr);
    let out = instr.out.as_ref().expect("validated output");
    let inputs: Vec<DenseArray> = instr
        .inputs
        .iter()
        .map(|op| match op {
            Operand::View(v) => DenseArray::gather(v, store.buffer(v.base_id()).expect("prepared")),
            Operand::Constant(c) => DenseArray::new(vec![1], Buffer::filled(*c, 1)).expect("one element"),
        })
        .collect();
    let mut result = DenseArray::gather(out, store.buffer(out.base_id()).expect("prepared"));
    func.call(&inputs, &mut result).map_err(|message| Fault::UserFunc { id, message })?;
    let target = store.buffer_mut(out.base_id()).expect("prepared");
    result.scatter(out, target).map_err(|e| Fault::UserFunc { id, message: e.to_string() })?;
    store.mark_dirty(out.base_id());
    Ok(())
}
