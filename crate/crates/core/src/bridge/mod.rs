//! Array front end. Operations on managed arrays are recorded into a pending
//! batch and flushed to the manager when values are needed, when the batch
//! reaches its limit, or when an operation must run natively.

mod array;
mod fallback;

pub use array::{Arg, ManagedArray};
pub use fallback::FALLBACK_OPS;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::{Rc, Weak};
use std::sync::Arc;

use thiserror::Error;

use crate::bytecode::{emit_asm, validate, Batch, Instruction, OpKind, Opcode, Operand, UserFuncId, ValidationError};
use crate::engine::VectorEngine;
use crate::model::{
    broadcast_shapes, may_share_data, shape_len, views_identical, ArrayBase, ArrayView, BaseId, Buffer, Constant,
    DType, DenseArray, ModelError,
};
use crate::random::random_buffer;
use crate::vem::{OwnershipState, TransitionCoverage, Vem, VemError, VemStats};

pub const DEFAULT_BATCH_LIMIT: usize = 4096;
pub const BATCH_LIMIT_ENV: &str = "VVM_BATCH_LIMIT";

/// Which side owns an array's data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    /// Operations are recorded as bytecode.
    Managed,
    /// Values live in host memory and operations run natively.
    Native,
}

/// Initial contents of a new array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Empty,
    Constant(Constant),
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vem(#[from] VemError),
    #[error("invalid instruction: {0}")]
    Invalid(#[from] ValidationError),
    #[error("operation needs at least one array operand")]
    NoArrayOperand,
    #[error("{0} cannot be recorded this way")]
    WrongOpcode(Opcode),
    #[error("arrays belong to different runtimes")]
    ForeignArray,
    #[error("cannot write through a view that repeats elements")]
    WriteThroughBroadcast,
    #[error("shape {found:?} does not match target shape {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("axis {axis} out of range for {ndim} dimensions")]
    AxisOutOfRange { axis: usize, ndim: usize },
    #[error("unsupported operation `{0}`")]
    UnsupportedOperation(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("invalid batch limit `{0}`")]
    BatchLimit(String),
}

impl BridgeError {
    /// Batch index of the failing instruction for execution errors.
    pub fn instruction_index(&self) -> Option<usize> {
        match self {
            BridgeError::Vem(e) => e.instruction_index(),
            _ => None,
        }
    }
}

/// Parses a batch limit: a positive count, or `unlimited`.
pub fn parse_batch_limit(text: &str) -> Result<usize, BridgeError> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("unlimited") || text.eq_ignore_ascii_case("inf") {
        return Ok(usize::MAX);
    }
    match text.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(BridgeError::BatchLimit(text.to_string())),
    }
}

/// Reads `VVM_BATCH_LIMIT`, if set.
pub fn batch_limit_from_env() -> Result<Option<usize>, BridgeError> {
    std::env::var(BATCH_LIMIT_ENV).ok().map(|v| parse_batch_limit(&v)).transpose()
}

type ReleaseQueue = RefCell<Vec<Arc<ArrayBase>>>;

/// Keeps a base alive while any array refers to it. Dropping the last handle
/// queues a FREE for the next flush.
struct BaseHandle {
    base: Arc<ArrayBase>,
    releases: Weak<ReleaseQueue>,
}

impl Drop for BaseHandle {
    fn drop(&mut self) {
        if let Some(queue) = self.releases.upgrade() {
            if let Ok(mut q) = queue.try_borrow_mut() {
                q.push(self.base.clone());
            }
        }
    }
}

struct Inner {
    vem: Vem,
    pending: Batch,
    batch_limit: usize,
    debug: bool,
    captured: Option<Vec<Batch>>,
    spaces: HashMap<BaseId, Space>,
}

impl Drop for Inner {
    fn drop(&mut self) {
        if self.vem.is_shut_down() {
            return;
        }
        let batch = std::mem::take(&mut self.pending);
        if !batch.is_empty() {
            let _ = self.vem.execute(&batch);
        }
        let _ = self.vem.shutdown();
    }
}

/// The recording context. Cloning yields another handle to the same context.
#[derive(Clone)]
pub struct Runtime {
    inner: Rc<RefCell<Inner>>,
    releases: Rc<ReleaseQueue>,
}

impl fmt::Debug for Runtime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Runtime")
            .field("vem", &inner.vem)
            .field("pending", &inner.pending.len())
            .field("batch_limit", &inner.batch_limit)
            .finish()
    }
}

impl Runtime {
    /// Wraps a manager. The batch limit comes from `VVM_BATCH_LIMIT` when set.
    pub fn new(vem: Vem) -> Result<Runtime, BridgeError> {
        let batch_limit = batch_limit_from_env()?.unwrap_or(DEFAULT_BATCH_LIMIT);
        Ok(Runtime {
            inner: Rc::new(RefCell::new(Inner {
                vem,
                pending: Batch::new(),
                batch_limit,
                debug: false,
                captured: None,
                spaces: HashMap::new(),
            })),
            releases: Rc::new(RefCell::new(Vec::new())),
        })
    }

    pub fn with_engine(engine: Box<dyn VectorEngine>) -> Result<Runtime, BridgeError> {
        Runtime::new(Vem::new(engine)?)
    }

    pub fn set_batch_limit(&self, limit: usize) {
        self.inner.borrow_mut().batch_limit = limit.max(1);
    }

    pub fn batch_limit(&self) -> usize {
        self.inner.borrow().batch_limit
    }

    /// Logs the assembly of every flushed batch at debug level.
    pub fn set_debug(&self, debug: bool) {
        self.inner.borrow_mut().debug = debug;
    }

    pub fn engine_name(&self) -> String {
        self.inner.borrow().vem.engine_name().to_string()
    }

    pub fn pending_len(&self) -> usize {
        self.inner.borrow().pending.len()
    }

    /// A copy of the not yet flushed instructions.
    pub fn pending(&self) -> Batch {
        self.inner.borrow().pending.clone()
    }

    pub fn stats(&self) -> VemStats {
        self.inner.borrow().vem.stats()
    }

    pub fn coverage(&self) -> TransitionCoverage {
        self.inner.borrow().vem.coverage().clone()
    }

    pub fn ownership(&self, array: &ManagedArray) -> Option<OwnershipState> {
        self.inner.borrow().vem.state(array.base_id())
    }

    pub fn space(&self, array: &ManagedArray) -> Space {
        self.space_of(array.base_id())
    }

    fn space_of(&self, id: BaseId) -> Space {
        self.inner.borrow().spaces.get(&id).copied().unwrap_or(Space::Managed)
    }

    pub(crate) fn same(&self, other: &Runtime) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Sends the pending batch, followed by FREEs for released arrays, to the
    /// manager. Does nothing when there is no work.
    pub fn flush(&self) -> Result<(), BridgeError> {
        let released: Vec<Arc<ArrayBase>> = self.releases.borrow_mut().drain(..).collect();
        let mut inner = self.inner.borrow_mut();
        for base in released {
            if inner.vem.is_live(base.id()) {
                inner.pending.push(Instruction::system(Opcode::Free, &base));
                inner.spaces.remove(&base.id());
            }
        }
        if inner.pending.is_empty() {
            return Ok(());
        }
        let batch = std::mem::take(&mut inner.pending);
        if inner.debug {
            log::debug!(target: "vvm::batch", "flushing {} instructions\n{}", batch.len(), emit_asm(&batch));
        }
        if let Some(log) = inner.captured.as_mut() {
            log.push(batch.clone());
        }
        inner.vem.execute(&batch)?;
        Ok(())
    }

    /// Keeps a copy of every batch flushed from now on.
    pub fn capture_batches(&self) {
        self.inner.borrow_mut().captured.get_or_insert_with(Vec::new);
    }

    /// Returns the batches captured so far and stops capturing.
    pub fn take_captured(&self) -> Vec<Batch> {
        self.inner.borrow_mut().captured.take().unwrap_or_default()
    }

    /// Flushes and shuts the manager down. Later operations fail.
    pub fn finalize(&self) -> Result<(), BridgeError> {
        self.flush()?;
        self.inner.borrow_mut().vem.shutdown()?;
        Ok(())
    }

    fn record(&self, instr: Instruction) -> Result<(), BridgeError> {
        validate(&instr)?;
        let full = {
            let mut inner = self.inner.borrow_mut();
            if inner.vem.is_shut_down() {
                return Err(VemError::ShutDown.into());
            }
            inner.pending.push(instr);
            inner.pending.len() >= inner.batch_limit
        };
        if full {
            self.flush()?;
        }
        Ok(())
    }

    fn alloc(&self, shape: &[usize], dtype: DType) -> Result<ManagedArray, BridgeError> {
        if shape.is_empty() {
            return Err(ModelError::Malformed("arrays need at least one dimension").into());
        }
        let base = {
            let mut inner = self.inner.borrow_mut();
            let base = inner.vem.create_base(dtype, shape_len(shape))?;
            inner.spaces.insert(base.id(), Space::Managed);
            base
        };
        let view = ArrayView::contiguous(base.clone(), shape)?;
        let handle = Rc::new(BaseHandle { base, releases: Rc::downgrade(&self.releases) });
        Ok(ManagedArray::new(self.clone(), handle, view))
    }

    pub fn create_array(
        &self,
        shape: &[usize],
        dtype: DType,
        init: Init,
        space: Space,
    ) -> Result<ManagedArray, BridgeError> {
        let array = self.alloc(shape, dtype)?;
        match space {
            Space::Managed => match init {
                Init::Empty => {}
                Init::Constant(c) => {
                    self.record(Instruction::unary(Opcode::Identity, array.view(), c.cast(dtype)))?
                }
                Init::Random(seed) => self.record(Instruction::random(array.view(), seed))?,
            },
            Space::Native => {
                let n = array.len();
                let data = match init {
                    Init::Empty => Buffer::zeros(dtype, n),
                    Init::Constant(c) => Buffer::filled(c.cast(dtype), n),
                    Init::Random(seed) => random_buffer(dtype, seed, n),
                };
                *array.base().shared() = Some(data);
                self.inner.borrow_mut().spaces.insert(array.base_id(), Space::Native);
            }
        }
        Ok(array)
    }

    pub fn empty(&self, shape: &[usize], dtype: DType) -> Result<ManagedArray, BridgeError> {
        self.create_array(shape, dtype, Init::Empty, Space::Managed)
    }

    pub fn full(&self, shape: &[usize], value: impl Into<Constant>) -> Result<ManagedArray, BridgeError> {
        let value = value.into();
        self.create_array(shape, value.dtype(), Init::Constant(value), Space::Managed)
    }

    pub fn zeros(&self, shape: &[usize], dtype: DType) -> Result<ManagedArray, BridgeError> {
        self.create_array(shape, dtype, Init::Constant(Constant::zero(dtype)), Space::Managed)
    }

    pub fn random(&self, shape: &[usize], dtype: DType, seed: u64) -> Result<ManagedArray, BridgeError> {
        self.create_array(shape, dtype, Init::Random(seed), Space::Managed)
    }

    /// An array holding `values`. Its data is placed in shared storage either
    /// way; a managed array's engine copy is made on first use.
    pub fn from_dense(&self, values: DenseArray, space: Space) -> Result<ManagedArray, BridgeError> {
        let array = self.alloc(values.shape(), values.dtype())?;
        *array.base().shared() = Some(values.into_data());
        self.inner.borrow_mut().spaces.insert(array.base_id(), space);
        Ok(array)
    }

    fn check_owner(&self, array: &ManagedArray) -> Result<(), BridgeError> {
        if self.same(array.runtime()) {
            Ok(())
        } else {
            Err(BridgeError::ForeignArray)
        }
    }

    /// Moves a native array into the managed space. Shared storage already holds
    /// its values, so only stale engine copies need dropping.
    fn ensure_managed(&self, array: &ManagedArray) -> Result<(), BridgeError> {
        self.check_owner(array)?;
        if self.space_of(array.base_id()) == Space::Native {
            self.inner.borrow_mut().spaces.insert(array.base_id(), Space::Managed);
            self.record(Instruction::system(Opcode::Discard, array.base()))?;
        }
        Ok(())
    }

    /// Moves managed arrays to the native space: SYNC each, then flush once.
    fn ensure_native(&self, arrays: &[&ManagedArray]) -> Result<(), BridgeError> {
        let mut moved = Vec::new();
        for a in arrays {
            self.check_owner(a)?;
            if self.space_of(a.base_id()) == Space::Managed && !moved.contains(&a.base_id()) {
                self.record(Instruction::system(Opcode::Sync, a.base()))?;
                moved.push(a.base_id());
            }
        }
        self.flush()?;
        let mut inner = self.inner.borrow_mut();
        for id in moved {
            inner.spaces.insert(id, Space::Native);
        }
        Ok(())
    }

    /// Sync for read access followed by a discard of engine copies.
    pub fn release(&self, array: &ManagedArray) -> Result<(), BridgeError> {
        self.check_owner(array)?;
        self.record(Instruction::system(Opcode::Sync, array.base()))?;
        self.record(Instruction::system(Opcode::Discard, array.base()))
    }

    fn operands(&self, args: &[Arg], shape: &[usize], dtype: DType) -> Result<Vec<Operand>, BridgeError> {
        args.iter()
            .map(|a| match a {
                Arg::Array(m) => Ok(Operand::View(m.view().broadcast(shape)?)),
                Arg::Scalar(c) => Ok(Operand::Constant(c.cast(dtype))),
            })
            .collect()
    }

    fn result_shape(args: &[Arg]) -> Result<(Vec<usize>, DType), BridgeError> {
        let arrays: Vec<&ManagedArray> = args.iter().filter_map(Arg::array).collect();
        let first = arrays.first().ok_or(BridgeError::NoArrayOperand)?;
        let shape = broadcast_shapes(arrays.iter().map(|a| a.shape()))?;
        Ok((shape, first.dtype()))
    }

    /// Records an elementwise operation into a fresh array. Native operands are
    /// migrated to the managed space first; shapes broadcast.
    pub fn elementwise(&self, op: Opcode, args: &[Arg]) -> Result<ManagedArray, BridgeError> {
        if op.kind() != OpKind::Elementwise || op.arity() != Some(args.len() + 1) {
            return Err(BridgeError::WrongOpcode(op));
        }
        let (shape, dtype) = Runtime::result_shape(args)?;
        for a in args.iter().filter_map(Arg::array) {
            self.ensure_managed(a)?;
        }
        let out_dtype = if op.is_comparison() { DType::Bool } else { dtype };
        let out = self.alloc(&shape, out_dtype)?;
        let inputs = self.operands(args, &shape, dtype)?;
        self.record(Instruction::new(op, out.view().clone(), inputs))?;
        Ok(out)
    }

    pub fn unary(&self, op: Opcode, arg: impl Into<Arg>) -> Result<ManagedArray, BridgeError> {
        self.elementwise(op, &[arg.into()])
    }

    pub fn binary(&self, op: Opcode, lhs: impl Into<Arg>, rhs: impl Into<Arg>) -> Result<ManagedArray, BridgeError> {
        self.elementwise(op, &[lhs.into(), rhs.into()])
    }

    /// Records `op` writing into `target`. Inputs that partially overlap the
    /// target are copied first so the result matches evaluating every input
    /// before writing.
    pub(crate) fn elementwise_into(
        &self,
        op: Opcode,
        target: &ManagedArray,
        args: &[Arg],
    ) -> Result<(), BridgeError> {
        if op.kind() != OpKind::Elementwise || op.arity() != Some(args.len() + 1) {
            return Err(BridgeError::WrongOpcode(op));
        }
        self.check_owner(target)?;
        let out = target.view().clone();
        if !out.is_injective() {
            return Err(BridgeError::WriteThroughBroadcast);
        }
        let arrays: Vec<&ManagedArray> = args.iter().filter_map(Arg::array).collect();
        let shape = broadcast_shapes(std::iter::once(out.shape()).chain(arrays.iter().map(|a| a.shape())))?;
        if shape != out.shape() {
            return Err(BridgeError::ShapeMismatch { expected: out.shape().to_vec(), found: shape });
        }
        self.ensure_managed(target)?;
        for a in &arrays {
            self.ensure_managed(a)?;
        }
        let in_dtype = arrays.first().map_or(out.dtype(), |a| a.dtype());
        let mut inputs = self.operands(args, out.shape(), in_dtype)?;
        let mut temps = Vec::new();
        for input in inputs.iter_mut() {
            if let Operand::View(v) = input {
                if !views_identical(v, &out) && may_share_data(v, &out) {
                    let tmp = self.copy_view(v)?;
                    *v = tmp.view().clone();
                    temps.push(tmp);
                }
            }
        }
        self.record(Instruction::new(op, out, inputs))
    }

    fn copy_view(&self, view: &ArrayView) -> Result<ManagedArray, BridgeError> {
        let tmp = self.alloc(view.shape(), view.dtype())?;
        self.record(Instruction::unary(Opcode::Identity, tmp.view(), view))?;
        Ok(tmp)
    }

    pub(crate) fn reduce(&self, op: Opcode, array: &ManagedArray, axis: usize) -> Result<ManagedArray, BridgeError> {
        if op.kind() != OpKind::Reduction {
            return Err(BridgeError::WrongOpcode(op));
        }
        if axis >= array.ndim() {
            return Err(BridgeError::AxisOutOfRange { axis, ndim: array.ndim() });
        }
        self.ensure_managed(array)?;
        let mut shape: Vec<usize> = array.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let out = self.alloc(&shape, array.dtype())?;
        self.record(Instruction::reduce(op, out.view(), array.view(), axis))?;
        Ok(out)
    }

    pub(crate) fn read(&self, array: &ManagedArray) -> Result<DenseArray, BridgeError> {
        self.check_owner(array)?;
        if self.space_of(array.base_id()) == Space::Managed {
            self.record(Instruction::system(Opcode::Sync, array.base()))?;
            self.flush()?;
        }
        let shared = array.base().shared();
        Ok(match shared.as_ref() {
            Some(buf) => DenseArray::gather(array.view(), buf),
            None => DenseArray::zeros(array.shape().to_vec(), array.dtype()),
        })
    }

    pub fn register_userfunc<F>(&self, arity: usize, body: F) -> Result<UserFuncId, BridgeError>
    where
        F: Fn(&[DenseArray], &mut DenseArray) -> Result<(), String> + Send + Sync + 'static,
    {
        Ok(self.inner.borrow_mut().vem.register_userfunc(arity, body)?)
    }

    /// Records a USERFUNC writing into `out`.
    pub fn call_userfunc(&self, id: UserFuncId, out: &ManagedArray, inputs: &[Arg]) -> Result<(), BridgeError> {
        self.check_owner(out)?;
        if !out.view().is_injective() {
            return Err(BridgeError::WriteThroughBroadcast);
        }
        self.ensure_managed(out)?;
        let mut operands = Vec::with_capacity(inputs.len());
        for arg in inputs {
            operands.push(match arg {
                Arg::Array(m) => {
                    self.ensure_managed(m)?;
                    Operand::View(m.view().clone())
                }
                Arg::Scalar(c) => Operand::Constant(*c),
            });
        }
        self.record(Instruction::userfunc(id, out.view(), operands))
    }

    /// Evaluates an operation the bytecode cannot express. Managed array
    /// arguments are synced and moved to the native space; the result is
    /// native. Known operations are listed in [`FALLBACK_OPS`].
    pub fn fallback(&self, op: &str, args: &[Arg]) -> Result<ManagedArray, BridgeError> {
        if !FALLBACK_OPS.contains(&op) {
            return Err(BridgeError::UnsupportedOperation(op.to_string()));
        }
        let arrays: Vec<&ManagedArray> = args.iter().filter_map(Arg::array).collect();
        self.ensure_native(&arrays)?;
        let mut values = Vec::with_capacity(args.len());
        for arg in args {
            values.push(match arg {
                Arg::Array(m) => fallback::NativeArg::Array(self.read(m)?),
                Arg::Scalar(c) => fallback::NativeArg::Scalar(*c),
            });
        }
        let result = fallback::evaluate(op, &values)?;
        self.from_dense(result, Space::Native)
    }
}
