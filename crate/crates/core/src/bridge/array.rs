use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use super::{BaseHandle, BridgeError, Runtime, Space};
use crate::bytecode::Opcode;
use crate::model::{ArrayBase, ArrayView, BaseId, Constant, DType, DenseArray, SliceArg};

/// A handle to an array owned by a [`Runtime`]. Slicing and broadcasting
/// produce new handles onto the same base; nothing is copied.
#[derive(Clone)]
pub struct ManagedArray {
    rt: Runtime,
    handle: Rc<BaseHandle>,
    view: ArrayView,
}

impl fmt::Debug for ManagedArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ManagedArray{}", self.view)
    }
}

/// An operand of a recorded operation.
#[derive(Debug, Clone)]
pub enum Arg {
    Array(ManagedArray),
    Scalar(Constant),
}

impl Arg {
    pub fn array(&self) -> Option<&ManagedArray> {
        match self {
            Arg::Array(a) => Some(a),
            Arg::Scalar(_) => None,
        }
    }
}

impl From<&ManagedArray> for Arg {
    fn from(a: &ManagedArray) -> Self {
        Arg::Array(a.clone())
    }
}

impl From<ManagedArray> for Arg {
    fn from(a: ManagedArray) -> Self {
        Arg::Array(a)
    }
}

impl From<Constant> for Arg {
    fn from(c: Constant) -> Self {
        Arg::Scalar(c)
    }
}

macro_rules! scalar_arg {
    ($($t:ty),*) => {
        $(impl From<$t> for Arg {
            fn from(v: $t) -> Self {
                Arg::Scalar(Constant::from(v))
            }
        })*
    };
}

scalar_arg!(f64, f32, i64, bool);

macro_rules! binary_ops {
    ($($name:ident => $op:ident),* $(,)?) => {
        $(pub fn $name(&self, rhs: impl Into<Arg>) -> Result<ManagedArray, BridgeError> {
            self.rt.binary(Opcode::$op, self, rhs)
        })*
    };
}

macro_rules! assign_ops {
    ($($name:ident => $op:ident),* $(,)?) => {
        $(pub fn $name(&self, rhs: impl Into<Arg>) -> Result<(), BridgeError> {
            self.rt.elementwise_into(Opcode::$op, self, &[self.into(), rhs.into()])
        })*
    };
}

impl ManagedArray {
    pub(super) fn new(rt: Runtime, handle: Rc<BaseHandle>, view: ArrayView) -> ManagedArray {
        ManagedArray { rt, handle, view }
    }

    fn with_view(&self, view: ArrayView) -> ManagedArray {
        ManagedArray { rt: self.rt.clone(), handle: self.handle.clone(), view }
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn view(&self) -> &ArrayView {
        &self.view
    }

    pub fn base(&self) -> &Arc<ArrayBase> {
        &self.handle.base
    }

    pub fn base_id(&self) -> BaseId {
        self.handle.base.id()
    }

    pub fn shape(&self) -> &[usize] {
        self.view.shape()
    }

    pub fn ndim(&self) -> usize {
        self.view.ndim()
    }

    pub fn len(&self) -> usize {
        self.view.len()
    }

    pub fn is_empty(&self) -> bool {
        self.view.is_empty()
    }

    pub fn dtype(&self) -> DType {
        self.view.dtype()
    }

    pub fn space(&self) -> Space {
        self.rt.space(self)
    }

    pub fn slice(&self, args: &[SliceArg]) -> Result<ManagedArray, BridgeError> {
        Ok(self.with_view(self.view.slice(args)?))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<ManagedArray, BridgeError> {
        Ok(self.with_view(self.view.broadcast(shape)?))
    }

    pub fn insert_axis(&self, axis: usize) -> Result<ManagedArray, BridgeError> {
        Ok(self.with_view(self.view.insert_axis(axis)?))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<ManagedArray, BridgeError> {
        Ok(self.with_view(self.view.reshape(shape)?))
    }

    binary_ops! {
        add => Add,
        sub => Subtract,
        mul => Multiply,
        div => Divide,
        pow => Power,
        minimum => Minimum,
        maximum => Maximum,
        greater => Greater,
        less => Less,
        equal => Equal,
    }

    assign_ops! {
        add_assign => Add,
        sub_assign => Subtract,
        mul_assign => Multiply,
        div_assign => Divide,
    }

    pub fn sqrt(&self) -> Result<ManagedArray, BridgeError> {
        self.rt.unary(Opcode::Sqrt, self)
    }

    pub fn abs(&self) -> Result<ManagedArray, BridgeError> {
        self.rt.unary(Opcode::Absolute, self)
    }

    pub fn neg(&self) -> Result<ManagedArray, BridgeError> {
        self.rt.unary(Opcode::Negative, self)
    }

    /// A fresh contiguous copy.
    pub fn copy(&self) -> Result<ManagedArray, BridgeError> {
        self.rt.unary(Opcode::Identity, self)
    }

    /// `self[...] = source`, with broadcasting of `source`.
    pub fn assign(&self, source: impl Into<Arg>) -> Result<(), BridgeError> {
        self.rt.elementwise_into(Opcode::Identity, self, &[source.into()])
    }

    pub fn sum_axis(&self, axis: usize) -> Result<ManagedArray, BridgeError> {
        self.rt.reduce(Opcode::AddReduce, self, axis)
    }

    pub fn min_axis(&self, axis: usize) -> Result<ManagedArray, BridgeError> {
        self.rt.reduce(Opcode::MinimumReduce, self, axis)
    }

    pub fn max_axis(&self, axis: usize) -> Result<ManagedArray, BridgeError> {
        self.rt.reduce(Opcode::MaximumReduce, self, axis)
    }

    /// Sum of all elements as a one-element array, reducing the leading axis
    /// repeatedly.
    pub fn sum(&self) -> Result<ManagedArray, BridgeError> {
        let mut acc = self.sum_axis(0)?;
        while acc.ndim() > 1 || acc.len() > 1 {
            acc = acc.sum_axis(0)?;
        }
        Ok(acc)
    }

    /// Current values. Managed arrays are synced and the pending batch flushed;
    /// the array stays managed.
    pub fn read(&self) -> Result<DenseArray, BridgeError> {
        self.rt.read(self)
    }
}
