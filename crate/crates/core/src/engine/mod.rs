//! Vector engines: executors of bytecode batches over engine-private copies of
//! array bases.

mod exec;
mod fused;
mod simple;
mod store;

pub use fused::{
    block_range, blockable, form_kernels, is_self_conflicting, partition, BlockTask, FusedEngine, Kernel,
    Segment,
};
pub use simple::SimpleEngine;
pub use store::{EngineStore, ProtocolObserver};

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::bytecode::{Batch, UserFuncId, ValidationError};
use crate::model::DenseArray;

/// Why a single instruction failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Fault {
    #[error("integer division by zero")]
    DivideByZero,
    #[error("negative exponent on an integer power")]
    NegativeExponent,
    #[error("operation not defined for this dtype")]
    Unsupported,
    #[error("unknown user function {0:?}")]
    UnknownUserFunc(UserFuncId),
    #[error("user function {id:?} takes {expected} operands, got {found}")]
    UserFuncArity { id: UserFuncId, expected: usize, found: usize },
    #[error("user function {id:?} failed: {message}")]
    UserFunc { id: UserFuncId, message: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("instruction {index}: {fault}")]
    Execution { index: usize, fault: Fault },
    #[error("user function {0:?} is already registered")]
    DuplicateUserFunc(UserFuncId),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl EngineError {
    pub(crate) fn at(index: usize) -> impl FnOnce(Fault) -> EngineError {
        move |fault| EngineError::Execution { index, fault }
    }
}

type UserFuncBody = dyn Fn(&[DenseArray], &mut DenseArray) -> Result<(), String> + Send + Sync;

/// A host callback invoked by USERFUNC instructions. The body sees its inputs
/// and the current output values as dense row-major arrays and updates the
/// output in place.
#[derive(Clone)]
pub struct UserFunc {
    id: UserFuncId,
    arity: usize,
    body: Arc<UserFuncBody>,
}

impl UserFunc {
    /// `arity` counts the output operand.
    pub fn new<F>(id: UserFuncId, arity: usize, body: F) -> UserFunc
    where
        F: Fn(&[DenseArray], &mut DenseArray) -> Result<(), String> + Send + Sync + 'static,
    {
        UserFunc { id, arity, body: Arc::new(body) }
    }

    pub fn id(&self) -> UserFuncId {
        self.id
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn call(&self, inputs: &[DenseArray], out: &mut DenseArray) -> Result<(), String> {
        (self.body)(inputs, out)
    }
}

impl fmt::Debug for UserFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserFunc").field("id", &self.id).field("arity", &self.arity).finish()
    }
}

pub(crate) type UserFuncTable = HashMap<UserFuncId, UserFunc>;

pub(crate) fn insert_userfunc(table: &mut UserFuncTable, func: UserFunc) -> Result<(), EngineError> {
    if table.contains_key(&func.id) {
        return Err(EngineError::DuplicateUserFunc(func.id));
    }
    table.insert(func.id, func);
    Ok(())
}

/// The component interface every engine implements.
pub trait VectorEngine: Send {
    fn name(&self) -> &str;

    fn init(&mut self) -> Result<(), EngineError> {
        Ok(())
    }

    fn register_userfunc(&mut self, func: UserFunc) -> Result<(), EngineError>;

    /// Runs the batch in order. On error the batch is abandoned at the reported
    /// instruction index.
    fn execute(&mut self, batch: &Batch) -> Result<(), EngineError>;

    /// Drops every engine-side copy without writing anything back.
    fn shutdown(&mut self) -> Result<(), EngineError>;
}
