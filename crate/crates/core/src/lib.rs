//! A layered vector bytecode runtime: an array front end records operations
//! into bytecode batches that a manager forwards to interchangeable engines.

pub mod apps;
pub mod bridge;
pub mod bytecode;
pub mod config;
pub mod engine;
pub mod model;
pub mod random;
pub mod vem;

pub use bytecode::{Batch, Instruction, Opcode, Operand};
pub use engine::{FusedEngine, SimpleEngine, VectorEngine};
pub use model::{ArrayBase, ArrayView, BaseId, Buffer, Constant, DType, DenseArray, SliceArg};
