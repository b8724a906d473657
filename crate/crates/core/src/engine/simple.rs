use std::sync::Arc;

use super::exec::execute_serial;
use super::store::{EngineStore, ProtocolObserver};
use super::{insert_userfunc, EngineError, UserFunc, UserFuncTable, VectorEngine};
use crate::bytecode::Batch;

/// Eager reference engine: one instruction at a time, element by element.
#[derive(Debug, Default)]
pub struct SimpleEngine {
    store: EngineStore,
    funcs: UserFuncTable,
}

impl SimpleEngine {
    pub fn new() -> SimpleEngine {
        SimpleEngine::default()
    }

    pub fn with_observer(observer: Arc<dyn ProtocolObserver>) -> SimpleEngine {
        SimpleEngine { store: EngineStore::with_observer(observer), funcs: UserFuncTable::new() }
    }

    pub fn store(&self) -> &EngineStore {
        &self.store
    }
}

impl VectorEngine for SimpleEngine {
    fn name(&self) -> &str {
        "simple"
    }

    fn register_userfunc(&mut self, func: UserFunc) -> Result<(), EngineError> {
        insert_userfunc(&mut self.funcs, func)
    }

    fn execute(&mut self, batch: &Batch) -> Result<(), EngineError> {
        for (index, instr) in batch.iter().enumerate() {
            execute_serial(&mut self.store, &self.funcs, instr).map_err(EngineError::at(index))?;
        }
        Ok(())
    }

    fn shutdown(&mut self) -> Result<(), EngineError> {
        self.store.clear();
        Ok(())
    }
}
