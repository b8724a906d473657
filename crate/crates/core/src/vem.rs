//! Single-child vector engine manager: base lifecycle, ownership bookkeeping and
//! batch forwarding. The manager never touches array storage itself.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::bytecode::{validate, Batch, Instruction, OpKind, Opcode, UserFuncId, ValidationError};
use crate::engine::{EngineError, UserFunc, VectorEngine};
use crate::model::{ArrayBase, BaseId, DType, DenseArray};

/// Who holds the authoritative copy of a base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OwnershipState {
    /// Shared storage is current and no engine copy holds newer data.
    Shared,
    /// The engine has written since the last SYNC; shared storage is stale.
    EngineDirty,
    /// The engine owns a copy and shared storage matches it.
    EngineSynced,
}

impl OwnershipState {
    pub fn engine_owned(self) -> bool {
        self != OwnershipState::Shared
    }

    pub fn shared_current(self) -> bool {
        self != OwnershipState::EngineDirty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolEvent {
    Create,
    EngineWrite,
    Sync,
    Discard,
    Free,
}

/// One edge of the ownership state machine. `from` is `None` for creation and
/// `to` is `None` once the base is freed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub from: Option<OwnershipState>,
    pub event: ProtocolEvent,
    pub to: Option<OwnershipState>,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |s: Option<OwnershipState>| s.map_or("-".to_string(), |s| format!("{s:?}"));
        write!(f, "{} --{:?}--> {}", name(self.from), self.event, name(self.to))
    }
}

/// Applies `event` to `from`. Returns `None` for events that are not legal
/// from that state (only creation of an existing base).
pub fn transition(from: Option<OwnershipState>, event: ProtocolEvent) -> Option<Transition> {
    use OwnershipState::*;
    use ProtocolEvent::*;
    let to = match (from, event) {
        (None, Create) => Some(Shared),
        (None, _) | (Some(_), Create) => return None,
        (Some(_), EngineWrite) => Some(EngineDirty),
        (Some(Shared), Sync) => Some(Shared),
        (Some(_), Sync) => Some(EngineSynced),
        (Some(_), Discard) => Some(Shared),
        (Some(_), Free) => None,
    };
    Some(Transition { from, event, to })
}

/// Every legal transition of the state machine.
pub fn all_transitions() -> Vec<Transition> {
    use OwnershipState::*;
    use ProtocolEvent::*;
    let mut all = vec![transition(None, Create).expect("creation is legal")];
    for state in [Shared, EngineDirty, EngineSynced] {
        for event in [EngineWrite, Sync, Discard, Free] {
            all.push(transition(Some(state), event).expect("legal from any live state"));
        }
    }
    all
}

/// Counts how often each transition has been taken.
#[derive(Debug, Clone, Default)]
pub struct TransitionCoverage {
    hits: BTreeMap<Transition, u64>,
}

impl TransitionCoverage {
    fn record(&mut self, t: Transition) {
        *self.hits.entry(t).or_default() += 1;
    }

    pub fn hits(&self, t: &Transition) -> u64 {
        self.hits.get(t).copied().unwrap_or(0)
    }

    pub fn missing(&self) -> Vec<Transition> {
        all_transitions().into_iter().filter(|t| self.hits(t) == 0).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.missing().is_empty()
    }

    pub fn merge(&mut self, other: &TransitionCoverage) {
        for (t, n) in &other.hits {
            *self.hits.entry(*t).or_default() += n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VemError {
    #[error("instruction {index}: {source}")]
    Invalid { index: usize, source: ValidationError },
    #[error("unknown base {base}")]
    UnknownBase { base: BaseId, index: Option<usize> },
    #[error("base {0} is already registered")]
    DuplicateBase(BaseId),
    #[error("base {0} was already freed")]
    DoubleFree(BaseId),
    #[error("user functions need at least one operand")]
    UserFuncArity,
    #[error("the manager has been shut down")]
    ShutDown,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl VemError {
    /// Batch index of the failing instruction, when the error has one.
    pub fn instruction_index(&self) -> Option<usize> {
        match self {
            VemError::Invalid { index, .. } => Some(*index),
            VemError::UnknownBase { index, .. } => *index,
            VemError::Engine(EngineError::Execution { index, .. }) => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VemStats {
    pub batches: u64,
    pub instructions: u64,
}

struct Record {
    base: Arc<ArrayBase>,
    state: OwnershipState,
}

/// The node manager.
pub struct Vem {
    engine: Box<dyn VectorEngine>,
    live: HashMap<BaseId, Record>,
    freed: HashSet<BaseId>,
    coverage: TransitionCoverage,
    stats: VemStats,
    next_func: u32,
    shut_down: bool,
}

impl fmt::Debug for Vem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vem")
            .field("engine", &self.engine.name())
            .field("live", &self.live.len())
            .field("shut_down", &self.shut_down)
            .finish()
    }
}

impl Vem {
    /// Wraps and initializes `engine`.
    pub fn new(mut engine: Box<dyn VectorEngine>) -> Result<Vem, VemError> {
        engine.init()?;
        Ok(Vem {
            engine,
            live: HashMap::new(),
            freed: HashSet::new(),
            coverage: TransitionCoverage::default(),
            stats: VemStats::default(),
            next_func: 0,
            shut_down: false,
        })
    }

    pub fn engine_name(&self) -> &str {
        self.engine.name()
    }

    fn check_running(&self) -> Result<(), VemError> {
        if self.shut_down {
            Err(VemError::ShutDown)
        } else {
            Ok(())
        }
    }

    fn apply(&mut self, id: BaseId, event: ProtocolEvent) {
        let from = self.live.get(&id).map(|r| r.state);
        let Some(t) = transition(from, event) else {
            return;
        };
        self.coverage.record(t);
        match t.to {
            Some(state) => {
                if let Some(r) = self.live.get_mut(&id) {
                    r.state = state;
                }
            }
            None => {
                self.live.remove(&id);
                self.freed.insert(id);
            }
        }
    }

    /// Registers metadata for a new base. No storage is allocated.
    pub fn create_base(&mut self, dtype: DType, nelem: usize) -> Result<Arc<ArrayBase>, VemError> {
        self.check_running()?;
        let base = ArrayBase::new(dtype, nelem);
        self.adopt(base.clone())?;
        Ok(base)
    }

    /// Registers a base created elsewhere, e.g. by the assembler.
    pub fn adopt(&mut self, base: Arc<ArrayBase>) -> Result<(), VemError> {
        self.check_running()?;
        let id = base.id();
        if self.live.contains_key(&id) || self.freed.contains(&id) {
            return Err(VemError::DuplicateBase(id));
        }
        self.live.insert(id, Record { base, state: OwnershipState::Shared });
        self.coverage.record(transition(None, ProtocolEvent::Create).expect("creation is legal"));
        Ok(())
    }

    pub fn is_live(&self, id: BaseId) -> bool {
        self.live.contains_key(&id)
    }

    pub fn live_bases(&self) -> usize {
        self.live.len()
    }

    pub fn state(&self, id: BaseId) -> Option<OwnershipState> {
        self.live.get(&id).map(|r| r.state)
    }

    pub fn coverage(&self) -> &TransitionCoverage {
        &self.coverage
    }

    pub fn stats(&self) -> VemStats {
        self.stats
    }

    /// Releases a live base on the engine and in shared storage.
    pub fn free(&mut self, id: BaseId) -> Result<(), VemError> {
        self.check_running()?;
        let base = match self.live.get(&id) {
            Some(r) => r.base.clone(),
            None if self.freed.contains(&id) => return Err(VemError::DoubleFree(id)),
            None => return Err(VemError::UnknownBase { base: id, index: None }),
        };
        self.execute(&Batch::from(vec![Instruction::system(Opcode::Free, &base)]))
    }

    /// Validates the batch, checks every referenced base is live at its point of
    /// use, forwards it to the engine and updates ownership for every
    /// instruction that completed.
    pub fn execute(&mut self, batch: &Batch) -> Result<(), VemError> {
        self.check_running()?;
        self.check_batch(batch)?;
        let result = self.engine.execute(batch);
        let done = match &result {
            Ok(()) => batch.len(),
            Err(EngineError::Execution { index, .. }) => *index,
            Err(_) => 0,
        };
        for instr in &batch.instructions[..done] {
            self.record(instr);
        }
        self.stats.batches += 1;
        self.stats.instructions += done as u64;
        result.map_err(VemError::from)
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), VemError> {
        let mut freed_here: Vec<BaseId> = Vec::new();
        for (index, instr) in batch.iter().enumerate() {
            validate(instr).map_err(|source| VemError::Invalid { index, source })?;
            for v in instr.views() {
                let id = v.base_id();
                if !self.live.contains_key(&id) || freed_here.contains(&id) {
                    return Err(VemError::UnknownBase { base: id, index: Some(index) });
                }
            }
            if instr.opcode == Opcode::Free {
                freed_here.push(instr.system_target().expect("validated").id());
            }
        }
        Ok(())
    }

    fn record(&mut self, instr: &Instruction) {
        match instr.kind() {
            OpKind::System => {
                let id = instr.system_target().expect("validated").id();
                let event = match instr.opcode {
                    Opcode::Sync => ProtocolEvent::Sync,
                    Opcode::Discard => ProtocolEvent::Discard,
                    _ => ProtocolEvent::Free,
                };
                self.apply(id, event);
            }
            _ => {
                if let Some(out) = &instr.out {
                    self.apply(out.base_id(), ProtocolEvent::EngineWrite);
                }
            }
        }
    }

    /// Registers a host callback and returns its id. `arity` counts the output.
    pub fn register_userfunc<F>(&mut self, arity: usize, body: F) -> Result<UserFuncId, VemError>
    where
        F: Fn(&[DenseArray], &mut DenseArray) -> Result<(), String> + Send + Sync + 'static,
    {
        self.check_running()?;
        if arity == 0 {
            return Err(VemError::UserFuncArity);
        }
        let id = UserFuncId(self.next_func);
        self.engine.register_userfunc(UserFunc::new(id, arity, body))?;
        self.next_func += 1;
        Ok(id)
    }

    /// Frees every live base and finalizes the engine.
    pub fn shutdown(&mut self) -> Result<(), VemError> {
        self.check_running()?;
        let mut bases: Vec<Arc<ArrayBase>> = self.live.values().map(|r| r.base.clone()).collect();
        bases.sort_by_key(|b| b.id());
        let frees: Vec<Instruction> = bases.iter().map(|b| Instruction::system(Opcode::Free, b)).collect();
        let result = if frees.is_empty() { Ok(()) } else { self.execute(&Batch::from(frees)) };
        self.shut_down = true;
        self.engine.shutdown()?;
        result
    }

    pub fn is_shut_down(&self) -> bool {
        self.shut_down
    }
}
