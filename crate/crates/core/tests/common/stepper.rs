//! A wrapper engine that steps its inner engine one instruction at a time and
//! compares every shared-storage access against the naive evaluator's
//! two-level model.

use std::sync::{Arc, Mutex};

use super::programs::generate;
use super::reference::Reference;
use vvm_core::bytecode::{Batch, Instruction, Opcode};
use vvm_core::engine::{EngineError, ProtocolObserver, UserFunc, VectorEngine};
use vvm_core::model::BaseId;
use vvm_core::vem::{TransitionCoverage, Vem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Access {
    Read(BaseId),
    Write(BaseId),
}

#[derive(Default)]
pub struct Log(Mutex<Vec<Access>>);

impl Log {
    pub fn take(&self) -> Vec<Access> {
        std::mem::take(&mut *self.0.lock().unwrap())
    }
}

impl ProtocolObserver for Log {
    fn shared_read(&self, base: BaseId) {
        self.0.lock().unwrap().push(Access::Read(base));
    }

    fn shared_write(&self, base: BaseId) {
        self.0.lock().unwrap().push(Access::Write(base));
    }
}

#[derive(Default)]
pub struct Findings {
    pub violations: Vec<String>,
    pub syncs_checked: usize,
    pub reads: usize,
    pub writes: usize,
}

struct Stepper {
    inner: Box<dyn VectorEngine>,
    log: Arc<Log>,
    reference: Arc<Mutex<Reference>>,
    findings: Arc<Mutex<Findings>>,
}

impl Stepper {
    fn check(&self, index: usize, instr: &Instruction, before: &Reference, after: &Reference, accesses: &[Access]) {
        let mut findings = self.findings.lock().unwrap();
        let sync_target = (instr.opcode == Opcode::Sync).then(|| instr.system_target().expect("target").id());
        for access in accesses {
            match access {
                Access::Read(_) => findings.reads += 1,
                Access::Write(_) => findings.writes += 1,
            }
            match *access {
                Access::Read(id) if !before.shared_is_current(id) => {
                    findings.violations.push(format!("instruction {index}: read stale shared copy of {id}"));
                }
                Access::Write(id) if sync_target != Some(id) => {
                    findings.violations.push(format!("instruction {index} ({}): wrote {id} outside its SYNC", instr.opcode));
                }
                Access::Write(id) if before.shared_is_current(id) => {
                    findings.violations.push(format!("instruction {index}: SYNC of clean {id} wrote back"));
                }
                _ => {}
            }
        }
        if let Some(id) = sync_target {
            let writes = accesses.iter().filter(|a| **a == Access::Write(id)).count();
            if writes != usize::from(!before.shared_is_current(id)) {
                findings.violations.push(format!("instruction {index}: SYNC of {id} wrote {writes} times"));
            }
            let actual = instr.system_target().expect("target").shared().clone();
            let matches = match (actual, after.shared(id)) {
                (Some(a), Some(b)) => a.bit_eq(b),
                (None, None) => true,
                _ => false,
            };
            if !matches {
                findings.violations.push(format!("instruction {index}: shared copy of {id} differs after SYNC"));
            }
            findings.syncs_checked += 1;
        }
    }
}

impl VectorEngine for Stepper {
    fn name(&self) -> &str {
        "stepper"
    }

    fn register_userfunc(&mut self, func: UserFunc) -> Result<(), EngineError> {
        self.inner.register_userfunc(func)
    }

    fn execute(&mut self, batch: &Batch) -> Result<(), EngineError> {
        for (index, instr) in batch.iter().enumerate() {
            let before = {
                let mut reference = self.reference.lock().unwrap();
                let snapshot = reference.clone();
                reference.apply(instr).expect("generated programs do not fault");
                snapshot
            };
            self.log.take();
            self.inner.execute(&Batch::from(vec![instr.clone()])).map_err(|e| match e {
                EngineError::Execution { fault, .. } => EngineError::Execution { index, fault },
                other => other,
            })?;
            let accesses = self.log.take();
            let after = self.reference.lock().unwrap().clone();
            self.check(index, instr, &before, &after, &accesses);
        }
        Ok(())
    }

    fn shutdown(&mut self) -> Result<(), EngineError> {
        self.inner.shutdown()
    }
}

/// Runs programs `seeds` through the manager on a stepped engine built by
/// `make`, which must attach the log as the engine's observer.
pub fn drive(make: impl Fn(Arc<Log>) -> Box<dyn VectorEngine>, seeds: std::ops::Range<u64>) -> (Findings, TransitionCoverage) {
    let mut coverage = TransitionCoverage::default();
    let mut total = Findings::default();
    for seed in seeds {
        let program = generate(seed);
        let log = Arc::new(Log::default());
        let reference = Arc::new(Mutex::new(Reference::new()));
        let findings = Arc::new(Mutex::new(Findings::default()));
        let stepper = Stepper {
            inner: make(log.clone()),
            log,
            reference: reference.clone(),
            findings: findings.clone(),
        };
        let mut vem = Vem::new(Box::new(stepper)).unwrap();
        let built = program.build();
        for (base, data) in built.bases.iter().zip(&program.bases) {
            reference.lock().unwrap().set_shared(base.id(), data.clone());
            vem.adopt(base.clone()).unwrap();
        }
        vem.execute(&built.batch).unwrap();
        for base in &built.bases {
            if let Some(state) = vem.state(base.id()) {
                let current = reference.lock().unwrap().shared_is_current(base.id());
                if state.shared_current() != current {
                    total.violations.push(format!("seed {seed}: manager says {state:?} for {}", base.id()));
                }
            }
        }
        vem.shutdown().unwrap();
        coverage.merge(vem.coverage());
        let found = std::mem::take(&mut *findings.lock().unwrap());
        total.violations.extend(found.violations.into_iter().map(|v| format!("seed {seed}: {v}")));
        total.syncs_checked += found.syncs_checked;
        total.reads += found.reads;
        total.writes += found.writes;
    }
    (total, coverage)
}

