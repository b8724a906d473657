//! Kernel formation, data blocking and block-parallel execution.

use std::ops::Range;
use std::sync::{Arc, Mutex};

use rayon::{ThreadPool, ThreadPoolBuilder};

use super::exec::{execute_serial, prepare, run_range, RawMemory};
use super::store::{EngineStore, ProtocolObserver};
use super::{insert_userfunc, EngineError, Fault, UserFunc, UserFuncTable, VectorEngine};
use crate::bytecode::{validate, Batch, Instruction, OpKind};
use crate::model::{may_share_data, views_identical, ArrayView};

/// A run of consecutive, mutually blockable instructions.
#[derive(Debug, Clone, Copy)]
pub struct Kernel<'a> {
    /// Batch index of the first instruction.
    pub start: usize,
    pub instructions: &'a [Instruction],
}

impl Kernel<'_> {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Segment<'a> {
    Kernel(Kernel<'a>),
    Single { index: usize, instruction: &'a Instruction },
}

impl<'a> Segment<'a> {
    pub fn instructions(&self) -> &'a [Instruction] {
        match self {
            Segment::Kernel(k) => k.instructions,
            Segment::Single { instruction, .. } => std::slice::from_ref(*instruction),
        }
    }
}

fn independent(a: &ArrayView, b: &ArrayView) -> bool {
    views_identical(a, b) || !may_share_data(a, b)
}

/// True when `next` may join `kernel`: its inputs never partially overlap an
/// output of the kernel, and its output never partially overlaps any operand
/// of the kernel.
pub fn blockable(kernel: &[Instruction], next: &Instruction) -> bool {
    let Some(out) = next.out.as_ref() else {
        return false;
    };
    kernel.iter().all(|a| {
        let Some(a_out) = a.out.as_ref() else {
            return false;
        };
        next.input_views().all(|i| independent(i, a_out)) && a.views().all(|v| independent(out, v))
    })
}

/// An instruction whose output partially overlaps one of its own inputs, or
/// whose output addresses some element twice. Blocking such an instruction
/// could change its result, so it always runs alone.
pub fn is_self_conflicting(instr: &Instruction) -> bool {
    let Some(out) = instr.out.as_ref() else {
        return false;
    };
    !out.is_injective() || instr.input_views().any(|i| !independent(out, i))
}

fn fusible(instr: &Instruction) -> bool {
    matches!(instr.kind(), OpKind::Elementwise | OpKind::Generator) && !is_self_conflicting(instr)
}

/// Greedy left-to-right split of a batch into kernels and singletons.
pub fn form_kernels(batch: &Batch) -> Vec<Segment<'_>> {
    let all = batch.instructions.as_slice();
    let mut segments = Vec::new();
    let mut start = 0;
    for (i, instr) in all.iter().enumerate() {
        if fusible(instr) {
            if start < i && !blockable(&all[start..i], instr) {
                segments.push(Segment::Kernel(Kernel { start, instructions: &all[start..i] }));
                start = i;
            }
            continue;
        }
        if start < i {
            segments.push(Segment::Kernel(Kernel { start, instructions: &all[start..i] }));
        }
        segments.push(Segment::Single { index: i, instruction: instr });
        start = i + 1;
    }
    if start < all.len() {
        segments.push(Segment::Kernel(Kernel { start, instructions: &all[start..] }));
    }
    segments
}

/// Block `b` of `blocks` contiguous cuts of `0..n`, at `b*n/blocks`.
pub fn block_range(n: usize, blocks: usize, b: usize) -> Range<usize> {
    let cut = |j: usize| ((j as u128 * n as u128) / blocks as u128) as usize;
    cut(b)..cut(b + 1)
}

/// One block of a kernel: a subrange of each instruction's output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTask {
    pub block: usize,
    pub ranges: Vec<Range<usize>>,
}

pub fn partition(kernel: &Kernel<'_>, blocks: usize) -> Vec<BlockTask> {
    let blocks = blocks.max(1);
    (0..blocks)
        .map(|block| BlockTask {
            block,
            ranges: kernel
                .instructions
                .iter()
                .map(|instr| block_range(instr.out.as_ref().map_or(0, ArrayView::len), blocks, block))
                .collect(),
        })
        .collect()
}

/// The blocked engine. With one thread it is the cache-blocking `score`
/// engine; with more it is the multi-core `mcore` engine.
pub struct FusedEngine {
    name: String,
    blocks: usize,
    threads: usize,
    store: EngineStore,
    funcs: UserFuncTable,
    pool: Option<ThreadPool>,
}

impl std::fmt::Debug for FusedEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FusedEngine")
            .field("name", &self.name)
            .field("blocks", &self.blocks)
            .field("threads", &self.threads)
            .finish()
    }
}

impl FusedEngine {
    pub fn new(blocks: usize, threads: usize) -> Result<FusedEngine, EngineError> {
        let blocks = blocks.max(1);
        let threads = threads.max(1);
        let pool = if threads > 1 {
            let pool = ThreadPoolBuilder::new()
                .num_threads(threads)
                .thread_name(|i| format!("vvm-worker-{i}"))
                .build()
                .map_err(|e| EngineError::Pool(e.to_string()))?;
            Some(pool)
        } else {
            None
        };
        let name = if threads > 1 { "mcore" } else { "score" }.to_string();
        Ok(FusedEngine { name, blocks, threads, store: EngineStore::new(), funcs: UserFuncTable::new(), pool })
    }

    pub fn score(blocks: usize) -> FusedEngine {
        FusedEngine::new(blocks, 1).expect("no pool needed for one thread")
    }

    /// The multi-core engine. It keeps its name with a single thread.
    pub fn mcore(blocks: usize, threads: usize) -> Result<FusedEngine, EngineError> {
        let mut engine = FusedEngine::new(blocks, threads)?;
        engine.name = "mcore".to_string();
        Ok(engine)
    }

    pub fn with_observer(mut self, observer: Arc<dyn ProtocolObserver>) -> FusedEngine {
        self.store = EngineStore::with_observer(observer);
        self
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn store(&self) -> &EngineStore {
        &self.store
    }

    fn run_kernel(&mut self, kernel: Kernel<'_>) -> Result<(), EngineError> {
        for (k, instr) in kernel.instructions.iter().enumerate() {
            validate(instr).map_err(|e| EngineError::Execution { index: kernel.start + k, fault: e.into() })?;
            prepare(&mut self.store, instr);
        }
        let blocks = self.blocks;
        let threads = self.threads;
        let first_error: Mutex<Option<(usize, Fault)>> = Mutex::new(None);
        {
            let mem = self.store.raw();
            let run_worker = |worker: usize| {
                for b in (worker..blocks).step_by(threads) {
                    if let Err((k, fault)) = run_block(&kernel, &mem, blocks, b) {
                        let mut slot = first_error.lock().expect("error slot");
                        if slot.as_ref().is_none_or(|(prev, _)| k < *prev) {
                            *slot = Some((k, fault));
                        }
                        return;
                    }
                }
            };
            match &self.pool {
                Some(pool) => pool.scope(|s| {
                    for worker in 0..threads {
                        let run_worker = &run_worker;
                        s.spawn(move |_| run_worker(worker));
                    }
                }),
                None => run_worker(0),
            }
        }
        if let Some((k, fault)) = first_error.into_inner().expect("error slot") {
            return Err(EngineError::Execution { index: kernel.start + k, fault });
        }
        for instr in kernel.instructions {
            if let Some(out) = &instr.out {
                self.store.mark_dirty(out.base_id());
            }
        }
        Ok(())
    }
}

/// Runs every kernel instruction, in order, over block `b` of its output.
fn run_block(kernel: &Kernel<'_>, mem: &RawMemory<'_>, blocks: usize, b: usize) -> Result<(), (usize, Fault)> {
    for (k, instr) in kernel.instructions.iter().enumerate() {
        let n = instr.out.as_ref().map_or(0, ArrayView::len);
        // SAFETY: blockability plus identical cuts for identical views mean no
        // two blocks touch the same element of any written view.
        unsafe { run_range(instr, mem, block_range(n, blocks, b)) }.map_err(|f| (k, f))?;
    }
    Ok(())
}

impl VectorEngine for FusedEngine {
    fn name(&self) -> &str {
        &self.name
    }

    fn register_userfunc(&mut self, func: UserFunc) -> Result<(), EngineError> {
        insert_userfunc(&mut self.funcs, func)
    }

    fn execute(&mut self, batch: &Batch) -> Result<(), EngineError> {
        for segment in form_kernels(batch) {
            match segment {
                Segment::Kernel(kernel) => self.run_kernel(kernel)?,
                Segment::Single { index, instruction } => {
                    execute_serial(&mut self.store, &self.funcs, instruction).map_err(EngineError::at(index))?
                }
            }
        }
        Ok(())
    }

    fn shutdown(&mut self) -> Result<(), EngineError> {
        self.store.clear();
        Ok(())
    }
}
