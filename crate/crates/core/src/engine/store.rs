use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::exec::{RawBuf, RawMemory};
use crate::model::{ArrayBase, BaseId, Buffer};

/// Hook for watching an engine's traffic with shared storage.
pub trait ProtocolObserver: Send + Sync {
    /// The engine copied `base` in from shared storage.
    fn shared_read(&self, base: BaseId);
    /// The engine wrote its copy of `base` back to shared storage.
    fn shared_write(&self, base: BaseId);
}

struct Entry {
    base: Arc<ArrayBase>,
    data: Buffer,
    dirty: bool,
}

/// Engine-private copies of bases, materialized on first use.
#[derive(Default)]
pub struct EngineStore {
    entries: HashMap<BaseId, Entry>,
    observer: Option<Arc<dyn ProtocolObserver>>,
}

impl fmt::Debug for EngineStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut ids: Vec<_> = self.entries.keys().collect();
        ids.sort();
        f.debug_struct("EngineStore").field("bases", &ids).finish()
    }
}

impl EngineStore {
    pub fn new() -> EngineStore {
        EngineStore::default()
    }

    pub fn with_observer(observer: Arc<dyn ProtocolObserver>) -> EngineStore {
        EngineStore { entries: HashMap::new(), observer: Some(observer) }
    }

    pub fn contains(&self, id: BaseId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn is_dirty(&self, id: BaseId) -> bool {
        self.entries.get(&id).is_some_and(|e| e.dirty)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Makes sure an engine copy exists: copied from shared storage when the
    /// base has been materialized there, zero-filled otherwise.
    pub fn ensure(&mut self, base: &Arc<ArrayBase>) {
        if self.entries.contains_key(&base.id()) {
            return;
        }
        let shared = base.shared().clone();
        let data = match shared {
            Some(buf) => {
                if let Some(obs) = &self.observer {
                    obs.shared_read(base.id());
                }
                buf
            }
            None => Buffer::zeros(base.dtype(), base.nelem()),
        };
        self.entries.insert(base.id(), Entry { base: base.clone(), data, dirty: false });
    }

    pub fn buffer(&self, id: BaseId) -> Option<&Buffer> {
        self.entries.get(&id).map(|e| &e.data)
    }

    pub(crate) fn buffer_mut(&mut self, id: BaseId) -> Option<&mut Buffer> {
        self.entries.get_mut(&id).map(|e| &mut e.data)
    }

    pub(crate) fn mark_dirty(&mut self, id: BaseId) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.dirty = true;
        }
    }

    /// Writes the engine copy back when it holds changes the shared side has
    /// not seen. A base the engine never touched is left alone.
    pub fn sync(&mut self, base: &ArrayBase) {
        if let Some(e) = self.entries.get_mut(&base.id()) {
            if e.dirty {
                *e.base.shared() = Some(e.data.clone());
                e.dirty = false;
                if let Some(obs) = &self.observer {
                    obs.shared_write(base.id());
                }
            }
        }
    }

    /// Drops the engine copy without writing it back.
    pub fn discard(&mut self, id: BaseId) {
        self.entries.remove(&id);
    }

    /// Releases the engine copy and the shared copy.
    pub fn free(&mut self, base: &ArrayBase) {
        self.entries.remove(&base.id());
        *base.shared() = None;
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub(crate) fn raw(&mut self) -> RawMemory<'_> {
        let bufs = self.entries.iter_mut().map(|(id, e)| (*id, RawBuf::new(&mut e.data))).collect();
        RawMemory::new(bufs)
    }
}
