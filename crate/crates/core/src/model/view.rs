use std::fmt;
use std::ops::{Range, RangeFrom, RangeFull, RangeTo};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use smallvec::SmallVec;

use super::{shape_len, Buffer, DType, ModelError};

pub(crate) type Dims = SmallVec<[usize; 4]>;
pub(crate) type Strides = SmallVec<[isize; 4]>;

static NEXT_BASE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BaseId(pub u64);

impl fmt::Display for BaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The originally allocated, contiguous storage an array lives in.
///
/// Only metadata exists until something materializes the shared copy. Engines keep
/// their own copies and exchange data with the shared copy on SYNC and DISCARD.
#[derive(Debug)]
pub struct ArrayBase {
    id: BaseId,
    dtype: DType,
    nelem: usize,
    shared: Mutex<Option<Buffer>>,
}

impl ArrayBase {
    pub fn new(dtype: DType, nelem: usize) -> Arc<ArrayBase> {
        let id = BaseId(NEXT_BASE_ID.fetch_add(1, Ordering::Relaxed));
        Arc::new(ArrayBase { id, dtype, nelem, shared: Mutex::new(None) })
    }

    /// Creates a base with a caller-chosen id (used by the assembler). Fresh ids
    /// handed out afterwards are always larger.
    pub fn with_id(id: BaseId, dtype: DType, nelem: usize) -> Arc<ArrayBase> {
        NEXT_BASE_ID.fetch_max(id.0 + 1, Ordering::Relaxed);
        Arc::new(ArrayBase { id, dtype, nelem, shared: Mutex::new(None) })
    }

    pub fn id(&self) -> BaseId {
        self.id
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn nelem(&self) -> usize {
        self.nelem
    }

    /// Lock on the shared-memory copy. `None` means it was never materialized.
    pub fn shared(&self) -> MutexGuard<'_, Option<Buffer>> {
        self.shared.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn is_materialized(&self) -> bool {
        self.shared().is_some()
    }
}

/// One axis of a slicing expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceArg {
    Range { start: Option<isize>, stop: Option<isize>, step: isize },
    /// Selects a single position and drops the axis.
    Index(isize),
}

impl SliceArg {
    pub const FULL: SliceArg = SliceArg::Range { start: None, stop: None, step: 1 };

    pub fn new(start: isize, stop: isize, step: isize) -> SliceArg {
        SliceArg::Range { start: Some(start), stop: Some(stop), step }
    }

    pub fn step_by(self, step: isize) -> SliceArg {
        match self {
            SliceArg::Range { start, stop, .. } => SliceArg::Range { start, stop, step },
            idx => idx,
        }
    }
}

impl From<Range<isize>> for SliceArg {
    fn from(r: Range<isize>) -> Self {
        SliceArg::Range { start: Some(r.start), stop: Some(r.end), step: 1 }
    }
}

impl From<RangeFrom<isize>> for SliceArg {
    fn from(r: RangeFrom<isize>) -> Self {
        SliceArg::Range { start: Some(r.start), stop: None, step: 1 }
    }
}

impl From<RangeTo<isize>> for SliceArg {
    fn from(r: RangeTo<isize>) -> Self {
        SliceArg::Range { start: None, stop: Some(r.end), step: 1 }
    }
}

impl From<RangeFull> for SliceArg {
    fn from(_: RangeFull) -> Self {
        SliceArg::FULL
    }
}

impl From<isize> for SliceArg {
    fn from(i: isize) -> Self {
        SliceArg::Index(i)
    }
}

/// Builds a `[SliceArg; N]` from range syntax, e.g. `s![1..-1, ..]`.
#[macro_export]
macro_rules! s {
    ($($arg:expr),* $(,)?) => {{
        #[allow(clippy::reversed_empty_ranges)]
        let args = [$($crate::model::SliceArg::from($arg)),*];
        args
    }};
}

/// Resolves a Python-style slice against an axis of length `len`.
/// Returns (first position, count, step).
fn resolve_range(
    axis: usize,
    len: usize,
    start: Option<isize>,
    stop: Option<isize>,
    step: isize,
) -> Result<(isize, usize, isize), ModelError> {
    if step == 0 {
        return Err(ModelError::InvalidSlice { axis, reason: "step must not be zero" });
    }
    let len = len as isize;
    let (lower, upper) = if step > 0 { (0, len) } else { (-1, len - 1) };
    let norm = |v: isize| {
        if v < 0 {
            (v + len).max(lower)
        } else {
            v.min(upper)
        }
    };
    let start = start.map_or(if step > 0 { lower } else { upper }, norm);
    let stop = stop.map_or(if step > 0 { upper } else { lower }, norm);
    let count = if step > 0 {
        if stop > start {
            (stop - start + step - 1) / step
        } else {
            0
        }
    } else if start > stop {
        (start - stop - step - 1) / (-step)
    } else {
        0
    };
    Ok((start, count as usize, step))
}

/// An offset/shape/strides window onto a base. Strides are in elements and may be
/// negative or zero.
#[derive(Clone)]
pub struct ArrayView {
    base: Arc<ArrayBase>,
    offset: usize,
    shape: Dims,
    strides: Strides,
}

impl ArrayView {
    pub fn new(
        base: Arc<ArrayBase>,
        offset: usize,
        shape: &[usize],
        strides: &[isize],
    ) -> Result<ArrayView, ModelError> {
        if shape.is_empty() {
            return Err(ModelError::Malformed("views need at least one dimension"));
        }
        if shape.len() != strides.len() {
            return Err(ModelError::Malformed("shape and strides differ in length"));
        }
        let view = ArrayView { base, offset, shape: shape.into(), strides: strides.into() };
        if let Some((lo, hi)) = view.signed_extent() {
            if lo < 0 || hi >= view.base.nelem as isize {
                return Err(ModelError::ViewOutsideBase {
                    base: view.base.id,
                    nelem: view.base.nelem,
                });
            }
        }
        Ok(view)
    }

    /// Row-major view covering the whole base.
    pub fn contiguous(base: Arc<ArrayBase>, shape: &[usize]) -> Result<ArrayView, ModelError> {
        if shape_len(shape) != base.nelem {
            return Err(ModelError::Malformed("shape does not cover the base"));
        }
        let strides = row_major_strides(shape);
        ArrayView::new(base, 0, shape, &strides)
    }

    /// One-dimensional view of every element of the base.
    pub fn flat(base: Arc<ArrayBase>) -> ArrayView {
        let n = base.nelem;
        ArrayView { base, offset: 0, shape: [n].into_iter().collect(), strides: [1].into_iter().collect() }
    }

    pub fn base(&self) -> &Arc<ArrayBase> {
        &self.base
    }

    pub fn base_id(&self) -> BaseId {
        self.base.id
    }

    pub fn dtype(&self) -> DType {
        self.base.dtype
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[isize] {
        &self.strides
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Number of addressed positions (not necessarily distinct elements).
    pub fn len(&self) -> usize {
        shape_len(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Maps a multi-index to a linear index into the base.
    pub fn element_index(&self, idx: &[usize]) -> Result<usize, ModelError> {
        if idx.len() != self.shape.len() || idx.iter().zip(&self.shape).any(|(i, e)| i >= e) {
            return Err(ModelError::OutOfBounds { index: idx.to_vec(), shape: self.shape.to_vec() });
        }
        Ok(self.linear_unchecked(idx))
    }

    pub(crate) fn linear_unchecked(&self, idx: &[usize]) -> usize {
        let mut pos = self.offset as isize;
        for (i, s) in idx.iter().zip(&self.strides) {
            pos += *i as isize * s;
        }
        pos as usize
    }

    /// Python-style slicing; missing trailing axes are taken whole.
    pub fn slice(&self, args: &[SliceArg]) -> Result<ArrayView, ModelError> {
        if args.len() > self.ndim() {
            return Err(ModelError::InvalidSlice { axis: self.ndim(), reason: "too many indices" });
        }
        let mut offset = self.offset as isize;
        let mut shape = Dims::new();
        let mut strides = Strides::new();
        let mut empty = false;
        for axis in 0..self.ndim() {
            let len = self.shape[axis];
            let stride = self.strides[axis];
            match args.get(axis).copied().unwrap_or(SliceArg::FULL) {
                SliceArg::Range { start, stop, step } => {
                    let (first, count, step) = resolve_range(axis, len, start, stop, step)?;
                    if count > 0 {
                        offset += first * stride;
                    } else {
                        empty = true;
                    }
                    shape.push(count);
                    strides.push(stride * step);
                }
                SliceArg::Index(i) => {
                    let pos = if i < 0 { i + len as isize } else { i };
                    if pos < 0 || pos >= len as isize {
                        return Err(ModelError::InvalidSlice { axis, reason: "index out of range" });
                    }
                    offset += pos * stride;
                }
            }
        }
        if shape.is_empty() {
            shape.push(1);
            strides.push(1);
        }
        // An empty result keeps the parent's offset; it addresses nothing.
        let offset = if empty { self.offset } else { offset as usize };
        Ok(ArrayView { base: self.base.clone(), offset, shape, strides })
    }

    /// Stretches size-1 axes (and prepends missing leading axes) to `target`
    /// using zero strides.
    pub fn broadcast(&self, target: &[usize]) -> Result<ArrayView, ModelError> {
        let err = || ModelError::Broadcast { from: self.shape.to_vec(), to: target.to_vec() };
        if target.len() < self.ndim() || target.is_empty() {
            return Err(err());
        }
        let lead = target.len() - self.ndim();
        let mut strides = Strides::from_elem(0, target.len());
        for d in 0..self.ndim() {
            let (src, dst) = (self.shape[d], target[lead + d]);
            if src == dst {
                strides[lead + d] = self.strides[d];
            } else if src != 1 {
                return Err(err());
            }
        }
        Ok(ArrayView { base: self.base.clone(), offset: self.offset, shape: target.into(), strides })
    }

    /// Inserts a length-1 axis at `axis`.
    pub fn insert_axis(&self, axis: usize) -> Result<ArrayView, ModelError> {
        if axis > self.ndim() {
            return Err(ModelError::InvalidSlice { axis, reason: "axis out of range" });
        }
        let mut v = self.clone();
        v.shape.insert(axis, 1);
        v.strides.insert(axis, 0);
        Ok(v)
    }

    /// Reinterprets a row-major contiguous view with a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<ArrayView, ModelError> {
        if shape_len(shape) != self.len() {
            return Err(ModelError::Malformed("reshape must preserve the element count"));
        }
        if !self.is_row_major() {
            return Err(ModelError::Malformed("reshape needs a row-major contiguous view"));
        }
        let strides = row_major_strides(shape);
        ArrayView::new(self.base.clone(), self.offset, shape, &strides)
    }

    pub fn is_row_major(&self) -> bool {
        let mut expect = 1isize;
        for d in (0..self.ndim()).rev() {
            if self.shape[d] != 1 && self.strides[d] != expect {
                return false;
            }
            expect *= self.shape[d] as isize;
        }
        true
    }

    /// Smallest and largest linear index touched, or `None` for empty views.
    pub fn extent(&self) -> Option<(usize, usize)> {
        self.signed_extent().map(|(lo, hi)| (lo as usize, hi as usize))
    }

    fn signed_extent(&self) -> Option<(isize, isize)> {
        if self.is_empty() {
            return None;
        }
        let (mut lo, mut hi) = (self.offset as isize, self.offset as isize);
        for (&e, &s) in self.shape.iter().zip(&self.strides) {
            let span = (e as isize - 1) * s;
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        Some((lo, hi))
    }

    /// Linear base indices in row-major order of the view (duplicates kept).
    pub fn footprint(&self) -> Footprint<'_> {
        Footprint { view: self, idx: Dims::from_elem(0, self.ndim()), remaining: self.len() }
    }

    /// True when no two positions map to the same element. Exact below a size
    /// threshold, otherwise a sufficient stride-ordering test (false negatives only).
    pub fn is_injective(&self) -> bool {
        if self.len() <= 1 {
            return true;
        }
        let mut dims: Vec<(usize, usize)> = self
            .shape
            .iter()
            .zip(&self.strides)
            .filter(|(&e, _)| e > 1)
            .map(|(&e, &s)| (s.unsigned_abs(), e))
            .collect();
        dims.sort_unstable();
        let mut reach = 0usize;
        let mut nested = true;
        for &(stride, extent) in &dims {
            if stride <= reach || stride == 0 {
                nested = false;
                break;
            }
            reach += stride * (extent - 1);
        }
        if nested {
            return true;
        }
        if self.len() <= super::EXACT_OVERLAP_LIMIT {
            let mut seen: Vec<usize> = self.footprint().collect();
            seen.sort_unstable();
            return seen.windows(2).all(|w| w[0] != w[1]);
        }
        false
    }
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Strides {
    let mut strides = Strides::from_elem(0, shape.len());
    let mut acc = 1isize;
    for d in (0..shape.len()).rev() {
        strides[d] = acc;
        acc *= shape[d].max(1) as isize;
    }
    strides
}

pub struct Footprint<'a> {
    view: &'a ArrayView,
    idx: Dims,
    remaining: usize,
}

impl Iterator for Footprint<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.view.linear_unchecked(&self.idx);
        for d in (0..self.idx.len()).rev() {
            self.idx[d] += 1;
            if self.idx[d] < self.view.shape[d] {
                break;
            }
            self.idx[d] = 0;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl PartialEq for ArrayView {
    fn eq(&self, other: &Self) -> bool {
        self.base.id == other.base.id
            && self.base.dtype == other.base.dtype
            && self.base.nelem == other.base.nelem
            && self.offset == other.offset
            && self.shape == other.shape
            && self.strides == other.strides
    }
}

impl fmt::Debug for ArrayView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for ArrayView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{base={},off={},shape=(", self.base.id, self.offset)?;
        write_list(f, &self.shape)?;
        f.write_str("),strides=(")?;
        write_list(f, &self.strides)?;
        f.write_str(")}")
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{}", x)?;
    }
    Ok(())
}
