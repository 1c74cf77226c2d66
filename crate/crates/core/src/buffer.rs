use std::cell::UnsafeCell;
use std::fmt;
use std::ops::Range;

use crate::region::{AccessMode, AccessRegion, ObjectId};

/// A fixed-size array shared by tasks, with an [`ObjectId`] to name it in
/// dependence clauses.
///
/// The buffer does no synchronization of its own. Mutable access is sound
/// only when the declared task dependences order every conflicting pair of
/// accesses, which is what the unsafe accessors require of the caller.
pub struct SharedBuffer<T> {
    id: ObjectId,
    cells: Box<[UnsafeCell<T>]>,
}

// SAFETY: access is externally ordered by task dependences (see accessors).
unsafe impl<T: Send> Sync for SharedBuffer<T> {}

impl<T> SharedBuffer<T> {
    pub fn new(values: Vec<T>) -> Self {
        SharedBuffer {
            id: ObjectId::fresh(),
            cells: values.into_iter().map(UnsafeCell::new).collect(),
        }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> T) -> Self {
        SharedBuffer::new((0..len).map(f).collect())
    }

    pub fn id(&self) -> ObjectId {
        self.id
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn region(&self, range: Range<usize>, mode: AccessMode) -> AccessRegion {
        AccessRegion::new(self.id, range.start, range.len(), mode)
    }

    /// # Safety
    ///
    /// No other task may write any element of `range` while the returned
    /// slice is alive.
    pub unsafe fn slice(&self, range: Range<usize>) -> &[T] {
        let cells = &self.cells[range];
        std::slice::from_raw_parts(cells.as_ptr() as *const T, cells.len())
    }

    /// # Safety
    ///
    /// No other task may read or write any element of `range` while the
    /// returned slice is alive.
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn slice_mut(&self, range: Range<usize>) -> &mut [T] {
        let cells = &self.cells[range];
        std::slice::from_raw_parts_mut(UnsafeCell::raw_get(cells.as_ptr()), cells.len())
    }

    pub fn get_mut(&mut self) -> &mut [T] {
        // SAFETY: exclusive borrow of the whole buffer.
        unsafe { self.slice_mut(0..self.len()) }
    }

    pub fn into_vec(self) -> Vec<T> {
        self.cells
            .into_vec()
            .into_iter()
            .map(UnsafeCell::into_inner)
            .collect()
    }
}

impl<T: Clone> SharedBuffer<T> {
    /// # Safety
    ///
    /// No task may be writing the buffer.
    pub unsafe fn snapshot(&self) -> Vec<T> {
        self.slice(0..self.len()).to_vec()
    }
}

impl<T> fmt::Debug for SharedBuffer<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SharedBuffer")
            .field("id", &self.id)
            .field("len", &self.len())
            .finish()
    }
}
