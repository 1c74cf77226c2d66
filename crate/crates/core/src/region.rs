//! Access regions and the two conflict rules (discrete and region).

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Opaque handle naming one array or buffer that tasks access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(pub u64);

static NEXT_OBJECT: AtomicU64 = AtomicU64::new(1);

impl ObjectId {
    /// Allocates a process-unique object handle.
    pub fn fresh() -> Self {
        ObjectId(NEXT_OBJECT.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessMode {
    In,
    Out,
    InOut,
}

impl AccessMode {
    pub fn writes(self) -> bool {
        matches!(self, AccessMode::Out | AccessMode::InOut)
    }
}

/// How the dependence system decides that two accesses to the same object conflict.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DependenceMode {
    /// Only accesses with an identical start offset conflict.
    Discrete,
    /// Any partial overlap of the accessed intervals conflicts.
    #[default]
    Region,
}

impl fmt::Display for DependenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DependenceMode::Discrete => f.write_str("discrete"),
            DependenceMode::Region => f.write_str("region"),
        }
    }
}

impl FromStr for DependenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "discrete" => Ok(DependenceMode::Discrete),
            "region" => Ok(DependenceMode::Region),
            other => Err(format!(
                "unknown dependence mode `{other}` (expected discrete|region)"
            )),
        }
    }
}

/// A half-open element interval `[start, start + length)` of one object,
/// together with the way the task accesses it.
///
/// `a[2;6]` in the usual notation is `AccessRegion::new(a, 2, 6, mode)`, i.e.
/// elements 2 (included) to 8 (excluded) when read as start/length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AccessRegion {
    pub object: ObjectId,
    pub start: usize,
    pub length: usize,
    pub mode: AccessMode,
}

impl AccessRegion {
    /// # Panics
    ///
    /// Panics if `length` is zero.
    pub fn new(object: ObjectId, start: usize, length: usize, mode: AccessMode) -> Self {
        assert!(length >= 1, "access regions cover at least one element");
        AccessRegion {
            object,
            start,
            length,
            mode,
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end()
    }
}

/// Returns whether two accesses order their tasks under `mode`.
///
/// Accesses to different objects never conflict, and neither do two reads.
pub fn conflicts(a: &AccessRegion, b: &AccessRegion, mode: DependenceMode) -> bool {
    if a.object != b.object || !(a.mode.writes() || b.mode.writes()) {
        return false;
    }
    match mode {
        DependenceMode::Discrete => a.start == b.start,
        DependenceMode::Region => a.start < b.end() && b.start < a.end(),
    }
}
