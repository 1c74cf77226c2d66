//! Execution traces: per-worker event buffers merged at shutdown, and the
//! `timestamp_ns,worker,event,task,lo,hi` CSV format.
//!
//! Column meaning of `lo`/`hi` by event:
//!
//! | event                      | lo              | hi        |
//! |----------------------------|-----------------|-----------|
//! | `ChunkAssign`, `ChunkDone` | first iteration | one past last |
//! | `Spawn`                    | parent task     |           |
//! | `Edge`                     | predecessor     |           |
//! | `Pin`                      | cpu             |           |

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::TaskId;
use crate::worksharing::WorkerId;

pub const CSV_HEADER: &str = "timestamp_ns,worker,event,task,lo,hi";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    RuntimeStart,
    RuntimeStop,
    Pin,
    Spawn,
    Edge,
    Enqueue,
    Bypass,
    TaskStart,
    TaskEnd,
    ChunkAssign,
    ChunkDone,
    Release,
    Idle,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub timestamp_ns: u64,
    pub worker: WorkerId,
    #[serde(rename = "event")]
    pub kind: EventKind,
    pub task: TaskId,
    pub lo: Option<u64>,
    pub hi: Option<u64>,
}

impl TraceEvent {
    pub fn range(&self) -> Option<Range<usize>> {
        match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => Some(lo as usize..hi as usize),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace: {0}")]
    Malformed(String),
}

/// Per-worker event log. Owned by one worker thread; merged at shutdown.
#[derive(Debug)]
pub(crate) struct TraceBuffer {
    enabled: bool,
    epoch: Instant,
    worker: WorkerId,
    events: Vec<TraceEvent>,
}

impl TraceBuffer {
    pub fn new(enabled: bool, epoch: Instant, worker: WorkerId) -> Self {
        TraceBuffer {
            enabled,
            epoch,
            worker,
            events: Vec::new(),
        }
    }

    pub fn record(&mut self, kind: EventKind, task: TaskId, lo: Option<u64>, hi: Option<u64>) {
        if self.enabled {
            self.events.push(TraceEvent {
                timestamp_ns: self.epoch.elapsed().as_nanos() as u64,
                worker: self.worker,
                kind,
                task,
                lo,
                hi,
            });
        }
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

/// Merged, time-ordered event log of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
}

impl ExecutionTrace {
    pub(crate) fn merge(buffers: Vec<Vec<TraceEvent>>) -> Self {
        let mut events: Vec<TraceEvent> = buffers.into_iter().flatten().collect();
        // stable: per-worker order survives timestamp ties
        events.sort_by_key(|e| e.timestamp_ns);
        ExecutionTrace { events }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    /// Workers that appear in the trace, ascending.
    pub fn workers(&self) -> Vec<WorkerId> {
        let mut w: Vec<_> = self
            .events
            .iter()
            .map(|e| e.worker)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        w.sort();
        w
    }

    /// CPU each worker was pinned to, if pinning happened.
    pub fn affinities(&self) -> HashMap<WorkerId, usize> {
        self.of_kind(EventKind::Pin)
            .filter_map(|e| e.lo.map(|cpu| (e.worker, cpu as usize)))
            .collect()
    }

    /// First timestamp of `kind` for `task`.
    pub fn first(&self, kind: EventKind, task: TaskId) -> Option<u64> {
        self.events
            .iter()
            .find(|e| e.kind == kind && e.task == task)
            .map(|e| e.timestamp_ns)
    }

    /// When a task began executing: its `TaskStart` or, for worksharing
    /// tasks, its first `ChunkAssign`.
    pub fn start_of(&self, task: TaskId) -> Option<u64> {
        self.events
            .iter()
            .find(|e| {
                e.task == task && matches!(e.kind, EventKind::TaskStart | EventKind::ChunkAssign)
            })
            .map(|e| e.timestamp_ns)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.events {
            w.serialize(e)?;
        }
        if self.events.is_empty() {
            w.write_record(CSV_HEADER.split(','))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv output is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, TraceError> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            return Err(TraceError::Malformed(format!(
                "expected header `{CSV_HEADER}`, found `{}`",
                header.join(",")
            )));
        }
        let events = r.deserialize().collect::<Result<Vec<TraceEvent>, _>>()?;
        Ok(ExecutionTrace { events })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Checks the well-formedness rules: per-worker timestamps never go
    /// backwards, every `TaskStart`/`ChunkAssign` is closed by a matching
    /// `TaskEnd`/`ChunkDone` on the same worker (properly nested), ranges are
    /// non-empty, and no task is released twice.
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: String| Err(TraceError::Malformed(msg));
        let mut last: HashMap<WorkerId, u64> = HashMap::new();
        let mut open: HashMap<WorkerId, Vec<(EventKind, TaskId, Option<u64>)>> = HashMap::new();
        let mut released = HashSet::new();
        for e in &self.events {
            let prev = last.entry(e.worker).or_insert(0);
            if e.timestamp_ns < *prev {
                return bad(format!("timestamps of worker {} go backwards", e.worker));
            }
            *prev = e.timestamp_ns;
            let stack = open.entry(e.worker).or_default();
            match e.kind {
                EventKind::TaskStart => stack.push((EventKind::TaskStart, e.task, None)),
                EventKind::ChunkAssign => {
                    match e.range() {
                        Some(r) if !r.is_empty() => {}
                        _ => return bad(format!("chunk of {} without a valid range", e.task)),
                    }
                    stack.push((EventKind::ChunkAssign, e.task, e.lo));
                }
                EventKind::TaskEnd | EventKind::ChunkDone => {
                    let opener = if e.kind == EventKind::TaskEnd {
                        EventKind::TaskStart
                    } else {
                        EventKind::ChunkAssign
                    };
                    let lo = if e.kind == EventKind::ChunkDone {
                        e.lo
                    } else {
                        None
                    };
                    match stack.pop() {
                        Some((k, t, l)) if k == opener && t == e.task && l == lo => {}
                        _ => {
                            return bad(format!(
                                "{} of {} on worker {} has no matching {}",
                                e.kind, e.task, e.worker, opener
                            ))
                        }
                    }
                }
                EventKind::Release if !released.insert(e.task) => {
                    return bad(format!("{} released twice", e.task));
                }
                _ => {}
            }
        }
        for (worker, stack) in open {
            if let Some((k, t, _)) = stack.last() {
                return bad(format!("{k} of {t} on worker {worker} never closed"));
            }
        }
        Ok(())
    }
}

impl FromStr for ExecutionTrace {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExecutionTrace::read_csv(s.as_bytes())
    }
}
