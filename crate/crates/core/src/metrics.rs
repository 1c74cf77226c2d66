//! Post-hoc analysis of execution traces. Everything here is a pure function
//! of the merged event list, so it works on traces loaded from CSV as well.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;

use thiserror::Error;

use crate::task::TaskId;
use crate::trace::{EventKind, ExecutionTrace, TraceError};
use crate::worksharing::WorkerId;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("malformed trace: {0}")]
    MalformedTrace(#[from] TraceError),
}

/// Fraction of the run's wall time each worker spent inside task bodies or
/// chunks. Nested work (run while helping in a taskwait) counts once.
pub fn utilization(trace: &ExecutionTrace) -> Result<BTreeMap<WorkerId, f64>, MetricsError> {
    trace.validate()?;
    let Some(first) = trace.events.first() else {
        return Ok(BTreeMap::new());
    };
    let start = trace
        .first(EventKind::RuntimeStart, TaskId::MAIN)
        .unwrap_or(first.timestamp_ns);
    let stop = trace
        .of_kind(EventKind::RuntimeStop)
        .map(|e| e.timestamp_ns)
        .last()
        .unwrap_or_else(|| trace.events.last().map_or(start, |e| e.timestamp_ns));
    let wall = stop.saturating_sub(start);

    let mut depth: HashMap<WorkerId, (u32, u64)> = HashMap::new();
    let mut busy: BTreeMap<WorkerId, u64> = BTreeMap::new();
    for e in &trace.events {
        busy.entry(e.worker).or_insert(0);
        let (d, since) = depth.entry(e.worker).or_insert((0, 0));
        match e.kind {
            EventKind::TaskStart | EventKind::ChunkAssign => {
                if *d == 0 {
                    *since = e.timestamp_ns;
                }
                *d += 1;
            }
            EventKind::TaskEnd | EventKind::ChunkDone => {
                *d -= 1;
                if *d == 0 {
                    *busy.get_mut(&e.worker).unwrap() += e.timestamp_ns - *since;
                }
            }
            _ => {}
        }
    }
    Ok(busy
        .into_iter()
        .map(|(w, b)| {
            let frac = if wall == 0 {
                0.0
            } else {
                (b as f64 / wall as f64).min(1.0)
            };
            (w, frac)
        })
        .collect())
}

/// A worker that started chunks of worksharing task `next` before task
/// `previous`, which it had worked on earlier, was released.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PipelineOverlap {
    pub worker: WorkerId,
    pub previous: TaskId,
    pub next: TaskId,
}

/// Every instance of barrier-free pipelining in the trace.
pub fn detect_pipelining(trace: &ExecutionTrace) -> Vec<PipelineOverlap> {
    let released: HashMap<TaskId, u64> = trace
        .of_kind(EventKind::Release)
        .map(|e| (e.task, e.timestamp_ns))
        .collect();
    let mut worked: HashMap<WorkerId, BTreeSet<TaskId>> = HashMap::new();
    let mut found = BTreeSet::new();
    for e in trace.of_kind(EventKind::ChunkAssign) {
        let seen = worked.entry(e.worker).or_default();
        seen.retain(|t| released.get(t).is_some_and(|&r| r > e.timestamp_ns));
        for &prev in seen.iter() {
            if prev != e.task {
                found.insert(PipelineOverlap {
                    worker: e.worker,
                    previous: prev,
                    next: e.task,
                });
            }
        }
        seen.insert(e.task);
    }
    found.into_iter().collect()
}

/// Dependence edges `(predecessor, successor)` recorded in the trace,
/// sorted.
pub fn export_dag(trace: &ExecutionTrace) -> Vec<(TaskId, TaskId)> {
    let mut edges: Vec<_> = trace
        .of_kind(EventKind::Edge)
        .filter_map(|e| e.lo.map(|p| (TaskId(p), e.task)))
        .collect();
    edges.sort();
    edges.dedup();
    edges
}

pub fn write_dag_csv<W: io::Write>(edges: &[(TaskId, TaskId)], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["predecessor", "successor"])?;
    for (p, s) in edges {
        w.write_record([p.0.to_string(), s.0.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Start (first `TaskStart` or `ChunkAssign`) and release time of every
/// task that has both.
pub fn task_spans(trace: &ExecutionTrace) -> HashMap<TaskId, (u64, u64)> {
    let mut start = HashMap::new();
    let mut spans = HashMap::new();
    for e in &trace.events {
        match e.kind {
            EventKind::TaskStart | EventKind::ChunkAssign => {
                start.entry(e.task).or_insert(e.timestamp_ns);
            }
            EventKind::Release => {
                if let Some(&s) = start.get(&e.task) {
                    spans.insert(e.task, (s, e.timestamp_ns));
                }
            }
            _ => {}
        }
    }
    spans
}

/// Edges whose successor started before its predecessor was released.
pub fn dependence_violations(trace: &ExecutionTrace) -> Vec<(TaskId, TaskId)> {
    let spans = task_spans(trace);
    export_dag(trace)
        .into_iter()
        .filter(|(p, s)| match (spans.get(p), spans.get(s)) {
            (Some(&(_, released)), Some(&(started, _))) => started < released,
            _ => false,
        })
        .collect()
}
