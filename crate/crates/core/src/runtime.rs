//! The worker pool and the run loop: spawning, taskwait, the worker main
//! loop and task completion.

use std::cell::RefCell;
use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use log::warn;
use parking_lot::Mutex;
use thiserror::Error;

use crate::config::{ConfigError, RuntimeConfig};
use crate::deps::DependenceLedger;
use crate::pin;
use crate::scheduler::{ActiveRegion, Scheduler, Work};
use crate::task::{Payload, Task, TaskId, TaskKind, TaskNode, TaskState};
use crate::trace::{EventKind, ExecutionTrace, TraceBuffer};
use crate::worksharing::{BatchOutcome, Team, WorkerId};

/// Busy-wait polls before an idle worker starts yielding its CPU.
const SPIN_LIMIT: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpawnError {
    #[error("tasks cannot be created inside worksharing task {0}")]
    SpawnInsideWorksharing(TaskId),
    #[error("invalid loop bounds lower={lower} upper={upper} step={step}")]
    InvalidBounds { lower: i64, upper: i64, step: i64 },
    #[error("chunksize must be at least 1")]
    InvalidChunksize,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("task {task} panicked: {message}")]
    TaskPanicked { task: TaskId, message: String },
    #[error("runtime invariant violated: {0}")]
    Internal(String),
}

/// Unwinds out of bodies waiting in `taskwait` once the run is aborted.
struct Aborted;

struct DepState {
    ledger: DependenceLedger,
    next_id: u64,
    blocked: HashMap<TaskId, Arc<TaskNode>>,
}

struct Shared {
    scheduler: Scheduler,
    deps: Mutex<DepState>,
    /// Spawned tasks that have not finished.
    live: AtomicUsize,
    shutdown: AtomicBool,
    aborted: AtomicBool,
    failure: Mutex<Option<RunError>>,
    epoch: Instant,
    trace: bool,
}

struct WorkerLocal {
    id: WorkerId,
    trace: RefCell<TraceBuffer>,
    idle: std::cell::Cell<bool>,
}

impl WorkerLocal {
    fn record(&self, kind: EventKind, task: TaskId, lo: Option<u64>, hi: Option<u64>) {
        self.trace.borrow_mut().record(kind, task, lo, hi);
    }
}

/// Handle given to every task body: identifies the executing worker and
/// task, and creates child tasks.
pub struct TaskContext<'a> {
    shared: &'a Shared,
    local: &'a WorkerLocal,
    node: Arc<TaskNode>,
}

impl TaskContext<'_> {
    pub fn worker(&self) -> WorkerId {
        self.local.id
    }

    pub fn task_id(&self) -> TaskId {
        self.node.id
    }

    pub fn kind(&self) -> TaskKind {
        self.node.kind
    }

    pub fn team(&self) -> &Team {
        self.shared.scheduler.team_of(self.local.id)
    }

    /// Creates a child task. It becomes ready once every earlier sibling it
    /// conflicts with has finished.
    pub fn spawn(&self, task: Task) -> Result<TaskId, SpawnError> {
        if self.node.kind == TaskKind::Worksharing {
            return Err(SpawnError::SpawnInsideWorksharing(self.node.id));
        }
        if let Payload::Worksharing(spec) = &task.payload {
            if spec.bounds.start > spec.bounds.end {
                return Err(SpawnError::InvalidBounds {
                    lower: spec.bounds.start as i64,
                    upper: spec.bounds.end as i64,
                    step: 1,
                });
            }
            if spec.chunksize == Some(0) {
                return Err(SpawnError::InvalidChunksize);
            }
        }
        let accesses = task.accesses.clone();
        let (node, registration) = {
            let mut deps = self.shared.deps.lock();
            let id = TaskId(deps.next_id);
            deps.next_id += 1;
            let node = Arc::new(TaskNode::new(id, task, self.node.clone()));
            let registration = deps.ledger.register(id, self.node.id, &accesses);
            self.node.pending_children.fetch_add(1, Ordering::AcqRel);
            self.shared.live.fetch_add(1, Ordering::AcqRel);
            if registration.is_ready() {
                node.advance(TaskState::Ready);
            } else {
                node.advance(TaskState::Blocked);
                deps.blocked.insert(id, node.clone());
            }
            (node, registration)
        };
        let id = node.id;
        self.local
            .record(EventKind::Spawn, id, Some(self.node.id.0), None);
        for pred in &registration.predecessors {
            self.local.record(EventKind::Edge, id, Some(pred.0), None);
        }
        if registration.is_ready() {
            self.local.record(EventKind::Enqueue, id, None, None);
            self.shared.scheduler.enqueue(node);
        }
        Ok(id)
    }

    /// Returns once every task spawned by this context has finished. The
    /// waiting worker executes other ready work meanwhile.
    pub fn taskwait(&self) {
        let mut backoff = Backoff::default();
        while self.node.pending_children.load(Ordering::Acquire) > 0 {
            if self.shared.aborted.load(Ordering::Acquire) {
                panic::resume_unwind(Box::new(Aborted));
            }
            if poll_once(self.shared, self.local) {
                backoff.reset();
            } else {
                backoff.snooze();
            }
        }
    }
}

#[derive(Default)]
struct Backoff {
    step: u32,
}

impl Backoff {
    fn reset(&mut self) {
        self.step = 0;
    }

    fn snooze(&mut self) {
        if self.step < SPIN_LIMIT {
            for _ in 0..(1 << self.step.min(6)) {
                std::hint::spin_loop();
            }
            self.step += 1;
        } else {
            std::thread::yield_now();
        }
    }
}

/// Executes `program` as the implicit main task on a fresh pool of workers
/// and returns the merged trace (empty unless tracing is on) once every
/// spawned task has finished.
pub fn run<F>(config: RuntimeConfig, program: F) -> Result<ExecutionTrace, RunError>
where
    F: FnOnce(&TaskContext<'_>) + Send,
{
    let teams = config.teams()?;
    let cpus = pin::allowed_cpus();
    if config.pin && config.workers > cpus.len() {
        warn!(
            "{} workers on {} hardware threads: pinning wraps around",
            config.workers,
            cpus.len()
        );
    }
    let shared = Shared {
        scheduler: Scheduler::new(teams),
        deps: Mutex::new(DepState {
            ledger: DependenceLedger::new(config.dependence_mode).with_history(config.trace),
            next_id: 1,
            blocked: HashMap::new(),
        }),
        live: AtomicUsize::new(0),
        shutdown: AtomicBool::new(false),
        aborted: AtomicBool::new(false),
        failure: Mutex::new(None),
        epoch: Instant::now(),
        trace: config.trace,
    };
    let root = Arc::new(TaskNode::root());

    let buffers = std::thread::scope(|scope| {
        let shared = &shared;
        let mut program = Some(program);
        let handles: Vec<_> = (0..config.workers)
            .map(|index| {
                let worker = WorkerId(index);
                let cpu = config.pin.then(|| pin::cpu_for(index, &cpus)).flatten();
                let main = if index == 0 {
                    program.take().map(|p| (p, root.clone()))
                } else {
                    None
                };
                std::thread::Builder::new()
                    .name(format!("wstasks-{index}"))
                    .spawn_scoped(scope, move || worker_main(shared, worker, cpu, main))
                    .expect("failed to start worker thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked outside a task"))
            .collect::<Vec<_>>()
    });

    if let Some(err) = shared.failure.lock().take() {
        return Err(err);
    }
    if shared.live.load(Ordering::Acquire) != 0 || !shared.scheduler.is_drained() {
        return Err(RunError::Internal("run ended with unfinished work".into()));
    }
    Ok(ExecutionTrace::merge(buffers))
}

fn worker_main<F>(
    shared: &Shared,
    worker: WorkerId,
    cpu: Option<usize>,
    main: Option<(F, Arc<TaskNode>)>,
) -> Vec<crate::trace::TraceEvent>
where
    F: FnOnce(&TaskContext<'_>),
{
    let local = WorkerLocal {
        id: worker,
        trace: RefCell::new(TraceBuffer::new(shared.trace, shared.epoch, worker)),
        idle: std::cell::Cell::new(false),
    };
    if let Some(cpu) = cpu.and_then(pin::pin_current_thread) {
        local.record(EventKind::Pin, TaskId::MAIN, Some(cpu as u64), None);
    }

    if let Some((program, root)) = main {
        local.record(EventKind::RuntimeStart, TaskId::MAIN, None, None);
        let ctx = TaskContext {
            shared,
            local: &local,
            node: root,
        };
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
            program(&ctx);
            ctx.taskwait();
            // grandchildren nobody waited for
            let mut backoff = Backoff::default();
            while shared.live.load(Ordering::Acquire) > 0 {
                if shared.aborted.load(Ordering::Acquire) {
                    return;
                }
                if poll_once(shared, &local) {
                    backoff.reset();
                } else {
                    backoff.snooze();
                }
            }
        }));
        if let Err(payload) = outcome {
            abort(shared, TaskId::MAIN, payload);
        }
        shared.shutdown.store(true, Ordering::Release);
        local.record(EventKind::RuntimeStop, TaskId::MAIN, None, None);
    } else {
        let mut backoff = Backoff::default();
        while !shared.shutdown.load(Ordering::Acquire) && !shared.aborted.load(Ordering::Acquire) {
            if poll_once(shared, &local) {
                backoff.reset();
            } else {
                backoff.snooze();
            }
        }
    }
    local.trace.into_inner().into_events()
}

fn abort(shared: &Shared, task: TaskId, payload: Box<dyn std::any::Any + Send>) {
    shared.aborted.store(true, Ordering::Release);
    if payload.is::<Aborted>() {
        return;
    }
    let message = payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into());
    let mut failure = shared.failure.lock();
    if failure.is_none() {
        *failure = Some(RunError::TaskPanicked { task, message });
    }
}

/// Takes one piece of work and runs it, following immediate successors.
/// Returns false if there was nothing to do.
fn poll_once(shared: &Shared, local: &WorkerLocal) -> bool {
    let mut work = shared.scheduler.next_work(local.id);
    if matches!(work, Work::Idle) {
        if !local.idle.replace(true) {
            local.record(EventKind::Idle, TaskId::MAIN, None, None);
        }
        return false;
    }
    local.idle.set(false);
    loop {
        let next = match work {
            Work::Regular(node) => run_regular(shared, local, node),
            Work::Join(active) => run_region(shared, local, &active),
            Work::Idle => None,
        };
        match next {
            Some(w) if !shared.aborted.load(Ordering::Acquire) => work = w,
            _ => return true,
        }
    }
}

fn run_regular(shared: &Shared, local: &WorkerLocal, node: Arc<TaskNode>) -> Option<Work> {
    node.advance(TaskState::Running);
    let body = node
        .body
        .lock()
        .take()
        .expect("regular task body already taken");
    local.record(EventKind::TaskStart, node.id, None, None);
    let ctx = TaskContext {
        shared,
        local,
        node: node.clone(),
    };
    if let Err(payload) = panic::catch_unwind(AssertUnwindSafe(|| body(&ctx))) {
        abort(shared, node.id, payload);
        return None;
    }
    local.record(EventKind::TaskEnd, node.id, None, None);
    finish(shared, local, &node)
}

fn run_region(shared: &Shared, local: &WorkerLocal, active: &Arc<ActiveRegion>) -> Option<Work> {
    let region = &active.region;
    let ctx = TaskContext {
        shared,
        local,
        node: active.node.clone(),
    };
    loop {
        let mut batch = match region.request_chunks(local.id) {
            Ok(Some(b)) => b,
            Ok(None) => {
                return if region.finish_if_empty() {
                    finish(shared, local, &active.node)
                } else {
                    None
                };
            }
            Err(e) => {
                fail(shared, RunError::Internal(e.to_string()));
                return None;
            }
        };
        let (lo, hi) = (batch.range.start as u64, batch.range.end as u64);
        local.record(EventKind::ChunkAssign, active.task(), Some(lo), Some(hi));
        if let Err(payload) =
            panic::catch_unwind(AssertUnwindSafe(|| region.execute(&mut batch, &ctx)))
        {
            abort(shared, active.task(), payload);
            return None;
        }
        local.record(EventKind::ChunkDone, active.task(), Some(lo), Some(hi));
        match region.complete_batch(&batch) {
            Ok(BatchOutcome::MoreWork) => continue,
            Ok(BatchOutcome::RegionDone) => return finish(shared, local, &active.node),
            Ok(BatchOutcome::RegionDrainedElsewhere) => return None,
            Err(e) => {
                fail(shared, RunError::Internal(e.to_string()));
                return None;
            }
        }
    }
}

fn fail(shared: &Shared, err: RunError) {
    shared.aborted.store(true, Ordering::Release);
    shared.failure.lock().get_or_insert(err);
}

/// Marks `node` finished, releases its dependences from this worker and
/// returns the immediate successor to run next, if any.
fn finish(shared: &Shared, local: &WorkerLocal, node: &Arc<TaskNode>) -> Option<Work> {
    node.advance(TaskState::Finished);
    local.record(EventKind::Release, node.id, None, None);
    let ready = {
        let mut deps = shared.deps.lock();
        let ids = match deps.ledger.release(node.id) {
            Ok(ids) => ids,
            Err(e) => {
                drop(deps);
                fail(shared, RunError::Internal(e.to_string()));
                return None;
            }
        };
        ids.into_iter()
            .map(|id| {
                let n = deps
                    .blocked
                    .remove(&id)
                    .expect("ready task was not blocked");
                n.advance(TaskState::Ready);
                n
            })
            .collect::<Vec<_>>()
    };
    if let Some(parent) = &node.parent {
        parent.pending_children.fetch_sub(1, Ordering::AcqRel);
    }
    let (bypass, enqueued) = shared.scheduler.on_finish(local.id, ready);
    if let Some(Work::Regular(n)) = &bypass {
        local.record(EventKind::Bypass, n.id, None, None);
    } else if let Some(Work::Join(r)) = &bypass {
        local.record(EventKind::Bypass, r.task(), None, None);
    }
    for id in enqueued {
        local.record(EventKind::Enqueue, id, None, None);
    }
    shared.live.fetch_sub(1, Ordering::AcqRel);
    bypass
}
