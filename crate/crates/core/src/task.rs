//! Task descriptors: identity, kind, lifecycle and the user-facing builder.

use std::any::Any;
use std::fmt;
use std::ops::Range;
use std::sync::atomic::{AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::region::{AccessMode, AccessRegion, ObjectId};
use crate::runtime::{SpawnError, TaskContext};
use crate::worksharing::ChunkPolicy;

/// Task identifiers grow with spawn order; 0 is the implicit main task.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TaskId(pub u64);

impl TaskId {
    pub const MAIN: TaskId = TaskId(0);
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Regular,
    Worksharing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum TaskState {
    Created = 0,
    Blocked = 1,
    Ready = 2,
    Running = 3,
    Finished = 4,
}

impl TaskState {
    fn from_u8(v: u8) -> TaskState {
        match v {
            0 => TaskState::Created,
            1 => TaskState::Blocked,
            2 => TaskState::Ready,
            3 => TaskState::Running,
            _ => TaskState::Finished,
        }
    }

    fn may_follow(self, prev: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (prev, self),
            (Created, Blocked)
                | (Created, Ready)
                | (Blocked, Ready)
                | (Ready, Running)
                | (Running, Finished)
        )
    }
}

/// A captured value bundle plus the procedure that duplicates it for each
/// collaborator of a worksharing task.
pub struct DataEnv<E> {
    value: E,
    duplicate: Box<dyn Fn(&E) -> E + Send + Sync>,
}

impl<E> DataEnv<E> {
    pub fn new(value: E, duplicate: impl Fn(&E) -> E + Send + Sync + 'static) -> Self {
        DataEnv {
            value,
            duplicate: Box::new(duplicate),
        }
    }

    pub fn duplicate(&self) -> E {
        (self.duplicate)(&self.value)
    }
}

impl<E: Clone + 'static> DataEnv<E> {
    pub fn cloned(value: E) -> Self {
        DataEnv::new(value, E::clone)
    }
}

/// A `lower..upper` loop with an arbitrary non-zero step, normalized to the
/// unit-stride iteration space `0..count` that worksharing tasks split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterSpace {
    pub lower: i64,
    pub upper: i64,
    pub step: i64,
}

impl IterSpace {
    pub fn new(lower: i64, upper: i64, step: i64) -> Self {
        IterSpace { lower, upper, step }
    }

    /// Number of iterations, or `InvalidBounds` when the step is zero or
    /// points away from `upper`.
    pub fn count(&self) -> Result<usize, SpawnError> {
        let invalid = || SpawnError::InvalidBounds {
            lower: self.lower,
            upper: self.upper,
            step: self.step,
        };
        if self.step == 0 {
            return Err(invalid());
        }
        let span = i128::from(self.upper) - i128::from(self.lower);
        if span != 0 && (span > 0) != (self.step > 0) {
            return Err(invalid());
        }
        let step = i128::from(self.step).abs();
        let n = (span.abs() + step - 1) / step;
        usize::try_from(n).map_err(|_| invalid())
    }

    pub fn normalized(&self) -> Result<Range<usize>, SpawnError> {
        self.count().map(|n| 0..n)
    }

    /// Original induction value of normalized iteration `k`.
    pub fn value(&self, k: usize) -> i64 {
        self.lower + self.step * k as i64
    }
}

pub(crate) type RegularBody = Box<dyn FnOnce(&TaskContext<'_>) + Send>;

/// Type-erased worksharing loop: duplicates its data environment once per
/// work request and runs a batch of normalized iterations against the copy.
pub trait LoopBody: Send + Sync {
    fn duplicate_env(&self) -> Box<dyn Any + Send>;
    fn run(&self, range: Range<usize>, env: &mut (dyn Any + Send), ctx: &TaskContext<'_>);
}

struct EnvLoop<E, F> {
    env: DataEnv<E>,
    body: F,
}

impl<E, F> LoopBody for EnvLoop<E, F>
where
    E: Send + Sync + 'static,
    F: Fn(Range<usize>, &mut E, &TaskContext<'_>) + Send + Sync,
{
    fn duplicate_env(&self) -> Box<dyn Any + Send> {
        Box::new(self.env.duplicate())
    }

    fn run(&self, range: Range<usize>, env: &mut (dyn Any + Send), ctx: &TaskContext<'_>) {
        let env = env
            .downcast_mut::<E>()
            .expect("data environment copy has the wrong type");
        (self.body)(range, env, ctx)
    }
}

pub(crate) struct LoopSpec {
    pub bounds: Range<usize>,
    pub chunksize: Option<usize>,
    pub policy: ChunkPolicy,
    pub body: Arc<dyn LoopBody>,
}

pub(crate) enum Payload {
    Regular(RegularBody),
    Worksharing(LoopSpec),
}

/// Builder for a task about to be spawned.
///
/// ```no_run
/// use wstasks::{Task, ObjectId};
/// let a = ObjectId::fresh();
/// let t = Task::new(|_ctx| { /* work */ }).inout(a, 0, 8).priority(1);
/// ```
pub struct Task {
    pub(crate) payload: Payload,
    pub(crate) accesses: Vec<AccessRegion>,
    pub(crate) priority: i64,
}

impl Task {
    /// A regular task, run start to finish by one worker.
    pub fn new(body: impl FnOnce(&TaskContext<'_>) + Send + 'static) -> Task {
        Task {
            payload: Payload::Regular(Box::new(body)),
            accesses: Vec::new(),
            priority: 0,
        }
    }

    /// A worksharing task over the unit-stride range `bounds`, with no data
    /// environment to duplicate.
    pub fn worksharing(
        bounds: Range<usize>,
        body: impl Fn(Range<usize>, &TaskContext<'_>) + Send + Sync + 'static,
    ) -> Task {
        Task::worksharing_with_env(bounds, DataEnv::cloned(()), move |r, _: &mut (), ctx| {
            body(r, ctx)
        })
    }

    /// A worksharing task whose collaborators each get their own copy of
    /// `env`, made once per work request.
    pub fn worksharing_with_env<E>(
        bounds: Range<usize>,
        env: DataEnv<E>,
        body: impl Fn(Range<usize>, &mut E, &TaskContext<'_>) + Send + Sync + 'static,
    ) -> Task
    where
        E: Send + Sync + 'static,
    {
        Task {
            payload: Payload::Worksharing(LoopSpec {
                bounds,
                chunksize: None,
                policy: ChunkPolicy::Guided,
                body: Arc::new(EnvLoop { env, body }),
            }),
            accesses: Vec::new(),
            priority: 0,
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self.payload {
            Payload::Regular(_) => TaskKind::Regular,
            Payload::Worksharing(_) => TaskKind::Worksharing,
        }
    }

    pub fn priority(mut self, priority: i64) -> Task {
        self.priority = priority;
        self
    }

    pub fn access(mut self, region: AccessRegion) -> Task {
        self.accesses.push(region);
        self
    }

    pub fn input(self, object: ObjectId, start: usize, length: usize) -> Task {
        self.access(AccessRegion::new(object, start, length, AccessMode::In))
    }

    pub fn output(self, object: ObjectId, start: usize, length: usize) -> Task {
        self.access(AccessRegion::new(object, start, length, AccessMode::Out))
    }

    pub fn inout(self, object: ObjectId, start: usize, length: usize) -> Task {
        self.access(AccessRegion::new(object, start, length, AccessMode::InOut))
    }

    /// Minimum iterations per work request. Ignored for regular tasks.
    pub fn chunksize(mut self, chunksize: usize) -> Task {
        if let Payload::Worksharing(spec) = &mut self.payload {
            spec.chunksize = Some(chunksize);
        }
        self
    }

    /// Chunk distribution policy. Ignored for regular tasks.
    pub fn policy(mut self, policy: ChunkPolicy) -> Task {
        if let Payload::Worksharing(spec) = &mut self.payload {
            spec.policy = policy;
        }
        self
    }
}

/// Runtime-side view of a spawned task.
pub(crate) struct TaskNode {
    pub id: TaskId,
    pub kind: TaskKind,
    pub priority: i64,
    pub parent: Option<Arc<TaskNode>>,
    state: AtomicU8,
    pub pending_children: AtomicUsize,
    pub body: Mutex<Option<RegularBody>>,
    pub spec: Option<LoopSpec>,
}

impl TaskNode {
    pub fn root() -> TaskNode {
        TaskNode {
            id: TaskId::MAIN,
            kind: TaskKind::Regular,
            priority: 0,
            parent: None,
            state: AtomicU8::new(TaskState::Running as u8),
            pending_children: AtomicUsize::new(0),
            body: Mutex::new(None),
            spec: None,
        }
    }

    pub fn new(id: TaskId, task: Task, parent: Arc<TaskNode>) -> TaskNode {
        let kind = task.kind();
        let (body, spec) = match task.payload {
            Payload::Regular(b) => (Some(b), None),
            Payload::Worksharing(s) => (None, Some(s)),
        };
        TaskNode {
            id,
            kind,
            priority: task.priority,
            parent: Some(parent),
            state: AtomicU8::new(TaskState::Created as u8),
            pending_children: AtomicUsize::new(0),
            body: Mutex::new(body),
            spec,
        }
    }

    pub fn state(&self) -> TaskState {
        TaskState::from_u8(self.state.load(Ordering::Acquire))
    }

    /// Moves the task to `next`.
    ///
    /// # Panics
    ///
    /// Panics on a transition outside Created→{Blocked|Ready}→Running→Finished.
    pub fn advance(&self, next: TaskState) {
        let prev = TaskState::from_u8(self.state.swap(next as u8, Ordering::AcqRel));
        assert!(
            next.may_follow(prev),
            "illegal state transition {prev:?} -> {next:?} for {}",
            self.id
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iter_space_counts() {
        assert_eq!(IterSpace::new(0, 10, 1).count().unwrap(), 10);
        assert_eq!(IterSpace::new(0, 10, 3).count().unwrap(), 4);
        assert_eq!(IterSpace::new(10, 0, -2).count().unwrap(), 5);
        assert_eq!(IterSpace::new(5, 5, 1).count().unwrap(), 0);
        assert!(IterSpace::new(0, 10, 0).count().is_err());
        assert!(IterSpace::new(0, 10, -1).count().is_err());
        assert!(IterSpace::new(10, 0, 1).count().is_err());
    }

    #[test]
    fn iter_space_values_follow_the_original_loop() {
        let s = IterSpace::new(10, -3, -4);
        let vals: Vec<i64> = s.normalized().unwrap().map(|k| s.value(k)).collect();
        assert_eq!(vals, vec![10, 6, 2, -2]);
    }

    #[test]
    fn legal_transitions() {
        let root = Arc::new(TaskNode::root());
        let n = TaskNode::new(TaskId(1), Task::new(|_| {}), root);
        n.advance(TaskState::Blocked);
        n.advance(TaskState::Ready);
        n.advance(TaskState::Running);
        n.advance(TaskState::Finished);
        assert_eq!(n.state(), TaskState::Finished);
    }

    #[test]
    #[should_panic(expected = "illegal state transition")]
    fn finished_task_cannot_run_again() {
        let root = Arc::new(TaskNode::root());
        let n = TaskNode::new(TaskId(1), Task::new(|_| {}), root);
        n.advance(TaskState::Ready);
        n.advance(TaskState::Running);
        n.advance(TaskState::Finished);
        n.advance(TaskState::Running);
    }

    #[test]
    fn data_env_duplicates_independently() {
        let env = DataEnv::new(vec![1, 2, 3], |v: &Vec<i32>| v.clone());
        let mut a = env.duplicate();
        let b = env.duplicate();
        a.push(4);
        assert_eq!(b, vec![1, 2, 3]);
    }

    #[test]
    fn builder_records_clauses() {
        let o = ObjectId(4);
        let t = Task::worksharing(0..10, |_, _| {})
            .inout(o, 0, 10)
            .input(o, 2, 1)
            .chunksize(3)
            .priority(-2);
        assert_eq!(t.kind(), TaskKind::Worksharing);
        assert_eq!(t.accesses.len(), 2);
        assert_eq!(t.priority, -2);
        match t.payload {
            Payload::Worksharing(ref s) => assert_eq!(s.chunksize, Some(3)),
            _ => unreachable!(),
        }
    }
}
