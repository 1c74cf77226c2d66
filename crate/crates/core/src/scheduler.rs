//! Ready queue and work assignment.
//!
//! One global priority queue (FIFO among equal priorities) feeds all
//! workers. A worksharing task taken from the queue is installed on the
//! dequeuing worker's team; teammates then join it until every iteration is
//! assigned. Finishing a task hands its first newly ready successor straight
//! back to the same worker.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use parking_lot::Mutex;

use crate::task::{TaskId, TaskKind, TaskNode, TaskState};
use crate::worksharing::{Team, WorkerId, WorksharingRegion};

struct QueueEntry {
    priority: i64,
    seq: Reverse<u64>,
    node: Arc<TaskNode>,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.priority, self.seq).cmp(&(other.priority, other.seq))
    }
}

/// Highest priority first; equal priorities in enqueue order.
#[derive(Default)]
pub(crate) struct ReadyQueue {
    heap: BinaryHeap<QueueEntry>,
    next_seq: u64,
}

impl ReadyQueue {
    pub fn push(&mut self, node: Arc<TaskNode>) {
        let seq = Reverse(self.next_seq);
        self.next_seq += 1;
        self.heap.push(QueueEntry {
            priority: node.priority,
            seq,
            node,
        });
    }

    pub fn pop(&mut self) -> Option<Arc<TaskNode>> {
        self.heap.pop().map(|e| e.node)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    #[cfg(test)]
    pub fn max_priority(&self) -> Option<i64> {
        self.heap.peek().map(|e| e.priority)
    }
}

/// A worksharing task installed on a team.
pub(crate) struct ActiveRegion {
    pub node: Arc<TaskNode>,
    pub region: WorksharingRegion,
}

impl ActiveRegion {
    fn install(node: Arc<TaskNode>, team: &Arc<Team>) -> Arc<ActiveRegion> {
        let spec = node
            .spec
            .as_ref()
            .expect("worksharing task without loop spec");
        let region = WorksharingRegion::new(
            node.id,
            spec.bounds.clone(),
            spec.chunksize,
            spec.policy,
            team.clone(),
            spec.body.clone(),
        );
        node.advance(TaskState::Running);
        Arc::new(ActiveRegion { node, region })
    }

    pub fn task(&self) -> TaskId {
        self.node.id
    }
}

pub(crate) enum Work {
    Regular(Arc<TaskNode>),
    Join(Arc<ActiveRegion>),
    Idle,
}

struct TeamSlot {
    team: Arc<Team>,
    /// Regions with iterations still unassigned. Guided and dynamic regions
    /// are installed only when none is pending, so at most one of those is
    /// ever here; member-bound static slices may keep older regions around.
    hosted: Mutex<Vec<Arc<ActiveRegion>>>,
}

pub(crate) struct Scheduler {
    queue: Mutex<ReadyQueue>,
    teams: Vec<TeamSlot>,
    team_of: Vec<usize>,
}

impl Scheduler {
    pub fn new(teams: Vec<Team>) -> Self {
        let workers = teams.iter().map(Team::size).sum();
        let mut team_of = vec![0; workers];
        for (i, t) in teams.iter().enumerate() {
            for m in &t.members {
                team_of[m.0] = i;
            }
        }
        Scheduler {
            queue: Mutex::new(ReadyQueue::default()),
            teams: teams
                .into_iter()
                .map(|t| TeamSlot {
                    team: Arc::new(t),
                    hosted: Mutex::new(Vec::new()),
                })
                .collect(),
            team_of,
        }
    }

    pub fn team_of(&self, worker: WorkerId) -> &Arc<Team> {
        &self.teams[self.team_of[worker.0]].team
    }

    pub fn enqueue(&self, node: Arc<TaskNode>) {
        debug_assert_eq!(node.state(), TaskState::Ready);
        self.queue.lock().push(node);
    }

    pub fn enqueue_all(&self, nodes: impl IntoIterator<Item = Arc<TaskNode>>) {
        let mut q = self.queue.lock();
        for n in nodes {
            q.push(n);
        }
    }

    pub fn queued(&self) -> usize {
        self.queue.lock().len()
    }

    /// Joins a region on this worker's team that still has work for it, or
    /// takes the next ready task. A dequeued worksharing task is installed
    /// on the team and joined.
    pub fn next_work(&self, worker: WorkerId) -> Work {
        let slot = &self.teams[self.team_of[worker.0]];
        let mut hosted = slot.hosted.lock();
        hosted.retain(|r| !r.region.fully_assigned());
        if let Some(r) = hosted.iter().find(|r| r.region.has_work_for(worker)) {
            return Work::Join(r.clone());
        }
        let Some(node) = self.queue.lock().pop() else {
            return Work::Idle;
        };
        match node.kind {
            TaskKind::Regular => Work::Regular(node),
            TaskKind::Worksharing => {
                let active = ActiveRegion::install(node, &slot.team);
                hosted.push(active.clone());
                Work::Join(active)
            }
        }
    }

    /// Picks the immediate successor for `worker` among `ready` (spawn
    /// order) and enqueues the rest. Returns the bypassed work, if any, and
    /// the tasks that went to the queue.
    pub fn on_finish(
        &self,
        worker: WorkerId,
        ready: Vec<Arc<TaskNode>>,
    ) -> (Option<Work>, Vec<TaskId>) {
        let mut it = ready.into_iter();
        let Some(first) = it.next() else {
            return (None, Vec::new());
        };
        let mut enqueued: Vec<Arc<TaskNode>> = it.collect();
        let bypass = match first.kind {
            TaskKind::Regular => Some(Work::Regular(first)),
            TaskKind::Worksharing => {
                let slot = &self.teams[self.team_of[worker.0]];
                let mut hosted = slot.hosted.lock();
                hosted.retain(|r| !r.region.fully_assigned());
                if hosted.is_empty() {
                    let active = ActiveRegion::install(first, &slot.team);
                    hosted.push(active.clone());
                    Some(Work::Join(active))
                } else {
                    enqueued.insert(0, first);
                    None
                }
            }
        };
        let ids = enqueued.iter().map(|n| n.id).collect();
        self.enqueue_all(enqueued);
        (bypass, ids)
    }

    /// No queued tasks and no hosted region with unassigned iterations.
    pub fn is_drained(&self) -> bool {
        self.queued() == 0
            && self
                .teams
                .iter()
                .all(|s| s.hosted.lock().iter().all(|r| r.region.fully_assigned()))
    }
}
