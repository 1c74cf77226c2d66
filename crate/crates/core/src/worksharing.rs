//! Teams of workers and the chunked, barrier-free execution of worksharing
//! tasks.
//!
//! A worksharing region is hosted by one team. Members request work first
//! come first serve; each request hands out a batch of whole chunks sized
//! like OpenMP `guided` (unassigned chunks divided by the team size, never
//! less than one chunk). The member whose completion leaves nothing
//! unassigned and nothing outstanding finishes the task and is the one that
//! releases its dependences. Everyone else simply leaves and looks for other
//! work; there is no barrier.

use std::any::Any;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::runtime::TaskContext;
use crate::task::{LoopBody, TaskId};

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct WorkerId(pub usize);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WsError {
    #[error("worker {worker} is not a member of team {team}")]
    NotTeamMember { worker: WorkerId, team: usize },
    #[error("batch {seq} of task {task} completed twice")]
    DoubleComplete { task: TaskId, seq: u64 },
}

/// A fixed group of workers, contiguous in the worker numbering and never
/// spanning a socket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Team {
    pub id: usize,
    pub socket: usize,
    pub members: Vec<WorkerId>,
}

impl Team {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn position(&self, worker: WorkerId) -> Option<usize> {
        self.members.iter().position(|&m| m == worker)
    }
}

/// Partitions `workers` into teams of at most `team_size` members inside
/// each socket of `socket_size` workers. Without a team size there is one
/// team per socket.
pub fn build_teams(
    workers: usize,
    team_size: Option<usize>,
    socket_size: usize,
) -> Result<Vec<Team>, ConfigError> {
    if workers == 0 {
        return Err(ConfigError::NoWorkers);
    }
    if socket_size == 0 {
        return Err(ConfigError::ZeroSocketSize);
    }
    let n = team_size.unwrap_or(socket_size);
    if n == 0 {
        return Err(ConfigError::ZeroTeamSize);
    }
    if n > socket_size {
        return Err(ConfigError::TeamSpansSockets {
            team_size: n,
            socket_size,
        });
    }
    let mut teams = Vec::new();
    for socket_start in (0..workers).step_by(socket_size) {
        let socket_end = (socket_start + socket_size).min(workers);
        for start in (socket_start..socket_end).step_by(n) {
            let end = (start + n).min(socket_end);
            teams.push(Team {
                id: teams.len(),
                socket: socket_start / socket_size,
                members: (start..end).map(WorkerId).collect(),
            });
        }
    }
    Ok(teams)
}

/// Chunksize used when a worksharing task does not set one: enough for every
/// collaborator to get at least one chunk.
pub fn default_chunksize(total_iters: usize, team_size: usize) -> usize {
    total_iters.div_ceil(team_size.max(1)).max(1)
}

/// How a region hands out iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkPolicy {
    /// One equal slice per team member, bound to the member's position.
    Static,
    /// One chunk per request.
    Dynamic,
    /// Unassigned chunks divided by team size per request, at least one.
    #[default]
    Guided,
}

impl FromStr for ChunkPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(ChunkPolicy::Static),
            "dynamic" => Ok(ChunkPolicy::Dynamic),
            "guided" => Ok(ChunkPolicy::Guided),
            other => Err(format!("unknown chunk policy `{other}`")),
        }
    }
}

/// Number of chunks the guided policy hands out when `remaining_chunks` are
/// still unassigned in a team of `team_size`.
pub fn guided_batch_chunks(remaining_chunks: usize, team_size: usize) -> usize {
    (remaining_chunks / team_size.max(1)).max(1)
}

/// Control information for one work request: the worker's descriptor filled
/// with its iteration bounds and its private copy of the data environment.
pub struct ChunkBatch {
    pub task: TaskId,
    pub worker: WorkerId,
    pub range: Range<usize>,
    /// Whole chunks in this batch (the region's last chunk may be short).
    pub chunks: usize,
    seq: u64,
    env: Box<dyn Any + Send>,
}

impl ChunkBatch {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

impl fmt::Debug for ChunkBatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChunkBatch")
            .field("task", &self.task)
            .field("worker", &self.worker)
            .field("range", &self.range)
            .field("chunks", &self.chunks)
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchOutcome {
    /// Unassigned iterations remain for this worker; request again.
    MoreWork,
    /// This completion finished the whole task. The caller releases it.
    RegionDone,
    /// Everything is assigned but teammates are still running; leave.
    RegionDrainedElsewhere,
}

struct Cursor {
    next: usize,
    outstanding: usize,
    open: Vec<u64>,
    next_seq: u64,
    /// Static policy only: the untaken slice of each member.
    slices: Vec<Option<Range<usize>>>,
    done: bool,
}

impl Cursor {
    fn fully_assigned(&self, policy: ChunkPolicy, end: usize) -> bool {
        match policy {
            ChunkPolicy::Static => self.slices.iter().all(Option::is_none),
            _ => self.next >= end,
        }
    }

    fn has_work_for(&self, policy: ChunkPolicy, end: usize, position: usize) -> bool {
        match policy {
            ChunkPolicy::Static => self.slices.get(position).is_some_and(Option::is_some),
            _ => self.next < end,
        }
    }
}

/// The live execution state of one worksharing task on its team.
pub struct WorksharingRegion {
    task: TaskId,
    bounds: Range<usize>,
    chunksize: usize,
    policy: ChunkPolicy,
    team: Arc<Team>,
    body: Arc<dyn LoopBody>,
    cursor: Mutex<Cursor>,
    duplications: AtomicUsize,
}

impl fmt::Debug for WorksharingRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WorksharingRegion")
            .field("task", &self.task)
            .field("bounds", &self.bounds)
            .field("chunksize", &self.chunksize)
            .field("policy", &self.policy)
            .field("team", &self.team.id)
            .finish()
    }
}

impl WorksharingRegion {
    /// # Panics
    ///
    /// Panics if `chunksize` is `Some(0)` or `bounds` is reversed.
    pub fn new(
        task: TaskId,
        bounds: Range<usize>,
        chunksize: Option<usize>,
        policy: ChunkPolicy,
        team: Arc<Team>,
        body: Arc<dyn LoopBody>,
    ) -> Self {
        assert!(bounds.start <= bounds.end, "reversed loop bounds");
        let n = team.size();
        let total = bounds.len();
        let chunksize = match policy {
            ChunkPolicy::Static => default_chunksize(total, n),
            _ => chunksize.unwrap_or_else(|| default_chunksize(total, n)),
        };
        assert!(chunksize >= 1, "chunksize must be positive");
        let slices = if policy == ChunkPolicy::Static {
            (0..n)
                .map(|m| {
                    let lo = bounds.start + m * chunksize;
                    (lo < bounds.end).then(|| lo..(lo + chunksize).min(bounds.end))
                })
                .collect()
        } else {
            Vec::new()
        };
        WorksharingRegion {
            task,
            cursor: Mutex::new(Cursor {
                next: bounds.start,
                outstanding: 0,
                open: Vec::new(),
                next_seq: 0,
                slices,
                done: false,
            }),
            bounds,
            chunksize,
            policy,
            team,
            body,
            duplications: AtomicUsize::new(0),
        }
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn bounds(&self) -> Range<usize> {
        self.bounds.clone()
    }

    pub fn chunksize(&self) -> usize {
        self.chunksize
    }

    pub fn team(&self) -> &Arc<Team> {
        &self.team
    }

    /// Data-environment copies made so far; one per successful request.
    pub fn duplications(&self) -> usize {
        self.duplications.load(Ordering::Relaxed)
    }

    /// Whether a request from `worker` would currently obtain iterations.
    pub fn has_work_for(&self, worker: WorkerId) -> bool {
        let Some(pos) = self.team.position(worker) else {
            return false;
        };
        self.cursor
            .lock()
            .has_work_for(self.policy, self.bounds.end, pos)
    }

    pub fn fully_assigned(&self) -> bool {
        self.cursor
            .lock()
            .fully_assigned(self.policy, self.bounds.end)
    }

    /// Finishes a region that has no iterations at all. Returns true if this
    /// call did so; the caller then releases the task.
    pub fn finish_if_empty(&self) -> bool {
        let mut c = self.cursor.lock();
        if !c.done && c.next_seq == 0 && c.fully_assigned(self.policy, self.bounds.end) {
            c.done = true;
            true
        } else {
            false
        }
    }

    /// Assigns the next batch to `worker`, or `None` once everything is
    /// assigned. The data environment is duplicated once per batch, outside
    /// the cursor lock.
    pub fn request_chunks(&self, worker: WorkerId) -> Result<Option<ChunkBatch>, WsError> {
        let pos = self.team.position(worker).ok_or(WsError::NotTeamMember {
            worker,
            team: self.team.id,
        })?;
        let end = self.bounds.end;
        let cs = self.chunksize;
        let (range, seq) = {
            let mut c = self.cursor.lock();
            let range = match self.policy {
                ChunkPolicy::Static => match c.slices[pos].take() {
                    Some(r) => r,
                    None => return Ok(None),
                },
                ChunkPolicy::Dynamic | ChunkPolicy::Guided => {
                    if c.next >= end {
                        return Ok(None);
                    }
                    let remaining = end - c.next;
                    let chunks = match self.policy {
                        ChunkPolicy::Guided => {
                            guided_batch_chunks(remaining.div_ceil(cs), self.team.size())
                        }
                        _ => 1,
                    };
                    let hi = c.next + (chunks * cs).min(remaining);
                    let r = c.next..hi;
                    c.next = hi;
                    r
                }
            };
            c.outstanding += 1;
            let seq = c.next_seq;
            c.next_seq += 1;
            c.open.push(seq);
            (range, seq)
        };
        let env = self.body.duplicate_env();
        self.duplications.fetch_add(1, Ordering::Relaxed);
        Ok(Some(ChunkBatch {
            task: self.task,
            worker,
            chunks: range.len().div_ceil(cs),
            range,
            seq,
            env,
        }))
    }

    /// Runs the loop body over the batch's iterations.
    pub fn execute(&self, batch: &mut ChunkBatch, ctx: &TaskContext<'_>) {
        self.body.run(batch.range.clone(), &mut *batch.env, ctx);
    }

    /// Records that all iterations of `batch` have run.
    pub fn complete_batch(&self, batch: &ChunkBatch) -> Result<BatchOutcome, WsError> {
        let mut c = self.cursor.lock();
        let Some(i) = c.open.iter().position(|&s| s == batch.seq) else {
            return Err(WsError::DoubleComplete {
                task: self.task,
                seq: batch.seq,
            });
        };
        c.open.swap_remove(i);
        c.outstanding -= 1;
        let end = self.bounds.end;
        if c.fully_assigned(self.policy, end) && c.outstanding == 0 {
            debug_assert!(!c.done);
            c.done = true;
            return Ok(BatchOutcome::RegionDone);
        }
        let pos = self.team.position(batch.worker).unwrap_or(usize::MAX);
        if c.has_work_for(self.policy, end, pos) {
            Ok(BatchOutcome::MoreWork)
        } else {
            Ok(BatchOutcome::RegionDrainedElsewhere)
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) struct NoopBody;

    impl LoopBody for NoopBody {
        fn duplicate_env(&self) -> Box<dyn Any + Send> {
            Box::new(())
        }
        fn run(&self, _: Range<usize>, _: &mut (dyn Any + Send), _: &TaskContext<'_>) {}
    }

    fn team(n: usize) -> Arc<Team> {
        Arc::new(Team {
            id: 0,
            socket: 0,
            members: (0..n).map(WorkerId).collect(),
        })
    }

    fn region(iters: usize, cs: Option<usize>, n: usize, policy: ChunkPolicy) -> WorksharingRegion {
        WorksharingRegion::new(TaskId(1), 0..iters, cs, policy, team(n), Arc::new(NoopBody))
    }

    #[test]
    fn default_chunksize_examples() {
        assert_eq!(default_chunksize(1024, 8), 128);
        assert_eq!(default_chunksize(7, 8), 1);
        assert_eq!(default_chunksize(1000, 3), 334);
        // three batches of 334 cover 1000 exactly: 334 + 334 + 332
        let r = region(1000, None, 3, ChunkPolicy::Dynamic);
        let mut sizes = Vec::new();
        while let Some(b) = r.request_chunks(WorkerId(0)).unwrap() {
            sizes.push(b.len());
        }
        assert_eq!(sizes, vec![334, 334, 332]);
    }

    #[test]
    fn first_guided_request_takes_a_quarter() {
        let r = region(1000, Some(10), 4, ChunkPolicy::Guided);
        let b = r.request_chunks(WorkerId(2)).unwrap().unwrap();
        assert_eq!(b.range, 0..250);
        assert_eq!(b.chunks, 25);
    }

    #[test]
    fn last_chunk_is_handed_out_alone() {
        let r = region(35, Some(10), 4, ChunkPolicy::Guided);
        // 4 chunks / 4 members = 1 chunk per request
        let sizes: Vec<_> = std::iter::from_fn(|| r.request_chunks(WorkerId(0)).unwrap())
            .map(|b| b.range)
            .collect();
        assert_eq!(sizes, vec![0..10, 10..20, 20..30, 30..35]);
        assert!(r.request_chunks(WorkerId(1)).unwrap().is_none());
    }

    #[test]
    fn short_loop_is_one_short_batch() {
        let r = region(7, Some(10), 4, ChunkPolicy::Guided);
        let b = r.request_chunks(WorkerId(0)).unwrap().unwrap();
        assert_eq!(b.range, 0..7);
        assert_eq!(r.complete_batch(&b).unwrap(), BatchOutcome::RegionDone);
    }

    #[test]
    fn outsiders_cannot_request() {
        let r = region(10, None, 2, ChunkPolicy::Guided);
        assert_eq!(
            r.request_chunks(WorkerId(5)).unwrap_err(),
            WsError::NotTeamMember {
                worker: WorkerId(5),
                team: 0
            }
        );
    }

    #[test]
    fn completion_outcomes() {
        let r = region(40, Some(10), 2, ChunkPolicy::Guided);
        let a = r.request_chunks(WorkerId(0)).unwrap().unwrap(); // 2 chunks
        let b = r.request_chunks(WorkerId(1)).unwrap().unwrap(); // 1 chunk
        assert_eq!(a.range, 0..20);
        assert_eq!(b.range, 20..30);
        assert_eq!(r.complete_batch(&b).unwrap(), BatchOutcome::MoreWork);
        let c = r.request_chunks(WorkerId(1)).unwrap().unwrap();
        assert_eq!(c.range, 30..40);
        assert_eq!(
            r.complete_batch(&c).unwrap(),
            BatchOutcome::RegionDrainedElsewhere
        );
        assert_eq!(r.complete_batch(&a).unwrap(), BatchOutcome::RegionDone);
        assert!(matches!(
            r.complete_batch(&a),
            Err(WsError::DoubleComplete { .. })
        ));
        assert_eq!(r.duplications(), 3);
    }

    #[test]
    fn empty_region_finishes_once() {
        let r = region(0, None, 4, ChunkPolicy::Guided);
        assert!(r.request_chunks(WorkerId(0)).unwrap().is_none());
        assert!(r.finish_if_empty());
        assert!(!r.finish_if_empty());
    }

    #[test]
    fn static_slices_are_bound_to_positions() {
        let r = region(10, None, 4, ChunkPolicy::Static);
        assert_eq!(r.request_chunks(WorkerId(1)).unwrap().unwrap().range, 3..6);
        assert!(r.request_chunks(WorkerId(1)).unwrap().is_none());
        assert!(r.has_work_for(WorkerId(3)));
        assert_eq!(r.request_chunks(WorkerId(3)).unwrap().unwrap().range, 9..10);
        assert_eq!(r.request_chunks(WorkerId(0)).unwrap().unwrap().range, 0..3);
        assert!(!r.fully_assigned());
        assert_eq!(r.request_chunks(WorkerId(2)).unwrap().unwrap().range, 6..9);
        assert!(r.fully_assigned());
    }

    #[test]
    fn static_members_without_a_slice_have_no_work() {
        let r = region(2, None, 4, ChunkPolicy::Static);
        assert!(!r.has_work_for(WorkerId(2)));
        assert!(r.request_chunks(WorkerId(3)).unwrap().is_none());
    }

    #[test]
    fn dynamic_hands_out_single_chunks() {
        let r = region(25, Some(10), 4, ChunkPolicy::Dynamic);
        let sizes: Vec<_> = std::iter::from_fn(|| r.request_chunks(WorkerId(0)).unwrap())
            .map(|b| b.len())
            .collect();
        assert_eq!(sizes, vec![10, 10, 5]);
    }

    #[test]
    fn teams_one_per_socket_by_default() {
        let t = build_teams(8, None, 4).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].members, (0..4).map(WorkerId).collect::<Vec<_>>());
        assert_eq!(t[1].members, (4..8).map(WorkerId).collect::<Vec<_>>());
        assert_eq!(t[1].socket, 1);
    }

    #[test]
    fn teams_never_span_sockets() {
        assert_eq!(
            build_teams(8, Some(8), 4),
            Err(ConfigError::TeamSpansSockets {
                team_size: 8,
                socket_size: 4
            })
        );
    }

    #[test]
    fn trailing_partial_team() {
        let t = build_teams(6, Some(4), 8).unwrap();
        let members: Vec<Vec<usize>> = t
            .iter()
            .map(|t| t.members.iter().map(|w| w.0).collect())
            .collect();
        assert_eq!(members, vec![vec![0, 1, 2, 3], vec![4, 5]]);
    }

    #[test]
    fn partial_teams_inside_each_socket() {
        let t = build_teams(8, Some(3), 4).unwrap();
        let sizes: Vec<_> = t.iter().map(Team::size).collect();
        assert_eq!(sizes, vec![3, 1, 3, 1]);
        assert_eq!(t[2].members[0], WorkerId(4));
    }

    #[test]
    fn degenerate_team_configs() {
        assert_eq!(build_teams(0, None, 4), Err(ConfigError::NoWorkers));
        assert_eq!(build_teams(4, Some(0), 4), Err(ConfigError::ZeroTeamSize));
        assert_eq!(build_teams(4, None, 0), Err(ConfigError::ZeroSocketSize));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(512))]

            /// Random interleavings of requests and completions by team
            /// members: disjoint exact coverage, minimum batch size, a
            /// single RegionDone, one duplication per request.
            #[test]
            fn interleaved_members_cover_exactly_once(
                iters in 0usize..3000,
                cs in 1usize..64,
                n in 1usize..9,
                guided in any::<bool>(),
                picks in prop::collection::vec(any::<prop::sample::Index>(), 64),
            ) {
                let policy = if guided { ChunkPolicy::Guided } else { ChunkPolicy::Dynamic };
                let r = region(iters, Some(cs), n, policy);
                if r.finish_if_empty() {
                    prop_assert_eq!(iters, 0);
                    return Ok(());
                }
                let mut touched = vec![0u32; iters];
                let mut held: Vec<Option<ChunkBatch>> = (0..n).map(|_| None).collect();
                let mut done = 0;
                let mut requests = 0;
                let mut k = 0usize;
                let mut batches = Vec::new();
                while done == 0 {
                    let w = picks[k % picks.len()].index(n);
                    k += 1;
                    match held[w].take() {
                        None => {
                            if let Some(b) = r.request_chunks(WorkerId(w)).unwrap() {
                                requests += 1;
                                batches.push(b.range.clone());
                                held[w] = Some(b);
                            }
                        }
                        Some(b) => {
                            for i in b.range.clone() { touched[i] += 1; }
                            if r.complete_batch(&b).unwrap() == BatchOutcome::RegionDone {
                                done += 1;
                            }
                        }
                    }
                }
                prop_assert!(held.iter().all(Option::is_none));
                prop_assert!(touched.iter().all(|&t| t == 1));
                prop_assert_eq!(r.duplications(), requests);
                batches.sort_by_key(|b| b.start);
                for b in &batches[..batches.len() - 1] {
                    prop_assert!(b.len() >= cs);
                }
            }

            #[test]
            fn guided_batches_shrink(iters in 1usize..5000, cs in 1usize..50, n in 1usize..9) {
                let r = region(iters, Some(cs), n, ChunkPolicy::Guided);
                let chunks: Vec<usize> = std::iter::from_fn(|| r.request_chunks(WorkerId(0)).unwrap())
                    .map(|b| b.chunks)
                    .collect();
                prop_assert!(chunks.windows(2).all(|w| w[0] >= w[1]));
                prop_assert_eq!(chunks.iter().sum::<usize>(), iters.div_ceil(cs));
            }
        }
    }
}
