//! Dependence registration and release.
//!
//! Each spawning context owns a dependence domain: a task is ordered only
//! against earlier siblings. For a flat program (every task spawned by the
//! main program) this is exactly "every live earlier task".

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::region::{conflicts, AccessRegion, DependenceMode, ObjectId};
use crate::task::TaskId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DepError {
    #[error("task {0} released twice")]
    DoubleRelease(TaskId),
    #[error("task {0} was never registered")]
    UnknownTask(TaskId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readiness {
    Ready,
    /// Number of distinct unfinished predecessors.
    Blocked(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registration {
    pub readiness: Readiness,
    /// Conflicting earlier tasks in spawn order. Includes already finished
    /// predecessors only when the ledger keeps history.
    pub predecessors: Vec<TaskId>,
}

impl Registration {
    pub fn is_ready(&self) -> bool {
        self.readiness == Readiness::Ready
    }
}

#[derive(Debug)]
struct Entry {
    task: TaskId,
    access: AccessRegion,
    finished: bool,
}

#[derive(Debug)]
struct Node {
    pending: usize,
    successors: Vec<TaskId>,
    keys: Vec<(TaskId, ObjectId)>,
}

/// Per-object access history plus predecessor counts for every live task.
#[derive(Debug)]
pub struct DependenceLedger {
    mode: DependenceMode,
    keep_history: bool,
    history: HashMap<(TaskId, ObjectId), Vec<Entry>>,
    nodes: HashMap<TaskId, Node>,
    released: HashSet<TaskId>,
}

impl DependenceLedger {
    pub fn new(mode: DependenceMode) -> Self {
        DependenceLedger {
            mode,
            keep_history: false,
            history: HashMap::new(),
            nodes: HashMap::new(),
            released: HashSet::new(),
        }
    }

    /// Keeps finished accesses around so that registrations also report
    /// edges to predecessors that already completed. The reported DAG then
    /// depends only on program order, at the cost of scanning all history.
    pub fn with_history(mut self, keep: bool) -> Self {
        self.keep_history = keep;
        self
    }

    pub fn mode(&self) -> DependenceMode {
        self.mode
    }

    /// Registers `task`, spawned from `domain`, against every earlier access
    /// in that domain. Tasks must be registered in spawn order.
    pub fn register(
        &mut self,
        task: TaskId,
        domain: TaskId,
        accesses: &[AccessRegion],
    ) -> Registration {
        debug_assert!(!self.nodes.contains_key(&task) && !self.released.contains(&task));
        let mut live = BTreeSet::new();
        let mut all = BTreeSet::new();
        for access in accesses {
            let Some(entries) = self.history.get(&(domain, access.object)) else {
                continue;
            };
            for entry in entries {
                if entry.task != task && conflicts(&entry.access, access, self.mode) {
                    all.insert(entry.task);
                    if !entry.finished {
                        live.insert(entry.task);
                    }
                }
            }
        }
        for pred in &live {
            self.nodes
                .get_mut(pred)
                .expect("live history entry without a node")
                .successors
                .push(task);
        }

        let mut keys = Vec::with_capacity(accesses.len());
        for access in accesses {
            let key = (domain, access.object);
            self.history.entry(key).or_default().push(Entry {
                task,
                access: *access,
                finished: false,
            });
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        self.nodes.insert(
            task,
            Node {
                pending: live.len(),
                successors: Vec::new(),
                keys,
            },
        );

        let readiness = if live.is_empty() {
            Readiness::Ready
        } else {
            Readiness::Blocked(live.len())
        };
        Registration {
            readiness,
            predecessors: all.into_iter().collect(),
        }
    }

    /// Retires a finished task and returns the successors that became ready,
    /// in spawn order.
    pub fn release(&mut self, task: TaskId) -> Result<Vec<TaskId>, DepError> {
        let Some(node) = self.nodes.remove(&task) else {
            return Err(if self.released.contains(&task) {
                DepError::DoubleRelease(task)
            } else {
                DepError::UnknownTask(task)
            });
        };
        self.released.insert(task);
        for key in &node.keys {
            let emptied = match self.history.get_mut(key) {
                Some(entries) => {
                    if self.keep_history {
                        entries
                            .iter_mut()
                            .filter(|e| e.task == task)
                            .for_each(|e| e.finished = true);
                    } else {
                        entries.retain(|e| e.task != task);
                    }
                    entries.is_empty()
                }
                None => false,
            };
            if emptied {
                self.history.remove(key);
            }
        }
        let mut ready = Vec::new();
        for succ in node.successors {
            let n = self
                .nodes
                .get_mut(&succ)
                .expect("successor retired before its predecessor");
            n.pending -= 1;
            if n.pending == 0 {
                ready.push(succ);
            }
        }
        ready.sort_unstable();
        Ok(ready)
    }

    /// Unfinished predecessor count of a live task.
    pub fn pending(&self, task: TaskId) -> Option<usize> {
        self.nodes.get(&task).map(|n| n.pending)
    }

    pub fn live_tasks(&self) -> usize {
        self.nodes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::AccessMode;

    const MAIN: TaskId = TaskId(0);

    fn inout(o: ObjectId, start: usize, len: usize) -> AccessRegion {
        AccessRegion::new(o, start, len, AccessMode::InOut)
    }

    #[test]
    fn first_task_is_ready() {
        let mut l = DependenceLedger::new(DependenceMode::Region);
        let r = l.register(TaskId(1), MAIN, &[inout(ObjectId(1), 0, 8)]);
        assert!(r.is_ready());
        assert!(r.predecessors.is_empty());
    }

    #[test]
    fn disjoint_blocks_are_all_ready() {
        let a = ObjectId(1);
        let mut l = DependenceLedger::new(DependenceMode::Region);
        for b in 0..4u64 {
            let r = l.register(TaskId(b + 1), MAIN, &[inout(a, b as usize * 4, 4)]);
            assert!(r.is_ready());
        }
    }

    #[test]
    fn overlapping_chain_counts() {
        let a = ObjectId(1);
        let mut l = DependenceLedger::new(DependenceMode::Region);
        l.register(TaskId(1), MAIN, &[inout(a, 0, 8)]);
        let r2 = l.register(TaskId(2), MAIN, &[inout(a, 2, 4)]);
        let r3 = l.register(TaskId(3), MAIN, &[inout(a, 5, 5)]);
        assert_eq!(r2.readiness, Readiness::Blocked(1));
        assert_eq!(r3.readiness, Readiness::Blocked(2));
        assert_eq!(r3.predecessors, vec![TaskId(1), TaskId(2)]);

        assert_eq!(l.release(TaskId(1)).unwrap(), vec![TaskId(2)]);
        assert_eq!(l.pending(TaskId(3)), Some(1));
        assert_eq!(l.release(TaskId(2)).unwrap(), vec![TaskId(3)]);
    }

    #[test]
    fn discrete_mode_ignores_nested_region() {
        let a = ObjectId(1);
        let mut l = DependenceLedger::new(DependenceMode::Discrete);
        l.register(TaskId(1), MAIN, &[inout(a, 0, 8)]);
        assert!(l.register(TaskId(2), MAIN, &[inout(a, 2, 6)]).is_ready());
    }

    #[test]
    fn release_without_successors_is_empty() {
        let mut l = DependenceLedger::new(DependenceMode::Region);
        l.register(TaskId(1), MAIN, &[]);
        assert!(l.release(TaskId(1)).unwrap().is_empty());
    }

    #[test]
    fn diamond_releases_in_spawn_order() {
        let a = ObjectId(1);
        let mut l = DependenceLedger::new(DependenceMode::Region);
        l.register(TaskId(1), MAIN, &[inout(a, 0, 8)]);
        l.register(TaskId(2), MAIN, &[inout(a, 0, 4)]);
        l.register(TaskId(3), MAIN, &[inout(a, 4, 4)]);
        assert_eq!(l.release(TaskId(1)).unwrap(), vec![TaskId(2), TaskId(3)]);
    }

    #[test]
    fn double_release_is_an_error() {
        let mut l = DependenceLedger::new(DependenceMode::Region);
        l.register(TaskId(1), MAIN, &[]);
        l.release(TaskId(1)).unwrap();
        assert_eq!(
            l.release(TaskId(1)),
            Err(DepError::DoubleRelease(TaskId(1)))
        );
        assert_eq!(l.release(TaskId(9)), Err(DepError::UnknownTask(TaskId(9))));
    }

    #[test]
    fn multiple_conflicting_accesses_count_once() {
        let a = ObjectId(1);
        let b = ObjectId(2);
        let mut l = DependenceLedger::new(DependenceMode::Region);
        l.register(TaskId(1), MAIN, &[inout(a, 0, 4), inout(b, 0, 4)]);
        let r = l.register(TaskId(2), MAIN, &[inout(a, 1, 1), inout(b, 2, 1)]);
        assert_eq!(r.readiness, Readiness::Blocked(1));
        assert_eq!(l.release(TaskId(1)).unwrap(), vec![TaskId(2)]);
    }

    #[test]
    fn domains_are_isolated() {
        let a = ObjectId(1);
        let mut l = DependenceLedger::new(DependenceMode::Region);
        l.register(TaskId(1), MAIN, &[inout(a, 0, 8)]);
        // child of task 1 touching the same data is not ordered after its parent
        assert!(l
            .register(TaskId(2), TaskId(1), &[inout(a, 0, 8)])
            .is_ready());
    }

    #[test]
    fn history_reports_finished_predecessors() {
        let a = ObjectId(1);
        let mut l = DependenceLedger::new(DependenceMode::Region).with_history(true);
        l.register(TaskId(1), MAIN, &[inout(a, 0, 8)]);
        l.release(TaskId(1)).unwrap();
        let r = l.register(TaskId(2), MAIN, &[inout(a, 4, 1)]);
        assert!(r.is_ready());
        assert_eq!(r.predecessors, vec![TaskId(1)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn program() -> impl Strategy<Value = Vec<Vec<(u64, usize, usize, u8)>>> {
            prop::collection::vec(
                prop::collection::vec((0u64..3, 0usize..24, 1usize..8, 0u8..3), 0..3),
                1..30,
            )
        }

        fn to_accesses(spec: &[(u64, usize, usize, u8)]) -> Vec<AccessRegion> {
            spec.iter()
                .map(|&(o, s, l, m)| {
                    let mode = [AccessMode::In, AccessMode::Out, AccessMode::InOut][m as usize];
                    AccessRegion::new(ObjectId(o), s, l, mode)
                })
                .collect()
        }

        proptest! {
            #[test]
            fn counts_never_increase_and_ready_iff_zero(
                prog in program(),
                order in prop::collection::vec(any::<prop::sample::Index>(), 30),
                region in any::<bool>(),
            ) {
                let mode = if region { DependenceMode::Region } else { DependenceMode::Discrete };
                let mut l = DependenceLedger::new(mode);
                let mut ready = Vec::new();
                for (i, spec) in prog.iter().enumerate() {
                    let id = TaskId(i as u64 + 1);
                    if l.register(id, MAIN, &to_accesses(spec)).is_ready() {
                        ready.push(id);
                    }
                }
                let mut last: HashMap<TaskId, usize> = (1..=prog.len() as u64)
                    .map(|i| (TaskId(i), l.pending(TaskId(i)).unwrap()))
                    .collect();
                let mut k = 0;
                while !ready.is_empty() {
                    let pick = order[k % order.len()].index(ready.len());
                    k += 1;
                    let t = ready.remove(pick);
                    let newly = l.release(t).unwrap();
                    for (task, prev) in last.iter_mut() {
                        if let Some(now) = l.pending(*task) {
                            prop_assert!(now <= *prev);
                            *prev = now;
                        }
                    }
                    for n in &newly {
                        prop_assert_eq!(l.pending(*n), Some(0));
                    }
                    ready.extend(newly);
                }
                prop_assert_eq!(l.live_tasks(), 0);
            }
        }
    }
}
