//! Shared machinery: turning one loop into tasks of the chosen version, and
//! timing repetitions inside a single runtime instance.

use std::ops::Range;
use std::sync::Arc;
use std::time::Instant;

use wstasks::{
    run, AccessMode, AccessRegion, DependenceMode, ExecutionTrace, ObjectId, Task, TaskContext,
};

use crate::experiment::{BenchError, Experiment, Version};

pub(crate) type LoopFn = Arc<dyn Fn(Range<usize>) + Send + Sync>;

/// How one loop of `n` iterations is decomposed.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Phase {
    pub n: usize,
    /// Iterations per task (tasks and worksharing versions).
    pub block: usize,
    /// Chunksize override for worksharing tasks.
    pub chunk: Option<usize>,
    /// Spawn `for_static` regions without dependences, relying on the
    /// member-bound slices to keep element-wise loops ordered.
    pub nowait: bool,
    /// `priority(block)` on each task.
    pub priority: bool,
}

impl Phase {
    /// Standard decomposition of an `n`-iteration loop for `exp`.
    pub fn of(exp: &Experiment, n: usize) -> Phase {
        Phase {
            n,
            block: block_size(exp, n),
            chunk: exp.cs,
            nowait: false,
            priority: false,
        }
    }
}

/// Block size of the decomposition: TS for task shapes, the whole loop for
/// the single-region shapes.
pub(crate) fn block_size(exp: &Experiment, n: usize) -> usize {
    match exp.version {
        Version::Tasks | Version::Worksharing => exp.ts.clamp(1, n.max(1)),
        _ => n.max(1),
    }
}

pub(crate) fn blocks(n: usize, block: usize) -> impl Iterator<Item = Range<usize>> {
    (0..n)
        .step_by(block.max(1))
        .map(move |s| s..(s + block).min(n))
}

/// Access clauses covering all of `[0, n)` of `object`. Region dependences
/// take one interval; discrete dependences need one clause per block so that
/// start addresses line up with the per-block writers.
pub(crate) fn whole(
    object: ObjectId,
    n: usize,
    block: usize,
    mode: AccessMode,
    deps: DependenceMode,
) -> Vec<AccessRegion> {
    match deps {
        DependenceMode::Region => vec![AccessRegion::new(object, 0, n, mode)],
        DependenceMode::Discrete => blocks(n, block)
            .map(|r| AccessRegion::new(object, r.start, r.len(), mode))
            .collect(),
    }
}

pub(crate) fn span(object: ObjectId, r: &Range<usize>, mode: AccessMode) -> AccessRegion {
    AccessRegion::new(object, r.start, r.len(), mode)
}

/// Spawns the tasks of one loop according to the experiment's version.
pub(crate) fn spawn_phase(
    ctx: &TaskContext<'_>,
    exp: &Experiment,
    phase: Phase,
    body: LoopFn,
    accesses: impl Fn(Range<usize>) -> Vec<AccessRegion>,
) -> Result<(), BenchError> {
    if phase.n == 0 {
        return Ok(());
    }
    let with_accesses = |mut task: Task, r: Range<usize>| {
        for a in accesses(r) {
            task = task.access(a);
        }
        task
    };
    let spawn = |task: Task| {
        ctx.spawn(task)
            .map(drop)
            .map_err(|e| BenchError::Config(e.to_string()))
    };
    match exp.version.loop_policy() {
        Some(policy) => {
            let b = body.clone();
            let mut task = Task::worksharing(0..phase.n, move |r, _| b(r))
                .policy(policy)
                .chunksize(phase.chunk.unwrap_or(exp.ts).max(1));
            if !(phase.nowait && exp.version == Version::ForStatic) {
                task = with_accesses(task, 0..phase.n);
            }
            spawn(task)
        }
        None => {
            for (i, r) in blocks(phase.n, phase.block).enumerate() {
                let b = body.clone();
                let task = match exp.version {
                    Version::Tasks => {
                        let range = r.clone();
                        Task::new(move |_| b(range))
                    }
                    _ => {
                        let t = Task::worksharing(r.clone(), move |r, _| b(r));
                        match phase.chunk {
                            Some(cs) => t.chunksize(cs.max(1)),
                            None => t,
                        }
                    }
                };
                let task = if phase.priority {
                    task.priority(i as i64)
                } else {
                    task
                };
                spawn(with_accesses(task, r))?;
            }
            Ok(())
        }
    }
}

/// Runs `exp.reps` timed repetitions inside one runtime instance. `reset`
/// runs on the main task before each repetition, outside the timed span;
/// `rep` spawns the repetition's tasks, which are waited for inside it.
pub(crate) fn timed_reps(
    exp: &Experiment,
    mut reset: impl FnMut(usize) + Send,
    rep: impl Fn(&TaskContext<'_>, usize) -> Result<(), BenchError> + Send,
) -> Result<(Vec<f64>, ExecutionTrace), BenchError> {
    exp.validate()?;
    let mut times = Vec::with_capacity(exp.reps);
    let mut failure = None;
    let (times_out, failure_out) = (&mut times, &mut failure);
    let trace = run(exp.runtime_config(), move |ctx| {
        for k in 0..exp.reps {
            reset(k);
            let t0 = Instant::now();
            let spawned = rep(ctx, k);
            ctx.taskwait();
            times_out.push(t0.elapsed().as_secs_f64());
            if let Err(e) = spawned {
                *failure_out = Some(e);
                return;
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok((times, trace)),
    }
}

/// First element whose relative error exceeds `rel` (0 demands bit
/// equality).
pub(crate) fn check_close(actual: &[f64], expected: &[f64], rel: f64) -> Result<(), BenchError> {
    if actual.len() != expected.len() {
        return Err(BenchError::ValidationFailed {
            index: actual.len().min(expected.len()),
            expected: expected.len() as f64,
            actual: actual.len() as f64,
        });
    }
    for (i, (&a, &e)) in actual.iter().zip(expected).enumerate() {
        let ok = if rel == 0.0 {
            a.to_bits() == e.to_bits()
        } else {
            (a - e).abs() <= rel * e.abs().max(f64::MIN_POSITIVE)
        };
        if !ok {
            return Err(BenchError::ValidationFailed {
                index: i,
                expected: e,
                actual: a,
            });
        }
    }
    Ok(())
}
