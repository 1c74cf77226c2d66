//! Two tasks over nested regions of one array: `T1 inout a[0;PS)` then
//! `T2 inout a[PS/4;PS/2)`. Region dependences order them; discrete
//! dependences see different start addresses and let them overlap. Each
//! task sleeps TS microseconds, so the makespan shows which happened.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use wstasks::{ObjectId, Task};

use super::Outcome;
use crate::driver::timed_reps;
use crate::experiment::{BenchError, Experiment, ResultRow};

/// Ranges of the two tasks for problem size `ps`.
pub fn task_ranges(ps: usize) -> [std::ops::Range<usize>; 2] {
    let inner = ps / 4..ps / 4 + (ps / 2).max(1);
    [0..ps, inner]
}

pub fn run(exp: &Experiment) -> Result<Outcome, BenchError> {
    exp.validate()?;
    if exp.ps < 2 {
        return Err(BenchError::Config(
            "the regions program needs PS >= 2".into(),
        ));
    }
    let object = ObjectId::fresh();
    // atomics: under discrete dependences the two tasks may really overlap
    let a: Arc<Vec<AtomicU64>> = Arc::new((0..exp.ps).map(|_| AtomicU64::new(0)).collect());
    let pause = Duration::from_micros(exp.ts as u64);
    let (times, trace) = timed_reps(
        exp,
        |_| {},
        |ctx, _| {
            for r in task_ranges(exp.ps) {
                let a = a.clone();
                let range = r.clone();
                let task = Task::new(move |_| {
                    thread::sleep(pause);
                    for x in &a[range] {
                        x.fetch_add(1, Ordering::Relaxed);
                    }
                })
                .inout(object, r.start, r.len());
                ctx.spawn(task)
                    .map_err(|e| BenchError::Config(e.to_string()))?;
            }
            Ok(())
        },
    )?;
    let [_, inner] = task_ranges(exp.ps);
    for (i, x) in a.iter().enumerate() {
        let expected = exp.reps as u64 * if inner.contains(&i) { 2 } else { 1 };
        let actual = x.load(Ordering::Relaxed);
        if actual != expected {
            return Err(BenchError::ValidationFailed {
                index: i,
                expected: expected as f64,
                actual: actual as f64,
            });
        }
    }
    Ok(Outcome {
        row: ResultRow::from_times(exp, &times, 2.0),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_match_the_eight_element_example() {
        assert_eq!(task_ranges(8), [0..8, 2..6]);
    }
}
