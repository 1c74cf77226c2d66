//! Blocked daxpy: `a[j] += b[j] * c[j]`, one task per block with
//! `priority(block)`.

use std::sync::Arc;

use wstasks::{AccessMode, SharedBuffer};

use super::Outcome;
use crate::driver::{check_close, span, spawn_phase, timed_reps, Phase};
use crate::experiment::{BenchError, Experiment, ResultRow};

pub const A0: f64 = 1.0;
pub const B0: f64 = 2.0;
pub const C0: f64 = 3.0;

/// Value every element of `a` holds after `updates` sweeps.
pub fn expected(updates: usize) -> f64 {
    A0 + updates as f64 * B0 * C0
}

pub fn run(exp: &Experiment) -> Result<Outcome, BenchError> {
    exp.validate()?;
    let n = exp.ps;
    let a = Arc::new(SharedBuffer::new(vec![A0; n]));
    let b = Arc::new(SharedBuffer::new(vec![B0; n]));
    let c = Arc::new(SharedBuffer::new(vec![C0; n]));
    let inner = exp.inner;
    let phase = Phase {
        priority: true,
        ..Phase::of(exp, n)
    };
    let (ab, bb, cb) = (a.clone(), b.clone(), c.clone());
    let body: crate::driver::LoopFn = Arc::new(move |r| {
        // SAFETY: inout a / in b, c over `r` orders every conflicting access.
        let (a, b, c) = unsafe { (ab.slice_mut(r.clone()), bb.slice(r.clone()), cb.slice(r)) };
        for _ in 0..inner {
            for ((a, b), c) in a.iter_mut().zip(b).zip(c) {
                *a += b * c;
            }
        }
    });
    let (times, trace) = timed_reps(
        exp,
        |_| {},
        |ctx, _| {
            spawn_phase(ctx, exp, phase, body.clone(), |r| {
                vec![
                    span(a.id(), &r, AccessMode::InOut),
                    span(b.id(), &r, AccessMode::In),
                    span(c.id(), &r, AccessMode::In),
                ]
            })
        },
    )?;
    // SAFETY: the runtime has returned; no task is alive.
    let result = unsafe { a.snapshot() };
    check_close(&result, &vec![expected(exp.reps * inner); n], 0.0)?;
    let flops = 2.0 * (n * inner) as f64;
    Ok(Outcome {
        row: ResultRow::from_times(exp, &times, flops),
        trace,
    })
}
