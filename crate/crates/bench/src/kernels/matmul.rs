//! Dense `C = A * B` over blocks of rows of `C`.

use std::sync::Arc;

use wstasks::{AccessMode, SharedBuffer};

use super::Outcome;
use crate::driver::{block_size, check_close, spawn_phase, timed_reps, whole, LoopFn, Phase};
use crate::experiment::{BenchError, Experiment, ResultRow};

pub fn matrix_a(n: usize) -> Vec<f64> {
    (0..n * n)
        .map(|k| ((k * 7 + 3) % 11) as f64 - 5.0)
        .collect()
}

pub fn matrix_b(n: usize) -> Vec<f64> {
    (0..n * n)
        .map(|k| ((k * 5 + 1) % 13) as f64 * 0.25)
        .collect()
}

/// Row `i` of `a * b` for row-major `n`×`n` matrices, written to `out`.
pub fn product_row(a: &[f64], b: &[f64], n: usize, i: usize, out: &mut [f64]) {
    out.fill(0.0);
    for k in 0..n {
        let aik = a[i * n + k];
        for (o, bkj) in out.iter_mut().zip(&b[k * n..(k + 1) * n]) {
            *o += aik * bkj;
        }
    }
}

pub fn serial(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for (i, row) in c.chunks_mut(n.max(1)).enumerate() {
        product_row(a, b, n, i, row);
    }
    c
}

pub fn run(exp: &Experiment) -> Result<Outcome, BenchError> {
    exp.validate()?;
    let n = exp.ps;
    let (a0, b0) = (matrix_a(n), matrix_b(n));
    let expected = serial(&a0, &b0, n);
    let a = Arc::new(SharedBuffer::new(a0));
    let b = Arc::new(SharedBuffer::new(b0));
    let c = Arc::new(SharedBuffer::new(vec![0.0; n * n]));
    let phase = Phase::of(exp, n);
    let blk = block_size(exp, n);

    let (x, y, z) = (a.clone(), b.clone(), c.clone());
    let body: LoopFn = Arc::new(move |rows| {
        // SAFETY: in a (rows), in b (all), out c (rows).
        let (a, b) = unsafe { (x.slice(0..x.len()), y.slice(0..y.len())) };
        let c = unsafe { z.slice_mut(rows.start * n..rows.end * n) };
        for (row, i) in c.chunks_mut(n).zip(rows) {
            product_row(a, b, n, i, row);
        }
    });
    let (times, trace) = timed_reps(
        exp,
        |_| {},
        |ctx, _| {
            spawn_phase(ctx, exp, phase, body.clone(), |rows| {
                let elems = rows.start * n..rows.end * n;
                let mut cl = vec![
                    a.region(elems.clone(), AccessMode::In),
                    c.region(elems, AccessMode::Out),
                ];
                cl.extend(whole(b.id(), n * n, blk * n, AccessMode::In, exp.deps));
                cl
            })
        },
    )?;
    // SAFETY: the runtime has returned; no task is alive.
    check_close(&unsafe { c.snapshot() }, &expected, 0.0)?;
    Ok(Outcome {
        row: ResultRow::from_times(exp, &times, 2.0 * (n as f64).powi(3)),
        trace,
    })
}
