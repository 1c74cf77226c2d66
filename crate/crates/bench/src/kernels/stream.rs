//! STREAM-style loops: copy `c = a`, scale `b = q*c`, add `a = a + b`,
//! triad `c = a + q*b`. The last loop leaves `c == a + q*b` element-wise.

use std::sync::Arc;

use wstasks::{AccessMode, SharedBuffer};

use super::Outcome;
use crate::driver::{check_close, span, spawn_phase, timed_reps, LoopFn, Phase};
use crate::experiment::{BenchError, Experiment, ResultRow};

pub const SCALAR: f64 = 0.5;
/// Bytes moved per element per repetition over the four loops.
pub const BYTES_PER_ELEMENT: usize = 16 + 16 + 24 + 24;

pub fn initial(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (vec![1.0; n], vec![2.0; n], vec![0.0; n])
}

/// Serial oracle: `reps` repetitions of the four loops.
pub fn serial(n: usize, reps: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mut a, mut b, mut c) = initial(n);
    for _ in 0..reps {
        c.copy_from_slice(&a);
        b.iter_mut().zip(&c).for_each(|(b, c)| *b = SCALAR * c);
        a.iter_mut().zip(&b).for_each(|(a, b)| *a += b);
        c.iter_mut()
            .zip(a.iter().zip(&b))
            .for_each(|(c, (a, b))| *c = a + SCALAR * b);
    }
    (a, b, c)
}

pub fn run(exp: &Experiment) -> Result<Outcome, BenchError> {
    exp.validate()?;
    let n = exp.ps;
    let (a0, b0, c0) = initial(n);
    let a = Arc::new(SharedBuffer::new(a0));
    let b = Arc::new(SharedBuffer::new(b0));
    let c = Arc::new(SharedBuffer::new(c0));
    let phase = Phase {
        nowait: true,
        ..Phase::of(exp, n)
    };

    // SAFETY (all four bodies): each loop's clauses cover exactly the
    // elements its body touches in `r`.
    let (x, y) = (a.clone(), c.clone());
    let copy: LoopFn = Arc::new(move |r| unsafe {
        y.slice_mut(r.clone()).copy_from_slice(x.slice(r));
    });
    let (x, y) = (c.clone(), b.clone());
    let scale: LoopFn = Arc::new(move |r| unsafe {
        let c = x.slice(r.clone());
        y.slice_mut(r)
            .iter_mut()
            .zip(c)
            .for_each(|(b, c)| *b = SCALAR * c);
    });
    let (x, y) = (b.clone(), a.clone());
    let add: LoopFn = Arc::new(move |r| unsafe {
        let b = x.slice(r.clone());
        y.slice_mut(r).iter_mut().zip(b).for_each(|(a, b)| *a += b);
    });
    let (x, y, z) = (a.clone(), b.clone(), c.clone());
    let triad: LoopFn = Arc::new(move |r| unsafe {
        let (a, b) = (x.slice(r.clone()), y.slice(r.clone()));
        z.slice_mut(r)
            .iter_mut()
            .zip(a.iter().zip(b))
            .for_each(|(c, (a, b))| *c = a + SCALAR * b);
    });

    use AccessMode::{In, InOut, Out};
    let loops = [
        (copy, [(a.id(), In), (c.id(), Out)].to_vec()),
        (scale, [(c.id(), In), (b.id(), Out)].to_vec()),
        (add, [(b.id(), In), (a.id(), InOut)].to_vec()),
        (triad, [(a.id(), In), (b.id(), In), (c.id(), Out)].to_vec()),
    ];
    let (times, trace) = timed_reps(
        exp,
        |_| {},
        |ctx, _| {
            for (body, clauses) in &loops {
                spawn_phase(ctx, exp, phase, body.clone(), |r| {
                    clauses.iter().map(|&(o, m)| span(o, &r, m)).collect()
                })?;
            }
            Ok(())
        },
    )?;
    let (ea, eb, ec) = serial(n, exp.reps);
    // SAFETY: the runtime has returned; no task is alive.
    unsafe {
        check_close(&a.snapshot(), &ea, 0.0)?;
        check_close(&b.snapshot(), &eb, 0.0)?;
        check_close(&c.snapshot(), &ec, 0.0)?;
    }
    Ok(Outcome {
        row: ResultRow::from_times(exp, &times, (BYTES_PER_ELEMENT * n) as f64),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_triad_relation() {
        let (a, b, c) = serial(8, 3);
        for i in 0..8 {
            assert_eq!(c[i], a[i] + SCALAR * b[i]);
        }
        // one repetition by hand: c=1, b=0.5, a=1.5, c=1.75
        let (a, b, c) = serial(1, 1);
        assert_eq!((a[0], b[0], c[0]), (1.5, 0.5, 1.75));
    }
}
