//! One blocked n-body time step per repetition: a force phase that reads
//! every position and writes the accelerations of its block, then an update
//! phase over the same blocks.

use std::sync::Arc;

use wstasks::{AccessMode, SharedBuffer};

use super::Outcome;
use crate::driver::{block_size, check_close, span, spawn_phase, timed_reps, whole, LoopFn, Phase};
use crate::experiment::{BenchError, Experiment, ResultRow};

pub type Vec3 = [f64; 3];

pub const DT: f64 = 1e-3;
const SOFTENING: f64 = 1e-9;

/// Deterministic initial positions on a slightly irregular lattice.
pub fn initial_positions(n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let f = i as f64;
            [f.sin() * 10.0, (f * 0.7).cos() * 10.0, (i % 7) as f64]
        })
        .collect()
}

/// Acceleration of body `i` from all other bodies (unit masses), summed in
/// index order.
pub fn acceleration(pos: &[Vec3], i: usize) -> Vec3 {
    let p = pos[i];
    let mut acc = [0.0; 3];
    for (j, q) in pos.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + SOFTENING;
        let inv = 1.0 / (r2 * r2.sqrt());
        for k in 0..3 {
            acc[k] += d[k] * inv;
        }
    }
    acc
}

fn integrate(pos: &mut Vec3, vel: &mut Vec3, acc: &Vec3) {
    for k in 0..3 {
        vel[k] += acc[k] * DT;
        pos[k] += vel[k] * DT;
    }
}

/// Serial oracle: `steps` time steps from the initial state.
pub fn serial(n: usize, steps: usize) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut pos = initial_positions(n);
    let mut vel = vec![[0.0; 3]; n];
    for _ in 0..steps {
        let acc: Vec<Vec3> = (0..n).map(|i| acceleration(&pos, i)).collect();
        for i in 0..n {
            integrate(&mut pos[i], &mut vel[i], &acc[i]);
        }
    }
    (pos, vel)
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

pub fn run(exp: &Experiment) -> Result<Outcome, BenchError> {
    exp.validate()?;
    let n = exp.ps;
    let pos = Arc::new(SharedBuffer::new(initial_positions(n)));
    let vel = Arc::new(SharedBuffer::new(vec![[0.0; 3]; n]));
    let acc = Arc::new(SharedBuffer::new(vec![[0.0; 3]; n]));
    let phase = Phase::of(exp, n);
    let blk = block_size(exp, n);

    let (p, a) = (pos.clone(), acc.clone());
    let force: LoopFn = Arc::new(move |r| {
        // SAFETY: in pos (all) / out acc over `r`.
        let (pos, acc) = unsafe { (p.slice(0..p.len()), a.slice_mut(r.clone())) };
        for (slot, i) in acc.iter_mut().zip(r) {
            *slot = acceleration(pos, i);
        }
    });
    let (p, v, a) = (pos.clone(), vel.clone(), acc.clone());
    let update: LoopFn = Arc::new(move |r| {
        // SAFETY: inout pos, vel / in acc over `r`.
        let (pos, vel, acc) =
            unsafe { (p.slice_mut(r.clone()), v.slice_mut(r.clone()), a.slice(r)) };
        for ((p, v), a) in pos.iter_mut().zip(vel).zip(acc) {
            integrate(p, v, a);
        }
    });

    let (times, trace) = timed_reps(
        exp,
        |_| {},
        |ctx, _| {
            spawn_phase(ctx, exp, phase, force.clone(), |r| {
                let mut c = whole(pos.id(), n, blk, AccessMode::In, exp.deps);
                c.push(span(acc.id(), &r, AccessMode::Out));
                c
            })?;
            spawn_phase(ctx, exp, phase, update.clone(), |r| {
                vec![
                    span(pos.id(), &r, AccessMode::InOut),
                    span(vel.id(), &r, AccessMode::InOut),
                    span(acc.id(), &r, AccessMode::In),
                ]
            })
        },
    )?;
    let (ep, ev) = serial(n, exp.reps);
    // SAFETY: the runtime has returned; no task is alive.
    unsafe {
        check_close(&flatten(&pos.snapshot()), &flatten(&ep), 0.0)?;
        check_close(&flatten(&vel.snapshot()), &flatten(&ev), 0.0)?;
    }
    let interactions = (n * n.saturating_sub(1)) as f64;
    Ok(Outcome {
        row: ResultRow::from_times(exp, &times, interactions),
        trace,
    })
}
