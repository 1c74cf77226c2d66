//! Conjugate-gradient proxy in the spirit of HPCCG: a banded SPD matrix in
//! CSR form, row-block matvec and vector updates, and dot products reduced
//! through per-block partial sums that a regular task combines in block
//! order. Every repetition restarts from `x = 0` and runs `inner`
//! iterations; the result is bit-identical to [`serial`].

use std::ops::Range;
use std::sync::Arc;

use wstasks::{AccessMode, AccessRegion, DependenceMode, ObjectId, SharedBuffer, Task};

use super::Outcome;
use crate::driver::{
    block_size, blocks, check_close, span, spawn_phase, timed_reps, whole, LoopFn, Phase,
};
use crate::experiment::{BenchError, Experiment, ResultRow, Version};

pub const DIAGONAL: f64 = 4.5;

// slots of the scalar buffer
const RR: usize = 0;
const ALPHA: usize = 1;
const BETA: usize = 2;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Pentadiagonal matrix with 4.5 on the diagonal and -1 on the two
    /// bands either side: strictly diagonally dominant, hence SPD.
    pub fn banded(n: usize) -> Csr {
        let mut row_ptr = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for i in 0..n {
            for off in [-2isize, -1, 0, 1, 2] {
                let j = i as isize + off;
                if (0..n as isize).contains(&j) {
                    cols.push(j as usize);
                    vals.push(if off == 0 { DIAGONAL } else { -1.0 });
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1])
            .map(|k| self.vals[k] * v[self.cols[k]])
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a·b` as per-block partial sums of `ts` elements added in block order.
pub fn blocked_dot(a: &[f64], b: &[f64], ts: usize) -> f64 {
    blocks(a.len(), ts).map(|r| dot(&a[r.clone()], &b[r])).sum()
}

/// Iterate of the serial solver.
#[derive(Clone, Debug, PartialEq)]
pub struct CgState {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub rr: f64,
}

impl CgState {
    pub fn residual(&self) -> f64 {
        self.rr.sqrt()
    }
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Serial oracle: `iters` CG iterations on `A x = 1` from `x = 0`, with dot
/// products blocked by `ts`.
pub fn serial(a: &Csr, iters: usize, ts: usize) -> CgState {
    let n = a.n;
    let mut x = vec![0.0; n];
    let mut r = vec![1.0; n];
    let mut p = r.clone();
    let mut q = vec![0.0; n];
    let mut rr = blocked_dot(&r, &r, ts);
    for _ in 0..iters {
        for (i, qi) in q.iter_mut().enumerate() {
            *qi = a.row_dot(i, &p);
        }
        let alpha = safe_div(rr, blocked_dot(&p, &q, ts));
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rr_new = blocked_dot(&r, &r, ts);
        let beta = safe_div(rr_new, rr);
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    CgState { x, r, rr }
}

/// Clauses over `rows` of a vector written in blocks of `blk`.
fn rows_clauses(
    object: ObjectId,
    rows: Range<usize>,
    blk: usize,
    mode: AccessMode,
    deps: DependenceMode,
) -> Vec<AccessRegion> {
    match deps {
        DependenceMode::Region => vec![span(object, &rows, mode)],
        DependenceMode::Discrete => (rows.start..rows.end)
            .step_by(blk)
            .map(|s| AccessRegion::new(object, s, blk.min(rows.end - s), mode))
            .collect(),
    }
}

struct Vectors {
    x: Arc<SharedBuffer<f64>>,
    r: Arc<SharedBuffer<f64>>,
    p: Arc<SharedBuffer<f64>>,
    q: Arc<SharedBuffer<f64>>,
    partials: Arc<SharedBuffer<f64>>,
    scalars: Arc<SharedBuffer<f64>>,
}

pub fn run(exp: &Experiment) -> Result<Outcome, BenchError> {
    exp.validate()?;
    let n = exp.ps;
    let ts = exp.ts;
    let nb = n.div_ceil(ts);
    let mat = Arc::new(Csr::banded(n));
    let v = Vectors {
        x: Arc::new(SharedBuffer::new(vec![0.0; n])),
        r: Arc::new(SharedBuffer::new(vec![0.0; n])),
        p: Arc::new(SharedBuffer::new(vec![0.0; n])),
        q: Arc::new(SharedBuffer::new(vec![0.0; n])),
        partials: Arc::new(SharedBuffer::new(vec![0.0; nb])),
        scalars: Arc::new(SharedBuffer::new(vec![0.0; 3])),
    };
    let deps = exp.deps;
    let blk = block_size(exp, n);
    let vec_phase = Phase::of(exp, n);
    // partial sums are always per TS block; the phase runs over block indices
    let dot_phase = Phase {
        n: nb,
        block: if exp.version == Version::Tasks { 1 } else { nb },
        chunk: Some(1),
        nowait: false,
        priority: false,
    };
    let rows_of = move |bi: Range<usize>| bi.start * ts..(bi.end * ts).min(n);
    let scal = |mode| AccessRegion::new(v.scalars.id(), 0, 3, mode);
    let all_partials = |mode| whole(v.partials.id(), nb, dot_phase.block, mode, deps);

    // SAFETY (all bodies below): each body touches exactly what the clauses
    // spawned with it declare.
    let (m, p, q) = (mat.clone(), v.p.clone(), v.q.clone());
    let matvec: LoopFn = Arc::new(move |rows| unsafe {
        let p = p.slice(0..p.len());
        for (qi, i) in q.slice_mut(rows.clone()).iter_mut().zip(rows) {
            *qi = m.row_dot(i, p);
        }
    });
    let partial_dot = |a: &Arc<SharedBuffer<f64>>, b: &Arc<SharedBuffer<f64>>| -> LoopFn {
        let (a, b, out) = (a.clone(), b.clone(), v.partials.clone());
        Arc::new(move |bis: Range<usize>| unsafe {
            for bi in bis {
                let rows = rows_of(bi..bi + 1);
                out.slice_mut(bi..bi + 1)[0] = dot(a.slice(rows.clone()), b.slice(rows));
            }
        })
    };
    let dot_pq = partial_dot(&v.p, &v.q);
    let dot_rr = partial_dot(&v.r, &v.r);
    let (x, r, p, q, s) = (
        v.x.clone(),
        v.r.clone(),
        v.p.clone(),
        v.q.clone(),
        v.scalars.clone(),
    );
    let update_xr: LoopFn = Arc::new(move |rows| unsafe {
        let alpha = s.slice(ALPHA..ALPHA + 1)[0];
        let (p, q) = (p.slice(rows.clone()), q.slice(rows.clone()));
        let (x, r) = (x.slice_mut(rows.clone()), r.slice_mut(rows));
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
    });
    let (r, p, s) = (v.r.clone(), v.p.clone(), v.scalars.clone());
    let update_p: LoopFn = Arc::new(move |rows| unsafe {
        let beta = s.slice(BETA..BETA + 1)[0];
        let r = r.slice(rows.clone());
        for (pi, ri) in p.slice_mut(rows).iter_mut().zip(r) {
            *pi = ri + beta * *pi;
        }
    });
    let reduce = |second: bool| {
        let (partials, s) = (v.partials.clone(), v.scalars.clone());
        let mut task = Task::new(move |_| unsafe {
            let sum: f64 = partials.slice(0..partials.len()).iter().sum();
            let s = s.slice_mut(0..3);
            if second {
                s[BETA] = safe_div(sum, s[RR]);
                s[RR] = sum;
            } else {
                s[ALPHA] = safe_div(s[RR], sum);
            }
        })
        .access(scal(AccessMode::InOut));
        for c in all_partials(AccessMode::In) {
            task = task.access(c);
        }
        task
    };

    use AccessMode::{In, InOut, Out};
    let reset = |_| unsafe {
        // SAFETY: called between repetitions, when no task is alive.
        v.x.slice_mut(0..n).fill(0.0);
        v.r.slice_mut(0..n).fill(1.0);
        v.p.slice_mut(0..n).fill(1.0);
        v.scalars.slice_mut(0..3)[RR] = blocked_dot(v.r.slice(0..n), v.r.slice(0..n), ts);
    };
    let spawn_err = |e: wstasks::SpawnError| BenchError::Config(e.to_string());
    let (times, trace) = timed_reps(exp, reset, |ctx, _| {
        for _ in 0..exp.inner {
            spawn_phase(ctx, exp, vec_phase, matvec.clone(), |rows| {
                let mut c = whole(v.p.id(), n, blk, In, deps);
                c.push(span(v.q.id(), &rows, Out));
                c
            })?;
            spawn_phase(ctx, exp, dot_phase, dot_pq.clone(), |bis| {
                let rows = rows_of(bis.clone());
                let mut c = rows_clauses(v.p.id(), rows.clone(), blk, In, deps);
                c.extend(rows_clauses(v.q.id(), rows, blk, In, deps));
                c.push(span(v.partials.id(), &bis, Out));
                c
            })?;
            ctx.spawn(reduce(false)).map_err(spawn_err)?;
            spawn_phase(ctx, exp, vec_phase, update_xr.clone(), |rows| {
                vec![
                    scal(In),
                    span(v.p.id(), &rows, In),
                    span(v.q.id(), &rows, In),
                    span(v.x.id(), &rows, InOut),
                    span(v.r.id(), &rows, InOut),
                ]
            })?;
            spawn_phase(ctx, exp, dot_phase, dot_rr.clone(), |bis| {
                let mut c = rows_clauses(v.r.id(), rows_of(bis.clone()), blk, In, deps);
                c.push(span(v.partials.id(), &bis, Out));
                c
            })?;
            ctx.spawn(reduce(true)).map_err(spawn_err)?;
            spawn_phase(ctx, exp, vec_phase, update_p.clone(), |rows| {
                vec![
                    scal(In),
                    span(v.r.id(), &rows, In),
                    span(v.p.id(), &rows, InOut),
                ]
            })?;
        }
        Ok(())
    })?;

    let expected = serial(&mat, exp.inner, ts);
    // SAFETY: the runtime has returned; no task is alive.
    unsafe {
        check_close(&v.x.snapshot(), &expected.x, 0.0)?;
        check_close(&v.r.snapshot(), &expected.r, 0.0)?;
        check_close(&v.scalars.snapshot()[RR..RR + 1], &[expected.rr], 0.0)?;
    }
    let flops = (2 * mat.nnz() + 10 * n) as f64 * exp.inner as f64;
    Ok(Outcome {
        row: ResultRow::from_times(exp, &times, flops),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_matrix_is_symmetric_and_dominant() {
        let a = Csr::banded(10);
        let dense = |i: usize, j: usize| {
            (a.row_ptr[i]..a.row_ptr[i + 1])
                .find(|&k| a.cols[k] == j)
                .map_or(0.0, |k| a.vals[k])
        };
        for i in 0..10 {
            let off: f64 = (0..10).filter(|&j| j != i).map(|j| dense(i, j).abs()).sum();
            assert!(dense(i, i) > off);
            for j in 0..10 {
                assert_eq!(dense(i, j), dense(j, i));
            }
        }
        assert_eq!(a.nnz(), 10 * 5 - 6);
    }

    #[test]
    fn serial_converges_on_64() {
        let a = Csr::banded(64);
        let s = serial(&a, 64, 16);
        assert!(s.residual() < 1e-8, "residual {}", s.residual());
        // the recurrence residual agrees with the true one
        let true_r: Vec<f64> = (0..64).map(|i| 1.0 - a.row_dot(i, &s.x)).collect();
        assert!(dot(&true_r, &true_r).sqrt() < 1e-7);
    }

    #[test]
    fn blocked_dot_orders_by_block() {
        let a = [1e17, 1.0, -1e17, 1.0];
        let ones = [1.0; 4];
        // blocks of 2: (1e17 + 1) + (-1e17 + 1) = 0 in floating point
        assert_eq!(blocked_dot(&a, &ones, 2), 0.0);
        assert_eq!(blocked_dot(&a, &ones, 4), 1.0);
    }
}
