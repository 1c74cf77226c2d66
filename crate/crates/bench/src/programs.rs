//! The pipeline demonstration: `for i in 0..2 { A_i; B_i; C_i }` where each
//! of A, B, C is a worksharing task over its own array (`inout a`, `inout b`,
//! `inout c`). One iteration of every region is much slower than the rest,
//! so a worker usually runs out of chunks while a teammate is still busy and
//! moves on to the next region before the previous one is released.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use wstasks::{run, DependenceMode, ExecutionTrace, RuntimeConfig, SharedBuffer, Task};

use crate::experiment::BenchError;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub workers: usize,
    pub team_size: usize,
    /// Outer iterations (each spawns the three regions).
    pub iterations: usize,
    /// Loop iterations per region.
    pub region_len: usize,
    pub chunksize: usize,
    pub light: Duration,
    /// Duration of the first iteration of every region.
    pub heavy: Duration,
    pub deps: DependenceMode,
    pub pin: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workers: 4,
            team_size: 2,
            iterations: 2,
            region_len: 16,
            chunksize: 1,
            light: Duration::from_micros(100),
            heavy: Duration::from_millis(4),
            deps: DependenceMode::Region,
            pin: false,
        }
    }
}

/// Runs the program with tracing on and returns the trace after checking
/// that every element of every array was updated once per outer iteration.
pub fn pipeline(cfg: &PipelineConfig) -> Result<ExecutionTrace, BenchError> {
    let arrays: Vec<Arc<SharedBuffer<u64>>> = (0..3)
        .map(|_| Arc::new(SharedBuffer::new(vec![0; cfg.region_len])))
        .collect();
    let config = RuntimeConfig::with_workers(cfg.workers)
        .team_size(cfg.team_size)
        .socket_size(cfg.workers)
        .dependence_mode(cfg.deps)
        .trace(true)
        .pin(cfg.pin);
    let mut spawn_error = None;
    let trace = run(config, |ctx| {
        for _ in 0..cfg.iterations {
            for arr in &arrays {
                let (buf, light, heavy) = (arr.clone(), cfg.light, cfg.heavy);
                let task = Task::worksharing(0..cfg.region_len, move |r, _| {
                    thread::sleep(if r.start == 0 {
                        heavy + light * (r.len() as u32 - 1)
                    } else {
                        light * r.len() as u32
                    });
                    // SAFETY: the region's inout clause covers the whole array.
                    unsafe { buf.slice_mut(r) }.iter_mut().for_each(|x| *x += 1);
                })
                .chunksize(cfg.chunksize)
                .inout(arr.id(), 0, cfg.region_len);
                if let Err(e) = ctx.spawn(task) {
                    spawn_error = Some(e);
                    return;
                }
            }
        }
    })?;
    if let Some(e) = spawn_error {
        return Err(BenchError::Config(e.to_string()));
    }
    for arr in &arrays {
        // SAFETY: the runtime has returned; no task is alive.
        let values = unsafe { arr.snapshot() };
        if let Some(i) = values.iter().position(|&v| v != cfg.iterations as u64) {
            return Err(BenchError::ValidationFailed {
                index: i,
                expected: cfg.iterations as f64,
                actual: values[i] as f64,
            });
        }
    }
    Ok(trace)
}
