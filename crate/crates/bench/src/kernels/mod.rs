//! Benchmark kernels. Each runs the chosen version inside one runtime
//! instance, validates its output against a serial oracle and only then
//! reports timings.

pub mod cg;
pub mod daxpy;
pub mod matmul;
pub mod nbody;
pub mod regions;
pub mod stream;

use wstasks::ExecutionTrace;

use crate::experiment::{BenchError, Benchmark, Experiment, ResultRow};

/// A validated run: its result row and the execution trace (empty unless
/// tracing was requested).
#[derive(Debug)]
pub struct Outcome {
    pub row: ResultRow,
    pub trace: ExecutionTrace,
}

pub fn run_benchmark(exp: &Experiment) -> Result<Outcome, BenchError> {
    match exp.benchmark {
        Benchmark::Daxpy => daxpy::run(exp),
        Benchmark::Stream => stream::run(exp),
        Benchmark::Nbody => nbody::run(exp),
        Benchmark::Matmul => matmul::run(exp),
        Benchmark::Cg => cg::run(exp),
        Benchmark::Regions => regions::run(exp),
    }
}
