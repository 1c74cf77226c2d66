//! Benchmark harness for the `wstasks` runtime: the daxpy granularity
//! benchmark, stream, n-body, matmul and a CG proxy in five versions each,
//! parameter sweeps writing a results CSV, and the barrier-free pipeline
//! demonstration program.
//!
//! The `for_static`, `for_dynamic` and `for_guided` versions are native
//! analogues of parallel-for loops: one worksharing task spanning every
//! worker with the corresponding chunk policy.

mod driver;
pub mod experiment;
pub mod kernels;
pub mod programs;
pub mod sweep;

pub use experiment::{BenchError, Benchmark, Experiment, ResultRow, Version};
pub use kernels::{run_benchmark, Outcome};
