use wstasks::metrics::{dependence_violations, export_dag};
use wstasks::{DependenceMode, EventKind};
use wstasks_bench::kernels::{cg, daxpy, stream};
use wstasks_bench::{run_benchmark, BenchError, Benchmark, Experiment, Version};

fn exp(b: Benchmark, v: Version, ps: usize, ts: usize) -> Experiment {
    let mut e = Experiment::new(b, v, ps, ts);
    e.workers = 4;
    e.team_size = Some(2);
    e.reps = 2;
    e
}

/// Problem and task sizes giving a handful of blocks for each benchmark.
fn sizes(b: Benchmark) -> (usize, usize) {
    match b {
        Benchmark::Nbody => (96, 16),
        Benchmark::Matmul => (24, 5),
        Benchmark::Cg => (200, 32),
        _ => (1000, 96),
    }
}

#[test]
fn every_version_validates_against_its_serial_oracle() {
    for b in [
        Benchmark::Daxpy,
        Benchmark::Stream,
        Benchmark::Nbody,
        Benchmark::Matmul,
        Benchmark::Cg,
    ] {
        for v in Version::ALL {
            for deps in [DependenceMode::Discrete, DependenceMode::Region] {
                let (ps, ts) = sizes(b);
                let mut e = exp(b, v, ps, ts);
                e.deps = deps;
                e.inner = 3;
                e.trace = true;
                let out = run_benchmark(&e).unwrap_or_else(|err| panic!("{b} {v} {deps}: {err}"));
                assert!(out.row.throughput > 0.0);
                assert!(out.row.min_s <= out.row.mean_s && out.row.mean_s <= out.row.max_s);
                assert!(
                    dependence_violations(&out.trace).is_empty(),
                    "{b} {v} {deps}"
                );
            }
        }
    }
}

#[test]
fn single_block_daxpy_gives_seven() {
    let mut e = exp(Benchmark::Daxpy, Version::Tasks, 16, 16);
    e.reps = 1;
    run_benchmark(&e).unwrap();
    assert_eq!(daxpy::expected(1), 7.0);
}

#[test]
fn daxpy_blocks_are_independent() {
    let mut e = exp(Benchmark::Daxpy, Version::Tasks, 16 * 1024, 1024);
    e.reps = 1;
    e.trace = true;
    let out = run_benchmark(&e).unwrap();
    assert_eq!(out.trace.count(EventKind::TaskStart), 16);
    assert!(export_dag(&out.trace).is_empty());
}

#[test]
fn stream_spawns_one_task_per_loop_when_ts_is_ps() {
    let mut e = exp(Benchmark::Stream, Version::Tasks, 1024, 1024);
    e.reps = 3;
    e.trace = true;
    let out = run_benchmark(&e).unwrap();
    assert_eq!(out.trace.count(EventKind::Spawn), 4 * 3);
    let (a, b, c) = stream::serial(1024, 3);
    for i in 0..1024 {
        assert_eq!(c[i], a[i] + stream::SCALAR * b[i]);
    }
}

#[test]
fn static_stream_chains_without_dependences() {
    let mut e = exp(Benchmark::Stream, Version::ForStatic, 4096, 4096);
    e.trace = true;
    let out = run_benchmark(&e).unwrap();
    assert!(export_dag(&out.trace).is_empty());
    assert_eq!(out.trace.count(EventKind::Release), 4 * e.reps);
}

#[test]
fn cg_reaches_tolerance_on_64_rows() {
    for v in [Version::Tasks, Version::Worksharing, Version::ForDynamic] {
        let mut e = exp(Benchmark::Cg, v, 64, 16);
        e.inner = 64;
        e.reps = 1;
        run_benchmark(&e).unwrap();
    }
    let s = cg::serial(&cg::Csr::banded(64), 64, 16);
    assert!(s.residual() < 1e-8);
}

#[test]
fn region_program_serializes_only_under_region_dependences() {
    for (deps, edges) in [(DependenceMode::Region, 1), (DependenceMode::Discrete, 0)] {
        let mut e = exp(Benchmark::Regions, Version::Tasks, 8, 2);
        e.deps = deps;
        e.reps = 1;
        e.trace = true;
        let out = run_benchmark(&e).unwrap();
        assert_eq!(export_dag(&out.trace).len(), edges);
    }
}

#[test]
fn invalid_experiments_are_rejected_before_running() {
    let e = exp(Benchmark::Daxpy, Version::Tasks, 0, 16);
    assert!(matches!(run_benchmark(&e), Err(BenchError::Config(_))));
    let mut e = exp(Benchmark::Daxpy, Version::Worksharing, 64, 16);
    e.cs = Some(32);
    assert!(matches!(run_benchmark(&e), Err(BenchError::Config(_))));
}
