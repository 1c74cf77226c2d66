use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use wstasks::metrics::{detect_pipelining, export_dag, utilization, write_dag_csv};
use wstasks::{DependenceMode, ExecutionTrace};
use wstasks_bench::experiment::{
    write_results, BenchError, Benchmark, Experiment, ResultRow, Version,
};
use wstasks_bench::programs::{pipeline, PipelineConfig};
use wstasks_bench::run_benchmark;
use wstasks_bench::sweep::{parse_points, sweep, SweepKind};

#[derive(Parser)]
#[command(
    name = "wsbench",
    version,
    about = "Benchmarks for the wstasks runtime"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark configuration.
    Bench {
        benchmark: Benchmark,
        #[command(flatten)]
        params: Params,
        #[arg(long, default_value = "tasks")]
        version: Version,
        /// Write the execution trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run one benchmark over a list of points and versions.
    Sweep {
        kind: SweepKind,
        #[arg(long, default_value = "daxpy")]
        benchmark: Benchmark,
        #[command(flatten)]
        params: Params,
        /// Comma-separated points, e.g. `256,1K,16K`.
        #[arg(long, default_value = "")]
        points: String,
        /// Comma-separated versions.
        #[arg(long, value_delimiter = ',', default_value = "tasks,worksharing")]
        versions: Vec<Version>,
    },
    /// Run the three-region pipeline program and report overlaps.
    Pipeline {
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 2)]
        team_size: usize,
        #[arg(long)]
        pin: bool,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Summarize a trace CSV: utilization, pipelining, optional DAG export.
    Analyze {
        trace: PathBuf,
        /// Write the dependence DAG as `predecessor,successor` CSV.
        #[arg(long)]
        dag: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Params {
    #[arg(long, default_value = "16K", value_parser = parse_size)]
    ps: usize,
    #[arg(long, default_value = "1K", value_parser = parse_size)]
    ts: usize,
    #[arg(long, value_parser = parse_size)]
    cs: Option<usize>,
    #[arg(long)]
    team_size: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    socket_size: Option<usize>,
    #[arg(long, default_value = "region")]
    deps: DependenceMode,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// daxpy: updates per element per rep; cg: iterations per rep.
    #[arg(long, default_value_t = 1)]
    inner: usize,
    #[arg(long)]
    pin: bool,
    /// Results CSV path; stdout when absent.
    #[arg(long)]
    results: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<usize, String> {
    match parse_points(s)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(format!("expected one size, got `{s}`")),
    }
}

impl Params {
    fn experiment(&self, benchmark: Benchmark, version: Version) -> Experiment {
        let mut e = Experiment::new(benchmark, version, self.ps, self.ts);
        e.cs = self.cs;
        e.team_size = self.team_size;
        if let Some(w) = self.workers {
            e.workers = w;
        }
        e.socket_size = self.socket_size;
        e.deps = self.deps;
        e.reps = self.reps;
        e.inner = self.inner;
        e.pin = self.pin;
        e
    }

    fn emit(&self, rows: &[ResultRow]) -> Result<(), BenchError> {
        match &self.results {
            Some(path) => write_results(rows, File::create(path)?),
            None => write_results(rows, io::stdout().lock()),
        }
    }
}

fn save_trace(trace: &ExecutionTrace, path: &Option<PathBuf>) -> Result<(), BenchError> {
    if let Some(p) = path {
        trace
            .save(p)
            .map_err(|e| BenchError::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Bench {
            benchmark,
            params,
            version,
            trace,
        } => {
            let mut exp = params.experiment(benchmark, version);
            exp.trace = trace.is_some();
            let outcome = run_benchmark(&exp)?;
            save_trace(&outcome.trace, &trace)?;
            params.emit(&[outcome.row])?;
        }
        Command::Sweep {
            kind,
            benchmark,
            params,
            points,
            versions,
        } => {
            let points = parse_points(&points).map_err(BenchError::Config)?;
            let base = params.experiment(
                benchmark,
                versions.first().copied().unwrap_or(Version::Tasks),
            );
            let rows = sweep(kind, &base, &points, &versions)?;
            params.emit(&rows)?;
        }
        Command::Pipeline {
            workers,
            team_size,
            pin,
            trace,
        } => {
            let cfg = PipelineConfig {
                workers,
                team_size,
                pin,
                ..PipelineConfig::default()
            };
            let t = pipeline(&cfg)?;
            save_trace(&t, &trace)?;
            let overlaps = detect_pipelining(&t);
            println!("overlaps: {}", overlaps.len());
            for o in overlaps {
                println!(
                    "worker {} started {} before {} was released",
                    o.worker.0, o.next, o.previous
                );
            }
        }
        Command::Analyze { trace, dag } => {
            let t = ExecutionTrace::load(&trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            let util = utilization(&t)?;
            println!("worker,utilization");
            for (w, u) in &util {
                println!("{},{u:.4}", w.0);
            }
            println!("pipelining overlaps: {}", detect_pipelining(&t).len());
            if let Some(path) = dag {
                write_dag_csv(&export_dag(&t), File::create(&path)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<BenchError>()
                .map_or(1, BenchError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
