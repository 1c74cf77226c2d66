//! Experiment parameters, result rows and the results CSV.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wstasks::{default_chunksize, ChunkPolicy, DependenceMode, RunError, RuntimeConfig};

pub const RESULTS_HEADER: &str =
    "benchmark,version,ps,ts,cs,n,workers,reps,mean_s,min_s,max_s,throughput,work_units";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed at index {index}: expected {expected}, got {actual}")]
    ValidationFailed {
        index: usize,
        expected: f64,
        actual: f64,
    },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("results csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BenchError {
    /// Process exit code for the CLI: 2 for validation failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::ValidationFailed { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Daxpy,
    Stream,
    Nbody,
    Matmul,
    Cg,
    /// Two tasks over nested regions of one array; shows the difference
    /// between discrete and region dependences.
    Regions,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Benchmark::Daxpy,
        Benchmark::Stream,
        Benchmark::Nbody,
        Benchmark::Matmul,
        Benchmark::Cg,
        Benchmark::Regions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Daxpy => "daxpy",
            Benchmark::Stream => "stream",
            Benchmark::Nbody => "nbody",
            Benchmark::Matmul => "matmul",
            Benchmark::Cg => "cg",
            Benchmark::Regions => "regions",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}`"))
    }
}

/// Code shape of a benchmark run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Version {
    /// One worksharing region over all workers, equal static slices.
    ForStatic,
    /// One worksharing region over all workers, one TS chunk per request.
    ForDynamic,
    /// One worksharing region over all workers, guided batches of TS chunks.
    ForGuided,
    /// One regular task per TS block.
    Tasks,
    /// One worksharing task per TS block, CS chunks, teams of N.
    Worksharing,
}

impl Version {
    pub const ALL: [Version; 5] = [
        Version::ForStatic,
        Version::ForDynamic,
        Version::ForGuided,
        Version::Tasks,
        Version::Worksharing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Version::ForStatic => "for_static",
            Version::ForDynamic => "for_dynamic",
            Version::ForGuided => "for_guided",
            Version::Tasks => "tasks",
            Version::Worksharing => "worksharing",
        }
    }

    /// Chunk policy of the single region used by the `for_*` shapes.
    pub fn loop_policy(self) -> Option<ChunkPolicy> {
        match self {
            Version::ForStatic => Some(ChunkPolicy::Static),
            Version::ForDynamic => Some(ChunkPolicy::Dynamic),
            Version::ForGuided => Some(ChunkPolicy::Guided),
            _ => None,
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Version {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown version `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub benchmark: Benchmark,
    pub version: Version,
    /// Problem size: loop iterations (bodies for nbody, matrix order for
    /// matmul, rows for cg).
    pub ps: usize,
    /// Block (task) size in iterations.
    pub ts: usize,
    /// Chunksize of worksharing tasks; `None` uses TS/N.
    pub cs: Option<usize>,
    /// Team size; `None` is one team per socket.
    pub team_size: Option<usize>,
    pub workers: usize,
    pub socket_size: Option<usize>,
    pub reps: usize,
    pub deps: DependenceMode,
    /// daxpy: updates per element per rep; cg: iterations per rep.
    pub inner: usize,
    pub pin: bool,
    pub trace: bool,
}

impl Experiment {
    pub fn new(benchmark: Benchmark, version: Version, ps: usize, ts: usize) -> Self {
        Experiment {
            benchmark,
            version,
            ps,
            ts,
            cs: None,
            team_size: None,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            socket_size: None,
            reps: 5,
            deps: DependenceMode::Region,
            inner: 1,
            pin: false,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.ps == 0 || self.ts == 0 {
            return bad(format!(
                "PS={} and TS={} must be positive",
                self.ps, self.ts
            ));
        }
        if self.ts > self.ps {
            return bad(format!("TS={} must not exceed PS={}", self.ts, self.ps));
        }
        if let Some(cs) = self.cs {
            if cs == 0 {
                return bad("chunksize must be positive".into());
            }
            if cs > self.ts {
                return bad(format!(
                    "chunksize CS={cs} must be lower or equal than TS={}",
                    self.ts
                ));
            }
        }
        if self.reps == 0 {
            return bad("at least one repetition is required".into());
        }
        if self.inner == 0 {
            return bad("inner work count must be positive".into());
        }
        self.runtime_config()
            .validate()
            .or_else(|e| bad(e.to_string()))
    }

    /// Runtime configuration for this experiment. The `for_*` shapes use a
    /// single team spanning every worker.
    pub fn runtime_config(&self) -> RuntimeConfig {
        let mut cfg = RuntimeConfig::with_workers(self.workers)
            .dependence_mode(self.deps)
            .trace(self.trace)
            .pin(self.pin);
        if self.version.loop_policy().is_some() {
            cfg = cfg.team_size(self.workers).socket_size(self.workers);
        } else {
            cfg.team_size = self.team_size;
            cfg.socket_size = self.socket_size;
        }
        cfg
    }

    /// Size of the team that runs worksharing regions.
    pub fn effective_team_size(&self) -> usize {
        let cfg = self.runtime_config();
        cfg.team_size
            .unwrap_or_else(|| cfg.effective_socket_size())
            .min(self.workers)
    }

    /// Chunksize actually in effect for the version.
    pub fn effective_cs(&self) -> usize {
        match self.version {
            Version::ForStatic => default_chunksize(self.ps, self.workers),
            Version::ForDynamic | Version::ForGuided => self.cs.unwrap_or(self.ts),
            Version::Tasks => self.ts,
            Version::Worksharing => self
                .cs
                .unwrap_or_else(|| default_chunksize(self.ts, self.effective_team_size())),
        }
    }

    pub fn work_units(&self) -> f64 {
        work_units(self.ps, self.ts, self.workers)
    }
}

/// Work units per worker: `(PS/TS)/workers`.
pub fn work_units(ps: usize, ts: usize, workers: usize) -> f64 {
    (ps as f64 / ts as f64) / workers as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub benchmark: String,
    pub version: String,
    pub ps: usize,
    pub ts: usize,
    pub cs: usize,
    pub n: usize,
    pub workers: usize,
    pub reps: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub throughput: f64,
    pub work_units: f64,
}

impl ResultRow {
    /// Summarizes per-repetition times. `work_per_rep` is the throughput
    /// numerator (iterations, bytes, interactions or flops).
    pub fn from_times(exp: &Experiment, times: &[f64], work_per_rep: f64) -> ResultRow {
        let n = times.len().max(1) as f64;
        let mean = times.iter().sum::<f64>() / n;
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let max = times.iter().copied().fold(0.0, f64::max);
        // guard against clocks too coarse to see a very short repetition
        let mean = mean.max(f64::MIN_POSITIVE);
        ResultRow {
            benchmark: exp.benchmark.to_string(),
            version: exp.version.to_string(),
            ps: exp.ps,
            ts: exp.ts,
            cs: exp.effective_cs(),
            n: exp.effective_team_size(),
            workers: exp.workers,
            reps: exp.reps,
            mean_s: mean,
            min_s: min.min(mean),
            max_s: max.max(mean),
            throughput: work_per_rep / mean,
            work_units: exp.work_units(),
        }
    }
}

pub fn write_results<W: io::Write>(rows: &[ResultRow], writer: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(RESULTS_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: io::Read>(reader: R) -> Result<Vec<ResultRow>, BenchError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != RESULTS_HEADER {
        return Err(BenchError::Config(format!(
            "unexpected results header `{header}`"
        )));
    }
    Ok(r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp() -> Experiment {
        let mut e = Experiment::new(Benchmark::Daxpy, Version::Worksharing, 1024, 256);
        e.workers = 4;
        e
    }

    #[test]
    fn invariants_are_enforced() {
        exp().validate().unwrap();
        let mut e = exp();
        e.ps = 0;
        assert!(matches!(e.validate(), Err(BenchError::Config(_))));
        let mut e = exp();
        e.cs = Some(512);
        assert!(e.validate().is_err());
        let mut e = exp();
        e.reps = 0;
        assert!(e.validate().is_err());
        let mut e = exp();
        e.team_size = Some(8);
        assert!(e.validate().is_err());
    }

    #[test]
    fn default_chunksize_uses_team() {
        let mut e = exp();
        e.team_size = Some(2);
        assert_eq!(e.effective_cs(), 128);
        e.cs = Some(16);
        assert_eq!(e.effective_cs(), 16);
    }

    #[test]
    fn loop_versions_span_all_workers() {
        let mut e = exp();
        e.version = Version::ForGuided;
        e.team_size = Some(1);
        let cfg = e.runtime_config();
        assert_eq!(cfg.teams().unwrap().len(), 1);
        assert_eq!(e.effective_team_size(), 4);
    }

    #[test]
    fn row_statistics() {
        let r = ResultRow::from_times(&exp(), &[1.0, 2.0, 3.0], 10.0);
        assert_eq!((r.min_s, r.mean_s, r.max_s), (1.0, 2.0, 3.0));
        assert_eq!(r.throughput, 5.0);
        assert_eq!(r.work_units, 1.0);
    }

    #[test]
    fn results_csv_header_and_roundtrip() {
        let rows = vec![ResultRow::from_times(&exp(), &[0.5], 1024.0)];
        let mut out = Vec::new();
        write_results(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER);
        assert_eq!(read_results(text.as_bytes()).unwrap(), rows);

        let mut empty = Vec::new();
        write_results(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), RESULTS_HEADER);
        assert!(read_results("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn names_parse() {
        for v in Version::ALL {
            assert_eq!(v.name().parse::<Version>(), Ok(v));
        }
        for b in Benchmark::ALL {
            assert_eq!(b.name().parse::<Benchmark>(), Ok(b));
        }
        assert!("omp".parse::<Version>().is_err());
    }
}
