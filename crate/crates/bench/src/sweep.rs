//! Parameter sweeps: one result row per (point, version).

use std::fmt;
use std::str::FromStr;

use wstasks::DependenceMode;

use crate::experiment::{BenchError, Experiment, ResultRow, Version};
use crate::kernels::run_benchmark;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    /// Points are task sizes (TS).
    Granularity,
    /// Points are chunksizes (CS); each must not exceed TS.
    Chunksize,
    /// Points are worker counts.
    Strong,
    /// Points are task sizes; every version runs under discrete and region
    /// dependences, reported as `version@mode`.
    Depmode,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Granularity => "granularity",
            SweepKind::Chunksize => "chunksize",
            SweepKind::Strong => "strong",
            SweepKind::Depmode => "depmode",
        })
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "granularity" => Ok(SweepKind::Granularity),
            "chunksize" => Ok(SweepKind::Chunksize),
            "strong" | "strong_scaling" => Ok(SweepKind::Strong),
            "depmode" => Ok(SweepKind::Depmode),
            _ => Err(format!("unknown sweep `{s}`")),
        }
    }
}

/// Parses `"64,1K,16K,2M"`: positive integers with optional binary `K`/`M`
/// suffixes.
pub fn parse_points(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (digits, mult) = match p.as_bytes()[p.len() - 1] {
                b'k' | b'K' => (&p[..p.len() - 1], 1usize << 10),
                b'm' | b'M' => (&p[..p.len() - 1], 1 << 20),
                _ => (p, 1),
            };
            let v: usize = digits.parse().map_err(|_| format!("bad point `{p}`"))?;
            match v.checked_mul(mult) {
                Some(0) => Err(format!("point `{p}` must be positive")),
                Some(v) => Ok(v),
                None => Err(format!("point `{p}` overflows")),
            }
        })
        .collect()
}

/// Every experiment of the sweep, with the label for its version column.
/// All are validated before any is run.
pub fn plan(
    kind: SweepKind,
    base: &Experiment,
    points: &[usize],
    versions: &[Version],
) -> Result<Vec<(Experiment, String)>, BenchError> {
    let points: Vec<usize> = if points.is_empty() {
        match kind {
            SweepKind::Granularity | SweepKind::Depmode => vec![base.ts],
            SweepKind::Chunksize => base.cs.into_iter().collect(),
            SweepKind::Strong => vec![base.workers],
        }
    } else {
        points.to_vec()
    };
    let modes: &[Option<DependenceMode>] = match kind {
        SweepKind::Depmode => &[Some(DependenceMode::Discrete), Some(DependenceMode::Region)],
        _ => &[None],
    };
    let mut plan = Vec::new();
    for &p in &points {
        for &v in versions {
            for &mode in modes {
                let mut e = base.clone();
                e.version = v;
                match kind {
                    SweepKind::Granularity | SweepKind::Depmode => e.ts = p,
                    SweepKind::Chunksize => e.cs = Some(p),
                    SweepKind::Strong => e.workers = p,
                }
                let label = match mode {
                    Some(m) => {
                        e.deps = m;
                        format!("{v}@{m}")
                    }
                    None => v.to_string(),
                };
                e.validate()?;
                plan.push((e, label));
            }
        }
    }
    Ok(plan)
}

/// Runs the sweep. Stops at the first failing experiment.
pub fn sweep(
    kind: SweepKind,
    base: &Experiment,
    points: &[usize],
    versions: &[Version],
) -> Result<Vec<ResultRow>, BenchError> {
    plan(kind, base, points, versions)?
        .into_iter()
        .map(|(e, label)| {
            log::info!(
                "{kind} sweep: {label} ps={} ts={} cs={:?} workers={}",
                e.ps,
                e.ts,
                e.cs,
                e.workers
            );
            let mut row = run_benchmark(&e)?.row;
            row.version = label;
            Ok(row)
        })
        .collect()
}
