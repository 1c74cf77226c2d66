use proptest::prelude::*;
use wstasks_bench::experiment::{read_results, work_units, write_results, ResultRow};
use wstasks_bench::sweep::{parse_points, plan, SweepKind};
use wstasks_bench::{Benchmark, Experiment, Version};

fn suffixed(v: usize, unit: usize) -> String {
    match unit {
        1 => v.to_string(),
        1024 => format!("{v}K"),
        _ => format!("{v}M"),
    }
}

proptest! {
    #[test]
    fn points_parse_with_suffixes(
        pts in prop::collection::vec((1usize..5000, prop::sample::select(vec![1usize, 1024, 1 << 20])), 1..8)
    ) {
        let text: Vec<String> = pts.iter().map(|&(v, u)| suffixed(v, u)).collect();
        let parsed = parse_points(&text.join(",")).unwrap();
        let expected: Vec<usize> = pts.iter().map(|&(v, u)| v * u).collect();
        prop_assert_eq!(parsed, expected);
    }

    #[test]
    fn results_csv_round_trips(
        ps in 1usize..1_000_000, ts in 1usize..1000, workers in 1usize..256,
        mean in 1e-9f64..10.0, spread in 0.0f64..1.0,
    ) {
        let row = ResultRow {
            benchmark: "daxpy".into(),
            version: "tasks@region".into(),
            ps, ts, cs: ts, n: 4, workers, reps: 5,
            mean_s: mean, min_s: mean * (1.0 - spread / 2.0), max_s: mean * (1.0 + spread),
            throughput: ps as f64 / mean,
            work_units: work_units(ps, ts, workers),
        };
        let mut buf = Vec::new();
        write_results(std::slice::from_ref(&row), &mut buf).unwrap();
        prop_assert_eq!(read_results(&buf[..]).unwrap(), vec![row]);
    }

    #[test]
    fn granularity_plan_covers_points_and_versions(
        ps_exp in 8u32..16, ts_exps in prop::collection::vec(0u32..8, 1..5), workers in 1usize..9,
    ) {
        let ps = 1usize << ps_exp;
        let mut base = Experiment::new(Benchmark::Daxpy, Version::Tasks, ps, ps);
        base.workers = workers;
        let points: Vec<usize> = ts_exps.iter().map(|&e| ps >> e).collect();
        let versions = [Version::Tasks, Version::Worksharing, Version::ForGuided];
        let p = plan(SweepKind::Granularity, &base, &points, &versions).unwrap();
        prop_assert_eq!(p.len(), points.len() * versions.len());
        for (e, _) in &p {
            prop_assert_eq!(e.work_units(), (e.ps as f64 / e.ts as f64) / e.workers as f64);
        }
    }

    #[test]
    fn chunksize_plan_rejects_any_cs_above_ts(ts in 1usize..512, extra in 1usize..512) {
        let mut base = Experiment::new(Benchmark::Daxpy, Version::Worksharing, 1024, ts);
        base.workers = 2;
        prop_assert!(plan(SweepKind::Chunksize, &base, &[ts + extra], &[Version::Worksharing]).is_err());
        prop_assert!(plan(SweepKind::Chunksize, &base, &[ts], &[Version::Worksharing]).is_ok());
    }
}
