#![no_main]

use libfuzzer_sys::fuzz_target;
use wstasks_bench::sweep::{parse_points, SweepKind};
use wstasks_bench::{Benchmark, Version};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(points) = parse_points(text) {
        assert!(points.iter().all(|&p| p > 0));
    }
    let _ = text.parse::<SweepKind>();
    let _ = text.parse::<Benchmark>();
    let _ = text.parse::<Version>();
});
