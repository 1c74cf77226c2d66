#![no_main]

use libfuzzer_sys::fuzz_target;
use wstasks_bench::experiment::{read_results, write_results};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_results(data) else {
        return;
    };
    let mut out = Vec::new();
    write_results(&rows, &mut out).expect("write");
    let again = read_results(&out[..]).expect("re-read");
    assert_eq!(again.len(), rows.len());
});
