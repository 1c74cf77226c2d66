#![no_main]

use libfuzzer_sys::fuzz_target;
use wstasks::metrics::{dependence_violations, detect_pipelining, export_dag, utilization};
use wstasks::ExecutionTrace;

fuzz_target!(|data: &[u8]| {
    let Ok(trace) = ExecutionTrace::read_csv(data) else {
        return;
    };
    // analysis must never panic, valid trace or not
    let _ = trace.validate();
    let _ = utilization(&trace);
    let _ = detect_pipelining(&trace);
    let _ = dependence_violations(&trace);
    let dag = export_dag(&trace);
    assert!(dag.windows(2).all(|w| w[0] < w[1]));
    let again = ExecutionTrace::read_csv(trace.to_csv_string().as_bytes()).expect("re-read");
    assert_eq!(again, trace);
});
