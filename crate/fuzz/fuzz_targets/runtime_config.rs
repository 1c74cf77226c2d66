#![no_main]

use libfuzzer_sys::fuzz_target;
use wstasks::RuntimeConfig;

// Input: `NAME=value` lines, as they would appear in the environment.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let vars = text.lines().filter_map(|l| l.split_once('='));
    if let Ok(cfg) = RuntimeConfig::with_workers(4).apply_vars(vars) {
        if cfg.validate().is_ok() {
            let teams = cfg.teams().expect("validated config builds teams");
            assert_eq!(teams.iter().map(|t| t.size()).sum::<usize>(), cfg.workers);
        }
    }
});
