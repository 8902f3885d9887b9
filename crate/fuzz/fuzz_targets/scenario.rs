#![no_main]

use libfuzzer_sys::fuzz_target;
use pvrnn_hri::control::scenario::{run_scenario, Scenario};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(sc) = Scenario::from_json_str(text) else {
        return;
    };
    // Keep runs short; long scripts are valid but slow.
    if sc.ticks().saturating_mul(sc.plant.dims()) <= 5_000 {
        if let Ok(run) = run_scenario(&sc) {
            let first: Vec<f64> = run.rows.iter().take(run.dims).map(|r| r.command).collect();
            assert!(run.max_command_step(&first) <= sc.gains.delta_max + 1e-9);
        }
    }
});
