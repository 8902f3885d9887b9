#![no_main]

use libfuzzer_sys::fuzz_target;
use pvrnn_hri::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_json_str(text) {
        let _ = cfg.coding();
    }
});
