#![no_main]

use libfuzzer_sys::fuzz_target;
use pvrnn_hri::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = Checkpoint::from_json_str(text);
});
