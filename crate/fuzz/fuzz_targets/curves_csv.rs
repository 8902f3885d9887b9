#![no_main]

use libfuzzer_sys::fuzz_target;
use pvrnn_hri::trainer::{read_curves_csv, write_curves_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(log) = read_curves_csv(data) {
        let mut out = Vec::new();
        write_curves_csv(&log, &mut out).unwrap();
        assert_eq!(read_curves_csv(&out[..]).unwrap().len(), log.len());
    }
});
