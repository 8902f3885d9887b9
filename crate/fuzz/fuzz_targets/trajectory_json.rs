#![no_main]

use libfuzzer_sys::fuzz_target;
use pvrnn_hri::encoding::Trajectory;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(traj) = Trajectory::from_json_str(text) {
        let again = Trajectory::from_json_str(&traj.to_json_string().unwrap()).unwrap();
        assert_eq!(traj, again);
    }
});
