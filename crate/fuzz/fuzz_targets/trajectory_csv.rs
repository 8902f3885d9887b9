#![no_main]

use libfuzzer_sys::fuzz_target;
use pvrnn_hri::encoding::Trajectory;

fuzz_target!(|data: &[u8]| {
    if let Ok(traj) = Trajectory::from_csv_reader(data, 4.0, None) {
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        let again = Trajectory::from_csv_reader(&out[..], 4.0, None).unwrap();
        assert_eq!((traj.steps(), traj.dims()), (again.steps(), again.dims()));
    }
});
