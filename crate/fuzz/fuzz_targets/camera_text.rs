#![no_main]

use binpose::geometry::CameraIntrinsics;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(k) = CameraIntrinsics::from_text(text) {
        assert_eq!(CameraIntrinsics::from_text(&k.to_text()).expect("re-parse"), k);
    }
});
