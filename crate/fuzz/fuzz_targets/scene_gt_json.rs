#![no_main]

use binpose::formats::parse_json;
use binpose::scenegen::SceneGt;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(gt) = parse_json::<SceneGt>(text) {
        let _ = gt.poses();
        let _ = gt.intrinsics.validate();
    }
});
