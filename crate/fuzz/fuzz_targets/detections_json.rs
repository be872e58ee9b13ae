#![no_main]

use binpose::scenegen::ImageDetections;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dets) = ImageDetections::from_json(text) {
        for d in &dets.detections {
            let mask = d.mask.decode().expect("validated mask decodes");
            assert_eq!(mask.count() as u64, d.mask.area());
        }
    }
});
