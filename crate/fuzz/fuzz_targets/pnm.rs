#![no_main]

use binpose::formats::pnm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = pnm::decode_u16(data) {
        assert_eq!(pnm::decode_u16(&pnm::encode_u16(&img)).expect("re-decode"), img);
    }
    if let Ok(img) = pnm::decode_gray(data) {
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
