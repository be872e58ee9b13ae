#![no_main]

use binpose::codebook::Codebook;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cb) = Codebook::from_text(text) {
        assert!(!cb.is_empty());
        assert_eq!(Codebook::from_text(&cb.to_text()).expect("re-parse").len(), cb.len());
    }
});
