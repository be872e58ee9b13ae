#![no_main]

use binpose::codebook::Embedding;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = Embedding::from_text(text) {
        assert_eq!(Embedding::from_text(&e.to_text()).expect("re-parse"), e);
    }
});
