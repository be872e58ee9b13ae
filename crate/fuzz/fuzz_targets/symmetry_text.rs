#![no_main]

use binpose::geometry::SymmetrySet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sym) = SymmetrySet::from_text(text) {
        assert!(!sym.rotations().is_empty());
    }
});
