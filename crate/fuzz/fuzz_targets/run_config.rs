#![no_main]

use binpose::stages::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        let echoed = cfg.to_toml().expect("serialize");
        assert_eq!(RunConfig::from_toml(&echoed).expect("re-parse"), cfg);
    }
});
