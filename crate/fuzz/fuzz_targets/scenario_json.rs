#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdsent::linksim::{steady_state, ScenarioFile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = ScenarioFile::from_json(text) {
        let link = file.link.unwrap_or_default();
        let _ = steady_state(&link, &file.scenario);
    }
});
