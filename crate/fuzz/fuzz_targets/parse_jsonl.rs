#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdsent::telemetry::{parse_log, LogFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_log(data, LogFormat::Jsonl) {
        for pair in records.windows(2) {
            assert!(pair[0].timestamp < pair[1].timestamp);
        }
    }
});
