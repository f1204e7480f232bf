#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdsent::pipeline::{StreamOutput, TrainedPipeline};
use qkdsent::telemetry::SampleRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(p) = TrainedPipeline::from_json(text) else { return };
    if p.window_size > 64 {
        return;
    }
    let Ok(mut stream) = p.streaming() else { return };
    for t in 0..p.window_size as i64 {
        let record = SampleRecord::new(t * 1000, 0.03 + 1e-4 * t as f64, 900.0 - t as f64);
        if let Ok(StreamOutput::Ready(pred)) = stream.push(record) {
            assert!(pred.class_id < p.class_names.len());
        }
    }
});
