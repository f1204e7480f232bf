#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdsent::classify::MlpModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = MlpModel::from_json(text) {
        if m.parameter_count() <= 1 << 20 {
            let row = vec![Some(1.0); m.input_width()];
            let p = m.forward(&row).unwrap();
            assert_eq!(p.len(), m.class_count());
        }
    }
});
