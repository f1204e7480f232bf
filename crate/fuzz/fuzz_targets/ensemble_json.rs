#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdsent::select::BoostedEnsemble;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = BoostedEnsemble::from_json(text) {
        let row = vec![None; e.feature_names.len()];
        let _ = e.predict_proba(&row);
        let _ = e.top_k_features(1);
    }
});
