//! Replays the checked-in fuzz seeds, plus truncated and bit-flipped
//! variants, through the decoders the fuzz targets exercise.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use qkdsent::classify::MlpModel;
use qkdsent::linksim::{steady_state, ScenarioFile};
use qkdsent::pipeline::{StreamOutput, TrainedPipeline};
use qkdsent::select::BoostedEnsemble;
use qkdsent::telemetry::{parse_log, LogFormat, SampleRecord};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed_"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Seed itself, a spread of prefixes, and single-byte corruptions.
fn variants(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![seed.to_vec()];
    let step = (seed.len() / 40).max(1);
    for cut in (0..seed.len()).step_by(step) {
        out.push(seed[..cut].to_vec());
    }
    for (i, pos) in (0..seed.len()).step_by(step).enumerate() {
        let mut v = seed.to_vec();
        v[pos] = match i % 4 {
            0 => v[pos] ^ 0x01,
            1 => b'-',
            2 => b'9',
            _ => 0xff,
        };
        out.push(v);
    }
    out
}

fn replay(target: &str, decode: impl Fn(&[u8]) -> bool) {
    for (name, seed) in seeds(target) {
        assert!(decode(&seed), "{target}/{name} should decode");
        for v in variants(&seed) {
            let r = catch_unwind(AssertUnwindSafe(|| decode(&v)));
            assert!(r.is_ok(), "{target}/{name}: panic on {:?}", String::from_utf8_lossy(&v));
        }
    }
}

#[test]
fn jsonl_seeds() {
    replay("parse_jsonl", |d| parse_log(d, LogFormat::Jsonl).is_ok());
}

#[test]
fn csv_seeds() {
    replay("parse_csv", |d| parse_log(d, LogFormat::Csv).is_ok());
}

#[test]
fn scenario_seeds() {
    replay("scenario_json", |d| {
        let Ok(text) = std::str::from_utf8(d) else { return false };
        match ScenarioFile::from_json(text) {
            Ok(f) => steady_state(&f.link.unwrap_or_default(), &f.scenario).is_ok(),
            Err(_) => false,
        }
    });
}

#[test]
fn ensemble_seeds() {
    replay("ensemble_json", |d| {
        let Ok(text) = std::str::from_utf8(d) else { return false };
        match BoostedEnsemble::from_json(text) {
            Ok(e) => e.predict_proba(&vec![None; e.feature_names.len()]).is_ok(),
            Err(_) => false,
        }
    });
}

#[test]
fn mlp_seeds() {
    replay("mlp_json", |d| {
        let Ok(text) = std::str::from_utf8(d) else { return false };
        match MlpModel::from_json(text) {
            Ok(m) => m.forward(&vec![Some(1.0); m.input_width()]).is_ok(),
            Err(_) => false,
        }
    });
}

#[test]
fn pipeline_seeds() {
    replay("pipeline_json", |d| {
        let Ok(text) = std::str::from_utf8(d) else { return false };
        let Ok(p) = TrainedPipeline::from_json(text) else { return false };
        let Ok(mut stream) = p.streaming() else { return false };
        let mut ready = false;
        for t in 0..p.window_size as i64 {
            let r = SampleRecord::new(t * 1000, 0.03 + 1e-4 * t as f64, 900.0 - t as f64);
            if let Ok(StreamOutput::Ready(pred)) = stream.push(r) {
                assert!(pred.class_id < p.class_names.len());
                ready = true;
            }
        }
        ready
    });
}
