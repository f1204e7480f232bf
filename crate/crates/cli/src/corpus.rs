//! Labeled corpus directories: logs with `<stem>.sim.json` sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qkdsent::pipeline::LabeledLog;
use qkdsent::telemetry::{read_log, LogFormat};

#[derive(Deserialize)]
struct Label {
    class_id: u8,
}

pub fn sidecar_path(log: &Path) -> PathBuf {
    log.with_extension("sim.json")
}

/// Reads every `.jsonl` and `.csv` log in `dir`, in file-name order.
pub fn load(dir: &Path) -> Result<Vec<LabeledLog>> {
    if !dir.is_dir() {
        bail!("corpus directory {} does not exist", dir.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    let mut logs = Vec::new();
    for path in paths {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => LogFormat::Jsonl,
            Some("csv") => LogFormat::Csv,
            _ => continue,
        };
        let sidecar = sidecar_path(&path);
        let text = fs::read_to_string(&sidecar)
            .with_context(|| format!("label sidecar for {}", path.display()))?;
        let label: Label = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", sidecar.display()))?;
        if label.class_id as usize >= qkdsent::CLASS_COUNT {
            bail!("{}: class_id {} out of range", sidecar.display(), label.class_id);
        }
        let records = read_log(&path, format)?;
        log::info!("{}: {} records, class {}", path.display(), records.len(), label.class_id);
        logs.push(LabeledLog { records, label: label.class_id });
    }
    if logs.is_empty() {
        bail!("no .jsonl or .csv logs in {}", dir.display());
    }
    Ok(logs)
}
