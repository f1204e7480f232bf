//! Dataset assembly, temporal split, staged fitting, persistence and the
//! sliding-window streaming predictor.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{self, MlpModel, TrainConfig};
use crate::features::{
    catalog_index, Channel, FeatureExtractor, FeaturePlan, FeatureTable, FeatureVector,
};
use crate::report::{evaluate, EvalReport, Provenance};
use crate::select::{self, BoostParams, BoostedEnsemble};
use crate::telemetry::{fit_scaler, SampleRecord, ScalerParams, Window};
use crate::util::argmax;
use crate::{config_hash, Error, Result, DEFAULT_WINDOW};

pub const PIPELINE_SCHEMA: &str = "qkdsent.pipeline/1";

/// One acquisition: an ordered log and the impairment it was recorded under.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLog {
    pub records: Vec<SampleRecord>,
    pub label: u8,
}

/// A window plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetWindow {
    pub window: Window,
    pub label: u8,
    pub log_index: usize,
    pub start: usize,
}

impl DatasetWindow {
    fn span(&self) -> (i64, i64) {
        (self.window.first_timestamp(), self.window.last_timestamp())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub windows: Vec<DatasetWindow>,
    /// Logs shorter than the window, left out.
    pub skipped_logs: usize,
}

/// Cuts every log into sliding windows. Windows never cross logs.
pub fn build_dataset(logs: &[LabeledLog], window_size: usize, stride: usize) -> Result<Dataset> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    FeatureExtractor::new(window_size)?;
    let mut out = Dataset::default();
    for (log_index, log) in logs.iter().enumerate() {
        if let Some((i, msg)) = log
            .records
            .iter()
            .enumerate()
            .find_map(|(i, r)| r.validate().err().map(|m| (i, m)))
        {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("log {log_index}: {msg}"),
            });
        }
        if log.records.len() < window_size {
            log::warn!(
                "log {log_index} has {} records, fewer than the window size {window_size}; skipped",
                log.records.len()
            );
            out.skipped_logs += 1;
            continue;
        }
        for start in (0..=log.records.len() - window_size).step_by(stride) {
            let samples = log.records[start..start + window_size].to_vec();
            let window = Window::new(samples, window_size)?.with_label(log.label);
            out.windows.push(DatasetWindow {
                window,
                label: log.label,
                log_index,
                start,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<DatasetWindow>,
    pub test: Vec<DatasetWindow>,
    /// Train windows removed because they overlapped a test window in time.
    pub dropped_for_leakage: usize,
}

/// Per class, the chronologically first ⌈fraction·n⌉ windows train and the
/// tail tests. Train windows whose time span overlaps a test window of the
/// same class are then dropped.
pub fn temporal_split(windows: Vec<DatasetWindow>, train_fraction: f64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<u8, Vec<DatasetWindow>> = BTreeMap::new();
    for w in windows {
        by_class.entry(w.label).or_default().push(w);
    }
    let mut split = Split::default();
    for (label, mut ws) in by_class {
        let n = ws.len();
        if n < 5 {
            return Err(Error::Split(format!(
                "class {label} has {n} windows, at least 5 are needed"
            )));
        }
        ws.sort_by_key(|w| (w.window.first_timestamp(), w.log_index, w.start));
        // Guard against 0.8 * n landing a hair above an integer.
        let n_train = ((train_fraction * n as f64) - 1e-9).ceil() as usize;
        let test = ws.split_off(n_train);
        let before = ws.len();
        ws.retain(|tr| {
            let (a, b) = tr.span();
            !test.iter().any(|te| {
                let (c, d) = te.span();
                a <= d && c <= b
            })
        });
        if ws.is_empty() {
            return Err(Error::Split(format!(
                "class {label} lost every training window to the leakage guard"
            )));
        }
        split.dropped_for_leakage += before - ws.len();
        split.train.extend(ws);
        split.test.extend(test);
    }
    Ok(split)
}

/// Which telemetry channels the selector may draw features from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSet {
    #[default]
    Both,
    QberOnly,
}

impl ChannelSet {
    fn admits(self, name: &str) -> bool {
        match self {
            ChannelSet::Both => true,
            ChannelSet::QberOnly => name.starts_with(Channel::Qber.prefix()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_size: usize,
    pub stride: usize,
    pub train_fraction: f64,
    pub k: usize,
    pub channels: ChannelSet,
    pub boost: BoostParams,
    pub mlp: TrainConfig,
    pub class_names: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_size: DEFAULT_WINDOW,
            stride: 1,
            train_fraction: 0.8,
            k: 50,
            channels: ChannelSet::Both,
            boost: BoostParams::default(),
            mlp: TrainConfig::default(),
            class_names: crate::linksim::CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        FeatureExtractor::new(self.window_size)?;
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.class_names.len() < 2 {
            return Err(Error::Config("at least two class names are required".into()));
        }
        self.boost.validate()?;
        self.mlp.validate()
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Summary of a training run, stored with the model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingDigest {
    pub train_windows: usize,
    pub test_windows: usize,
    pub dropped_for_leakage: usize,
    pub skipped_logs: usize,
    pub train_class_counts: Vec<usize>,
    /// Selected features that carry zero gain (filled in column order).
    pub padded_features: usize,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub schema_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub scaler: ScalerParams,
    pub window_size: usize,
    pub selected_features: Vec<String>,
    pub ensemble: BoostedEnsemble,
    pub mlp: MlpModel,
    pub class_names: Vec<String>,
    pub training: TrainingDigest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_id: usize,
    pub probabilities: Vec<f64>,
}

fn catalog_indices(names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| catalog_index(n).ok_or_else(|| Error::Model(format!("unknown feature '{n}'"))))
        .collect()
}

/// First `window_size` points of the earliest class-0 log.
pub fn reference_window(logs: &[LabeledLog], window_size: usize) -> Result<Window> {
    let log = logs
        .iter()
        .filter(|l| l.label == 0 && l.records.len() >= window_size)
        .min_by_key(|l| l.records[0].timestamp)
        .ok_or_else(|| {
            Error::Config(format!(
                "no class-0 log with at least {window_size} records for the reference window"
            ))
        })?;
    Window::new(log.records[..window_size].to_vec(), window_size)
}

/// Extracts the full catalog for every window.
pub fn extract_all(
    windows: &[DatasetWindow],
    window_size: usize,
    scaler: &ScalerParams,
) -> Result<Vec<FeatureVector>> {
    let extractor = FeatureExtractor::new(window_size)?;
    windows.iter().map(|w| extractor.extract(&w.window, scaler)).collect()
}

/// Fits the selector on all admitted features, keeps its top `k`, then
/// trains the classifier on that projection.
pub fn fit_pipeline(
    train: &[DatasetWindow],
    scaler: ScalerParams,
    config: &PipelineConfig,
) -> Result<TrainedPipeline> {
    config.validate()?;
    scaler.validate()?;
    let class_count = config.class_names.len();
    let labels: Vec<usize> = train.iter().map(|w| w.label as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::DegenerateTraining(format!(
            "label {bad} has no class name"
        )));
    }
    let mut train_class_counts = vec![0usize; class_count];
    for &l in &labels {
        train_class_counts[l] += 1;
    }
    if train_class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateTraining(
            "training set must contain at least two classes".into(),
        ));
    }

    let vectors = extract_all(train, config.window_size, &scaler)?;
    let full = FeatureTable::from_vectors(&vectors);
    let admitted: Vec<&String> = full.names.iter().filter(|n| config.channels.admits(n)).collect();
    let table = full.select_columns(&admitted)?;
    log::info!(
        "fitting selector on {} windows x {} features",
        table.len(),
        table.width()
    );
    let ensemble = select::fit(&table, &labels, class_count, &config.boost)?;
    let selected = ensemble.top_k_features(config.k)?;
    let padded_features = config.k.saturating_sub(ensemble.informative_feature_count());
    if padded_features > 0 {
        log::warn!("{padded_features} selected features carry no gain");
    }
    let projected = table.select_columns(&selected)?;
    log::info!("training classifier on {} features", projected.width());
    let trained = classify::train(&projected.rows, &labels, class_count, &config.mlp)?;

    Ok(TrainedPipeline {
        schema_version: PIPELINE_SCHEMA.to_string(),
        seed: config.mlp.seed,
        config_hash: config.hash(),
        config: config.clone(),
        scaler,
        window_size: config.window_size,
        selected_features: selected,
        ensemble,
        mlp: trained.model,
        class_names: config.class_names.clone(),
        training: TrainingDigest {
            train_windows: train.len(),
            train_class_counts,
            padded_features,
            loss_trace: trained.loss_trace,
            ..TrainingDigest::default()
        },
    })
}

impl TrainedPipeline {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            schema_version: self.schema_version.clone(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PIPELINE_SCHEMA {
            return Err(Error::Schema {
                found: self.schema_version.clone(),
                expected: PIPELINE_SCHEMA.to_string(),
            });
        }
        FeatureExtractor::new(self.window_size)?;
        self.scaler.validate()?;
        self.ensemble.validate()?;
        self.mlp.validate()?;
        catalog_indices(&self.selected_features)?;
        catalog_indices(&self.ensemble.feature_names)?;
        if self.selected_features.len() != self.mlp.input_width() {
            return Err(Error::Dimension {
                expected: self.selected_features.len(),
                actual: self.mlp.input_width(),
            });
        }
        if self.class_names.len() != self.mlp.class_count() {
            return Err(Error::Dimension {
                expected: self.class_names.len(),
                actual: self.mlp.class_count(),
            });
        }
        if self.class_names.len() != self.ensemble.class_count {
            return Err(Error::Dimension {
                expected: self.class_names.len(),
                actual: self.ensemble.class_count,
            });
        }
        Ok(())
    }

    /// Compact JSON; identical pipelines serialize to identical bytes.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>");
        if found != PIPELINE_SCHEMA {
            return Err(Error::Schema {
                found: found.to_string(),
                expected: PIPELINE_SCHEMA.to_string(),
            });
        }
        let pipeline: TrainedPipeline = serde_json::from_value(value)?;
        pipeline.validate()?;
        Ok(pipeline)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Classifier output for a full catalog vector.
    pub fn predict_features(&self, features: &FeatureVector) -> Result<Prediction> {
        let idx = catalog_indices(&self.selected_features)?;
        self.predict_projected(&features.project(&idx))
    }

    fn predict_projected(&self, input: &[Option<f64>]) -> Result<Prediction> {
        let probabilities = self.mlp.forward(input)?;
        Ok(Prediction {
            class_id: argmax(&probabilities),
            probabilities,
        })
    }

    /// Tree ensemble alone, used as the baseline.
    pub fn baseline_predict(&self, features: &FeatureVector) -> Result<usize> {
        let idx = catalog_indices(&self.ensemble.feature_names)?;
        self.ensemble.predict(&features.project(&idx))
    }

    /// Batch path: full extraction, then projection.
    pub fn predict_window(&self, window: &Window) -> Result<Prediction> {
        let extractor = FeatureExtractor::new(self.window_size)?;
        self.predict_features(&extractor.extract(window, &self.scaler)?)
    }

    pub fn streaming(&self) -> Result<StreamPredictor<'_>> {
        StreamPredictor::new(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamOutput {
    /// Fewer than N−1 prior samples seen.
    Warmup,
    Ready(Prediction),
}

/// Ring of the last N samples; classifies every point once full.
#[derive(Debug)]
pub struct StreamPredictor<'a> {
    pipeline: &'a TrainedPipeline,
    extractor: FeatureExtractor,
    indices: Vec<usize>,
    ring: VecDeque<SampleRecord>,
}

impl<'a> StreamPredictor<'a> {
    pub fn new(pipeline: &'a TrainedPipeline) -> Result<Self> {
        let extractor = FeatureExtractor::new(pipeline.window_size)?
            .with_plan(FeaturePlan::for_names(&pipeline.selected_features)?);
        Ok(StreamPredictor {
            pipeline,
            extractor,
            indices: catalog_indices(&pipeline.selected_features)?,
            ring: VecDeque::with_capacity(pipeline.window_size),
        })
    }

    /// Adds a sample. Rejected samples leave the ring untouched.
    pub fn push(&mut self, sample: SampleRecord) -> Result<StreamOutput> {
        sample.validate().map_err(Error::Domain)?;
        if let Some(last) = self.ring.back() {
            if sample.timestamp <= last.timestamp {
                return Err(Error::Ordering {
                    line: 0,
                    ts: sample.timestamp,
                    prev: last.timestamp,
                });
            }
        }
        let n = self.pipeline.window_size;
        if self.ring.len() == n {
            self.ring.pop_front();
        }
        self.ring.push_back(sample);
        if self.ring.len() < n {
            return Ok(StreamOutput::Warmup);
        }
        let window = Window::new(self.ring.iter().copied().collect(), n)?;
        let features = self.extractor.extract(&window, &self.pipeline.scaler)?;
        self.pipeline
            .predict_projected(&features.project(&self.indices))
            .map(StreamOutput::Ready)
    }

    pub fn reset(&mut self) {
        self.ring.clear();
    }
}

/// Result of a full train-and-evaluate run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub pipeline: TrainedPipeline,
    pub report: EvalReport,
    pub baseline: EvalReport,
}

/// Held-out evaluation of both the full pipeline and the ensemble alone.
pub fn evaluate_pipeline(
    pipeline: &TrainedPipeline,
    test: &[DatasetWindow],
) -> Result<(EvalReport, EvalReport)> {
    let vectors = extract_all(test, pipeline.window_size, &pipeline.scaler)?;
    let truth: Vec<usize> = test.iter().map(|w| w.label as usize).collect();
    let mut pred = Vec::with_capacity(test.len());
    let mut base = Vec::with_capacity(test.len());
    for v in &vectors {
        pred.push(pipeline.predict_features(v)?.class_id);
        base.push(pipeline.baseline_predict(v)?);
    }
    let mut report = evaluate(&truth, &pred, &pipeline.class_names)?;
    let mut baseline = evaluate(&truth, &base, &pipeline.class_names)?;
    report.provenance = Some(pipeline.provenance());
    baseline.provenance = Some(pipeline.provenance());
    Ok((report, baseline))
}

/// Windows, splits, fits and scores a labeled corpus.
pub fn run_experiment(logs: &[LabeledLog], config: &PipelineConfig) -> Result<Experiment> {
    config.validate()?;
    let scaler = fit_scaler(&reference_window(logs, config.window_size)?);
    let dataset = build_dataset(logs, config.window_size, config.stride)?;
    let split = temporal_split(dataset.windows, config.train_fraction)?;
    log::info!(
        "split: {} train, {} test, {} dropped by the leakage guard",
        split.train.len(),
        split.test.len(),
        split.dropped_for_leakage
    );
    let mut pipeline = fit_pipeline(&split.train, scaler, config)?;
    pipeline.training.test_windows = split.test.len();
    pipeline.training.dropped_for_leakage = split.dropped_for_leakage;
    pipeline.training.skipped_logs = dataset.skipped_logs;
    let (report, baseline) = evaluate_pipeline(&pipeline, &split.test)?;
    Ok(Experiment {
        pipeline,
        report,
        baseline,
    })
}
