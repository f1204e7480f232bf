//! Deep feed-forward classifier over the selected features.
//!
//! Hidden layers are affine + rectifier, the output layer is affine +
//! softmax, and training minimizes mean cross-entropy with mini-batch
//! momentum descent. Inputs are MinMax-scaled per feature with ranges taken
//! from the training rows; MISSING inputs are imputed after scaling.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::{argmax, softmax};
use crate::{Error, Result};

pub const MLP_SCHEMA: &str = "qkdsent.mlp/1";

/// Lower clamp on the probability inside the log of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Hidden widths of the default architecture.
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 256, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub schema_version: String,
    /// `[inputs, hidden..., classes]`.
    pub layer_sizes: Vec<usize>,
    /// Row-major `out x in` weight matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Scaled input is `(x - input_offset) * input_scale`.
    pub input_offset: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub imputation_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
            shuffle: true,
            hidden_layers: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0,1)".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMlp {
    pub model: MlpModel,
    /// Mean training cross-entropy per epoch.
    pub loss_trace: Vec<f64>,
}

/// Cross-entropy of one prediction.
pub fn loss(probabilities: &[f64], label: usize) -> f64 {
    -probabilities[label].max(PROB_FLOOR).ln()
}

impl MlpModel {
    /// Uniform ±sqrt(6/fan_in) weights, zero biases, identity input scaling.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(layer_sizes, &mut rng)
    }

    fn init_with(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        let k = layer_sizes[0];
        Ok(MlpModel {
            schema_version: MLP_SCHEMA.to_string(),
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            input_offset: vec![0.0; k],
            input_scale: vec![1.0; k],
            imputation_value: 0.0,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn scale_input(&self, input: &[Option<f64>]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                actual: input.len(),
            });
        }
        Ok(input
            .iter()
            .enumerate()
            .map(|(i, v)| match v.filter(|x| x.is_finite()) {
                Some(x) => (x - self.input_offset[i]) * self.input_scale[i],
                None => self.imputation_value,
            })
            .collect())
    }

    /// Pre-activations of every layer for one scaled input.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.weights.len());
        let mut a = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let fan_in = self.layer_sizes[l];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    row.iter().zip(&a).fold(*bias, |acc, (wi, ai)| acc + wi * ai)
                })
                .collect();
            if l < last {
                a = z.iter().map(|v| v.max(0.0)).collect();
            }
            out.push(z);
        }
        out
    }

    /// Class probabilities; MISSING entries are imputed.
    pub fn forward(&self, input: &[Option<f64>]) -> Result<Vec<f64>> {
        let x = self.scale_input(input)?;
        let z = self.pre_activations(&x);
        Ok(softmax(z.last().expect("at least one layer")))
    }

    pub fn predict(&self, input: &[Option<f64>]) -> Result<usize> {
        Ok(argmax(&self.forward(input)?))
    }

    /// Smallest |pre-activation| over the hidden layers; zero means the input
    /// sits on a rectifier kink where finite differences are unreliable.
    pub fn min_abs_hidden_preactivation(&self, input: &[Option<f64>]) -> Result<f64> {
        let x = self.scale_input(input)?;
        let z = self.pre_activations(&x);
        Ok(z[..z.len() - 1]
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min))
    }

    fn param(&self, mut idx: usize) -> f64 {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if idx < w.len() {
                return w[idx];
            }
            idx -= w.len();
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }

    fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if idx < w.len() {
                return &mut w[idx];
            }
            idx -= w.len();
            if idx < b.len() {
                return &mut b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }

    /// Analytic gradient of the loss, flattened as layer by layer
    /// (weights row-major, then biases).
    pub fn gradient(&self, input: &[Option<f64>], label: usize) -> Result<Vec<f64>> {
        if label >= self.class_count() {
            return Err(Error::Domain(format!("label {label} out of range")));
        }
        let x = self.scale_input(input)?;
        let z = self.pre_activations(&x);
        let layers = self.weights.len();
        let mut acts: Vec<Vec<f64>> = vec![x];
        for zl in &z[..layers - 1] {
            acts.push(zl.iter().map(|v| v.max(0.0)).collect());
        }
        let p = softmax(&z[layers - 1]);
        let mut delta: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(c, pc)| pc - if c == label { 1.0 } else { 0.0 })
            .collect();
        // Clamped region of the loss has zero gradient.
        if p[label] < PROB_FLOOR {
            delta.iter_mut().for_each(|d| *d = 0.0);
        }
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); layers];
        for l in (0..layers).rev() {
            let fan_in = self.layer_sizes[l];
            let a = &acts[l];
            let mut gw = vec![0.0; delta.len() * fan_in];
            for (o, d) in delta.iter().enumerate() {
                for (i, ai) in a.iter().enumerate() {
                    gw[o * fan_in + i] = d * ai;
                }
            }
            let gb = delta.clone();
            if l > 0 {
                let w = &self.weights[l];
                delta = (0..fan_in)
                    .map(|i| {
                        if z[l - 1][i] > 0.0 {
                            delta
                                .iter()
                                .enumerate()
                                .map(|(o, d)| d * w[o * fan_in + i])
                                .sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
            grads[l] = (gw, gb);
        }
        Ok(grads
            .into_iter()
            .flat_map(|(w, b)| w.into_iter().chain(b))
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        if self.schema_version != MLP_SCHEMA {
            return Err(Error::Schema {
                found: self.schema_version.clone(),
                expected: MLP_SCHEMA.into(),
            });
        }
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) {
            return bad(format!("invalid layer sizes {sizes:?}"));
        }
        if self.weights.len() != sizes.len() - 1 || self.biases.len() != sizes.len() - 1 {
            return bad("layer count does not match layer_sizes".into());
        }
        for (l, pair) in sizes.windows(2).enumerate() {
            let expected = pair[0].checked_mul(pair[1]);
            if Some(self.weights[l].len()) != expected || self.biases[l].len() != pair[1] {
                return bad(format!("layer {l} has wrong shape"));
            }
        }
        let k = sizes[0];
        if self.input_offset.len() != k || self.input_scale.len() != k {
            return bad("input scaling width mismatch".into());
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .chain(&self.input_offset)
            .chain(&self.input_scale)
            .all(|v| v.is_finite());
        if !finite || !self.imputation_value.is_finite() {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MlpModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

/// Max relative error between analytic and central-difference gradients.
///
/// Checks up to 200 parameters (all of them for small models) drawn with a
/// fixed seed. Results are only meaningful away from rectifier kinks; see
/// [`MlpModel::min_abs_hidden_preactivation`].
pub fn gradient_check(
    model: &MlpModel,
    input: &[Option<f64>],
    label: usize,
    epsilon: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Domain(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let analytic = model.gradient(input, label)?;
    let total = model.parameter_count();
    let picks: Vec<usize> = if total <= 200 {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
        let mut v = rand::seq::index::sample(&mut rng, total, 200).into_vec();
        v.sort_unstable();
        v
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for idx in picks {
        let original = model.param(idx);
        *probe.param_mut(idx) = original + epsilon;
        let plus = loss(&probe.forward(input)?, label);
        *probe.param_mut(idx) = original - epsilon;
        let minus = loss(&probe.forward(input)?, label);
        *probe.param_mut(idx) = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[idx];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

fn fit_input_scaling(rows: &[Vec<Option<f64>>], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            if let Some(x) = v.filter(|x| x.is_finite()) {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
    }
    let mut offset = vec![0.0; k];
    let mut scale = vec![0.0; k];
    for j in 0..k {
        if hi[j] > lo[j] {
            let range = hi[j] - lo[j];
            if range.is_finite() {
                offset[j] = lo[j];
                scale[j] = 1.0 / range;
            }
        }
    }
    (offset, scale)
}

/// Trains a network of width `[K, hidden..., class_count]` on the rows.
pub fn train(
    rows: &[Vec<Option<f64>>],
    labels: &[usize],
    class_count: usize,
    config: &TrainConfig,
) -> Result<TrainedMlp> {
    config.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::Dimension {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    if rows.len() < config.batch_size {
        return Err(Error::Config(format!(
            "{} rows is fewer than batch_size {}",
            rows.len(),
            config.batch_size
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::Domain(format!(
            "label {bad} outside 0..{class_count}"
        )));
    }
    let k = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::Dimension {
            expected: k,
            actual: r.len(),
        });
    }

    let mut sizes = vec![k];
    sizes.extend(&config.hidden_layers);
    sizes.push(class_count);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init_with(&sizes, &mut rng)?;
    let (offset, scale) = fit_input_scaling(rows, k);
    model.input_offset = offset;
    model.input_scale = scale;

    let n = rows.len();
    let mut x = Array2::<f64>::zeros((n, k));
    for (i, row) in rows.iter().enumerate() {
        let scaled = model.scale_input(row)?;
        x.row_mut(i).assign(&Array1::from(scaled));
    }

    let layers = sizes.len() - 1;
    let mut w: Vec<Array2<f64>> = (0..layers)
        .map(|l| {
            Array2::from_shape_vec((sizes[l + 1], sizes[l]), model.weights[l].clone())
                .expect("shape matches")
        })
        .collect();
    let mut b: Vec<Array1<f64>> = model.biases.iter().map(|v| Array1::from(v.clone())).collect();
    let mut vw: Vec<Array2<f64>> = w.iter().map(|m| Array2::zeros(m.raw_dim())).collect();
    let mut vb: Vec<Array1<f64>> = b.iter().map(|m| Array1::zeros(m.raw_dim())).collect();

    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for _epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (batch_loss, gw, gb) = batch_gradients(&w, &b, xb.view(), &yb);
            epoch_loss += batch_loss * chunk.len() as f64;
            for l in 0..layers {
                vw[l] *= config.momentum;
                vw[l].scaled_add(-config.learning_rate, &gw[l]);
                w[l] += &vw[l];
                vb[l] *= config.momentum;
                vb[l].scaled_add(-config.learning_rate, &gb[l]);
                b[l] += &vb[l];
            }
        }
        loss_trace.push(epoch_loss / n as f64);
    }

    for l in 0..layers {
        model.weights[l] = w[l].iter().copied().collect();
        model.biases[l] = b[l].to_vec();
    }
    if let Err(e) = model.validate() {
        return Err(Error::DegenerateTraining(format!("training diverged: {e}")));
    }
    Ok(TrainedMlp { model, loss_trace })
}

type Grads = (f64, Vec<Array2<f64>>, Vec<Array1<f64>>);

/// Mean loss and parameter gradients over one mini-batch.
fn batch_gradients(
    w: &[Array2<f64>],
    b: &[Array1<f64>],
    xb: ArrayView2<f64>,
    yb: &[usize],
) -> Grads {
    let layers = w.len();
    let batch = xb.nrows() as f64;
    let mut acts: Vec<Array2<f64>> = vec![xb.to_owned()];
    let mut zs: Vec<Array2<f64>> = Vec::with_capacity(layers);
    for l in 0..layers {
        let z = acts[l].dot(&w[l].t()) + &b[l];
        if l + 1 < layers {
            acts.push(z.mapv(|v| v.max(0.0)));
        }
        zs.push(z);
    }
    let logits = &zs[layers - 1];
    let mut delta = Array2::<f64>::zeros(logits.raw_dim());
    let mut total_loss = 0.0;
    for (i, row) in logits.outer_iter().enumerate() {
        let p = softmax(row.as_slice().expect("standard layout"));
        total_loss += loss(&p, yb[i]);
        for (c, pc) in p.iter().enumerate() {
            let target = if c == yb[i] { 1.0 } else { 0.0 };
            delta[[i, c]] = (pc - target) / batch;
        }
    }
    let mut gw = vec![Array2::zeros((0, 0)); layers];
    let mut gb = vec![Array1::zeros(0); layers];
    for l in (0..layers).rev() {
        gw[l] = delta.t().dot(&acts[l]);
        gb[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&w[l]);
            back.zip_mut_with(&zs[l - 1], |d, z| {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    (total_loss / batch, gw, gb)
}
