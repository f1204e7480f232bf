//! Fixed catalog of window features over the normalized QBER and SKR channels.
//!
//! Every window produces the same ordered set of named features. Each channel
//! contributes 48 features (summary statistics, linear trend, autocorrelation,
//! AR(2) Yule-Walker fit, DFT bins, level-1 Haar energies, permutation
//! entropy) and two cross-channel correlations close the catalog at 98.
//!
//! Undefined quantities (zero variance, singular Yule-Walker system, phase of
//! a vanishing bin) are reported as MISSING (`None`) and never as NaN.
//! A series is treated as constant exactly when its min equals its max; in
//! that case the variance, the non-DC spectrum and the Haar detail energy are
//! exactly zero.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::telemetry::{ScalerParams, Window};
use crate::{Error, Result};

/// Smallest window the catalog is defined for (autocorrelation up to lag 4).
pub const MIN_WINDOW: usize = 5;

pub const AUTOCORR_LAGS: usize = 4;
pub const DFT_BINS: usize = 6;
const PHASE_EPS: f64 = 1e-12;
const AR_DET_EPS: f64 = 1e-12;
const SPECTRAL_EPS: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Qber,
    Skr,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Qber, Channel::Skr];

    pub fn prefix(self) -> &'static str {
        match self {
            Channel::Qber => "qber",
            Channel::Skr => "skr",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Group of features computed together from one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Stats,
    Trend,
    Autocorr,
    Ar,
    Spectrum,
    Haar,
    Entropy,
    Cross,
}

impl Family {
    const PER_CHANNEL: [Family; 7] = [
        Family::Stats,
        Family::Trend,
        Family::Autocorr,
        Family::Ar,
        Family::Spectrum,
        Family::Haar,
        Family::Entropy,
    ];

    fn index(self) -> usize {
        self as usize
    }

    fn member_names(self) -> Vec<String> {
        let fixed = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        match self {
            Family::Stats => fixed(&[
                "mean",
                "variance",
                "std",
                "min",
                "max",
                "median",
                "quantile_0.1",
                "quantile_0.25",
                "quantile_0.75",
                "quantile_0.9",
                "skewness",
                "kurtosis",
                "rms",
                "first",
                "last",
                "abs_sum_changes",
                "mean_abs_change",
                "max_abs_change",
                "count_above_mean",
                "count_below_mean",
                "longest_increasing_run",
                "zero_crossings",
            ]),
            Family::Trend => fixed(&["trend_slope", "trend_intercept", "trend_r2"]),
            Family::Autocorr => (1..=AUTOCORR_LAGS)
                .map(|l| format!("autocorr_lag{l}"))
                .collect(),
            Family::Ar => fixed(&["ar2_a1", "ar2_a2", "ar2_innovation_var"]),
            Family::Spectrum => (0..DFT_BINS)
                .map(|k| format!("dft_mag_{k}"))
                .chain((1..DFT_BINS).map(|k| format!("dft_phase_{k}")))
                .chain(["spectral_centroid".to_string(), "spectral_energy".to_string()])
                .collect(),
            Family::Haar => fixed(&["haar_approx_energy", "haar_detail_energy"]),
            Family::Entropy => fixed(&["perm_entropy_3"]),
            Family::Cross => fixed(&["pearson", "lag1_cross_correlation"]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureDef {
    pub name: String,
    pub channel: Option<Channel>,
    pub family: Family,
}

struct Catalog {
    defs: Vec<FeatureDef>,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

fn catalog_data() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let mut defs = Vec::new();
        for channel in Channel::ALL {
            for family in Family::PER_CHANNEL {
                for member in family.member_names() {
                    defs.push(FeatureDef {
                        name: format!("{}__{member}", channel.prefix()),
                        channel: Some(channel),
                        family,
                    });
                }
            }
        }
        for member in Family::Cross.member_names() {
            defs.push(FeatureDef {
                name: format!("cross__{member}"),
                channel: None,
                family: Family::Cross,
            });
        }
        let names: Vec<String> = defs.iter().map(|d| d.name.clone()).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Catalog { defs, names, index }
    })
}

/// The feature catalog in its canonical order.
pub fn catalog() -> &'static [FeatureDef] {
    &catalog_data().defs
}

pub fn catalog_names() -> &'static [String] {
    &catalog_data().names
}

pub fn catalog_index(name: &str) -> Option<usize> {
    catalog_data().index.get(name).copied()
}

/// Feature values of one window, aligned with [`catalog`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<Option<f64>>,
}

impl FeatureVector {
    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        catalog_index(name).and_then(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Option<f64>)> + '_ {
        catalog_names()
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    /// Values of the named features, in the given order.
    pub fn project(&self, indices: &[usize]) -> Vec<Option<f64>> {
        indices.iter().map(|&i| self.values[i]).collect()
    }
}

/// Which (channel, family) groups to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturePlan {
    channel_families: [[bool; 7]; 2],
    cross: bool,
}

impl FeaturePlan {
    pub fn all() -> Self {
        FeaturePlan {
            channel_families: [[true; 7]; 2],
            cross: true,
        }
    }

    pub fn none() -> Self {
        FeaturePlan {
            channel_families: [[false; 7]; 2],
            cross: false,
        }
    }

    /// Smallest plan that yields every named feature.
    pub fn for_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut plan = FeaturePlan::none();
        for name in names {
            let idx = catalog_index(name.as_ref())
                .ok_or_else(|| Error::Domain(format!("unknown feature '{}'", name.as_ref())))?;
            let def = &catalog()[idx];
            match def.channel {
                Some(c) => plan.channel_families[c.index()][def.family.index()] = true,
                None => plan.cross = true,
            }
        }
        Ok(plan)
    }

    fn wants(&self, channel: Channel, family: Family) -> bool {
        self.channel_families[channel.index()][family.index()]
    }
}

/// Feature extractor for a fixed window length.
#[derive(Debug, Clone, Copy)]
pub struct FeatureExtractor {
    window_size: usize,
    plan: FeaturePlan,
}

impl FeatureExtractor {
    pub fn new(window_size: usize) -> Result<Self> {
        if window_size < MIN_WINDOW {
            return Err(Error::Config(format!(
                "window size must be at least {MIN_WINDOW}, got {window_size}"
            )));
        }
        Ok(FeatureExtractor {
            window_size,
            plan: FeaturePlan::all(),
        })
    }

    /// Restricts extraction to a plan. Features outside it come back as `None`.
    pub fn with_plan(mut self, plan: FeaturePlan) -> Self {
        self.plan = plan;
        self
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    /// Normalizes the window with `scaler` and extracts the catalog.
    pub fn extract(&self, window: &Window, scaler: &ScalerParams) -> Result<FeatureVector> {
        if window.len() != self.window_size {
            return Err(Error::WindowSize {
                expected: self.window_size,
                actual: window.len(),
            });
        }
        let (qber, skr) = scaler.transform_window(window);
        Ok(compute(&qber, &skr, &self.plan))
    }
}

/// Full catalog of two already-normalized channels.
pub fn extract_channels(qber: &[f64], skr: &[f64]) -> Result<FeatureVector> {
    if qber.len() != skr.len() {
        return Err(Error::Dimension {
            expected: qber.len(),
            actual: skr.len(),
        });
    }
    if qber.len() < MIN_WINDOW {
        return Err(Error::WindowSize {
            expected: MIN_WINDOW,
            actual: qber.len(),
        });
    }
    Ok(compute(qber, skr, &FeaturePlan::all()))
}

fn compute(qber: &[f64], skr: &[f64], plan: &FeaturePlan) -> FeatureVector {
    let mut values = Vec::with_capacity(catalog().len());
    for (channel, series) in [(Channel::Qber, qber), (Channel::Skr, skr)] {
        let summary = Summary::new(series);
        for family in Family::PER_CHANNEL {
            let width = family.member_names().len();
            if !plan.wants(channel, family) {
                values.extend(std::iter::repeat_n(None, width));
                continue;
            }
            let before = values.len();
            match family {
                Family::Stats => stats(series, &summary, &mut values),
                Family::Trend => trend(series, &summary, &mut values),
                Family::Autocorr => {
                    for lag in 1..=AUTOCORR_LAGS {
                        values.push(autocorr_with(series, &summary, lag));
                    }
                }
                Family::Ar => match ar2_with(series, &summary) {
                    Some(fit) => values.extend([Some(fit.a1), Some(fit.a2), Some(fit.innovation_var)]),
                    None => values.extend([None; 3]),
                },
                Family::Spectrum => spectrum(series, &summary, &mut values),
                Family::Haar => {
                    let (approx, detail) = haar_energies(series, &summary);
                    values.extend([Some(approx), Some(detail)]);
                }
                Family::Entropy => values.push(Some(permutation_entropy_unchecked(series, 3))),
                Family::Cross => unreachable!(),
            }
            debug_assert_eq!(values.len() - before, width);
        }
    }
    if plan.cross {
        cross(qber, skr, &mut values);
    } else {
        values.extend([None, None]);
    }
    debug_assert_eq!(values.len(), catalog().len());
    debug_assert!(values.iter().flatten().all(|v| v.is_finite()));
    FeatureVector {
        values: values
            .into_iter()
            .map(|v| v.filter(|x| x.is_finite()))
            .collect(),
    }
}

/// Shared first- and second-moment quantities of one series.
struct Summary {
    n: f64,
    mean: f64,
    /// Σ (x - mean)², exactly zero for constant series.
    sum_sq_dev: f64,
    constant: bool,
}

impl Summary {
    fn new(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let constant = x.iter().all(|v| *v == x[0]);
        if constant {
            return Summary {
                n,
                mean: x[0],
                sum_sq_dev: 0.0,
                constant,
            };
        }
        let mean = x.iter().sum::<f64>() / n;
        let sum_sq_dev = x.iter().map(|v| (v - mean).powi(2)).sum();
        Summary {
            n,
            mean,
            sum_sq_dev,
            constant,
        }
    }

    fn variance(&self) -> f64 {
        self.sum_sq_dev / self.n
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn stats(x: &[f64], s: &Summary, out: &mut Vec<Option<f64>>) {
    let n = s.n;
    let mean = s.mean;
    let var = s.variance();
    let std = var.sqrt();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (skew, kurt) = if s.constant {
        (None, None)
    } else {
        let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        (Some(m3 / (var * std)), Some(m4 / (var * var) - 3.0))
    };
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let changes: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let abs_sum = changes.iter().sum::<f64>();
    let max_change = changes.iter().copied().fold(0.0, f64::max);
    let above = x.iter().filter(|v| **v > mean).count() as f64;
    let below = x.iter().filter(|v| **v < mean).count() as f64;

    let mut longest = 1usize;
    let mut run = 1usize;
    for w in x.windows(2) {
        if w[1] > w[0] {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 1;
        }
    }
    let crossings = x
        .windows(2)
        .filter(|w| (w[0] - mean) * (w[1] - mean) < 0.0)
        .count() as f64;

    out.extend([
        Some(mean),
        Some(var),
        Some(std),
        Some(sorted[0]),
        Some(sorted[sorted.len() - 1]),
        Some(crate::telemetry::median(x)),
        Some(quantile_sorted(&sorted, 0.1)),
        Some(quantile_sorted(&sorted, 0.25)),
        Some(quantile_sorted(&sorted, 0.75)),
        Some(quantile_sorted(&sorted, 0.9)),
        skew,
        kurt,
        Some(rms),
        Some(x[0]),
        Some(x[x.len() - 1]),
        Some(abs_sum),
        Some(abs_sum / (n - 1.0)),
        Some(max_change),
        Some(above),
        Some(below),
        Some(longest as f64),
        Some(crossings),
    ]);
}

fn trend(x: &[f64], s: &Summary, out: &mut Vec<Option<f64>>) {
    let t_mean = (s.n - 1.0) / 2.0;
    let mut s_tt = 0.0;
    let mut s_tx = 0.0;
    for (t, v) in x.iter().enumerate() {
        let dt = t as f64 - t_mean;
        s_tt += dt * dt;
        s_tx += dt * (v - s.mean);
    }
    let slope = s_tx / s_tt;
    let intercept = s.mean - slope * t_mean;
    let r2 = (!s.constant).then(|| slope * slope * s_tt / s.sum_sq_dev);
    out.extend([Some(slope), Some(intercept), r2]);
}

/// Sample autocorrelation with the biased (population) normalization.
///
/// `None` for a constant series.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<Option<f64>> {
    if lag < 1 || lag >= series.len() {
        return Err(Error::Domain(format!(
            "lag {lag} outside 1..{}",
            series.len()
        )));
    }
    Ok(autocorr_with(series, &Summary::new(series), lag))
}

fn autocorr_with(x: &[f64], s: &Summary, lag: usize) -> Option<f64> {
    if s.constant {
        return None;
    }
    let num: f64 = x
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - s.mean) * (b - s.mean))
        .sum();
    Some(num / s.sum_sq_dev)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2Fit {
    pub a1: f64,
    pub a2: f64,
    pub innovation_var: f64,
}

/// AR(2) coefficients from the Yule-Walker equations on r(1), r(2).
pub fn yule_walker_ar2(series: &[f64]) -> Result<Option<Ar2Fit>> {
    if series.len() < 3 {
        return Err(Error::Domain(format!(
            "AR(2) fit needs at least 3 points, got {}",
            series.len()
        )));
    }
    Ok(ar2_with(series, &Summary::new(series)))
}

fn ar2_with(x: &[f64], s: &Summary) -> Option<Ar2Fit> {
    let r1 = autocorr_with(x, s, 1)?;
    let r2 = autocorr_with(x, s, 2)?;
    let det = 1.0 - r1 * r1;
    if det.abs() < AR_DET_EPS {
        return None;
    }
    let a1 = r1 * (1.0 - r2) / det;
    let a2 = (r2 - r1 * r1) / det;
    Some(Ar2Fit {
        a1,
        a2,
        innovation_var: s.variance() * (1.0 - a1 * r1 - a2 * r2),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DftBins {
    /// |X_k| for k = 0..=5.
    pub magnitudes: [f64; DFT_BINS],
    /// arg X_k for k = 1..=5; `None` where the bin vanishes.
    pub phases: [Option<f64>; DFT_BINS - 1],
}

fn dft_bin(x: &[f64], k: usize) -> (f64, f64) {
    let n = x.len();
    let mut re = 0.0;
    let mut im = 0.0;
    for (t, v) in x.iter().enumerate() {
        let angle = 2.0 * PI * ((k * t) % n) as f64 / n as f64;
        re += v * angle.cos();
        im -= v * angle.sin();
    }
    (re, im)
}

/// Low DFT bins of a real series.
pub fn dft_bins(series: &[f64]) -> DftBins {
    dft_with(series, &Summary::new(series))
}

fn dft_with(x: &[f64], s: &Summary) -> DftBins {
    let mut magnitudes = [0.0; DFT_BINS];
    let mut phases = [None; DFT_BINS - 1];
    for k in 0..DFT_BINS {
        let (re, im) = if s.constant && k % x.len() != 0 {
            (0.0, 0.0)
        } else {
            dft_bin(x, k)
        };
        let mag = re.hypot(im);
        magnitudes[k] = mag;
        if k > 0 && mag >= PHASE_EPS {
            phases[k - 1] = Some(im.atan2(re));
        }
    }
    DftBins { magnitudes, phases }
}

fn spectrum(x: &[f64], s: &Summary, out: &mut Vec<Option<f64>>) {
    let bins = dft_with(x, s);
    out.extend(bins.magnitudes.iter().map(|m| Some(*m)));
    out.extend(bins.phases);

    // Centroid over the non-DC half spectrum.
    let mut weighted = 0.0;
    let mut power = 0.0;
    if !s.constant {
        for k in 1..=x.len() / 2 {
            let (re, im) = dft_bin(x, k);
            let p = re * re + im * im;
            weighted += k as f64 * p;
            power += p;
        }
    }
    out.push((power >= SPECTRAL_EPS).then(|| weighted / power));
    // Parseval: Σ|X_k|²/N = Σ x².
    out.push(Some(x.iter().map(|v| v * v).sum()));
}

fn haar_energies(x: &[f64], s: &Summary) -> (f64, f64) {
    let mut approx = 0.0;
    let mut detail = 0.0;
    for pair in x.chunks_exact(2) {
        approx += (pair[0] + pair[1]).powi(2) / 2.0;
        if !s.constant {
            detail += (pair[0] - pair[1]).powi(2) / 2.0;
        }
    }
    (approx, detail)
}

/// Shannon entropy (nats) of ordinal patterns of `order` consecutive points.
///
/// Equal values are ranked by position, earlier first.
pub fn permutation_entropy(series: &[f64], order: usize) -> Result<f64> {
    if order < 2 || series.len() < order {
        return Err(Error::Domain(format!(
            "permutation entropy of order {order} needs at least {order} points"
        )));
    }
    Ok(permutation_entropy_unchecked(series, order))
}

fn permutation_entropy_unchecked(x: &[f64], order: usize) -> f64 {
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut idx: Vec<usize> = Vec::with_capacity(order);
    for w in x.windows(order) {
        idx.clear();
        idx.extend(0..order);
        // Stable sort keeps earlier indices first among ties.
        idx.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
        *counts.entry(idx.clone()).or_default() += 1;
    }
    let total = (x.len() + 1 - order) as f64;
    let mut sorted_counts: Vec<usize> = counts.into_values().collect();
    sorted_counts.sort_unstable();
    sorted_counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

fn cross(q: &[f64], k: &[f64], out: &mut Vec<Option<f64>>) {
    let sq = Summary::new(q);
    let sk = Summary::new(k);
    if sq.constant || sk.constant {
        out.extend([None, None]);
        return;
    }
    let norm = (sq.sum_sq_dev * sk.sum_sq_dev).sqrt();
    let pearson: f64 = q
        .iter()
        .zip(k)
        .map(|(a, b)| (a - sq.mean) * (b - sk.mean))
        .sum::<f64>()
        / norm;
    let lag1: f64 = q
        .iter()
        .zip(&k[1..])
        .map(|(a, b)| (a - sq.mean) * (b - sk.mean))
        .sum::<f64>()
        / norm;
    out.extend([Some(pearson), Some(lag1)]);
}

/// Rows of feature values over a named column set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl FeatureTable {
    /// Stacks full-catalog vectors.
    pub fn from_vectors(vectors: &[FeatureVector]) -> Self {
        FeatureTable {
            names: catalog_names().to_vec(),
            rows: vectors.iter().map(|v| v.values.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Keeps the named columns, in the given order.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|c| c == n.as_ref())
                    .ok_or_else(|| Error::Domain(format!("unknown column '{}'", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureTable {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i]).collect())
                .collect(),
        })
    }

    /// Writes a CSV with a header row; MISSING cells are empty.
    pub fn write_csv<W: Write>(&self, writer: W, labels: Option<&[u8]>) -> Result<()> {
        if let Some(l) = labels {
            if l.len() != self.rows.len() {
                return Err(Error::Dimension {
                    expected: self.rows.len(),
                    actual: l.len(),
                });
            }
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if labels.is_some() {
            header.push("label");
        }
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells: Vec<String> = row
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
                .collect();
            if let Some(l) = labels {
                cells.push(l[i].to_string());
            }
            w.write_record(&cells)?;
        }
        w.flush().map_err(|e| Error::io("<features>", e))?;
        Ok(())
    }
}
