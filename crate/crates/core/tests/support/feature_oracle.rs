//! Direct, unoptimized reimplementations of every catalog feature.

use std::collections::BTreeMap;
use std::f64::consts::PI;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn central_moment(x: &[f64], p: i32) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(p)).sum::<f64>() / x.len() as f64
}

fn is_constant(x: &[f64]) -> bool {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    lo == hi
}

fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    if i + 1 >= s.len() {
        return s[i];
    }
    s[i] + (h - i as f64) * (s[i + 1] - s[i])
}

fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, v) in x.iter().enumerate() {
                let a = 2.0 * PI * k as f64 * t as f64 / n as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            (re, im)
        })
        .collect()
}

fn autocorr(x: &[f64], lag: usize) -> Option<f64> {
    if is_constant(x) {
        return None;
    }
    let m = mean(x);
    let c0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let ck: f64 = (0..x.len() - lag).map(|t| (x[t] - m) * (x[t + lag] - m)).sum();
    Some(ck / c0)
}

fn pattern_entropy(x: &[f64], order: usize) -> f64 {
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for w in x.windows(order) {
        // rank[i] = position of element i in the ascending order, ties by index.
        let ranks: Vec<usize> = (0..order)
            .map(|i| {
                (0..order)
                    .filter(|&j| w[j] < w[i] || (w[j] == w[i] && j < i))
                    .count()
            })
            .collect();
        *counts.entry(ranks).or_default() += 1;
    }
    let total = (x.len() - order + 1) as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

fn channel(x: &[f64], out: &mut BTreeMap<String, Option<f64>>, prefix: &str) {
    let n = x.len();
    let nf = n as f64;
    let constant = is_constant(x);
    let m = mean(x);
    let var = central_moment(x, 2);
    let mut put = |k: &str, v: Option<f64>| {
        out.insert(format!("{prefix}__{k}"), v);
    };
    put("mean", Some(m));
    put("variance", Some(var));
    put("std", Some(var.sqrt()));
    put("min", Some(x.iter().cloned().fold(f64::INFINITY, f64::min)));
    put("max", Some(x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
    put("median", Some(quantile(x, 0.5)));
    for q in [0.1, 0.25, 0.75, 0.9] {
        put(&format!("quantile_{q}"), Some(quantile(x, q)));
    }
    if constant {
        put("skewness", None);
        put("kurtosis", None);
    } else {
        put("skewness", Some(central_moment(x, 3) / var.powf(1.5)));
        put("kurtosis", Some(central_moment(x, 4) / (var * var) - 3.0));
    }
    put("rms", Some((x.iter().map(|v| v * v).sum::<f64>() / nf).sqrt()));
    put("first", Some(x[0]));
    put("last", Some(x[n - 1]));
    let diffs: Vec<f64> = (1..n).map(|i| (x[i] - x[i - 1]).abs()).collect();
    let sum_d: f64 = diffs.iter().sum();
    put("abs_sum_changes", Some(sum_d));
    put("mean_abs_change", Some(sum_d / (nf - 1.0)));
    put("max_abs_change", Some(diffs.iter().cloned().fold(0.0, f64::max)));
    put("count_above_mean", Some(x.iter().filter(|&&v| v > m).count() as f64));
    put("count_below_mean", Some(x.iter().filter(|&&v| v < m).count() as f64));
    let mut best = 0;
    for i in 0..n {
        let mut j = i;
        while j + 1 < n && x[j + 1] > x[j] {
            j += 1;
        }
        best = best.max(j - i + 1);
    }
    put("longest_increasing_run", Some(best as f64));
    let crossings = (1..n)
        .filter(|&i| (x[i - 1] > m && x[i] < m) || (x[i - 1] < m && x[i] > m))
        .count();
    put("zero_crossings", Some(crossings as f64));

    // Normal equations for x ≈ a + b t.
    let st: f64 = (0..n).map(|t| t as f64).sum();
    let stt: f64 = (0..n).map(|t| (t * t) as f64).sum();
    let sx: f64 = x.iter().sum();
    let stx: f64 = x.iter().enumerate().map(|(t, v)| t as f64 * v).sum();
    let det = nf * stt - st * st;
    let b = (nf * stx - st * sx) / det;
    let a = (stt * sx - st * stx) / det;
    put("trend_slope", Some(b));
    put("trend_intercept", Some(a));
    if constant {
        put("trend_r2", None);
    } else {
        let ss_res: f64 = x
            .iter()
            .enumerate()
            .map(|(t, v)| (v - a - b * t as f64).powi(2))
            .sum();
        let ss_tot: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        put("trend_r2", Some(1.0 - ss_res / ss_tot));
    }
    for lag in 1..=4 {
        put(&format!("autocorr_lag{lag}"), autocorr(x, lag));
    }
    match (autocorr(x, 1), autocorr(x, 2)) {
        (Some(r1), Some(r2)) if (1.0 - r1 * r1).abs() >= 1e-12 => {
            // Cramer's rule on [[1, r1], [r1, 1]] a = [r1, r2].
            let d = 1.0 - r1 * r1;
            let a1 = (r1 - r1 * r2) / d;
            let a2 = (r2 - r1 * r1) / d;
            put("ar2_a1", Some(a1));
            put("ar2_a2", Some(a2));
            put("ar2_innovation_var", Some(var * (1.0 - a1 * r1 - a2 * r2)));
        }
        _ => {
            put("ar2_a1", None);
            put("ar2_a2", None);
            put("ar2_innovation_var", None);
        }
    }
    let bins = dft(x);
    for k in 0..6 {
        let (re, im) = if constant && k % n != 0 { (0.0, 0.0) } else { bins[k % n] };
        let mag = (re * re + im * im).sqrt();
        put(&format!("dft_mag_{k}"), Some(mag));
        if k > 0 {
            put(
                &format!("dft_phase_{k}"),
                (mag >= 1e-12).then(|| im.atan2(re)),
            );
        }
    }
    let power: Vec<f64> = bins.iter().map(|(r, i)| r * r + i * i).collect();
    let half: f64 = (1..=n / 2).map(|k| power[k]).sum();
    let centroid = (!constant && half >= 1e-24)
        .then(|| (1..=n / 2).map(|k| k as f64 * power[k]).sum::<f64>() / half);
    put("spectral_centroid", centroid);
    put("spectral_energy", Some(power.iter().sum::<f64>() / nf));
    let s2 = 2f64.sqrt();
    let approx: f64 = (0..n / 2).map(|i| ((x[2 * i] + x[2 * i + 1]) / s2).powi(2)).sum();
    let detail: f64 = (0..n / 2).map(|i| ((x[2 * i] - x[2 * i + 1]) / s2).powi(2)).sum();
    put("haar_approx_energy", Some(approx));
    put("haar_detail_energy", Some(if constant { 0.0 } else { detail }));
    put("perm_entropy_3", Some(pattern_entropy(x, 3)));
}

/// Features of two normalized channels keyed by catalog name.
pub fn features(qber: &[f64], skr: &[f64]) -> BTreeMap<String, Option<f64>> {
    let mut out = BTreeMap::new();
    channel(qber, &mut out, "qber");
    channel(skr, &mut out, "skr");
    if is_constant(qber) || is_constant(skr) {
        out.insert("cross__pearson".into(), None);
        out.insert("cross__lag1_cross_correlation".into(), None);
    } else {
        let (mq, ms) = (mean(qber), mean(skr));
        let n = qber.len();
        let sqq: f64 = qber.iter().map(|v| (v - mq).powi(2)).sum();
        let sss: f64 = skr.iter().map(|v| (v - ms).powi(2)).sum();
        let c0: f64 = (0..n).map(|t| (qber[t] - mq) * (skr[t] - ms)).sum();
        let c1: f64 = (0..n - 1).map(|t| (qber[t] - mq) * (skr[t + 1] - ms)).sum();
        let d = (sqq * sss).sqrt();
        out.insert("cross__pearson".into(), Some(c0 / d));
        out.insert("cross__lag1_cross_correlation".into(), Some(c1 / d));
    }
    out
}

/// MinMax against a reference, degenerate channels mapping to 0.5.
pub fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    if hi == lo {
        0.5
    } else {
        (x - lo) / (hi - lo)
    }
}

use qkdsent::features::{catalog_names, extract_channels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

pub fn close(name: &str, a: f64, b: f64) -> bool {
    if name.contains("dft_phase") {
        // Angles: compare on the circle so that ±π agree.
        let d = (a - b).rem_euclid(2.0 * PI);
        return d.min(2.0 * PI - d) <= 1e-9;
    }
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..4) {
        // Coarse grid: plenty of ties.
        0 => (0..n).map(|_| rng.random_range(0..5) as f64 * 0.25).collect(),
        1 => {
            let mut v = rng.random::<f64>();
            (0..n)
                .map(|_| {
                    v += rng.random_range(-0.1..0.1);
                    v
                })
                .collect()
        }
        _ => (0..n).map(|_| rng.random_range(-0.5..1.5)).collect(),
    }
}

/// Extractor against oracle on one window pair.
pub fn compare(qber: &[f64], skr: &[f64]) -> Result<usize, String> {
    let got = extract_channels(qber, skr).map_err(|e| e.to_string())?;
    let want = features(qber, skr);
    if want.len() != catalog_names().len() {
        return Err(format!("oracle produced {} features", want.len()));
    }
    let mut checked = 0;
    for (name, value) in got.iter() {
        let expected = want[name];
        let ok = match (value, expected) {
            (None, None) => true,
            (Some(a), Some(b)) => close(name, a, b),
            _ => false,
        };
        if !ok {
            return Err(format!("{name}: got {value:?}, oracle {expected:?}"));
        }
        checked += 1;
    }
    Ok(checked)
}

/// `count` random windows of length 5..=24. Returns feature values checked.
pub fn check_random_windows(count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for case in 0..count {
        let n = rng.random_range(5..=24);
        let q = random_series(&mut rng, n);
        let s = random_series(&mut rng, n);
        checked += compare(&q, &s).map_err(|e| format!("window {case}: {e}"))?;
    }
    Ok(checked)
}

pub fn missing_set(qber: &[f64], skr: &[f64]) -> BTreeSet<String> {
    extract_channels(qber, skr)
        .unwrap()
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| n.to_string())
        .collect()
}

fn oracle_missing(qber: &[f64], skr: &[f64]) -> BTreeSet<String> {
    features(qber, skr)
        .into_iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| n)
        .collect()
}

fn prefixed(prefix: &str, members: &[&str]) -> BTreeSet<String> {
    members.iter().map(|m| format!("{prefix}__{m}")).collect()
}

/// Features that go MISSING for a constant channel.
pub const CONSTANT_MISSING: [&str; 16] = [
    "skewness",
    "kurtosis",
    "trend_r2",
    "autocorr_lag1",
    "autocorr_lag2",
    "autocorr_lag3",
    "autocorr_lag4",
    "ar2_a1",
    "ar2_a2",
    "ar2_innovation_var",
    "dft_phase_1",
    "dft_phase_2",
    "dft_phase_3",
    "dft_phase_4",
    "dft_phase_5",
    "spectral_centroid",
];

/// Name, QBER series, SKR series, expected MISSING names.
pub type MissingCase = (&'static str, Vec<f64>, Vec<f64>, BTreeSet<String>);

/// Each degenerate input and the exact MISSING set it must produce.
pub fn missing_cases() -> Vec<MissingCase> {
    let varied: Vec<f64> = (0..10).map(|t| ((t * 7) % 10) as f64 / 9.0).collect();
    let flat = vec![0.5; 10];
    let tone: Vec<f64> = (0..10)
        .map(|t| 0.5 + 0.5 * (2.0 * PI * 2.0 * t as f64 / 10.0).cos())
        .collect();
    let cross = prefixed("cross", &["pearson", "lag1_cross_correlation"]);

    let mut flat_qber = prefixed("qber", &CONSTANT_MISSING);
    flat_qber.extend(cross.clone());
    let mut flat_skr = prefixed("skr", &CONSTANT_MISSING);
    flat_skr.extend(cross.clone());
    let mut both = flat_qber.clone();
    both.extend(flat_skr.clone());
    vec![
        ("no degeneracy", varied.clone(), varied.clone(), BTreeSet::new()),
        ("constant qber", flat.clone(), varied.clone(), flat_qber),
        ("constant skr", varied.clone(), flat.clone(), flat_skr),
        ("both constant", flat.clone(), flat.clone(), both),
        (
            "pure tone at bin 2",
            tone,
            varied,
            prefixed("qber", &["dft_phase_1", "dft_phase_3", "dft_phase_4", "dft_phase_5"]),
        ),
    ]
}

/// Extractor and oracle both produce exactly the enumerated MISSING sets.
pub fn check_missing_cases() -> Result<usize, String> {
    let cases = missing_cases();
    for (label, q, s, want) in &cases {
        let got = missing_set(q, s);
        if &got != want {
            return Err(format!("{label}: extractor MISSING {got:?}, expected {want:?}"));
        }
        let oracle = oracle_missing(q, s);
        if &oracle != want {
            return Err(format!("{label}: oracle MISSING {oracle:?}, expected {want:?}"));
        }
    }
    Ok(cases.len())
}
