//! Exhaustive enumeration of first-round root splits.

use qkdsent::select::improves;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub feature: usize,
    pub threshold: f64,
    pub default_left: bool,
    pub gain: f64,
}

/// Best root split for each class tree of round one, in scan order
/// (feature, ascending threshold, missing right before missing left).
pub fn root_splits(
    rows: &[Vec<Option<f64>>],
    labels: &[usize],
    classes: usize,
    lambda: f64,
    gamma: f64,
    min_child_weight: f64,
) -> Vec<Option<Candidate>> {
    let n = rows.len();
    let width = rows[0].len();
    let prior: Vec<f64> = (0..classes)
        .map(|c| labels.iter().filter(|&&l| l == c).count() as f64 / n as f64)
        .collect();
    (0..classes)
        .map(|c| {
            let p = prior[c];
            let g: Vec<f64> = labels.iter().map(|&l| p - f64::from(u8::from(l == c))).collect();
            let h = (p * (1.0 - p)).max(1e-16);
            let mut best: Option<Candidate> = None;
            for f in 0..width {
                let mut values: Vec<f64> = rows.iter().filter_map(|r| r[f]).collect();
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                values.dedup();
                for pair in values.windows(2) {
                    let thr = (pair[0] + pair[1]) / 2.0;
                    for default_left in [false, true] {
                        let goes_left = |r: &Vec<Option<f64>>| match r[f] {
                            Some(v) => v < thr,
                            None => default_left,
                        };
                        let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                        for (i, r) in rows.iter().enumerate() {
                            if goes_left(r) {
                                gl += g[i];
                                hl += h;
                            } else {
                                gr += g[i];
                                hr += h;
                            }
                        }
                        if hl < min_child_weight || hr < min_child_weight {
                            continue;
                        }
                        let gain = 0.5
                            * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                                - (gl + gr).powi(2) / (hl + hr + lambda))
                            - gamma;
                        if improves(gain, best.map(|b| b.gain)) {
                            best = Some(Candidate {
                                feature: f,
                                threshold: thr,
                                default_left,
                                gain,
                            });
                        }
                    }
                }
            }
            best
        })
        .collect()
}
