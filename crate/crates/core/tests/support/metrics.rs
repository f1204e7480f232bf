//! Hand-counted evaluation cases.

use qkdsent::report::evaluate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub truth: &'static [usize],
    pub pred: &'static [usize],
    pub classes: usize,
    /// (precision, recall, f1) per class.
    pub per_class: &'static [(f64, f64, f64)],
    pub accuracy: f64,
    pub macro_f1: f64,
    pub misclassified: usize,
}

pub const CASES: [Case; 5] = [
    Case {
        truth: &[0, 0, 1, 1],
        pred: &[0, 1, 1, 1],
        classes: 2,
        per_class: &[(1.0, 0.5, 2.0 / 3.0), (2.0 / 3.0, 1.0, 0.8)],
        accuracy: 0.75,
        macro_f1: (2.0 / 3.0 + 0.8) / 2.0,
        misclassified: 1,
    },
    Case {
        truth: &[0, 0, 0, 1, 1, 2],
        pred: &[0, 1, 2, 1, 1, 2],
        classes: 3,
        per_class: &[(1.0, 1.0 / 3.0, 0.5), (2.0 / 3.0, 1.0, 0.8), (0.5, 1.0, 2.0 / 3.0)],
        accuracy: 4.0 / 6.0,
        macro_f1: (0.5 + 0.8 + 2.0 / 3.0) / 3.0,
        misclassified: 2,
    },
    Case {
        truth: &[0, 1],
        pred: &[1, 0],
        classes: 2,
        per_class: &[(0.0, 0.0, 0.0), (0.0, 0.0, 0.0)],
        accuracy: 0.0,
        macro_f1: 0.0,
        misclassified: 2,
    },
    Case {
        truth: &[0, 1, 1],
        pred: &[0, 0, 0],
        classes: 2,
        per_class: &[(1.0 / 3.0, 1.0, 0.5), (0.0, 0.0, 0.0)],
        accuracy: 1.0 / 3.0,
        macro_f1: 0.25,
        misclassified: 2,
    },
    Case {
        truth: &[0, 0, 1],
        pred: &[0, 1, 1],
        classes: 3,
        per_class: &[(1.0, 0.5, 2.0 / 3.0), (0.5, 1.0, 2.0 / 3.0), (0.0, 0.0, 0.0)],
        accuracy: 2.0 / 3.0,
        macro_f1: 2.0 / 3.0,
        misclassified: 1,
    },
];

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

pub fn check_cases() -> Result<(), String> {
    for (i, c) in CASES.iter().enumerate() {
        let names: Vec<String> = (0..c.classes).map(|k| format!("class{k}")).collect();
        let r = evaluate(c.truth, c.pred, &names).map_err(|e| e.to_string())?;
        for (k, (m, &(p, rc, f))) in r.per_class.iter().zip(c.per_class).enumerate() {
            if !(near(m.precision, p) && near(m.recall, rc) && near(m.f1, f)) {
                return Err(format!(
                    "case {i} class {k}: got ({}, {}, {}), want ({p}, {rc}, {f})",
                    m.precision, m.recall, m.f1
                ));
            }
        }
        if !near(r.accuracy, c.accuracy) || !near(r.macro_f1, c.macro_f1) {
            return Err(format!(
                "case {i}: accuracy {} macro F1 {}, want {} {}",
                r.accuracy, r.macro_f1, c.accuracy, c.macro_f1
            ));
        }
        if r.misclassified() != c.misclassified {
            return Err(format!("case {i}: {} misclassified", r.misclassified()));
        }
    }
    Ok(())
}

/// Edge counts sum to the off-diagonal mass on random label pairs.
pub fn check_chord_conservation() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let names: Vec<String> = (0..9).map(|k| k.to_string()).collect();
    for trial in 0..200 {
        let n = rng.random_range(1..300);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..9)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_bool(0.7) { t } else { rng.random_range(0..9) })
            .collect();
        let wrong = truth.iter().zip(&pred).filter(|(a, b)| a != b).count();
        let r = evaluate(&truth, &pred, &names).map_err(|e| e.to_string())?;
        let edges: usize = r.chord_edges.iter().map(|e| e.count).sum();
        let off: usize = (0..9)
            .flat_map(|i| (0..9).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| r.confusion[i][j])
            .sum();
        if edges != wrong || off != wrong || r.chord_edges.iter().any(|e| e.from == e.to) {
            return Err(format!("trial {trial}: edges {edges}, off-diagonal {off}, wrong {wrong}"));
        }
        let svg = qkdsent::report::chord_svg(&r).map_err(|e| e.to_string())?;
        if svg.matches("class=\"ribbon\"").count() != r.chord_edges.len() {
            return Err(format!("trial {trial}: ribbon count mismatch"));
        }
    }
    Ok(())
}
