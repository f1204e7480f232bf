#![allow(dead_code)]
pub mod feature_oracle;
pub mod gradients;
pub mod metrics;
pub mod simulator;
pub mod split_oracle;

use qkdsent::features::FeatureTable;
use qkdsent::select::{self, BoostParams, TreeNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random small table with missing cells and repeated values.
pub fn random_table(seed: u64) -> (FeatureTable, Vec<usize>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(12..=40);
    let width = rng.random_range(2..=5);
    let classes = rng.random_range(2..=4);
    let labels: Vec<usize> = (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
    let rows = (0..n)
        .map(|i| {
            (0..width)
                .map(|f| {
                    if rng.random_bool(0.2) {
                        None
                    } else if f == 0 {
                        // Weakly informative, coarse.
                        Some((labels[i] as f64 + rng.random_range(0.0..1.5)).floor())
                    } else {
                        Some(rng.random_range(-1.0..1.0))
                    }
                })
                .collect()
        })
        .collect();
    let table = FeatureTable {
        names: (0..width).map(|f| format!("f{f}")).collect(),
        rows,
    };
    (table, labels, classes)
}

/// Compares depth-1, one-round trees against exhaustive enumeration.
/// Returns the number of trees compared.
pub fn check_split_oracle(seed: u64) -> Result<usize, String> {
    let (table, labels, classes) = random_table(seed);
    let params = BoostParams {
        rounds: 1,
        max_depth: 1,
        learning_rate: 0.3,
        lambda: 1.0,
        gamma: 0.0,
        min_child_weight: 0.5,
    };
    let ens = select::fit(&table, &labels, classes, &params).map_err(|e| e.to_string())?;
    let want = split_oracle::root_splits(&table.rows, &labels, classes, 1.0, 0.0, 0.5);
    for (c, (tree, expected)) in ens.trees.iter().zip(&want).enumerate() {
        let got = match tree.root() {
            TreeNode::Split {
                feature_index,
                threshold,
                default_left,
                gain,
                ..
            } => Some((*feature_index, *threshold, *default_left, *gain)),
            TreeNode::Leaf { .. } => None,
        };
        let expected = expected.map(|e| (e.feature, e.threshold, e.default_left, e.gain));
        match (got, expected) {
            (None, None) => {}
            (Some(a), Some(b)) if a.0 == b.0 && a.1 == b.1 && a.2 == b.2 => {
                if (a.3 - b.3).abs() > 1e-9 * b.3.abs().max(1.0) {
                    return Err(format!("seed {seed} class {c}: gain {} vs {}", a.3, b.3));
                }
            }
            _ => return Err(format!("seed {seed} class {c}: got {got:?}, oracle {expected:?}")),
        }
    }
    Ok(ens.trees.len())
}

use qkdsent::linksim::{preset, simulate, LinkParams};
use qkdsent::pipeline::LabeledLog;

/// One preset log per class, `points` long; `seed_offset` shifts every seed.
pub fn simulated_corpus(points: usize, seed_offset: u64) -> Vec<LabeledLog> {
    let link = LinkParams::default();
    (0..9u8)
        .map(|c| {
            let mut sc = preset(c).unwrap();
            sc.duration_points = points;
            sc.seed += seed_offset;
            LabeledLog {
                records: simulate(&link, &sc).unwrap(),
                label: c,
            }
        })
        .collect()
}
