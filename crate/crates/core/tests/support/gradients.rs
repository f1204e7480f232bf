//! Gradient checks on randomly drawn networks and inputs.

use qkdsent::classify::{gradient_check, MlpModel, DEFAULT_HIDDEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pre-activations must stay this far from zero so ±ε never crosses a kink.
pub const KINK_MARGIN: f64 = 1e-3;

/// Max relative gradient error for ten (model, input) pairs, with the layer
/// sizes of each.
pub fn ten_configurations() -> Vec<(Vec<usize>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
    let mut out = Vec::new();
    for i in 0..10u64 {
        let sizes: Vec<usize> = if i == 0 {
            std::iter::once(50)
                .chain(DEFAULT_HIDDEN)
                .chain(std::iter::once(9))
                .collect()
        } else {
            let depth = rng.random_range(1..=3);
            let mut sizes = vec![rng.random_range(2..=50)];
            sizes.extend((0..depth).map(|_| rng.random_range(4..=64)));
            sizes.push(rng.random_range(2..=9));
            sizes
        };
        let model = MlpModel::init(&sizes, 100 + i).unwrap();
        let input = loop {
            let x: Vec<Option<f64>> = (0..sizes[0])
                .map(|_| (!rng.random_bool(0.1)).then(|| rng.random_range(-1.0..2.0)))
                .collect();
            if model.min_abs_hidden_preactivation(&x).unwrap() > KINK_MARGIN {
                break x;
            }
        };
        let label = rng.random_range(0..*sizes.last().unwrap());
        out.push((sizes, gradient_check(&model, &input, label, 1e-5).unwrap()));
    }
    out
}
