//! Physical-model properties of the link simulator.

use qkdsent::linksim::{preset, simulate, steady_state, steady_state_for, LinkParams};
use qkdsent::telemetry::SampleRecord;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// QBER rises strictly with launch power; SKR falls strictly with loss.
pub fn monotonicity() -> Result<(), String> {
    let link = LinkParams::default();
    for edfa in [false, true] {
        let mut prev = f64::NEG_INFINITY;
        for step in 0..=70 {
            let p = -40.0 + 0.5 * step as f64;
            let q = steady_state_for(&link, &[p, p - 2.0], edfa, 0.0).unwrap().qber_mean;
            check(q > prev, || format!("qber not increasing at {p} dBm (edfa {edfa})"))?;
            prev = q;
        }
    }
    let mut prev = steady_state_for(&link, &[], false, 0.0).unwrap();
    for step in 1..=40 {
        let a = -0.15 * step as f64;
        let s = steady_state_for(&link, &[], false, a).unwrap();
        check(s.skr_mean < prev.skr_mean, || format!("skr not decreasing at {a} dB"))?;
        check(s.qber_mean > prev.qber_mean, || format!("qber not increasing at {a} dB"))?;
        prev = s;
    }
    Ok(())
}

/// Orderings across the preset classes, both noise-free and from samples.
pub fn preset_grid() -> Result<(), String> {
    let link = LinkParams::default();
    let steady: Vec<_> = (0..9).map(|c| steady_state(&link, &preset(c).unwrap()).unwrap()).collect();
    let sampled: Vec<(f64, f64)> = (0..9)
        .map(|c| {
            let r = simulate(&link, &preset(c).unwrap()).unwrap();
            (mean(r.iter().map(|s| s.qber)), mean(r.iter().map(|s| s.skr)))
        })
        .collect();
    for pair in [[0usize, 3], [3, 4], [4, 5], [0, 1], [0, 2]] {
        let [a, b] = pair;
        check(steady[a].qber_mean < steady[b].qber_mean, || format!("steady qber {a} !< {b}"))?;
        check(sampled[a].0 < sampled[b].0, || format!("sampled qber {a} !< {b}"))?;
    }
    for pair in [[0usize, 6], [6, 7], [7, 8]] {
        let [a, b] = pair;
        check(steady[a].skr_mean > steady[b].skr_mean, || format!("steady skr {a} !> {b}"))?;
        check(sampled[a].1 > sampled[b].1, || format!("sampled skr {a} !> {b}"))?;
    }
    Ok(())
}

/// Same seed gives bit-identical logs; another seed does not.
pub fn determinism() -> Result<(), String> {
    let link = LinkParams::default();
    let bits = |r: &[SampleRecord]| -> Vec<(i64, u64, u64)> {
        r.iter().map(|s| (s.timestamp, s.qber.to_bits(), s.skr.to_bits())).collect()
    };
    for c in 0..9 {
        let sc = preset(c).unwrap();
        let a = simulate(&link, &sc).unwrap();
        let b = simulate(&link, &sc).unwrap();
        check(bits(&a) == bits(&b), || format!("class {c} not reproducible"))?;
        let mut other = sc.clone();
        other.seed += 1;
        check(bits(&a) != bits(&simulate(&link, &other).unwrap()), || {
            format!("class {c} ignores its seed")
        })?;
    }
    Ok(())
}

/// Every sample lies in its physical range, including under heavy noise.
pub fn physical_ranges() -> Result<(), String> {
    let link = LinkParams::default();
    for c in 0..9 {
        for (phi, sigma) in [(0.7, 0.03), (0.95, 0.5), (0.0, 2.0)] {
            let mut sc = preset(c).unwrap();
            sc.ar_phi = phi;
            sc.ar_sigma = sigma;
            sc.duration_points = 2000;
            let r = simulate(&link, &sc).unwrap();
            check(r.len() == 2000, || "wrong length".into())?;
            for s in &r {
                check((0.0..=1.0).contains(&s.qber) && s.skr >= 0.0 && s.skr.is_finite(), || {
                    format!("class {c}: sample {s:?} out of range")
                })?;
            }
            check(r.windows(2).all(|w| w[0].timestamp < w[1].timestamp), || {
                format!("class {c}: timestamps not increasing")
            })?;
        }
    }
    Ok(())
}
