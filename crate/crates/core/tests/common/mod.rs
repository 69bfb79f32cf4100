#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sparsedict::allocator::{Alpha, LayerChoices, MckpInstance};

/// Random allocation instance with `1..=max_layers` layers of
/// `1..=max_options` options each. Every layer carries the dense option
/// `(full, 0.0)`, so the budget is always coverable by some selection
/// when it is at least the sum of per-layer minimum costs.
///
/// Errors come from a coarse grid so ties occur. With `large`, layer sizes
/// reach 10^6 parameters, making `P_total` exceed the default precision.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_layers: usize,
    max_options: usize,
    large: bool,
) -> MckpInstance {
    let n = rng.random_range(1..=max_layers);
    let layers: Vec<LayerChoices> = (0..n)
        .map(|_| {
            let full: u64 = if large {
                rng.random_range(64..=1024) * rng.random_range(64..=1024)
            } else {
                rng.random_range(4..=40)
            };
            let m = rng.random_range(1..=max_options);
            let mut options: Vec<(u64, f64)> = (0..m - 1)
                .map(|_| {
                    (
                        rng.random_range(1..full),
                        rng.random_range(1..=20) as f64 * 0.05,
                    )
                })
                .collect();
            options.push((full, 0.0));
            LayerChoices {
                full_cost: full,
                options,
            }
        })
        .collect();
    let min_sum: u64 = layers
        .iter()
        .map(|l| l.options.iter().map(|o| o.0).min().unwrap())
        .sum();
    let p_total: u64 = layers.iter().map(|l| l.full_cost).sum();
    let budget_kept = rng.random_range(min_sum..=p_total);
    let e_ref = {
        let all: Vec<f64> = layers
            .iter()
            .flat_map(|l| l.options.iter().map(|o| o.1))
            .collect();
        all.iter().sum::<f64>() / all.len() as f64
    };
    let alpha = if rng.random_bool(0.5) {
        Alpha::Auto
    } else {
        Alpha::Fixed(rng.random_range(0.5..4.0))
    };
    MckpInstance {
        layers,
        budget_kept,
        alpha,
        e_ref,
        param_precision: p_total,
    }
}

/// Largest `|de / dc|` between cost-adjacent options of any layer.
pub fn max_error_slope(inst: &MckpInstance) -> f64 {
    let mut slope: f64 = 0.0;
    for l in &inst.layers {
        let mut o = l.options.clone();
        o.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for w in o.windows(2) {
            if w[1].0 > w[0].0 {
                slope = slope.max((w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0) as f64);
            }
        }
    }
    slope
}
