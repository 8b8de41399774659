//! Regenerate the simulated cells of the shipped quantile table.
//!
//! The `E` cells come from unit-interval Brownian simulation at a scale
//! well past the acceptance tolerances (200k paths on a 2^15 grid); `Q`
//! is printed alongside as a cross-check against its reflection-principle
//! closed form. Run with `--release`.

use seqcusum::calibrate::brownian_quantile_unit_interval;
use seqcusum::detector::DetectorKind;

fn main() {
    let grid = 1 << 15;
    let paths = 200_000;
    let seed = 20_260_810;
    for alpha in [0.01, 0.05, 0.10] {
        let e = brownian_quantile_unit_interval(DetectorKind::E, 0.0, alpha, grid, paths, seed)
            .unwrap();
        let q = brownian_quantile_unit_interval(DetectorKind::Q, 0.0, alpha, grid, paths, seed)
            .unwrap();
        println!(
            "alpha={alpha}: E={:.6} (se {:.4})  Q={:.6} (se {:.4})",
            e.quantile, e.stderr, q.quantile, q.stderr
        );
    }
}
