//! Monte Carlo calibration of the open-end limiting quantiles.
//!
//! The quantiles that the monitoring schemes compare against belong to
//! suprema over an *infinite* time horizon, so plain simulation at any
//! fixed horizon underestimates them. The estimation procedure is:
//!
//! 1. simulate `n_paths` normalized detector paths from independent
//!    standard normals with `sigma = 1`, tracking the running supremum;
//! 2. record the supremum at the dyadic checkpoints `k = m + 2^p` for
//!    `p = p_min..=p_max`;
//! 3. take per-checkpoint empirical `(1 - alpha)`-quantiles;
//! 4. fit the asymptotic regression curve to `(p, quantile)` and use its
//!    upper asymptote as the open-end quantile estimate.
//!
//! Detectors `E` and `Q` have limits expressible on the unit interval, so
//! their quantiles come from direct Brownian-path simulation instead
//! ([`brownian_quantile_unit_interval`]).
//!
//! Everything here is deterministic given `(seed, config)`: per-path
//! generators are seeded by path index and reductions are index-ordered,
//! so results are bit-identical across thread counts.

use crate::detector::{DetectorKind, DetectorState, ThresholdSpec};
use crate::error::{Error, Result};
use crate::regression::fit_asymptotic_regression;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Where a quantile value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Calibrated in this process.
    Simulated,
    /// Loaded from the table distributed with the crate.
    Shipped,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Simulated => "simulated",
            Provenance::Shipped => "shipped",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "simulated" => Ok(Provenance::Simulated),
            "shipped" => Ok(Provenance::Shipped),
            other => Err(Error::Config(format!("unknown provenance {other:?}"))),
        }
    }
}

/// A calibrated quantile for one `(detector, eta, gamma, alpha)` cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileEntry {
    pub kind: DetectorKind,
    pub eta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub quantile: f64,
    pub stderr: f64,
    pub provenance: Provenance,
}

/// Parameters of a path-simulation calibration run.
#[derive(Clone, Debug)]
pub struct CalibrationConfig {
    /// Learning-sample size of the simulated paths.
    pub m_sim: usize,
    /// Number of Monte Carlo paths.
    pub n_paths: usize,
    /// Checkpoint exponents: suprema are recorded at `k = m + 2^p`.
    pub p_min: u32,
    pub p_max: u32,
    pub spec: ThresholdSpec,
    /// Significance levels, each in (0, 1/2).
    pub alpha_list: Vec<f64>,
    pub seed: u64,
}

impl CalibrationConfig {
    /// Desk-scale defaults: quick enough for a workstation while staying
    /// within a few percent of the full-scale values.
    pub fn desk(spec: ThresholdSpec, alpha_list: Vec<f64>, seed: u64) -> Self {
        Self {
            m_sim: 100,
            n_paths: 4000,
            p_min: 10,
            p_max: 14,
            spec,
            alpha_list,
            seed,
        }
    }

    /// Full-scale parameters matching the shipped table (hours of CPU).
    pub fn full_scale(spec: ThresholdSpec, alpha_list: Vec<f64>, seed: u64) -> Self {
        Self {
            m_sim: 500,
            n_paths: 15000,
            p_min: 10,
            p_max: 18,
            spec,
            alpha_list,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_sim < 2 {
            return Err(Error::Config(format!(
                "m_sim must be at least 2, got {}",
                self.m_sim
            )));
        }
        if self.n_paths < 100 {
            return Err(Error::Config(format!(
                "calibration needs at least 100 paths, got {}",
                self.n_paths
            )));
        }
        if !(2 <= self.p_min && self.p_min < self.p_max && self.p_max <= 30) {
            return Err(Error::Config(format!(
                "checkpoint exponents must satisfy 2 <= p_min < p_max <= 30, got {}..{}",
                self.p_min, self.p_max
            )));
        }
        for &a in &self.alpha_list {
            if !(a > 0.0 && a < 0.5) {
                return Err(Error::Config(format!(
                    "significance levels must lie in (0, 1/2), got {a}"
                )));
            }
        }
        if self.alpha_list.is_empty() {
            return Err(Error::Config("no significance levels given".to_string()));
        }
        Ok(())
    }
}

/// Simulate one normalized detector path from standard normals and return
/// the running supremum at each checkpoint `(p, sup)`.
///
/// Deterministic given `(config.seed, path_seed)`.
pub fn simulate_normalized_sup_path(
    config: &CalibrationConfig,
    path_seed: u64,
) -> Result<Vec<(u32, f64)>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(path_seed);

    let learning: Vec<f64> = (0..config.m_sim)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let mut state = DetectorState::new(&learning)?;
    let spec = config.spec;

    let horizon = 1usize << config.p_max;
    let mut sup = 0.0f64;
    let mut out = Vec::with_capacity((config.p_max - config.p_min + 1) as usize);
    for step in 1..=horizon {
        state
            .push(rng.sample(StandardNormal))
            .expect("normal draws are finite");
        let value = state
            .normalized(&spec, 1.0)
            .expect("state has k >= m + 1 after a push");
        if value.normalized > sup {
            sup = value.normalized;
        }
        if step.is_power_of_two() {
            let p = step.trailing_zeros();
            if p >= config.p_min {
                out.push((p, sup));
            }
        }
    }
    Ok(out)
}

/// Empirical `(1 - alpha)`-quantile: the order statistic at the 1-based
/// index `ceil((1 - alpha) * n)`.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.len() < 100 {
        return Err(Error::Calibration(format!(
            "quantile estimation needs at least 100 values, got {}",
            values.len()
        )));
    }
    Ok(order_statistic(values, alpha))
}

fn order_statistic(values: &[f64], alpha: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((1.0 - alpha) * n as f64).ceil() as usize;
    sorted[idx.clamp(1, n) - 1]
}

/// Per-checkpoint empirical quantiles across paths, as `(p, quantile)`
/// pairs ready for the asymptotic regression.
pub fn empirical_quantiles(
    sups: &[Vec<(u32, f64)>],
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    if sups.is_empty() {
        return Err(Error::Calibration("no paths given".to_string()));
    }
    let checkpoints = sups[0].len();
    let mut out = Vec::with_capacity(checkpoints);
    for i in 0..checkpoints {
        let p = sups[0][i].0;
        let column: Vec<f64> = sups
            .iter()
            .map(|path| {
                debug_assert_eq!(path[i].0, p);
                path[i].1
            })
            .collect();
        out.push((p as f64, empirical_quantile(&column, alpha)?));
    }
    Ok(out)
}

fn quantile_from_batch(sups: &[Vec<(u32, f64)>], alpha: f64) -> Result<f64> {
    let points = empirical_quantiles(sups, alpha)?;
    let fit = fit_asymptotic_regression(&points)?;
    Ok(fit.d)
}

/// Full calibration: simulate paths, extrapolate per-level quantiles, and
/// attach a replication standard error.
///
/// The standard error splits the paths into 10 disjoint batches (when at
/// least 100 paths per batch are available), repeats the whole estimation
/// per batch, and reports the standard deviation of the batch estimates
/// divided by `sqrt(batches)`.
pub fn calibrate(config: &CalibrationConfig) -> Result<Vec<QuantileEntry>> {
    config.validate()?;
    let sups: Vec<Vec<(u32, f64)>> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_normalized_sup_path(config, i))
        .collect::<Result<_>>()?;

    let n_batches = (config.n_paths / 100).min(10);
    let batch_len = config.n_paths / n_batches.max(1);

    let mut entries = Vec::with_capacity(config.alpha_list.len());
    for &alpha in &config.alpha_list {
        let quantile = quantile_from_batch(&sups, alpha)?;
        if !(quantile > 0.0) {
            return Err(Error::Calibration(format!(
                "calibrated quantile must be positive, got {quantile}"
            )));
        }
        let stderr = if n_batches >= 2 {
            let estimates: Vec<f64> = (0..n_batches)
                .map(|b| quantile_from_batch(&sups[b * batch_len..(b + 1) * batch_len], alpha))
                .collect::<Result<_>>()?;
            let mean = estimates.iter().sum::<f64>() / n_batches as f64;
            let var = estimates.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
                / (n_batches - 1) as f64;
            (var / n_batches as f64).sqrt()
        } else {
            0.0
        };
        entries.push(QuantileEntry {
            kind: config.spec.kind,
            eta: config.spec.eta,
            gamma: config.spec.gamma,
            alpha,
            quantile,
            stderr,
            provenance: Provenance::Simulated,
        });
    }
    Ok(entries)
}

/// Supremum functionals of one Brownian path on a uniform grid of [0, 1]:
/// the running-maximum functional behind `Q` and the range functional
/// behind `E`, both divided by `t^gamma` (with the zero-epsilon
/// convention).
fn brownian_unit_sups<R: Rng>(gamma: f64, grid_size: usize, rng: &mut R) -> (f64, f64) {
    let scale = 1.0 / (grid_size as f64).sqrt();
    let mut w = 0.0f64;
    let mut run_min = 0.0f64;
    let mut run_max = 0.0f64;
    let mut q_sup = 0.0f64;
    let mut e_sup = 0.0f64;
    for i in 1..=grid_size {
        w += scale * rng.sample::<f64, _>(StandardNormal);
        run_min = run_min.min(w);
        run_max = run_max.max(w);
        let weight = if gamma == 0.0 {
            1.0
        } else {
            (i as f64 / grid_size as f64).powf(gamma)
        };
        let q = w / weight;
        if q > q_sup {
            q_sup = q;
        }
        let e = (w - run_min).max(run_max - w) / weight;
        if e > e_sup {
            e_sup = e;
        }
    }
    (q_sup, e_sup)
}

/// Quantile of the unit-interval Brownian limit of `E` or `Q` by grid
/// simulation.
///
/// `gamma` must lie in `[0, 1/2)`; the epsilon floor of the threshold
/// family is taken as zero here, matching how these two limits are used.
pub fn brownian_quantile_unit_interval(
    kind: DetectorKind,
    gamma: f64,
    alpha: f64,
    grid_size: usize,
    n_paths: usize,
    seed: u64,
) -> Result<QuantileEntry> {
    if !matches!(kind, DetectorKind::E | DetectorKind::Q) {
        return Err(Error::Config(format!(
            "unit-interval Brownian quantiles exist for E and Q, not {kind}"
        )));
    }
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::Config(format!(
            "gamma must lie in [0, 1/2) for the unit-interval limits, got {gamma}"
        )));
    }
    if grid_size < 1 << 10 {
        return Err(Error::Config(format!(
            "grid_size must be at least 2^10, got {grid_size}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n_paths < 100 {
        return Err(Error::Config(format!(
            "at least 100 paths required, got {n_paths}"
        )));
    }

    let sups: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let (q_sup, e_sup) = brownian_unit_sups(gamma, grid_size, &mut rng);
            match kind {
                DetectorKind::Q => q_sup,
                _ => e_sup,
            }
        })
        .collect();

    let quantile = empirical_quantile(&sups, alpha)?;
    let n_batches = (n_paths / 100).min(10);
    let stderr = if n_batches >= 2 {
        let batch_len = n_paths / n_batches;
        let estimates: Vec<f64> = (0..n_batches)
            .map(|b| order_statistic(&sups[b * batch_len..(b + 1) * batch_len], alpha))
            .collect();
        let mean = estimates.iter().sum::<f64>() / n_batches as f64;
        let var = estimates.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
            / (n_batches - 1) as f64;
        (var / n_batches as f64).sqrt()
    } else {
        0.0
    };

    Ok(QuantileEntry {
        kind,
        eta: 0.0,
        gamma,
        alpha,
        quantile,
        stderr,
        provenance: Provenance::Simulated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_spec(kind: DetectorKind) -> ThresholdSpec {
        ThresholdSpec::new(kind, 0.01, 0.0).unwrap()
    }

    fn tiny_config(kind: DetectorKind) -> CalibrationConfig {
        CalibrationConfig {
            m_sim: 20,
            n_paths: 300,
            p_min: 4,
            p_max: 8,
            spec: quick_spec(kind),
            alpha_list: vec![0.01, 0.05, 0.10],
            seed: 99,
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_config(DetectorKind::R);
        cfg.n_paths = 50;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config(DetectorKind::R);
        cfg.p_min = 8;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config(DetectorKind::R);
        cfg.alpha_list = vec![0.6];
        assert!(cfg.validate().is_err());
        assert!(tiny_config(DetectorKind::R).validate().is_ok());
    }

    #[test]
    fn path_sups_are_nonnegative_and_monotone_in_p() {
        let cfg = tiny_config(DetectorKind::T);
        for path in 0..20u64 {
            let sups = simulate_normalized_sup_path(&cfg, path).unwrap();
            assert_eq!(sups.len(), 5);
            assert!(sups.windows(2).all(|w| w[1].1 >= w[0].1));
            assert!(sups.iter().all(|&(_, s)| s > 0.0));
        }
    }

    #[test]
    fn paths_are_deterministic() {
        let cfg = tiny_config(DetectorKind::R);
        let a = simulate_normalized_sup_path(&cfg, 7).unwrap();
        let b = simulate_normalized_sup_path(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_normalized_sup_path(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_quantile_definition() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        // ceil(0.5 * 100) = 50th order statistic.
        assert_eq!(empirical_quantile(&vals, 0.5).unwrap(), 50.0);
        // ceil(0.95 * 100) = 95th.
        assert_eq!(empirical_quantile(&vals, 0.05).unwrap(), 95.0);
        assert!(empirical_quantile(&vals[..99], 0.05).is_err());

        let four = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(order_statistic(&four, 0.5), 2.0);
    }

    #[test]
    fn checkpoint_quantiles_inherit_monotonicity() {
        let cfg = tiny_config(DetectorKind::S);
        let sups: Vec<_> = (0..300u64)
            .map(|i| simulate_normalized_sup_path(&cfg, i).unwrap())
            .collect();
        let points = empirical_quantiles(&sups, 0.05).unwrap();
        assert!(points.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn calibrate_orders_quantiles_and_reproduces() {
        let cfg = tiny_config(DetectorKind::R);
        let entries = calibrate(&cfg).unwrap();
        assert_eq!(entries.len(), 3);
        assert!(entries[0].quantile > entries[1].quantile);
        assert!(entries[1].quantile > entries[2].quantile);
        assert!(entries.iter().all(|e| e.quantile > 0.0 && e.stderr >= 0.0));
        assert!(entries
            .iter()
            .all(|e| e.provenance == Provenance::Simulated));

        let again = calibrate(&cfg).unwrap();
        for (a, b) in entries.iter().zip(&again) {
            assert_eq!(a.quantile.to_bits(), b.quantile.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        }
    }

    #[test]
    fn brownian_input_checks() {
        let e = brownian_quantile_unit_interval(DetectorKind::R, 0.0, 0.05, 1 << 10, 200, 1);
        assert!(e.is_err());
        let e = brownian_quantile_unit_interval(DetectorKind::Q, 0.5, 0.05, 1 << 10, 200, 1);
        assert!(e.is_err());
        let e = brownian_quantile_unit_interval(DetectorKind::Q, 0.0, 0.05, 512, 200, 1);
        assert!(e.is_err());
        let e = brownian_quantile_unit_interval(DetectorKind::Q, 0.0, 0.05, 1 << 10, 50, 1);
        assert!(e.is_err());
    }

    #[test]
    fn e_functional_dominates_q_functional_pathwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            for &gamma in &[0.0, 0.3] {
                let (q_sup, e_sup) = brownian_unit_sups(gamma, 1 << 10, &mut rng);
                assert!(e_sup >= q_sup);
                assert!(q_sup >= 0.0);
            }
        }
    }

    #[test]
    fn brownian_reflection_checks_at_small_scale() {
        // sup of W on [0,1] is distributed as |N(0,1)|; at this scale the
        // grid bias and Monte Carlo error stay well inside the band.
        let q95 =
            brownian_quantile_unit_interval(DetectorKind::Q, 0.0, 0.05, 1 << 10, 4000, 42)
                .unwrap();
        assert!(
            (q95.quantile - 1.9599639845400545).abs() < 0.1,
            "quantile = {}",
            q95.quantile
        );
        // The median of sup W is the 0.75 normal quantile by reflection.
        let q50 =
            brownian_quantile_unit_interval(DetectorKind::Q, 0.0, 0.5, 1 << 10, 4000, 42)
                .unwrap();
        assert!(
            (q50.quantile - 0.6744897501960817).abs() < 0.06,
            "median = {}",
            q50.quantile
        );

        let e95 =
            brownian_quantile_unit_interval(DetectorKind::E, 0.0, 0.05, 1 << 10, 4000, 42)
                .unwrap();
        assert!(e95.quantile >= q95.quantile);
    }
}
