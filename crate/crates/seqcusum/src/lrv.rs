//! Long-run variance estimation on the learning sample.
//!
//! The normalizing `sigma` of the monitoring schemes is the square root of
//! the long-run variance `sum_i Cov(X_0, X_i)`. It is estimated with the
//! quadratic-spectral kernel and the AR(1) plug-in automatic bandwidth:
//!
//! ```text
//! sigma2 = g(0) + 2 * sum_{i=1}^{m-1} k(i / S_m) * g(i)
//! ```
//!
//! with biased autocovariances `g` (divisor `m`), kernel
//! `k(x) = 25 / (12 pi^2 x^2) * (sin(z)/z - cos(z))`, `z = 6 pi x / 5`,
//! and bandwidth `S_m = 1.3221 * (a2 * m)^(1/5)` where
//! `a2 = 4 rho^2 / (1 - rho)^4` comes from the fitted lag-1
//! autocorrelation. The fitted `rho` is clamped to `[-0.97, 0.97]` and the
//! bandwidth floored at 0.01 so that near-iid samples degrade to the
//! marginal variance instead of a zero bandwidth.
//!
//! Quadratic-spectral weights with estimated autocovariances do not
//! guarantee a positive estimate; a non-positive result is floored at
//! `g(0) * 1e-3` and flagged.

use crate::error::{Error, Result};
use rustfft::{num_complex::Complex, FftPlanner};

/// Lag-1 autocorrelations are clamped to this magnitude before the
/// plug-in formula, preventing bandwidth blow-up on near-unit-root fits.
pub const RHO_CLAMP: f64 = 0.97;

/// Smallest bandwidth ever used; reached in the iid limit.
pub const MIN_BANDWIDTH: f64 = 0.01;

/// Floor factor applied to `g(0)` when the estimate is non-positive.
pub const FLOOR_FACTOR: f64 = 1e-3;

/// A long-run variance estimate and the bandwidth that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrvEstimate {
    pub sigma2: f64,
    pub sigma: f64,
    pub bandwidth: f64,
    pub m: usize,
    /// True when the raw kernel estimate was non-positive and got floored.
    pub floored: bool,
}

/// Biased sample autocovariance at the given lag (divisor `m`).
pub fn autocovariance(sample: &[f64], lag: usize) -> Result<f64> {
    let m = sample.len();
    if lag >= m {
        return Err(Error::Precondition(format!(
            "autocovariance lag {lag} out of range for a sample of size {m}"
        )));
    }
    let mean = sample.iter().sum::<f64>() / m as f64;
    let mut acc = 0.0;
    for i in 0..(m - lag) {
        acc += (sample[i] - mean) * (sample[i + lag] - mean);
    }
    Ok(acc / m as f64)
}

/// All biased autocovariances `g(0..m-1)` at once.
///
/// Uses an FFT correlation for larger samples and the direct sums below a
/// small cutoff; both routes agree to rounding.
fn autocovariances_all(sample: &[f64]) -> Vec<f64> {
    let m = sample.len();
    if m < 256 {
        return (0..m)
            .map(|lag| autocovariance(sample, lag).expect("lag < m"))
            .collect();
    }
    let mean = sample.iter().sum::<f64>() / m as f64;
    let n_fft = (2 * m).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n_fft);
    buf.extend(sample.iter().map(|&x| Complex::new(x - mean, 0.0)));
    buf.resize(n_fft, Complex::new(0.0, 0.0));

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n_fft).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(n_fft).process(&mut buf);

    let scale = 1.0 / (n_fft as f64 * m as f64);
    buf[..m].iter().map(|v| v.re * scale).collect()
}

/// The quadratic spectral kernel, with `k(0) = 1` by continuous extension.
pub fn qs_kernel(x: f64) -> f64 {
    let z = 1.2 * std::f64::consts::PI * x;
    if z.abs() < 1e-4 {
        // Series expansion of (sin z / z - cos z) * 3 / z^2 near zero.
        return 1.0 - z * z / 10.0;
    }
    3.0 / (z * z) * ((z.sin() / z) - z.cos())
}

/// AR(1) plug-in bandwidth for the quadratic spectral kernel:
/// `1.3221 * (4 rho^2 / (1 - rho)^4 * m)^(1/5)`, floored at
/// [`MIN_BANDWIDTH`]. `rho` is clamped to `[-RHO_CLAMP, RHO_CLAMP]`.
pub fn ar1_plugin_bandwidth(rho: f64, m: usize) -> f64 {
    let rho = rho.clamp(-RHO_CLAMP, RHO_CLAMP);
    let denom = (1.0 - rho).powi(4);
    let alpha2 = 4.0 * rho * rho / denom;
    (1.3221 * (alpha2 * m as f64).powf(0.2)).max(MIN_BANDWIDTH)
}

fn check_sample(sample: &[f64]) -> Result<f64> {
    let m = sample.len();
    if m < 4 {
        return Err(Error::Precondition(format!(
            "long-run variance estimation needs m >= 4, got {m}"
        )));
    }
    if let Some(bad) = sample.iter().find(|x| !x.is_finite()) {
        return Err(Error::Data(format!("non-finite value {bad} in sample")));
    }
    let g0 = autocovariance(sample, 0)?;
    if g0 <= 0.0 {
        return Err(Error::DegenerateData(
            "sample variance is zero; no variance normalization is possible".to_string(),
        ));
    }
    Ok(g0)
}

/// Automatic bandwidth for the given sample.
pub fn andrews_bandwidth(sample: &[f64]) -> Result<f64> {
    let g0 = check_sample(sample)?;
    let g1 = autocovariance(sample, 1)?;
    Ok(ar1_plugin_bandwidth(g1 / g0, sample.len()))
}

/// Quadratic-spectral long-run variance estimate with automatic bandwidth.
pub fn long_run_variance(sample: &[f64]) -> Result<LrvEstimate> {
    let g0 = check_sample(sample)?;
    let m = sample.len();
    let gammas = autocovariances_all(sample);
    let bandwidth = ar1_plugin_bandwidth(gammas[1] / gammas[0], m);

    let mut sigma2 = gammas[0];
    for (lag, &g) in gammas.iter().enumerate().skip(1) {
        sigma2 += 2.0 * qs_kernel(lag as f64 / bandwidth) * g;
    }

    let floored = sigma2 <= 0.0;
    if floored {
        sigma2 = g0 * FLOOR_FACTOR;
    }
    Ok(LrvEstimate {
        sigma2,
        sigma: sigma2.sqrt(),
        bandwidth,
        m,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn assert_close(got: f64, want: f64, rel: f64) {
        assert!(
            (got - want).abs() <= rel * want.abs().max(1e-300),
            "got {got}, want {want}"
        );
    }

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn autocovariance_examples() {
        assert_eq!(autocovariance(&[1.0, 1.0, 1.0, 1.0], 0).unwrap(), 0.0);
        assert_eq!(autocovariance(&[1.0, 1.0, 1.0, 1.0], 2).unwrap(), 0.0);

        let alt = [1.0, -1.0, 1.0, -1.0];
        assert_close(autocovariance(&alt, 0).unwrap(), 1.0, 1e-15);
        assert_close(autocovariance(&alt, 1).unwrap(), -0.75, 1e-15);

        assert!(matches!(
            autocovariance(&alt, 4),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn lag_zero_is_biased_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let xs: Vec<f64> = (0..50).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert_close(autocovariance(&xs, 0).unwrap(), var, 1e-12);
        }
    }

    #[test]
    fn fft_and_direct_autocovariances_agree() {
        let xs = normal_sample(700, 2);
        let all = autocovariances_all(&xs);
        assert_eq!(all.len(), xs.len());
        for lag in [0usize, 1, 2, 17, 350, 699] {
            assert_close(all[lag], autocovariance(&xs, lag).unwrap(), 1e-10);
        }
    }

    #[test]
    fn qs_kernel_values() {
        assert_eq!(qs_kernel(0.0), 1.0);
        // High-precision evaluation of the closed form at x = 1.
        assert_close(qs_kernel(1.0), 0.13786058167459355, 1e-13);
        // Continuity of the small-argument branch.
        assert_close(qs_kernel(1e-5), 1.0, 1e-9);
        for &x in &[0.3, 0.77, 1.9, 4.2] {
            assert_close(qs_kernel(-x), qs_kernel(x), 1e-15);
        }
    }

    #[test]
    fn plugin_bandwidth_closed_form() {
        // rho = 0.5, m = 1000: 1.3221 * 16000^(1/5).
        assert_close(ar1_plugin_bandwidth(0.5, 1000), 9.164067971354191, 1e-12);
        // iid limit floors at the minimal bandwidth.
        assert_eq!(ar1_plugin_bandwidth(0.0, 1000), MIN_BANDWIDTH);
        // Monotone in |rho| for fixed m.
        let mut last = 0.0;
        for i in 1..=96 {
            let bw = ar1_plugin_bandwidth(i as f64 / 100.0, 500);
            assert!(bw > last);
            last = bw;
        }
        // Clamp kicks in past +-0.97.
        assert_eq!(
            ar1_plugin_bandwidth(0.999, 500),
            ar1_plugin_bandwidth(0.97, 500)
        );
    }

    #[test]
    fn degenerate_sample_is_rejected() {
        assert!(matches!(
            long_run_variance(&[2.0; 50]),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            long_run_variance(&[1.0, 2.0, 3.0]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            andrews_bandwidth(&[1.0, f64::NAN, 0.0, 2.0]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn iid_estimate_near_unit_variance() {
        let xs = normal_sample(20_000, 3);
        let est = long_run_variance(&xs).unwrap();
        assert!(
            est.sigma2 > 0.9 && est.sigma2 < 1.1,
            "sigma2 = {}",
            est.sigma2
        );
        assert!(!est.floored);
        assert_close(est.sigma, est.sigma2.sqrt(), 1e-15);
    }

    #[test]
    fn ar1_estimate_near_closed_form() {
        // AR(1) with phi = 0.5 and unit innovations: LRV = 1 / (1 - phi)^2 = 4.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = 0.0f64;
        for _ in 0..200 {
            x = 0.5 * x + rng.sample::<f64, _>(StandardNormal);
        }
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                x = 0.5 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let est = long_run_variance(&xs).unwrap();
        assert!(
            (est.sigma2 - 4.0).abs() < 0.6,
            "sigma2 = {} not within 15% of 4",
            est.sigma2
        );
    }

    #[test]
    fn scale_equivariance_and_location_invariance() {
        let xs = normal_sample(800, 5);
        let base = long_run_variance(&xs).unwrap();
        for &c in &[0.5, 2.0, 37.0] {
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let est = long_run_variance(&scaled).unwrap();
            assert_close(est.sigma2, c * c * base.sigma2, 1e-10);
        }
        for &a in &[-10.0, 3.25, 1e4] {
            let shifted: Vec<f64> = xs.iter().map(|x| x + a).collect();
            let est = long_run_variance(&shifted).unwrap();
            assert_close(est.sigma2, base.sigma2, 1e-10);
        }
    }
}
