//! Detectors for plug-in parameters of the marginal distribution.
//!
//! Monitoring for a change in a parameter `theta` (mean, variance, or a
//! quantile) replaces the stretch means in the `R`, `S`, `T` statistics
//! with plug-in estimates `theta(F_{j:k})` computed from the empirical
//! distribution of each stretch. The mean parameter reproduces the base
//! detectors exactly.
//!
//! Complexity per step: mean and variance windows come from prefix sums
//! (O(1) per split, linear pass per step); quantile windows are served by
//! a pair of order-statistic trees over the observed values (O(k log k)
//! per step).
//!
//! Normalization still needs the long-run variance of the *influence
//! values* of `theta`. Closed-form influence functions are used for the
//! mean (`x - mu`) and the variance (`(x - mu)^2 - sigma2`); the quantile
//! parameter would require a density estimate, so no normalization is
//! offered for it and an explicit `sigma` must be supplied instead.

use crate::detector::DetectorKind;
use crate::error::{Error, Result};
use crate::lrv::{long_run_variance, LrvEstimate};

/// Which marginal parameter the detectors track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParameterKind {
    Mean,
    Variance,
    /// Marginal quantile at a level in (0, 1).
    Quantile(f64),
}

impl ParameterKind {
    pub fn validate(&self) -> Result<()> {
        if let ParameterKind::Quantile(p) = self {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(Error::Config(format!(
                    "quantile level must lie in (0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }

    /// Parse `mean`, `variance` or `quantile:<level>`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let kind = match lower.as_str() {
            "mean" => ParameterKind::Mean,
            "variance" => ParameterKind::Variance,
            _ => {
                let Some(level) = lower.strip_prefix("quantile:") else {
                    return Err(Error::Config(format!(
                        "unknown parameter {s:?}; expected mean, variance or quantile:<level>"
                    )));
                };
                let p: f64 = level.parse().map_err(|_| {
                    Error::Config(format!("bad quantile level {level:?}"))
                })?;
                ParameterKind::Quantile(p)
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl std::fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParameterKind::Mean => write!(f, "mean"),
            ParameterKind::Variance => write!(f, "variance"),
            ParameterKind::Quantile(p) => write!(f, "quantile:{p}"),
        }
    }
}

/// Plug-in estimate of a parameter from one window of observations.
///
/// Mean and variance are the moments of the empirical distribution (the
/// variance uses divisor `n`); the quantile is the order statistic at the
/// 1-based index `ceil(p * n)` with no interpolation.
pub fn plugin_estimate(param: ParameterKind, window: &[f64]) -> Result<f64> {
    param.validate()?;
    if window.is_empty() {
        return Err(Error::Precondition("empty window".to_string()));
    }
    let n = window.len() as f64;
    Ok(match param {
        ParameterKind::Mean => window.iter().sum::<f64>() / n,
        ParameterKind::Variance => {
            let mean = window.iter().sum::<f64>() / n;
            window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
        }
        ParameterKind::Quantile(p) => {
            let mut sorted = window.to_vec();
            sorted.sort_by(f64::total_cmp);
            let idx = (p * n).ceil() as usize;
            sorted[idx.clamp(1, window.len()) - 1]
        }
    })
}

/// Fenwick tree over value ranks answering k-th smallest queries.
struct OrderStatTree {
    counts: Vec<usize>,
    len: usize,
}

impl OrderStatTree {
    fn new(n_ranks: usize) -> Self {
        Self {
            counts: vec![0; n_ranks + 1],
            len: 0,
        }
    }

    fn add(&mut self, rank: usize, delta: isize) {
        self.len = (self.len as isize + delta) as usize;
        let mut i = rank;
        while i < self.counts.len() {
            self.counts[i] = (self.counts[i] as isize + delta) as usize;
            i += i & i.wrapping_neg();
        }
    }

    /// Rank of the k-th smallest stored value (1-based `k <= len`).
    fn select(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.len);
        let mut remaining = k;
        let mut pos = 0usize;
        let mut step = self.counts.len().next_power_of_two() >> 1;
        while step > 0 {
            let next = pos + step;
            if next < self.counts.len() && self.counts[next] < remaining {
                remaining -= self.counts[next];
                pos = next;
            }
            step >>= 1;
        }
        pos + 1
    }
}

/// Incremental state for parameter monitoring: raw observations plus
/// centered first and second moment prefix sums.
///
/// Single-writer like the base detector state; queries are read-only.
#[derive(Clone, Debug)]
pub struct ParamState {
    m: usize,
    xs: Vec<f64>,
    center: f64,
    /// `pre_x[i]` = sum of `(x - center)` over the first `i` observations.
    pre_x: Vec<f64>,
    /// Same for squared centered observations.
    pre_x2: Vec<f64>,
}

impl ParamState {
    pub fn new(learning: &[f64]) -> Result<Self> {
        let m = learning.len();
        if m < 2 {
            return Err(Error::Config(format!(
                "learning sample must hold at least 2 observations, got {m}"
            )));
        }
        if let Some(bad) = learning.iter().find(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {bad} in the learning sample"
            )));
        }
        let center = learning.iter().sum::<f64>() / m as f64;
        let mut state = Self {
            m,
            xs: Vec::new(),
            center,
            pre_x: vec![0.0],
            pre_x2: vec![0.0],
        };
        for &x in learning {
            state.append(x);
        }
        Ok(state)
    }

    fn append(&mut self, x: f64) {
        let y = x - self.center;
        self.xs.push(x);
        self.pre_x.push(self.pre_x.last().unwrap() + y);
        self.pre_x2.push(self.pre_x2.last().unwrap() + y * y);
    }

    pub fn push(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Data(format!("non-finite observation {x}")));
        }
        self.append(x);
        Ok(())
    }

    pub fn learning_size(&self) -> usize {
        self.m
    }

    pub fn count(&self) -> usize {
        self.xs.len()
    }

    pub fn time_ratio(&self) -> f64 {
        self.count() as f64 / self.m as f64
    }

    /// Window mean over 1-based inclusive `[a, b]` from prefix sums.
    fn window_mean(&self, a: usize, b: usize) -> f64 {
        let n = (b - a + 1) as f64;
        self.center + (self.pre_x[b] - self.pre_x[a - 1]) / n
    }

    /// Biased window variance over 1-based inclusive `[a, b]`.
    fn window_variance(&self, a: usize, b: usize) -> f64 {
        let n = (b - a + 1) as f64;
        let s1 = (self.pre_x[b] - self.pre_x[a - 1]) / n;
        let s2 = (self.pre_x2[b] - self.pre_x2[a - 1]) / n;
        (s2 - s1 * s1).max(0.0)
    }

    fn require_split(&self) -> Result<()> {
        if self.count() <= self.m {
            return Err(Error::Precondition(format!(
                "parameter detectors need k >= m + 1 (k = {}, m = {})",
                self.count(),
                self.m
            )));
        }
        Ok(())
    }

    /// All weighted plug-in differences `j (k - j) / m^(3/2) *
    /// (theta[1..=j] - theta[j+1..=k])` for `j = m..k`.
    fn weighted_differences(&self, param: ParameterKind) -> Result<Vec<f64>> {
        self.require_split()?;
        param.validate()?;
        let k = self.count();
        let m = self.m;
        let norm = (m as f64) * (m as f64).sqrt();
        let weight = |j: usize| (j as f64) * ((k - j) as f64) / norm;

        let diffs = match param {
            ParameterKind::Mean => (m..k)
                .map(|j| weight(j) * (self.window_mean(1, j) - self.window_mean(j + 1, k)))
                .collect(),
            ParameterKind::Variance => (m..k)
                .map(|j| {
                    weight(j) * (self.window_variance(1, j) - self.window_variance(j + 1, k))
                })
                .collect(),
            ParameterKind::Quantile(p) => {
                // Order statistics over the two windows via rank trees.
                let mut sorted: Vec<f64> = self.xs.clone();
                sorted.sort_by(f64::total_cmp);
                sorted.dedup();
                let rank_of = |x: f64| {
                    sorted.partition_point(|&v| v < x) + 1 // 1-based
                };
                let mut front = OrderStatTree::new(sorted.len());
                let mut back = OrderStatTree::new(sorted.len());
                for &x in &self.xs[..m] {
                    front.add(rank_of(x), 1);
                }
                for &x in &self.xs[m..] {
                    back.add(rank_of(x), 1);
                }
                let mut out = Vec::with_capacity(k - m);
                for j in m..k {
                    if j > m {
                        let moved = self.xs[j - 1];
                        front.add(rank_of(moved), 1);
                        back.add(rank_of(moved), -1);
                    }
                    let front_idx = ((p * j as f64).ceil() as usize).clamp(1, j);
                    let back_n = k - j;
                    let back_idx = ((p * back_n as f64).ceil() as usize).clamp(1, back_n);
                    let theta_front = sorted[front.select(front_idx) - 1];
                    let theta_back = sorted[back.select(back_idx) - 1];
                    out.push(weight(j) * (theta_front - theta_back));
                }
                out
            }
        };
        Ok(diffs)
    }

    /// Raw parameter detector value; only `R`, `S`, `T` generalize.
    pub fn raw_value(&self, param: ParameterKind, kind: DetectorKind) -> Result<f64> {
        let diffs = self.weighted_differences(param)?;
        let mf = self.m as f64;
        Ok(match kind {
            DetectorKind::R => diffs.iter().fold(0.0f64, |acc, d| acc.max(d.abs())),
            DetectorKind::S => diffs.iter().map(|d| d.abs()).sum::<f64>() / mf,
            DetectorKind::T => (diffs.iter().map(|d| d * d).sum::<f64>() / mf).sqrt(),
            other => {
                return Err(Error::Config(format!(
                    "parameter detectors are defined for R, S and T, not {other}"
                )))
            }
        })
    }

    /// Split maximizing the weighted parameter difference, plus one;
    /// smallest index on ties.
    pub fn change_point_estimate(&self, param: ParameterKind) -> Result<usize> {
        let diffs = self.weighted_differences(param)?;
        let mut best = f64::NEG_INFINITY;
        let mut best_j = self.m;
        for (i, d) in diffs.iter().enumerate() {
            if d.abs() > best {
                best = d.abs();
                best_j = self.m + i;
            }
        }
        Ok(best_j + 1)
    }
}

/// Long-run variance of the empirical influence values of `param` on the
/// learning sample, for normalizing the parameter detectors.
pub fn influence_sigma(param: ParameterKind, learning: &[f64]) -> Result<LrvEstimate> {
    param.validate()?;
    if learning.len() < 4 {
        return Err(Error::Precondition(format!(
            "influence normalization needs m >= 4, got {}",
            learning.len()
        )));
    }
    match param {
        ParameterKind::Mean => long_run_variance(learning),
        ParameterKind::Variance => {
            let mu = plugin_estimate(ParameterKind::Mean, learning)?;
            let s2 = plugin_estimate(ParameterKind::Variance, learning)?;
            let influences: Vec<f64> = learning.iter().map(|x| (x - mu).powi(2) - s2).collect();
            long_run_variance(&influences)
        }
        ParameterKind::Quantile(_) => Err(Error::UnsupportedNormalization(
            "the influence function of a quantile involves the unknown marginal density; \
             supply an explicit sigma instead"
                .to_string(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorState;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn assert_close(got: f64, want: f64, rel: f64) {
        assert!(
            (got - want).abs() <= rel * want.abs().max(1e-12),
            "got {got}, want {want}"
        );
    }

    #[test]
    fn parameter_parsing() {
        assert_eq!(ParameterKind::parse("mean").unwrap(), ParameterKind::Mean);
        assert_eq!(
            ParameterKind::parse("VARIANCE").unwrap(),
            ParameterKind::Variance
        );
        assert_eq!(
            ParameterKind::parse("quantile:0.5").unwrap(),
            ParameterKind::Quantile(0.5)
        );
        assert!(ParameterKind::parse("quantile:1.5").is_err());
        assert!(ParameterKind::parse("median").is_err());
    }

    #[test]
    fn plugin_examples() {
        assert_eq!(
            plugin_estimate(ParameterKind::Variance, &[1.0, 1.0, 1.0]).unwrap(),
            0.0
        );
        assert_eq!(
            plugin_estimate(ParameterKind::Quantile(0.5), &[3.0, 1.0, 2.0]).unwrap(),
            2.0
        );
        assert!(plugin_estimate(ParameterKind::Mean, &[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let xs: Vec<f64> = (0..17).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert_close(
                plugin_estimate(ParameterKind::Mean, &xs).unwrap(),
                mean,
                1e-14,
            );
        }
    }

    #[test]
    fn mean_parameter_reduces_to_base_detectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let m = rng.gen_range(4..12);
            let learning: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut base = DetectorState::new(&learning).unwrap();
            let mut param = ParamState::new(&learning).unwrap();
            for _ in 0..rng.gen_range(5..40) {
                let x: f64 = rng.gen_range(-2.0..2.0);
                base.push(x).unwrap();
                param.push(x).unwrap();
            }
            for kind in [DetectorKind::R, DetectorKind::S, DetectorKind::T] {
                let want = base.raw_value(kind).unwrap();
                let got = param.raw_value(ParameterKind::Mean, kind).unwrap();
                assert_close(got, want, 1e-10);
            }
            assert_eq!(
                base.change_point_estimate().unwrap(),
                param.change_point_estimate(ParameterKind::Mean).unwrap()
            );
        }
    }

    #[test]
    fn constant_data_gives_zero_for_all_parameters() {
        let mut s = ParamState::new(&[2.0; 8]).unwrap();
        for _ in 0..20 {
            s.push(2.0).unwrap();
        }
        for param in [
            ParameterKind::Mean,
            ParameterKind::Variance,
            ParameterKind::Quantile(0.3),
        ] {
            for kind in [DetectorKind::R, DetectorKind::S, DetectorKind::T] {
                assert_eq!(s.raw_value(param, kind).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn variance_step_makes_the_detector_grow() {
        // Variance jumps from 1 to 4 mid-stream; the raw statistic must
        // trend upward as evidence accumulates.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let learning: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let mut s = ParamState::new(&learning).unwrap();
        let mut milestones = Vec::new();
        for i in 0..1200 {
            let scale = if i < 100 { 1.0 } else { 2.0 };
            s.push(scale * rng.sample::<f64, _>(StandardNormal)).unwrap();
            if [200usize, 600, 1200].contains(&(i + 1)) {
                milestones.push(
                    s.raw_value(ParameterKind::Variance, DetectorKind::R)
                        .unwrap(),
                );
            }
        }
        assert!(milestones[1] > milestones[0]);
        assert!(milestones[2] > milestones[1]);
    }

    #[test]
    fn quantile_windows_match_direct_sorting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let learning: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut s = ParamState::new(&learning).unwrap();
        let mut xs = learning.clone();
        for _ in 0..40 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            xs.push(x);
            s.push(x).unwrap();
        }
        for &p in &[0.25, 0.5, 0.9] {
            let got = s
                .raw_value(ParameterKind::Quantile(p), DetectorKind::R)
                .unwrap();
            let k = xs.len();
            let m = learning.len();
            let want = (m..k)
                .map(|j| {
                    let front = plugin_estimate(ParameterKind::Quantile(p), &xs[..j]).unwrap();
                    let back = plugin_estimate(ParameterKind::Quantile(p), &xs[j..]).unwrap();
                    j as f64 * (k - j) as f64 / (m as f64).powf(1.5) * (front - back).abs()
                })
                .fold(0.0f64, f64::max);
            assert_close(got, want, 1e-12);
        }
    }

    #[test]
    fn param_detectors_reject_e_and_q() {
        let mut s = ParamState::new(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        s.push(5.0).unwrap();
        assert!(s.raw_value(ParameterKind::Mean, DetectorKind::E).is_err());
        assert!(s.raw_value(ParameterKind::Mean, DetectorKind::Q).is_err());
    }

    #[test]
    fn influence_sigma_for_the_mean_is_the_plain_lrv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let a = influence_sigma(ParameterKind::Mean, &xs).unwrap();
        let b = long_run_variance(&xs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn influence_sigma_for_the_variance_under_iid_normal() {
        // Var((X - mu)^2) = 2 for standard normals.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let est = influence_sigma(ParameterKind::Variance, &xs).unwrap();
        assert!(
            (est.sigma2 - 2.0).abs() < 0.4,
            "sigma2 = {} not within 20% of 2",
            est.sigma2
        );
    }

    #[test]
    fn variance_influence_scales_with_fourth_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..800).map(|_| rng.sample(StandardNormal)).collect();
        let base = influence_sigma(ParameterKind::Variance, &xs).unwrap();
        let c = 1.7f64;
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        let est = influence_sigma(ParameterKind::Variance, &scaled).unwrap();
        assert_close(est.sigma2, c.powi(4) * base.sigma2, 1e-9);
    }

    #[test]
    fn quantile_normalization_is_refused() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(
            influence_sigma(ParameterKind::Quantile(0.5), &xs),
            Err(Error::UnsupportedNormalization(_))
        ));
    }

    #[test]
    fn prefix_variance_matches_two_pass_on_long_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1_000_000;
        let learning: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let mut s = ParamState::new(&learning).unwrap();
        let mut xs = learning.clone();
        for _ in 0..(n - 100) {
            let x: f64 = rng.sample::<f64, _>(StandardNormal) + 0.25;
            xs.push(x);
            s.push(x).unwrap();
        }
        for &(a, b) in &[(1usize, n), (1, 100), (500_000, n), (123_456, 654_321)] {
            let window = &xs[a - 1..b];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            let two_pass =
                window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / window.len() as f64;
            assert_close(s.window_variance(a, b), two_pass, 1e-9);
        }
    }
}
