//! Detector statistics and threshold functions for open-end monitoring.
//!
//! After observation `k` arrives, every j in `m..k` is treated as a
//! candidate split of `X_1..X_k` into a front stretch and a back stretch,
//! and the detectors aggregate the weighted mean differences over all
//! splits. With centered prefix sums `S_j = sum_{i<=j} (X_i - c)`, where
//! `c` is the learning-sample mean, the weighted difference collapses to
//!
//! ```text
//! j (k - j) (mean(X[1..=j]) - mean(X[j+1..=k])) = k S_j - j S_k
//! ```
//!
//! which is what makes incremental evaluation cheap:
//!
//! * `R`: max of `|k S_j - j S_k|` — two convex-hull queries, O(log k);
//! * `S`: L1 sum of the same terms — linear pass per step (the sign of
//!   `k S_j - j S_k` changes with `k`, so no closed accumulator exists);
//! * `T`: L2 sum — O(1) from the accumulators `Σ S_j²`, `Σ j S_j`, `Σ j²`;
//! * `E`: max of `|k S_j - j S_k| / j` — linear pass (the weight is not a
//!   single linear form, so the hulls do not apply);
//! * `Q`: the ordinary CUSUM against the learning mean — O(1).
//!
//! Centering keeps `|S_j|` of order `sqrt(j)` under stationarity instead
//! of order `j`, which preserves precision over long monitoring runs. The
//! detectors themselves are location invariant, so centering does not
//! change their values in exact arithmetic.

use crate::error::{Error, Result};
use crate::hull::{MonotoneHull, Side};

/// Default floor for the burn-in weight inside threshold functions.
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// The five detector statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    /// Maximally selected weighted mean difference over all splits.
    R,
    /// L1 aggregation of the weighted mean differences.
    S,
    /// L2 aggregation of the weighted mean differences.
    T,
    /// Maximum of the tail-weighted mean differences.
    E,
    /// Ordinary CUSUM: learning mean against the post-learning mean.
    Q,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::R,
        DetectorKind::S,
        DetectorKind::T,
        DetectorKind::E,
        DetectorKind::Q,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::R => "R",
            DetectorKind::S => "S",
            DetectorKind::T => "T",
            DetectorKind::E => "E",
            DetectorKind::Q => "Q",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(DetectorKind::R),
            "S" | "s" => Ok(DetectorKind::S),
            "T" | "t" => Ok(DetectorKind::T),
            "E" | "e" => Ok(DetectorKind::E),
            "Q" | "q" => Ok(DetectorKind::Q),
            other => Err(Error::Config(format!(
                "unknown detector {other:?}; expected one of R, S, T, E, Q"
            ))),
        }
    }

    /// Exponent of the power-law part of the threshold function.
    ///
    /// `E` and `Q` use the fixed exponent 1; their thresholds do not
    /// involve `eta`.
    fn threshold_exponent(&self, eta: f64) -> f64 {
        match self {
            DetectorKind::R => 1.5 + eta,
            DetectorKind::S => 2.5 + eta,
            DetectorKind::T => 2.0 + eta,
            DetectorKind::E | DetectorKind::Q => 1.0,
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A detector together with the `(eta, gamma, epsilon)` parameters of its
/// threshold function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdSpec {
    pub kind: DetectorKind,
    pub eta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl ThresholdSpec {
    pub fn new(kind: DetectorKind, eta: f64, gamma: f64) -> Result<Self> {
        Self::with_epsilon(kind, eta, gamma, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(kind: DetectorKind, eta: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::Config(format!("eta must be finite and >= 0, got {eta}")));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Config(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        Ok(Self {
            kind,
            eta,
            gamma,
            epsilon,
        })
    }

    /// The burn-in weight `max(((t - 1) / t)^gamma, epsilon)`.
    ///
    /// For `gamma == 0` the weight is identically 1, including at `t == 1`.
    pub fn gamma_weight(&self, t: f64) -> f64 {
        if self.gamma == 0.0 {
            return 1.0;
        }
        ((t - 1.0) / t).powf(self.gamma).max(self.epsilon)
    }

    /// Threshold-function value `w(t)` for `t = k / m >= 1`.
    pub fn weight(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(Error::Precondition(format!(
                "threshold functions are defined for t >= 1, got {t}"
            )));
        }
        Ok(t.powf(self.kind.threshold_exponent(self.eta)) * self.gamma_weight(t))
    }

    /// Advisory messages about statistically risky parameter choices.
    ///
    /// With `eta == 0` the open-end supremum has an almost surely infinite
    /// limit for `R`, so no finite quantile controls the false-alarm rate.
    /// Large `eta` deflates the threshold early on and favors false alarms
    /// near the start of the monitoring.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.eta == 0.0 {
            out.push(
                "eta = 0: the open-end limit is almost surely infinite; a finite \
                 calibrated quantile cannot control the false-alarm rate"
                    .to_string(),
            );
        } else if self.eta >= 0.05 {
            out.push(format!(
                "eta = {} is large: the (k/m)^-eta factor favors false alarms early \
                 in the monitoring; 0.005 or 0.001 are the recommended choices",
                self.eta
            ));
        }
        out
    }
}

/// A detector evaluation at time `k`: raw statistic, threshold-function
/// value at `t = k/m`, and the normalized value `raw / (sigma * threshold)`
/// that is compared against a calibrated quantile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorValue {
    pub k: usize,
    pub raw: f64,
    pub threshold: f64,
    pub normalized: f64,
}

/// Incremental per-observation state: centered prefix sums, the two hulls
/// answering `R`'s maximization, and the L2 accumulators behind `T`.
///
/// Single-writer: `push` must be externally serialized with the read-only
/// queries. Memory grows by one `f64` per observation (plus hull vertices,
/// a subset of the points); prefix sums are retained for the life of the
/// monitor because `R`, `S`, `E` and change-point localization need them.
#[derive(Clone, Debug)]
pub struct DetectorState {
    m: usize,
    k: usize,
    center: f64,
    // Kahan-compensated running sum of centered observations.
    sum: f64,
    comp: f64,
    /// `prefix[i]` is `S_{m+i}` for `i = 0..=(k - m)`.
    prefix: Vec<f64>,
    upper: MonotoneHull,
    lower: MonotoneHull,
    // Kahan-compensated L2 accumulators over j = m..k-1.
    acc_sq: KahanSum,    // Σ S_j²
    acc_cross: KahanSum, // Σ j S_j
    acc_idx: KahanSum,   // Σ j²
}

#[derive(Clone, Copy, Debug, Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

impl DetectorState {
    /// Consume the learning sample `X_1..X_m` and set up monitoring state
    /// at `k = m`.
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
            k: 0,
            center,
            sum: 0.0,
            comp: 0.0,
            prefix: Vec::new(),
            upper: MonotoneHull::new(Side::Upper),
            lower: MonotoneHull::new(Side::Lower),
            acc_sq: KahanSum::default(),
            acc_cross: KahanSum::default(),
            acc_idx: KahanSum::default(),
        };
        for &x in learning {
            state.accumulate(x);
        }
        state.k = m;
        state.prefix.push(state.sum); // S_m, zero up to rounding
        Ok(state)
    }

    fn accumulate(&mut self, x: f64) {
        let y = (x - self.center) - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    /// Ingest one monitoring observation.
    pub fn push(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Data(format!("non-finite observation {x}")));
        }
        // The previous endpoint becomes an eligible split index j = k.
        let j = self.k;
        let s_j = *self.prefix.last().expect("prefix never empty");
        let jf = j as f64;
        self.upper.push(jf, s_j);
        self.lower.push(jf, s_j);
        self.acc_sq.add(s_j * s_j);
        self.acc_cross.add(jf * s_j);
        self.acc_idx.add(jf * jf);

        self.accumulate(x);
        self.k += 1;
        self.prefix.push(self.sum);
        Ok(())
    }

    /// Learning-sample size `m`.
    pub fn learning_size(&self) -> usize {
        self.m
    }

    /// Total number of observations consumed, `k >= m`.
    pub fn count(&self) -> usize {
        self.k
    }

    /// The centering constant (mean of the learning sample).
    pub fn learning_mean(&self) -> f64 {
        self.center
    }

    /// Monitoring time `t = k / m`.
    pub fn time_ratio(&self) -> f64 {
        self.k as f64 / self.m as f64
    }

    fn require_split(&self) -> Result<()> {
        if self.k <= self.m {
            return Err(Error::Precondition(format!(
                "detector values need k >= m + 1 (k = {}, m = {})",
                self.k, self.m
            )));
        }
        Ok(())
    }

    /// Raw detector value at the current `k`.
    pub fn raw_value(&self, kind: DetectorKind) -> Result<f64> {
        self.require_split()?;
        let kf = self.k as f64;
        let mf = self.m as f64;
        let s_k = *self.prefix.last().unwrap();
        let splits = self.k - self.m; // number of eligible j
        let value = match kind {
            DetectorKind::R => {
                let up = self.upper.max_linear(kf, -s_k);
                let lo = self.lower.max_linear(-kf, s_k);
                up.max(lo) / (mf * mf.sqrt())
            }
            DetectorKind::E => {
                let mut best = 0.0f64;
                for i in 0..splits {
                    let jf = (self.m + i) as f64;
                    let v = (kf * self.prefix[i] - jf * s_k).abs() / jf;
                    if v > best {
                        best = v;
                    }
                }
                best / mf.sqrt()
            }
            DetectorKind::Q => {
                let s_m = self.prefix[0];
                (kf * s_m - mf * s_k).abs() / (mf * mf.sqrt())
            }
            DetectorKind::S => {
                let mut acc = 0.0f64;
                for i in 0..splits {
                    let jf = (self.m + i) as f64;
                    acc += (kf * self.prefix[i] - jf * s_k).abs();
                }
                acc / (mf * mf * mf.sqrt())
            }
            DetectorKind::T => {
                let inner = kf * kf * self.acc_sq.value()
                    - 2.0 * kf * s_k * self.acc_cross.value()
                    + s_k * s_k * self.acc_idx.value();
                inner.max(0.0).sqrt() / (mf * mf)
            }
        };
        Ok(value)
    }

    /// Raw detector value by a direct pass over the stored prefix sums,
    /// bypassing the hulls and accumulators. Kept as a cross-check for the
    /// optimized paths.
    #[cfg(any(test, feature = "scan_fallback"))]
    pub fn raw_value_scan(&self, kind: DetectorKind) -> Result<f64> {
        self.require_split()?;
        let kf = self.k as f64;
        let mf = self.m as f64;
        let s_k = *self.prefix.last().unwrap();
        let splits = self.k - self.m;
        let terms = (0..splits).map(|i| {
            let jf = (self.m + i) as f64;
            (jf, kf * self.prefix[i] - jf * s_k)
        });
        let value = match kind {
            DetectorKind::R => {
                terms.map(|(_, d)| d.abs()).fold(0.0, f64::max) / (mf * mf.sqrt())
            }
            DetectorKind::E => terms.map(|(jf, d)| d.abs() / jf).fold(0.0, f64::max) / mf.sqrt(),
            DetectorKind::Q => {
                let s_m = self.prefix[0];
                (kf * s_m - mf * s_k).abs() / (mf * mf.sqrt())
            }
            DetectorKind::S => terms.map(|(_, d)| d.abs()).sum::<f64>() / (mf * mf * mf.sqrt()),
            DetectorKind::T => {
                terms.map(|(_, d)| d * d).sum::<f64>().sqrt() / (mf * mf)
            }
        };
        Ok(value)
    }

    /// Normalized detector value `raw / (sigma * w(k/m))`.
    pub fn normalized(&self, spec: &ThresholdSpec, sigma: f64) -> Result<DetectorValue> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        let raw = self.raw_value(spec.kind)?;
        let threshold = spec.weight(self.time_ratio())?;
        Ok(DetectorValue {
            k: self.k,
            raw,
            threshold,
            normalized: raw / (sigma * threshold),
        })
    }

    /// Split index maximizing the weighted mean difference, plus one.
    ///
    /// Ties break toward the smallest index, i.e. the earliest split that
    /// is consistent with the observed maximum.
    pub fn change_point_estimate(&self) -> Result<usize> {
        self.require_split()?;
        let kf = self.k as f64;
        let s_k = *self.prefix.last().unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut best_j = self.m;
        for i in 0..(self.k - self.m) {
            let j = self.m + i;
            let v = (kf * self.prefix[i] - j as f64 * s_k).abs();
            if v > best {
                best = v;
                best_j = j;
            }
        }
        Ok(best_j + 1)
    }
}
