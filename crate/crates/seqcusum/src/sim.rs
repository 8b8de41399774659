//! Data-generating models and replicated monitoring experiments.
//!
//! Ten models cover independent, linear, nonlinear and heteroskedastic
//! dependence as well as count data:
//!
//! * M1-M5 — AR(1) with standard normal innovations and autoregressive
//!   coefficient 0, 0.1, 0.3, 0.5, 0.7;
//! * M6 — iid Student t with 5 degrees of freedom (raw draws);
//! * M7 — GARCH(1,1), `omega = 0.012`, `beta = 0.919`, `alpha = 0.072`,
//!   mimicking daily equity log-returns;
//! * M8 — `X_i = 0.6 sin(X_{i-1}) + e_i`;
//! * M9 — `X_i = (0.8 - 1.1 exp(-50 X_{i-1}^2)) X_{i-1} + 0.1 e_i`;
//! * M10 — iid Poisson with mean 3.
//!
//! Recursive models start at zero (GARCH at its stationary variance) and
//! discard a burn-in of 100 observations. Experiments replicate the full
//! monitoring pipeline: each replication draws a fresh series, estimates
//! sigma from its own learning stretch, resolves quantiles, and monitors
//! until alarm or horizon. Replications are independent work units with
//! seeds derived from the replication index, and results are reduced in
//! index order, so tables are identical across thread counts.

use crate::detector::{DetectorKind, ThresholdSpec};
use crate::error::{Error, Result};
use crate::lrv::long_run_variance;
use crate::monitor::{Monitor, MonitorConfig, QuantileSource, RunReport};
use crate::table::QuantileTable;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal, StudentT};
use rayon::prelude::*;
use std::fmt::Write as _;

/// Observations discarded before a recursive model's output starts.
pub const BURN_IN: usize = 100;

/// The ten data-generating models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
    M8,
    M9,
    M10,
}

impl ModelId {
    pub const ALL: [ModelId; 10] = [
        ModelId::M1,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6,
        ModelId::M7,
        ModelId::M8,
        ModelId::M9,
        ModelId::M10,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        let upper = s.to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|m| m.to_string() == upper)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}; expected M1..M10")))
    }

    fn ar_coefficient(&self) -> Option<f64> {
        match self {
            ModelId::M1 => Some(0.0),
            ModelId::M2 => Some(0.1),
            ModelId::M3 => Some(0.3),
            ModelId::M4 => Some(0.5),
            ModelId::M5 => Some(0.7),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let idx = Self::ALL.iter().position(|m| m == self).unwrap() + 1;
        write!(f, "M{idx}")
    }
}

fn generate_with_burn(model: ModelId, n: usize, seed: u64, burn: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n + burn;
    let mut out = Vec::with_capacity(total);
    match model {
        ModelId::M1 | ModelId::M2 | ModelId::M3 | ModelId::M4 | ModelId::M5 => {
            let phi = model.ar_coefficient().unwrap();
            let mut x = 0.0f64;
            for _ in 0..total {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                out.push(x);
            }
        }
        ModelId::M6 => {
            let t5 = StudentT::new(5.0).expect("valid degrees of freedom");
            out.extend((0..n).map(|_| rng.sample(t5)));
            return out;
        }
        ModelId::M7 => {
            let (omega, beta, alpha) = (0.012, 0.919, 0.072);
            let mut var = omega / (1.0 - beta - alpha);
            let mut x = 0.0f64;
            for _ in 0..total {
                var = omega + beta * var + alpha * x * x;
                x = var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                out.push(x);
            }
        }
        ModelId::M8 => {
            let mut x = 0.0f64;
            for _ in 0..total {
                x = 0.6 * x.sin() + rng.sample::<f64, _>(StandardNormal);
                out.push(x);
            }
        }
        ModelId::M9 => {
            let mut x = 0.0f64;
            for _ in 0..total {
                x = (0.8 - 1.1 * (-50.0 * x * x).exp()) * x
                    + 0.1 * rng.sample::<f64, _>(StandardNormal);
                out.push(x);
            }
        }
        ModelId::M10 => {
            let pois = Poisson::new(3.0).expect("valid rate");
            out.extend((0..n).map(|_| rng.sample::<f64, _>(pois)));
            return out;
        }
    }
    out.drain(..burn);
    out
}

/// Draw `n` observations from a model, deterministically in `seed`.
pub fn generate(model: ModelId, n: usize, seed: u64) -> Vec<f64> {
    generate_with_burn(model, n, seed, BURN_IN)
}

/// A mean shift: `delta` added to every observation after position
/// `k_star` (1-based).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftSpec {
    pub k_star: usize,
    pub delta: f64,
}

/// Add the shift in place.
pub fn inject_shift(series: &mut [f64], shift: ShiftSpec) -> Result<()> {
    if shift.k_star >= series.len() {
        return Err(Error::Config(format!(
            "shift position {} lies at or past the series end {}",
            shift.k_star,
            series.len()
        )));
    }
    for x in &mut series[shift.k_star..] {
        *x += shift.delta;
    }
    Ok(())
}

/// One detector column of an experiment table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorCell {
    pub spec: ThresholdSpec,
    pub alpha: f64,
    /// Bypass the quantile table for this cell (`f64::INFINITY` disables
    /// alarms entirely).
    pub quantile_override: Option<f64>,
}

impl DetectorCell {
    pub fn new(kind: DetectorKind, eta: f64, gamma: f64, alpha: f64) -> Result<Self> {
        Ok(Self {
            spec: ThresholdSpec::new(kind, eta, gamma)?,
            alpha,
            quantile_override: None,
        })
    }

    /// Parse `kind:eta:gamma:alpha`, e.g. `T:0.001:0:0.05`.
    pub fn parse(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split(':').collect();
        if fields.len() != 4 {
            return Err(Error::Config(format!(
                "detector cell {s:?} must have the form kind:eta:gamma:alpha"
            )));
        }
        let kind = DetectorKind::parse(fields[0])?;
        let num = |i: usize, name: &str| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {name} in detector cell {s:?}")))
        };
        Self::new(kind, num(1, "eta")?, num(2, "gamma")?, num(3, "alpha")?)
    }
}

/// Configuration of a replicated level or power experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelId,
    /// Learning-sample size; the first `m` observations of each series.
    pub m: usize,
    /// Total horizon including the learning sample.
    pub n: usize,
    pub shift: Option<ShiftSpec>,
    pub detectors: Vec<DetectorCell>,
    pub replications: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.n <= self.m {
            return Err(Error::Config(format!(
                "horizon n = {} must exceed the learning size m = {}",
                self.n, self.m
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("at least one replication required".to_string()));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("no detector cells given".to_string()));
        }
        if let Some(shift) = self.shift {
            if shift.k_star < self.m {
                return Err(Error::Config(format!(
                    "shift position {} precedes the learning sample end {}",
                    shift.k_star, self.m
                )));
            }
        }
        Ok(())
    }
}

/// Aggregated outcome of one detector cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub spec: ThresholdSpec,
    pub alpha: f64,
    pub quantile: f64,
    /// Per-replication alarm index (absolute, learning included), `None`
    /// when the replication survived to the horizon.
    pub alarm_indices: Vec<Option<usize>>,
    /// Mean of `alarm_index - k_star` over alarmed replications; only for
    /// power experiments with at least one alarm.
    pub mean_delay: Option<f64>,
}

impl CellResult {
    pub fn rejections(&self) -> usize {
        self.alarm_indices.iter().filter(|a| a.is_some()).count()
    }

    pub fn rejection_rate(&self) -> f64 {
        self.rejections() as f64 / self.alarm_indices.len() as f64
    }
}

/// A finished experiment: one row per detector cell.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    /// CSV with columns `kind,eta,gamma,alpha,rejection_pct,mean_delay`;
    /// the delay column is empty when no alarm was observed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,eta,gamma,alpha,rejection_pct,mean_delay\n");
        for cell in &self.cells {
            let delay = cell
                .mean_delay
                .map(|d| format!("{d:.3}"))
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{:.3},{}",
                cell.spec.kind,
                cell.spec.eta,
                cell.spec.gamma,
                cell.alpha,
                100.0 * cell.rejection_rate(),
                delay
            )
            .expect("writing to a string cannot fail");
        }
        out
    }
}

fn derive_seed(seed: u64, rep: u64) -> u64 {
    // splitmix64 over the pair keeps replication streams decorrelated.
    let mut z = seed ^ rep.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_experiment(config: &ExperimentConfig, table: &QuantileTable) -> Result<ExperimentResult> {
    config.validate()?;
    // Resolve quantiles once so missing cells fail before any simulation.
    let quantiles: Vec<f64> = config
        .detectors
        .iter()
        .map(|cell| match cell.quantile_override {
            Some(q) if q > 0.0 => Ok(q),
            Some(q) => Err(Error::Config(format!(
                "quantile override must be positive, got {q}"
            ))),
            None => table
                .lookup(cell.spec.kind, cell.spec.eta, cell.spec.gamma, cell.alpha)
                .map(|e| e.quantile),
        })
        .collect::<Result<_>>()?;

    let per_rep: Vec<Vec<Option<usize>>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Option<usize>>> {
            let mut series = generate(config.model, config.n, derive_seed(config.seed, rep));
            if let Some(shift) = config.shift {
                inject_shift(&mut series, shift)?;
            }
            let learning = &series[..config.m];
            // One sigma estimate per replication, shared by all cells.
            let sigma = long_run_variance(learning)?.sigma;
            config
                .detectors
                .iter()
                .zip(&quantiles)
                .map(|(cell, &q)| {
                    let mc = MonitorConfig::new(cell.spec, cell.alpha, QuantileSource::Explicit(q))
                        .with_sigma(sigma);
                    let mut monitor = Monitor::new(mc, learning, table)?;
                    match monitor.run_stream(series[config.m..].iter().copied())? {
                        RunReport::Alarm(report) => Ok(Some(report.alarm_index)),
                        RunReport::NoAlarm { .. } => Ok(None),
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let cells = config
        .detectors
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let alarm_indices: Vec<Option<usize>> =
                per_rep.iter().map(|rep| rep[i]).collect();
            let mean_delay = config.shift.and_then(|shift| {
                let delays: Vec<f64> = alarm_indices
                    .iter()
                    .flatten()
                    .map(|&k| k as f64 - shift.k_star as f64)
                    .collect();
                if delays.is_empty() {
                    None
                } else {
                    Some(delays.iter().sum::<f64>() / delays.len() as f64)
                }
            });
            CellResult {
                spec: cell.spec,
                alpha: cell.alpha,
                quantile: quantiles[i],
                alarm_indices,
                mean_delay,
            }
        })
        .collect();

    Ok(ExperimentResult {
        config: config.clone(),
        cells,
    })
}

/// Rejection rates under stationarity. The configuration must not carry
/// a shift.
pub fn run_level_experiment(
    config: &ExperimentConfig,
    table: &QuantileTable,
) -> Result<ExperimentResult> {
    if config.shift.is_some() {
        return Err(Error::Config(
            "level experiments must not inject a shift".to_string(),
        ));
    }
    run_experiment(config, table)
}

/// Rejection rates and detection delays under an injected mean shift.
pub fn run_power_experiment(
    config: &ExperimentConfig,
    table: &QuantileTable,
) -> Result<ExperimentResult> {
    if config.shift.is_none() {
        return Err(Error::Config(
            "power experiments need a shift specification".to_string(),
        ));
    }
    run_experiment(config, table)
}
