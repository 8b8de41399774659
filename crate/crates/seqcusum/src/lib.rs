//! Open-end sequential change-point detection for univariate series.
//!
//! The crate monitors a stream for a change in the mean (or, more
//! generally, in a plug-in parameter) of a stationary time series. A
//! learning sample of size `m` pins down the long-run variance; after
//! each new observation a detector statistic is rescaled by a threshold
//! function and compared against a calibrated quantile of its open-end
//! limit. Monitoring can run indefinitely under stationarity with an
//! asymptotic false-alarm probability of `alpha`.
//!
//! The pieces:
//!
//! * [`detector`] — the five detector statistics (`R`, `S`, `T`, `E`, `Q`),
//!   their threshold functions and the incremental prefix-sum state;
//! * [`lrv`] — quadratic-spectral long-run variance estimation with
//!   automatic bandwidth;
//! * [`calibrate`] — Monte Carlo estimation of the limiting quantiles,
//!   including the asymptotic-regression extrapolation and the
//!   unit-interval Brownian functionals for `E` and `Q`;
//! * [`table`] — persistence for calibrated quantile tables, plus the
//!   table shipped with the crate;
//! * [`monitor`] — the live monitoring engine with alarm reports and
//!   change-point localization;
//! * [`param`] — plug-in parameter detectors (mean, variance, quantile);
//! * [`sim`] — data-generating models M1–M10 and the level/power
//!   experiment harness.
//!
//! ```
//! use seqcusum::detector::{DetectorKind, ThresholdSpec};
//! use seqcusum::monitor::{Monitor, MonitorConfig, QuantileSource, StepOutcome};
//! use seqcusum::table::QuantileTable;
//!
//! // Learning sample: zero-mean noise. Monitoring: the same, then a jump.
//! let learning: Vec<f64> = (0..100).map(|i| ((i * 37 % 19) as f64 - 9.0) / 9.0).collect();
//! let config = MonitorConfig {
//!     spec: ThresholdSpec::new(DetectorKind::T, 0.001, 0.0).unwrap(),
//!     alpha: 0.05,
//!     quantile_source: QuantileSource::Table,
//! };
//! let mut monitor = Monitor::new(config, &learning, &QuantileTable::shipped()).unwrap();
//! let mut alarm = None;
//! for i in 0..500 {
//!     let x = ((i * 37 % 19) as f64 - 9.0) / 9.0 + if i >= 100 { 3.0 } else { 0.0 };
//!     match monitor.step(x).unwrap() {
//!         StepOutcome::Continue(_) => {}
//!         StepOutcome::Alarm(report) => {
//!             alarm = Some(report);
//!             break;
//!         }
//!     }
//! }
//! let report = alarm.expect("a three-sigma jump must raise an alarm");
//! assert!(report.change_point_estimate >= 101);
//! ```

pub mod calibrate;
pub mod detector;
pub mod error;
mod hull;
pub mod lrv;
pub mod monitor;
pub mod param;
pub mod regression;
pub mod sim;
pub mod table;

pub use error::{Error, Result};
