//! The live open-end monitoring engine.
//!
//! A monitor is created from a learning sample: the long-run variance is
//! estimated once (from the learning sample only), the critical quantile
//! is resolved from a table or given explicitly, and the detector state
//! is initialized. Each incoming observation advances the detector; the
//! monitor raises an alarm the first time the normalized statistic
//! strictly exceeds the quantile, localizes the change, and freezes.
//! Re-running the same stream reproduces the identical alarm.

use crate::calibrate::QuantileEntry;
use crate::detector::{DetectorKind, DetectorState, DetectorValue, ThresholdSpec};
use crate::error::{Error, Result};
use crate::lrv::{long_run_variance, LrvEstimate};
use crate::param::{influence_sigma, ParamState, ParameterKind};
use crate::table::QuantileTable;

/// Where the critical quantile comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuantileSource {
    /// Resolve the `(kind, eta, gamma, alpha)` cell from the table passed
    /// to [`Monitor::new`]. Missing cells are an error, never interpolated.
    Table,
    /// Use this value directly, bypassing the table.
    Explicit(f64),
}

/// Monitoring configuration.
#[derive(Clone, Debug)]
pub struct MonitorConfig {
    pub spec: ThresholdSpec,
    pub alpha: f64,
    pub quantile_source: QuantileSource,
    /// Parameter under surveillance; the mean reproduces the base scheme.
    pub parameter: ParameterKind,
    /// Explicit long-run standard deviation, overriding estimation.
    pub sigma_override: Option<f64>,
}

impl MonitorConfig {
    pub fn new(spec: ThresholdSpec, alpha: f64, quantile_source: QuantileSource) -> Self {
        Self {
            spec,
            alpha,
            quantile_source,
            parameter: ParameterKind::Mean,
            sigma_override: None,
        }
    }

    pub fn with_parameter(mut self, parameter: ParameterKind) -> Self {
        self.parameter = parameter;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma_override = Some(sigma);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonitorStatus {
    Running,
    /// Alarmed at observation index `at`; the monitor no longer steps.
    Alarmed { at: usize },
}

/// Everything known at the moment an alarm is raised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlarmReport {
    /// Observation index `k` (1-based, learning sample included) at which
    /// the normalized detector exceeded the quantile.
    pub alarm_index: usize,
    pub raw: f64,
    pub threshold: f64,
    pub normalized: f64,
    pub quantile: f64,
    /// Estimated change position, in `[m + 1, alarm_index]`.
    pub change_point_estimate: usize,
    /// Monitoring observations consumed, `alarm_index - m`.
    pub consumed: usize,
}

/// Outcome of a single monitoring step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Continue(DetectorValue),
    Alarm(AlarmReport),
}

/// Outcome of driving a monitor over a whole stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunReport {
    Alarm(AlarmReport),
    NoAlarm {
        max_normalized: f64,
        /// Observation index at which the maximum was attained.
        at_k: usize,
        consumed: usize,
    },
}

enum EngineState {
    Mean(DetectorState),
    Param(ParamState),
}

/// A live open-end test.
pub struct Monitor {
    config: MonitorConfig,
    engine: EngineState,
    sigma: f64,
    lrv: Option<LrvEstimate>,
    quantile: f64,
    quantile_cell: Option<QuantileEntry>,
    status: MonitorStatus,
    consumed: usize,
    max_normalized: f64,
    max_normalized_at: usize,
    warnings: Vec<String>,
}

impl Monitor {
    pub fn new(config: MonitorConfig, learning: &[f64], table: &QuantileTable) -> Result<Self> {
        if !(config.alpha > 0.0 && config.alpha < 0.5) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1/2), got {}",
                config.alpha
            )));
        }
        config.parameter.validate()?;
        let kind = config.spec.kind;
        if config.parameter != ParameterKind::Mean
            && matches!(kind, DetectorKind::E | DetectorKind::Q)
        {
            return Err(Error::Config(format!(
                "parameter monitoring is defined for R, S and T, not {kind}"
            )));
        }
        if learning.len() < 4 {
            return Err(Error::Config(format!(
                "monitoring needs a learning sample of at least 4 observations, got {}",
                learning.len()
            )));
        }
        if let Some(bad) = learning.iter().find(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {bad} in the learning sample"
            )));
        }
        let mean = learning.iter().sum::<f64>() / learning.len() as f64;
        if learning.iter().all(|&x| x == mean) {
            return Err(Error::DegenerateData(
                "constant learning sample; sigma cannot be estimated".to_string(),
            ));
        }

        let mut warnings = config.spec.warnings();
        let (sigma, lrv) = match config.sigma_override {
            Some(s) => {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Config(format!(
                        "sigma must be finite and > 0, got {s}"
                    )));
                }
                (s, None)
            }
            None => {
                let est = match config.parameter {
                    ParameterKind::Mean => long_run_variance(learning)?,
                    other => influence_sigma(other, learning)?,
                };
                if est.floored {
                    warnings.push(format!(
                        "long-run variance estimate was non-positive and floored at {}",
                        est.sigma2
                    ));
                }
                (est.sigma, Some(est))
            }
        };

        let (quantile, quantile_cell) = match config.quantile_source {
            QuantileSource::Explicit(q) => {
                // +infinity is allowed: it disables alarms outright.
                if !(q > 0.0) {
                    return Err(Error::Config(format!(
                        "explicit quantile must be > 0, got {q}"
                    )));
                }
                (q, None)
            }
            QuantileSource::Table => {
                let cell =
                    table.lookup(kind, config.spec.eta, config.spec.gamma, config.alpha)?;
                (cell.quantile, Some(*cell))
            }
        };

        let engine = match config.parameter {
            ParameterKind::Mean => EngineState::Mean(DetectorState::new(learning)?),
            _ => EngineState::Param(ParamState::new(learning)?),
        };
        let m = learning.len();
        Ok(Self {
            config,
            engine,
            sigma,
            lrv,
            quantile,
            quantile_cell,
            status: MonitorStatus::Running,
            consumed: 0,
            max_normalized: 0.0,
            max_normalized_at: m,
            warnings,
        })
    }

    pub fn status(&self) -> MonitorStatus {
        self.status
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The long-run variance estimate, when sigma was not supplied
    /// explicitly.
    pub fn lrv_estimate(&self) -> Option<&LrvEstimate> {
        self.lrv.as_ref()
    }

    pub fn quantile(&self) -> f64 {
        self.quantile
    }

    pub fn quantile_cell(&self) -> Option<&QuantileEntry> {
        self.quantile_cell.as_ref()
    }

    pub fn learning_size(&self) -> usize {
        match &self.engine {
            EngineState::Mean(s) => s.learning_size(),
            EngineState::Param(s) => s.learning_size(),
        }
    }

    /// Monitoring observations consumed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Advisory messages collected at creation.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn evaluate(&self) -> Result<DetectorValue> {
        match &self.engine {
            EngineState::Mean(state) => state.normalized(&self.config.spec, self.sigma),
            EngineState::Param(state) => {
                let raw = state.raw_value(self.config.parameter, self.config.spec.kind)?;
                let threshold = self.config.spec.weight(state.time_ratio())?;
                Ok(DetectorValue {
                    k: state.count(),
                    raw,
                    threshold,
                    normalized: raw / (self.sigma * threshold),
                })
            }
        }
    }

    fn localize(&self) -> Result<usize> {
        match &self.engine {
            EngineState::Mean(state) => state.change_point_estimate(),
            EngineState::Param(state) => state.change_point_estimate(self.config.parameter),
        }
    }

    /// Feed one observation. Strict exceedance (`normalized > quantile`)
    /// raises the alarm; afterwards the monitor refuses further steps.
    pub fn step(&mut self, x: f64) -> Result<StepOutcome> {
        if let MonitorStatus::Alarmed { at } = self.status {
            return Err(Error::State(format!(
                "monitor already alarmed at observation {at}"
            )));
        }
        match &mut self.engine {
            EngineState::Mean(state) => state.push(x)?,
            EngineState::Param(state) => state.push(x)?,
        }
        self.consumed += 1;
        let value = self.evaluate()?;
        if value.normalized > self.max_normalized {
            self.max_normalized = value.normalized;
            self.max_normalized_at = value.k;
        }
        if value.normalized > self.quantile {
            self.status = MonitorStatus::Alarmed { at: value.k };
            let report = AlarmReport {
                alarm_index: value.k,
                raw: value.raw,
                threshold: value.threshold,
                normalized: value.normalized,
                quantile: self.quantile,
                change_point_estimate: self.localize()?,
                consumed: self.consumed,
            };
            return Ok(StepOutcome::Alarm(report));
        }
        Ok(StepOutcome::Continue(value))
    }

    /// Drive the monitor until an alarm or stream exhaustion.
    pub fn run_stream<I>(&mut self, source: I) -> Result<RunReport>
    where
        I: IntoIterator<Item = f64>,
    {
        for x in source {
            if let StepOutcome::Alarm(report) = self.step(x)? {
                return Ok(RunReport::Alarm(report));
            }
        }
        Ok(RunReport::NoAlarm {
            max_normalized: self.max_normalized,
            at_k: self.max_normalized_at,
            consumed: self.consumed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_learning(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn t_config() -> MonitorConfig {
        MonitorConfig::new(
            ThresholdSpec::new(DetectorKind::T, 0.001, 0.0).unwrap(),
            0.05,
            QuantileSource::Table,
        )
    }

    #[test]
    fn create_resolves_the_shipped_quantile() {
        let monitor = Monitor::new(t_config(), &normal_learning(100, 1), &QuantileTable::shipped())
            .unwrap();
        assert_eq!(monitor.quantile(), 1.121);
        assert!(monitor.sigma() > 0.0);
        assert!(monitor.warnings().is_empty());
        assert_eq!(monitor.status(), MonitorStatus::Running);
    }

    #[test]
    fn explicit_quantile_overrides_the_table() {
        let config = MonitorConfig::new(
            ThresholdSpec::new(DetectorKind::T, 0.001, 0.0).unwrap(),
            0.05,
            QuantileSource::Explicit(2.5),
        );
        let monitor =
            Monitor::new(config, &normal_learning(100, 2), &QuantileTable::shipped()).unwrap();
        assert_eq!(monitor.quantile(), 2.5);
        assert!(monitor.quantile_cell().is_none());
    }

    #[test]
    fn creation_rejects_bad_input() {
        let table = QuantileTable::shipped();
        assert!(matches!(
            Monitor::new(t_config(), &[1.0; 50], &table),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            Monitor::new(t_config(), &[1.0, 2.0, 3.0], &table),
            Err(Error::Config(_))
        ));
        let mut config = t_config();
        config.spec = ThresholdSpec::new(DetectorKind::T, 0.002, 0.0).unwrap();
        assert!(matches!(
            Monitor::new(config, &normal_learning(100, 3), &table),
            Err(Error::MissingQuantile(_))
        ));
        let config = t_config().with_parameter(ParameterKind::Quantile(0.5));
        assert!(matches!(
            Monitor::new(config, &normal_learning(100, 3), &table),
            Err(Error::UnsupportedNormalization(_))
        ));
        let mut config = t_config().with_parameter(ParameterKind::Variance);
        config.spec = ThresholdSpec::new(DetectorKind::Q, 0.001, 0.0).unwrap();
        assert!(matches!(
            Monitor::new(config, &normal_learning(100, 3), &table),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stream_at_the_learning_mean_never_alarms() {
        let learning = normal_learning(50, 4);
        let mean = learning.iter().sum::<f64>() / learning.len() as f64;
        let mut monitor = Monitor::new(t_config(), &learning, &QuantileTable::shipped()).unwrap();
        for _ in 0..1000 {
            match monitor.step(mean).unwrap() {
                StepOutcome::Continue(v) => assert!(v.normalized < 1e-10),
                StepOutcome::Alarm(_) => panic!("no alarm expected"),
            }
        }
    }

    #[test]
    fn a_two_sigma_shift_alarms_almost_surely() {
        let table = QuantileTable::shipped();
        let mut alarms_within_200 = 0;
        let runs = 200;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let learning: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
            let mut monitor = Monitor::new(t_config(), &learning, &table).unwrap();
            for _ in 0..200 {
                let x = rng.sample::<f64, _>(StandardNormal) + 2.0;
                if let StepOutcome::Alarm(report) = monitor.step(x).unwrap() {
                    assert!(report.normalized > report.quantile);
                    assert!(report.change_point_estimate >= 101);
                    assert!(report.change_point_estimate <= report.alarm_index);
                    alarms_within_200 += 1;
                    break;
                }
            }
        }
        assert!(
            alarms_within_200 >= runs * 99 / 100,
            "only {alarms_within_200}/{runs} runs alarmed within 200 steps"
        );
    }

    #[test]
    fn normalized_values_match_the_raw_detector_state() {
        let learning = normal_learning(30, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut monitor = Monitor::new(
            MonitorConfig::new(
                ThresholdSpec::new(DetectorKind::R, 0.001, 0.0).unwrap(),
                0.05,
                QuantileSource::Explicit(1e12),
            ),
            &learning,
            &QuantileTable::shipped(),
        )
        .unwrap();
        let mut state = DetectorState::new(&learning).unwrap();
        let spec = ThresholdSpec::new(DetectorKind::R, 0.001, 0.0).unwrap();
        for _ in 0..300 {
            let x: f64 = rng.sample(StandardNormal);
            state.push(x).unwrap();
            let direct = state.normalized(&spec, monitor.sigma()).unwrap();
            match monitor.step(x).unwrap() {
                StepOutcome::Continue(v) => assert_eq!(v, direct),
                StepOutcome::Alarm(_) => panic!("quantile was set out of reach"),
            }
        }
    }

    #[test]
    fn stop_once_and_replay() {
        let learning = normal_learning(40, 7);
        let stream: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            (0..500)
                .map(|i| rng.sample::<f64, _>(StandardNormal) + if i > 60 { 1.5 } else { 0.0 })
                .collect()
        };
        let table = QuantileTable::shipped();
        let mut first = Monitor::new(t_config(), &learning, &table).unwrap();
        let RunReport::Alarm(report) = first.run_stream(stream.iter().copied()).unwrap() else {
            panic!("expected an alarm");
        };
        assert!(matches!(first.step(0.0), Err(Error::State(_))));

        let mut second = Monitor::new(t_config(), &learning, &table).unwrap();
        let RunReport::Alarm(replayed) = second.run_stream(stream.iter().copied()).unwrap()
        else {
            panic!("expected an alarm");
        };
        assert_eq!(report, replayed);
        assert_eq!(report.consumed, report.alarm_index - 40);
    }

    #[test]
    fn non_finite_observations_are_data_errors() {
        let mut monitor =
            Monitor::new(t_config(), &normal_learning(20, 9), &QuantileTable::shipped()).unwrap();
        assert!(matches!(monitor.step(f64::NAN), Err(Error::Data(_))));
        assert_eq!(monitor.consumed(), 0);
    }

    #[test]
    fn run_stream_summaries() {
        let table = QuantileTable::shipped();
        let mut monitor = Monitor::new(t_config(), &normal_learning(20, 10), &table).unwrap();
        match monitor.run_stream(std::iter::empty()).unwrap() {
            RunReport::NoAlarm {
                consumed,
                max_normalized,
                ..
            } => {
                assert_eq!(consumed, 0);
                assert_eq!(max_normalized, 0.0);
            }
            RunReport::Alarm(_) => panic!("empty stream cannot alarm"),
        }

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let short: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let mut monitor = Monitor::new(t_config(), &normal_learning(20, 10), &table).unwrap();
        match monitor.run_stream(short).unwrap() {
            RunReport::NoAlarm {
                max_normalized,
                consumed,
                at_k,
            } => {
                assert_eq!(consumed, 30);
                assert!(max_normalized < monitor.quantile());
                assert!(at_k > 20 && at_k <= 50);
            }
            RunReport::Alarm(_) => panic!("quiet stream should not alarm here"),
        }
    }

    #[test]
    fn affine_transformations_do_not_move_the_alarm() {
        let learning = normal_learning(50, 12);
        let stream: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            (0..800)
                .map(|i| rng.sample::<f64, _>(StandardNormal) + if i > 100 { 1.0 } else { 0.0 })
                .collect()
        };
        let table = QuantileTable::shipped();

        let run = |a: f64, b: f64| -> (AlarmReport, Vec<f64>) {
            let l: Vec<f64> = learning.iter().map(|x| a + b * x).collect();
            let mut monitor = Monitor::new(t_config(), &l, &table).unwrap();
            let mut path = Vec::new();
            for &x in &stream {
                match monitor.step(a + b * x).unwrap() {
                    StepOutcome::Continue(v) => path.push(v.normalized),
                    StepOutcome::Alarm(r) => return (r, path),
                }
            }
            panic!("expected an alarm");
        };

        let (base, base_path) = run(0.0, 1.0);
        for &(a, b) in &[(5.0, 1.0), (0.0, 3.0), (-2.5, 0.25)] {
            let (other, other_path) = run(a, b);
            assert_eq!(other.alarm_index, base.alarm_index);
            assert_eq!(other.change_point_estimate, base.change_point_estimate);
            for (x, y) in base_path.iter().zip(&other_path) {
                assert!(
                    (x - y).abs() <= 1e-6 * x.abs().max(1e-6),
                    "normalized paths diverged: {x} vs {y}"
                );
            }
        }
    }

    #[test]
    fn variance_monitoring_with_explicit_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let learning: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let config = MonitorConfig::new(
            ThresholdSpec::new(DetectorKind::R, 0.001, 0.0).unwrap(),
            0.05,
            QuantileSource::Table,
        )
        .with_parameter(ParameterKind::Variance)
        .with_sigma(std::f64::consts::SQRT_2);
        let mut monitor = Monitor::new(config, &learning, &QuantileTable::shipped()).unwrap();
        assert!(monitor.lrv_estimate().is_none());
        let mut alarmed = false;
        for i in 0..2000 {
            let scale = if i < 50 { 1.0 } else { 3.0 };
            match monitor.step(scale * rng.sample::<f64, _>(StandardNormal)).unwrap() {
                StepOutcome::Alarm(report) => {
                    assert!(report.change_point_estimate > 100);
                    alarmed = true;
                    break;
                }
                StepOutcome::Continue(_) => {}
            }
        }
        assert!(alarmed, "a tripled variance must alarm");
    }
}
