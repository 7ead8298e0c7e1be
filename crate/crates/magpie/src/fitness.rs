//! Fitness values, variant statuses, comparison, and stability statistics.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

use crate::error::{MagpieError, Result};

/// Outcome class of evaluating one variant. Only [`VariantStatus::Clean`]
/// carries objective values; every other status compares worse than every
/// clean fitness, and non-clean statuses all share the same rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VariantStatus {
    Clean,
    InvalidConfig,
    CompileError,
    RuntimeError,
    Timeout,
    OutputError,
}

impl VariantStatus {
    pub fn is_clean(self) -> bool {
        self == VariantStatus::Clean
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariantStatus::Clean => "CLEAN",
            VariantStatus::InvalidConfig => "INVALID_CONFIG",
            VariantStatus::CompileError => "COMPILE_ERROR",
            VariantStatus::RuntimeError => "RUNTIME_ERROR",
            VariantStatus::Timeout => "TIMEOUT",
            VariantStatus::OutputError => "OUTPUT_ERROR",
        }
    }
}

impl fmt::Display for VariantStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How one objective is measured from a run.
#[derive(Debug, Clone)]
pub enum MeasurementSource {
    /// Elapsed wall-clock seconds of the run step.
    WallClock,
    /// Numbers captured from the run's own output; one objective per capture
    /// group.
    OutputRegex { pattern: regex::Regex },
    /// The run command is wrapped in `wrapper` (which must contain `{CMD}`)
    /// and the counter is parsed from the wrapped run's output with
    /// `pattern` (one capture group).
    CounterCommand { wrapper: String, pattern: regex::Regex },
}

impl MeasurementSource {
    pub fn arity(&self) -> usize {
        match self {
            MeasurementSource::WallClock => 1,
            MeasurementSource::OutputRegex { pattern } => pattern.captures_len() - 1,
            MeasurementSource::CounterCommand { .. } => 1,
        }
    }
}

/// Per-instance outcome inside a [`FitnessReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: String,
    pub status: VariantStatus,
    pub objectives: Option<Vec<f64>>,
    pub wall_s: f64,
}

/// The result of evaluating one patch on one instance set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitnessReport {
    pub status: VariantStatus,
    /// Arithmetic mean over the instance set, present only when clean.
    pub objectives: Option<Vec<f64>>,
    pub per_instance: Vec<InstanceRecord>,
    pub cache_hit: bool,
    /// Evaluation ordinal within the evaluator that produced this report.
    pub ordinal: u64,
}

impl FitnessReport {
    pub fn is_clean(&self) -> bool {
        self.status.is_clean()
    }
}

/// Lexicographic order on objective vectors, lower is better.
pub fn compare_values(a: &[f64], b: &[f64]) -> Result<Ordering> {
    if a.len() != b.len() {
        return Err(MagpieError::ArityMismatch(a.len(), b.len()));
    }
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return Ok(other),
        }
    }
    Ok(Ordering::Equal)
}

/// Total order on fitness reports: clean beats non-clean, non-clean reports
/// tie with each other, and clean reports order lexicographically.
pub fn compare(a: &FitnessReport, b: &FitnessReport) -> Result<Ordering> {
    match (a.is_clean(), b.is_clean()) {
        (true, false) => Ok(Ordering::Less),
        (false, true) => Ok(Ordering::Greater),
        (false, false) => Ok(Ordering::Equal),
        (true, true) => {
            let av = a.objectives.as_deref().unwrap_or(&[]);
            let bv = b.objectives.as_deref().unwrap_or(&[]);
            compare_values(av, bv)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityStats {
    pub mean: f64,
    /// Population standard deviation (divide by n, not n − 1).
    pub stddev: f64,
    /// Coefficient of variation: stddev / mean.
    pub cov: f64,
}

/// Per-objective mean, population standard deviation and coefficient of
/// variation over repeated measurements of the same variant.
pub fn measure_stability(series: &[Vec<f64>]) -> Result<Vec<StabilityStats>> {
    if series.len() < 2 {
        return Err(MagpieError::TooFewSamples(series.len()));
    }
    let arity = series[0].len();
    for s in series {
        if s.len() != arity {
            return Err(MagpieError::ArityMismatch(arity, s.len()));
        }
    }
    let n = series.len() as f64;
    let mut out = Vec::with_capacity(arity);
    for i in 0..arity {
        let mean = series.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = series.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / n;
        let stddev = var.sqrt();
        if mean == 0.0 {
            return Err(MagpieError::ZeroMean(i));
        }
        out.push(StabilityStats { mean, stddev, cov: stddev / mean });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(objs: &[f64]) -> FitnessReport {
        FitnessReport {
            status: VariantStatus::Clean,
            objectives: Some(objs.to_vec()),
            per_instance: vec![],
            cache_hit: false,
            ordinal: 0,
        }
    }

    fn broken(status: VariantStatus) -> FitnessReport {
        FitnessReport { status, objectives: None, per_instance: vec![], cache_hit: false, ordinal: 0 }
    }

    #[test]
    fn orders_lexicographically() {
        assert_eq!(compare(&clean(&[1.0, 5.0]), &clean(&[1.0, 7.0])).unwrap(), Ordering::Less);
        assert_eq!(compare(&clean(&[2.0, 0.0]), &clean(&[1.0, 9.0])).unwrap(), Ordering::Greater);
        assert_eq!(compare(&clean(&[3.0]), &clean(&[3.0])).unwrap(), Ordering::Equal);
    }

    #[test]
    fn clean_always_beats_broken() {
        assert_eq!(
            compare(&clean(&[9e99]), &broken(VariantStatus::Timeout)).unwrap(),
            Ordering::Less
        );
        assert_eq!(
            compare(&broken(VariantStatus::CompileError), &clean(&[0.0])).unwrap(),
            Ordering::Greater
        );
        assert_eq!(
            compare(&broken(VariantStatus::Timeout), &broken(VariantStatus::RuntimeError))
                .unwrap(),
            Ordering::Equal
        );
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        assert!(matches!(
            compare(&clean(&[1.0]), &clean(&[1.0, 2.0])),
            Err(MagpieError::ArityMismatch(1, 2))
        ));
    }

    #[test]
    fn stability_on_constant_series_is_zero() {
        let stats = measure_stability(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap();
        assert_eq!(stats[0].mean, 5.0);
        assert_eq!(stats[0].stddev, 0.0);
        assert_eq!(stats[0].cov, 0.0);
    }

    #[test]
    fn stability_uses_population_stddev() {
        let stats = measure_stability(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(stats[0].mean, 2.0);
        assert_eq!(stats[0].stddev, 1.0);
        assert_eq!(stats[0].cov, 0.5);
    }

    #[test]
    fn stability_rejects_degenerate_input() {
        assert!(matches!(
            measure_stability(&[vec![1.0]]),
            Err(MagpieError::TooFewSamples(1))
        ));
        assert!(matches!(
            measure_stability(&[vec![1.0], vec![-1.0]]),
            Err(MagpieError::ZeroMean(0))
        ));
        assert!(matches!(
            measure_stability(&[vec![1.0], vec![1.0, 2.0]]),
            Err(MagpieError::ArityMismatch(1, 2))
        ));
    }

    #[test]
    fn stability_matches_known_run_to_run_noise() {
        // A two-point series with mean 12370 and population stddev 361.
        let stats = measure_stability(&[vec![12009.0], vec![12731.0]]).unwrap();
        assert_eq!(stats[0].mean, 12370.0);
        assert_eq!(stats[0].stddev, 361.0);
        assert!((stats[0].cov - 0.0292).abs() < 1e-4, "cov = {}", stats[0].cov);
    }
}
