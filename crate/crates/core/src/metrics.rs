//! RMSE evaluation on original and importance-resampled months, plus the
//! fleet-level and plot-ready summaries built on top of it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{HistogramDensity2D, UniformRectDensity};
use crate::model::{EvalConfig, MonthKey, Observation, SensorSeries};
use crate::par::Exec;
use crate::resample::{self, ResamplePlan};
use crate::seed::derive_seed;
use crate::sensor::{Estimator, SensorError};
use crate::stats::{self, BoxStats};

/// Months whose effective sample size falls below this are flagged.
pub const LOW_CONFIDENCE_ESS: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series is empty")]
    EmptySeries,
    #[error(transparent)]
    Estimator(#[from] SensorError),
    #[error("invalid evaluation config: {0}")]
    Config(String),
}

/// Sample RMSE `sqrt(mean((ŷ − y)²))`.
pub fn rmse(observations: &[Observation], estimator: &Estimator) -> Result<f64, MetricsError> {
    if observations.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let mut sum = 0.0;
    for o in observations {
        sum += estimator.error(o)?.powi(2);
    }
    Ok((sum / observations.len() as f64).sqrt())
}

/// Evaluation on the importance-resampled month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampledEval {
    pub rmse: f64,
    pub ess: f64,
    /// Share of the desired rectangle backed by observed cells.
    pub coverage: f64,
    pub seed: u64,
    pub low_confidence: bool,
    /// Index into the month's observations for every draw.
    pub source_indices: Vec<usize>,
}

/// One sensor-month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthEval {
    pub month: MonthKey,
    pub n_original: usize,
    pub mean_temperature: f64,
    pub rmse_original: f64,
    /// `None` when no point of the month lies in the desired support.
    pub resampled: Option<ResampledEval>,
    /// `rmse_original − rmse_resampled`.
    pub rmse_difference: Option<f64>,
    pub clamped_estimates: usize,
}

impl MonthEval {
    pub fn rmse_resampled(&self) -> Option<f64> {
        self.resampled.as_ref().map(|r| r.rmse)
    }

    pub fn ess(&self) -> Option<f64> {
        self.resampled.as_ref().map(|r| r.ess)
    }
}

/// Per-month results for one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorEval {
    pub sensor_id: String,
    pub months: Vec<MonthEval>,
}

/// Resampling seed for one sensor-month. Depends only on the master seed,
/// the sensor id and the month.
pub fn month_seed(master: u64, sensor_id: &str, month: MonthKey) -> u64 {
    derive_seed(
        master,
        &[
            "resample".into(),
            sensor_id.into(),
            i64::from(month.year()).into(),
            i64::from(month.month()).into(),
        ],
    )
}

fn evaluate_month(
    sensor_id: &str,
    month: MonthKey,
    obs: &[Observation],
    config: &EvalConfig,
    desired: &UniformRectDensity,
    estimator: &Estimator,
) -> Result<MonthEval, MetricsError> {
    let mut clamped = 0;
    let mut sq = 0.0;
    for o in obs {
        let e = estimator.estimate(o)?;
        clamped += usize::from(e.flagged);
        sq += (e.ppm - o.reference_co2).powi(2);
    }
    let rmse_original = (sq / obs.len() as f64).sqrt();
    let mean_temperature = obs.iter().map(|o| o.temperature).sum::<f64>() / obs.len() as f64;

    let points: Vec<(f64, f64)> = obs.iter().map(|o| (o.temperature, o.reference_co2)).collect();
    let widths = (config.histogram_bins[0], config.histogram_bins[1]);
    let original = HistogramDensity2D::estimate(&points, widths)
        .map_err(|e| MetricsError::Config(e.to_string()))?;
    let resampled = match resample::compute_weights(&points, desired, &original) {
        Ok(weights) => {
            let seed = month_seed(config.rng_seed, sensor_id, month);
            let plan = ResamplePlan::new(config.resample_count, seed)
                .map_err(|e| MetricsError::Config(e.to_string()))?;
            let drawn = resample::resample(obs, &weights, &plan).expect("weights built from obs");
            let ess = weights.effective_sample_size();
            Some(ResampledEval {
                rmse: rmse(&drawn.observations, estimator)?,
                ess,
                coverage: original.coverage(desired),
                seed,
                low_confidence: ess < LOW_CONFIDENCE_ESS,
                source_indices: drawn.source_indices,
            })
        }
        Err(resample::ResampleError::ZeroWeightSum) => None,
        Err(e) => unreachable!("histogram estimated from the same points: {e}"),
    };
    Ok(MonthEval {
        month,
        n_original: obs.len(),
        mean_temperature,
        rmse_original,
        rmse_difference: resampled.as_ref().map(|r| rmse_original - r.rmse),
        resampled,
        clamped_estimates: clamped,
    })
}

/// Original and resampled RMSE for every calendar month of `series`.
///
/// Each month gets its own histogram of (temperature, reference CO2), is
/// reweighted to the configured uniform rectangle and resampled with a seed
/// derived from the master seed, sensor id and month. Months with no point in
/// the rectangle become gaps.
pub fn monthly_drift_eval(
    series: &SensorSeries,
    config: &EvalConfig,
    estimator: &Estimator,
    exec: Exec,
) -> Result<Vec<MonthEval>, MetricsError> {
    config.validate().map_err(|e| MetricsError::Config(e.to_string()))?;
    let desired = UniformRectDensity::new(config.desired_temp_range, config.desired_co2_range)
        .map_err(|e| MetricsError::Config(e.to_string()))?;
    let months: Vec<(MonthKey, SensorSeries)> = series.partition_by_month().into_iter().collect();
    exec.map(&months, |(m, s)| {
        evaluate_month(series.sensor_id(), *m, s.observations(), config, &desired, estimator)
    })
    .into_iter()
    .collect()
}

/// [`monthly_drift_eval`] over many sensors, in input order.
pub fn evaluate_fleet(
    sensors: &[(SensorSeries, Estimator)],
    config: &EvalConfig,
    exec: Exec,
) -> Result<Vec<SensorEval>, MetricsError> {
    exec.map(sensors, |(series, estimator)| {
        Ok(SensorEval {
            sensor_id: series.sensor_id().to_string(),
            months: monthly_drift_eval(series, config, estimator, exec)?,
        })
    })
    .into_iter()
    .collect()
}

/// Cross-sensor statistics for one month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetMonth {
    pub month: MonthKey,
    /// Sensors with a resampled value this month.
    pub sensors: usize,
    pub mean_rmse_resampled: f64,
    /// Population standard deviation.
    pub std_rmse_resampled: f64,
    pub mean_rmse_original: f64,
    pub difference_box: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSummary {
    pub months: Vec<FleetMonth>,
    /// Mean over sensors of each sensor's largest |rmse_difference|.
    pub mean_max_abs_difference: Option<f64>,
}

pub fn fleet_aggregate(reports: &[SensorEval]) -> FleetSummary {
    let mut by_month: BTreeMap<MonthKey, Vec<&MonthEval>> = BTreeMap::new();
    for s in reports {
        for m in &s.months {
            if m.resampled.is_some() {
                by_month.entry(m.month).or_default().push(m);
            }
        }
    }
    let months = by_month
        .into_iter()
        .map(|(month, evals)| {
            let resampled: Vec<f64> = evals.iter().filter_map(|m| m.rmse_resampled()).collect();
            let original: Vec<f64> = evals.iter().map(|m| m.rmse_original).collect();
            let diffs: Vec<f64> = evals.iter().filter_map(|m| m.rmse_difference).collect();
            FleetMonth {
                month,
                sensors: evals.len(),
                mean_rmse_resampled: stats::mean(&resampled),
                std_rmse_resampled: stats::population_std(&resampled),
                mean_rmse_original: stats::mean(&original),
                difference_box: BoxStats::from_values(&diffs).expect("at least one sensor"),
            }
        })
        .collect();
    let per_sensor_max: Vec<f64> = reports
        .iter()
        .filter_map(|s| {
            s.months
                .iter()
                .filter_map(|m| m.rmse_difference.map(f64::abs))
                .reduce(f64::max)
        })
        .collect();
    FleetSummary {
        months,
        mean_max_abs_difference: (!per_sensor_max.is_empty()).then(|| stats::mean(&per_sensor_max)),
    }
}

/// One point of the error-versus-temperature scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub timestamp: i64,
    pub temperature: f64,
    /// Signed error ŷ − y, ppm.
    pub error: f64,
}

pub fn error_temperature_scatter(
    observations: &[Observation],
    estimator: &Estimator,
) -> Result<Vec<ScatterPoint>, MetricsError> {
    if observations.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    observations
        .iter()
        .map(|o| {
            Ok(ScatterPoint {
                timestamp: o.timestamp,
                temperature: o.temperature,
                error: estimator.error(o)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryChannel {
    Temperature,
    ReferenceCo2,
}

/// Quantile levels reported per month.
pub const SUMMARY_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

/// Nearest-rank monthly distribution of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub month: MonthKey,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    /// Values at [`SUMMARY_LEVELS`].
    pub quantiles: [f64; 7],
}

pub fn monthly_distribution_summary(
    series: &SensorSeries,
    channel: SummaryChannel,
) -> Result<Vec<DistributionSummary>, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    Ok(series
        .partition_by_month()
        .into_iter()
        .map(|(month, s)| {
            let values: Vec<f64> = s
                .observations()
                .iter()
                .map(|o| match channel {
                    SummaryChannel::Temperature => o.temperature,
                    SummaryChannel::ReferenceCo2 => o.reference_co2,
                })
                .collect();
            let sorted = stats::sorted(&values);
            DistributionSummary {
                month,
                count: sorted.len(),
                min: sorted[0],
                max: sorted[sorted.len() - 1],
                quantiles: SUMMARY_LEVELS.map(|q| stats::nearest_rank_sorted(&sorted, q)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::BeerLambertParams;

    fn obs(ts: i64, t: f64, est: f64, y: f64) -> Observation {
        Observation {
            timestamp: ts,
            temperature: t,
            ir_signal: None,
            sensor_co2: Some(est),
            reference_co2: y,
        }
    }

    #[test]
    fn rmse_examples() {
        let e = Estimator::Passthrough;
        let perfect = [obs(0, 1.0, 410.0, 410.0), obs(1, 2.0, 420.0, 420.0)];
        assert_eq!(rmse(&perfect, &e).unwrap(), 0.0);
        let two = [obs(0, 1.0, 413.0, 410.0), obs(1, 2.0, 424.0, 420.0)];
        assert!((rmse(&two, &e).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[], &e), Err(MetricsError::EmptySeries));
        let bl = Estimator::BeerLambert {
            params: BeerLambertParams::new(1.0, 1e-3, 293.15).unwrap(),
        };
        assert!(matches!(rmse(&two, &bl), Err(MetricsError::Estimator(_))));
    }

    fn eval(month: MonthKey, orig: f64, res: Option<f64>) -> MonthEval {
        MonthEval {
            month,
            n_original: 10,
            mean_temperature: 5.0,
            rmse_original: orig,
            resampled: res.map(|rmse| ResampledEval {
                rmse,
                ess: 50.0,
                coverage: 1.0,
                seed: 0,
                low_confidence: false,
                source_indices: vec![],
            }),
            rmse_difference: res.map(|r| orig - r),
            clamped_estimates: 0,
        }
    }

    #[test]
    fn fleet_two_sensors() {
        let m = MonthKey::new(2018, 1).unwrap();
        let reports = vec![
            SensorEval { sensor_id: "a".into(), months: vec![eval(m, 20.0, Some(10.0))] },
            SensorEval { sensor_id: "b".into(), months: vec![eval(m, 60.0, Some(30.0))] },
        ];
        let f = fleet_aggregate(&reports);
        assert_eq!(f.months.len(), 1);
        let fm = &f.months[0];
        assert_eq!(fm.mean_rmse_resampled, 20.0);
        assert_eq!(fm.std_rmse_resampled, 10.0);
        assert_eq!(fm.difference_box.median, 20.0);
        assert_eq!(f.mean_max_abs_difference, Some(20.0));
    }

    #[test]
    fn fleet_single_sensor_and_gaps() {
        let m1 = MonthKey::new(2018, 1).unwrap();
        let m2 = m1.next();
        let reports = vec![SensorEval {
            sensor_id: "a".into(),
            months: vec![eval(m1, 12.0, Some(9.0)), eval(m2, 12.0, None)],
        }];
        let f = fleet_aggregate(&reports);
        assert_eq!(f.months.len(), 1);
        assert_eq!(f.months[0].std_rmse_resampled, 0.0);
        let b = &f.months[0].difference_box;
        assert_eq!((b.q1, b.median, b.q3), (3.0, 3.0, 3.0));
        let gaps_only = vec![SensorEval { sensor_id: "z".into(), months: vec![eval(m2, 1.0, None)] }];
        assert_eq!(fleet_aggregate(&gaps_only).mean_max_abs_difference, None);
    }

    #[test]
    fn scatter_examples() {
        let e = Estimator::Passthrough;
        let s = error_temperature_scatter(&[obs(7, 3.5, 425.0, 420.0)], &e).unwrap();
        assert_eq!(s, vec![ScatterPoint { timestamp: 7, temperature: 3.5, error: 5.0 }]);
        assert_eq!(error_temperature_scatter(&[], &e), Err(MetricsError::EmptySeries));
    }

    #[test]
    fn distribution_1_to_100() {
        let start = MonthKey::new(2018, 3).unwrap().start();
        let series = SensorSeries::new(
            "s",
            (1..=100).map(|i| obs(start + i * 600, i as f64 / 4.0, 0.0, i as f64)).collect(),
            600,
        )
        .unwrap();
        let d = monthly_distribution_summary(&series, SummaryChannel::ReferenceCo2).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].quantiles[3], 50.0);
        assert_eq!(d[0].quantiles[2], 25.0);
        assert_eq!(d[0].quantiles[4], 75.0);
        assert_eq!((d[0].min, d[0].max, d[0].count), (1.0, 100.0, 100));
    }

    #[test]
    fn month_seeds_are_independent_of_other_sensors() {
        let m = MonthKey::new(2018, 1).unwrap();
        assert_eq!(month_seed(42, "1097", m), month_seed(42, "1097", m));
        assert_ne!(month_seed(42, "1097", m), month_seed(42, "1098", m));
        assert_ne!(month_seed(42, "1097", m), month_seed(42, "1097", m.next()));
    }
}
