//! Drift report assembly and its on-disk forms.
//!
//! `report.json` is the nested document; `report.csv` flattens it to one row
//! per sensor-month. Plot-ready tables (fleet band, difference boxes, error
//! scatter, monthly distributions) are plain CSV. Column sets are fixed by
//! [`SCHEMA_VERSION`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::PreprocessStats;
use crate::metrics::{
    DistributionSummary, FleetSummary, MonthEval, ScatterPoint, SensorEval, SUMMARY_LEVELS,
};
use crate::model::{format_timestamp, EvalConfig};
use crate::sensor::Estimator;
use crate::synth::SynthError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub generator: String,
    pub version: String,
    pub seed: u64,
    pub eval: EvalConfig,
    /// Outlier quantile is computed per sensor, not pooled.
    pub outlier_scope: String,
    pub low_confidence_ess: f64,
    /// Caller-supplied resolved run configuration.
    #[serde(default)]
    pub run_config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReport {
    pub sensor_id: String,
    pub estimator: Estimator,
    pub preprocessing: Option<PreprocessStats>,
    pub months: Vec<MonthEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub sensors: Vec<SensorReport>,
    pub fleet: FleetSummary,
}

impl DriftReport {
    pub fn assemble(
        config: &EvalConfig,
        evals: Vec<SensorEval>,
        estimators: &[Estimator],
        preprocessing: Vec<Option<PreprocessStats>>,
        run_config: serde_json::Value,
    ) -> Self {
        let fleet = crate::metrics::fleet_aggregate(&evals);
        let sensors = evals
            .into_iter()
            .zip(estimators)
            .zip(preprocessing)
            .map(|((e, est), pre)| SensorReport {
                sensor_id: e.sensor_id,
                estimator: *est,
                preprocessing: pre,
                months: e.months,
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            metadata: ReportMetadata {
                generator: "driftlab".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: config.rng_seed,
                eval: config.clone(),
                outlier_scope: "per_sensor".into(),
                low_confidence_ess: crate::metrics::LOW_CONFIDENCE_ESS,
                run_config,
            },
            sensors,
            fleet,
        }
    }

    /// Number of sensor-months without a resampled value.
    pub fn gap_count(&self) -> usize {
        self.sensors
            .iter()
            .flat_map(|s| &s.months)
            .filter(|m| m.resampled.is_none())
            .count()
    }

    pub fn write_json(&self, path: &Path) -> Result<(), SynthError> {
        crate::synth::write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self, SynthError> {
        let io = |source| SynthError::Io {
            path: path.display().to_string(),
            source,
        };
        let bytes = std::fs::read(path).map_err(io)?;
        serde_json::from_slice(&bytes).map_err(|e| io(e.into()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SynthError> {
        let mut rows = Vec::new();
        for s in &self.sensors {
            for m in &s.months {
                rows.push(vec![
                    s.sensor_id.clone(),
                    m.month.to_string(),
                    m.n_original.to_string(),
                    m.mean_temperature.to_string(),
                    m.rmse_original.to_string(),
                    opt(m.rmse_resampled()),
                    opt(m.rmse_difference),
                    opt(m.ess()),
                    opt(m.resampled.as_ref().map(|r| r.coverage)),
                    m.resampled.as_ref().is_some_and(|r| r.low_confidence).to_string(),
                    m.resampled.is_none().to_string(),
                    m.clamped_estimates.to_string(),
                ]);
            }
        }
        write_table(
            path,
            &[
                "sensor_id",
                "month",
                "n_original",
                "mean_temperature",
                "rmse_original",
                "rmse_resampled",
                "rmse_difference",
                "ess",
                "coverage",
                "low_confidence",
                "gap",
                "clamped_estimates",
            ],
            rows,
        )
    }

    /// Per-month fleet mean and ±1 std band.
    pub fn write_fleet_csv(&self, path: &Path) -> Result<(), SynthError> {
        let rows = self
            .fleet
            .months
            .iter()
            .map(|m| {
                vec![
                    m.month.to_string(),
                    m.sensors.to_string(),
                    m.mean_rmse_resampled.to_string(),
                    m.std_rmse_resampled.to_string(),
                    m.mean_rmse_original.to_string(),
                ]
            })
            .collect();
        write_table(
            path,
            &["month", "sensors", "mean_rmse_resampled", "std_rmse_resampled", "mean_rmse_original"],
            rows,
        )
    }

    /// Per-month box statistics of rmse_difference.
    pub fn write_difference_box_csv(&self, path: &Path) -> Result<(), SynthError> {
        let rows = self
            .fleet
            .months
            .iter()
            .map(|m| {
                let b = &m.difference_box;
                vec![
                    m.month.to_string(),
                    b.count.to_string(),
                    b.whisker_low.to_string(),
                    b.q1.to_string(),
                    b.median.to_string(),
                    b.q3.to_string(),
                    b.whisker_high.to_string(),
                    b.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                ]
            })
            .collect();
        write_table(
            path,
            &["month", "count", "whisker_low", "q1", "median", "q3", "whisker_high", "outliers"],
            rows,
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), SynthError> {
    let io = |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(header).map_err(|e| io(e.into()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

/// `time,temperature,error` for the error-versus-temperature scatter.
pub fn write_scatter_csv(path: &Path, points: &[ScatterPoint]) -> Result<(), SynthError> {
    let rows = points
        .iter()
        .map(|p| vec![format_timestamp(p.timestamp), p.temperature.to_string(), p.error.to_string()])
        .collect();
    write_table(path, &["time", "temperature", "error"], rows)
}

/// Monthly nearest-rank distribution summaries, one row per (channel, month).
pub fn write_distribution_csv(
    path: &Path,
    channels: &[(&str, &[DistributionSummary])],
) -> Result<(), SynthError> {
    let level_names: Vec<String> = SUMMARY_LEVELS
        .iter()
        .map(|q| format!("p{:02}", (q * 100.0).round() as u32))
        .collect();
    let mut header = vec!["channel", "month", "count", "min"];
    header.extend(level_names.iter().map(String::as_str));
    header.push("max");
    let mut rows = Vec::new();
    for (name, summaries) in channels {
        for d in *summaries {
            let mut r = vec![name.to_string(), d.month.to_string(), d.count.to_string(), d.min.to_string()];
            r.extend(d.quantiles.iter().map(f64::to_string));
            r.push(d.max.to_string());
            rows.push(r);
        }
    }
    write_table(path, &header, rows)
}
