//! Observation records, per-sensor series, datasets and evaluation settings.
//!
//! Every observation carries the sensor temperature, the raw IR intensity
//! and/or the sensor-reported CO2, and the co-located reference CO2. Times are
//! whole seconds since the Unix epoch, interpreted as UTC.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Plausibility band for sensor temperature, in °C. Values outside are
/// treated as corrupt records.
pub const TEMPERATURE_BOUNDS: (f64, f64) = (-60.0, 80.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("ir_signal must be strictly positive, got {0}")]
    NonPositiveIr(f64),
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
    #[error("observation has neither ir_signal nor sensor_co2")]
    MissingSignal,
    #[error("reference_co2 must be non-negative, got {0}")]
    NegativeReference(f64),
    #[error("temperature {0} °C outside plausibility bounds [-60, 80]")]
    ImplausibleTemperature(f64),
    #[error("timestamps not strictly increasing at index {index}")]
    UnorderedTimestamps { index: usize },
    #[error("observation {index} has a different signal presence pattern than the series")]
    MixedPresence { index: usize },
    #[error("invalid month {year}-{month}")]
    InvalidMonth { year: i32, month: u32 },
    #[error("duplicate sensor id `{0}`")]
    DuplicateSensor(String),
    #[error("series `{0}` is empty")]
    EmptySeries(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One time-aligned record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: i64,
    /// Sensor-measured temperature, °C.
    pub temperature: f64,
    /// Filtered IR intensity, dimensionless.
    pub ir_signal: Option<f64>,
    /// CO2 reported by the sensor itself, ppm.
    pub sensor_co2: Option<f64>,
    /// Reference-instrument CO2, ppm.
    pub reference_co2: f64,
}

impl Observation {
    pub fn validate(self) -> Result<Self, ModelError> {
        if !self.temperature.is_finite() {
            return Err(ModelError::NonFinite("temperature"));
        }
        if !self.reference_co2.is_finite() {
            return Err(ModelError::NonFinite("reference_co2"));
        }
        if let Some(ir) = self.ir_signal {
            if !ir.is_finite() {
                return Err(ModelError::NonFinite("ir_signal"));
            }
            if ir <= 0.0 {
                return Err(ModelError::NonPositiveIr(ir));
            }
        }
        if let Some(co2) = self.sensor_co2 {
            if !co2.is_finite() {
                return Err(ModelError::NonFinite("sensor_co2"));
            }
        }
        if self.ir_signal.is_none() && self.sensor_co2.is_none() {
            return Err(ModelError::MissingSignal);
        }
        if self.reference_co2 < 0.0 {
            return Err(ModelError::NegativeReference(self.reference_co2));
        }
        let (lo, hi) = TEMPERATURE_BOUNDS;
        if !(lo..=hi).contains(&self.temperature) {
            return Err(ModelError::ImplausibleTemperature(self.temperature));
        }
        Ok(self)
    }

    pub fn presence(&self) -> Presence {
        Presence {
            ir_signal: self.ir_signal.is_some(),
            sensor_co2: self.sensor_co2.is_some(),
        }
    }

    pub fn month(&self) -> MonthKey {
        MonthKey::from_timestamp(self.timestamp)
    }
}

/// Which sensor-side channels a series carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presence {
    pub ir_signal: bool,
    pub sensor_co2: bool,
}

/// Calendar month in UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MonthKey {
    year: i32,
    month: u32,
}

impl MonthKey {
    pub fn new(year: i32, month: u32) -> Result<Self, ModelError> {
        if !(1..=12).contains(&month) {
            return Err(ModelError::InvalidMonth { year, month });
        }
        Ok(Self { year, month })
    }

    pub fn from_timestamp(ts: i64) -> Self {
        let dt = utc(ts);
        Self {
            year: dt.year(),
            month: dt.month(),
        }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    pub fn next(&self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// First second of the month.
    pub fn start(&self) -> i64 {
        Utc.with_ymd_and_hms(self.year, self.month, 1, 0, 0, 0)
            .single()
            .expect("first of month is unambiguous in UTC")
            .timestamp()
    }

    /// First second of the following month.
    pub fn end(&self) -> i64 {
        self.next().start()
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl std::str::FromStr for MonthKey {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidConfig(format!("bad month key `{s}`, expected YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Self::new(year, month)
    }
}

impl TryFrom<String> for MonthKey {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MonthKey> for String {
    fn from(m: MonthKey) -> Self {
        m.to_string()
    }
}

pub(crate) fn utc(ts: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(ts, 0).expect("timestamp within chrono range")
}

/// RFC 3339 rendering of a Unix timestamp, second resolution.
pub fn format_timestamp(ts: i64) -> String {
    utc(ts).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Time-ordered observations from one physical sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSeries {
    sensor_id: String,
    observations: Vec<Observation>,
    /// Nominal sampling interval in seconds.
    cadence: u32,
}

impl SensorSeries {
    /// Builds a series, validating every observation, timestamp order and a
    /// shared presence pattern.
    pub fn new(
        sensor_id: impl Into<String>,
        observations: Vec<Observation>,
        cadence: u32,
    ) -> Result<Self, ModelError> {
        let mut presence = None;
        for (index, obs) in observations.iter().enumerate() {
            obs.validate()?;
            if index > 0 && observations[index - 1].timestamp >= obs.timestamp {
                return Err(ModelError::UnorderedTimestamps { index });
            }
            match presence {
                None => presence = Some(obs.presence()),
                Some(p) if p != obs.presence() => {
                    return Err(ModelError::MixedPresence { index })
                }
                Some(_) => {}
            }
        }
        Ok(Self {
            sensor_id: sensor_id.into(),
            observations,
            cadence,
        })
    }

    pub fn empty(sensor_id: impl Into<String>, cadence: u32) -> Self {
        Self {
            sensor_id: sensor_id.into(),
            observations: Vec::new(),
            cadence,
        }
    }

    pub fn sensor_id(&self) -> &str {
        &self.sensor_id
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn cadence(&self) -> u32 {
        self.cadence
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Presence pattern shared by all observations, `None` when empty.
    pub fn presence(&self) -> Option<Presence> {
        self.observations.first().map(Observation::presence)
    }

    /// Keeps observations matching `keep`. Order and invariants are preserved.
    pub fn retain(&self, mut keep: impl FnMut(&Observation) -> bool) -> Self {
        Self {
            sensor_id: self.sensor_id.clone(),
            observations: self.observations.iter().copied().filter(|o| keep(o)).collect(),
            cadence: self.cadence,
        }
    }

    /// Splits into UTC calendar-month buckets, order preserved within each.
    pub fn partition_by_month(&self) -> BTreeMap<MonthKey, SensorSeries> {
        let mut out: BTreeMap<MonthKey, SensorSeries> = BTreeMap::new();
        for obs in &self.observations {
            out.entry(obs.month())
                .or_insert_with(|| SensorSeries::empty(self.sensor_id.clone(), self.cadence))
                .observations
                .push(*obs);
        }
        out
    }
}

/// Collection of sensor series keyed by sensor id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    series: BTreeMap<String, SensorSeries>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: SensorSeries) -> Result<(), ModelError> {
        if series.is_empty() {
            return Err(ModelError::EmptySeries(series.sensor_id.clone()));
        }
        if self.series.contains_key(series.sensor_id()) {
            return Err(ModelError::DuplicateSensor(series.sensor_id.clone()));
        }
        self.series.insert(series.sensor_id.clone(), series);
        Ok(())
    }

    pub fn get(&self, sensor_id: &str) -> Option<&SensorSeries> {
        self.series.get(sensor_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SensorSeries> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Sample count per sensor.
    pub fn counts(&self) -> BTreeMap<&str, usize> {
        self.series.iter().map(|(k, v)| (k.as_str(), v.len())).collect()
    }
}

/// Settings for preprocessing and monthly drift evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Averaging window in seconds.
    pub averaging_window: u32,
    pub outlier_quantile: f64,
    pub desired_temp_range: [f64; 2],
    pub desired_co2_range: [f64; 2],
    /// Draws per sensor-month.
    pub resample_count: usize,
    pub rng_seed: u64,
    /// (temperature bin width °C, CO2 bin width ppm).
    pub histogram_bins: [f64; 2],
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            averaging_window: 600,
            outlier_quantile: 0.999,
            desired_temp_range: [0.0, 20.0],
            desired_co2_range: [400.0, 500.0],
            resample_count: 500,
            rng_seed: 0,
            histogram_bins: [2.0, 10.0],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        for (name, [lo, hi]) in [
            ("desired_temp_range", self.desired_temp_range),
            ("desired_co2_range", self.desired_co2_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("{name} must satisfy lo < hi, got [{lo}, {hi}]"));
            }
        }
        if self.resample_count == 0 {
            return bad("resample_count must be at least 1".into());
        }
        if self.averaging_window == 0 {
            return bad("averaging_window must be positive".into());
        }
        if !(self.outlier_quantile > 0.0 && self.outlier_quantile <= 1.0) {
            return bad(format!(
                "outlier_quantile must be in (0, 1], got {}",
                self.outlier_quantile
            ));
        }
        if !self.histogram_bins.iter().all(|w| w.is_finite() && *w > 0.0) {
            return bad(format!(
                "histogram bin widths must be positive, got {:?}",
                self.histogram_bins
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(ts: i64, t: f64, ir: Option<f64>, y: f64) -> Observation {
        Observation {
            timestamp: ts,
            temperature: t,
            ir_signal: ir,
            sensor_co2: None,
            reference_co2: y,
        }
    }

    #[test]
    fn validation_examples() {
        assert!(obs(0, 20.0, Some(0.95), 420.0).validate().is_ok());
        assert_eq!(
            obs(0, 20.0, Some(-0.1), 420.0).validate(),
            Err(ModelError::NonPositiveIr(-0.1))
        );
        assert_eq!(
            obs(0, f64::NAN, Some(0.95), 420.0).validate(),
            Err(ModelError::NonFinite("temperature"))
        );
        assert_eq!(
            obs(0, 20.0, None, 420.0).validate(),
            Err(ModelError::MissingSignal)
        );
        assert_eq!(
            obs(0, 20.0, Some(0.0), 420.0).validate(),
            Err(ModelError::NonPositiveIr(0.0))
        );
        assert!(matches!(
            obs(0, 95.0, Some(0.9), 420.0).validate(),
            Err(ModelError::ImplausibleTemperature(_))
        ));
        assert!(matches!(
            obs(0, 20.0, Some(0.9), -1.0).validate(),
            Err(ModelError::NegativeReference(_))
        ));
        let mut o = obs(0, 20.0, None, 420.0);
        o.sensor_co2 = Some(f64::INFINITY);
        assert_eq!(o.validate(), Err(ModelError::NonFinite("sensor_co2")));
    }

    #[test]
    fn validation_is_idempotent() {
        let o = obs(5, 12.5, Some(0.7), 455.0);
        let once = o.validate().unwrap();
        assert_eq!(once.validate().unwrap(), once);
    }

    #[test]
    fn month_boundary_split() {
        // 2017-07-31T23:59:00Z and 2017-08-01T00:00:00Z
        let a = 1_501_545_540;
        let b = 1_501_545_600;
        let s = SensorSeries::new(
            "1097",
            vec![obs(a, 20.0, Some(0.9), 420.0), obs(b, 20.0, Some(0.9), 420.0)],
            60,
        )
        .unwrap();
        let parts = s.partition_by_month();
        let keys: Vec<_> = parts.keys().map(|k| k.to_string()).collect();
        assert_eq!(keys, ["2017-07", "2017-08"]);
        assert!(parts.values().all(|p| p.len() == 1));
    }

    #[test]
    fn partition_empty_and_single_month() {
        assert!(SensorSeries::empty("x", 600).partition_by_month().is_empty());
        let feb = MonthKey::new(2018, 2).unwrap().start();
        let s = SensorSeries::new(
            "x",
            (0..3).map(|i| obs(feb + i * 600, 1.0, Some(0.9), 410.0)).collect(),
            600,
        )
        .unwrap();
        let parts = s.partition_by_month();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[&MonthKey::new(2018, 2).unwrap()].len(), 3);
    }

    #[test]
    fn series_invariants() {
        let err = SensorSeries::new(
            "x",
            vec![obs(10, 1.0, Some(0.9), 410.0), obs(10, 1.0, Some(0.9), 410.0)],
            600,
        );
        assert_eq!(err, Err(ModelError::UnorderedTimestamps { index: 1 }));
        let mut b = obs(20, 1.0, Some(0.9), 410.0);
        b.sensor_co2 = Some(400.0);
        let err = SensorSeries::new("x", vec![obs(10, 1.0, Some(0.9), 410.0), b], 600);
        assert_eq!(err, Err(ModelError::MixedPresence { index: 1 }));
    }

    #[test]
    fn month_key_roundtrip_and_bounds() {
        let m = MonthKey::new(2019, 12).unwrap();
        assert_eq!(m.next(), MonthKey::new(2020, 1).unwrap());
        assert_eq!("2019-12".parse::<MonthKey>().unwrap(), m);
        assert!(MonthKey::new(2019, 13).is_err());
        assert_eq!(m.end() - m.start(), 31 * 86_400);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "\"2019-12\"");
    }

    #[test]
    fn dataset_rejects_duplicates_and_empty() {
        let mut d = Dataset::new();
        let s = SensorSeries::new("a", vec![obs(0, 1.0, Some(0.9), 410.0)], 600).unwrap();
        d.insert(s.clone()).unwrap();
        assert!(matches!(d.insert(s), Err(ModelError::DuplicateSensor(_))));
        assert!(matches!(
            d.insert(SensorSeries::empty("b", 600)),
            Err(ModelError::EmptySeries(_))
        ));
        assert_eq!(d.counts()["a"], 1);
    }

    #[test]
    fn config_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        for c in [
            EvalConfig { desired_temp_range: [20.0, 20.0], ..Default::default() },
            EvalConfig { outlier_quantile: 0.0, ..Default::default() },
            EvalConfig { resample_count: 0, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
