//! CSV ingestion and preprocessing.
//!
//! Raw per-sensor and reference files are parsed into per-channel streams,
//! averaged onto a common grid of half-open windows aligned to multiples of
//! the window length since the Unix epoch, and stripped of windows where any
//! channel is missing. A nearest-rank quantile cut then drops the high-CO2
//! tail (or, when only IR is available, the low-IR tail).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Observation, SensorSeries};
use crate::stats;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("file is empty")]
    EmptyFile,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("no channel `{0}` among the input streams")]
    MissingChannel(Channel),
    #[error("no averaging window has values for every channel")]
    NoOverlap,
    #[error("series is empty")]
    EmptySeries,
    #[error("averaging window must be positive")]
    ZeroWindow,
    #[error("quantile must be in (0, 1], got {0}")]
    InvalidQuantile(f64),
}

/// Which physical quantity a column carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Temperature,
    IrSignal,
    SensorCo2,
    ReferenceCo2,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Temperature,
        Channel::IrSignal,
        Channel::SensorCo2,
        Channel::ReferenceCo2,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Temperature => "temperature",
            Channel::IrSignal => "ir_signal",
            Channel::SensorCo2 => "sensor_co2",
            Channel::ReferenceCo2 => "reference_co2",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub timestamp: i64,
    pub value: f64,
}

/// All raw values of one channel from one file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStream {
    pub channel: Channel,
    pub records: Vec<RawRecord>,
}

/// Header names to read: the time column plus data columns and their channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub time: String,
    pub columns: Vec<(String, Channel)>,
}

impl ColumnMapping {
    pub fn new(time: impl Into<String>) -> Self {
        Self {
            time: time.into(),
            columns: Vec::new(),
        }
    }

    pub fn with(mut self, column: impl Into<String>, channel: Channel) -> Self {
        self.columns.push((column.into(), channel));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    /// One stream per mapped column, in mapping order.
    pub streams: Vec<RawStream>,
    pub rows: usize,
    /// Rows with an unparseable timestamp or at least one unparseable or
    /// non-finite mapped value. Empty cells count as missing, not skipped.
    pub skipped_rows: usize,
}

/// Unix seconds from an integer/decimal epoch or an RFC 3339 string.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.floor() as i64);
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.timestamp())
}

fn detect_delimiter(bytes: &[u8]) -> u8 {
    let header = bytes.split(|b| *b == b'\n').next().unwrap_or_default();
    let tabs = header.iter().filter(|b| **b == b'\t').count();
    let commas = header.iter().filter(|b| **b == b',').count();
    if tabs > commas {
        b'\t'
    } else {
        b','
    }
}

/// Parses delimited text (comma or tab, detected from the header line).
pub fn parse_csv<R: Read>(mut reader: R, mapping: &ColumnMapping) -> Result<ParsedCsv, IngestError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|source| IngestError::Io {
        path: "<stream>".into(),
        source,
    })?;
    parse_bytes(&bytes, mapping)
}

pub fn parse_csv_path(path: &Path, mapping: &ColumnMapping) -> Result<ParsedCsv, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_bytes(&bytes, mapping)
}

fn parse_bytes(bytes: &[u8], mapping: &ColumnMapping) -> Result<ParsedCsv, IngestError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::EmptyFile);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(bytes))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| IngestError::MalformedHeader(e.to_string()))?
        .clone();
    let mut seen = std::collections::HashSet::new();
    for name in header.iter() {
        if name.is_empty() {
            return Err(IngestError::MalformedHeader("blank column name".into()));
        }
        if !seen.insert(name) {
            return Err(IngestError::MalformedHeader(format!("duplicate column `{name}`")));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let time_idx = find(&mapping.time)?;
    let cols = mapping
        .columns
        .iter()
        .map(|(name, ch)| Ok((find(name)?, *ch)))
        .collect::<Result<Vec<_>, IngestError>>()?;

    let mut streams: Vec<RawStream> = cols
        .iter()
        .map(|&(_, channel)| RawStream {
            channel,
            records: Vec::new(),
        })
        .collect();
    let (mut rows, mut skipped_rows) = (0, 0);
    for record in rdr.records() {
        rows += 1;
        let Ok(record) = record else {
            skipped_rows += 1;
            continue;
        };
        let Some(timestamp) = record.get(time_idx).and_then(parse_timestamp) else {
            skipped_rows += 1;
            continue;
        };
        let mut bad = false;
        for (stream, &(idx, _)) in streams.iter_mut().zip(&cols) {
            match record.get(idx) {
                None | Some("") => {}
                Some(cell) => match cell.parse::<f64>() {
                    Ok(value) if value.is_finite() => stream.records.push(RawRecord { timestamp, value }),
                    _ => bad = true,
                },
            }
        }
        if bad {
            skipped_rows += 1;
        }
    }
    Ok(ParsedCsv {
        streams,
        rows,
        skipped_rows,
    })
}

/// Output of [`align_average`].
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub series: SensorSeries,
    /// Windows with data for some but not all channels.
    pub incomplete_windows: usize,
    /// Complete windows whose averaged record failed validation.
    pub invalid_windows: usize,
}

/// Averages every channel over half-open windows `[k·w, (k+1)·w)` and keeps
/// windows where every channel present in `streams` has at least one value.
///
/// Temperature and reference CO2 are required, plus IR and/or sensor CO2.
pub fn align_average(
    sensor_id: &str,
    streams: &[RawStream],
    window: u32,
) -> Result<Aligned, IngestError> {
    if window == 0 {
        return Err(IngestError::ZeroWindow);
    }
    let mut present = [false; 4];
    for s in streams {
        present[s.channel.slot()] = true;
    }
    for ch in [Channel::Temperature, Channel::ReferenceCo2] {
        if !present[ch.slot()] {
            return Err(IngestError::MissingChannel(ch));
        }
    }
    if !present[Channel::IrSignal.slot()] && !present[Channel::SensorCo2.slot()] {
        return Err(IngestError::MissingChannel(Channel::IrSignal));
    }

    let w = i64::from(window);
    let mut acc: BTreeMap<i64, [(f64, u32); 4]> = BTreeMap::new();
    for s in streams {
        for r in &s.records {
            let cell = &mut acc.entry(r.timestamp.div_euclid(w)).or_default()[s.channel.slot()];
            cell.0 += r.value;
            cell.1 += 1;
        }
    }

    let mean = |cells: &[(f64, u32); 4], ch: Channel| {
        let (sum, n) = cells[ch.slot()];
        present[ch.slot()].then(|| sum / f64::from(n))
    };
    let (mut incomplete_windows, mut invalid_windows) = (0, 0);
    let mut observations = Vec::new();
    for (k, cells) in &acc {
        if (0..4).any(|i| present[i] && cells[i].1 == 0) {
            incomplete_windows += 1;
            continue;
        }
        let obs = Observation {
            timestamp: k * w,
            temperature: mean(cells, Channel::Temperature).expect("required"),
            ir_signal: mean(cells, Channel::IrSignal),
            sensor_co2: mean(cells, Channel::SensorCo2),
            reference_co2: mean(cells, Channel::ReferenceCo2).expect("required"),
        };
        match obs.validate() {
            Ok(o) => observations.push(o),
            Err(_) => invalid_windows += 1,
        }
    }
    if observations.is_empty() && invalid_windows == 0 {
        return Err(IngestError::NoOverlap);
    }
    let series = SensorSeries::new(sensor_id, observations, window)
        .expect("aligned windows are validated, ordered and share one presence pattern");
    Ok(Aligned {
        series,
        incomplete_windows,
        invalid_windows,
    })
}

/// Channel used for the outlier cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    /// Keep sensor CO2 ≤ cutoff.
    SensorCo2Upper,
    /// Keep IR ≥ cutoff (condensation inflates CO2, which deflates IR).
    IrSignalLower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierCut {
    pub series: SensorSeries,
    pub mode: OutlierMode,
    pub cutoff: f64,
    pub removed: usize,
}

/// Nearest-rank outlier cut; the cutoff value itself is retained.
///
/// In CO2 mode the cutoff is the ascending value at rank `⌈q·n⌉`. In IR mode
/// it is the mirror image: the descending value at rank `⌈q·n⌉`.
pub fn remove_outliers(series: &SensorSeries, quantile: f64) -> Result<OutlierCut, IngestError> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(IngestError::InvalidQuantile(quantile));
    }
    let presence = series.presence().ok_or(IngestError::EmptySeries)?;
    let obs = series.observations();
    let n = obs.len();
    let rank = stats::nearest_rank(quantile, n);
    let (mode, cutoff, kept) = if presence.sensor_co2 {
        let values: Vec<f64> = obs.iter().map(|o| o.sensor_co2.expect("presence")).collect();
        let cutoff = stats::sorted(&values)[rank - 1];
        (
            OutlierMode::SensorCo2Upper,
            cutoff,
            series.retain(|o| o.sensor_co2.expect("presence") <= cutoff),
        )
    } else {
        let values: Vec<f64> = obs.iter().map(|o| o.ir_signal.expect("presence")).collect();
        let cutoff = stats::sorted(&values)[n - rank];
        (
            OutlierMode::IrSignalLower,
            cutoff,
            series.retain(|o| o.ir_signal.expect("presence") >= cutoff),
        )
    };
    Ok(OutlierCut {
        removed: n - kept.len(),
        series: kept,
        mode,
        cutoff,
    })
}

/// Per-sensor preprocessing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub raw_rows: usize,
    pub skipped_rows: usize,
    pub windows_kept: usize,
    pub windows_incomplete: usize,
    pub windows_invalid: usize,
    pub outlier_mode: OutlierMode,
    pub outlier_cutoff: f64,
    pub outliers_removed: usize,
}

/// Alignment followed by the outlier cut.
pub fn preprocess(
    sensor_id: &str,
    parsed: &[ParsedCsv],
    window: u32,
    quantile: f64,
) -> Result<(SensorSeries, PreprocessStats), IngestError> {
    let streams: Vec<RawStream> = parsed.iter().flat_map(|p| p.streams.iter().cloned()).collect();
    let aligned = align_average(sensor_id, &streams, window)?;
    let cut = remove_outliers(&aligned.series, quantile)?;
    let stats = PreprocessStats {
        raw_rows: parsed.iter().map(|p| p.rows).sum(),
        skipped_rows: parsed.iter().map(|p| p.skipped_rows).sum(),
        windows_kept: aligned.series.len(),
        windows_incomplete: aligned.incomplete_windows,
        windows_invalid: aligned.invalid_windows,
        outlier_mode: cut.mode,
        outlier_cutoff: cut.cutoff,
        outliers_removed: cut.removed,
    };
    Ok((cut.series, stats))
}
