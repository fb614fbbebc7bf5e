//! Synthetic co-located sensor fleets with known instrumental drift.
//!
//! One environment trajectory (temperature, true CO2) is shared by every
//! sensor. Each sensor turns it into IR readings through its own instrument
//! model:
//!
//! ```text
//! T_phys = x_T + temperature_bias
//! x_I    = g(t) · s(T_phys) · forward_ir(true_params, T_phys, y) · exp(ε),   ε ~ N(0, σ²)
//! s(T)   = exp(source_temp_coeff · (T_K − t_ref))
//! ```
//!
//! and reports `x_T` together with the CO2 its (possibly stale) calibrated
//! parameters infer. The same instrument model, with the environment frozen
//! to a uniform rectangle, gives the Monte Carlo ground truth for the
//! instrumental RMSE at any instant.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::UniformRectDensity;
use crate::model::{format_timestamp, Dataset, MonthKey, Observation, SensorSeries};
use crate::par::Exec;
use crate::seed::{derive_seed, substream};
use crate::sensor::{BeerLambertParams, SensorError, DEFAULT_T_REF, KELVIN_OFFSET};

const DAY: f64 = 86_400.0;
const YEAR: f64 = 365.25 * DAY;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

mod timestamp_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &i64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::model::format_timestamp(*ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i64, D::Error> {
        let s = String::deserialize(d)?;
        crate::ingest::parse_timestamp(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{s}`")))
    }
}

/// Annual plus diurnal sinusoid with white noise, °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureModel {
    pub mean: f64,
    pub annual_amplitude: f64,
    /// Day of year (0-based) of the annual maximum.
    pub warmest_day: f64,
    pub diurnal_amplitude: f64,
    /// Hour (UTC) of the daily maximum.
    pub warmest_hour: f64,
    pub noise_sigma: f64,
}

impl Default for TemperatureModel {
    fn default() -> Self {
        Self {
            mean: 9.5,
            annual_amplitude: 9.5,
            warmest_day: 200.0,
            diurnal_amplitude: 4.0,
            warmest_hour: 14.0,
            noise_sigma: 1.5,
        }
    }
}

/// Baseline with a winter maximum, a diurnal cycle, decaying spikes and
/// white noise, ppm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Co2Model {
    pub baseline: f64,
    /// Peaks when temperature is at its annual minimum.
    pub annual_amplitude: f64,
    pub diurnal_amplitude: f64,
    pub peak_hour: f64,
    /// Poisson arrival rate of spikes, per hour.
    pub spike_rate_per_hour: f64,
    /// Mean spike height (exponentially distributed), ppm.
    pub spike_magnitude: f64,
    pub spike_decay_hours: f64,
    pub noise_sigma: f64,
}

impl Default for Co2Model {
    fn default() -> Self {
        Self {
            baseline: 428.0,
            annual_amplitude: 10.0,
            diurnal_amplitude: 12.0,
            peak_hour: 6.0,
            spike_rate_per_hour: 0.08,
            spike_magnitude: 20.0,
            spike_decay_hours: 3.0,
            noise_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSpec {
    #[serde(with = "timestamp_serde")]
    pub start: i64,
    pub duration_days: f64,
    /// Sampling interval, seconds.
    pub cadence: u32,
    pub temperature: TemperatureModel,
    pub co2: Co2Model,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            start: MonthKey::new(2017, 7).expect("valid").start(),
            duration_days: 730.0,
            cadence: 600,
            temperature: TemperatureModel::default(),
            co2: Co2Model::default(),
        }
    }
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.duration_days.is_finite() && self.duration_days > 0.0) {
            return Err(invalid(format!("duration_days must be positive, got {}", self.duration_days)));
        }
        if self.cadence == 0 {
            return Err(invalid("cadence must be positive"));
        }
        let t = &self.temperature;
        let c = &self.co2;
        let finite = [
            t.mean,
            t.annual_amplitude,
            t.warmest_day,
            t.diurnal_amplitude,
            t.warmest_hour,
            c.annual_amplitude,
            c.diurnal_amplitude,
            c.peak_hour,
            c.spike_magnitude,
        ];
        if !finite.iter().all(|v| v.is_finite()) {
            return Err(invalid("environment parameters must be finite"));
        }
        for (name, v) in [
            ("temperature.noise_sigma", t.noise_sigma),
            ("co2.noise_sigma", c.noise_sigma),
            ("co2.baseline", c.baseline),
            ("co2.spike_rate_per_hour", c.spike_rate_per_hour),
            ("co2.spike_magnitude", c.spike_magnitude),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !(c.spike_decay_hours > 0.0) {
            return Err(invalid("co2.spike_decay_hours must be positive"));
        }
        Ok(())
    }

    /// Sample instants.
    pub fn timestamps(&self) -> Vec<i64> {
        let n = (self.duration_days * DAY / f64::from(self.cadence)).ceil() as i64;
        (0..n).map(|k| self.start + k * i64::from(self.cadence)).collect()
    }

    /// First instant after the simulated span.
    pub fn end(&self) -> i64 {
        self.start + (self.duration_days * DAY).ceil() as i64
    }

    fn annual_phase(&self, ts: i64) -> f64 {
        TAU * (ts as f64 / DAY - self.temperature.warmest_day) / 365.25
    }

    fn hour(ts: i64) -> f64 {
        ts.rem_euclid(86_400) as f64 / 3600.0
    }

    /// Noise-free temperature at `ts`.
    pub fn mean_temperature_at(&self, ts: i64) -> f64 {
        let t = &self.temperature;
        t.mean
            + t.annual_amplitude * self.annual_phase(ts).cos()
            + t.diurnal_amplitude * (TAU * (Self::hour(ts) - t.warmest_hour) / 24.0).cos()
    }

    fn mean_co2_at(&self, ts: i64) -> f64 {
        let c = &self.co2;
        c.baseline - c.annual_amplitude * self.annual_phase(ts).cos()
            + c.diurnal_amplitude * (TAU * (Self::hour(ts) - c.peak_hour) / 24.0).cos()
    }
}

/// Realized environment shared by the fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentTrajectory {
    pub timestamps: Vec<i64>,
    pub temperature: Vec<f64>,
    pub reference_co2: Vec<f64>,
}

pub fn generate_environment(env: &EnvironmentSpec, seed: u64) -> Result<EnvironmentTrajectory, SynthError> {
    env.validate()?;
    let mut rng = substream(seed, &["environment".into()]);
    let timestamps = env.timestamps();
    let c = &env.co2;
    let dt_hours = f64::from(env.cadence) / 3600.0;
    let decay = (-dt_hours / c.spike_decay_hours).exp();
    let arrivals = (c.spike_rate_per_hour > 0.0)
        .then(|| Poisson::new(c.spike_rate_per_hour * dt_hours).expect("positive rate"));
    let height = Exp::new(1.0).expect("unit rate");
    let t_noise = Normal::new(0.0, env.temperature.noise_sigma).expect("σ ≥ 0");
    let c_noise = Normal::new(0.0, c.noise_sigma).expect("σ ≥ 0");

    let mut temperature = Vec::with_capacity(timestamps.len());
    let mut reference_co2 = Vec::with_capacity(timestamps.len());
    let mut spike = 0.0;
    for &ts in &timestamps {
        spike *= decay;
        if let Some(p) = &arrivals {
            let k: f64 = p.sample(&mut rng);
            for _ in 0..k as u64 {
                spike += c.spike_magnitude * height.sample(&mut rng);
            }
        }
        temperature.push(env.mean_temperature_at(ts) + t_noise.sample(&mut rng));
        reference_co2.push((env.mean_co2_at(ts) + spike + c_noise.sample(&mut rng)).max(0.0));
    }
    Ok(EnvironmentTrajectory {
        timestamps,
        temperature,
        reference_co2,
    })
}

/// Multiplicative gain applied to the IR signal over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainDrift {
    None,
    /// `g(t) = 1 + slope_per_year · years`.
    Linear { slope_per_year: f64 },
    /// `g = exp(W)`, `W` a Gaussian random walk stepping every `step_hours`.
    RandomWalk {
        sigma_per_step: f64,
        step_hours: f64,
        seed: u64,
    },
}

/// Gain trajectory materialized up to a horizon.
#[derive(Debug, Clone)]
pub enum GainPath {
    Constant,
    Linear { slope_per_year: f64 },
    Steps { step_secs: f64, log_gain: Vec<f64> },
}

impl GainDrift {
    pub fn validate(&self, horizon_secs: f64) -> Result<(), SynthError> {
        match *self {
            GainDrift::None => Ok(()),
            GainDrift::Linear { slope_per_year } => {
                if !slope_per_year.is_finite() {
                    return Err(invalid("gain slope must be finite"));
                }
                let end = 1.0 + slope_per_year * horizon_secs / YEAR;
                if end <= 0.0 {
                    return Err(invalid(format!("linear gain reaches {end} ≤ 0 within the simulated span")));
                }
                Ok(())
            }
            GainDrift::RandomWalk {
                sigma_per_step,
                step_hours,
                ..
            } => {
                if !(sigma_per_step.is_finite() && sigma_per_step >= 0.0 && step_hours > 0.0) {
                    return Err(invalid("random walk needs sigma ≥ 0 and step_hours > 0"));
                }
                Ok(())
            }
        }
    }

    /// Path valid for elapsed times in `[0, horizon_secs]`.
    pub fn path(&self, horizon_secs: f64) -> GainPath {
        match *self {
            GainDrift::None => GainPath::Constant,
            GainDrift::Linear { slope_per_year } => GainPath::Linear { slope_per_year },
            GainDrift::RandomWalk {
                sigma_per_step,
                step_hours,
                seed,
            } => {
                let step_secs = step_hours * 3600.0;
                let steps = (horizon_secs.max(0.0) / step_secs).floor() as usize + 1;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, sigma_per_step).expect("σ ≥ 0");
                let mut w = 0.0;
                let mut log_gain = Vec::with_capacity(steps);
                log_gain.push(0.0);
                for _ in 1..steps {
                    w += normal.sample(&mut rng);
                    log_gain.push(w);
                }
                GainPath::Steps { step_secs, log_gain }
            }
        }
    }
}

impl GainPath {
    pub fn at(&self, elapsed_secs: f64) -> f64 {
        match self {
            GainPath::Constant => 1.0,
            GainPath::Linear { slope_per_year } => 1.0 + slope_per_year * elapsed_secs / YEAR,
            GainPath::Steps { step_secs, log_gain } => {
                let k = (elapsed_secs.max(0.0) / step_secs).floor() as usize;
                log_gain[k.min(log_gain.len() - 1)].exp()
            }
        }
    }
}

/// Ground-truth behavior of one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    /// Parameters of the physical forward model.
    pub true_params: BeerLambertParams,
    /// Parameters the sensor's estimator uses.
    pub calibrated_params: BeerLambertParams,
    #[serde(default = "no_drift")]
    pub gain_drift: GainDrift,
    /// Standard deviation of the log-normal IR noise.
    #[serde(default)]
    pub ir_noise_sigma: f64,
    /// Offset between the physical and the reported temperature, °C.
    #[serde(default)]
    pub temperature_bias: f64,
    /// Relative source intensity change per kelvin away from `t_ref`.
    #[serde(default)]
    pub source_temp_coeff: f64,
    /// Probability that a sample is missing.
    #[serde(default)]
    pub dropout: f64,
}

fn no_drift() -> GainDrift {
    GainDrift::None
}

impl InstrumentSpec {
    /// Exactly calibrated, noiseless, drift-free instrument.
    pub fn ideal(params: BeerLambertParams) -> Self {
        Self {
            true_params: params,
            calibrated_params: params,
            gain_drift: GainDrift::None,
            ir_noise_sigma: 0.0,
            temperature_bias: 0.0,
            source_temp_coeff: 0.0,
            dropout: 0.0,
        }
    }

    pub fn validate(&self, horizon_secs: f64) -> Result<(), SynthError> {
        if !(self.ir_noise_sigma.is_finite() && self.ir_noise_sigma >= 0.0) {
            return Err(invalid("ir_noise_sigma must be finite and ≥ 0"));
        }
        if !(self.temperature_bias.is_finite() && self.source_temp_coeff.is_finite()) {
            return Err(invalid("temperature_bias and source_temp_coeff must be finite"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must be in [0, 1)"));
        }
        self.gain_drift.validate(horizon_secs)
    }

    /// IR intensity for reported temperature `temperature`, true CO2 `y`,
    /// gain `gain` and log-noise `eps`.
    pub fn ir_reading(&self, temperature: f64, y: f64, gain: f64, eps: f64) -> Result<f64, SensorError> {
        let t_phys = temperature + self.temperature_bias;
        let t_k = t_phys + KELVIN_OFFSET;
        let source = (self.source_temp_coeff * (t_k - self.true_params.t_ref)).exp();
        Ok(gain * source * self.true_params.forward_ir(t_phys, y)? * eps.exp())
    }
}

/// Instrument with its sensor id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedInstrument {
    pub id: String,
    #[serde(flatten)]
    pub spec: InstrumentSpec,
}

/// Nominal Beer-Lambert constants of the synthetic fleet.
pub fn nominal_params() -> BeerLambertParams {
    BeerLambertParams::new(1.0, 1e-3, DEFAULT_T_REF).expect("valid constants")
}

/// Fleet of `n` exactly calibrated sensors whose gain slopes spread from
/// −0.5 %/year to −4 %/year, with IR noise and a small source temperature
/// coefficient. Ids count up from 1090.
pub fn default_fleet(n: usize) -> Vec<NamedInstrument> {
    (0..n)
        .map(|i| {
            let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
            let mut spec = InstrumentSpec::ideal(nominal_params());
            spec.gain_drift = GainDrift::Linear {
                slope_per_year: -(0.005 + 0.035 * frac),
            };
            spec.ir_noise_sigma = 0.004;
            spec.source_temp_coeff = 2e-4 + 2e-4 * (i % 3) as f64;
            NamedInstrument {
                id: (1090 + i).to_string(),
                spec,
            }
        })
        .collect()
}

fn sensor_series(
    env: &EnvironmentSpec,
    traj: &EnvironmentTrajectory,
    instrument: &NamedInstrument,
    seed: u64,
) -> Result<SensorSeries, SynthError> {
    let spec = &instrument.spec;
    let mut rng = substream(seed, &["sensor".into(), instrument.id.as_str().into()]);
    let gain = spec.gain_drift.path((env.end() - env.start) as f64);
    let noise = Normal::new(0.0, spec.ir_noise_sigma).expect("σ ≥ 0");
    let mut observations = Vec::with_capacity(traj.timestamps.len());
    for i in 0..traj.timestamps.len() {
        let ts = traj.timestamps[i];
        let dropped = rng.random::<f64>() < spec.dropout;
        let eps = noise.sample(&mut rng);
        if dropped {
            continue;
        }
        let temperature = traj.temperature[i];
        let y = traj.reference_co2[i];
        let ir = spec.ir_reading(temperature, y, gain.at((ts - env.start) as f64), eps)?;
        let reported = spec.calibrated_params.estimate_co2(temperature, ir)?;
        observations.push(Observation {
            timestamp: ts,
            temperature,
            ir_signal: Some(ir),
            sensor_co2: Some(reported.ppm),
            reference_co2: y,
        });
    }
    SensorSeries::new(instrument.id.clone(), observations, env.cadence)
        .map_err(|e| invalid(format!("sensor {}: {e}", instrument.id)))
}

/// Environment plus per-sensor series, all drawn from substreams of `seed`.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub environment: EnvironmentTrajectory,
    pub dataset: Dataset,
}

pub fn generate_fleet(
    env: &EnvironmentSpec,
    instruments: &[NamedInstrument],
    seed: u64,
    exec: Exec,
) -> Result<Fleet, SynthError> {
    env.validate()?;
    if instruments.is_empty() {
        return Err(invalid("fleet needs at least one instrument"));
    }
    let horizon = (env.end() - env.start) as f64;
    for inst in instruments {
        inst.spec
            .validate(horizon)
            .map_err(|e| invalid(format!("instrument {}: {e}", inst.id)))?;
    }
    let environment = generate_environment(env, seed)?;
    let series = exec.map(instruments, |inst| sensor_series(env, &environment, inst, seed));
    let mut dataset = Dataset::new();
    for s in series {
        dataset
            .insert(s?)
            .map_err(|e| invalid(e.to_string()))?;
    }
    Ok(Fleet { environment, dataset })
}

/// Monte Carlo RMSE of the instrument at `elapsed_secs` after the start, with
/// (temperature, CO2) drawn uniformly from `desired`.
pub fn oracle_instrumental_rmse(
    instrument: &InstrumentSpec,
    elapsed_secs: f64,
    desired: &UniformRectDensity,
    mc_samples: usize,
    seed: u64,
) -> Result<f64, SynthError> {
    if mc_samples == 0 {
        return Err(invalid("mc_samples must be at least 1"));
    }
    instrument.validate(elapsed_secs)?;
    let gain = instrument.gain_drift.path(elapsed_secs).at(elapsed_secs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, instrument.ir_noise_sigma).expect("σ ≥ 0");
    let [t_lo, t_hi] = desired.temp_range;
    let [c_lo, c_hi] = desired.co2_range;
    let mut sum = 0.0;
    for _ in 0..mc_samples {
        let t = t_lo + (t_hi - t_lo) * rng.random::<f64>();
        let y = c_lo + (c_hi - c_lo) * rng.random::<f64>();
        let ir = instrument.ir_reading(t, y, gain, noise.sample(&mut rng))?;
        let est = instrument.calibrated_params.estimate_co2(t, ir)?;
        sum += (est.ppm - y).powi(2);
    }
    Ok((sum / mc_samples as f64).sqrt())
}

/// Ground-truth instrumental RMSE for one sensor-month, evaluated at the
/// midpoint of the month's overlap with the simulated span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub sensor_id: String,
    pub month: MonthKey,
    pub evaluated_at: i64,
    pub rmse: f64,
}

pub fn monthly_oracle(
    env: &EnvironmentSpec,
    instruments: &[NamedInstrument],
    desired: &UniformRectDensity,
    mc_samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<OracleRow>, SynthError> {
    env.validate()?;
    let (start, end) = (env.start, env.end());
    let mut months = Vec::new();
    let mut m = MonthKey::from_timestamp(start);
    while m.start() < end {
        months.push(m);
        m = m.next();
    }
    let jobs: Vec<(&NamedInstrument, MonthKey)> = instruments
        .iter()
        .flat_map(|inst| months.iter().map(move |m| (inst, *m)))
        .collect();
    exec.map(&jobs, |(inst, month)| {
        let lo = month.start().max(start);
        let hi = month.end().min(end);
        let mid = lo + (hi - lo) / 2;
        let mc_seed = derive_seed(
            seed,
            &[
                "oracle".into(),
                inst.id.as_str().into(),
                i64::from(month.year()).into(),
                i64::from(month.month()).into(),
            ],
        );
        Ok(OracleRow {
            sensor_id: inst.id.clone(),
            month: *month,
            evaluated_at: mid,
            rmse: oracle_instrumental_rmse(&inst.spec, (mid - start) as f64, desired, mc_samples, mc_seed)?,
        })
    })
    .into_iter()
    .collect()
}

fn create(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>, SynthError> {
    let file = std::fs::File::create(path).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::Writer::from_writer(std::io::BufWriter::new(file)))
}

fn csv_io(path: &Path, e: csv::Error) -> SynthError {
    SynthError::Io {
        path: path.display().to_string(),
        source: e.into(),
    }
}

/// Writes `time,reference_co2`.
pub fn write_reference_csv(path: &Path, traj: &EnvironmentTrajectory) -> Result<(), SynthError> {
    let mut w = create(path)?;
    w.write_record(["time", "reference_co2"]).map_err(|e| csv_io(path, e))?;
    for (ts, y) in traj.timestamps.iter().zip(&traj.reference_co2) {
        w.write_record([format_timestamp(*ts), y.to_string()])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `time,temperature,ir_signal,sensor_co2`; absent channels are empty.
pub fn write_sensor_csv(path: &Path, series: &SensorSeries) -> Result<(), SynthError> {
    let mut w = create(path)?;
    w.write_record(["time", "temperature", "ir_signal", "sensor_co2"])
        .map_err(|e| csv_io(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for o in series.observations() {
        w.write_record([
            format_timestamp(o.timestamp),
            o.temperature.to_string(),
            opt(o.ir_signal),
            opt(o.sensor_co2),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let io = |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| io(e.into()))?;
    f.write_all(b"\n").map_err(io)?;
    f.flush().map_err(io)
}
