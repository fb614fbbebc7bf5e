//! Temperature-compensated Beer-Lambert estimator for NDIR CO2 sensors.
//!
//! The absorber optical density is scaled by `t_ref / T` (ideal-gas number
//! density at fixed pressure):
//!
//! ```text
//! forward:  x_I = i0 · exp(−alpha · y · t_ref / T_K)
//! inverse:  ŷ   = max(0, −ln(x_I / i0) · (T_K / t_ref) / alpha)
//! ```
//!
//! The vendor's own compensation polynomial is not public; this form is a
//! physically motivated stand-in that can be swapped behind [`Estimator`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Observation;

pub const KELVIN_OFFSET: f64 = 273.15;
pub const DEFAULT_T_REF: f64 = 293.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("ir_signal must be strictly positive, got {0}")]
    NonPositiveIr(f64),
    #[error("temperature {0} °C is at or below absolute zero")]
    NonPhysicalTemperature(f64),
    #[error("negative concentration {0} ppm")]
    NegativeConcentration(f64),
    #[error("invalid Beer-Lambert parameters: {0}")]
    InvalidParams(String),
    #[error("calibration window is degenerate: {0}")]
    DegenerateWindow(String),
    #[error("estimator requires `{0}` but the observation does not carry it")]
    MissingChannel(&'static str),
}

/// Calibration constants of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct BeerLambertParams {
    /// Intensity at zero absorber.
    pub i0: f64,
    /// Absorption scale at the reference temperature, 1/ppm.
    pub alpha: f64,
    /// Reference temperature, K.
    pub t_ref: f64,
}

#[derive(Deserialize)]
struct RawParams {
    i0: f64,
    alpha: f64,
    #[serde(default = "default_t_ref")]
    t_ref: f64,
}

fn default_t_ref() -> f64 {
    DEFAULT_T_REF
}

impl TryFrom<RawParams> for BeerLambertParams {
    type Error = SensorError;

    fn try_from(r: RawParams) -> Result<Self, Self::Error> {
        Self::new(r.i0, r.alpha, r.t_ref)
    }
}

fn kelvin(temperature: f64) -> Result<f64, SensorError> {
    let tk = temperature + KELVIN_OFFSET;
    if tk > 0.0 {
        Ok(tk)
    } else {
        Err(SensorError::NonPhysicalTemperature(temperature))
    }
}

impl BeerLambertParams {
    pub fn new(i0: f64, alpha: f64, t_ref: f64) -> Result<Self, SensorError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(i0) && ok(alpha) && ok(t_ref)) {
            return Err(SensorError::InvalidParams(format!(
                "need i0, alpha, t_ref > 0 and finite; got i0={i0}, alpha={alpha}, t_ref={t_ref}"
            )));
        }
        Ok(Self { i0, alpha, t_ref })
    }

    /// Concentration estimate ŷ = f(temperature, ir_signal).
    ///
    /// Noise can push the raw inversion below zero; the result is then
    /// clamped to 0 and marked `flagged`.
    pub fn estimate_co2(&self, temperature: f64, ir_signal: f64) -> Result<Estimate, SensorError> {
        if !(ir_signal > 0.0) {
            return Err(SensorError::NonPositiveIr(ir_signal));
        }
        let tk = kelvin(temperature)?;
        let raw = -(ir_signal / self.i0).ln() * (tk / self.t_ref) / self.alpha;
        Ok(if raw < 0.0 {
            Estimate {
                ppm: 0.0,
                flagged: true,
            }
        } else {
            Estimate {
                ppm: raw,
                flagged: false,
            }
        })
    }

    /// Expected IR intensity for concentration `y` at `temperature`.
    pub fn forward_ir(&self, temperature: f64, y: f64) -> Result<f64, SensorError> {
        if !(y >= 0.0) {
            return Err(SensorError::NegativeConcentration(y));
        }
        let tk = kelvin(temperature)?;
        Ok(self.i0 * (-self.alpha * y * self.t_ref / tk).exp())
    }

    /// Least-squares calibration from `(temperature °C, ir_signal, reference ppm)`
    /// triples, with `t_ref` held at [`DEFAULT_T_REF`].
    ///
    /// Regresses `ln x_I` on `r = y · t_ref / T_K`: the intercept is `ln i0`
    /// and the slope is `−alpha`.
    pub fn fit(window: &[(f64, f64, f64)]) -> Result<Self, SensorError> {
        if window.len() < 3 {
            return Err(SensorError::DegenerateWindow(format!(
                "need at least 3 points, got {}",
                window.len()
            )));
        }
        let first_y = window[0].2;
        if window.iter().all(|p| p.2 == first_y) {
            return Err(SensorError::DegenerateWindow(
                "all reference concentrations are identical".into(),
            ));
        }
        let t_ref = DEFAULT_T_REF;
        let mut xs = Vec::with_capacity(window.len());
        let mut ys = Vec::with_capacity(window.len());
        for &(t, ir, y) in window {
            if !(ir > 0.0) {
                return Err(SensorError::NonPositiveIr(ir));
            }
            xs.push(y * t_ref / kelvin(t)?);
            ys.push(ir.ln());
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        if !(sxx > f64::EPSILON * mx.abs().max(1.0).powi(2) * n) {
            return Err(SensorError::DegenerateWindow("regressor has no spread".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        Self::new(intercept.exp(), -slope, t_ref).map_err(|e| {
            SensorError::DegenerateWindow(format!("fit produced unusable parameters: {e}"))
        })
    }
}

/// Result of one estimator evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub ppm: f64,
    /// Set when the value was clamped or is physically suspect (negative).
    pub flagged: bool,
}

/// Identity estimator for datasets that expose sensor-reported CO2.
pub fn passthrough_estimator(sensor_co2: f64) -> Estimate {
    Estimate {
        ppm: sensor_co2,
        flagged: sensor_co2 < 0.0,
    }
}

/// How sensor-side readings become concentration estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Estimator {
    BeerLambert { params: BeerLambertParams },
    Passthrough,
}

impl Estimator {
    pub fn estimate(&self, obs: &Observation) -> Result<Estimate, SensorError> {
        match self {
            Estimator::BeerLambert { params } => {
                let ir = obs.ir_signal.ok_or(SensorError::MissingChannel("ir_signal"))?;
                params.estimate_co2(obs.temperature, ir)
            }
            Estimator::Passthrough => obs
                .sensor_co2
                .map(passthrough_estimator)
                .ok_or(SensorError::MissingChannel("sensor_co2")),
        }
    }

    /// Signed error ŷ − y.
    pub fn error(&self, obs: &Observation) -> Result<f64, SensorError> {
        Ok(self.estimate(obs)?.ppm - obs.reference_co2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> BeerLambertParams {
        BeerLambertParams::new(1.0, 1e-4, DEFAULT_T_REF).unwrap()
    }

    #[test]
    fn zero_absorbance_gives_zero() {
        let p = BeerLambertParams::new(0.8, 2e-4, DEFAULT_T_REF).unwrap();
        for t in [-20.0, 0.0, 35.0] {
            let e = p.estimate_co2(t, 0.8).unwrap();
            assert_eq!(e.ppm, 0.0);
            assert!(!e.flagged);
        }
    }

    #[test]
    fn closed_form_against_high_precision_value() {
        // -ln(0.956) / 1e-4, evaluated with 50-digit arithmetic.
        let expected = 449.973_659_307_357_66;
        let got = params().estimate_co2(20.0, 0.956).unwrap().ppm;
        assert_relative_eq!(got, expected, max_relative = 1e-12);
        // same intensity at 0 °C: scaled by 273.15 / 293.15
        let expected_cold = 419.274_450_076_086_46;
        let got = params().estimate_co2(0.0, 0.956).unwrap().ppm;
        assert_relative_eq!(got, expected_cold, max_relative = 1e-12);
    }

    #[test]
    fn roundtrip_at_450() {
        let p = params();
        let x = p.forward_ir(20.0, 450.0).unwrap();
        assert!((p.estimate_co2(20.0, x).unwrap().ppm - 450.0).abs() < 1e-9);
    }

    #[test]
    fn forward_examples() {
        let p = BeerLambertParams::new(1.7, 1e-3, 300.0).unwrap();
        assert_eq!(p.forward_ir(10.0, 0.0).unwrap(), 1.7);
        let unit = p.forward_ir(300.0 - KELVIN_OFFSET, 1.0 / p.alpha).unwrap();
        assert_relative_eq!(unit, 1.7 * (-1.0f64).exp(), max_relative = 1e-14);
        assert!(p.forward_ir(10.0, 400.0).unwrap() > p.forward_ir(10.0, 401.0).unwrap());
    }

    #[test]
    fn error_paths() {
        let p = params();
        assert_eq!(p.estimate_co2(20.0, 0.0), Err(SensorError::NonPositiveIr(0.0)));
        assert!(matches!(
            p.estimate_co2(-300.0, 0.9),
            Err(SensorError::NonPhysicalTemperature(_))
        ));
        assert!(matches!(
            p.forward_ir(-273.15, 1.0),
            Err(SensorError::NonPhysicalTemperature(_))
        ));
        assert!(BeerLambertParams::new(0.0, 1.0, 1.0).is_err());
        assert!(BeerLambertParams::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn noisy_ir_above_i0_clamps() {
        let e = params().estimate_co2(20.0, 1.001).unwrap();
        assert_eq!(e.ppm, 0.0);
        assert!(e.flagged);
    }

    #[test]
    fn passthrough_examples() {
        assert_eq!(passthrough_estimator(421.5).ppm, 421.5);
        assert_eq!(passthrough_estimator(0.0).ppm, 0.0);
        let neg = passthrough_estimator(-3.0);
        assert_eq!(neg.ppm, -3.0);
        assert!(neg.flagged);
    }

    #[test]
    fn noiseless_fit_recovers_params() {
        let truth = BeerLambertParams::new(1.3, 7e-4, DEFAULT_T_REF).unwrap();
        let window: Vec<_> = (0..40)
            .map(|i| {
                let t = -5.0 + i as f64;
                let y = 400.0 + 7.5 * i as f64;
                (t, truth.forward_ir(t, y).unwrap(), y)
            })
            .collect();
        let fit = BeerLambertParams::fit(&window).unwrap();
        assert_relative_eq!(fit.i0, truth.i0, max_relative = 1e-9);
        assert_relative_eq!(fit.alpha, truth.alpha, max_relative = 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_windows() {
        let same_y = [(0.0, 0.9, 420.0), (10.0, 0.91, 420.0), (20.0, 0.92, 420.0)];
        assert!(matches!(
            BeerLambertParams::fit(&same_y),
            Err(SensorError::DegenerateWindow(_))
        ));
        assert!(matches!(
            BeerLambertParams::fit(&[(0.0, 0.9, 420.0), (0.0, 0.8, 440.0)]),
            Err(SensorError::DegenerateWindow(_))
        ));
    }

    #[test]
    fn params_json_shape() {
        let p = BeerLambertParams::new(1.0, 1e-3, 293.15).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"i0":1.0,"alpha":0.001,"t_ref":293.15}"#);
        let back: BeerLambertParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let defaulted: BeerLambertParams = serde_json::from_str(r#"{"i0":1,"alpha":1e-3}"#).unwrap();
        assert_eq!(defaulted.t_ref, DEFAULT_T_REF);
        assert!(serde_json::from_str::<BeerLambertParams>(r#"{"i0":-1,"alpha":1e-3}"#).is_err());
    }

    #[test]
    fn estimator_dispatch() {
        let obs = Observation {
            timestamp: 0,
            temperature: 20.0,
            ir_signal: None,
            sensor_co2: Some(430.0),
            reference_co2: 425.0,
        };
        assert_eq!(Estimator::Passthrough.error(&obs).unwrap(), 5.0);
        let bl = Estimator::BeerLambert { params: params() };
        assert_eq!(bl.estimate(&obs), Err(SensorError::MissingChannel("ir_signal")));
    }
}
