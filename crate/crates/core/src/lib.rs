//! Gas-sensor drift evaluation that separates environmental variation from
//! instrumental drift.
//!
//! A sensor's error depends both on the conditions it sees (the joint density
//! of temperature and true CO2) and on its own response to those conditions.
//! Comparing plain monthly RMSE mixes the two. This crate re-evaluates every
//! month on data importance-resampled to one fixed reference environment, so
//! that what remains is the instrument's own drift.
//!
//! Pipeline: [`ingest`] → [`sensor`] estimator → [`density`] histogram per
//! month → [`resample`] weights and draws → [`metrics`] RMSE and fleet
//! statistics → [`report`]. [`synth`] generates fleets with known drift and
//! the Monte Carlo ground truth used to validate the whole chain.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod par;
pub mod report;
pub mod resample;
pub mod seed;
pub mod sensor;
pub mod stats;
pub mod synth;

pub use density::{Density, Density2D, HistogramDensity2D, UniformRectDensity};
pub use metrics::{MonthEval, SensorEval};
pub use model::{Dataset, EvalConfig, MonthKey, Observation, SensorSeries};
pub use par::Exec;
pub use report::DriftReport;
pub use resample::{ResamplePlan, WeightedSet};
pub use sensor::{BeerLambertParams, Estimator};
