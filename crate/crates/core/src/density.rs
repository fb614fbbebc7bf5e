//! Densities over the (temperature, reference CO2) plane.
//!
//! [`HistogramDensity2D`] estimates the environment a sensor actually saw;
//! [`UniformRectDensity`] is the fixed target environment that every month is
//! reweighted to. Both evaluate pointwise. Cells and rectangles are
//! lower-edge inclusive and upper-edge exclusive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("cannot estimate a density from zero points")]
    EmptyInput,
    #[error("bin widths must be positive and finite, got ({0}, {1})")]
    BadBinWidth(f64, f64),
    #[error("non-finite point ({0}, {1})")]
    NonFinitePoint(f64, f64),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),
}

/// Pointwise-evaluable density over (temperature °C, CO2 ppm).
pub trait Density2D {
    fn eval(&self, temperature: f64, co2: f64) -> f64;
}

/// Piecewise-constant density on a rectilinear grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramParts", into = "HistogramParts")]
pub struct HistogramDensity2D {
    temp_edges: Vec<f64>,
    co2_edges: Vec<f64>,
    /// Row-major by temperature bin: `mass[ti * n_co2 + ci]`.
    mass: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HistogramParts {
    temp_edges: Vec<f64>,
    co2_edges: Vec<f64>,
    /// `mass[ti][ci]`
    mass: Vec<Vec<f64>>,
}

impl TryFrom<HistogramParts> for HistogramDensity2D {
    type Error = DensityError;

    fn try_from(p: HistogramParts) -> Result<Self, Self::Error> {
        Self::from_parts(p.temp_edges, p.co2_edges, p.mass.into_iter().flatten().collect())
    }
}

impl From<HistogramDensity2D> for HistogramParts {
    fn from(h: HistogramDensity2D) -> Self {
        let n_co2 = h.co2_edges.len() - 1;
        Self {
            mass: h.mass.chunks(n_co2).map(<[f64]>::to_vec).collect(),
            temp_edges: h.temp_edges,
            co2_edges: h.co2_edges,
        }
    }
}

fn check_edges(name: &str, edges: &[f64]) -> Result<(), DensityError> {
    if edges.len() < 2 {
        return Err(DensityError::InvalidHistogram(format!("{name} needs at least two edges")));
    }
    if !edges.iter().all(|e| e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DensityError::InvalidHistogram(format!(
            "{name} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Cell containing `x`, or `None` outside `[edges[0], edges[last])`.
fn locate(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0] && x < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|e| *e <= x) - 1)
}

/// Edges at integer multiples of `width` covering `[min, max]` with `max`
/// strictly inside the last half-open cell.
fn aligned_edges(min: f64, max: f64, width: f64) -> Vec<f64> {
    let mut k = (min / width).floor() as i64;
    while (k as f64) * width > min {
        k -= 1;
    }
    let mut edges = vec![k as f64 * width];
    while *edges.last().expect("nonempty") <= max {
        k += 1;
        edges.push(k as f64 * width);
    }
    edges
}

impl HistogramDensity2D {
    pub fn from_parts(
        temp_edges: Vec<f64>,
        co2_edges: Vec<f64>,
        mass: Vec<f64>,
    ) -> Result<Self, DensityError> {
        check_edges("temp_edges", &temp_edges)?;
        check_edges("co2_edges", &co2_edges)?;
        let cells = (temp_edges.len() - 1) * (co2_edges.len() - 1);
        if mass.len() != cells {
            return Err(DensityError::InvalidHistogram(format!(
                "expected {cells} cell masses, got {}",
                mass.len()
            )));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(DensityError::InvalidHistogram("masses must be finite and ≥ 0".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DensityError::InvalidHistogram(format!("masses sum to {total}, not 1")));
        }
        Ok(Self {
            temp_edges,
            co2_edges,
            mass,
        })
    }

    /// Histogram of `(temperature, co2)` points on a grid aligned to whole
    /// multiples of the bin widths.
    pub fn estimate(points: &[(f64, f64)], widths: (f64, f64)) -> Result<Self, DensityError> {
        let (wt, wc) = widths;
        if !(wt.is_finite() && wt > 0.0 && wc.is_finite() && wc > 0.0) {
            return Err(DensityError::BadBinWidth(wt, wc));
        }
        if points.is_empty() {
            return Err(DensityError::EmptyInput);
        }
        let mut t_range = (f64::INFINITY, f64::NEG_INFINITY);
        let mut c_range = (f64::INFINITY, f64::NEG_INFINITY);
        for &(t, c) in points {
            if !(t.is_finite() && c.is_finite()) {
                return Err(DensityError::NonFinitePoint(t, c));
            }
            t_range = (t_range.0.min(t), t_range.1.max(t));
            c_range = (c_range.0.min(c), c_range.1.max(c));
        }
        let temp_edges = aligned_edges(t_range.0, t_range.1, wt);
        let co2_edges = aligned_edges(c_range.0, c_range.1, wc);
        let n_co2 = co2_edges.len() - 1;
        let mut counts = vec![0usize; (temp_edges.len() - 1) * n_co2];
        for &(t, c) in points {
            let ti = locate(&temp_edges, t).expect("edges cover data");
            let ci = locate(&co2_edges, c).expect("edges cover data");
            counts[ti * n_co2 + ci] += 1;
        }
        let n = points.len() as f64;
        Ok(Self {
            temp_edges,
            co2_edges,
            mass: counts.into_iter().map(|k| k as f64 / n).collect(),
        })
    }

    pub fn temp_edges(&self) -> &[f64] {
        &self.temp_edges
    }

    pub fn co2_edges(&self) -> &[f64] {
        &self.co2_edges
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.temp_edges.len() - 1, self.co2_edges.len() - 1)
    }

    /// Mass of cell `(ti, ci)`.
    pub fn mass(&self, ti: usize, ci: usize) -> f64 {
        self.mass[ti * (self.co2_edges.len() - 1) + ci]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn cell_area(&self, ti: usize, ci: usize) -> f64 {
        (self.temp_edges[ti + 1] - self.temp_edges[ti]) * (self.co2_edges[ci + 1] - self.co2_edges[ci])
    }

    /// Cell containing the point, if inside the grid.
    pub fn cell_of(&self, temperature: f64, co2: f64) -> Option<(usize, usize)> {
        Some((locate(&self.temp_edges, temperature)?, locate(&self.co2_edges, co2)?))
    }

    /// Fraction of `desired`'s area covered by cells with positive mass.
    pub fn coverage(&self, desired: &UniformRectDensity) -> f64 {
        let overlap = |a: (f64, f64), b: [f64; 2]| (a.1.min(b[1]) - a.0.max(b[0])).max(0.0);
        let (nt, nc) = self.shape();
        let mut covered = 0.0;
        for ti in 0..nt {
            let dt = overlap((self.temp_edges[ti], self.temp_edges[ti + 1]), desired.temp_range);
            if dt == 0.0 {
                continue;
            }
            for ci in 0..nc {
                if self.mass(ti, ci) > 0.0 {
                    covered += dt * overlap((self.co2_edges[ci], self.co2_edges[ci + 1]), desired.co2_range);
                }
            }
        }
        covered / desired.area()
    }
}

impl Density2D for HistogramDensity2D {
    fn eval(&self, temperature: f64, co2: f64) -> f64 {
        match self.cell_of(temperature, co2) {
            Some((ti, ci)) => self.mass(ti, ci) / self.cell_area(ti, ci),
            None => 0.0,
        }
    }
}

/// Uniform density on `[t_lo, t_hi) × [c_lo, c_hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RectParts")]
pub struct UniformRectDensity {
    pub temp_range: [f64; 2],
    pub co2_range: [f64; 2],
}

#[derive(Deserialize)]
struct RectParts {
    temp_range: [f64; 2],
    co2_range: [f64; 2],
}

impl TryFrom<RectParts> for UniformRectDensity {
    type Error = DensityError;

    fn try_from(p: RectParts) -> Result<Self, Self::Error> {
        Self::new(p.temp_range, p.co2_range)
    }
}

impl UniformRectDensity {
    pub fn new(temp_range: [f64; 2], co2_range: [f64; 2]) -> Result<Self, DensityError> {
        for (name, [lo, hi]) in [("temp_range", temp_range), ("co2_range", co2_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DensityError::InvalidRect(format!("{name} needs lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(Self {
            temp_range,
            co2_range,
        })
    }

    pub fn area(&self) -> f64 {
        (self.temp_range[1] - self.temp_range[0]) * (self.co2_range[1] - self.co2_range[0])
    }

    pub fn contains(&self, temperature: f64, co2: f64) -> bool {
        temperature >= self.temp_range[0]
            && temperature < self.temp_range[1]
            && co2 >= self.co2_range[0]
            && co2 < self.co2_range[1]
    }
}

impl Density2D for UniformRectDensity {
    fn eval(&self, temperature: f64, co2: f64) -> f64 {
        if self.contains(temperature, co2) {
            1.0 / self.area()
        } else {
            0.0
        }
    }
}

/// Either density kind, for storage and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    Histogram(HistogramDensity2D),
    UniformRect(UniformRectDensity),
}

impl Density2D for Density {
    fn eval(&self, temperature: f64, co2: f64) -> f64 {
        match self {
            Density::Histogram(h) => h.eval(temperature, co2),
            Density::UniformRect(u) => u.eval(temperature, co2),
        }
    }
}

impl<D: Density2D + ?Sized> Density2D for &D {
    fn eval(&self, temperature: f64, co2: f64) -> f64 {
        (**self).eval(temperature, co2)
    }
}
