//! Force maps over position/velocity grids and trap metrics.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmc::{estimate_force, KmcOptions};
use crate::setup::Setup;
use crate::steady::{force, steady_populations};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapAxis {
    /// Position scan at zero velocity.
    #[serde(rename = "z_at_v0")]
    ZAtV0,
    /// Velocity scan at the trap centre.
    #[serde(rename = "v_at_z0")]
    VAtZ0,
    #[serde(rename = "full_grid")]
    FullGrid,
}

impl MapAxis {
    pub fn name(self) -> &'static str {
        match self {
            MapAxis::ZAtV0 => "z_at_v0",
            MapAxis::VAtZ0 => "v_at_z0",
            MapAxis::FullGrid => "full_grid",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Steady,
    Kmc(KmcOptions),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Steady => "steady",
            Method::Kmc(_) => "kmc",
        }
    }
}

/// Grid of `(z, v)` points along the z axis. For `ZAtV0` only `z` is used,
/// for `VAtZ0` only `v`; `FullGrid` is the product, `z` outermost.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub axis: MapAxis,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
}

fn check_monotone(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(name, "grid is empty"));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(name, "grid values must be finite"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(name, "grid must be strictly increasing"));
    }
    Ok(())
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl SweepGrid {
    pub fn z_axis(z: Vec<f64>) -> Result<Self> {
        check_monotone("grid.z", &z)?;
        Ok(SweepGrid { axis: MapAxis::ZAtV0, z, v: vec![0.0] })
    }

    pub fn v_axis(v: Vec<f64>) -> Result<Self> {
        check_monotone("grid.v", &v)?;
        Ok(SweepGrid { axis: MapAxis::VAtZ0, z: vec![0.0], v })
    }

    pub fn full(z: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_monotone("grid.z", &z)?;
        check_monotone("grid.v", &v)?;
        Ok(SweepGrid { axis: MapAxis::FullGrid, z, v })
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.z.iter().flat_map(|&z| self.v.iter().map(move |&v| (z, v))).collect()
    }

    pub fn len(&self) -> usize {
        self.z.len() * self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForceMap {
    pub axis: MapAxis,
    pub method: &'static str,
    /// `(z, v)` of every point, in grid order.
    pub points: Vec<(f64, f64)>,
    /// z component of the acceleration, m/s².
    pub accel: Vec<f64>,
    /// Standard error of `accel` (Monte Carlo only).
    pub sigma: Option<Vec<f64>>,
    /// ħkΓ/m of the configuration, used as the natural scale.
    pub accel_unit: f64,
    pub provenance: String,
    pub warnings: Vec<String>,
}

impl ForceMap {
    /// The map with every acceleration (and the natural unit) multiplied by
    /// `factor`.
    pub fn scaled(&self, factor: f64) -> ForceMap {
        ForceMap {
            accel: self.accel.iter().map(|a| a * factor).collect(),
            sigma: self.sigma.as_ref().map(|s| s.iter().map(|x| x * factor.abs()).collect()),
            accel_unit: self.accel_unit * factor.abs(),
            ..self.clone()
        }
    }

    /// Coordinates along the scanned axis (z for `ZAtV0`, v for `VAtZ0`).
    pub fn coordinates(&self) -> Vec<f64> {
        match self.axis {
            MapAxis::VAtZ0 => self.points.iter().map(|p| p.1).collect(),
            _ => self.points.iter().map(|p| p.0).collect(),
        }
    }

    /// Largest |a| on the map.
    pub fn peak(&self) -> f64 {
        self.accel.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    /// The `z` row at `v = 0` or the `v` column at `z = 0` of a full grid, as
    /// a one-axis map.
    pub fn cut(&self, axis: MapAxis) -> Option<ForceMap> {
        if axis == self.axis {
            return Some(self.clone());
        }
        if self.axis != MapAxis::FullGrid {
            return None;
        }
        let keep: Vec<usize> = (0..self.points.len())
            .filter(|&i| match axis {
                MapAxis::ZAtV0 => self.points[i].1 == 0.0,
                MapAxis::VAtZ0 => self.points[i].0 == 0.0,
                MapAxis::FullGrid => true,
            })
            .collect();
        if keep.is_empty() {
            return None;
        }
        Some(ForceMap {
            axis,
            points: keep.iter().map(|&i| self.points[i]).collect(),
            accel: keep.iter().map(|&i| self.accel[i]).collect(),
            sigma: self.sigma.as_ref().map(|s| keep.iter().map(|&i| s[i]).collect()),
            ..self.clone()
        })
    }
}

fn evaluate(setup: &Setup, method: &Method, z: f64, v: f64, index: usize) -> Result<(f64, Option<f64>, Vec<String>)> {
    let r = Vector3::new(0.0, 0.0, z);
    let vel = Vector3::new(0.0, 0.0, v);
    match method {
        Method::Steady => {
            let rm = setup.rates(&r, &vel, 0.0);
            let rho = steady_populations(&rm)?;
            let mut a = force(&rm, &rho).total.z / setup.mass;
            if let Some(g) = setup.gravity {
                a += g.z;
            }
            Ok((a, None, Vec::new()))
        }
        Method::Kmc(options) => {
            let est = estimate_force(setup, &r, &vel, options, index as u64)?;
            Ok((est.a.z, Some(est.sigma.z), est.warnings))
        }
    }
}

/// One force evaluation per grid point, in parallel. Results are placed by
/// grid index, so the map does not depend on scheduling.
pub fn sweep(setup: &Setup, grid: &SweepGrid, method: &Method) -> Result<ForceMap> {
    if grid.is_empty() {
        return Err(Error::config("grid", "grid is empty"));
    }
    if matches!(method, Method::Steady) && setup.has_schedules() {
        return Err(Error::Physics(
            "the steady solver needs continuous beams; use the Monte Carlo method for switched light".into(),
        ));
    }
    let points = grid.points();
    let results: Vec<Result<(f64, Option<f64>, Vec<String>)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(z, v))| {
            evaluate(setup, method, z, v, i).map_err(|e| Error::AtGridPoint {
                z,
                v,
                source: Box::new(e),
            })
        })
        .collect();
    let mut accel = Vec::with_capacity(points.len());
    let mut sigma = Vec::new();
    let mut warnings = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (a, s, w) = r?;
        accel.push(a);
        if let Some(s) = s {
            sigma.push(s);
        }
        let (z, v) = points[i];
        warnings.extend(w.into_iter().map(|w| format!("z={z:e} m, v={v:e} m/s: {w}")));
    }
    warnings.dedup();
    Ok(ForceMap {
        axis: grid.axis,
        method: method.name(),
        points,
        accel,
        sigma: matches!(method, Method::Kmc(_)).then_some(sigma),
        accel_unit: setup.accel_unit(),
        provenance: String::new(),
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrapMetrics {
    /// κ = −∂a/∂z at the centre, s⁻².
    pub stiffness: Option<f64>,
    /// α = −∂a/∂v at the centre, s⁻¹.
    pub damping: Option<f64>,
    /// Largest |a|, m/s².
    pub peak: f64,
    /// Half-width (m) of the restoring region around z = 0.
    pub capture_range_z: Option<f64>,
    /// Half-width (m/s) of the damping region around v = 0.
    pub capture_range_v: Option<f64>,
}

/// Derivative at 0 of the interpolating polynomial through the five grid
/// points nearest the origin.
fn slope_at_origin(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 5 {
        return Err(Error::Physics(format!("metrics need at least 5 points, got {}", x.len())));
    }
    if !(x[0] <= 0.0 && *x.last().unwrap() >= 0.0) {
        return Err(Error::Physics("metrics need a grid that covers the origin".into()));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()).then(a.cmp(&b)));
    idx.truncate(5);
    let mut slope = 0.0;
    for &j in &idx {
        // d/dx of the Lagrange basis polynomial ℓⱼ at x = 0.
        let mut weight = 0.0;
        for &m in idx.iter().filter(|&&m| m != j) {
            let mut term = 1.0 / (x[j] - x[m]);
            for &k in idx.iter().filter(|&&k| k != j && k != m) {
                term *= (0.0 - x[k]) / (x[j] - x[k]);
            }
            weight += term;
        }
        slope += weight * y[j];
    }
    Ok(slope)
}

/// Half-width of the interval around 0 over which `−a·sign(x)` exceeds
/// `threshold`, with linear interpolation of the crossing on each side.
fn restoring_range(x: &[f64], y: &[f64], threshold: f64) -> f64 {
    let pull = |i: usize| -y[i] * x[i].signum() - threshold;
    let side = |order: Vec<usize>| -> f64 {
        let mut last: Option<usize> = None;
        for i in order {
            if pull(i) > 0.0 {
                last = Some(i);
                continue;
            }
            return match last {
                None => 0.0,
                Some(p) => {
                    let (p0, p1) = (pull(p), pull(i));
                    let t = p0 / (p0 - p1);
                    (x[p] + t * (x[i] - x[p])).abs()
                }
            };
        }
        last.map_or(0.0, |p| x[p].abs())
    };
    let positive = side((0..x.len()).filter(|&i| x[i] > 0.0).collect());
    let negative = side((0..x.len()).rev().filter(|&i| x[i] < 0.0).collect());
    positive.min(negative)
}

/// Stiffness, damping, peak and capture ranges of a map. One-axis maps give
/// the metrics of their axis only.
pub fn trap_metrics(map: &ForceMap) -> Result<TrapMetrics> {
    let threshold = 1e-9 * map.accel_unit;
    let axis_metrics = |axis: MapAxis| -> Result<Option<(f64, f64)>> {
        match map.cut(axis) {
            None => Ok(None),
            Some(cut) => {
                let x = cut.coordinates();
                let slope = slope_at_origin(&x, &cut.accel)?;
                Ok(Some((-slope, restoring_range(&x, &cut.accel, threshold))))
            }
        }
    };
    let z = axis_metrics(MapAxis::ZAtV0)?;
    let v = axis_metrics(MapAxis::VAtZ0)?;
    if z.is_none() && v.is_none() {
        return Err(Error::Physics("map has no cut through the origin".into()));
    }
    Ok(TrapMetrics {
        stiffness: z.map(|m| m.0),
        damping: v.map(|m| m.0),
        peak: map.peak(),
        capture_range_z: z.map(|m| m.1),
        capture_range_v: v.map(|m| m.1),
    })
}
