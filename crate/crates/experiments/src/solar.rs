//! Synthetic diurnal irradiance and solar recharge traces.
//!
//! Clear-sky irradiance is a half sine over the daylight hours, centred on
//! noon and zero at night, scaled by one weather factor per day.

use std::f64::consts::PI;
use std::path::Path;

use basehop_core::RechargeTrace;
use rand::Rng;

use crate::error::{ExperimentError, Result};
use crate::spec::SolarSpec;

const DAY_H: f64 = 24.0;

/// Long-run mean irradiance (W/m²) of the synthetic model.
pub fn mean_irradiance(spec: &SolarSpec) -> f64 {
    spec.peak_w_m2 * 2.0 / PI * spec.daylight_h / DAY_H * (spec.weather[0] + spec.weather[1]) / 2.0
}

/// Clear-sky energy density (Wh/m²) from midnight to hour `h` of one day.
fn clear_sky_cumulative(spec: &SolarSpec, h: f64) -> f64 {
    let len = spec.daylight_h;
    let rise = 12.0 - len / 2.0;
    if h <= rise {
        0.0
    } else if h >= rise + len {
        spec.peak_w_m2 * 2.0 * len / PI
    } else {
        spec.peak_w_m2 * len / PI * (1.0 - (PI * (h - rise) / len).cos())
    }
}

/// Per-slot irradiance, either synthetic (shared by all stations) or read
/// from a trace (one column per station, repeated cyclically).
#[derive(Debug, Clone, PartialEq)]
pub enum Irradiance {
    Synthetic(Vec<f64>),
    Trace(Vec<Vec<f64>>),
}

impl Irradiance {
    /// Slot means of the synthetic model for `slots` slots of `slot_s` seconds.
    pub fn synthetic(spec: &SolarSpec, slot_s: f64, slots: usize, rng: &mut impl Rng) -> Self {
        let hours = slot_s / 3600.0;
        let days = ((slots as f64 * hours) / DAY_H).ceil() as usize + 1;
        let [lo, hi] = spec.weather;
        let weather: Vec<f64> = (0..days).map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect();
        let means = (0..slots)
            .map(|n| {
                let (t0, t1) = (n as f64 * hours, (n + 1) as f64 * hours);
                let mut energy = 0.0;
                let mut day = (t0 / DAY_H).floor() as usize;
                while (day as f64) * DAY_H < t1 {
                    let start = day as f64 * DAY_H;
                    let a = t0.max(start) - start;
                    let b = t1.min(start + DAY_H) - start;
                    if b > a {
                        let w = weather.get(day).copied().unwrap_or(1.0);
                        energy += w * (clear_sky_cumulative(spec, b) - clear_sky_cumulative(spec, a));
                    }
                    day += 1;
                }
                energy / hours
            })
            .collect();
        Irradiance::Synthetic(means)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let trace_err = |source| ExperimentError::Trace { path: path.display().to_string(), source };
        let file = std::fs::File::open(path).map_err(|e| ExperimentError::io(path, e))?;
        let rows = basehop_core::energy::read_slot_csv(file).map_err(trace_err)?;
        if rows.is_empty() {
            return Err(trace_err(basehop_core::Error::Invalid { what: "irradiance trace", detail: "no rows".into() }));
        }
        if rows.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(trace_err(basehop_core::Error::Invalid {
                what: "irradiance trace",
                detail: "values must be finite and non-negative".into(),
            }));
        }
        Ok(Irradiance::Trace(rows))
    }

    /// Columns available, `None` for the shared synthetic profile.
    pub fn columns(&self) -> Option<usize> {
        match self {
            Irradiance::Synthetic(_) => None,
            Irradiance::Trace(rows) => rows.first().map(Vec::len),
        }
    }

    /// Irradiance (W/m²) of station `bs` in 0-based slot `n`.
    pub fn at(&self, n: usize, bs: usize) -> f64 {
        match self {
            Irradiance::Synthetic(v) => v[n % v.len()],
            Irradiance::Trace(rows) => rows[n % rows.len()][bs],
        }
    }

    pub fn mean(&self, bs: usize) -> f64 {
        match self {
            Irradiance::Synthetic(v) => v.iter().sum::<f64>() / v.len() as f64,
            Irradiance::Trace(rows) => rows.iter().map(|r| r[bs]).sum::<f64>() / rows.len() as f64,
        }
    }
}

/// Efficiencies of `m` panels drawn uniformly from the spec range.
pub fn draw_efficiencies(spec: &SolarSpec, m: usize, rng: &mut impl Rng) -> Vec<f64> {
    let [lo, hi] = spec.eta;
    (0..m).map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect()
}

/// Recharge power (W) per slot: `eta_m * gamma * I_m(n) * area`.
pub fn recharge_trace(
    irradiance: &Irradiance,
    eta: &[f64],
    gamma: f64,
    panel_cm2: f64,
    slots: usize,
) -> Result<RechargeTrace> {
    let area = panel_cm2 * 1e-4;
    let samples: Vec<Vec<f64>> = (0..slots)
        .map(|n| eta.iter().enumerate().map(|(m, e)| e * gamma * irradiance.at(n, m) * area).collect())
        .collect();
    let mean: Vec<f64> = eta.iter().enumerate().map(|(m, e)| e * gamma * irradiance.mean(m) * area).collect();
    Ok(RechargeTrace::from_samples(samples)?.with_mean(mean)?)
}
