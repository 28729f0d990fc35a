//! Condition studies over random networks: how often the cost-inverse
//! condition holds, and how large panels must be for passive stations to
//! gain energy on average.

use basehop_core::energy::{check_d3, check_d4};
use basehop_core::CostMatrix;

use crate::error::Result;

/// Smallest panel area (cm²) at which every passive station's mean recharge
/// exceeds its drain under any other active station:
/// `max_{i != j} C_ij / (eta_i gamma I)`.
pub fn d3_area_closed_form(c: &CostMatrix, eta: &[f64], gamma: f64, irradiance: f64) -> f64 {
    let m = c.bs_count();
    let mut area: f64 = 0.0;
    for (i, e) in eta.iter().enumerate().take(m) {
        let gain = e * gamma * irradiance;
        for j in (0..m).filter(|&j| j != i) {
            let need = if gain > 0.0 { c.get(i, j) / gain } else { f64::INFINITY };
            area = area.max(need);
        }
    }
    area * 1e4
}

/// The same threshold found by bisection on the condition check itself.
pub fn d3_area_bisection(c: &CostMatrix, eta: &[f64], gamma: f64, irradiance: f64, rel_tol: f64) -> Result<f64> {
    let holds = |cm2: f64| -> Result<bool> {
        let sbar: Vec<f64> = eta.iter().map(|e| e * gamma * irradiance * cm2 * 1e-4).collect();
        Ok(check_d3(c, &sbar)?)
    };
    if holds(0.0)? {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while !holds(hi)? {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Whether the cost matrix satisfies the positive `(C^T)^-1 u` condition.
pub fn d4_holds(c: &CostMatrix) -> bool {
    check_d4(c)
}
