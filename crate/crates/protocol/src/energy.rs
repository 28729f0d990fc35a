//! Per-message radio costs and the long-range charge of the active BS.

use serde::{Deserialize, Serialize};

use crate::error::{ProtocolError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub tx_mw: f64,
    pub rx_mw: f64,
    pub sleep_mw: f64,
    pub bitrate_bps: f64,
    pub data_bytes: u32,
    pub beacon_bytes: u32,
    /// Fixed part of control messages; route-carrying ones add 2 bytes per hop.
    pub control_bytes: u32,
    pub gprs_mw: f64,
    pub gprs_active_s: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            tx_mw: 79.45,
            rx_mw: 46.0,
            sleep_mw: 1.4,
            bitrate_bps: 76_800.0,
            data_bytes: 36,
            beacon_bytes: 24,
            control_bytes: 24,
            gprs_mw: 296.0,
            gprs_active_s: 40.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.tx_mw, self.rx_mw, self.sleep_mw, self.gprs_mw, self.gprs_active_s]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
            && self.bitrate_bps.is_finite()
            && self.bitrate_bps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::Scenario("radio parameters must be finite and non-negative".into()))
        }
    }

    fn airtime_s(&self, bytes: u32) -> f64 {
        f64::from(bytes) * 8.0 / self.bitrate_bps
    }

    pub fn tx_joules(&self, bytes: u32) -> f64 {
        self.tx_mw * 1e-3 * self.airtime_s(bytes)
    }

    pub fn rx_joules(&self, bytes: u32) -> f64 {
        self.rx_mw * 1e-3 * self.airtime_s(bytes)
    }

    pub fn sleep_watts(&self) -> f64 {
        self.sleep_mw * 1e-3
    }

    /// One GSM/GPRS connection.
    pub fn gprs_joules(&self) -> f64 {
        self.gprs_mw * 1e-3 * self.gprs_active_s
    }

    pub fn route_bytes(&self, hops: usize) -> u32 {
        self.control_bytes + 2 * hops as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    pub data_rate_pps: f64,
    pub beacon_period_s: f64,
    pub advert_period_s: f64,
    pub gprs_interval_s: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self { data_rate_pps: 1.0, beacon_period_s: 30.0, advert_period_s: 300.0, gprs_interval_s: 300.0 }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        let periods = [self.beacon_period_s, self.advert_period_s, self.gprs_interval_s];
        if !periods.iter().all(|p| p.is_finite() && *p > 0.0) {
            return Err(ProtocolError::Scenario("periods must be positive".into()));
        }
        if !(self.data_rate_pps.is_finite() && self.data_rate_pps >= 0.0) {
            return Err(ProtocolError::Scenario("data rate must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub radio: RadioParams,
    pub traffic: TrafficParams,
}

impl EnergyParams {
    /// Long-range energy of the active BS over one slot of `slot_s` seconds.
    pub fn gprs_joules_per_slot(&self, slot_s: f64) -> f64 {
        (slot_s / self.traffic.gprs_interval_s).floor() * self.radio.gprs_joules()
    }
}

/// Cumulative consumption of one node, joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub tx: f64,
    pub rx: f64,
    pub sleep: f64,
    pub gprs: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.tx + self.rx + self.sleep + self.gprs
    }
}

/// Battery as reported in adverts: floored to 0.1 % of capacity.
pub fn quantize_battery(joules: f64, capacity: f64) -> f64 {
    let step = capacity / 1000.0;
    if step <= 0.0 {
        return joules;
    }
    (joules / step).floor() * step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_slot_of_gprs() {
        let p = EnergyParams::default();
        assert!((p.gprs_joules_per_slot(7200.0) - 284.16).abs() < 1e-9);
    }

    #[test]
    fn quantization_floors() {
        assert!((quantize_battery(14399.9, 14400.0) - 14385.6).abs() < 1e-9);
        assert!((quantize_battery(14400.0, 14400.0) - 14400.0).abs() < 1e-9);
        assert!(quantize_battery(7.0, 14400.0) == 0.0);
    }
}
