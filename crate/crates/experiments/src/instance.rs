//! Random sensor networks and the slot-level quantities derived from them.

use basehop_core::energy::{check_d3, check_d4};
use basehop_core::CostMatrix;
use basehop_protocol::energy::{EnergyParams, RadioParams, TrafficParams};
use basehop_protocol::model::cost_matrix_from_topology;
use basehop_protocol::scenario::{NodeKind, NodeSpec, ProtocolPolicy, Scenario};
use basehop_protocol::{build_topology, Position, Topology};
use rand::Rng;

use crate::error::{ExperimentError, Result};
use crate::solar::{draw_efficiencies, mean_irradiance};
use crate::spec::{BaseScenario, SolarSpec};

/// Layouts drawn before giving up on a connected one.
pub const MAX_ATTEMPTS: usize = 100_000;

/// Uniform layout in the square field. Nodes `0..bs_count` are the base
/// stations; every node carries a panel efficiency so that the first `m`
/// nodes form a nested family of networks as `m` grows.
#[derive(Debug, Clone)]
pub struct NetworkInstance {
    pub positions: Vec<Position>,
    pub eta: Vec<f64>,
    pub bs_count: usize,
    pub topology: Topology,
}

pub fn energy_params(base: &BaseScenario) -> EnergyParams {
    EnergyParams {
        radio: RadioParams::default(),
        traffic: TrafficParams {
            data_rate_pps: base.data_rate_pps,
            beacon_period_s: base.beacon_period_s,
            advert_period_s: base.advert_period_s,
            gprs_interval_s: base.gprs_interval_s,
        },
    }
}

impl NetworkInstance {
    /// Draw connected layouts until one fits. With `require_conditions`, the
    /// cost matrix must also satisfy the passive-gain condition at the base
    /// panel size and the positive `(C^T)^-1 u` condition.
    pub fn generate(base: &BaseScenario, solar: &SolarSpec, rng: &mut impl Rng) -> Result<Self> {
        let params = energy_params(base);
        for _ in 0..MAX_ATTEMPTS {
            let positions: Vec<Position> = (0..base.nodes)
                .map(|_| Position::new(rng.random_range(0.0..base.field_m), rng.random_range(0.0..base.field_m)))
                .collect();
            let eta = draw_efficiencies(solar, base.nodes, rng);
            let Ok(topology) = build_topology(&positions, base.range_m) else { continue };
            if topology.components(&vec![true; base.nodes]).len() != 1 {
                continue;
            }
            let inst = Self { positions, eta, bs_count: base.bs_count, topology };
            if base.require_conditions && inst.bs_count > 0 {
                let c = inst.cost_matrix(&params)?;
                let sbar = inst.mean_recharge(solar, base.panel_cm2);
                if !(check_d3(&c, &sbar)? && check_d4(&c)) {
                    continue;
                }
            }
            return Ok(inst);
        }
        Err(ExperimentError::Instance(format!(
            "no connected layout of {} nodes in a {} m field after {MAX_ATTEMPTS} draws",
            base.nodes, base.field_m
        )))
    }

    /// Same layout with the first `m` nodes acting as base stations.
    pub fn with_bs_count(&self, m: usize) -> Self {
        Self { bs_count: m.min(self.positions.len()), ..self.clone() }
    }

    pub fn bs_indices(&self) -> Vec<usize> {
        (0..self.bs_count).collect()
    }

    pub fn bs_eta(&self) -> &[f64] {
        &self.eta[..self.bs_count]
    }

    pub fn cost_matrix(&self, params: &EnergyParams) -> Result<CostMatrix> {
        Ok(cost_matrix_from_topology(&self.topology, &self.bs_indices(), params)?)
    }

    /// Long-run mean recharge (W) of each station under the synthetic model.
    pub fn mean_recharge(&self, solar: &SolarSpec, panel_cm2: f64) -> Vec<f64> {
        let irr = mean_irradiance(solar);
        self.bs_eta().iter().map(|e| e * solar.gamma * irr * panel_cm2 * 1e-4).collect()
    }

    /// Protocol scenario with node ids `1..=n`; base station `k` has id `k + 1`.
    pub fn scenario(&self, base: &BaseScenario, policy: ProtocolPolicy, seed: u64) -> Scenario {
        let nodes = self
            .positions
            .iter()
            .enumerate()
            .map(|(k, p)| NodeSpec {
                id: k as u32 + 1,
                kind: if k < self.bs_count { NodeKind::Bs } else { NodeKind::Regular },
                x: p.x,
                y: p.y,
                boot_s: 0.0,
                battery_j: None,
            })
            .collect();
        let mut s = Scenario::new(nodes);
        s.seed = seed;
        s.range_m = base.range_m;
        s.slot_s = base.tau_s;
        s.policy = policy;
        s.initial_battery_j = base.e0_j.max(1.0);
        s.traffic = energy_params(base).traffic;
        s.duration_s = base.sim_hours * 3600.0;
        s
    }
}
